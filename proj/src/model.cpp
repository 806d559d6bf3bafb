#include "flair/model.hpp"

#include <cmath>
#include <stdexcept>

namespace flair {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

void Dataset::validate() const {
  require(n() > 0 && p() > 0, "dataset: Y must be non-empty");
  require(x.rows() == n(), "dataset: X has " + std::to_string(x.rows()) +
                               " rows but Y has " + std::to_string(n()));
  require(q() >= 1, "dataset: X needs at least the intercept column");
  for (Index j = 0; j < p(); ++j)
    for (Index i = 0; i < n(); ++i)
      require(y(i, j) == 0.0 || y(i, j) == 1.0,
              "dataset: Y(" + std::to_string(i) + "," + std::to_string(j) +
                  ") is not 0 or 1");
  require(x.allFinite(), "dataset: X contains non-finite values");
  require((x.col(0).array() == 1.0).all(),
          "dataset: first column of X must be the all-ones intercept");
  if (mask)
    require(mask->rows() == n() && mask->cols() == p(),
            "dataset: mask shape differs from Y");
  require(names.empty() || static_cast<Index>(names.size()) == p(),
          "dataset: outcome name count differs from p");
}

Dataset make_dataset(Matrix y, Matrix x, std::optional<Mask> mask,
                     std::vector<std::string> names) {
  Dataset d{std::move(y), std::move(x), std::move(mask), std::move(names)};
  d.validate();
  return d;
}

Matrix intercept_design(Index n) { return Matrix::Ones(n, 1); }

void PriorConfig::validate(Index p) const {
  require(c_lambda > 0.0 && c_b > 0.0, "prior: box bounds must be positive");
  require(k >= 1, "prior: latent dimension must be >= 1");
  require(tau_lambda.size() == p && tau_b.size() == p,
          "prior: tau vectors must have length p");
  require((tau_lambda.array() > 0.0).all() && (tau_b.array() > 0.0).all(),
          "prior: tau entries must be positive");
}

double factor_bound(int k, Index n) {
  return 2.0 * std::sqrt(std::log(static_cast<double>(k) * static_cast<double>(n)));
}

bool is_feasible(const FactorState& s, const PriorConfig& prior, double tol) {
  const double mb = factor_bound(static_cast<int>(s.k()), s.m.rows());
  auto inside = [tol](const Matrix& a, double bound) {
    return a.size() == 0 || a.cwiseAbs().maxCoeff() <= bound + tol;
  };
  return inside(s.m, mb) && inside(s.lambda, prior.c_lambda) && inside(s.b, prior.c_b);
}

void project_to_boxes(FactorState& s, const PriorConfig& prior) {
  const double mb = factor_bound(static_cast<int>(s.k()), s.m.rows());
  s.m = s.m.cwiseMax(-mb).cwiseMin(mb);
  s.lambda = s.lambda.cwiseMax(-prior.c_lambda).cwiseMin(prior.c_lambda);
  s.b = s.b.cwiseMax(-prior.c_b).cwiseMin(prior.c_b);
}

void FitOptions::validate() const {
  require(step_outcome > 0.0 && step_outcome <= 1.0 && step_factor > 0.0 &&
              step_factor <= 1.0,
          "fit options: step sizes must lie in (0,1]");
  require(inner_tol > 0.0 && outer_tol > 0.0, "fit options: tolerances must be positive");
  require(max_inner >= 1 && max_outer >= 1, "fit options: iteration caps must be >= 1");
}

Matrix linear_predictor(const FactorState& s, const Matrix& x) {
  require(x.cols() == s.b.cols(), "linear_predictor: X and B disagree on q");
  require(x.rows() == s.m.rows(), "linear_predictor: X and M disagree on n");
  require(s.m.cols() == s.lambda.cols(), "linear_predictor: M and Lambda disagree on k");
  require(s.b.rows() == s.lambda.rows(), "linear_predictor: B and Lambda disagree on p");
  Matrix z = x * s.b.transpose();
  if (s.k() > 0) z.noalias() += s.m * s.lambda.transpose();
  return z;
}

double log_likelihood(const Matrix& z, const Dataset& data, const Link& link) {
  require(z.rows() == data.n() && z.cols() == data.p(),
          "log_likelihood: predictor shape differs from Y");
  Vector per_col(data.p());
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < data.p(); ++j) {
    double acc = 0.0;
    for (Index i = 0; i < data.n(); ++i)
      if (data.observed(i, j)) acc += link.loglik(data.y(i, j), z(i, j)).value;
    per_col(j) = acc;
  }
  double total = 0.0;
  for (Index j = 0; j < data.p(); ++j) total += per_col(j);
  return total;
}

double log_joint_posterior(const FactorState& s, const Dataset& data,
                           const PriorConfig& prior, const Link& link) {
  require(prior.tau_lambda.size() == data.p() && prior.tau_b.size() == data.p(),
          "log_joint_posterior: tau vectors must have length p");
  const double loglik = log_likelihood(linear_predictor(s, data.x), data, link);
  double penalty = s.m.squaredNorm();
  for (Index j = 0; j < data.p(); ++j) {
    penalty += s.lambda.row(j).squaredNorm() / (prior.tau_lambda(j) * prior.tau_lambda(j));
    penalty += s.b.row(j).squaredNorm() / (prior.tau_b(j) * prior.tau_b(j));
  }
  return loglik - 0.5 * penalty;
}

DesignSolver::DesignSolver(const Matrix& x) : x_(x), llt_(x.transpose() * x) {
  if (llt_.info() != Eigen::Success || !(llt_.rcond() > 1e-12))
    throw NumericalError("design matrix is rank deficient: X^T X is singular");
}

Matrix DesignSolver::coefficients(const Matrix& rhs) const {
  return llt_.solve(x_.transpose() * rhs);
}

Matrix DesignSolver::project(const Matrix& rhs) const { return x_ * coefficients(rhs); }

Matrix DesignSolver::right_solve(const Matrix& rhs) const {
  return llt_.solve(rhs.transpose()).transpose();
}

}  // namespace flair
