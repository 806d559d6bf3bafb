#include "flair/map.hpp"

#include "parallel.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace flair {

namespace {

// Solves (-H) d = g with a single jittered retry.
Vector newton_direction(const LocalObjective& f) {
  const Matrix neg_h = -f.hessian;
  Eigen::LLT<Matrix> llt(neg_h);
  if (llt.info() != Eigen::Success) {
    llt.compute(neg_h + 1e-8 * Matrix::Identity(neg_h.rows(), neg_h.cols()));
    if (llt.info() != Eigen::Success)
      throw NumericalError("Newton step: negative Hessian is not positive definite");
  }
  return llt.solve(f.gradient);
}

struct NewtonOutcome {
  Vector x;
  int iterations = 0;
};

// Damped projected Newton ascent on a box [-bound, bound]^d. A step that
// lowers the objective is retried with half the step size.
template <class Objective>
NewtonOutcome projected_newton(Vector x, const Vector& bound, double step,
                               const FitOptions& opts, Objective&& objective) {
  NewtonOutcome out;
  for (int it = 0; it < opts.max_inner; ++it) {
    const LocalObjective cur = objective(x, true);
    const Vector dir = newton_direction(cur);
    double nu = step;
    bool accepted = false;
    Vector cand;
    for (int h = 0; h <= opts.max_halvings; ++h, nu *= 0.5) {
      cand = (x + nu * dir).cwiseMax(-bound).cwiseMin(bound);
      if (objective(cand, false).value >= cur.value) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double moved = (cand - x).norm();
    x = std::move(cand);
    out.iterations = it + 1;
    if (moved < opts.inner_tol) break;
  }
  out.x = std::move(x);
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

LocalObjective outcome_objective(Index j, const Vector& theta, const Matrix& m,
                                 const Dataset& data, double tau_b, double tau_lambda,
                                 const Link& link, bool with_derivatives) {
  const Index q = data.q();
  const Index k = m.cols();
  const Index d = q + k;
  const auto beta = theta.head(q);
  const auto lambda = theta.tail(k);

  LocalObjective f;
  if (with_derivatives) {
    f.gradient = Vector::Zero(d);
    f.hessian = Matrix::Zero(d, d);
  }
  Vector xt(d);
  for (Index i = 0; i < data.n(); ++i) {
    if (!data.observed(i, j)) continue;
    const double z = data.x.row(i).dot(beta) + (k > 0 ? m.row(i).dot(lambda) : 0.0);
    const LoglikTerms t = link.loglik(data.y(i, j), z);
    f.value += t.value;
    if (with_derivatives) {
      xt.head(q) = data.x.row(i).transpose();
      if (k > 0) xt.tail(k) = m.row(i).transpose();
      f.gradient.noalias() += t.d1 * xt;
      f.hessian.selfadjointView<Eigen::Lower>().rankUpdate(xt, t.d2);
    }
  }
  const double pb = 1.0 / (tau_b * tau_b);
  const double pl = 1.0 / (tau_lambda * tau_lambda);
  f.value -= 0.5 * (pb * beta.squaredNorm() + pl * lambda.squaredNorm());
  if (with_derivatives) {
    f.hessian = f.hessian.selfadjointView<Eigen::Lower>();
    f.gradient.head(q) -= pb * beta;
    f.gradient.tail(k) -= pl * lambda;
    f.hessian.diagonal().head(q).array() -= pb;
    f.hessian.diagonal().tail(k).array() -= pl;
  }
  return f;
}

LocalObjective factor_objective(Index i, const Vector& eta, const Matrix& lambda,
                                const Matrix& b, const Dataset& data, const Link& link,
                                bool with_derivatives) {
  const Index k = lambda.cols();
  const Vector offset = b * data.x.row(i).transpose();
  LocalObjective f;
  if (with_derivatives) {
    f.gradient = Vector::Zero(k);
    f.hessian = Matrix::Zero(k, k);
  }
  for (Index j = 0; j < data.p(); ++j) {
    if (!data.observed(i, j)) continue;
    const double z = offset(j) + lambda.row(j).dot(eta);
    const LoglikTerms t = link.loglik(data.y(i, j), z);
    f.value += t.value;
    if (with_derivatives) {
      f.gradient.noalias() += t.d1 * lambda.row(j).transpose();
      f.hessian.selfadjointView<Eigen::Lower>().rankUpdate(lambda.row(j).transpose(), t.d2);
    }
  }
  f.value -= 0.5 * eta.squaredNorm();
  if (with_derivatives) {
    f.hessian = f.hessian.selfadjointView<Eigen::Lower>();
    f.gradient -= eta;
    f.hessian.diagonal().array() -= 1.0;
  }
  return f;
}

OutcomeUpdate update_outcome_params(Index j, const FactorState& state, const Dataset& data,
                                    const PriorConfig& prior, const FitOptions& opts) {
  if (j < 0 || j >= data.p()) throw std::out_of_range("update_outcome_params: bad outcome index");
  const Index q = data.q();
  const Index k = state.k();
  Vector bound(q + k);
  bound.head(q).setConstant(prior.c_b);
  bound.tail(k).setConstant(prior.c_lambda);

  Vector theta(q + k);
  theta.head(q) = state.b.row(j).transpose();
  theta.tail(k) = state.lambda.row(j).transpose();

  const double tb = prior.tau_b(j);
  const double tl = prior.tau_lambda(j);
  auto objective = [&](const Vector& t, bool deriv) {
    return outcome_objective(j, t, state.m, data, tb, tl, opts.link, deriv);
  };
  const NewtonOutcome res = projected_newton(theta, bound, opts.step_outcome, opts, objective);
  const Vector& sol = res.x;
  return {sol.tail(k), sol.head(q), res.iterations};
}

FactorUpdate update_factor(Index i, const FactorState& state, const Dataset& data,
                           const PriorConfig& /*prior*/, const FitOptions& opts) {
  if (i < 0 || i >= data.n()) throw std::out_of_range("update_factor: bad sample index");
  const Vector bound =
      Vector::Constant(state.k(), factor_bound(static_cast<int>(state.k()), data.n()));
  auto objective = [&](const Vector& eta, bool deriv) {
    return factor_objective(i, eta, state.lambda, state.b, data, opts.link, deriv);
  };
  const NewtonOutcome res =
      projected_newton(state.m.row(i).transpose(), bound, opts.step_factor, opts, objective);
  return {res.x, res.iterations};
}

MapResult map_fit(const Dataset& data, const PriorConfig& prior, const FitOptions& opts,
                  const InitResult& init) {
  opts.validate();
  prior.validate(data.p());
  if (!is_feasible(init.state, prior))
    throw std::invalid_argument("map_fit: initial state violates the prior boxes");

  MapResult out{init.state, {}};
  FactorState& s = out.state;
  MapTrace& trace = out.trace;
  double current = log_joint_posterior(s, data, prior, opts.link);
  if (!std::isfinite(current)) throw NumericalError("map_fit: non-finite log-posterior at start");
  trace.log_posterior.push_back(current);

  for (int outer = 1; outer <= opts.max_outer; ++outer) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<int> steps(static_cast<std::size_t>(data.p()));
    detail::parallel_for(data.p(), [&](Index j) {
      OutcomeUpdate u = update_outcome_params(j, s, data, prior, opts);
      s.lambda.row(j) = u.lambda.transpose();
      s.b.row(j) = u.beta.transpose();
      steps[static_cast<std::size_t>(j)] = u.iterations;
    });
    long total = 0;
    for (int v : steps) total += v;
    trace.outcome_newton_steps.push_back(total);
    trace.seconds_outcomes += seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    steps.assign(static_cast<std::size_t>(data.n()), 0);
    detail::parallel_for(data.n(), [&](Index i) {
      FactorUpdate u = update_factor(i, s, data, prior, opts);
      s.m.row(i) = u.eta.transpose();
      steps[static_cast<std::size_t>(i)] = u.iterations;
    });
    total = 0;
    for (int v : steps) total += v;
    trace.factor_newton_steps.push_back(total);
    trace.seconds_factors += seconds_since(t0);

    const double next = log_joint_posterior(s, data, prior, opts.link);
    if (!std::isfinite(next))
      throw NumericalError("map_fit: non-finite log-posterior at outer iteration " +
                           std::to_string(outer));
    trace.log_posterior.push_back(next);
    const double rel = (next - current) / std::abs(current);
    current = next;
    if (rel < opts.outer_tol) {
      trace.converged = true;
      break;
    }
  }
  return out;
}

FactorState postprocess(const FactorState& state, const Matrix& x) {
  const Index n = state.m.rows();
  const Index k = state.k();
  if (x.rows() != n) throw std::invalid_argument("postprocess: X and M disagree on n");
  const DesignSolver design(x);
  const Matrix m_c = state.m - design.project(state.m);

  Eigen::JacobiSVD<Matrix> svd(m_c, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& d = svd.singularValues();
  if (k == 0 || !(d(k - 1) > 1e-10 * std::max(1.0, d(0))))
    throw NumericalError("postprocess: centred factors are rank deficient");

  const double root_n = std::sqrt(static_cast<double>(n));
  FactorState out;
  out.m = root_n * svd.matrixU();
  out.lambda = state.lambda * svd.matrixV() * d.asDiagonal() / root_n;
  // B + Lambda M^T X (X^T X)^{-1}
  out.b = state.b + design.right_solve(state.lambda * (state.m.transpose() * x));
  return out;
}

}  // namespace flair
