#include "flair/init.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flair {

double default_threshold(Index n, Index p) {
  const double m = static_cast<double>(std::min(n, p));
  return std::max(1e-4, std::min(0.1, 1.0 / std::sqrt(m)));
}

Matrix threshold_probabilities(const Matrix& probs, double eps) {
  return probs.cwiseMax(eps).cwiseMin(1.0 - eps);
}

Matrix impute_for_init(const Matrix& y, const std::optional<Mask>& mask) {
  if (!mask) return y;
  if (mask->rows() != y.rows() || mask->cols() != y.cols())
    throw std::invalid_argument("impute_for_init: mask shape differs from Y");

  const Eigen::ArrayXXd keep = (!mask->array()).cast<double>();
  const Eigen::ArrayXXd kept = y.array() * keep;
  const Eigen::ArrayXd row_n = keep.rowwise().sum();
  const Eigen::ArrayXd col_n = keep.colwise().sum().transpose();
  if ((row_n == 0.0).any())
    throw std::invalid_argument("impute_for_init: a row is entirely masked");
  if ((col_n == 0.0).any())
    throw std::invalid_argument("impute_for_init: a column is entirely masked");
  const Eigen::ArrayXd row_mean = kept.rowwise().sum() / row_n;
  const Eigen::ArrayXd col_mean = kept.colwise().sum().transpose() / col_n;

  Matrix out = y;
  for (Index j = 0; j < y.cols(); ++j)
    for (Index i = 0; i < y.rows(); ++i)
      if ((*mask)(i, j)) out(i, j) = row_mean(i) * col_mean(j);
  return out;
}

double truncate_tau(double x) {
  if (x <= kTauLower) return kTauLower;
  if (x >= kTauUpper) return kTauUpper;
  return x;
}

TauPair select_tau(const Matrix& lambda, const Matrix& b) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(lambda.cols(), 1)));
  TauPair out{Vector(lambda.rows()), Vector(b.rows())};
  for (Index j = 0; j < lambda.rows(); ++j)
    out.tau_lambda(j) = truncate_tau(scale * lambda.row(j).norm());
  for (Index j = 0; j < b.rows(); ++j) out.tau_b(j) = truncate_tau(scale * b.row(j).norm());
  return out;
}

InitResult svd_initialize(const Matrix& y, const Matrix& x,
                          const std::optional<Mask>& mask, int k, const Link& link,
                          const InitOptions& options) {
  const Index n = y.rows();
  const Index p = y.cols();
  const Index q = x.cols();
  if (k < 1) throw std::invalid_argument("svd_initialize: k must be >= 1");
  if (k + q > std::min(n, p))
    throw std::invalid_argument("svd_initialize: k + q = " + std::to_string(k + q) +
                                " exceeds min(n,p) = " + std::to_string(std::min(n, p)));
  if (x.rows() != n) throw std::invalid_argument("svd_initialize: X and Y disagree on n");

  SvdMethod method = SvdMethod::Exact;
  if (options.svd == SvdChoice::Randomized ||
      (options.svd == SvdChoice::Auto &&
       static_cast<double>(n) * static_cast<double>(p) > kRandomizedSvdCells))
    method = SvdMethod::Randomized;
  RandomizedSvdOptions rsvd;
  rsvd.seed = options.seed;

  const Matrix filled = impute_for_init(y, mask);
  const Matrix y_hat = truncated_svd(filled, k + q, method, rsvd).reconstruct();
  const double eps = options.threshold > 0.0 ? options.threshold : default_threshold(n, p);
  const Matrix z_hat = threshold_probabilities(y_hat, eps).unaryExpr(
      [&link](double v) { return link.inverse(v); });

  const DesignSolver design(x);
  InitResult out;
  out.state.b = design.coefficients(z_hat).transpose();  // p x q
  const Matrix z_c = z_hat - x * out.state.b.transpose();
  const SvdResult factors = truncated_svd(z_c, k, method, rsvd);
  const double root_n = std::sqrt(static_cast<double>(n));
  out.state.m = root_n * factors.u;
  out.state.lambda = factors.v * factors.d.asDiagonal() / root_n;

  PriorConfig boxes;
  boxes.c_lambda = options.c_lambda;
  boxes.c_b = options.c_b;
  project_to_boxes(out.state, boxes);

  auto tau = select_tau(out.state.lambda, out.state.b);
  out.tau_lambda = std::move(tau.tau_lambda);
  out.tau_b = std::move(tau.tau_b);

  const Dataset view{y, x, mask, {}};
  out.loglik = log_likelihood(linear_predictor(out.state, x), view, link);
  return out;
}

InitResult svd_initialize(const Dataset& data, int k, const Link& link,
                          const InitOptions& options) {
  return svd_initialize(data.y, data.x, data.mask, k, link, options);
}

double jic_penalty(Index n, Index p, int k) {
  return static_cast<double>(k) * static_cast<double>(std::max(n, p)) *
         std::log(static_cast<double>(std::min(n, p)));
}

JicEntry jic(const Dataset& data, int k, const Link& link, const InitOptions& options) {
  const InitResult init = svd_initialize(data, k, link, options);
  return {k, init.loglik, -2.0 * init.loglik + jic_penalty(data.n(), data.p(), k)};
}

KSelection select_k(const Dataset& data, int k_max, const Link& link,
                    const InitOptions& options) {
  if (k_max < 1) throw std::invalid_argument("select_k: k_max must be >= 1");
  KSelection out;
  for (int k = 1; k <= k_max; ++k) out.table.push_back(jic(data, k, link, options));
  auto best = std::min_element(out.table.begin(), out.table.end(),
                               [](const JicEntry& a, const JicEntry& b) { return a.jic < b.jic; });
  out.k = best->k;
  return out;
}

}  // namespace flair
