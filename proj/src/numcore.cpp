#include "flair/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace flair {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// log(1 + e^x) without overflow.
double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_normal_pdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

// log Phi(z). erfc underflows near z = -37.5, so the far left tail uses the
// asymptotic series of the Mills ratio.
double log_normal_cdf(double z) {
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z * kInvSqrt2));
  if (z > -30.0) return std::log(0.5 * std::erfc(-z * kInvSqrt2));
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return log_normal_pdf(z) - std::log(-z) + std::log(series);
}

// phi(z) / Phi(z).
double inverse_mills(double z) {
  return std::exp(log_normal_pdf(z) - log_normal_cdf(z));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Matrix orthonormal_basis(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
}

void normalize_signs(SvdResult& s) {
  for (Index c = 0; c < s.u.cols(); ++c) {
    Index arg = 0;
    s.u.col(c).cwiseAbs().maxCoeff(&arg);
    if (s.u(arg, c) < 0.0) {
      s.u.col(c) *= -1.0;
      s.v.col(c) *= -1.0;
    }
  }
}

SvdResult exact_svd(const Matrix& a, Index rank) {
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU().leftCols(rank), svd.singularValues().head(rank),
          svd.matrixV().leftCols(rank)};
}

SvdResult randomized_svd(const Matrix& a, Index rank,
                         const RandomizedSvdOptions& opt) {
  const Index width =
      std::min<Index>(rank + opt.oversampling, std::min(a.rows(), a.cols()));
  Rng rng(opt.seed);
  const Matrix omega = rng.normal_matrix(a.cols(), width);
  Matrix q = orthonormal_basis(a * omega);
  for (int it = 0; it < opt.power_iterations; ++it) {
    const Matrix w = orthonormal_basis(a.transpose() * q);
    q = orthonormal_basis(a * w);
  }
  const Matrix small = q.transpose() * a;  // width x p
  Eigen::JacobiSVD<Matrix> svd(small, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {(q * svd.matrixU()).leftCols(rank), svd.singularValues().head(rank),
          svd.matrixV().leftCols(rank)};
}

}  // namespace

LinkKind parse_link(std::string_view name) {
  if (name == "logit") return LinkKind::Logit;
  if (name == "probit") return LinkKind::Probit;
  throw std::invalid_argument("unknown link '" + std::string(name) +
                              "' (expected logit or probit)");
}

std::string to_string(LinkKind kind) {
  return kind == LinkKind::Logit ? "logit" : "probit";
}

double Link::eval(double z) const {
  if (kind_ == LinkKind::Logit) return logistic(z);
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::clamp(0.5 * std::erfc(-z * kInvSqrt2), lo, hi);
}

double Link::derivative(double z) const {
  if (kind_ == LinkKind::Logit) {
    const double h = logistic(z);
    return h * (1.0 - h);
  }
  return std::exp(log_normal_pdf(z));
}

double Link::inverse(double prob) const {
  if (kind_ == LinkKind::Logit) return std::log(prob) - std::log1p(-prob);
  return normal_quantile(prob);
}

double Link::log_cdf(double z) const {
  return kind_ == LinkKind::Logit ? -softplus(-z) : log_normal_cdf(z);
}

double Link::log_ccdf(double z) const {
  return kind_ == LinkKind::Logit ? -softplus(z) : log_normal_cdf(-z);
}

LoglikTerms Link::loglik(double y, double z) const {
  if (kind_ == LinkKind::Logit) {
    const double h = logistic(z);
    return {-y * softplus(-z) - (1.0 - y) * softplus(z), y - h, -h * (1.0 - h)};
  }
  LoglikTerms t;
  if (y > 0.0) {
    const double r = inverse_mills(z);
    t.value += y * log_normal_cdf(z);
    t.d1 += y * r;
    t.d2 -= y * r * (z + r);
  }
  if (y < 1.0) {
    const double r = inverse_mills(-z);
    t.value += (1.0 - y) * log_normal_cdf(-z);
    t.d1 -= (1.0 - y) * r;
    t.d2 -= (1.0 - y) * r * (r - z);
  }
  return t;
}

double link_eval(const Link& link, double z) {
  if (!std::isfinite(z)) throw std::domain_error("link_eval: non-finite argument");
  return link.eval(z);
}

double link_inverse(const Link& link, double prob) {
  if (!(prob > 0.0 && prob < 1.0))
    throw std::domain_error("link_inverse: probability must lie in (0,1), got " +
                            std::to_string(prob));
  return link.inverse(prob);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::substream(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

double Rng::uniform() { return uniform_(engine_); }

double Rng::normal() { return normal_(engine_); }

std::uint64_t Rng::below(std::uint64_t bound) {
  return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(engine_);
}

Matrix Rng::normal_matrix(Index rows, Index cols) {
  Matrix out(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) out(r, c) = normal();
  return out;
}

SvdResult truncated_svd(const Matrix& a, Index rank, SvdMethod method,
                        const RandomizedSvdOptions& options) {
  if (rank < 1 || rank > std::min(a.rows(), a.cols()))
    throw std::invalid_argument("truncated_svd: rank " + std::to_string(rank) +
                                " outside [1, min(n,p)]");
  SvdResult out = method == SvdMethod::Exact ? exact_svd(a, rank)
                                             : randomized_svd(a, rank, options);
  normalize_signs(out);
  return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double normal_ccdf(double z) { return 0.5 * std::erfc(z * kInvSqrt2); }

double normal_quantile(double prob) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * prob);
}

double sample_truncated_normal(Rng& rng, double mu, double sigma, double lo,
                               double hi) {
  if (!(lo < hi)) throw std::invalid_argument("sample_truncated_normal: lo must be < hi");
  if (!(sigma > 0.0)) throw std::invalid_argument("sample_truncated_normal: sigma must be > 0");

  const double a = (lo - mu) / sigma;
  const double b = (hi - mu) / sigma;
  const double mass = a > 0.0 ? normal_ccdf(a) - normal_ccdf(b)
                              : normal_cdf(b) - normal_cdf(a);
  if (mass >= 0.1) {
    for (;;) {
      const double x = rng.normal();
      if (x >= a && x <= b) return mu + sigma * x;
    }
  }

  // Work in the tail on the positive side; mirror when the interval is left of 0.
  const bool mirrored = b < 0.0;
  const double ta = mirrored ? -b : a;
  const double tb = mirrored ? -a : b;
  double x;
  if (ta > 0.0) {
    const double qa = normal_ccdf(ta);
    const double qb = normal_ccdf(tb);
    if (qa > qb && qa > 0.0) {
      const double q = qb + rng.uniform() * (qa - qb);
      x = q > 0.0 ? std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q) : ta;
    } else {
      // Both tail probabilities underflow: exponential proposal.
      const double alpha = 0.5 * (ta + std::sqrt(ta * ta + 4.0));
      for (;;) {
        x = ta - std::log1p(-rng.uniform()) / alpha;
        if (x > tb) continue;
        if (rng.uniform() <= std::exp(-0.5 * (x - alpha) * (x - alpha))) break;
      }
    }
  } else {
    const double pa = normal_cdf(ta);
    const double pb = normal_cdf(tb);
    x = normal_quantile(std::clamp(pa + rng.uniform() * (pb - pa),
                                   std::numeric_limits<double>::min(),
                                   std::nextafter(1.0, 0.0)));
  }
  x = std::clamp(x, ta, tb);
  return mu + sigma * (mirrored ? -x : x);
}

}  // namespace flair
