#ifndef FLAIR_NUMCORE_HPP
#define FLAIR_NUMCORE_HPP

// Dense numerical primitives: link functions, truncated/randomized SVD,
// truncated-normal sampling and a seeded, splittable RNG.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace flair {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a computation breaks down numerically (failed factorization,
/// non-finite objective, rank deficiency detected at run time).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LinkKind { Logit, Probit };

LinkKind parse_link(std::string_view name);
std::string to_string(LinkKind kind);

/// Per-observation Bernoulli log-likelihood and its first two derivatives
/// with respect to the linear predictor.
struct LoglikTerms {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Inverse link h: R -> (0,1) together with its derivative and inverse.
///
/// The logit branch is evaluated in the sign-split form so h(z) stays
/// strictly inside (0,1) for |z| <= 36. The probit branch clamps to the
/// open interval since Phi(z) rounds to 1 in double precision beyond z ~ 8.3.
class Link {
 public:
  constexpr Link() = default;
  constexpr explicit Link(LinkKind kind) : kind_(kind) {}

  LinkKind kind() const { return kind_; }

  double eval(double z) const;
  double derivative(double z) const;
  double inverse(double prob) const;

  /// log h(z) and log(1 - h(z)), computed without forming h(z).
  double log_cdf(double z) const;
  double log_ccdf(double z) const;

  /// y log h(z) + (1 - y) log(1 - h(z)) and its z-derivatives. No argument
  /// checks: this sits in the inner loops.
  LoglikTerms loglik(double y, double z) const;

 private:
  LinkKind kind_ = LinkKind::Logit;
};

/// Checked evaluation: throws std::domain_error on non-finite z.
double link_eval(const Link& link, double z);
/// Checked inverse: throws std::domain_error unless prob lies in (0,1).
double link_inverse(const Link& link, double prob);

/// Seeded RNG. Substreams are derived from the seed alone (not from the
/// current state), so work split across threads draws the same numbers
/// regardless of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  Rng substream(std::uint64_t stream) const;

  double uniform();   // [0, 1)
  double normal();    // N(0, 1)
  std::uint64_t below(std::uint64_t bound);  // uniform on {0, ..., bound-1}

  Matrix normal_matrix(Index rows, Index cols);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

enum class SvdMethod { Exact, Randomized };

struct SvdResult {
  Matrix u;  // n x r, orthonormal columns
  Vector d;  // r, nonincreasing, >= 0
  Matrix v;  // p x r, orthonormal columns

  Matrix reconstruct() const { return u * d.asDiagonal() * v.transpose(); }
};

struct RandomizedSvdOptions {
  int oversampling = 10;
  int power_iterations = 2;
  std::uint64_t seed = 0x5eed;
};

/// Rank-r SVD. Exact uses a divide-and-conquer SVD of the full matrix;
/// Randomized uses a Gaussian range finder with QR-stabilized power
/// iterations. Column signs are normalized so the largest-magnitude entry
/// of each left singular vector is positive.
SvdResult truncated_svd(const Matrix& a, Index rank, SvdMethod method,
                        const RandomizedSvdOptions& options = {});

/// Standard normal CDF and its complement.
double normal_cdf(double z);
double normal_ccdf(double z);
/// Standard normal quantile, prob in (0,1).
double normal_quantile(double prob);

/// Draw from N(mu, sigma^2) conditioned on [lo, hi]. Infinite bounds are
/// accepted. Rejection from the untruncated normal when the interval holds
/// at least 10% of the mass, inverse CDF otherwise.
double sample_truncated_normal(Rng& rng, double mu, double sigma, double lo,
                               double hi);

}  // namespace flair

#endif  // FLAIR_NUMCORE_HPP
