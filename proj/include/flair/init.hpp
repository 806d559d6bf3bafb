#ifndef FLAIR_INIT_HPP
#define FLAIR_INIT_HPP

#include <optional>
#include <vector>

#include "flair/model.hpp"

namespace flair {

inline constexpr double kTauLower = 0.5;
inline constexpr double kTauUpper = 20.0;

/// Problems with n*p above this use the randomized SVD under SvdChoice::Auto.
inline constexpr double kRandomizedSvdCells = 5e6;

enum class SvdChoice { Auto, Exact, Randomized };

struct InitOptions {
  SvdChoice svd = SvdChoice::Auto;
  /// Probability clamp for the logit inversion; <= 0 selects default_threshold.
  double threshold = 0.0;
  double c_lambda = 10.0;
  double c_b = 10.0;
  std::uint64_t seed = 0x5eed;
};

struct InitResult {
  FactorState state;
  Vector tau_lambda;
  Vector tau_b;
  double loglik = 0.0;  // log-likelihood of the observed cells at `state`
};

/// min(0.1, 1/sqrt(min(n,p))), floored at 1e-4.
double default_threshold(Index n, Index p);

/// Clamps every entry into [eps, 1 - eps].
Matrix threshold_probabilities(const Matrix& probs, double eps);

/// Replaces each masked cell by (row mean) x (column mean) over the
/// unmasked cells. Throws if a row or column is entirely masked.
Matrix impute_for_init(const Matrix& y, const std::optional<Mask>& mask);

/// Hard-truncation T(x) onto [kTauLower, kTauUpper].
double truncate_tau(double x);

struct TauPair {
  Vector tau_lambda;
  Vector tau_b;
};

/// tau_j = T(k^{-1/2} ||row_j||) for both loadings and coefficients, with
/// k = lambda.cols().
TauPair select_tau(const Matrix& lambda, const Matrix& b);

/// SVD-based starting point. `y` may hold probabilities rather than binary
/// outcomes; the mask only affects imputation and the reported loglik.
InitResult svd_initialize(const Matrix& y, const Matrix& x,
                          const std::optional<Mask>& mask, int k, const Link& link,
                          const InitOptions& options = {});
InitResult svd_initialize(const Dataset& data, int k, const Link& link,
                          const InitOptions& options = {});

/// k max(n,p) log(min(n,p)).
double jic_penalty(Index n, Index p, int k);

struct JicEntry {
  int k = 0;
  double loglik = 0.0;
  double jic = 0.0;
};

JicEntry jic(const Dataset& data, int k, const Link& link,
             const InitOptions& options = {});

struct KSelection {
  int k = 1;
  std::vector<JicEntry> table;
};

/// Minimizes JIC over k = 1..k_max; ties go to the smaller k.
KSelection select_k(const Dataset& data, int k_max, const Link& link,
                    const InitOptions& options = {});

}  // namespace flair

#endif  // FLAIR_INIT_HPP
