#ifndef FLAIR_POSTERIOR_HPP
#define FLAIR_POSTERIOR_HPP

#include <cstdint>
#include <vector>

#include "flair/model.hpp"

namespace flair {

/// Constant matching the logistic to a scaled normal CDF: h(x) ~ Phi(x / 1.702).
inline constexpr double kLogisticProbitScale = 1.702;

/// Gaussian approximation N(theta_j, rho^2 V_j) to the conditional posterior
/// of each outcome's (beta_j, lambda_j) given the post-processed factors.
///
/// Every V_j is (q+k) x (q+k) with the coefficient block first, then the
/// loading block, matching outcome_objective's parameter order.
struct GaussianPosterior {
  Matrix lambda;  // p x k posterior means
  Matrix b;       // p x q posterior means
  Matrix m;       // n x k factors the posterior conditions on
  Matrix x;       // n x q design
  std::vector<Matrix> v;
  std::vector<Matrix> v_chol;  // lower Cholesky factors of v
  double rho = 1.0;
  Link link{};

  Index p() const { return lambda.rows(); }
  Index k() const { return lambda.cols(); }
  Index q() const { return b.cols(); }

  /// Same means and covariances with a different inflation factor.
  GaussianPosterior with_rho(double new_rho) const;
};

/// Inverse negative Hessian of outcome j's log-posterior at the state's
/// (beta_j, lambda_j); masked cells excluded.
Matrix compute_vj(Index j, const FactorState& state, const Dataset& data,
                  const PriorConfig& prior, const Link& link);

/// sigma_j^2 = 1.702^2 + n_j / sum_i h(z_ij)(1 - h(z_ij)) over observed
/// cells; +inf when outcome j has no observed cells.
Vector residual_scales(const FactorState& state, const Dataset& data, const Link& link);

/// b_{jj'} for two loading rows. Zero-loading pairs return the limit 1.
double pair_inflation(const Eigen::Ref<const Vector>& lambda_j,
                      const Eigen::Ref<const Vector>& lambda_jp, double sigma2_j,
                      double sigma2_jp);
double self_inflation(const Eigen::Ref<const Vector>& lambda_j, double sigma2_j);

struct RhoOptions {
  /// 0 evaluates every pair. Otherwise only this many random off-diagonal
  /// pairs (plus all diagonal terms) are scanned.
  std::uint64_t max_pairs = 0;
  std::uint64_t seed = 0;
};

/// rho = max over ordered pairs (j, j') of b_{jj'}.
double calibrate_rho(const FactorState& state, const Dataset& data, const Link& link,
                     const RhoOptions& options = {});

/// Computes every V_j (in parallel) and packages the posterior.
GaussianPosterior build_posterior(const FactorState& state, const Dataset& data,
                                  const PriorConfig& prior, const Link& link, double rho);

struct PosteriorSamples {
  std::vector<Matrix> lambda;  // N_MC draws of p x k
  std::vector<Matrix> b;       // N_MC draws of p x q

  Matrix lambda_outer(std::size_t s) const {
    return lambda[s] * lambda[s].transpose();
  }
};

/// Independent draws theta_j ~ N(theta_j, rho^2 V_j). Outcome j uses
/// substream j of `rng`, so the draws do not depend on thread scheduling.
PosteriorSamples sample_posterior(const GaussianPosterior& post, std::size_t n_mc,
                                  const Rng& rng);

/// Draws of the loading rows listed in `rows`, one n_mc x k matrix per row.
/// Row j uses the same substream as in sample_posterior.
std::vector<Matrix> sample_loadings(const GaussianPosterior& post,
                                    const std::vector<Index>& rows, std::size_t n_mc,
                                    const Rng& rng);

struct PosteriorMoments {
  Matrix sigma;  // p x p, E[Lambda Lambda^T]
  Matrix b;      // p x q, E[B]
};

/// Closed-form E[Lambda Lambda^T] = Lambda Lambda^T + rho^2 diag(tr V_lambda_j).
PosteriorMoments posterior_mean_sigma(const GaussianPosterior& post);

/// rho^2 tr(V_lambda_j) for every j.
Vector loading_variance_traces(const GaussianPosterior& post);

enum class IntervalTarget { B, LambdaOuter, Submatrix };

struct IntervalSet {
  IntervalTarget target = IntervalTarget::B;
  Matrix lower;
  Matrix upper;
  std::vector<Index> rows;  // outcome indices of the Lambda Lambda^T block
  double alpha = 0.05;
};

/// Equal-tail (1 - alpha) intervals. B intervals are the analytic normal
/// marginals; Lambda Lambda^T intervals are empirical quantiles of n_mc
/// draws. `rows` selects the block for IntervalTarget::Submatrix.
IntervalSet credible_intervals(const GaussianPosterior& post, IntervalTarget target,
                               double alpha, std::size_t n_mc, const Rng& rng,
                               const std::vector<Index>& rows = {});

/// h(x_i^T beta_j + eta_i^T lambda_j) at the posterior means for every
/// (rows[a], cols[b]) cell.
Matrix predict_probabilities(const GaussianPosterior& post, const std::vector<Index>& rows,
                             const std::vector<Index>& cols);

}  // namespace flair

#endif  // FLAIR_POSTERIOR_HPP
