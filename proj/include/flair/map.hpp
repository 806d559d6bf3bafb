#ifndef FLAIR_MAP_HPP
#define FLAIR_MAP_HPP

#include <vector>

#include "flair/init.hpp"
#include "flair/model.hpp"

namespace flair {

/// Value, gradient and Hessian of a per-row or per-column log-posterior.
struct LocalObjective {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

/// Log-posterior of outcome j as a function of theta = (beta_j, lambda_j)
/// (coefficients first), with the factors held at `m`. Masked cells drop out.
LocalObjective outcome_objective(Index j, const Vector& theta, const Matrix& m,
                                 const Dataset& data, double tau_b, double tau_lambda,
                                 const Link& link, bool with_derivatives = true);

/// Log-posterior of sample i as a function of eta_i with (Lambda, B) fixed.
LocalObjective factor_objective(Index i, const Vector& eta, const Matrix& lambda,
                                const Matrix& b, const Dataset& data, const Link& link,
                                bool with_derivatives = true);

struct OutcomeUpdate {
  Vector lambda;
  Vector beta;
  int iterations = 0;
};

struct FactorUpdate {
  Vector eta;
  int iterations = 0;
};

/// Projected damped Newton ascent for (lambda_j, beta_j) given M.
OutcomeUpdate update_outcome_params(Index j, const FactorState& state, const Dataset& data,
                                    const PriorConfig& prior, const FitOptions& opts);

/// Projected Newton ascent for eta_i given (Lambda, B).
FactorUpdate update_factor(Index i, const FactorState& state, const Dataset& data,
                           const PriorConfig& prior, const FitOptions& opts);

struct MapTrace {
  std::vector<double> log_posterior;  // entry 0 is the starting point
  std::vector<long> outcome_newton_steps;
  std::vector<long> factor_newton_steps;
  double seconds_outcomes = 0.0;
  double seconds_factors = 0.0;
  bool converged = false;

  int outer_iterations() const { return static_cast<int>(log_posterior.size()) - 1; }
};

struct MapResult {
  FactorState state;
  MapTrace trace;
};

/// Alternating constrained MAP: outcome sweep then factor sweep until the
/// relative log-posterior increase drops below opts.outer_tol.
MapResult map_fit(const Dataset& data, const PriorConfig& prior, const FitOptions& opts,
                  const InitResult& init);

/// Maps a MAP triple to the identified parameterization with
/// M^T M = n I_k and M^T X = 0, leaving X B^T + M Lambda^T unchanged.
FactorState postprocess(const FactorState& state, const Matrix& x);

}  // namespace flair

#endif  // FLAIR_MAP_HPP
