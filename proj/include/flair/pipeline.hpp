#ifndef FLAIR_PIPELINE_HPP
#define FLAIR_PIPELINE_HPP

#include <optional>

#include "flair/init.hpp"
#include "flair/map.hpp"
#include "flair/posterior.hpp"

namespace flair {

struct PipelineOptions {
  FitOptions fit{};
  InitOptions init{};
  /// Fixed latent dimension; ignored when auto_k is set.
  int k = 2;
  bool auto_k = false;
  int k_max = 5;
  RhoOptions rho{};
};

struct PipelineTimings {
  double select_k = 0.0;
  double init = 0.0;
  double map = 0.0;
  double posterior = 0.0;
  double total = 0.0;
};

/// Everything produced by one end-to-end fit: chosen k, starting point,
/// MAP trace, post-processed state and the calibrated Gaussian posterior.
struct PipelineResult {
  int k = 0;
  std::optional<KSelection> selection;
  InitResult init;
  MapTrace trace;
  PriorConfig prior;
  FactorState map_state;
  FactorState tilde;
  GaussianPosterior posterior;
  PipelineTimings timings;
};

/// Optional k selection, SVD start, tau selection, MAP, post-processing,
/// rho calibration and per-outcome covariances.
PipelineResult fit_pipeline(const Dataset& data, const PipelineOptions& options);

}  // namespace flair

#endif  // FLAIR_PIPELINE_HPP
