#ifndef FLAIR_SIMEVAL_HPP
#define FLAIR_SIMEVAL_HPP

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "flair/model.hpp"
#include "flair/pipeline.hpp"
#include "flair/posterior.hpp"

namespace flair {

/// Generative settings. Loadings and coefficients are drawn from
/// spike_prob * delta_0 + (1 - spike_prob) * TN(0, sigma2, [-bound, bound]).
struct SimConfig {
  Index n = 500;
  Index p = 200;
  int k = 2;
  int q = 2;
  double sigma2 = 1.0;
  double spike_prob = 0.0;
  double bound = 5.0;
  std::uint64_t seed = 1;

  void validate() const;

  /// k = q = 2, sigma2 = 1, no point mass at zero.
  static SimConfig dense(Index n, Index p, std::uint64_t seed = 1);
  /// Sparse loadings and coefficients: point mass 0.5 at zero.
  static SimConfig sparse(Index n, Index p, int k, int q, std::uint64_t seed = 1);
};

struct SimTruth {
  Matrix lambda;  // p x k
  Matrix b;       // p x q
  Matrix m;       // n x k
  Matrix z;       // n x p, X B^T + M Lambda^T
};

struct Simulation {
  Dataset data;
  SimTruth truth;
};

Simulation simulate_dataset(const SimConfig& cfg, Rng& rng);

/// Holds out round(fraction * n * p) cells. Stratified mode splits the
/// count between 0-cells and 1-cells in proportion to their frequency.
/// Throws if any row or column ends up fully held out.
Mask make_holdout_mask(const Matrix& y, double fraction, bool stratified, Rng& rng);

double rel_frob_error_lambda_outer(const Matrix& estimate, const Matrix& lambda0);
double rel_frob_error_b(const Matrix& estimate, const Matrix& b0);

/// Fraction of entries of `truth` inside [lower, upper].
double empirical_coverage(const IntervalSet& intervals, const Matrix& truth);

/// Mann-Whitney AUC with midranks for ties.
double auc(std::span<const double> scores, std::span<const double> labels);

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct FitReport {
  double rel_err_lambda_outer = kMissing;
  double rel_err_b = kMissing;
  double coverage_lambda_outer = kMissing;
  double coverage_b = kMissing;
  double coverage_lambda_outer_uncorrected = kMissing;
  double coverage_b_uncorrected = kMissing;
  double auc = kMissing;
  double auc_baseline = kMissing;
  double k_selected = kMissing;
  double rho = kMissing;
  double seconds_select_k = kMissing;
  double seconds_init = kMissing;
  double seconds_map = kMissing;
  double seconds_posterior = kMissing;
  double seconds_total = kMissing;
};

/// Field names and accessors, in a fixed order, for serialization and
/// aggregation.
struct ReportField {
  const char* name;
  double FitReport::*member;
};
std::span<const ReportField> report_fields();

struct EvaluationOptions {
  double alpha = 0.05;
  std::size_t n_mc = 2000;
  /// Lambda Lambda^T coverage uses a random block of this many outcomes
  /// when p exceeds it.
  Index coverage_block = 100;
  std::uint64_t seed = 7;
};

/// Errors, corrected and rho = 1 coverage against the simulation truth.
FitReport evaluate_against_truth(const PipelineResult& fit, const SimTruth& truth,
                                 const EvaluationOptions& options);

/// AUC of the fitted probabilities on the held-out cells, and of the
/// per-column training frequency (intercept-only baseline).
void evaluate_holdout(const PipelineResult& fit, const Dataset& data, FitReport& report);

struct ReplicationOptions {
  PipelineOptions pipeline{};
  EvaluationOptions evaluation{};
  double holdout_fraction = 0.0;
  bool stratified = true;
};

struct ReplicationSummary {
  std::vector<FitReport> replicates;
  FitReport mean;
  FitReport std_error;
};

/// Column-wise mean and standard error, skipping missing fields.
void aggregate(ReplicationSummary& summary);

/// Simulate, fit and score `replicates` datasets. Replicate r draws from
/// substream r of cfg.seed.
ReplicationSummary run_replication(const SimConfig& cfg, int replicates,
                                   const ReplicationOptions& options);

/// Seeded random subset of `count` outcome indices out of p (all when p <= count), sorted.
std::vector<Index> random_block(Index p, Index count, std::uint64_t seed);

}  // namespace flair

#endif  // FLAIR_SIMEVAL_HPP
