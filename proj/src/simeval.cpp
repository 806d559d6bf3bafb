#include "flair/simeval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace flair {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

double draw_parameter(Rng& rng, const SimConfig& cfg) {
  if (cfg.spike_prob > 0.0 && rng.uniform() < cfg.spike_prob) return 0.0;
  return sample_truncated_normal(rng, 0.0, std::sqrt(cfg.sigma2), -cfg.bound, cfg.bound);
}

// Partial Fisher-Yates: moves `count` random elements to the front.
void choose_front(std::vector<Index>& pool, std::size_t count, Rng& rng) {
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t pick = t + static_cast<std::size_t>(rng.below(pool.size() - t));
    std::swap(pool[t], pool[pick]);
  }
}

// ||Lambda_est Lambda_est^T + diag(extra) - Lambda0 Lambda0^T||_F^2, by row blocks.
double lowrank_gap_sq(const Matrix& est, const Vector& extra, const Matrix& truth) {
  const Index p = est.rows();
  constexpr Index kBlock = 256;
  double acc = 0.0;
  for (Index r0 = 0; r0 < p; r0 += kBlock) {
    const Index rows = std::min(kBlock, p - r0);
    Matrix block = est.middleRows(r0, rows) * est.transpose() -
                   truth.middleRows(r0, rows) * truth.transpose();
    for (Index t = 0; t < rows; ++t) block(t, r0 + t) += extra(r0 + t);
    acc += block.squaredNorm();
  }
  return acc;
}

double lowrank_norm_sq(const Matrix& a) {
  const Matrix g = a.transpose() * a;  // ||A A^T||_F^2 = ||A^T A||_F^2
  return g.squaredNorm();
}

}  // namespace

void SimConfig::validate() const {
  require(n >= 2 && p >= 2, "sim config: n and p must be >= 2");
  require(k >= 1, "sim config: k must be >= 1");
  require(q >= 1, "sim config: q must be >= 1 (intercept included)");
  require(sigma2 > 0.0, "sim config: sigma2 must be positive");
  require(spike_prob >= 0.0 && spike_prob <= 1.0, "sim config: spike_prob must lie in [0,1]");
  require(bound > 0.0, "sim config: bound must be positive");
}

SimConfig SimConfig::dense(Index n, Index p, std::uint64_t seed) {
  SimConfig cfg;
  cfg.n = n;
  cfg.p = p;
  cfg.k = 2;
  cfg.q = 2;
  cfg.sigma2 = 1.0;
  cfg.spike_prob = 0.0;
  cfg.seed = seed;
  return cfg;
}

SimConfig SimConfig::sparse(Index n, Index p, int k, int q, std::uint64_t seed) {
  SimConfig cfg = dense(n, p, seed);
  cfg.k = k;
  cfg.q = q;
  cfg.spike_prob = 0.5;
  return cfg;
}

Simulation simulate_dataset(const SimConfig& cfg, Rng& rng) {
  cfg.validate();
  Simulation sim;
  SimTruth& t = sim.truth;
  t.lambda.resize(cfg.p, cfg.k);
  t.b.resize(cfg.p, cfg.q);
  for (Index j = 0; j < cfg.p; ++j)
    for (Index l = 0; l < cfg.k; ++l) t.lambda(j, l) = draw_parameter(rng, cfg);
  for (Index j = 0; j < cfg.p; ++j)
    for (Index l = 0; l < cfg.q; ++l) t.b(j, l) = draw_parameter(rng, cfg);

  Matrix x(cfg.n, cfg.q);
  x.col(0).setOnes();
  for (Index i = 0; i < cfg.n; ++i)
    for (Index c = 1; c < cfg.q; ++c) x(i, c) = rng.normal();
  t.m.resize(cfg.n, cfg.k);
  for (Index i = 0; i < cfg.n; ++i)
    for (Index l = 0; l < cfg.k; ++l) t.m(i, l) = rng.normal();

  t.z = x * t.b.transpose() + t.m * t.lambda.transpose();
  const Link link;
  Matrix y(cfg.n, cfg.p);
  for (Index i = 0; i < cfg.n; ++i)
    for (Index j = 0; j < cfg.p; ++j) y(i, j) = rng.uniform() < link.eval(t.z(i, j)) ? 1.0 : 0.0;

  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(cfg.p));
  for (Index j = 0; j < cfg.p; ++j) names.push_back("y" + std::to_string(j + 1));
  sim.data = make_dataset(std::move(y), std::move(x), std::nullopt, std::move(names));
  return sim;
}

Mask make_holdout_mask(const Matrix& y, double fraction, bool stratified, Rng& rng) {
  require(fraction > 0.0 && fraction < 1.0, "holdout: fraction must lie in (0,1)");
  const Index cells = y.size();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cells)));

  Mask mask = Mask::Constant(y.rows(), y.cols(), false);
  auto mark = [&](const std::vector<Index>& pool, std::size_t take) {
    for (std::size_t t = 0; t < take; ++t) mask(pool[t] % y.rows(), pool[t] / y.rows()) = true;
  };
  if (stratified) {
    std::vector<Index> ones, zeros;
    for (Index c = 0; c < cells; ++c) (y(c % y.rows(), c / y.rows()) == 1.0 ? ones : zeros).push_back(c);
    const double share = static_cast<double>(ones.size()) / static_cast<double>(cells);
    auto take_ones = static_cast<std::size_t>(std::llround(share * static_cast<double>(count)));
    take_ones = std::min(take_ones, ones.size());
    const std::size_t take_zeros = std::min(count - take_ones, zeros.size());
    choose_front(ones, take_ones, rng);
    choose_front(zeros, take_zeros, rng);
    mark(ones, take_ones);
    mark(zeros, take_zeros);
  } else {
    std::vector<Index> pool(static_cast<std::size_t>(cells));
    std::iota(pool.begin(), pool.end(), Index{0});
    choose_front(pool, count, rng);
    mark(pool, count);
  }
  if ((mask.rowwise().all()).any())
    throw std::invalid_argument("holdout: a row has every cell held out");
  if ((mask.colwise().all()).any())
    throw std::invalid_argument("holdout: a column has every cell held out");
  return mask;
}

double rel_frob_error_lambda_outer(const Matrix& estimate, const Matrix& lambda0) {
  const Matrix truth = lambda0 * lambda0.transpose();
  require(estimate.rows() == truth.rows() && estimate.cols() == truth.cols(),
          "rel_frob_error_lambda_outer: shape mismatch");
  const double scale = truth.norm();
  require(scale > 0.0, "rel_frob_error_lambda_outer: true Lambda Lambda^T is zero");
  return (estimate - truth).norm() / scale;
}

double rel_frob_error_b(const Matrix& estimate, const Matrix& b0) {
  require(estimate.rows() == b0.rows() && estimate.cols() == b0.cols(),
          "rel_frob_error_b: shape mismatch");
  return (estimate - b0).norm() / std::sqrt(static_cast<double>(b0.size()));
}

double empirical_coverage(const IntervalSet& intervals, const Matrix& truth) {
  require(intervals.lower.rows() == truth.rows() && intervals.lower.cols() == truth.cols() &&
              intervals.upper.rows() == truth.rows() && intervals.upper.cols() == truth.cols(),
          "empirical_coverage: interval and truth shapes differ");
  require(truth.size() > 0, "empirical_coverage: empty target");
  const auto hit = (truth.array() >= intervals.lower.array()) &&
                   (truth.array() <= intervals.upper.array());
  return static_cast<double>(hit.count()) / static_cast<double>(truth.size());
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  require(scores.size() == labels.size(), "auc: scores and labels differ in length");
  const std::size_t total = scores.size();
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum = 0.0;
  double positives = 0.0;
  for (std::size_t start = 0; start < total;) {
    std::size_t stop = start;
    while (stop < total && scores[order[stop]] == scores[order[start]]) ++stop;
    const double midrank = 0.5 * static_cast<double>(start + 1 + stop);
    for (std::size_t t = start; t < stop; ++t)
      if (labels[order[t]] == 1.0) {
        rank_sum += midrank;
        positives += 1.0;
      }
    start = stop;
  }
  const double negatives = static_cast<double>(total) - positives;
  require(positives > 0.0 && negatives > 0.0, "auc: labels must contain both classes");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

std::span<const ReportField> report_fields() {
  static const std::array<ReportField, 15> fields{{
      {"rel_err_lambda_outer", &FitReport::rel_err_lambda_outer},
      {"rel_err_B", &FitReport::rel_err_b},
      {"coverage_lambda_outer", &FitReport::coverage_lambda_outer},
      {"coverage_B", &FitReport::coverage_b},
      {"coverage_lambda_outer_uncorrected", &FitReport::coverage_lambda_outer_uncorrected},
      {"coverage_B_uncorrected", &FitReport::coverage_b_uncorrected},
      {"auc", &FitReport::auc},
      {"auc_baseline", &FitReport::auc_baseline},
      {"k_selected", &FitReport::k_selected},
      {"rho", &FitReport::rho},
      {"seconds_select_k", &FitReport::seconds_select_k},
      {"seconds_init", &FitReport::seconds_init},
      {"seconds_map", &FitReport::seconds_map},
      {"seconds_posterior", &FitReport::seconds_posterior},
      {"seconds_total", &FitReport::seconds_total},
  }};
  return fields;
}

std::vector<Index> random_block(Index p, Index count, std::uint64_t seed) {
  std::vector<Index> pool(static_cast<std::size_t>(p));
  std::iota(pool.begin(), pool.end(), Index{0});
  if (p <= count) return pool;
  Rng rng(seed);
  choose_front(pool, static_cast<std::size_t>(count), rng);
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

FitReport evaluate_against_truth(const PipelineResult& fit, const SimTruth& truth,
                                 const EvaluationOptions& options) {
  const GaussianPosterior& post = fit.posterior;
  FitReport r;
  r.k_selected = fit.k;
  r.rho = post.rho;
  r.seconds_select_k = fit.timings.select_k;
  r.seconds_init = fit.timings.init;
  r.seconds_map = fit.timings.map;
  r.seconds_posterior = fit.timings.posterior;
  r.seconds_total = fit.timings.total;

  r.rel_err_b = rel_frob_error_b(post.b, truth.b);
  const double scale_sq = lowrank_norm_sq(truth.lambda);
  if (scale_sq > 0.0)
    r.rel_err_lambda_outer =
        std::sqrt(lowrank_gap_sq(post.lambda, loading_variance_traces(post), truth.lambda) /
                  scale_sq);

  const Rng rng(options.seed);
  const GaussianPosterior plain = post.with_rho(1.0);
  r.coverage_b = empirical_coverage(
      credible_intervals(post, IntervalTarget::B, options.alpha, options.n_mc, rng), truth.b);
  r.coverage_b_uncorrected = empirical_coverage(
      credible_intervals(plain, IntervalTarget::B, options.alpha, options.n_mc, rng), truth.b);

  // Only meaningful when the fitted and true latent dimensions agree.
  if (post.k() == truth.lambda.cols()) {
    const std::vector<Index> rows =
        random_block(post.p(), options.coverage_block, options.seed ^ 0xb10cULL);
    Matrix lam0(static_cast<Index>(rows.size()), truth.lambda.cols());
    for (std::size_t a = 0; a < rows.size(); ++a) lam0.row(static_cast<Index>(a)) = truth.lambda.row(rows[a]);
    const Matrix target = lam0 * lam0.transpose();
    r.coverage_lambda_outer = empirical_coverage(
        credible_intervals(post, IntervalTarget::Submatrix, options.alpha, options.n_mc, rng, rows),
        target);
    r.coverage_lambda_outer_uncorrected = empirical_coverage(
        credible_intervals(plain, IntervalTarget::Submatrix, options.alpha, options.n_mc, rng, rows),
        target);
  }
  return r;
}

void evaluate_holdout(const PipelineResult& fit, const Dataset& data, FitReport& report) {
  require(data.mask.has_value(), "evaluate_holdout: dataset has no holdout mask");
  const Mask& mask = *data.mask;
  const GaussianPosterior& post = fit.posterior;

  Vector train_rate(data.p());
  for (Index j = 0; j < data.p(); ++j) {
    double ones = 0.0, seen = 0.0;
    for (Index i = 0; i < data.n(); ++i)
      if (!mask(i, j)) {
        ones += data.y(i, j);
        seen += 1.0;
      }
    train_rate(j) = seen > 0.0 ? ones / seen : 0.5;
  }

  std::vector<double> scores, baseline, labels;
  for (Index j = 0; j < data.p(); ++j)
    for (Index i = 0; i < data.n(); ++i) {
      if (!mask(i, j)) continue;
      double z = post.x.row(i).dot(post.b.row(j));
      if (post.k() > 0) z += post.m.row(i).dot(post.lambda.row(j));
      scores.push_back(post.link.eval(z));
      baseline.push_back(train_rate(j));
      labels.push_back(data.y(i, j));
    }
  report.auc = auc(scores, labels);
  report.auc_baseline = auc(baseline, labels);
}

void aggregate(ReplicationSummary& summary) {
  summary.mean = FitReport{};
  summary.std_error = FitReport{};
  for (const ReportField& f : report_fields()) {
    std::vector<double> vals;
    for (const FitReport& r : summary.replicates)
      if (!std::isnan(r.*f.member)) vals.push_back(r.*f.member);
    if (vals.empty()) continue;
    std::sort(vals.begin(), vals.end());
    const double n = static_cast<double>(vals.size());
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    summary.mean.*f.member = mean;
    summary.std_error.*f.member = vals.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  }
}

ReplicationSummary run_replication(const SimConfig& cfg, int replicates,
                                   const ReplicationOptions& options) {
  require(replicates >= 1, "replication: replicates must be >= 1");
  cfg.validate();
  ReplicationSummary summary;
  const Rng master(cfg.seed);
  for (int rep = 0; rep < replicates; ++rep) {
    try {
      Rng rng = master.substream(static_cast<std::uint64_t>(rep));
      Simulation sim = simulate_dataset(cfg, rng);
      if (options.holdout_fraction > 0.0)
        sim.data.mask = make_holdout_mask(sim.data.y, options.holdout_fraction,
                                          options.stratified, rng);
      PipelineOptions popts = options.pipeline;
      if (!popts.auto_k) popts.k = cfg.k;
      const PipelineResult fit = fit_pipeline(sim.data, popts);
      EvaluationOptions eopts = options.evaluation;
      eopts.seed = options.evaluation.seed + static_cast<std::uint64_t>(rep);
      FitReport report = evaluate_against_truth(fit, sim.truth, eopts);
      if (sim.data.mask) evaluate_holdout(fit, sim.data, report);
      summary.replicates.push_back(report);
    } catch (const std::exception& e) {
      throw NumericalError("replicate " + std::to_string(rep) + ": " + e.what());
    }
  }
  aggregate(summary);
  return summary;
}

}  // namespace flair
