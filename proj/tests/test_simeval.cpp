#include <cmath>

#include "doctest.h"
#include "flair/simeval.hpp"
#include "helpers.hpp"

using namespace flair;

TEST_CASE("spike probability one gives a null model") {
  SimConfig cfg = SimConfig::sparse(200, 100, 2, 2, 3);
  cfg.spike_prob = 1.0;
  Rng rng(cfg.seed);
  const Simulation sim = simulate_dataset(cfg, rng);
  CHECK(sim.truth.lambda.isZero(0.0));
  CHECK(sim.truth.b.isZero(0.0));
  CHECK(std::abs(sim.data.y.mean() - 0.5) <= 3 * std::sqrt(0.25 / (200.0 * 100.0)));
}

TEST_CASE("simulated parameters respect the truncation and structure") {
  SimConfig cfg = SimConfig::dense(300, 150, 4);
  cfg.sigma2 = 9.0;
  Rng rng(cfg.seed);
  const Simulation sim = simulate_dataset(cfg, rng);
  CHECK(sim.truth.lambda.cwiseAbs().maxCoeff() <= 5.0);
  CHECK(sim.truth.b.cwiseAbs().maxCoeff() <= 5.0);
  CHECK((sim.data.x.col(0).array() == 1.0).all());
  CHECK(sim.data.q() == 2);
  const Matrix z = sim.data.x * sim.truth.b.transpose() + sim.truth.m * sim.truth.lambda.transpose();
  CHECK(z == sim.truth.z);
  CHECK(sim.data.names.front() == "y1");
  CHECK(sim.data.names.back() == "y150");
}

TEST_CASE("empirical rate of Y matches the mean probability") {
  const SimConfig cfg = SimConfig::dense(400, 200, 5);
  Rng rng(cfg.seed);
  const Simulation sim = simulate_dataset(cfg, rng);
  const double mean_prob =
      sim.truth.z.unaryExpr([](double z) { return testing::naive_logistic(z); }).mean();
  CHECK(std::abs(sim.data.y.mean() - mean_prob) <= 3 * std::sqrt(0.25 / (400.0 * 200.0)));
}

TEST_CASE("simulation is reproducible from the seed") {
  const SimConfig cfg = SimConfig::sparse(50, 30, 3, 3, 6);
  Rng a(cfg.seed), b(cfg.seed);
  CHECK(simulate_dataset(cfg, a).data.y == simulate_dataset(cfg, b).data.y);
}

TEST_CASE("simulation config validation") {
  SimConfig cfg;
  cfg.spike_prob = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SimConfig{};
  cfg.sigma2 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SimConfig{};
  cfg.q = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("holdout mask counts and stratification") {
  Rng data_rng(7);
  Matrix y(1000, 100);
  for (Index j = 0; j < 100; ++j)
    for (Index i = 0; i < 1000; ++i) y(i, j) = data_rng.uniform() < 0.1 ? 1.0 : 0.0;
  Rng rng(8);
  const Mask strat = make_holdout_mask(y, 0.2, true, rng);
  CHECK(std::abs(static_cast<double>(strat.count()) - 20000.0) <= 1.0);
  double held_ones = 0.0;
  for (Index j = 0; j < 100; ++j)
    for (Index i = 0; i < 1000; ++i)
      if (strat(i, j)) held_ones += y(i, j);
  const double held_rate = held_ones / static_cast<double>(strat.count());
  CHECK(std::abs(held_rate - y.mean()) <= 0.005);

  Rng r1(9), r2(9);
  const Mask plain1 = make_holdout_mask(y, 0.2, false, r1);
  const Mask plain2 = make_holdout_mask(y, 0.2, false, r2);
  CHECK((plain1 == plain2).all());
  CHECK(std::abs(static_cast<double>(plain1.count()) - 20000.0) <= 1.0);
}

TEST_CASE("holdout mask errors") {
  Rng rng(10);
  const Matrix y = Matrix::Zero(4, 4);
  CHECK_THROWS_AS(make_holdout_mask(y, 0.0, true, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_holdout_mask(y, 1.0, true, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_holdout_mask(Matrix::Zero(1, 40), 0.5, false, rng), std::invalid_argument);
}

TEST_CASE("relative Frobenius errors") {
  Rng rng(11);
  const Matrix lambda0 = rng.normal_matrix(15, 2);
  const Matrix outer = lambda0 * lambda0.transpose();
  CHECK(rel_frob_error_lambda_outer(outer, lambda0) == 0.0);
  CHECK(rel_frob_error_lambda_outer(2.0 * outer, lambda0) == doctest::Approx(1.0).epsilon(1e-14));

  const Matrix est = rng.normal_matrix(15, 15);
  double num = 0.0, den = 0.0;
  for (Index a = 0; a < 15; ++a)
    for (Index b = 0; b < 15; ++b) {
      double t = 0.0;
      for (Index c = 0; c < 2; ++c) t += lambda0(a, c) * lambda0(b, c);
      num += (est(a, b) - t) * (est(a, b) - t);
      den += t * t;
    }
  CHECK(std::abs(rel_frob_error_lambda_outer(est, lambda0) - std::sqrt(num / den)) <= 1e-12);
  CHECK_THROWS_AS(rel_frob_error_lambda_outer(est, Matrix::Zero(15, 2)), std::invalid_argument);

  const Matrix b0 = rng.normal_matrix(15, 3);
  CHECK(rel_frob_error_b(b0, b0) == 0.0);
  CHECK(rel_frob_error_b(b0 + Matrix::Ones(15, 3), b0) == doctest::Approx(1.0).epsilon(1e-14));
  const Matrix best = rng.normal_matrix(15, 3);
  double ss = 0.0;
  for (Index a = 0; a < 15; ++a)
    for (Index c = 0; c < 3; ++c) ss += (best(a, c) - b0(a, c)) * (best(a, c) - b0(a, c));
  CHECK(std::abs(rel_frob_error_b(best, b0) - std::sqrt(ss / 45.0)) <= 1e-12);
}

TEST_CASE("empirical coverage counts") {
  const Matrix truth = Matrix::Constant(2, 2, 1.0);
  IntervalSet exact;
  exact.lower = truth;
  exact.upper = truth;
  CHECK(empirical_coverage(exact, truth) == 1.0);
  IntervalSet away;
  away.lower = Matrix::Constant(2, 2, 2.0);
  away.upper = Matrix::Constant(2, 2, 3.0);
  CHECK(empirical_coverage(away, truth) == 0.0);
  IntervalSet half = away;
  half.lower.row(0).setZero();
  CHECK(empirical_coverage(half, truth) == 0.5);
  CHECK_THROWS_AS(empirical_coverage(half, Matrix::Ones(3, 2)), std::invalid_argument);
}

TEST_CASE("AUC reference values") {
  const std::vector<double> labels{0, 0, 1, 1};
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, labels) == 1.0);
  CHECK(auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, labels) == 0.5);
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, labels) == 0.0);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 1}), std::invalid_argument);
}

TEST_CASE("AUC agrees with a pairwise count") {
  Rng rng(12);
  std::vector<double> scores(300), labels(300);
  for (std::size_t t = 0; t < 300; ++t) {
    labels[t] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    scores[t] = std::round(10 * (rng.uniform() + 0.3 * labels[t])) / 10;  // plenty of ties
  }
  double wins = 0.0, pairs = 0.0;
  for (std::size_t a = 0; a < 300; ++a)
    for (std::size_t b = 0; b < 300; ++b)
      if (labels[a] == 1.0 && labels[b] == 0.0) {
        pairs += 1.0;
        wins += scores[a] > scores[b] ? 1.0 : (scores[a] == scores[b] ? 0.5 : 0.0);
      }
  CHECK(auc(scores, labels) == doctest::Approx(wins / pairs).epsilon(1e-13));
}

TEST_CASE("random block is sorted, distinct and seeded") {
  const auto a = random_block(500, 100, 3);
  CHECK(a.size() == 100);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
  CHECK(a == random_block(500, 100, 3));
  CHECK(random_block(50, 100, 3).size() == 50);
}

TEST_CASE("aggregate computes means and standard errors skipping missing values") {
  ReplicationSummary s;
  FitReport r1, r2, r3;
  r1.rel_err_b = 0.1;
  r2.rel_err_b = 0.3;
  r3.rel_err_b = 0.2;
  r1.auc = 0.9;
  s.replicates = {r1, r2, r3};
  aggregate(s);
  CHECK(s.mean.rel_err_b == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(s.std_error.rel_err_b == doctest::Approx(0.1 / std::sqrt(3.0)).epsilon(1e-12));
  CHECK(s.mean.auc == 0.9);
  CHECK(std::isnan(s.mean.rho));
}

TEST_CASE("replication smoke run on a tiny configuration") {
  SimConfig cfg;
  cfg.n = 60;
  cfg.p = 40;
  cfg.k = 1;
  cfg.q = 2;
  cfg.seed = 13;
  ReplicationOptions opts;
  opts.holdout_fraction = 0.2;
  opts.evaluation.n_mc = 400;
  const ReplicationSummary s = run_replication(cfg, 1, opts);
  REQUIRE(s.replicates.size() == 1);
  for (const ReportField& f : report_fields()) {
    INFO(f.name);
    CHECK(std::isfinite(s.replicates[0].*f.member));
  }
  const FitReport& r = s.replicates[0];
  CHECK(r.rel_err_lambda_outer >= 0.0);
  CHECK((r.coverage_b >= 0.0 && r.coverage_b <= 1.0));
  CHECK((r.auc >= 0.0 && r.auc <= 1.0));
  CHECK(r.rho >= 1.0);
}

TEST_CASE("replication mean equals the mean of the replicates") {
  SimConfig cfg;
  cfg.n = 80;
  cfg.p = 40;
  cfg.k = 1;
  cfg.seed = 14;
  ReplicationOptions opts;
  opts.evaluation.n_mc = 400;
  const ReplicationSummary s = run_replication(cfg, 3, opts);
  double mean = 0.0;
  for (const FitReport& r : s.replicates) mean += r.rel_err_b;
  CHECK(std::abs(s.mean.rel_err_b - mean / 3.0) <= 1e-12);
  CHECK(s.replicates[0].rel_err_b != s.replicates[1].rel_err_b);
  CHECK_THROWS_AS(run_replication(cfg, 0, opts), std::invalid_argument);
}

TEST_CASE("replicate failures carry the replicate index") {
  SimConfig cfg;
  cfg.n = 10;
  cfg.p = 6;
  cfg.k = 5;  // k + q exceeds min(n, p)
  try {
    run_replication(cfg, 1, ReplicationOptions{});
    FAIL("expected an error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("replicate 0") != std::string::npos);
  }
}
