#include <omp.h>

#include <cmath>

#include "doctest.h"
#include "flair/map.hpp"
#include "helpers.hpp"

using namespace flair;
using namespace flair::testing;

namespace {

double max_rel_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

// Per-outcome penalized logistic objective written with plain loops.
double oracle_outcome(Index j, const Vector& theta, const Matrix& m, const Dataset& d,
                      double tau_b, double tau_l) {
  const Index q = d.q();
  double total = 0.0;
  for (Index i = 0; i < d.n(); ++i) {
    if (!d.observed(i, j)) continue;
    double z = 0.0;
    for (Index c = 0; c < q; ++c) z += d.x(i, c) * theta(c);
    for (Index c = 0; c < m.cols(); ++c) z += m(i, c) * theta(q + c);
    total += naive_bernoulli_logit(d.y(i, j), z);
  }
  for (Index c = 0; c < q; ++c) total -= 0.5 * theta(c) * theta(c) / (tau_b * tau_b);
  for (Index c = 0; c < m.cols(); ++c) total -= 0.5 * theta(q + c) * theta(q + c) / (tau_l * tau_l);
  return total;
}

Vector oracle_outcome_grad(Index j, const Vector& theta, const Matrix& m, const Dataset& d,
                           double tau_b, double tau_l) {
  const Index q = d.q();
  Vector g = Vector::Zero(theta.size());
  for (Index i = 0; i < d.n(); ++i) {
    if (!d.observed(i, j)) continue;
    double z = 0.0;
    for (Index c = 0; c < q; ++c) z += d.x(i, c) * theta(c);
    for (Index c = 0; c < m.cols(); ++c) z += m(i, c) * theta(q + c);
    const double r = d.y(i, j) - naive_logistic(z);
    for (Index c = 0; c < q; ++c) g(c) += r * d.x(i, c);
    for (Index c = 0; c < m.cols(); ++c) g(q + c) += r * m(i, c);
  }
  for (Index c = 0; c < q; ++c) g(c) -= theta(c) / (tau_b * tau_b);
  for (Index c = 0; c < m.cols(); ++c) g(q + c) -= theta(q + c) / (tau_l * tau_l);
  return g;
}

FitOptions tight_options() {
  FitOptions opts;
  opts.inner_tol = 1e-10;
  opts.max_inner = 2000;
  return opts;
}

}  // namespace

TEST_CASE("outcome objective derivatives match central differences") {
  const Simulation sim = small_problem(40, 10, 2, 2, 1);
  Rng rng(2);
  int checked = 0;
  for (int t = 0; t < 50; ++t) {
    const Index j = static_cast<Index>(rng.below(10));
    const Vector theta = 2.0 * rng.normal_matrix(4, 1);
    const Matrix m = rng.normal_matrix(40, 2);
    const double tb = 0.5 + rng.uniform(), tl = 0.5 + 2 * rng.uniform();
    auto value = [&](const Vector& th) {
      return outcome_objective(j, th, m, sim.data, tb, tl, Link{}, false).value;
    };
    auto grad = [&](const Vector& th) {
      return outcome_objective(j, th, m, sim.data, tb, tl, Link{}).gradient;
    };
    const LocalObjective f = outcome_objective(j, theta, m, sim.data, tb, tl, Link{});
    CHECK(f.value == doctest::Approx(oracle_outcome(j, theta, m, sim.data, tb, tl)).epsilon(1e-12));
    CHECK(max_rel_diff(f.gradient, fd_gradient(value, theta)) < 1e-4);
    CHECK(max_rel_diff(f.hessian, fd_hessian(grad, theta)) < 1e-4);
    ++checked;
  }
  CHECK(checked == 50);
}

TEST_CASE("probit outcome objective derivatives match central differences") {
  const Simulation sim = small_problem(30, 5, 1, 2, 3);
  Rng rng(4);
  const Link probit(LinkKind::Probit);
  for (int t = 0; t < 10; ++t) {
    const Vector theta = rng.normal_matrix(3, 1);
    const Matrix m = rng.normal_matrix(30, 1);
    auto value = [&](const Vector& th) {
      return outcome_objective(1, th, m, sim.data, 1.0, 1.0, probit, false).value;
    };
    auto grad = [&](const Vector& th) {
      return outcome_objective(1, th, m, sim.data, 1.0, 1.0, probit).gradient;
    };
    const LocalObjective f = outcome_objective(1, theta, m, sim.data, 1.0, 1.0, probit);
    CHECK(max_rel_diff(f.gradient, fd_gradient(value, theta)) < 1e-4);
    CHECK(max_rel_diff(f.hessian, fd_hessian(grad, theta)) < 1e-4);
  }
}

TEST_CASE("factor objective derivatives match central differences") {
  const Simulation sim = small_problem(10, 30, 3, 2, 5);
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const Index i = static_cast<Index>(rng.below(10));
    const Vector eta = rng.normal_matrix(3, 1);
    const Matrix lambda = rng.normal_matrix(30, 3);
    const Matrix b = rng.normal_matrix(30, 2);
    auto value = [&](const Vector& e) {
      return factor_objective(i, e, lambda, b, sim.data, Link{}, false).value;
    };
    auto grad = [&](const Vector& e) {
      return factor_objective(i, e, lambda, b, sim.data, Link{}).gradient;
    };
    const LocalObjective f = factor_objective(i, eta, lambda, b, sim.data, Link{});
    CHECK(max_rel_diff(f.gradient, fd_gradient(value, eta)) < 1e-4);
    CHECK(max_rel_diff(f.hessian, fd_hessian(grad, eta)) < 1e-4);
  }
}

TEST_CASE("fully masked outcome goes to the prior mode") {
  Simulation sim = small_problem(30, 6, 2, 2, 7);
  Mask mask = Mask::Constant(30, 6, false);
  mask.col(2).setConstant(true);
  sim.data.mask = mask;
  FactorState state{sim.truth.m.cwiseMax(-1).cwiseMin(1), Matrix::Constant(6, 2, 1.5),
                    Matrix::Constant(6, 2, -2.0)};
  const PriorConfig prior = prior_for(sim.data, 2);
  const OutcomeUpdate loose = update_outcome_params(2, state, sim.data, prior, FitOptions{});
  CHECK(loose.lambda.norm() + loose.beta.norm() < 5e-3);
  const OutcomeUpdate tight = update_outcome_params(2, state, sim.data, prior, tight_options());
  CHECK(tight.lambda.norm() + tight.beta.norm() < 1e-9);
}

TEST_CASE("balanced column has a near-zero intercept") {
  const Index n = 60;
  Matrix x(n, 2);
  Matrix y(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double t = -1.0 + 2.0 * (static_cast<double>(i) + 0.5) / n;
    x(i, 0) = 1.0;
    x(i, 1) = t;
    y(i, 0) = t > 0 ? 1.0 : 0.0;
  }
  const Dataset d = make_dataset(y, x);
  FactorState state{Matrix::Zero(n, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 2)};
  PriorConfig prior = prior_for(d, 1, 2.0);
  const OutcomeUpdate u = update_outcome_params(0, state, d, prior, tight_options());
  CHECK(std::abs(u.beta(0)) < 0.1);

  auto f = [&](const Vector& th) { return oracle_outcome(0, th, state.m, d, 2.0, 2.0); };
  auto g = [&](const Vector& th) { return oracle_outcome_grad(0, th, state.m, d, 2.0, 2.0); };
  const Vector ref = gradient_ascent(f, g, Vector::Zero(3));
  CHECK(std::abs(u.beta(0) - ref(0)) < 1e-4);
  CHECK(std::abs(u.beta(1) - ref(1)) < 1e-4);
}

TEST_CASE("outcome update matches a generic optimizer on an interior optimum") {
  const Simulation sim = small_problem(50, 3, 1, 1, 8);
  Rng rng(9);
  FactorState state{rng.normal_matrix(50, 1).cwiseMax(-2).cwiseMin(2), Matrix::Zero(3, 1),
                    Matrix::Zero(3, 1)};
  const PriorConfig prior = prior_for(sim.data, 1, 1.3);
  for (Index j = 0; j < 3; ++j) {
    const OutcomeUpdate u = update_outcome_params(j, state, sim.data, prior, tight_options());
    auto f = [&](const Vector& th) { return oracle_outcome(j, th, state.m, sim.data, 1.3, 1.3); };
    auto g = [&](const Vector& th) { return oracle_outcome_grad(j, th, state.m, sim.data, 1.3, 1.3); };
    const Vector ref = gradient_ascent(f, g, Vector::Zero(2));
    Vector got(2);
    got << u.beta(0), u.lambda(0);
    CHECK((got - ref).norm() <= 1e-4);
  }
}

TEST_CASE("outcome update respects the boxes") {
  const Simulation sim = small_problem(80, 4, 1, 2, 10, 16.0);
  FactorState state{sim.truth.m.cwiseMax(-2).cwiseMin(2), Matrix::Zero(4, 1), Matrix::Zero(4, 2)};
  PriorConfig prior = prior_for(sim.data, 1, 20.0);
  prior.c_lambda = 0.05;
  prior.c_b = 0.05;
  for (Index j = 0; j < 4; ++j) {
    const OutcomeUpdate u = update_outcome_params(j, state, sim.data, prior, FitOptions{});
    CHECK(u.lambda.cwiseAbs().maxCoeff() <= 0.05);
    CHECK(u.beta.cwiseAbs().maxCoeff() <= 0.05);
  }
}

TEST_CASE("factor update: masked row and zero loadings give the prior mode") {
  Simulation sim = small_problem(12, 20, 2, 2, 11);
  Mask mask = Mask::Constant(12, 20, false);
  mask.row(4).setConstant(true);
  sim.data.mask = mask;
  FactorState state{Matrix::Constant(12, 2, 1.0), sim.truth.lambda, sim.truth.b};
  const PriorConfig prior = prior_for(sim.data, 2);
  CHECK(update_factor(4, state, sim.data, prior, FitOptions{}).eta.norm() < 1e-12);

  state.lambda.setZero();
  for (Index i = 0; i < 12; ++i)
    CHECK(update_factor(i, state, sim.data, prior, FitOptions{}).eta.norm() < 1e-12);
}

TEST_CASE("factor update matches a generic optimizer") {
  const Simulation sim = small_problem(5, 60, 2, 2, 12);
  FactorState state{Matrix::Zero(5, 2), 0.5 * sim.truth.lambda, sim.truth.b};
  const PriorConfig prior = prior_for(sim.data, 2);
  for (Index i = 0; i < 5; ++i) {
    const Vector eta = update_factor(i, state, sim.data, prior, tight_options()).eta;
    auto f = [&](const Vector& e) {
      double total = -0.5 * e.squaredNorm();
      for (Index j = 0; j < sim.data.p(); ++j) {
        const double z = sim.data.x.row(i).dot(state.b.row(j)) + state.lambda.row(j).dot(e);
        total += naive_bernoulli_logit(sim.data.y(i, j), z);
      }
      return total;
    };
    auto g = [&](const Vector& e) {
      Vector out = -e;
      for (Index j = 0; j < sim.data.p(); ++j) {
        const double z = sim.data.x.row(i).dot(state.b.row(j)) + state.lambda.row(j).dot(e);
        out += (sim.data.y(i, j) - naive_logistic(z)) * state.lambda.row(j).transpose();
      }
      return out;
    };
    const Vector ref = gradient_ascent(f, g, Vector::Zero(2));
    REQUIRE(ref.cwiseAbs().maxCoeff() < factor_bound(2, 5));
    CHECK((eta - ref).norm() <= 1e-4);
  }
}

TEST_CASE("update index errors") {
  const Simulation sim = small_problem(10, 5, 1, 2, 13);
  FactorState state{Matrix::Zero(10, 1), Matrix::Zero(5, 1), Matrix::Zero(5, 2)};
  const PriorConfig prior = prior_for(sim.data, 1);
  CHECK_THROWS_AS(update_outcome_params(5, state, sim.data, prior, FitOptions{}), std::out_of_range);
  CHECK_THROWS_AS(update_outcome_params(-1, state, sim.data, prior, FitOptions{}), std::out_of_range);
  CHECK_THROWS_AS(update_factor(10, state, sim.data, prior, FitOptions{}), std::out_of_range);
}

namespace {

struct Fitted {
  Simulation sim;
  InitResult init;
  PriorConfig prior;
  MapResult map;
};

Fitted fit_small(Index n, Index p, int k, std::uint64_t seed, const FitOptions& opts = {}) {
  Fitted f{small_problem(n, p, k, 2, seed), {}, {}, {}};
  f.init = svd_initialize(f.sim.data, k, Link{});
  f.prior = prior_for(f.sim.data, k);
  f.prior.tau_lambda = f.init.tau_lambda;
  f.prior.tau_b = f.init.tau_b;
  f.map = map_fit(f.sim.data, f.prior, opts, f.init);
  return f;
}

}  // namespace

TEST_CASE("map_fit trace is monotone and the state stays feasible") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Fitted f = fit_small(60 + 10 * seed, 30 + 5 * seed, 2, seed);
    const auto& lp = f.map.trace.log_posterior;
    REQUIRE(lp.size() >= 2);
    for (std::size_t t = 1; t < lp.size(); ++t) CHECK(lp[t] >= lp[t - 1] - 1e-8);
    CHECK(is_feasible(f.map.state, f.prior));
    CHECK(f.map.trace.outcome_newton_steps.size() == lp.size() - 1);
    CHECK(lp.back() == doctest::Approx(log_joint_posterior(f.map.state, f.sim.data, f.prior, Link{})));
  }
}

TEST_CASE("map_fit reaches an interior KKT point") {
  FitOptions opts;
  opts.outer_tol = 1e-12;
  opts.inner_tol = 1e-9;
  opts.max_outer = 500;
  const Fitted f = fit_small(100, 50, 2, 21, opts);
  const FactorState& s = f.map.state;
  const Dataset& d = f.sim.data;
  auto objective = [&](const FactorState& st) { return log_joint_posterior(st, d, f.prior, Link{}); };
  const double h = 1e-5;
  Rng rng(22);
  const double mb = factor_bound(2, d.n());
  double worst = 0.0;
  for (int t = 0; t < 60; ++t) {
    FactorState plus = s, minus = s;
    double* entry_p;
    double* entry_m;
    double value, bound;
    switch (t % 3) {
      case 0: {
        const Index i = static_cast<Index>(rng.below(100)), c = static_cast<Index>(rng.below(2));
        entry_p = &plus.m(i, c), entry_m = &minus.m(i, c), value = s.m(i, c), bound = mb;
        break;
      }
      case 1: {
        const Index j = static_cast<Index>(rng.below(50)), c = static_cast<Index>(rng.below(2));
        entry_p = &plus.lambda(j, c), entry_m = &minus.lambda(j, c), value = s.lambda(j, c);
        bound = f.prior.c_lambda;
        break;
      }
      default: {
        const Index j = static_cast<Index>(rng.below(50)), c = static_cast<Index>(rng.below(2));
        entry_p = &plus.b(j, c), entry_m = &minus.b(j, c), value = s.b(j, c), bound = f.prior.c_b;
        break;
      }
    }
    if (std::abs(value) >= bound - 1e-6) continue;
    *entry_p += h;
    *entry_m -= h;
    worst = std::max(worst, std::abs((objective(plus) - objective(minus)) / (2 * h)));
  }
  CHECK(worst <= 1e-2);
}

TEST_CASE("map_fit is deterministic and independent of the thread count") {
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const Fitted a = fit_small(70, 40, 2, 31);
  omp_set_num_threads(4);
  const Fitted b = fit_small(70, 40, 2, 31);
  omp_set_num_threads(saved);
  CHECK(a.map.state.m == b.map.state.m);
  CHECK(a.map.state.lambda == b.map.state.lambda);
  CHECK(a.map.trace.log_posterior == b.map.trace.log_posterior);
}

TEST_CASE("map_fit rejects infeasible starts and bad options") {
  Fitted f = fit_small(40, 20, 1, 41);
  InitResult bad = f.init;
  bad.state.lambda(0, 0) = 50.0;
  CHECK_THROWS_AS(map_fit(f.sim.data, f.prior, FitOptions{}, bad), std::invalid_argument);
  FitOptions opts;
  opts.step_factor = 0.0;
  CHECK_THROWS_AS(map_fit(f.sim.data, f.prior, opts, f.init), std::invalid_argument);
}

TEST_CASE("postprocess identities") {
  const Fitted f = fit_small(90, 40, 2, 51);
  const Matrix& x = f.sim.data.x;
  const FactorState t = postprocess(f.map.state, x);
  const double n = 90.0;
  const Matrix before = linear_predictor(f.map.state, x);
  CHECK((linear_predictor(t, x) - before).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((t.m.transpose() * t.m - n * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-6 * n);
  CHECK((t.m.transpose() * x).cwiseAbs().maxCoeff() <= 1e-6 * n);

  const FactorState twice = postprocess(t, x);
  CHECK((linear_predictor(twice, x) - linear_predictor(t, x)).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((twice.b - t.b).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((twice.m.transpose() * twice.m - t.m.transpose() * t.m).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("postprocess rejects rank-deficient factors") {
  Matrix x(6, 2);
  x.col(0).setOnes();
  x.col(1) << 1, 2, 3, 4, 5, 6;
  FactorState s{Matrix::Zero(6, 2), Matrix::Ones(3, 2), Matrix::Zero(3, 2)};
  s.m.col(0) = x.col(1);  // lies in the column space of X
  s.m.col(1) << 1, -1, 0, 2, 0, 1;
  CHECK_THROWS_AS(postprocess(s, x), NumericalError);
}
