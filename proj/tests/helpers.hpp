#ifndef FLAIR_TESTS_HELPERS_HPP
#define FLAIR_TESTS_HELPERS_HPP

#include <cmath>
#include <functional>

#include "flair/model.hpp"
#include "flair/simeval.hpp"

namespace flair::testing {

inline double naive_logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + e^z) without overflow, written independently of the library.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double naive_bernoulli_logit(double y, double z) { return y * z - softplus(z); }

// Small dataset with a dense design: intercept plus q-1 standard normals.
inline Simulation small_problem(Index n, Index p, int k, int q, std::uint64_t seed,
                                double sigma2 = 1.0) {
  SimConfig cfg = SimConfig::dense(n, p, seed);
  cfg.k = k;
  cfg.q = q;
  cfg.sigma2 = sigma2;
  Rng rng(seed);
  return simulate_dataset(cfg, rng);
}

inline PriorConfig prior_for(const Dataset& data, int k, double tau = 1.0) {
  PriorConfig prior;
  prior.k = k;
  prior.tau_lambda = Vector::Constant(data.p(), tau);
  prior.tau_b = Vector::Constant(data.p(), tau);
  return prior;
}

inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h = 1e-5) {
  Vector g(x.size());
  for (Index a = 0; a < x.size(); ++a) {
    Vector xp = x, xm = x;
    xp(a) += h;
    xm(a) -= h;
    g(a) = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

inline Matrix fd_hessian(const std::function<Vector(const Vector&)>& grad, const Vector& x,
                         double h = 1e-5) {
  Matrix hess(x.size(), x.size());
  for (Index a = 0; a < x.size(); ++a) {
    Vector xp = x, xm = x;
    xp(a) += h;
    xm(a) -= h;
    hess.col(a) = (grad(xp) - grad(xm)) / (2 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

// Plain gradient ascent with backtracking on a concave objective; an oracle
// that shares no code with the Newton solver.
inline Vector gradient_ascent(const std::function<double(const Vector&)>& f,
                              const std::function<Vector(const Vector&)>& grad, Vector x,
                              int iterations = 20000, double tol = 1e-11) {
  double step = 1.0;
  double fx = f(x);
  for (int it = 0; it < iterations; ++it) {
    const Vector g = grad(x);
    if (g.norm() < tol) break;
    step = std::min(step * 2.0, 1.0);
    while (step > 1e-16) {
      const Vector cand = x + step * g;
      const double fc = f(cand);
      if (fc >= fx + 0.25 * step * g.squaredNorm()) {
        x = cand;
        fx = fc;
        break;
      }
      step *= 0.5;
    }
  }
  return x;
}

}  // namespace flair::testing

#endif  // FLAIR_TESTS_HELPERS_HPP
