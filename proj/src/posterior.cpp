#include "flair/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "parallel.hpp"

namespace flair {

namespace {

// Linear-interpolation quantile of an unsorted sample; reorders `v`.
double quantile(std::vector<double>& v, double prob) {
  const double pos = prob * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (frac == 0.0 || lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + frac * (b - a);
}

std::vector<Index> all_rows(Index p) {
  std::vector<Index> rows(static_cast<std::size_t>(p));
  std::iota(rows.begin(), rows.end(), Index{0});
  return rows;
}

// theta draws for one outcome, n_mc x (q + k).
Matrix draw_theta(const GaussianPosterior& post, Index j, std::size_t n_mc, const Rng& rng) {
  Rng stream = rng.substream(static_cast<std::uint64_t>(j));
  const Index d = post.q() + post.k();
  Vector mean(d);
  mean.head(post.q()) = post.b.row(j).transpose();
  mean.tail(post.k()) = post.lambda.row(j).transpose();
  const Matrix& chol = post.v_chol[static_cast<std::size_t>(j)];
  Matrix out(static_cast<Index>(n_mc), d);
  Vector eps(d);
  for (Index s = 0; s < static_cast<Index>(n_mc); ++s) {
    for (Index c = 0; c < d; ++c) eps(c) = stream.normal();
    out.row(s) = (mean + post.rho * (chol * eps)).transpose();
  }
  return out;
}

}  // namespace

GaussianPosterior GaussianPosterior::with_rho(double new_rho) const {
  GaussianPosterior copy = *this;
  copy.rho = new_rho;
  return copy;
}

Matrix compute_vj(Index j, const FactorState& state, const Dataset& data,
                  const PriorConfig& prior, const Link& link) {
  const Index q = data.q();
  const Index k = state.k();
  const Index d = q + k;
  Matrix precision = Matrix::Zero(d, d);
  Vector xt(d);
  for (Index i = 0; i < data.n(); ++i) {
    if (!data.observed(i, j)) continue;
    xt.head(q) = data.x.row(i).transpose();
    if (k > 0) xt.tail(k) = state.m.row(i).transpose();
    const double z = xt.head(q).dot(state.b.row(j)) +
                     (k > 0 ? xt.tail(k).dot(state.lambda.row(j)) : 0.0);
    const double w = -link.loglik(data.y(i, j), z).d2;
    precision.selfadjointView<Eigen::Lower>().rankUpdate(xt, w);
  }
  precision.diagonal().head(q).array() += 1.0 / (prior.tau_b(j) * prior.tau_b(j));
  precision.diagonal().tail(k).array() +=
      1.0 / (prior.tau_lambda(j) * prior.tau_lambda(j));
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success)
    throw NumericalError("compute_vj: precision for outcome " + std::to_string(j) +
                         " is not positive definite");
  return llt.solve(Matrix::Identity(d, d));
}

Vector residual_scales(const FactorState& state, const Dataset& data, const Link& link) {
  const Matrix z = linear_predictor(state, data.x);
  Vector out(data.p());
  for (Index j = 0; j < data.p(); ++j) {
    double info = 0.0;
    Index count = 0;
    for (Index i = 0; i < data.n(); ++i) {
      if (!data.observed(i, j)) continue;
      const double h = link.eval(z(i, j));
      info += h * (1.0 - h);
      ++count;
    }
    out(j) = count == 0 ? std::numeric_limits<double>::infinity()
                        : kLogisticProbitScale * kLogisticProbitScale +
                              static_cast<double>(count) / info;
  }
  return out;
}

double self_inflation(const Eigen::Ref<const Vector>& lambda_j, double sigma2_j) {
  const double a = lambda_j.squaredNorm();
  if (a == 0.0 || std::isinf(sigma2_j)) return 1.0;
  return std::sqrt(1.0 + a / (2.0 * sigma2_j));
}

double pair_inflation(const Eigen::Ref<const Vector>& lambda_j,
                      const Eigen::Ref<const Vector>& lambda_jp, double sigma2_j,
                      double sigma2_jp) {
  const double a = lambda_j.squaredNorm();
  const double c = lambda_jp.squaredNorm();
  const double g = lambda_j.dot(lambda_jp);
  const double num = a * c + g * g;
  const double den = sigma2_jp * a + sigma2_j * c;
  if (num == 0.0 || std::isinf(den) || den == 0.0) return 1.0;
  return std::sqrt(1.0 + num / den);
}

double calibrate_rho(const FactorState& state, const Dataset& data, const Link& link,
                     const RhoOptions& options) {
  const Vector sigma2 = residual_scales(state, data, link);
  const Matrix& lam = state.lambda;
  const Index p = lam.rows();
  const Vector sq = lam.rowwise().squaredNorm();

  double rho = 1.0;
  for (Index j = 0; j < p; ++j) rho = std::max(rho, self_inflation(lam.row(j).transpose(), sigma2(j)));

  auto pair_term = [&](Index j, Index jp, double g) {
    const double num = sq(j) * sq(jp) + g * g;
    const double den = sigma2(jp) * sq(j) + sigma2(j) * sq(jp);
    if (num == 0.0 || std::isinf(den) || den == 0.0) return 1.0;
    return std::sqrt(1.0 + num / den);
  };

  if (options.max_pairs > 0 && p > 1) {
    Rng rng(options.seed);
    for (std::uint64_t t = 0; t < options.max_pairs; ++t) {
      const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)));
      auto jp = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p - 1)));
      if (jp >= j) ++jp;
      rho = std::max(rho, pair_term(j, jp, lam.row(j).dot(lam.row(jp))));
    }
    return rho;
  }

  // b is symmetric in (j, j'), so only j' > j is scanned.
  Vector row_max = Vector::Ones(p);
  detail::parallel_for(p, [&](Index j) {
    double best = 1.0;
    if (j + 1 < p) {
      const Vector gram = lam.bottomRows(p - j - 1) * lam.row(j).transpose();
      for (Index t = 0; t < gram.size(); ++t)
        best = std::max(best, pair_term(j, j + 1 + t, gram(t)));
    }
    row_max(j) = best;
  });
  return std::max(rho, row_max.maxCoeff());
}

GaussianPosterior build_posterior(const FactorState& state, const Dataset& data,
                                  const PriorConfig& prior, const Link& link, double rho) {
  if (!(rho >= 1.0)) throw std::invalid_argument("build_posterior: rho must be >= 1");
  GaussianPosterior post;
  post.lambda = state.lambda;
  post.b = state.b;
  post.m = state.m;
  post.x = data.x;
  post.rho = rho;
  post.link = link;
  const auto p = static_cast<std::size_t>(data.p());
  post.v.resize(p);
  post.v_chol.resize(p);
  detail::parallel_for(data.p(), [&](Index j) {
    const auto idx = static_cast<std::size_t>(j);
    post.v[idx] = compute_vj(j, state, data, prior, link);
    Eigen::LLT<Matrix> llt(post.v[idx]);
    if (llt.info() != Eigen::Success)
      throw NumericalError("build_posterior: V_" + std::to_string(j) + " is not positive definite");
    post.v_chol[idx] = llt.matrixL();
  });
  return post;
}

PosteriorSamples sample_posterior(const GaussianPosterior& post, std::size_t n_mc,
                                  const Rng& rng) {
  if (n_mc < 1) throw std::invalid_argument("sample_posterior: N_MC must be >= 1");
  PosteriorSamples out;
  out.lambda.assign(n_mc, Matrix(post.p(), post.k()));
  out.b.assign(n_mc, Matrix(post.p(), post.q()));
  detail::parallel_for(post.p(), [&](Index j) {
    const Matrix draws = draw_theta(post, j, n_mc, rng);
    for (std::size_t s = 0; s < n_mc; ++s) {
      out.b[s].row(j) = draws.row(static_cast<Index>(s)).head(post.q());
      out.lambda[s].row(j) = draws.row(static_cast<Index>(s)).tail(post.k());
    }
  });
  return out;
}

std::vector<Matrix> sample_loadings(const GaussianPosterior& post,
                                    const std::vector<Index>& rows, std::size_t n_mc,
                                    const Rng& rng) {
  std::vector<Matrix> out(rows.size());
  detail::parallel_for(static_cast<Index>(rows.size()), [&](Index a) {
    const Index j = rows[static_cast<std::size_t>(a)];
    if (j < 0 || j >= post.p()) throw std::out_of_range("sample_loadings: bad outcome index");
    out[static_cast<std::size_t>(a)] = draw_theta(post, j, n_mc, rng).rightCols(post.k());
  });
  return out;
}

Vector loading_variance_traces(const GaussianPosterior& post) {
  Vector out(post.p());
  for (Index j = 0; j < post.p(); ++j)
    out(j) = post.rho * post.rho *
             post.v[static_cast<std::size_t>(j)].bottomRightCorner(post.k(), post.k()).trace();
  return out;
}

PosteriorMoments posterior_mean_sigma(const GaussianPosterior& post) {
  PosteriorMoments out;
  out.sigma = post.lambda * post.lambda.transpose();
  out.sigma.diagonal() += loading_variance_traces(post);
  out.b = post.b;
  return out;
}

IntervalSet credible_intervals(const GaussianPosterior& post, IntervalTarget target,
                               double alpha, std::size_t n_mc, const Rng& rng,
                               const std::vector<Index>& rows) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("credible_intervals: alpha must lie in (0,1)");
  IntervalSet out;
  out.target = target;
  out.alpha = alpha;

  if (target == IntervalTarget::B) {
    const double zq = normal_quantile(1.0 - alpha / 2.0);
    out.lower.resize(post.p(), post.q());
    out.upper.resize(post.p(), post.q());
    for (Index j = 0; j < post.p(); ++j) {
      const Matrix& v = post.v[static_cast<std::size_t>(j)];
      for (Index c = 0; c < post.q(); ++c) {
        const double half = zq * post.rho * std::sqrt(v(c, c));
        out.lower(j, c) = post.b(j, c) - half;
        out.upper(j, c) = post.b(j, c) + half;
      }
    }
    return out;
  }

  if (static_cast<double>(n_mc) * alpha / 2.0 < 5.0)
    throw std::invalid_argument("credible_intervals: N_MC * alpha / 2 must be >= 5");
  out.rows = target == IntervalTarget::LambdaOuter ? all_rows(post.p()) : rows;
  const std::vector<Matrix> draws = sample_loadings(post, out.rows, n_mc, rng);
  const auto r = static_cast<Index>(out.rows.size());
  out.lower.resize(r, r);
  out.upper.resize(r, r);
  detail::parallel_for(r, [&](Index a) {
    std::vector<double> vals(n_mc);
    const Matrix& da = draws[static_cast<std::size_t>(a)];
    for (Index b = a; b < r; ++b) {
      const Matrix& db = draws[static_cast<std::size_t>(b)];
      for (std::size_t s = 0; s < n_mc; ++s)
        vals[s] = da.row(static_cast<Index>(s)).dot(db.row(static_cast<Index>(s)));
      const double lo = quantile(vals, alpha / 2.0);
      const double hi = quantile(vals, 1.0 - alpha / 2.0);
      out.lower(a, b) = lo;
      out.upper(a, b) = hi;
      out.lower(b, a) = lo;
      out.upper(b, a) = hi;
    }
  });
  return out;
}

Matrix predict_probabilities(const GaussianPosterior& post, const std::vector<Index>& rows,
                             const std::vector<Index>& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const Index i = rows[a];
    if (i < 0 || i >= post.x.rows()) throw std::out_of_range("predict_probabilities: bad row");
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const Index j = cols[c];
      if (j < 0 || j >= post.p()) throw std::out_of_range("predict_probabilities: bad column");
      double z = post.x.row(i).dot(post.b.row(j));
      if (post.k() > 0) z += post.m.row(i).dot(post.lambda.row(j));
      out(static_cast<Index>(a), static_cast<Index>(c)) = post.link.eval(z);
    }
  }
  return out;
}

}  // namespace flair
