#include "flair/pipeline.hpp"

#include <chrono>

namespace flair {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

PipelineResult fit_pipeline(const Dataset& data, const PipelineOptions& options) {
  data.validate();
  options.fit.validate();
  PipelineResult out;
  const auto start = Clock::now();
  const Link& link = options.fit.link;

  auto t0 = Clock::now();
  out.k = options.k;
  if (options.auto_k) {
    out.selection = select_k(data, options.k_max, link, options.init);
    out.k = out.selection->k;
  }
  out.timings.select_k = elapsed(t0);

  t0 = Clock::now();
  out.init = svd_initialize(data, out.k, link, options.init);
  out.timings.init = elapsed(t0);

  out.prior.c_lambda = options.init.c_lambda;
  out.prior.c_b = options.init.c_b;
  out.prior.k = out.k;
  out.prior.tau_lambda = out.init.tau_lambda;
  out.prior.tau_b = out.init.tau_b;

  t0 = Clock::now();
  MapResult map = map_fit(data, out.prior, options.fit, out.init);
  out.map_state = std::move(map.state);
  out.trace = std::move(map.trace);
  out.timings.map = elapsed(t0);

  t0 = Clock::now();
  out.tilde = postprocess(out.map_state, data.x);
  const double rho = calibrate_rho(out.tilde, data, link, options.rho);
  out.posterior = build_posterior(out.tilde, data, out.prior, link, rho);
  out.timings.posterior = elapsed(t0);
  out.timings.total = elapsed(start);
  return out;
}

}  // namespace flair
