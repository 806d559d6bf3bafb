#include "flair/cli.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "flair/init.hpp"
#include "flair/io.hpp"
#include "flair/pipeline.hpp"
#include "flair/posterior.hpp"
#include "flair/simeval.hpp"
#include "flair/version.hpp"

namespace flair::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json to_json(const FitReport& r) {
  json out = json::object();
  for (const ReportField& f : report_fields()) out[f.name] = number(r.*f.member);
  return out;
}

// Fully resolved option values of a subcommand, for provenance.
json resolved_config(const CLI::App& sub) {
  json cfg = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      value = res.empty() ? "true" : res.back();
    } else {
      value = opt->get_default_str();
    }
    cfg[names.front()] = value;
  }
  return cfg;
}

json header(const std::string& command, const CLI::App& sub) {
  return {{"schema", kReportSchema},
          {"version", kVersion},
          {"command", command},
          {"config", resolved_config(sub)}};
}

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

io::MatrixFormat parse_format(const std::string& s) {
  if (s == "csv") return io::MatrixFormat::Csv;
  if (s == "binary") return io::MatrixFormat::Binary;
  throw UsageError("unknown --format '" + s + "' (expected csv or binary)");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw io::FileError("cannot create output directory " + dir.string());
}

void set_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

struct DataArgs {
  std::string y;
  std::string x;
  std::string mask;

  void attach(CLI::App& sub, bool y_required) {
    auto* opt = sub.add_option("--y", y, "outcome matrix (CSV or .bin)");
    if (y_required) opt->required();
    sub.add_option("--x", x, "design matrix with intercept column (default: intercept only)");
    sub.add_option("--mask", mask, "holdout mask, 1 = held out");
  }
};

Dataset load_dataset(const DataArgs& args) {
  io::LabeledMatrix ym;
  if (fs::path(args.y).extension() == ".bin") {
    ym.values = io::read_matrix_file(args.y);
  } else {
    if (!fs::exists(args.y)) throw io::FileError("missing file " + args.y);
    ym = io::read_csv(args.y);
  }
  Matrix x = args.x.empty() ? intercept_design(ym.values.rows()) : io::read_matrix_file(args.x);
  std::optional<Mask> mask;
  if (!args.mask.empty()) {
    const Matrix mm = io::read_matrix_file(args.mask);
    if (mm.rows() != ym.values.rows() || mm.cols() != ym.values.cols())
      throw UsageError("mask shape differs from Y");
    mask = (mm.array() != 0.0);
  }
  std::vector<std::string> names = ym.header;
  if (static_cast<Index>(names.size()) != ym.values.cols())
    names = io::numbered("y", ym.values.cols());
  return make_dataset(std::move(ym.values), std::move(x), std::move(mask), std::move(names));
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  SimConfig cfg{};
  std::string out;
  std::string format = "csv";
  double holdout = 0.0;
  bool unstratified = false;
  int threads = 0;
};

void attach_sim_config(CLI::App& sub, SimConfig& cfg) {
  sub.add_option("--n", cfg.n, "samples");
  sub.add_option("--p", cfg.p, "outcomes");
  sub.add_option("--k", cfg.k, "latent dimension");
  sub.add_option("--q", cfg.q, "covariates including the intercept");
  sub.add_option("--sigma2", cfg.sigma2, "slab variance");
  sub.add_option("--spike-prob", cfg.spike_prob, "point-mass-at-zero probability");
  sub.add_option("--bound", cfg.bound, "truncation bound for loadings and coefficients");
}

int cmd_simulate(const SimulateArgs& a, const CLI::App& sub, std::ostream& out) {
  set_threads(a.threads);
  const io::MatrixFormat fmt = parse_format(a.format);
  const fs::path dir(a.out);
  ensure_dir(dir);
  Rng rng(a.cfg.seed);
  Simulation sim = simulate_dataset(a.cfg, rng);
  io::write_matrix(dir, "Y", sim.data.y, sim.data.names, fmt);
  io::write_matrix(dir, "X", sim.data.x, io::numbered("x", sim.data.q()), fmt);
  io::write_matrix(dir, "Lambda0", sim.truth.lambda, io::numbered("l", a.cfg.k), fmt);
  io::write_matrix(dir, "B0", sim.truth.b, io::numbered("b", a.cfg.q), fmt);
  io::write_matrix(dir, "M0", sim.truth.m, io::numbered("m", a.cfg.k), fmt);
  json meta = header("simulate", sub);
  meta["sim_config"] = {{"n", a.cfg.n},           {"p", a.cfg.p},
                        {"k", a.cfg.k},           {"q", a.cfg.q},
                        {"sigma2", a.cfg.sigma2}, {"spike_prob", a.cfg.spike_prob},
                        {"bound", a.cfg.bound},   {"seed", a.cfg.seed}};
  if (a.holdout > 0.0) {
    const Mask mask = make_holdout_mask(sim.data.y, a.holdout, !a.unstratified, rng);
    io::write_matrix(dir, "mask", mask.cast<double>(), sim.data.names, fmt);
    meta["holdout_fraction"] = a.holdout;
  }
  io::write_text(dir / "meta.json", meta.dump(2) + "\n");
  out << "wrote simulation to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- select-k

struct SelectKArgs {
  DataArgs data;
  int k_max = 5;
  std::string link = "logit";
  std::string out;
  int threads = 0;
};

int cmd_select_k(const SelectKArgs& a, const CLI::App& sub, std::ostream& out) {
  set_threads(a.threads);
  if (a.k_max < 1) throw UsageError("--k-max must be >= 1");
  const Dataset data = load_dataset(a.data);
  if (a.k_max + data.q() > std::min(data.n(), data.p()))
    throw UsageError("--k-max plus q exceeds min(n,p)");
  const KSelection sel = select_k(data, a.k_max, Link(parse_link(a.link)));

  out << "k,loglik,jic\n";
  json rows = json::array();
  for (const JicEntry& e : sel.table) {
    out << e.k << "," << format17(e.loglik) << "," << format17(e.jic) << "\n";
    rows.push_back({{"k", e.k}, {"loglik", e.loglik}, {"jic", e.jic}});
  }
  out << "selected," << sel.k << "\n";
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    ensure_dir(dir);
    json doc = header("select-k", sub);
    doc["jic"] = rows;
    doc["selected_k"] = sel.k;
    io::write_text(dir / "select_k.json", doc.dump(2) + "\n");
  }
  return kExitOk;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  DataArgs data;
  int k = 2;
  bool auto_k = false;
  int k_max = 5;
  std::string link = "logit";
  double c_lambda = 10.0;
  double c_b = 10.0;
  FitOptions fit{};
  std::size_t n_mc = 2000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  Index interval_rows = 100;
  Index sigma_max_p = 2000;
  std::uint64_t rho_subsample = 0;
  bool save_samples = false;
  std::string out;
  std::string format = "csv";
  int threads = 0;
};

json trace_json(const MapTrace& t) {
  return {{"log_posterior", t.log_posterior},
          {"outcome_newton_steps", t.outcome_newton_steps},
          {"factor_newton_steps", t.factor_newton_steps},
          {"outer_iterations", t.outer_iterations()},
          {"converged", t.converged},
          {"seconds_outcomes", t.seconds_outcomes},
          {"seconds_factors", t.seconds_factors}};
}

int cmd_fit(const FitArgs& a, const CLI::App& sub, std::ostream& out) {
  set_threads(a.threads);
  const io::MatrixFormat fmt = parse_format(a.format);
  const Dataset data = load_dataset(a.data);
  const Index limit = std::min(data.n(), data.p());
  if (!a.auto_k && (a.k < 1 || a.k + data.q() > limit))
    throw UsageError("infeasible configuration: k + q = " + std::to_string(a.k + data.q()) +
                     " must lie in [q+1, min(n,p) = " + std::to_string(limit) + "]");
  if (a.auto_k && (a.k_max < 1 || a.k_max + data.q() > limit))
    throw UsageError("infeasible configuration: k_max + q exceeds min(n,p)");

  PipelineOptions popts;
  popts.fit = a.fit;
  popts.fit.link = Link(parse_link(a.link));
  popts.fit.seed = a.seed;
  popts.init.c_lambda = a.c_lambda;
  popts.init.c_b = a.c_b;
  popts.init.seed = a.seed ^ 0x5eedULL;
  popts.k = a.k;
  popts.auto_k = a.auto_k;
  popts.k_max = a.k_max;
  popts.rho.max_pairs = a.rho_subsample;
  popts.rho.seed = a.seed;
  const PipelineResult fit = fit_pipeline(data, popts);
  const GaussianPosterior& post = fit.posterior;

  const fs::path dir(a.out);
  ensure_dir(dir);
  const auto kcols = io::numbered("l", post.k());
  io::write_matrix(dir, "Lambda_tilde", post.lambda, kcols, fmt);
  io::write_matrix(dir, "B_tilde", post.b, io::numbered("b", post.q()), fmt);
  io::write_matrix(dir, "M_tilde", post.m, io::numbered("m", post.k()), fmt);
  io::write_matrix(dir, "Sigma_diag", loading_variance_traces(post), {"rho2_trace_V_lambda"}, fmt);
  Matrix tau(data.p(), 2);
  tau.col(0) = fit.prior.tau_lambda;
  tau.col(1) = fit.prior.tau_b;
  io::write_matrix(dir, "tau", tau, {"tau_lambda", "tau_b"}, fmt);
  if (data.p() <= a.sigma_max_p)
    io::write_matrix(dir, "Sigma_tilde", posterior_mean_sigma(post).sigma, data.names, fmt);
  io::write_text(dir / "rho.txt", format17(post.rho) + "\n");

  const Rng rng(a.seed);
  const IntervalSet bi = credible_intervals(post, IntervalTarget::B, a.alpha, a.n_mc, rng);
  io::write_matrix(dir, "B_lower", bi.lower, io::numbered("b", post.q()), fmt);
  io::write_matrix(dir, "B_upper", bi.upper, io::numbered("b", post.q()), fmt);
  const std::vector<Index> rows = random_block(data.p(), a.interval_rows, a.seed ^ 0xb10cULL);
  const IntervalSet li =
      credible_intervals(post, IntervalTarget::Submatrix, a.alpha, a.n_mc, rng, rows);
  std::vector<std::string> block_names;
  Matrix row_ids(static_cast<Index>(rows.size()), 1);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    block_names.push_back(data.names[static_cast<std::size_t>(rows[t])]);
    row_ids(static_cast<Index>(t), 0) = static_cast<double>(rows[t]);
  }
  io::write_matrix(dir, "LambdaOuter_lower", li.lower, block_names, fmt);
  io::write_matrix(dir, "LambdaOuter_upper", li.upper, block_names, fmt);
  io::write_matrix(dir, "LambdaOuter_rows", row_ids, {"outcome_index"}, fmt);

  if (a.save_samples) {
    const PosteriorSamples draws = sample_posterior(post, a.n_mc, rng);
    const Index d = post.q() + post.k();
    Matrix flat(static_cast<Index>(a.n_mc) * post.p(), d);
    for (std::size_t s = 0; s < a.n_mc; ++s)
      for (Index j = 0; j < post.p(); ++j) {
        const Index r = static_cast<Index>(s) * post.p() + j;
        flat.row(r).head(post.q()) = draws.b[s].row(j);
        flat.row(r).tail(post.k()) = draws.lambda[s].row(j);
      }
    io::write_binary(dir / "theta_samples.bin", flat);
  }

  io::write_text(dir / "trace.json", trace_json(fit.trace).dump(2) + "\n");
  json doc = header("fit", sub);
  doc["n"] = data.n();
  doc["p"] = data.p();
  doc["q"] = data.q();
  doc["k"] = fit.k;
  doc["rho"] = post.rho;
  doc["alpha"] = a.alpha;
  doc["n_mc"] = a.n_mc;
  if (fit.selection) {
    json rows_json = json::array();
    for (const JicEntry& e : fit.selection->table)
      rows_json.push_back({{"k", e.k}, {"loglik", e.loglik}, {"jic", e.jic}});
    doc["jic"] = rows_json;
  }
  doc["timings"] = {{"select_k", fit.timings.select_k},
                    {"init", fit.timings.init},
                    {"map", fit.timings.map},
                    {"posterior", fit.timings.posterior},
                    {"total", fit.timings.total}};
  io::write_text(dir / "fit.json", doc.dump(2) + "\n");
  out << "k=" << fit.k << " rho=" << format17(post.rho) << " outer_iterations="
      << fit.trace.outer_iterations() << " seconds=" << fit.timings.total << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string fit_dir;
  std::string truth_dir;
  DataArgs data;
  std::string out;
};

Matrix read_required(const fs::path& dir, const std::string& stem) {
  if (!fs::exists(dir / (stem + ".csv")) && !fs::exists(dir / (stem + ".bin")))
    throw io::FileError("missing file " + (dir / (stem + ".csv")).string());
  return io::read_matrix(dir, stem);
}

bool have(const fs::path& dir, const std::string& stem) {
  return fs::exists(dir / (stem + ".csv")) || fs::exists(dir / (stem + ".bin"));
}

int cmd_evaluate(const EvaluateArgs& a, const CLI::App& sub, std::ostream& out) {
  if (a.truth_dir.empty() && a.data.mask.empty())
    throw UsageError("evaluate needs --truth-dir, --mask, or both");
  const fs::path fit_dir(a.fit_dir);
  const Matrix lambda = read_required(fit_dir, "Lambda_tilde");
  const Matrix b = read_required(fit_dir, "B_tilde");
  FitReport report;

  if (!a.truth_dir.empty()) {
    const fs::path truth(a.truth_dir);
    const Matrix lambda0 = read_required(truth, "Lambda0");
    const Matrix b0 = read_required(truth, "B0");
    if (b0.rows() != b.rows() || b0.cols() != b.cols())
      throw UsageError("B0 shape differs from the fitted B");
    report.rel_err_b = rel_frob_error_b(b, b0);
    Matrix sigma = lambda * lambda.transpose();
    if (have(fit_dir, "Sigma_diag")) sigma.diagonal() += read_required(fit_dir, "Sigma_diag").col(0);
    if (lambda0.rows() != lambda.rows()) throw UsageError("Lambda0 row count differs from p");
    report.rel_err_lambda_outer = rel_frob_error_lambda_outer(sigma, lambda0);

    if (have(fit_dir, "B_lower") && have(fit_dir, "B_upper")) {
      IntervalSet bi;
      bi.lower = read_required(fit_dir, "B_lower");
      bi.upper = read_required(fit_dir, "B_upper");
      report.coverage_b = empirical_coverage(bi, b0);
    }
    if (have(fit_dir, "LambdaOuter_lower") && have(fit_dir, "LambdaOuter_rows")) {
      IntervalSet li;
      li.lower = read_required(fit_dir, "LambdaOuter_lower");
      li.upper = read_required(fit_dir, "LambdaOuter_upper");
      const Matrix ids = read_required(fit_dir, "LambdaOuter_rows");
      Matrix block(ids.rows(), lambda0.cols());
      for (Index t = 0; t < ids.rows(); ++t) block.row(t) = lambda0.row(static_cast<Index>(ids(t, 0)));
      report.coverage_lambda_outer = empirical_coverage(li, block * block.transpose());
    }
  }

  if (!a.data.mask.empty()) {
    if (a.data.y.empty()) throw UsageError("--mask requires --y");
    const Dataset data = load_dataset(a.data);
    PipelineResult shell;
    shell.posterior.lambda = lambda;
    shell.posterior.b = b;
    shell.posterior.m = read_required(fit_dir, "M_tilde");
    shell.posterior.x = data.x;
    if (shell.posterior.m.rows() != data.n() || b.rows() != data.p())
      throw UsageError("fit outputs do not match the supplied data dimensions");
    evaluate_holdout(shell, data, report);
  }

  json doc = header("evaluate", sub);
  doc["report"] = to_json(report);
  const std::string text = doc.dump(2) + "\n";
  if (!a.out.empty()) io::write_text(a.out, text);
  out << text;
  return kExitOk;
}

// ---------------------------------------------------------------- replicate

struct ReplicateArgs {
  SimConfig cfg{};
  int replicates = 1;
  bool auto_k = false;
  int k_max = 5;
  double holdout = 0.0;
  std::size_t n_mc = 2000;
  double alpha = 0.05;
  Index coverage_block = 100;
  std::string out;
  int threads = 0;
};

// One aggregate row, errors x100 and coverage in percent.
std::pair<std::vector<std::string>, std::vector<double>> table_row(const ReplicateArgs& a,
                                                                   const FitReport& m) {
  return {{"n", "p", "k", "q", "replicates", "rel_err_lambda_outer_x100", "rel_err_B_x100",
           "coverage_lambda_outer_pct", "coverage_B_pct", "coverage_lambda_outer_uncorrected_pct",
           "coverage_B_uncorrected_pct", "auc_pct", "k_selected", "seconds_per_fit"},
          {static_cast<double>(a.cfg.n), static_cast<double>(a.cfg.p),
           static_cast<double>(a.cfg.k), static_cast<double>(a.cfg.q),
           static_cast<double>(a.replicates), 100.0 * m.rel_err_lambda_outer,
           100.0 * m.rel_err_b, 100.0 * m.coverage_lambda_outer, 100.0 * m.coverage_b,
           100.0 * m.coverage_lambda_outer_uncorrected, 100.0 * m.coverage_b_uncorrected,
           100.0 * m.auc, m.k_selected, m.seconds_total}};
}

int cmd_replicate(const ReplicateArgs& a, const CLI::App& sub, std::ostream& out) {
  set_threads(a.threads);
  if (a.replicates < 1) throw UsageError("--replicates must be >= 1");
  ReplicationOptions opts;
  opts.pipeline.auto_k = a.auto_k;
  opts.pipeline.k_max = a.k_max;
  opts.holdout_fraction = a.holdout;
  opts.evaluation.n_mc = a.n_mc;
  opts.evaluation.alpha = a.alpha;
  opts.evaluation.coverage_block = a.coverage_block;
  const ReplicationSummary summary = run_replication(a.cfg, a.replicates, opts);

  const fs::path dir(a.out);
  ensure_dir(dir);
  const auto [names, values] = table_row(a, summary.mean);
  Matrix row(1, static_cast<Index>(values.size()));
  for (std::size_t c = 0; c < values.size(); ++c) row(0, static_cast<Index>(c)) = values[c];
  io::write_csv(dir / "replicate.csv", row, names);

  json table = json::object();
  for (std::size_t c = 0; c < names.size(); ++c) table[names[c]] = number(values[c]);
  json reps = json::array();
  for (const FitReport& r : summary.replicates) reps.push_back(to_json(r));
  json doc = header("replicate", sub);
  doc["table"] = json::array({table});
  doc["mean"] = to_json(summary.mean);
  doc["std_error"] = to_json(summary.std_error);
  doc["replicates"] = reps;
  io::write_text(dir / "replicate.json", doc.dump(2) + "\n");

  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << "\n";
  for (std::size_t c = 0; c < values.size(); ++c)
    out << (c ? "," : "") << (std::isfinite(values[c]) ? format17(values[c]) : "NA");
  out << "\n";
  return kExitOk;
}

// Splices `--key=value` pairs from a --config file in front of the user's
// own flags so that command-line values take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
  if (args.size() < 2) return args;
  std::optional<std::string> path;
  for (std::size_t t = 1; t < args.size(); ++t) {
    if (args[t] == "--config" && t + 1 < args.size()) path = args[t + 1];
    if (args[t].rfind("--config=", 0) == 0) path = args[t].substr(9);
  }
  if (!path) return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[1]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::vector<std::string> injected;
  for (const auto& [key, value] : io::read_key_values(*path)) {
    if (key == "config") continue;
    if (sub->get_option_no_throw("--" + key) == nullptr)
      throw UsageError("config key '" + key + "' is not an option of " + args[1]);
    injected.push_back("--" + key + "=" + value);
  }
  std::vector<std::string> out(args.begin(), args.begin() + 2);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

void attach_fit_options(CLI::App& sub, FitOptions& f) {
  sub.add_option("--step-outcome", f.step_outcome, "Newton step size for loadings/coefficients");
  sub.add_option("--step-factor", f.step_factor, "Newton step size for factors");
  sub.add_option("--inner-tol", f.inner_tol, "update-norm stopping threshold");
  sub.add_option("--outer-tol", f.outer_tol, "relative log-posterior increase threshold");
  sub.add_option("--max-inner", f.max_inner, "Newton steps per subproblem");
  sub.add_option("--max-outer", f.max_outer, "alternations");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian multivariate logistic factor regression for binary matrices", "flair"};
  app.option_defaults()->always_capture_default()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::string config_path;

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "draw a synthetic dataset and its truth");
  sim->add_option("--config", config_path, "key=value file");
  attach_sim_config(*sim, sim_args.cfg);
  sim->add_option("--seed", sim_args.cfg.seed, "RNG seed");
  sim->add_option("--out", sim_args.out, "output directory")->required();
  sim->add_option("--format", sim_args.format, "csv or binary");
  sim->add_option("--holdout-fraction", sim_args.holdout, "also write a holdout mask");
  sim->add_flag("--unstratified", sim_args.unstratified, "sample the holdout without stratifying");
  sim->add_option("--threads", sim_args.threads, "worker threads (0 = all)");

  SelectKArgs sk_args;
  CLI::App* sk = app.add_subcommand("select-k", "JIC table and selected latent dimension");
  sk->add_option("--config", config_path, "key=value file");
  sk_args.data.attach(*sk, true);
  sk->add_option("--k-max", sk_args.k_max, "largest k considered");
  sk->add_option("--link", sk_args.link, "logit or probit");
  sk->add_option("--out", sk_args.out, "directory for select_k.json");
  sk->add_option("--threads", sk_args.threads, "worker threads (0 = all)");

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "MAP fit, posterior approximation and intervals");
  fit->add_option("--config", config_path, "key=value file");
  fit_args.data.attach(*fit, true);
  fit->add_option("--k", fit_args.k, "latent dimension");
  fit->add_flag("--auto-k", fit_args.auto_k, "choose k by JIC");
  fit->add_option("--k-max", fit_args.k_max, "largest k for --auto-k");
  fit->add_option("--link", fit_args.link, "logit or probit");
  fit->add_option("--c-lambda", fit_args.c_lambda, "loading box bound");
  fit->add_option("--c-b", fit_args.c_b, "coefficient box bound");
  attach_fit_options(*fit, fit_args.fit);
  fit->add_option("--n-mc", fit_args.n_mc, "Monte Carlo draws for Lambda Lambda^T intervals");
  fit->add_option("--alpha", fit_args.alpha, "interval level is 1 - alpha");
  fit->add_option("--seed", fit_args.seed, "RNG seed");
  fit->add_option("--interval-rows", fit_args.interval_rows, "outcomes in the Lambda Lambda^T interval block");
  fit->add_option("--sigma-max-p", fit_args.sigma_max_p, "largest p for which Sigma_tilde is written");
  fit->add_option("--rho-subsample", fit_args.rho_subsample, "subsample pairs for rho (0 = all)");
  fit->add_flag("--save-samples", fit_args.save_samples, "write theta_samples.bin");
  fit->add_option("--out", fit_args.out, "output directory")->required();
  fit->add_option("--format", fit_args.format, "csv or binary");
  fit->add_option("--threads", fit_args.threads, "worker threads (0 = all)");

  EvaluateArgs ev_args;
  CLI::App* ev = app.add_subcommand("evaluate", "score a fit against truth and/or a holdout");
  ev->add_option("--config", config_path, "key=value file");
  ev->add_option("--fit-dir", ev_args.fit_dir, "directory written by fit")->required();
  ev->add_option("--truth-dir", ev_args.truth_dir, "directory with Lambda0 and B0");
  ev_args.data.attach(*ev, false);
  ev->add_option("--out", ev_args.out, "report path");

  ReplicateArgs rep_args;
  CLI::App* rep = app.add_subcommand("replicate", "simulation study with aggregate table");
  rep->add_option("--config", config_path, "key=value file");
  attach_sim_config(*rep, rep_args.cfg);
  rep->add_option("--seed", rep_args.cfg.seed, "master RNG seed")->required();
  rep->add_option("--replicates", rep_args.replicates, "number of replicates");
  rep->add_flag("--auto-k", rep_args.auto_k, "choose k by JIC in every replicate");
  rep->add_option("--k-max", rep_args.k_max, "largest k for --auto-k");
  rep->add_option("--holdout-fraction", rep_args.holdout, "stratified entry holdout for AUC");
  rep->add_option("--n-mc", rep_args.n_mc, "Monte Carlo draws");
  rep->add_option("--alpha", rep_args.alpha, "interval level is 1 - alpha");
  rep->add_option("--coverage-block", rep_args.coverage_block, "outcomes in the coverage block");
  rep->add_option("--out", rep_args.out, "output directory")->required();
  rep->add_option("--threads", rep_args.threads, "worker threads (0 = all)");

  try {
    std::vector<std::string> argv = expand_config(args, app);
    std::vector<std::string> rest(argv.rbegin(), argv.rend() - 1);  // CLI11 wants reversed, no argv[0]
    try {
      app.parse(rest);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitUsage;
    }
    if (sim->parsed()) return cmd_simulate(sim_args, *sim, out);
    if (sk->parsed()) return cmd_select_k(sk_args, *sk, out);
    if (fit->parsed()) return cmd_fit(fit_args, *fit, out);
    if (ev->parsed()) return cmd_evaluate(ev_args, *ev, out);
    if (rep->parsed()) return cmd_replicate(rep_args, *rep, out);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const io::FileError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const io::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace flair::cli
