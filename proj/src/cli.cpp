#include "cpadmm/cli.hpp"

#include "cpadmm/bench.hpp"
#include "cpadmm/block_engine.hpp"
#include "cpadmm/config.hpp"
#include "cpadmm/mesh.hpp"
#include "cpadmm/state_io.hpp"
#include "cpadmm/tensor_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

namespace cpadmm {

namespace {

/// Solver flags; unset ones keep the value from the config file or default.
struct SolverFlags {
  std::optional<double> eps_abs, eps_rel, mu, tau_incr, tau_decr, rho_init;
  std::optional<int> n_max, max_restarts, inner_sweeps;
  std::optional<std::uint64_t> seed;
  bool no_adapt = false;
  bool track_rfe = false;

  void add_to(CLI::App& app) {
    app.add_option("--eps-abs", eps_abs, "absolute stopping tolerance");
    app.add_option("--eps-rel", eps_rel, "relative stopping tolerance");
    app.add_option("--mu", mu, "residual balancing ratio");
    app.add_option("--tau-incr", tau_incr, "penalty increase factor");
    app.add_option("--tau-decr", tau_decr, "penalty decrease factor");
    app.add_option("--rho-init", rho_init, "initial penalty");
    app.add_option("--n-max", n_max, "iterations per attempt");
    app.add_option("--max-restarts", max_restarts, "restarts after non-convergence");
    app.add_option("--inner-sweeps", inner_sweeps, "factor sweeps per iteration");
    app.add_option("--seed", seed, "random seed");
    app.add_flag("--no-adapt", no_adapt, "keep the penalties fixed");
    app.add_flag("--track-rfe", track_rfe, "record the error after every iteration");
  }

  void apply(SolverConfig& c) const {
    if (eps_abs) c.eps_abs = *eps_abs;
    if (eps_rel) c.eps_rel = *eps_rel;
    if (mu) c.mu = *mu;
    if (tau_incr) c.tau_incr = *tau_incr;
    if (tau_decr) c.tau_decr = *tau_decr;
    if (rho_init) c.rho_init = *rho_init;
    if (n_max) c.n_max = *n_max;
    if (max_restarts) c.max_restarts = *max_restarts;
    if (inner_sweeps) c.inner_sweeps = *inner_sweeps;
    if (seed) c.seed = *seed;
    if (no_adapt) c.adapt_penalties = false;
    if (track_rfe) c.track_rfe = true;
  }
};

/// "nonneg" for every mode, or one comma-separated entry per mode.
std::vector<ConstraintSpec> parse_constraints(const std::string& text,
                                              std::size_t order) {
  std::vector<ConstraintSpec> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    out.push_back(ConstraintSpec::parse(item));
  }
  if (out.size() == 1) out.assign(order, out.front());
  if (out.size() != order) {
    throw ConfigError("expected 1 or " + std::to_string(order) + " constraints, got " +
                      std::to_string(out.size()));
  }
  return out;
}

struct Options {
  // generate
  std::string dims;
  Index rank = 0;
  double sigma2 = 0.0;
  std::uint64_t seed = 0;
  std::string out_path;
  std::string format = "binary";
  std::string truth_path;
  // fit, kkt, equivcheck
  std::string tensor_path;
  std::string model_path;
  std::string history_path;
  std::string trace_path;
  std::string constraints;
  std::string engine = "central";
  std::string config_path;
  int threads = 1;
  int iterations = 50;
  double tolerance = 1e-12;
  // bench
  std::string output_dir;
  std::optional<int> realizations;
  std::optional<int> bench_threads;
  SolverFlags solver;
};

int do_generate(const Options& o, std::ostream& out) {
  const Dims dims = parse_dims(o.dims);
  std::vector<ConstraintSpec> specs;
  try {
    if (!o.constraints.empty()) specs = parse_constraints(o.constraints, dims.size());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const SyntheticData data = generate(dims, o.rank, o.sigma2, o.seed, specs);
  save_tensor(o.out_path, data.tensor,
              o.format == "coo" ? TensorFormat::CooText : TensorFormat::Binary);
  if (!o.truth_path.empty()) save_model(o.truth_path, data.truth);
  out << "tensor_norm=" << format_double(frobenius_norm(data.tensor))
      << " noise_norm=" << format_double(data.noise_norm) << '\n';
  return kExitOk;
}

SolverConfig solver_config(const Options& o, std::vector<ConstraintSpec>* specs,
                           std::size_t order) {
  SolverConfig cfg;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError("cannot open config file " + o.config_path);
    for (const auto& [key, value] : read_key_values(in, o.config_path)) {
      if (apply_solver_key(cfg, key, value)) continue;
      if (key.starts_with("constraint") && specs) continue;
      throw ConfigError(o.config_path + ": key '" + key + "' does not apply here");
    }
  }
  o.solver.apply(cfg);
  try {
    cfg.validate();
    if (specs) {
      *specs = o.constraints.empty()
                   ? std::vector<ConstraintSpec>(order, ConstraintSpec::non_negative())
                   : parse_constraints(o.constraints, order);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

int do_fit(const Options& o, std::ostream& out) {
  const DenseTensor t = load_tensor(o.tensor_path);
  std::vector<ConstraintSpec> specs;
  const SolverConfig cfg = solver_config(o, &specs, t.order());
  const Engine engine = Engine::parse(o.engine);
  FitResult result;
  if (engine.kind == Engine::Kind::Mesh) {
    std::ofstream trace;
    MeshOptions mo;
    mo.threads = o.threads;
    if (!o.trace_path.empty()) {
      trace.open(o.trace_path);
      if (!trace) throw std::runtime_error("cannot write " + o.trace_path);
      mo.trace = &trace;
    }
    auto d = distributed_fit(t, o.rank, specs, cfg,
                             PartitionPlan::uniform(t.dims(), engine.mesh_size), mo);
    result = std::move(d.fit);
    out << "messages=" << d.stats.total << ' ';
  } else {
    result = fit_with(engine, t, o.rank, specs, cfg);
  }
  out << "rfe=" << format_double(result.rfe)
      << " converged=" << (result.converged ? "true" : "false")
      << " iterations=" << result.iterations << " restarts=" << result.restarts
      << '\n';
  if (!o.model_path.empty()) save_state(o.model_path, result.state, specs);
  if (!o.history_path.empty()) {
    std::ofstream h(o.history_path);
    if (!h) throw std::runtime_error("cannot write " + o.history_path);
    write_history_csv(h, result);
  }
  return kExitOk;
}

int do_bench(const Options& o, std::ostream& out) {
  ExperimentSpec spec = load_experiment(o.config_path);
  o.solver.apply(spec.solver);
  if (!o.output_dir.empty()) spec.output = o.output_dir;
  if (o.realizations) spec.realizations = *o.realizations;
  if (o.bench_threads) spec.threads = *o.bench_threads;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const ExperimentResult result = run_experiment(spec);
  write_experiment(spec.output, result);
  const auto& s = result.summary;
  out << "realizations=" << s.realizations
      << " mean_rfe=" << format_double(s.mean_rfe)
      << " std_rfe=" << format_double(s.std_rfe) << " converged=" << s.converged
      << " output=" << spec.output.string() << '\n';
  return kExitOk;
}

int do_equivcheck(const Options& o, std::ostream& out) {
  const DenseTensor t = o.tensor_path.empty()
                            ? generate(parse_dims(o.dims.empty() ? "8,8,8" : o.dims),
                                       o.rank, o.sigma2, o.seed)
                                  .tensor
                            : load_tensor(o.tensor_path);
  std::vector<ConstraintSpec> specs;
  const SolverConfig cfg = solver_config(o, &specs, t.order());
  const Engine engine = Engine::parse(o.engine);
  if (engine.kind != Engine::Kind::Mesh) {
    throw ConfigError("equivcheck needs --engine mesh:N");
  }
  MeshOptions mo;
  mo.threads = o.threads;
  const auto dev = trajectory_deviation(
      t, o.rank, specs, cfg, PartitionPlan::uniform(t.dims(), engine.mesh_size),
      o.iterations, mo);
  const double worst = dev.empty() ? 0.0 : *std::max_element(dev.begin(), dev.end());
  out << "max_deviation=" << format_double(worst) << " iterations=" << dev.size()
      << " tolerance=" << format_double(o.tolerance) << '\n';
  return worst <= o.tolerance ? kExitOk : kExitRuntime;
}

int do_kkt(const Options& o, std::ostream& out) {
  const DenseTensor t = load_tensor(o.tensor_path);
  const SavedState saved = load_state(o.model_path);
  if (saved.state.dims() != t.dims()) {
    throw std::runtime_error("model dims do not match the tensor");
  }
  const KktReport r = kkt_residuals(saved.state, t);
  for (const auto& [name, value] : r.named()) {
    out << name << '=' << format_double(value) << '\n';
  }
  const double xnorm = frobenius_norm(t);
  out << "max=" << format_double(r.max_value()) << '\n'
      << "tensor_norm=" << format_double(xnorm) << '\n'
      << "relative_max=" << format_double(r.max_value() / xnorm) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constrained CP tensor factorization with ADMM"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "write a synthetic tensor");
  gen->add_option("--dims", o.dims, "extents, e.g. 50,50,50")->required();
  gen->add_option("--rank", o.rank, "true rank")->required();
  gen->add_option("--sigma2", o.sigma2, "noise variance");
  gen->add_option("--seed", o.seed, "random seed");
  gen->add_option("--out", o.out_path, "tensor file")->required();
  gen->add_option("--format", o.format, "binary or coo")
      ->check(CLI::IsMember({"binary", "coo"}));
  gen->add_option("--truth", o.truth_path, "write the true factors (JSON)");
  gen->add_option("--constraints", o.constraints, "make the truth feasible");

  auto* fitc = app.add_subcommand("fit", "factor a tensor file");
  fitc->add_option("--tensor", o.tensor_path, "tensor file")->required();
  fitc->add_option("--rank", o.rank, "model rank")->required();
  fitc->add_option("--constraints", o.constraints,
                   "one constraint, or one per mode separated by commas");
  fitc->add_option("--engine", o.engine, "central, als or mesh:N");
  fitc->add_option("--config", o.config_path, "solver key = value file");
  fitc->add_option("--model", o.model_path, "write the final state (JSON)");
  fitc->add_option("--history", o.history_path, "write residual history (CSV)");
  fitc->add_option("--trace", o.trace_path, "write the mesh message trace (CSV)");
  fitc->add_option("--threads", o.threads, "mesh worker threads");
  o.solver.add_to(*fitc);

  auto* bench = app.add_subcommand("bench", "run an experiment from a config file");
  bench->add_option("--config", o.config_path, "experiment file")->required();
  bench->add_option("--output", o.output_dir, "output directory");
  bench->add_option("--realizations", o.realizations, "override realizations");
  bench->add_option("--threads", o.bench_threads, "realizations run in parallel");
  o.solver.add_to(*bench);

  auto* eq = app.add_subcommand("equivcheck",
                                "compare centralized and mesh trajectories");
  eq->add_option("--tensor", o.tensor_path, "tensor file (default: synthetic)");
  eq->add_option("--dims", o.dims, "synthetic extents (default 8,8,8)");
  eq->add_option("--rank", o.rank, "model rank")->required();
  eq->add_option("--sigma2", o.sigma2, "synthetic noise variance");
  eq->add_option("--data-seed", o.seed, "synthetic data seed");
  eq->add_option("--constraints", o.constraints, "constraints");
  eq->add_option("--engine", o.engine, "mesh:N")->required();
  eq->add_option("--iterations", o.iterations, "iterations to compare");
  eq->add_option("--tolerance", o.tolerance, "largest accepted deviation");
  eq->add_option("--config", o.config_path, "solver key = value file");
  eq->add_option("--threads", o.threads, "mesh worker threads");
  o.solver.add_to(*eq);

  auto* kkt = app.add_subcommand("kkt", "optimality residuals of a saved state");
  kkt->add_option("--tensor", o.tensor_path, "tensor file")->required();
  kkt->add_option("--model", o.model_path, "state or model file")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*gen) return do_generate(o, out);
    if (*fitc) return do_fit(o, out);
    if (*bench) return do_bench(o, out);
    if (*eq) return do_equivcheck(o, out);
    if (*kkt) return do_kkt(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace cpadmm
