#include "cpadmm/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>

namespace cpadmm {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty()) {
    throw ConfigError("invalid value '" + std::string(text) + "' for " +
                      std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "' for " +
                    std::string(key));
}

}  // namespace

Engine Engine::parse(std::string_view text) {
  if (text == "central" || text == "centralized") return {};
  if (text == "als") return {Kind::Als, 1};
  if (text.starts_with("mesh:")) {
    const Index n = parse_number<Index>("engine", text.substr(5));
    if (n < 1) throw ConfigError("mesh size must be at least 1");
    return {Kind::Mesh, n};
  }
  throw ConfigError("unknown engine '" + std::string(text) +
                    "' (expected central, als or mesh:N)");
}

std::string Engine::to_string() const {
  switch (kind) {
    case Kind::Centralized: return "central";
    case Kind::Als: return "als";
    case Kind::Mesh: return "mesh:" + std::to_string(mesh_size);
  }
  return "central";
}

std::vector<ConstraintSpec> ExperimentSpec::mode_constraints() const {
  if (constraints.empty()) {
    return std::vector<ConstraintSpec>(dims.size(), ConstraintSpec::non_negative());
  }
  return constraints;
}

void ExperimentSpec::validate() const {
  check_dims(dims);
  solver.validate();
  if (rank < 1 || fit_rank < 1) throw ConfigError("ranks must be at least 1");
  if (!(sigma2 >= 0.0)) throw ConfigError("sigma2 must be non-negative");
  if (realizations < 1) throw ConfigError("realizations must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (!constraints.empty() && constraints.size() != dims.size()) {
    throw ConfigError("need one constraint per mode");
  }
  const auto specs = mode_constraints();
  for (std::size_t m = 0; m < dims.size(); ++m) {
    specs[m].validate_for(dims[m], fit_rank);
  }
}

Dims parse_dims(std::string_view text) {
  Dims dims;
  while (true) {
    const auto sep = text.find_first_of(",x");
    dims.push_back(parse_number<Index>("dims", trim(text.substr(0, sep))));
    if (sep == std::string_view::npos) break;
    text.remove_prefix(sep + 1);
  }
  try {
    check_dims(dims);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return dims;
}

std::map<std::string, std::string> read_key_values(std::istream& in,
                                                   std::string_view source) {
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    view = trim(view.substr(0, view.find('#')));
    if (view.empty()) continue;
    const auto eq = view.find('=');
    const std::string where = std::string(source) + ":" + std::to_string(lineno);
    if (eq == std::string_view::npos) {
      throw ConfigError(where + ": expected 'key = value'");
    }
    std::string key(trim(view.substr(0, eq)));
    std::string value(trim(view.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!out.emplace(key, value).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

bool apply_solver_key(SolverConfig& c, std::string_view key,
                      std::string_view value) {
  if (key == "eps_abs") c.eps_abs = parse_number<double>(key, value);
  else if (key == "eps_rel") c.eps_rel = parse_number<double>(key, value);
  else if (key == "mu") c.mu = parse_number<double>(key, value);
  else if (key == "tau_incr") c.tau_incr = parse_number<double>(key, value);
  else if (key == "tau_decr") c.tau_decr = parse_number<double>(key, value);
  else if (key == "rho_init") c.rho_init = parse_number<double>(key, value);
  else if (key == "n_max") c.n_max = parse_number<int>(key, value);
  else if (key == "max_restarts") c.max_restarts = parse_number<int>(key, value);
  else if (key == "inner_sweeps") c.inner_sweeps = parse_number<int>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "adapt") c.adapt_penalties = parse_bool(key, value);
  else if (key == "track_rfe") c.track_rfe = parse_bool(key, value);
  else return false;
  return true;
}

namespace {

ConstraintSpec parse_constraint(const std::string& key, std::string_view value) {
  try {
    return ConstraintSpec::parse(value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

}  // namespace

ExperimentSpec parse_experiment(std::istream& in, std::string_view source) {
  const auto kv = read_key_values(in, source);
  ExperimentSpec spec;
  bool fit_rank_set = false;
  std::map<std::size_t, ConstraintSpec> per_mode;
  std::optional<ConstraintSpec> all_modes;
  for (const auto& [key, value] : kv) {
    if (apply_solver_key(spec.solver, key, value)) continue;
    if (key == "dims") {
      spec.dims = parse_dims(value);
    } else if (key == "rank") {
      spec.rank = parse_number<Index>(key, value);
    } else if (key == "fit_rank") {
      spec.fit_rank = parse_number<Index>(key, value);
      fit_rank_set = true;
    } else if (key == "sigma2") {
      spec.sigma2 = parse_number<double>(key, value);
    } else if (key == "realizations") {
      spec.realizations = parse_number<int>(key, value);
    } else if (key == "engine") {
      spec.engine = Engine::parse(value);
    } else if (key == "trajectories") {
      spec.trajectories = parse_bool(key, value);
    } else if (key == "threads") {
      spec.threads = parse_number<int>(key, value);
    } else if (key == "output") {
      spec.output = value;
    } else if (key == "constraint") {
      all_modes = parse_constraint(key, value);
    } else if (key.starts_with("constraint.mode")) {
      const auto mode = parse_number<std::size_t>(key, std::string_view(key).substr(15));
      if (mode < 1 || mode > kMaxOrder) {
        throw ConfigError("constraint mode out of range in '" + key + "'");
      }
      per_mode[mode - 1] = parse_constraint(key, value);
    } else {
      throw ConfigError(std::string(source) + ": unknown key '" + key + "'");
    }
  }
  if (!fit_rank_set) spec.fit_rank = spec.rank;
  if (all_modes || !per_mode.empty()) {
    spec.constraints.assign(spec.dims.size(),
                            all_modes.value_or(ConstraintSpec::non_negative()));
    for (const auto& [mode, c] : per_mode) {
      if (mode >= spec.dims.size()) {
        throw ConfigError("constraint given for mode " + std::to_string(mode + 1) +
                          " of an order-" + std::to_string(spec.dims.size()) +
                          " tensor");
      }
      spec.constraints[mode] = c;
    }
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  return spec;
}

ExperimentSpec load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_experiment(in, path.string());
}

}  // namespace cpadmm
