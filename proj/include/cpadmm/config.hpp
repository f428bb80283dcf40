#pragma once

#include "cpadmm/constraints.hpp"
#include "cpadmm/solver.hpp"
#include "cpadmm/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cpadmm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which iteration kernel drives a fit.
struct Engine {
  enum class Kind { Centralized, Mesh, Als };
  Kind kind = Kind::Centralized;
  Index mesh_size = 1;

  /// "central", "als" or "mesh:N".
  static Engine parse(std::string_view text);
  [[nodiscard]] std::string to_string() const;
  friend bool operator==(const Engine&, const Engine&) = default;
};

struct ExperimentSpec {
  Dims dims{20, 20, 20};
  Index rank = 3;
  Index fit_rank = 3;
  double sigma2 = 0.0;
  int realizations = 1;
  SolverConfig solver;
  std::vector<ConstraintSpec> constraints;  // empty: non-negative everywhere
  Engine engine;
  bool trajectories = false;
  int threads = 1;
  std::filesystem::path output = "bench_out";

  /// Constraint of every mode, filling in the default.
  [[nodiscard]] std::vector<ConstraintSpec> mode_constraints() const;
  void validate() const;
};

/// "50,50,50" or "50x50x50".
[[nodiscard]] Dims parse_dims(std::string_view text);

/// `key = value` lines; blank lines and '#' comments are skipped. Duplicate
/// keys and lines without '=' are errors.
[[nodiscard]] std::map<std::string, std::string> read_key_values(
    std::istream& in, std::string_view source);

/// Applies one solver key (eps_abs, mu, n_max, ...). Returns false when the
/// key is not a solver key.
bool apply_solver_key(SolverConfig& config, std::string_view key,
                      std::string_view value);

[[nodiscard]] ExperimentSpec parse_experiment(std::istream& in,
                                              std::string_view source);
[[nodiscard]] ExperimentSpec load_experiment(const std::filesystem::path& path);

}  // namespace cpadmm
