#pragma once

#include "cpadmm/constraints.hpp"
#include "cpadmm/solver.hpp"
#include "cpadmm/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cpadmm {

/// Shortest decimal text that reads back to the same double.
[[nodiscard]] std::string format_double(double x);

struct SavedState {
  SolverState state;
  std::vector<ConstraintSpec> constraints;
};

/// JSON with dims, rank, constraints, penalties and the factor, auxiliary
/// and dual matrices (row-major nested arrays).
void write_state(std::ostream& out, const SolverState& state,
                 std::span<const ConstraintSpec> constraints);
/// Also accepts a model-only file (just "factors"): the auxiliary matrices
/// then equal the factors, duals are zero and penalties one.
[[nodiscard]] SavedState read_state(std::istream& in);

void save_state(const std::filesystem::path& path, const SolverState& state,
                std::span<const ConstraintSpec> constraints);
[[nodiscard]] SavedState load_state(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const KruskalModel& model);

/// One row per iteration: primal and dual residual per mode, then the
/// tracked relative error when available.
void write_history_csv(std::ostream& out, const FitResult& result);

}  // namespace cpadmm
