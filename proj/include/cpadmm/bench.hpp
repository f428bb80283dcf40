#pragma once

#include "cpadmm/config.hpp"
#include "cpadmm/constraints.hpp"
#include "cpadmm/solver.hpp"
#include "cpadmm/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cpadmm {

struct SyntheticData {
  DenseTensor tensor;
  KruskalModel truth;
  double noise_norm = 0.0;  // ||E||_F
};

/// X = reconstruct(U[0,1] factors) + N(0, sigma2) noise, deterministic in
/// seed. When specs are given the true factors are made feasible first (rows
/// normalized for row-stochastic modes, projected for cardinality modes).
[[nodiscard]] SyntheticData generate(std::span<const Index> dims, Index rank,
                                     double sigma2, std::uint64_t seed,
                                     std::span<const ConstraintSpec> specs = {});

/// One unconstrained least-squares update of factor `mode`.
[[nodiscard]] Matrix als_update(TensorRef t, std::span<const Matrix> factors,
                                std::size_t mode);

/// Plain alternating least squares from the same initialization as the
/// constrained solver. Stops once the relative error changes by at most
/// eps_abs * eps_rel between sweeps.
[[nodiscard]] FitResult als_baseline(TensorRef t, Index rank,
                                     const SolverConfig& config);

/// Fit with the chosen engine. The ALS engine ignores the constraints.
[[nodiscard]] FitResult fit_with(const Engine& engine, const DenseTensor& t,
                                 Index rank, std::span<const ConstraintSpec> specs,
                                 const SolverConfig& config);

/// Relative error per factor after matching columns greedily by congruence
/// and fitting each column scale by least squares.
[[nodiscard]] std::vector<double> factor_match_error(const KruskalModel& estimate,
                                                     const KruskalModel& truth);

struct RunRecord {
  int realization = 0;
  double rfe = 0.0;
  double noise_ratio = 0.0;  // ||E||_F / ||X||_F
  double seconds = 0.0;
  int iterations = 0;
  int restarts = 0;
  bool converged = false;
  std::vector<double> factor_errors;
  std::vector<double> rfe_history;
};

struct ExperimentSummary {
  int realizations = 0;
  double mean_rfe = 0.0;
  double std_rfe = 0.0;  // sample standard deviation
  double mean_noise_ratio = 0.0;
  double mean_iterations = 0.0;
  double mean_restarts = 0.0;
  int converged = 0;
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
};

struct ExperimentResult {
  std::vector<RunRecord> records;  // ordered by realization
  ExperimentSummary summary;
};

[[nodiscard]] ExperimentSummary summarize(std::span<const RunRecord> records);

/// Realization r uses data seed derive_seed(seed, 2r) and solver seed
/// derive_seed(seed, 2r + 1); up to spec.threads realizations run at once.
[[nodiscard]] ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Writes records.csv and summary.csv (pure functions of the spec),
/// timing.csv and timing_summary.csv (wall clock), and trajectories.csv when
/// trajectories were recorded.
void write_experiment(const std::filesystem::path& dir, const ExperimentResult& result);

}  // namespace cpadmm
