#pragma once

#include "cpadmm/constraints.hpp"
#include "cpadmm/tensor.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cpadmm {

/// Raised when the regularized Gram system cannot be factored, which only
/// happens for a non-positive penalty.
class InvalidPenaltyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverConfig {
  double eps_abs = 1e-4;
  double eps_rel = 1e-4;
  double mu = 8.0;
  double tau_incr = 4.0;
  double tau_decr = 2.0;
  double rho_init = 1.0;
  int n_max = 400;
  int max_restarts = 5;
  int inner_sweeps = 1;
  std::uint64_t seed = 0;
  /// Freeze the penalties at rho_init when false.
  bool adapt_penalties = true;
  /// Record the relative error of the auxiliary model after every iteration.
  bool track_rfe = false;

  /// Throws std::invalid_argument on out-of-range parameters.
  void validate() const;
};

/// Iterate of the splitting: per mode the factor, its feasible auxiliary
/// copy, the (unscaled) dual and the penalty.
struct SolverState {
  std::vector<Matrix> factors;
  std::vector<Matrix> aux;
  std::vector<Matrix> duals;
  std::vector<double> rho;
  int iteration = 0;

  [[nodiscard]] std::size_t order() const { return factors.size(); }
  [[nodiscard]] Index rank() const {
    return factors.empty() ? 0 : factors.front().cols();
  }
  [[nodiscard]] Dims dims() const;
  void validate() const;
};

/// Frobenius norms of the primal residual (factor - aux) and of the dual
/// residual rho * (aux - previous aux), per mode.
struct Residuals {
  std::vector<double> primal;
  std::vector<double> dual;
};

struct IterationReport {
  Residuals residuals;
  bool converged = false;
};

struct FitResult {
  KruskalModel model;  // the auxiliary (feasible) matrices
  double rfe = 0.0;
  int iterations = 0;  // summed over all attempts
  int restarts = 0;
  bool converged = false;
  std::vector<Residuals> residual_history;  // final attempt only
  std::vector<double> rfe_history;          // final attempt, if tracked
  SolverState state;                        // final iterate
};

/// Called after every iteration with the updated state, the report and the
/// zero-based attempt number.
using FitObserver =
    std::function<void(const SolverState&, const IterationReport&, int)>;

/// Random U[0,1] factors for modes 1.. from config.seed; the first factor,
/// all auxiliary matrices and all duals start at zero; penalties at rho_init.
[[nodiscard]] SolverState init_state(std::span<const Index> dims, Index rank,
                                     std::span<const ConstraintSpec> specs,
                                     const SolverConfig& config);

/// Solves X (G + rho I) = rhs for the rows of one factor, where
/// rhs = mttkrp_rows + rho * aux_rows - dual_rows. For RowStochastic the rows
/// are additionally constrained to sum to one (closed-form multiplier).
[[nodiscard]] Matrix solve_factor_rows(const Matrix& mttkrp_rows,
                                       const Matrix& gram, double rho,
                                       const Matrix& aux_rows,
                                       const Matrix& dual_rows,
                                       ConstraintKind kind);

/// Least-squares update of one factor given the current other factors.
[[nodiscard]] Matrix factor_update(const SolverState& state, TensorRef t,
                                   std::size_t mode, const ConstraintSpec& spec);

/// project(factor + dual / rho) on the given rows.
[[nodiscard]] Matrix aux_from(const Matrix& factor, const Matrix& dual,
                              double rho, const ConstraintSpec& spec);
/// dual + rho * (factor - aux) on the given rows.
[[nodiscard]] Matrix dual_from(const Matrix& dual, const Matrix& factor,
                               const Matrix& aux, double rho);

[[nodiscard]] Matrix aux_update(const SolverState& state, std::size_t mode,
                                const ConstraintSpec& spec);
[[nodiscard]] Matrix dual_update(const SolverState& state, std::size_t mode);

[[nodiscard]] Residuals residuals(const SolverState& state,
                                  std::span<const Matrix> prev_aux);

/// Per-mode primal and dual thresholds sqrt(rows*F)*eps_abs + eps_rel*scale.
[[nodiscard]] bool check_stop(const Residuals& res, const SolverState& state,
                              const SolverConfig& config);

/// Residual-balancing penalty rule, applied to each mode independently.
[[nodiscard]] std::vector<double> adapt_penalties(const SolverState& state,
                                                  const Residuals& res,
                                                  const SolverConfig& config);

/// Performs the factor sweeps and the auxiliary and dual updates of one
/// iteration in place. Implemented by the centralized solver and by the
/// mesh simulator.
class IterationKernel {
 public:
  virtual ~IterationKernel() = default;
  /// Called whenever a fresh state is installed (start and restarts).
  virtual void reset(const SolverState& state) = 0;
  virtual void update(SolverState& state) = 0;
};

class CentralizedKernel final : public IterationKernel {
 public:
  CentralizedKernel(TensorRef t, std::vector<ConstraintSpec> specs,
                    int inner_sweeps)
      : tensor_(t), specs_(std::move(specs)), inner_sweeps_(inner_sweeps) {}

  void reset(const SolverState&) override {}
  void update(SolverState& state) override;

 private:
  TensorRef tensor_;
  std::vector<ConstraintSpec> specs_;
  int inner_sweeps_;
};

/// One full iteration: kernel update, residuals, stopping test and, unless
/// converged, penalty adaptation.
IterationReport advance(SolverState& state, IterationKernel& kernel,
                        const SolverConfig& config);

/// One centralized iteration.
IterationReport iterate(SolverState& state, TensorRef t,
                        std::span<const ConstraintSpec> specs,
                        const SolverConfig& config);

/// Restart loop shared by every kernel. Attempt r > 0 is seeded with
/// derive_seed(config.seed, r). A run that never converges returns the
/// attempt with the lowest relative error and converged = false.
[[nodiscard]] FitResult run_fit(TensorRef t, Index rank,
                                std::span<const ConstraintSpec> specs,
                                const SolverConfig& config,
                                IterationKernel& kernel,
                                const FitObserver& observer = {});

/// Centralized constrained CP fit.
[[nodiscard]] FitResult fit(TensorRef t, Index rank,
                            std::span<const ConstraintSpec> specs,
                            const SolverConfig& config,
                            const FitObserver& observer = {});

/// Optimality measures for the non-negative problem. All vanish at a KKT
/// point.
struct KktReport {
  std::vector<double> stationarity;  // ||X^(m) K_m - U_m G_m - Y_m||_F
  std::vector<double> feasibility;   // ||U_m - aux_m||_F
  double dual_sign = 0.0;            // largest positive dual entry, or 0
  double complementarity = 0.0;      // sqrt(sum_m ||Y_m .* aux_m||_F^2)

  [[nodiscard]] std::vector<std::pair<std::string, double>> named() const;
  [[nodiscard]] double max_value() const;
};

[[nodiscard]] KktReport kkt_residuals(const SolverState& state, TensorRef t);

}  // namespace cpadmm
