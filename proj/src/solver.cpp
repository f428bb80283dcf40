#include "cpadmm/solver.hpp"

#include "cpadmm/random.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace cpadmm {

void SolverConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(eps_abs > 0.0 && eps_rel > 0.0, "eps_abs and eps_rel must be positive");
  require(mu > 1.0 && tau_incr > 1.0 && tau_decr > 1.0,
          "mu, tau_incr and tau_decr must exceed 1");
  require(rho_init > 0.0, "rho_init must be positive");
  require(n_max >= 1, "n_max must be at least 1");
  require(max_restarts >= 0, "max_restarts must be non-negative");
  require(inner_sweeps >= 1, "inner_sweeps must be at least 1");
}

Dims SolverState::dims() const {
  Dims d;
  for (const auto& f : factors) d.push_back(f.rows());
  return d;
}

void SolverState::validate() const {
  const std::size_t N = factors.size();
  if (N < kMinOrder || N > kMaxOrder || aux.size() != N || duals.size() != N ||
      rho.size() != N) {
    throw std::invalid_argument("solver state has inconsistent mode count");
  }
  for (std::size_t m = 0; m < N; ++m) {
    const auto& f = factors[m];
    if (aux[m].rows() != f.rows() || aux[m].cols() != f.cols() ||
        duals[m].rows() != f.rows() || duals[m].cols() != f.cols() ||
        f.cols() != rank()) {
      throw std::invalid_argument("solver state matrices disagree in shape");
    }
    if (!(rho[m] > 0.0)) {
      throw std::invalid_argument("solver penalties must be positive");
    }
  }
}

SolverState init_state(std::span<const Index> dims, Index rank,
                       std::span<const ConstraintSpec> specs,
                       const SolverConfig& config) {
  check_dims(dims);
  config.validate();
  if (rank < 1) throw std::invalid_argument("rank must be at least 1");
  if (specs.size() != dims.size()) {
    throw std::invalid_argument("need one constraint per mode");
  }
  for (std::size_t m = 0; m < dims.size(); ++m) {
    specs[m].validate_for(dims[m], rank);
  }
  Rng rng(config.seed);
  SolverState s;
  for (std::size_t m = 0; m < dims.size(); ++m) {
    s.factors.push_back(m == 0 ? Matrix::Zero(dims[m], rank)
                               : uniform_matrix(dims[m], rank, rng));
    s.aux.push_back(Matrix::Zero(dims[m], rank));
    s.duals.push_back(Matrix::Zero(dims[m], rank));
    s.rho.push_back(config.rho_init);
  }
  return s;
}

Matrix solve_factor_rows(const Matrix& mttkrp_rows, const Matrix& gram,
                         double rho, const Matrix& aux_rows,
                         const Matrix& dual_rows, ConstraintKind kind) {
  if (!(rho > 0.0)) {
    throw InvalidPenaltyError("penalty must be positive, got " +
                              std::to_string(rho));
  }
  Matrix system = gram;
  system.diagonal().array() += rho;
  const Eigen::LLT<Matrix> llt(system);
  if (llt.info() != Eigen::Success) {
    throw InvalidPenaltyError("regularized Gram matrix is not positive definite");
  }
  const Matrix rhs = mttkrp_rows + rho * aux_rows - dual_rows;
  Matrix out = llt.solve(rhs.transpose()).transpose();
  if (kind == ConstraintKind::RowStochastic) {
    // Lagrange multiplier per row enforcing out * 1 = 1.
    const Vector g = llt.solve(Vector::Ones(system.rows()));
    const double s = g.sum();
    const Vector excess = (out.rowwise().sum().array() - 1.0).matrix() / s;
    out.noalias() -= excess * g.transpose();
  }
  return out;
}

Matrix factor_update(const SolverState& state, TensorRef t, std::size_t mode,
                     const ConstraintSpec& spec) {
  const Matrix m = mttkrp(t, state.factors, mode);
  const Matrix g = gram_hadamard(state.factors, mode);
  return solve_factor_rows(m, g, state.rho[mode], state.aux[mode],
                           state.duals[mode], spec.kind());
}

Matrix aux_from(const Matrix& factor, const Matrix& dual, double rho,
                const ConstraintSpec& spec) {
  return project(factor + dual / rho, spec);
}

Matrix dual_from(const Matrix& dual, const Matrix& factor, const Matrix& aux,
                 double rho) {
  return dual + rho * (factor - aux);
}

Matrix aux_update(const SolverState& state, std::size_t mode,
                  const ConstraintSpec& spec) {
  return aux_from(state.factors[mode], state.duals[mode], state.rho[mode], spec);
}

Matrix dual_update(const SolverState& state, std::size_t mode) {
  return dual_from(state.duals[mode], state.factors[mode], state.aux[mode],
                   state.rho[mode]);
}

Residuals residuals(const SolverState& state, std::span<const Matrix> prev_aux) {
  Residuals r;
  for (std::size_t m = 0; m < state.order(); ++m) {
    r.primal.push_back((state.factors[m] - state.aux[m]).norm());
    r.dual.push_back(state.rho[m] * (state.aux[m] - prev_aux[m]).norm());
  }
  return r;
}

bool check_stop(const Residuals& res, const SolverState& state,
                const SolverConfig& config) {
  for (std::size_t m = 0; m < state.order(); ++m) {
    const auto& f = state.factors[m];
    const double floor =
        std::sqrt(static_cast<double>(f.rows() * f.cols())) * config.eps_abs;
    const double primal_tol =
        floor + config.eps_rel * std::max(f.norm(), state.aux[m].norm());
    const double dual_tol = floor + config.eps_rel * state.duals[m].norm();
    if (res.primal[m] > primal_tol || res.dual[m] > dual_tol) return false;
  }
  return true;
}

std::vector<double> adapt_penalties(const SolverState& state,
                                    const Residuals& res,
                                    const SolverConfig& config) {
  std::vector<double> rho = state.rho;
  for (std::size_t m = 0; m < rho.size(); ++m) {
    if (res.primal[m] > config.mu * res.dual[m]) {
      rho[m] *= config.tau_incr;
    } else if (res.dual[m] > config.mu * res.primal[m]) {
      rho[m] /= config.tau_decr;
    }
  }
  return rho;
}

void CentralizedKernel::update(SolverState& state) {
  const std::size_t N = state.order();
  for (int sweep = 0; sweep < inner_sweeps_; ++sweep) {
    for (std::size_t m = 0; m < N; ++m) {
      state.factors[m] = factor_update(state, tensor_, m, specs_[m]);
    }
  }
  for (std::size_t m = 0; m < N; ++m) {
    state.aux[m] = aux_update(state, m, specs_[m]);
    state.duals[m] = dual_update(state, m);
  }
}

IterationReport advance(SolverState& state, IterationKernel& kernel,
                        const SolverConfig& config) {
  const std::vector<Matrix> prev_aux = state.aux;
  kernel.update(state);
  IterationReport report;
  report.residuals = residuals(state, prev_aux);
  report.converged = check_stop(report.residuals, state, config);
  if (!report.converged && config.adapt_penalties) {
    state.rho = adapt_penalties(state, report.residuals, config);
  }
  ++state.iteration;
  return report;
}

IterationReport iterate(SolverState& state, TensorRef t,
                        std::span<const ConstraintSpec> specs,
                        const SolverConfig& config) {
  CentralizedKernel kernel(t, {specs.begin(), specs.end()}, config.inner_sweeps);
  return advance(state, kernel, config);
}

namespace {

double tracked_rfe(TensorRef t, double xnorm, std::span<const Matrix> aux) {
  const double sq = xnorm * xnorm - 2.0 * model_inner_product(t, aux) +
                    model_norm_squared(aux);
  return std::sqrt(std::max(sq, 0.0)) / xnorm;
}

}  // namespace

FitResult run_fit(TensorRef t, Index rank, std::span<const ConstraintSpec> specs,
                  const SolverConfig& config, IterationKernel& kernel,
                  const FitObserver& observer) {
  config.validate();
  const double xnorm = frobenius_norm(t);
  if (xnorm == 0.0) {
    throw std::invalid_argument("cannot factor an all-zero tensor");
  }
  std::optional<FitResult> best;
  int total_iterations = 0;
  for (int attempt = 0; attempt <= config.max_restarts; ++attempt) {
    SolverConfig cfg = config;
    if (attempt > 0) {
      cfg.seed = derive_seed(config.seed, static_cast<std::uint64_t>(attempt));
    }
    FitResult r;
    r.state = init_state(t.dims(), rank, specs, cfg);
    kernel.reset(r.state);
    for (int it = 0; it < config.n_max; ++it) {
      const IterationReport rep = advance(r.state, kernel, config);
      ++total_iterations;
      r.residual_history.push_back(rep.residuals);
      if (config.track_rfe) {
        r.rfe_history.push_back(tracked_rfe(t, xnorm, r.state.aux));
      }
      if (observer) observer(r.state, rep, attempt);
      if (rep.converged) {
        r.converged = true;
        break;
      }
    }
    r.model = KruskalModel(r.state.aux);
    r.rfe = relative_error(t, r.model);
    r.restarts = attempt;
    if (r.converged) {
      r.iterations = total_iterations;
      return r;
    }
    if (!best || r.rfe < best->rfe) best = std::move(r);
  }
  best->iterations = total_iterations;
  best->restarts = config.max_restarts;
  return std::move(*best);
}

FitResult fit(TensorRef t, Index rank, std::span<const ConstraintSpec> specs,
              const SolverConfig& config, const FitObserver& observer) {
  CentralizedKernel kernel(t, {specs.begin(), specs.end()}, config.inner_sweeps);
  return run_fit(t, rank, specs, config, kernel, observer);
}

std::vector<std::pair<std::string, double>> KktReport::named() const {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t m = 0; m < stationarity.size(); ++m) {
    out.emplace_back("stationarity_" + std::to_string(m + 1), stationarity[m]);
  }
  for (std::size_t m = 0; m < feasibility.size(); ++m) {
    out.emplace_back("feasibility_" + std::to_string(m + 1), feasibility[m]);
  }
  out.emplace_back("dual_sign", dual_sign);
  out.emplace_back("complementarity", complementarity);
  return out;
}

double KktReport::max_value() const {
  double v = 0.0;
  for (const auto& [name, x] : named()) v = std::max(v, x);
  return v;
}

KktReport kkt_residuals(const SolverState& state, TensorRef t) {
  state.validate();
  KktReport r;
  double comp = 0.0;
  for (std::size_t m = 0; m < state.order(); ++m) {
    const Matrix mk = mttkrp(t, state.factors, m);
    const Matrix g = gram_hadamard(state.factors, m);
    r.stationarity.push_back((mk - state.factors[m] * g - state.duals[m]).norm());
    r.feasibility.push_back((state.factors[m] - state.aux[m]).norm());
    r.dual_sign = std::max(r.dual_sign, state.duals[m].maxCoeff());
    comp += state.duals[m].cwiseProduct(state.aux[m]).squaredNorm();
  }
  r.complementarity = std::sqrt(comp);
  return r;
}

}  // namespace cpadmm
