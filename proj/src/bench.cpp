#include "cpadmm/bench.hpp"

#include "cpadmm/block_engine.hpp"
#include "cpadmm/mesh.hpp"
#include "cpadmm/random.hpp"
#include "cpadmm/state_io.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <random>
#include <stdexcept>
#include <thread>

namespace cpadmm {

SyntheticData generate(std::span<const Index> dims, Index rank, double sigma2,
                       std::uint64_t seed, std::span<const ConstraintSpec> specs) {
  check_dims(dims);
  if (rank < 1) throw std::invalid_argument("rank must be at least 1");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("sigma2 must be non-negative");
  if (!specs.empty() && specs.size() != dims.size()) {
    throw std::invalid_argument("need one constraint per mode");
  }
  Rng rng(seed);
  std::vector<Matrix> factors;
  for (std::size_t m = 0; m < dims.size(); ++m) {
    Matrix f = uniform_matrix(dims[m], rank, rng);
    if (!specs.empty()) {
      if (specs[m].kind() == ConstraintKind::RowStochastic) {
        f = f.array().colwise() / f.rowwise().sum().array();
      } else {
        f = project(f, specs[m]);
      }
    }
    factors.push_back(std::move(f));
  }
  const DenseTensor clean = reconstruct(factors);
  std::vector<double> values(clean.values().begin(), clean.values().end());
  double noise_norm = 0.0;
  if (sigma2 > 0.0) {
    Rng noise_rng(derive_seed(seed, 1));
    std::normal_distribution<double> gauss(0.0, std::sqrt(sigma2));
    double sq = 0.0;
    for (double& x : values) {
      const double e = gauss(noise_rng);
      sq += e * e;
      x += e;
    }
    noise_norm = std::sqrt(sq);
  }
  return {DenseTensor(clean.dims(), std::move(values)),
          KruskalModel(std::move(factors)), noise_norm};
}

Matrix als_update(TensorRef t, std::span<const Matrix> factors, std::size_t mode) {
  const Matrix m = mttkrp(t, factors, mode);
  Matrix g = gram_hadamard(factors, mode);
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() != Eigen::Success) {
    g.diagonal().array() += 1e-12;
    llt.compute(g);
    if (llt.info() != Eigen::Success) {
      // Not even the ridge helps (e.g. a zero column): fall back to the
      // pseudoinverse.
      return (g.completeOrthogonalDecomposition().pseudoInverse() * m.transpose())
          .transpose();
    }
  }
  return llt.solve(m.transpose()).transpose();
}

FitResult als_baseline(TensorRef t, Index rank, const SolverConfig& config) {
  config.validate();
  const double xnorm = frobenius_norm(t);
  if (xnorm == 0.0) throw std::invalid_argument("cannot factor an all-zero tensor");
  const std::vector<ConstraintSpec> specs(t.order(), ConstraintSpec::non_negative());
  FitResult r;
  r.state = init_state(t.dims(), rank, specs, config);
  auto& factors = r.state.factors;
  double prev = 1.0;
  for (int it = 0; it < config.n_max; ++it) {
    for (std::size_t m = 0; m < factors.size(); ++m) {
      factors[m] = als_update(t, factors, m);
    }
    const double sq = xnorm * xnorm - 2.0 * model_inner_product(t, factors) +
                      model_norm_squared(factors);
    const double rfe = std::sqrt(std::max(sq, 0.0)) / xnorm;
    ++r.iterations;
    if (config.track_rfe) r.rfe_history.push_back(rfe);
    if (std::abs(prev - rfe) <= config.eps_abs * config.eps_rel) {
      r.converged = true;
      break;
    }
    prev = rfe;
  }
  r.state.aux = factors;
  r.state.iteration = r.iterations;
  r.model = KruskalModel(factors);
  r.rfe = relative_error(t, r.model);
  return r;
}

FitResult fit_with(const Engine& engine, const DenseTensor& t, Index rank,
                   std::span<const ConstraintSpec> specs, const SolverConfig& config) {
  switch (engine.kind) {
    case Engine::Kind::Centralized:
      return fit(t, rank, specs, config);
    case Engine::Kind::Mesh:
      return distributed_fit(t, rank, specs, config,
                             PartitionPlan::uniform(t.dims(), engine.mesh_size))
          .fit;
    case Engine::Kind::Als:
      return als_baseline(t, rank, config);
  }
  throw std::logic_error("unknown engine");
}

std::vector<double> factor_match_error(const KruskalModel& estimate,
                                       const KruskalModel& truth) {
  estimate.validate();
  truth.validate();
  if (estimate.rank() != truth.rank()) {
    throw std::invalid_argument("factor_match_error needs equal ranks");
  }
  if (estimate.dims() != truth.dims()) {
    throw std::invalid_argument("factor_match_error needs equal dims");
  }
  const Index F = truth.rank();
  const std::size_t N = truth.order();
  auto normalized = [](const Matrix& m) {
    Matrix out = m;
    for (Index f = 0; f < m.cols(); ++f) {
      const double n = m.col(f).norm();
      if (n > 0.0) out.col(f) /= n;
    }
    return out;
  };
  // congruence(e, t) = prod_m |cos(angle between column e and column t)|
  Matrix congruence = Matrix::Ones(F, F);
  for (std::size_t m = 0; m < N; ++m) {
    congruence = congruence.cwiseProduct(
        (normalized(estimate.factors[m]).transpose() * normalized(truth.factors[m]))
            .cwiseAbs());
  }
  std::vector<Index> match(static_cast<std::size_t>(F), -1);  // truth -> estimate
  std::vector<bool> used(static_cast<std::size_t>(F), false);
  for (Index k = 0; k < F; ++k) {
    Index best_e = -1;
    Index best_t = -1;
    double best = -1.0;
    for (Index e = 0; e < F; ++e) {
      if (used[static_cast<std::size_t>(e)]) continue;
      for (Index t = 0; t < F; ++t) {
        if (match[static_cast<std::size_t>(t)] >= 0) continue;
        if (congruence(e, t) > best) {
          best = congruence(e, t);
          best_e = e;
          best_t = t;
        }
      }
    }
    used[static_cast<std::size_t>(best_e)] = true;
    match[static_cast<std::size_t>(best_t)] = best_e;
  }
  std::vector<double> out;
  for (std::size_t m = 0; m < N; ++m) {
    const Matrix& tm = truth.factors[m];
    Matrix aligned(tm.rows(), F);
    for (Index t = 0; t < F; ++t) {
      const auto col = estimate.factors[m].col(match[static_cast<std::size_t>(t)]);
      const double sq = col.squaredNorm();
      aligned.col(t) = sq > 0.0 ? Vector(col * (col.dot(tm.col(t)) / sq))
                                : Vector::Zero(tm.rows());
    }
    const double denom = tm.norm();
    out.push_back(denom > 0.0 ? (tm - aligned).norm() / denom : aligned.norm());
  }
  return out;
}

namespace {

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

RunRecord run_realization(const ExperimentSpec& spec, int r) {
  const auto specs = spec.mode_constraints();
  const auto stream = static_cast<std::uint64_t>(r);
  const SyntheticData data = generate(spec.dims, spec.rank, spec.sigma2,
                                      derive_seed(spec.solver.seed, 2 * stream),
                                      specs);
  SolverConfig cfg = spec.solver;
  cfg.seed = derive_seed(spec.solver.seed, 2 * stream + 1);
  if (spec.trajectories) cfg.track_rfe = true;

  const auto start = std::chrono::steady_clock::now();
  FitResult fit = fit_with(spec.engine, data.tensor, spec.fit_rank, specs, cfg);
  const std::chrono::duration<double> elapsed =
      std::chrono::steady_clock::now() - start;

  RunRecord rec;
  rec.realization = r;
  rec.rfe = fit.rfe;
  rec.noise_ratio = data.noise_norm / frobenius_norm(data.tensor);
  rec.seconds = elapsed.count();
  rec.iterations = fit.iterations;
  rec.restarts = fit.restarts;
  rec.converged = fit.converged;
  if (spec.fit_rank == spec.rank) {
    rec.factor_errors = factor_match_error(fit.model, data.truth);
  }
  rec.rfe_history = std::move(fit.rfe_history);
  return rec;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

ExperimentSummary summarize(std::span<const RunRecord> records) {
  if (records.empty()) throw std::invalid_argument("no records to summarize");
  std::vector<double> rfe, noise, iters, restarts, secs;
  ExperimentSummary s;
  for (const auto& r : records) {
    rfe.push_back(r.rfe);
    noise.push_back(r.noise_ratio);
    iters.push_back(r.iterations);
    restarts.push_back(r.restarts);
    secs.push_back(r.seconds);
    s.converged += r.converged ? 1 : 0;
  }
  s.realizations = static_cast<int>(records.size());
  s.mean_rfe = mean_of(rfe);
  s.std_rfe = sample_std(rfe);
  s.mean_noise_ratio = mean_of(noise);
  s.mean_iterations = mean_of(iters);
  s.mean_restarts = mean_of(restarts);
  s.mean_seconds = mean_of(secs);
  s.std_seconds = sample_std(secs);
  return s;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const int R = spec.realizations;
  std::vector<RunRecord> records(static_cast<std::size_t>(R));
  const int workers = std::min(spec.threads, R);
  if (workers <= 1) {
    for (int r = 0; r < R; ++r) records[static_cast<std::size_t>(r)] = run_realization(spec, r);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::atomic_flag failed;
    {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (int r; (r = next.fetch_add(1)) < R;) {
            try {
              records[static_cast<std::size_t>(r)] = run_realization(spec, r);
            } catch (...) {
              if (!failed.test_and_set()) error = std::current_exception();
            }
          }
        });
      }
    }
    if (error) std::rethrow_exception(error);
  }
  ExperimentResult out;
  out.summary = summarize(records);
  out.records = std::move(records);
  return out;
}

void write_experiment(const std::filesystem::path& dir, const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  const auto& recs = result.records;
  std::size_t n_errors = 0;
  for (const auto& r : recs) n_errors = std::max(n_errors, r.factor_errors.size());

  auto records = open_output(dir / "records.csv");
  records << "realization,rfe,noise_ratio,iterations,restarts,converged";
  for (std::size_t m = 1; m <= n_errors; ++m) records << ",factor_error_" << m;
  records << '\n';
  for (const auto& r : recs) {
    records << r.realization << ',' << format_double(r.rfe) << ','
            << format_double(r.noise_ratio) << ',' << r.iterations << ','
            << r.restarts << ',' << (r.converged ? "true" : "false");
    for (double e : r.factor_errors) records << ',' << format_double(e);
    records << '\n';
  }

  const ExperimentSummary& s = result.summary;
  char rounded[32];
  std::snprintf(rounded, sizeof rounded, "%.4f", s.mean_rfe);
  auto summary = open_output(dir / "summary.csv");
  summary << "realizations,mean_rfe,mean_rfe_4dp,std_rfe,mean_noise_ratio,"
             "mean_iterations,mean_restarts,converged\n"
          << s.realizations << ',' << format_double(s.mean_rfe) << ',' << rounded
          << ',' << format_double(s.std_rfe) << ','
          << format_double(s.mean_noise_ratio) << ','
          << format_double(s.mean_iterations) << ','
          << format_double(s.mean_restarts) << ',' << s.converged << '\n';

  auto timing = open_output(dir / "timing.csv");
  timing << "realization,seconds\n";
  for (const auto& r : recs) {
    timing << r.realization << ',' << format_double(r.seconds) << '\n';
  }
  auto timing_summary = open_output(dir / "timing_summary.csv");
  timing_summary << "mean_seconds,std_seconds\n"
                 << format_double(s.mean_seconds) << ','
                 << format_double(s.std_seconds) << '\n';

  const bool any_traj = std::any_of(recs.begin(), recs.end(), [](const RunRecord& r) {
    return !r.rfe_history.empty();
  });
  if (any_traj) {
    auto traj = open_output(dir / "trajectories.csv");
    traj << "realization,iteration,rfe\n";
    for (const auto& r : recs) {
      for (std::size_t it = 0; it < r.rfe_history.size(); ++it) {
        traj << r.realization << ',' << it + 1 << ','
             << format_double(r.rfe_history[it]) << '\n';
      }
    }
  }
}

}  // namespace cpadmm
