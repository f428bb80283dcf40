#include "cpadmm/mesh.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <ostream>
#include <thread>

namespace cpadmm {

std::string to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::FactorBroadcast: return "factor_broadcast";
    case MessageKind::PartialMttkrp: return "partial_mttkrp";
    case MessageKind::PartialGram: return "partial_gram";
    case MessageKind::BlockResult: return "block_result";
  }
  return "unknown";
}

std::string to_string(const PeCoord& pe) {
  if (pe.is_host()) return "host";
  return "(" + std::to_string(pe.row) + " " + std::to_string(pe.col) + ")";
}

namespace {

void check_payload(const Message& msg) {
  auto fail = [&](const char* what) {
    throw ProtocolError(to_string(msg.kind) + " message " + what);
  };
  const auto& p = msg.payload;
  switch (msg.kind) {
    case MessageKind::FactorBroadcast:
      if (p.size() < kMinOrder || p.size() > kMaxOrder) fail("needs one matrix per mode");
      if (p[msg.mode].rows() != 0) fail("must leave the updated mode empty");
      if (!(msg.rho > 0.0)) fail("carries a non-positive penalty");
      break;
    case MessageKind::PartialMttkrp:
      if (p.size() != 1) fail("needs exactly one matrix");
      break;
    case MessageKind::PartialGram:
      if (p.size() != 1 || p[0].rows() != p[0].cols()) fail("needs one square matrix");
      break;
    case MessageKind::BlockResult:
      if (p.empty() || p.size() > 2) fail("needs one or two matrices");
      if (p.size() == 2 &&
          (p[0].rows() != p[1].rows() || p[0].cols() != p[1].cols())) {
        fail("matrices differ in shape");
      }
      break;
  }
  if (!msg.src.is_host() && !msg.dst.is_host() && msg.src == msg.dst) {
    fail("is addressed to its sender");
  }
}

}  // namespace

MessageNetwork::MessageNetwork(std::ostream* trace) : trace_(trace) {
  if (trace_) *trace_ << "epoch,iteration,wave,kind,source,dest,payload\n";
}

void MessageNetwork::open(WaveTag wave) {
  if (open_) throw ProtocolError("wave opened before the previous barrier");
  if (started_ && !(wave_ < wave)) {
    throw ProtocolError("wave tags must increase strictly");
  }
  wave_ = wave;
  open_ = true;
  started_ = true;
}

void MessageNetwork::send(Message msg) {
  if (!open_) throw ProtocolError("message sent outside a wave");
  if (msg.wave != wave_) {
    throw ProtocolError(msg.wave < wave_ ? "stale wave tag" : "message from a future wave");
  }
  check_payload(msg);
  if (trace_) {
    *trace_ << msg.wave.epoch << ',' << msg.wave.iteration << ',' << msg.wave.step
            << ',' << to_string(msg.kind) << ',' << to_string(msg.src) << ','
            << to_string(msg.dst) << ',';
    for (std::size_t n = 0; n < msg.payload.size(); ++n) {
      *trace_ << (n ? ";" : "") << msg.payload[n].rows() << 'x'
              << msg.payload[n].cols();
    }
    *trace_ << '\n';
  }
  ++sent_;
  ++by_kind_[static_cast<std::size_t>(msg.kind)];
  in_flight_.push_back(std::move(msg));
}

Message MessageNetwork::receive(PeCoord dst, MessageKind kind) {
  const auto it = std::find_if(in_flight_.begin(), in_flight_.end(),
                               [&](const Message& m) {
                                 return m.dst == dst && m.kind == kind;
                               });
  if (it == in_flight_.end()) {
    throw ProtocolError("no " + to_string(kind) + " message waiting at " +
                        to_string(dst));
  }
  Message msg = std::move(*it);
  in_flight_.erase(it);
  return msg;
}

void MessageNetwork::barrier() {
  if (!open_) throw ProtocolError("barrier without an open wave");
  if (!in_flight_.empty()) {
    throw ProtocolError(std::to_string(in_flight_.size()) +
                        " message(s) undelivered at the wave barrier");
  }
  open_ = false;
}

MeshSimulator::MeshSimulator(const DenseTensor& t, const PartitionPlan& plan,
                             std::vector<ConstraintSpec> specs, int inner_sweeps,
                             MeshOptions options)
    : grid_(partition(t, plan)),
      specs_(std::move(specs)),
      inner_sweeps_(inner_sweeps),
      options_(options),
      n_(plan.mesh_size()),
      network_(options.trace) {
  if (n_ < 1) {
    throw std::invalid_argument("the mesh needs the same block count in every mode");
  }
  if (specs_.size() != t.order()) {
    throw std::invalid_argument("need one constraint per mode");
  }
  if (inner_sweeps_ < 1) throw std::invalid_argument("inner_sweeps must be at least 1");
  if (options_.threads < 1) throw std::invalid_argument("threads must be at least 1");
  owned_.resize(static_cast<std::size_t>(n_));
}

template <class Fn>
void MeshSimulator::for_each_pe(Index count, Fn&& fn) const {
  const auto workers = static_cast<Index>(
      std::min<Index>(options_.threads, count));
  if (workers <= 1) {
    for (Index k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::jthread> pool;
  std::exception_ptr error;
  std::atomic_flag failed;
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (Index k; (k = next.fetch_add(1)) < count;) {
        try {
          fn(k);
        } catch (...) {
          if (!failed.test_and_set()) error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

void MeshSimulator::reset(const SolverState& state) {
  state.validate();
  ++epoch_;
  iteration_ = 0;
  const PartitionPlan& plan = grid_.plan();
  for (Index i = 0; i < n_; ++i) {
    Owned& o = owned_[static_cast<std::size_t>(i)];
    o = {};
    for (std::size_t m = 0; m < state.order(); ++m) {
      o.factors.push_back(plan.rows(state.factors[m], m, i));
      o.aux.push_back(plan.rows(state.aux[m], m, i));
      o.duals.push_back(plan.rows(state.duals[m], m, i));
      o.rho.push_back(state.rho[m]);
    }
  }
}

void MeshSimulator::open(int step) {
  network_.open({epoch_, iteration_, step});
}

void MeshSimulator::update(SolverState& state) {
  if (epoch_ == 0) throw ProtocolError("mesh used before a state was installed");
  const std::size_t before = network_.sent();
  const std::size_t N = state.order();
  int step = 0;
  for (int sweep = 0; sweep < inner_sweeps_; ++sweep) {
    for (std::size_t m = 0; m < N; ++m) factor_wave(state, m, step++);
  }
  for (std::size_t m = 0; m < N; ++m) aux_wave(state, m, step++);
  ++iteration_;

  stats_.messages_per_iteration.push_back(network_.sent() - before);
  stats_.by_kind = network_.sent_by_kind();
  stats_.total = network_.sent();
}

void MeshSimulator::factor_wave(SolverState& state, std::size_t mode, int step) {
  const PartitionPlan& plan = grid_.plan();
  const WaveTag wave{epoch_, iteration_, step};
  const PeCoord host;
  open(step);

  // Host injects the current factors into the top row; column j gets the
  // partner factor restricted to its block j.
  for (Index j = 0; j < n_; ++j) {
    Message msg{MessageKind::FactorBroadcast, host, {0, j}, wave, mode, j,
                state.rho[mode], local_factors(state.factors, plan, mode, j)};
    network_.send(std::move(msg));
  }
  const auto pe_count = static_cast<std::size_t>(n_ * n_);
  std::vector<std::vector<Matrix>> local(pe_count);
  std::vector<double> rho(pe_count);
  for (Index i = 0; i < n_; ++i) {
    for (Index j = 0; j < n_; ++j) {
      Message msg = network_.receive({i, j}, MessageKind::FactorBroadcast);
      if (i + 1 < n_) {
        Message fwd = msg;
        fwd.src = {i, j};
        fwd.dst = {i + 1, j};
        network_.send(std::move(fwd));
      }
      const auto k = static_cast<std::size_t>(i * n_ + j);
      rho[k] = msg.rho;
      local[k] = std::move(msg.payload);
    }
  }

  std::vector<Matrix> part_m(pe_count);
  std::vector<Matrix> part_g(pe_count);
  for_each_pe(n_ * n_, [&](Index k) {
    const Index i = k / n_;
    const Index j = k % n_;
    const auto s = static_cast<std::size_t>(k);
    part_m[s] = mttkrp(grid_.block(mode, i, j), local[s], mode);
    part_g[s] = gram_hadamard(local[s], mode);
  });

  // Partial sums travel left to right along each mesh row.
  std::vector<Matrix> sum_m(static_cast<std::size_t>(n_));
  std::vector<Matrix> sum_g(static_cast<std::size_t>(n_));
  for (Index i = 0; i < n_; ++i) {
    const auto row = static_cast<std::size_t>(i * n_);
    Matrix acc_m = part_m[row];
    Matrix acc_g = part_g[row];
    for (Index j = 1; j < n_; ++j) {
      network_.send({MessageKind::PartialMttkrp, {i, j - 1}, {i, j}, wave, mode, i,
                     0.0, {std::move(acc_m)}});
      network_.send({MessageKind::PartialGram, {i, j - 1}, {i, j}, wave, mode, i,
                     0.0, {std::move(acc_g)}});
      Message in_m = network_.receive({i, j}, MessageKind::PartialMttkrp);
      Message in_g = network_.receive({i, j}, MessageKind::PartialGram);
      const auto s = row + static_cast<std::size_t>(j);
      const Matrix terms_m[] = {std::move(in_m.payload[0]), part_m[s]};
      const Matrix terms_g[] = {std::move(in_g.payload[0]), part_g[s]};
      acc_m = reduce_partials(terms_m);
      acc_g = reduce_partials(terms_g);
    }
    sum_m[static_cast<std::size_t>(i)] = std::move(acc_m);
    sum_g[static_cast<std::size_t>(i)] = std::move(acc_g);
  }

  const ConstraintKind kind = specs_[mode].kind();
  for_each_pe(n_, [&](Index i) {
    Owned& o = owned_[static_cast<std::size_t>(i)];
    o.rho[mode] = rho[static_cast<std::size_t>(i * n_ + n_ - 1)];
    o.factors[mode] = solve_factor_rows(sum_m[static_cast<std::size_t>(i)],
                                        sum_g[static_cast<std::size_t>(i)],
                                        o.rho[mode], o.aux[mode], o.duals[mode],
                                        kind);
  });
  for (Index i = 0; i < n_; ++i) {
    network_.send({MessageKind::BlockResult, {i, n_ - 1}, host, wave, mode, i, 0.0,
                   {owned_[static_cast<std::size_t>(i)].factors[mode]}});
  }
  for (Index i = 0; i < n_; ++i) {
    Message msg = network_.receive(host, MessageKind::BlockResult);
    state.factors[mode].middleRows(plan.offset(mode, msg.block),
                                   plan.extent(mode, msg.block)) = msg.payload[0];
  }
  network_.barrier();
}

void MeshSimulator::aux_wave(SolverState& state, std::size_t mode, int step) {
  const PartitionPlan& plan = grid_.plan();
  const WaveTag wave{epoch_, iteration_, step};
  const PeCoord host;
  const ConstraintSpec& spec = specs_[mode];
  open(step);

  auto rows_of = [&](Matrix& full, Index block) {
    return full.middleRows(plan.offset(mode, block), plan.extent(mode, block));
  };

  if (spec.row_separable()) {
    for_each_pe(n_, [&](Index i) {
      Owned& o = owned_[static_cast<std::size_t>(i)];
      o.aux[mode] = aux_from(o.factors[mode], o.duals[mode], o.rho[mode], spec);
      o.duals[mode] = dual_from(o.duals[mode], o.factors[mode], o.aux[mode],
                                o.rho[mode]);
    });
  } else {
    // The projection couples all rows: gather the arguments at the host,
    // project there and scatter the blocks back.
    for (Index i = 0; i < n_; ++i) {
      const Owned& o = owned_[static_cast<std::size_t>(i)];
      network_.send({MessageKind::BlockResult, {i, n_ - 1}, host, wave, mode, i, 0.0,
                     {o.factors[mode], o.duals[mode]}});
    }
    Matrix factor(state.factors[mode].rows(), state.factors[mode].cols());
    Matrix dual(factor.rows(), factor.cols());
    for (Index i = 0; i < n_; ++i) {
      Message msg = network_.receive(host, MessageKind::BlockResult);
      rows_of(factor, msg.block) = msg.payload[0];
      rows_of(dual, msg.block) = msg.payload[1];
    }
    Matrix aux = aux_from(factor, dual, state.rho[mode], spec);
    for (Index i = 0; i < n_; ++i) {
      network_.send({MessageKind::BlockResult, host, {i, n_ - 1}, wave, mode, i, 0.0,
                     {Matrix(rows_of(aux, i))}});
    }
    for (Index i = 0; i < n_; ++i) {
      Owned& o = owned_[static_cast<std::size_t>(i)];
      Message msg = network_.receive({i, n_ - 1}, MessageKind::BlockResult);
      o.aux[mode] = std::move(msg.payload[0]);
      o.duals[mode] = dual_from(o.duals[mode], o.factors[mode], o.aux[mode],
                                o.rho[mode]);
    }
  }

  for (Index i = 0; i < n_; ++i) {
    const Owned& o = owned_[static_cast<std::size_t>(i)];
    network_.send({MessageKind::BlockResult, {i, n_ - 1}, host, wave, mode, i, 0.0,
                   {o.aux[mode], o.duals[mode]}});
  }
  for (Index i = 0; i < n_; ++i) {
    Message msg = network_.receive(host, MessageKind::BlockResult);
    rows_of(state.aux[mode], msg.block) = msg.payload[0];
    rows_of(state.duals[mode], msg.block) = msg.payload[1];
  }
  network_.barrier();
}

DistributedFitResult distributed_fit(const DenseTensor& t, Index rank,
                                     std::span<const ConstraintSpec> specs,
                                     const SolverConfig& config,
                                     const PartitionPlan& plan,
                                     MeshOptions options,
                                     const FitObserver& observer) {
  config.validate();
  MeshSimulator mesh(t, plan, {specs.begin(), specs.end()}, config.inner_sweeps,
                     options);
  DistributedFitResult out;
  out.fit = run_fit(t, rank, specs, config, mesh, observer);
  out.stats = mesh.stats();
  return out;
}

namespace {

double relative_deviation(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

}  // namespace

std::vector<double> trajectory_deviation(const DenseTensor& t, Index rank,
                                         std::span<const ConstraintSpec> specs,
                                         const SolverConfig& config,
                                         const PartitionPlan& plan, int iterations,
                                         MeshOptions options) {
  SolverState central = init_state(t.dims(), rank, specs, config);
  SolverState mesh_state = central;
  CentralizedKernel reference(t, {specs.begin(), specs.end()}, config.inner_sweeps);
  MeshSimulator mesh(t, plan, {specs.begin(), specs.end()}, config.inner_sweeps,
                     options);
  reference.reset(central);
  mesh.reset(mesh_state);
  std::vector<double> out;
  for (int it = 0; it < iterations; ++it) {
    (void)advance(central, reference, config);
    (void)advance(mesh_state, mesh, config);
    double worst = 0.0;
    for (std::size_t m = 0; m < central.order(); ++m) {
      worst = std::max({worst, relative_deviation(central.factors[m], mesh_state.factors[m]),
                        relative_deviation(central.aux[m], mesh_state.aux[m])});
    }
    out.push_back(worst);
  }
  return out;
}

std::size_t expected_messages_per_iteration(std::span<const ConstraintSpec> specs,
                                            Index mesh_size, int inner_sweeps) {
  const auto n = static_cast<std::size_t>(mesh_size);
  const std::size_t modes = specs.size();
  // Per factor wave: n injections, n(n-1) top-down forwards, 2n(n-1) partial
  // sum hops and n results.
  const std::size_t factor_wave = 2 * n + 3 * n * (n - 1);
  std::size_t total = static_cast<std::size_t>(inner_sweeps) * modes * factor_wave;
  for (const auto& s : specs) total += s.row_separable() ? n : 3 * n;
  return total;
}

}  // namespace cpadmm
