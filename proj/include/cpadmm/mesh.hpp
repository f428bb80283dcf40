#pragma once

#include "cpadmm/block_engine.hpp"
#include "cpadmm/constraints.hpp"
#include "cpadmm/solver.hpp"
#include "cpadmm/tensor.hpp"

#include <array>
#include <compare>
#include <deque>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpadmm {

/// Raised by the simulated network when a message violates the wave
/// schedule.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class MessageKind { FactorBroadcast, PartialMttkrp, PartialGram, BlockResult };
inline constexpr std::size_t kMessageKinds = 4;

[[nodiscard]] std::string to_string(MessageKind kind);

/// Mesh coordinate; the default value (-1, -1) denotes the host that injects
/// broadcasts and collects results.
struct PeCoord {
  Index row = -1;
  Index col = -1;

  [[nodiscard]] bool is_host() const { return row < 0; }
  friend auto operator<=>(const PeCoord&, const PeCoord&) = default;
};

[[nodiscard]] std::string to_string(const PeCoord& pe);

/// Waves are ordered by (epoch, iteration, step). The epoch counts state
/// installs (restarts); steps are the factor waves in mode order followed by
/// the auxiliary waves.
struct WaveTag {
  int epoch = 0;
  int iteration = 0;
  int step = 0;
  friend auto operator<=>(const WaveTag&, const WaveTag&) = default;
};

struct Message {
  MessageKind kind = MessageKind::BlockResult;
  PeCoord src;
  PeCoord dst;
  WaveTag wave;
  std::size_t mode = 0;
  Index block = 0;   // row block of `mode` the payload refers to
  double rho = 0.0;  // penalty of `mode`, carried by broadcasts
  std::vector<Matrix> payload;
};

/// In-process message passing with a wave barrier. Messages can only be sent
/// in the open wave, and a wave can only be closed once every message in it
/// was consumed.
class MessageNetwork {
 public:
  explicit MessageNetwork(std::ostream* trace = nullptr);

  void open(WaveTag wave);
  void send(Message msg);
  /// Removes and returns the oldest message of `kind` addressed to `dst`.
  [[nodiscard]] Message receive(PeCoord dst, MessageKind kind);
  void barrier();

  [[nodiscard]] const WaveTag& wave() const { return wave_; }
  [[nodiscard]] std::size_t sent() const { return sent_; }
  [[nodiscard]] const std::array<std::size_t, kMessageKinds>& sent_by_kind() const {
    return by_kind_;
  }

 private:
  std::ostream* trace_;
  WaveTag wave_;
  bool open_ = false;
  bool started_ = false;
  std::deque<Message> in_flight_;
  std::size_t sent_ = 0;
  std::array<std::size_t, kMessageKinds> by_kind_{};
};

struct MeshOptions {
  /// Worker threads for the per-PE compute phases; results do not depend on it.
  int threads = 1;
  /// CSV trace of every message (iteration, wave, kind, source, dest, dims).
  std::ostream* trace = nullptr;
};

struct MeshStats {
  std::vector<std::size_t> messages_per_iteration;
  std::array<std::size_t, kMessageKinds> by_kind{};
  std::size_t total = 0;
};

/// N x N mesh of processing elements. PE (i, j) stores block (i, j) of every
/// unfolding; the rightmost PE of row i owns row block i of every factor,
/// auxiliary matrix and dual. The host keeps a mirror of the state, built only
/// from received messages, for the residual and penalty logic.
class MeshSimulator final : public IterationKernel {
 public:
  MeshSimulator(const DenseTensor& t, const PartitionPlan& plan,
                std::vector<ConstraintSpec> specs, int inner_sweeps,
                MeshOptions options = {});

  void reset(const SolverState& state) override;
  void update(SolverState& state) override;

  [[nodiscard]] Index size() const { return n_; }
  [[nodiscard]] const MeshStats& stats() const { return stats_; }

 private:
  struct Owned {
    std::vector<Matrix> factors;
    std::vector<Matrix> aux;
    std::vector<Matrix> duals;
    std::vector<double> rho;
  };

  void factor_wave(SolverState& state, std::size_t mode, int step);
  void aux_wave(SolverState& state, std::size_t mode, int step);
  void open(int step);
  template <class Fn>
  void for_each_pe(Index count, Fn&& fn) const;

  BlockGrid grid_;
  std::vector<ConstraintSpec> specs_;
  int inner_sweeps_;
  MeshOptions options_;
  Index n_;
  MessageNetwork network_;
  std::vector<Owned> owned_;  // one per mesh row, held at its rightmost PE
  int epoch_ = 0;
  int iteration_ = 0;
  MeshStats stats_;
};

struct DistributedFitResult {
  FitResult fit;
  MeshStats stats;
};

/// Fit driven by the mesh simulator; shares the restart, stopping and penalty
/// logic with the centralized solver and follows the same trajectory.
[[nodiscard]] DistributedFitResult distributed_fit(
    const DenseTensor& t, Index rank, std::span<const ConstraintSpec> specs,
    const SolverConfig& config, const PartitionPlan& plan,
    MeshOptions options = {}, const FitObserver& observer = {});

/// Runs the centralized and the mesh kernel side by side from the same
/// initial state for a fixed number of iterations (no stopping test) and
/// returns, per iteration, the largest relative Frobenius deviation between
/// their factor and auxiliary matrices over all modes.
[[nodiscard]] std::vector<double> trajectory_deviation(
    const DenseTensor& t, Index rank, std::span<const ConstraintSpec> specs,
    const SolverConfig& config, const PartitionPlan& plan, int iterations,
    MeshOptions options = {});

/// Messages sent in one iteration on an N x N mesh.
[[nodiscard]] std::size_t expected_messages_per_iteration(
    std::span<const ConstraintSpec> specs, Index mesh_size, int inner_sweeps);

}  // namespace cpadmm
