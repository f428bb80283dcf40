#pragma once

#include "cpadmm/constraints.hpp"
#include "cpadmm/solver.hpp"
#include "cpadmm/tensor.hpp"

#include <vector>

namespace cpadmm {

/// Row-block boundaries of every factor matrix.
class PartitionPlan {
 public:
  /// extents[m] lists the block heights of mode m; all must be positive.
  explicit PartitionPlan(std::vector<std::vector<Index>> extents);

  /// `blocks` near-equal row blocks per mode (larger blocks first).
  static PartitionPlan uniform(std::span<const Index> dims, Index blocks);

  [[nodiscard]] std::size_t order() const { return extents_.size(); }
  [[nodiscard]] Index blocks(std::size_t mode) const {
    return static_cast<Index>(extents_[mode].size());
  }
  [[nodiscard]] Index extent(std::size_t mode, Index b) const {
    return extents_[mode][static_cast<std::size_t>(b)];
  }
  [[nodiscard]] Index offset(std::size_t mode, Index b) const {
    return offsets_[mode][static_cast<std::size_t>(b)];
  }
  /// The common block count if every mode has the same, else -1.
  [[nodiscard]] Index mesh_size() const;

  /// Throws std::invalid_argument unless the extents sum to dims.
  void validate(std::span<const Index> dims) const;

  /// Rows of block b of a factor for `mode`.
  [[nodiscard]] Matrix rows(const Matrix& factor, std::size_t mode,
                            Index b) const {
    return factor.middleRows(offset(mode, b), extent(mode, b));
  }

 private:
  std::vector<std::vector<Index>> extents_;
  std::vector<std::vector<Index>> offsets_;
};

/// Mode whose row blocks index the columns of the mode-`mode` unfolding
/// blocks: the last mode, or the one before it when `mode` is last.
[[nodiscard]] std::size_t partner_mode(std::size_t mode, std::size_t order);

/// Block (i, j) of the mode-m unfolding is stored as the sub-tensor that
/// restricts mode m to row block i and the partner mode to block j; its own
/// mode-m unfolding is exactly that block of unfold(t, m).
class BlockGrid {
 public:
  BlockGrid(PartitionPlan plan, Dims dims,
            std::vector<std::vector<DenseTensor>> blocks);

  [[nodiscard]] const PartitionPlan& plan() const { return plan_; }
  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] std::size_t order() const { return dims_.size(); }

  [[nodiscard]] const DenseTensor& block(std::size_t mode, Index i,
                                         Index j) const;
  [[nodiscard]] Matrix unfolded_block(std::size_t mode, Index i, Index j) const {
    return unfold(block(mode, i, j), mode);
  }
  /// Concatenates the blocks back into the full mode-m unfolding.
  [[nodiscard]] Matrix reassemble(std::size_t mode) const;

 private:
  PartitionPlan plan_;
  Dims dims_;
  std::vector<std::vector<DenseTensor>> blocks_;  // [mode][i * N_partner + j]
};

[[nodiscard]] BlockGrid partition(const DenseTensor& t, const PartitionPlan& plan);

/// Left-to-right sequential sum, ((p0 + p1) + p2) + ...; the order is part of
/// the contract and makes distributed reductions bitwise reproducible.
[[nodiscard]] Matrix reduce_partials(std::span<const Matrix> partials);

/// Factor list used by block (i, j) of `mode`: the partner factor reduced to
/// its block j, the factor of `mode` left empty, others whole.
[[nodiscard]] std::vector<Matrix> local_factors(
    std::span<const Matrix> factors, const PartitionPlan& plan,
    std::size_t mode, Index partner_block);

/// Row block i of the factor update for `mode`, built from partial MTTKRP and
/// partial Gram sums over the partner blocks.
[[nodiscard]] Matrix block_factor_update(std::size_t mode, Index block,
                                         const BlockGrid& grid,
                                         const SolverState& state,
                                         const ConstraintSpec& spec);

}  // namespace cpadmm
