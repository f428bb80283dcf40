#include "cpadmm/block_engine.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace cpadmm {

PartitionPlan::PartitionPlan(std::vector<std::vector<Index>> extents)
    : extents_(std::move(extents)) {
  if (extents_.size() < kMinOrder || extents_.size() > kMaxOrder) {
    throw std::invalid_argument("partition plan order must be 3 or 4");
  }
  for (const auto& e : extents_) {
    if (e.empty()) throw std::invalid_argument("mode has no blocks");
    std::vector<Index> off;
    Index acc = 0;
    for (Index x : e) {
      if (x < 1) throw std::invalid_argument("block extents must be positive");
      off.push_back(acc);
      acc += x;
    }
    offsets_.push_back(std::move(off));
  }
}

PartitionPlan PartitionPlan::uniform(std::span<const Index> dims, Index blocks) {
  check_dims(dims);
  std::vector<std::vector<Index>> ext;
  for (Index d : dims) {
    if (blocks < 1 || blocks > d) {
      throw std::invalid_argument("cannot split extent " + std::to_string(d) +
                                  " into " + std::to_string(blocks) + " blocks");
    }
    std::vector<Index> e;
    for (Index b = 0; b < blocks; ++b) e.push_back(d / blocks + (b < d % blocks));
    ext.push_back(std::move(e));
  }
  return PartitionPlan(std::move(ext));
}

Index PartitionPlan::mesh_size() const {
  const Index n = blocks(0);
  for (std::size_t m = 1; m < order(); ++m) {
    if (blocks(m) != n) return -1;
  }
  return n;
}

void PartitionPlan::validate(std::span<const Index> dims) const {
  if (dims.size() != order()) {
    throw std::invalid_argument("partition plan order does not match tensor");
  }
  for (std::size_t m = 0; m < order(); ++m) {
    const Index sum = std::accumulate(extents_[m].begin(), extents_[m].end(),
                                      Index{0});
    if (sum != dims[m]) {
      throw std::invalid_argument("block extents of mode " + std::to_string(m) +
                                  " sum to " + std::to_string(sum) +
                                  ", tensor extent is " + std::to_string(dims[m]));
    }
  }
}

std::size_t partner_mode(std::size_t mode, std::size_t order) {
  if (mode >= order) throw std::invalid_argument("mode out of range");
  return mode + 1 == order ? order - 2 : order - 1;
}

BlockGrid::BlockGrid(PartitionPlan plan, Dims dims,
                     std::vector<std::vector<DenseTensor>> blocks)
    : plan_(std::move(plan)), dims_(std::move(dims)), blocks_(std::move(blocks)) {
  plan_.validate(dims_);
  if (blocks_.size() != dims_.size()) {
    throw std::invalid_argument("block grid needs one block set per mode");
  }
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    const std::size_t p = partner_mode(m, dims_.size());
    if (static_cast<Index>(blocks_[m].size()) != plan_.blocks(m) * plan_.blocks(p)) {
      throw std::invalid_argument("block count does not match partition plan");
    }
  }
}

const DenseTensor& BlockGrid::block(std::size_t mode, Index i, Index j) const {
  const std::size_t p = partner_mode(mode, order());
  if (i < 0 || i >= plan_.blocks(mode) || j < 0 || j >= plan_.blocks(p)) {
    throw std::out_of_range("block index out of range");
  }
  return blocks_[mode][static_cast<std::size_t>(i * plan_.blocks(p) + j)];
}

Matrix BlockGrid::reassemble(std::size_t mode) const {
  const std::size_t p = partner_mode(mode, order());
  Index stride = 1;  // columns per partner index
  for (std::size_t n = 0; n < order(); ++n) {
    if (n != mode && n != p) stride *= dims_[n];
  }
  Matrix out(dims_[mode], element_count(dims_) / dims_[mode]);
  for (Index i = 0; i < plan_.blocks(mode); ++i) {
    for (Index j = 0; j < plan_.blocks(p); ++j) {
      const Matrix b = unfolded_block(mode, i, j);
      out.block(plan_.offset(mode, i), plan_.offset(p, j) * stride, b.rows(),
                b.cols()) = b;
    }
  }
  return out;
}

BlockGrid partition(const DenseTensor& t, const PartitionPlan& plan) {
  plan.validate(t.dims());
  const std::size_t N = t.order();
  std::vector<std::vector<DenseTensor>> blocks(N);
  for (std::size_t m = 0; m < N; ++m) {
    const std::size_t p = partner_mode(m, N);
    for (Index i = 0; i < plan.blocks(m); ++i) {
      for (Index j = 0; j < plan.blocks(p); ++j) {
        Dims off(N, 0);
        Dims ext = t.dims();
        off[m] = plan.offset(m, i);
        ext[m] = plan.extent(m, i);
        off[p] = plan.offset(p, j);
        ext[p] = plan.extent(p, j);
        blocks[m].push_back(t.slice(off, ext));
      }
    }
  }
  return BlockGrid(plan, t.dims(), std::move(blocks));
}

Matrix reduce_partials(std::span<const Matrix> partials) {
  if (partials.empty()) throw std::invalid_argument("nothing to reduce");
  Matrix acc = partials.front();
  for (std::size_t n = 1; n < partials.size(); ++n) {
    if (partials[n].rows() != acc.rows() || partials[n].cols() != acc.cols()) {
      throw std::invalid_argument("partial sums differ in shape");
    }
    acc += partials[n];
  }
  return acc;
}

std::vector<Matrix> local_factors(std::span<const Matrix> factors,
                                  const PartitionPlan& plan, std::size_t mode,
                                  Index partner_block) {
  const std::size_t p = partner_mode(mode, factors.size());
  std::vector<Matrix> local(factors.begin(), factors.end());
  local[mode] = Matrix(0, factors[mode].cols());
  local[p] = plan.rows(factors[p], p, partner_block);
  return local;
}

Matrix block_factor_update(std::size_t mode, Index block, const BlockGrid& grid,
                           const SolverState& state, const ConstraintSpec& spec) {
  const PartitionPlan& plan = grid.plan();
  const std::size_t p = partner_mode(mode, grid.order());
  std::vector<Matrix> mttkrps;
  std::vector<Matrix> grams;
  for (Index j = 0; j < plan.blocks(p); ++j) {
    const auto local = local_factors(state.factors, plan, mode, j);
    mttkrps.push_back(mttkrp(grid.block(mode, block, j), local, mode));
    grams.push_back(gram_hadamard(local, mode));
  }
  return solve_factor_rows(reduce_partials(mttkrps), reduce_partials(grams),
                           state.rho[mode], plan.rows(state.aux[mode], mode, block),
                           plan.rows(state.duals[mode], mode, block), spec.kind());
}

}  // namespace cpadmm
