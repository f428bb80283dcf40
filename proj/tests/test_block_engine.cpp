#include "cpadmm/block_engine.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace cpadmm;
using namespace cpadmm::testing;

namespace {

// Random positive extents summing to d, at most d parts.
std::vector<Index> random_split(Index d, Index parts, Rng& rng) {
  parts = std::min(parts, d);
  std::vector<Index> e(static_cast<std::size_t>(parts), 1);
  for (Index r = d - parts; r > 0; --r) {
    ++e[static_cast<std::size_t>(uniform_int(rng, 0, parts - 1))];
  }
  return e;
}

PartitionPlan random_plan(const Dims& dims, Rng& rng) {
  std::vector<std::vector<Index>> ext;
  for (Index d : dims) ext.push_back(random_split(d, uniform_int(rng, 1, 4), rng));
  return PartitionPlan(ext);
}

TEST(PartitionPlan, UniformSplit) {
  const PartitionPlan p = PartitionPlan::uniform(Dims{7, 4, 5}, 3);
  EXPECT_EQ(p.extent(0, 0), 3);
  EXPECT_EQ(p.extent(0, 1), 2);
  EXPECT_EQ(p.extent(0, 2), 2);
  EXPECT_EQ(p.offset(0, 2), 5);
  EXPECT_EQ(p.extent(1, 0), 2);
  EXPECT_EQ(p.mesh_size(), 3);
  EXPECT_NO_THROW(p.validate(Dims{7, 4, 5}));
  EXPECT_THROW(p.validate(Dims{7, 4, 6}), std::invalid_argument);
  EXPECT_THROW(p.validate(Dims{7, 4, 5, 1}), std::invalid_argument);
  EXPECT_THROW((void)PartitionPlan::uniform(Dims{2, 4, 5}, 3), std::invalid_argument);
  EXPECT_THROW((void)PartitionPlan::uniform(Dims{2, 4, 5}, 0), std::invalid_argument);
}

TEST(PartitionPlan, Errors) {
  EXPECT_THROW(PartitionPlan({{1}, {1}}), std::invalid_argument);
  EXPECT_THROW(PartitionPlan({{1}, {1}, {0, 1}}), std::invalid_argument);
  EXPECT_THROW(PartitionPlan({{1}, {1}, {}}), std::invalid_argument);
  EXPECT_EQ(PartitionPlan({{1, 1}, {2}, {1, 1}}).mesh_size(), -1);
}

TEST(PartnerMode, LastOrPenultimate) {
  EXPECT_EQ(partner_mode(0, 3), 2u);
  EXPECT_EQ(partner_mode(1, 3), 2u);
  EXPECT_EQ(partner_mode(2, 3), 1u);
  EXPECT_EQ(partner_mode(0, 4), 3u);
  EXPECT_EQ(partner_mode(2, 4), 3u);
  EXPECT_EQ(partner_mode(3, 4), 2u);
}

TEST(BlockGrid, SingleBlockIsWholeUnfolding) {
  Rng rng(1);
  const DenseTensor t = random_tensor({3, 4, 5}, rng);
  const BlockGrid g = partition(t, PartitionPlan::uniform(t.dims(), 1));
  for (std::size_t m = 0; m < 3; ++m) EXPECT_EQ(g.unfolded_block(m, 0, 0), unfold(t, m));
}

TEST(BlockGrid, KnownBlockPosition) {
  std::vector<double> v(64);
  for (std::size_t n = 0; n < 64; ++n) v[n] = static_cast<double>(n);
  const DenseTensor t({4, 4, 4}, v);
  const BlockGrid g = partition(t, PartitionPlan::uniform(t.dims(), 2));
  // Columns of X^(1) are j + 4k; partner block 1 is k in {2, 3}.
  EXPECT_EQ(g.unfolded_block(0, 0, 1), unfold(t, 0).block(0, 8, 2, 8));
  EXPECT_EQ(g.unfolded_block(0, 1, 0), unfold(t, 0).block(2, 0, 2, 8));
  // Mode 3 pairs with mode 2, whose index j is the slow column index i + 4j.
  EXPECT_EQ(g.unfolded_block(2, 1, 1), unfold(t, 2).block(2, 8, 2, 8));
  EXPECT_THROW((void)g.block(0, 2, 0), std::out_of_range);
}

TEST(BlockGrid, BlocksMatchIndexOracle) {
  Rng rng(2);
  for (int n = 0; n < 100; ++n) {
    const Dims dims = random_dims(rng, 7);
    const DenseTensor t = random_tensor(dims, rng);
    const PartitionPlan plan = random_plan(dims, rng);
    const BlockGrid g = partition(t, plan);
    for (std::size_t m = 0; m < dims.size(); ++m) {
      const std::size_t p = partner_mode(m, dims.size());
      for (Index i = 0; i < plan.blocks(m); ++i) {
        for (Index j = 0; j < plan.blocks(p); ++j) {
          const Matrix b = g.unfolded_block(m, i, j);
          Dims local = dims;
          local[m] = plan.extent(m, i);
          local[p] = plan.extent(p, j);
          ASSERT_EQ(b.rows(), local[m]);
          for_each_index(local, [&](std::span<const Index> idx) {
            std::vector<Index> gi(idx.begin(), idx.end());
            gi[m] += plan.offset(m, i);
            gi[p] += plan.offset(p, j);
            ASSERT_EQ(b(idx[m], unfolding_column(local, idx, m)), t(gi));
          });
        }
      }
      ASSERT_EQ(g.reassemble(m), unfold(t, m));
    }
  }
}

TEST(BlockGrid, RejectsMismatchedBlocks) {
  Rng rng(3);
  const DenseTensor t = random_tensor({4, 4, 4}, rng);
  const PartitionPlan plan = PartitionPlan::uniform(t.dims(), 2);
  EXPECT_THROW(BlockGrid(plan, t.dims(), {}), std::invalid_argument);
  EXPECT_THROW((void)partition(t, PartitionPlan::uniform(Dims{4, 4, 5}, 2)),
               std::invalid_argument);
}

TEST(ReducePartials, LeftToRightSum) {
  const Matrix a = Matrix::Constant(2, 2, 1e16);
  const Matrix b = Matrix::Constant(2, 2, 1.0);
  const Matrix c = Matrix::Constant(2, 2, -1e16);
  const std::vector<Matrix> ps{a, b, c};
  // (1e16 + 1) rounds to 1e16, so the left fold gives exactly 0.
  EXPECT_TRUE(reduce_partials(ps).isZero(0.0));
  const std::vector<Matrix> one{b};
  EXPECT_EQ(reduce_partials(one), b);
  EXPECT_THROW((void)reduce_partials(std::span<const Matrix>{}), std::invalid_argument);
  const std::vector<Matrix> bad{a, Matrix::Zero(2, 3)};
  EXPECT_THROW((void)reduce_partials(bad), std::invalid_argument);
}

TEST(LocalFactors, PartnerBlockOnly) {
  Rng rng(4);
  const Dims dims{4, 5, 6};
  const auto f = random_factors(dims, 2, rng);
  const PartitionPlan plan = PartitionPlan::uniform(dims, 2);
  const auto lf = local_factors(f, plan, 0, 1);
  EXPECT_EQ(lf[0].rows(), 0);
  EXPECT_EQ(lf[1], f[1]);
  EXPECT_EQ(lf[2], f[2].middleRows(3, 3));
}

TEST(PartialSums, ReproduceMttkrpAndGram) {
  Rng rng(5);
  for (int n = 0; n < 100; ++n) {
    const Dims dims = random_dims(rng, 7);
    const DenseTensor t = random_tensor(dims, rng);
    const auto f = random_factors(dims, uniform_int(rng, 1, 4), rng);
    const PartitionPlan plan = random_plan(dims, rng);
    const BlockGrid g = partition(t, plan);
    for (std::size_t m = 0; m < dims.size(); ++m) {
      const std::size_t p = partner_mode(m, dims.size());
      const Matrix full = mttkrp(t, f, m);
      const Matrix gram = gram_hadamard(f, m);
      for (Index i = 0; i < plan.blocks(m); ++i) {
        std::vector<Matrix> mk;
        std::vector<Matrix> gr;
        for (Index j = 0; j < plan.blocks(p); ++j) {
          const auto lf = local_factors(f, plan, m, j);
          mk.push_back(mttkrp(g.block(m, i, j), lf, m));
          gr.push_back(gram_hadamard(lf, m));
        }
        ASSERT_LE(rel_diff(reduce_partials(mk), plan.rows(full, m, i)), 1e-12);
        ASSERT_LE(rel_diff(reduce_partials(gr), gram), 1e-12);
      }
    }
  }
}

TEST(BlockFactorUpdate, ConcatenationMatchesCentralized) {
  Rng rng(6);
  const ConstraintSpec kinds[] = {ConstraintSpec::non_negative(),
                                  ConstraintSpec::row_stochastic()};
  for (int n = 0; n < 100; ++n) {
    const Dims dims = random_dims(rng, 7);
    const DenseTensor t = random_tensor(dims, rng);
    const Index rank = uniform_int(rng, 1, 4);
    SolverState s;
    for (Index d : dims) {
      s.factors.push_back(uniform_matrix(d, rank, rng));
      s.aux.push_back(uniform_matrix(d, rank, rng));
      s.duals.push_back(uniform_matrix(d, rank, rng) - uniform_matrix(d, rank, rng));
      s.rho.push_back(0.1 + uniform01(rng));
    }
    const PartitionPlan plan = random_plan(dims, rng);
    const BlockGrid g = partition(t, plan);
    for (std::size_t m = 0; m < dims.size(); ++m) {
      const ConstraintSpec& spec = kinds[uniform_int(rng, 0, 1)];
      const Matrix ref = factor_update(s, t, m, spec);
      Matrix cat(ref.rows(), ref.cols());
      for (Index i = 0; i < plan.blocks(m); ++i) {
        cat.middleRows(plan.offset(m, i), plan.extent(m, i)) =
            block_factor_update(m, i, g, s, spec);
      }
      ASSERT_LE(rel_diff(cat, ref), 1e-12);
    }
  }
}

}  // namespace
