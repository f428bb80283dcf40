#include "cpadmm/bench.hpp"
#include "cpadmm/mesh.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace cpadmm;
using namespace cpadmm::testing;

namespace {

std::vector<ConstraintSpec> nonneg(std::size_t order) {
  return std::vector<ConstraintSpec>(order, ConstraintSpec::non_negative());
}

double max_rel(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double d = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) d = std::max(d, rel_diff(a[m], b[m]));
  return d;
}

// Hand count of one iteration: per factor wave N broadcasts, N(N-1)
// forwards, 2N(N-1) partial hops and N results; per auxiliary wave N
// results, or gather + scatter + results for cardinality.
std::size_t hand_count(std::size_t order, std::size_t n, int sweeps,
                       std::size_t card_modes) {
  const std::size_t factor = n + n * (n - 1) + 2 * n * (n - 1) + n;
  return static_cast<std::size_t>(sweeps) * order * factor +
         (order - card_modes) * n + card_modes * 3 * n;
}

TEST(MessageNetwork, DeliversInOrder) {
  MessageNetwork net;
  net.open({1, 0, 0});
  Message a;
  a.kind = MessageKind::PartialGram;
  a.dst = {0, 1};
  a.wave = {1, 0, 0};
  a.payload = {Matrix::Constant(1, 1, 1.0)};
  Message b = a;
  b.payload = {Matrix::Constant(1, 1, 2.0)};
  net.send(a);
  net.send(b);
  EXPECT_EQ(net.receive({0, 1}, MessageKind::PartialGram).payload[0](0, 0), 1.0);
  EXPECT_EQ(net.receive({0, 1}, MessageKind::PartialGram).payload[0](0, 0), 2.0);
  net.barrier();
  EXPECT_EQ(net.sent(), 2u);
  EXPECT_EQ(net.sent_by_kind()[static_cast<std::size_t>(MessageKind::PartialGram)], 2u);
}

TEST(MessageNetwork, ProtocolViolations) {
  Message m;
  m.kind = MessageKind::PartialMttkrp;
  m.dst = {0, 0};
  m.wave = {1, 2, 3};
  m.payload = {Matrix::Zero(1, 1)};
  {
    MessageNetwork net;
    EXPECT_THROW(net.send(m), ProtocolError);  // no wave open
    EXPECT_THROW(net.barrier(), ProtocolError);
  }
  {
    MessageNetwork net;
    net.open({1, 2, 3});
    Message stale = m;
    stale.wave = {1, 2, 2};
    EXPECT_THROW(net.send(stale), ProtocolError);
    Message future = m;
    future.wave = {1, 3, 0};
    EXPECT_THROW(net.send(future), ProtocolError);
    Message older_epoch = m;
    older_epoch.wave = {0, 9, 9};
    EXPECT_THROW(net.send(older_epoch), ProtocolError);
    Message malformed = m;
    malformed.payload.push_back(Matrix::Zero(1, 1));
    EXPECT_THROW(net.send(malformed), ProtocolError);
    EXPECT_THROW((void)net.receive({0, 0}, MessageKind::PartialMttkrp), ProtocolError);
    net.send(m);
    EXPECT_THROW((void)net.receive({0, 0}, MessageKind::PartialGram), ProtocolError);
    EXPECT_THROW((void)net.receive({0, 1}, MessageKind::PartialMttkrp), ProtocolError);
    EXPECT_THROW(net.open({1, 2, 4}), ProtocolError);  // previous still open
    EXPECT_THROW(net.barrier(), ProtocolError);        // undelivered
    (void)net.receive({0, 0}, MessageKind::PartialMttkrp);
    net.barrier();
    EXPECT_THROW(net.open({1, 2, 3}), ProtocolError);  // not increasing
    EXPECT_THROW(net.open({1, 1, 9}), ProtocolError);
    EXPECT_NO_THROW(net.open({2, 0, 0}));
  }
  {
    MessageNetwork net;
    net.open({1, 0, 0});
    Message bcast;
    bcast.kind = MessageKind::FactorBroadcast;
    bcast.wave = {1, 0, 0};
    bcast.mode = 0;
    bcast.rho = 1.0;
    bcast.payload = {Matrix::Zero(2, 1), Matrix::Zero(2, 1), Matrix::Zero(2, 1)};
    EXPECT_THROW(net.send(bcast), ProtocolError);  // mode 0 must be empty
    bcast.payload[0] = Matrix();
    bcast.rho = 0.0;
    EXPECT_THROW(net.send(bcast), ProtocolError);
  }
}

TEST(MeshSimulator, RejectsBadSetup) {
  Rng rng(1);
  const DenseTensor t = random_tensor({4, 4, 4}, rng);
  const PartitionPlan unequal({{2, 2}, {4}, {2, 2}});
  EXPECT_THROW(MeshSimulator(t, unequal, nonneg(3), 1), std::invalid_argument);
  const PartitionPlan plan = PartitionPlan::uniform(t.dims(), 2);
  EXPECT_THROW(MeshSimulator(t, plan, nonneg(2), 1), std::invalid_argument);
  EXPECT_THROW(MeshSimulator(t, plan, nonneg(3), 0), std::invalid_argument);
  MeshOptions o;
  o.threads = 0;
  EXPECT_THROW(MeshSimulator(t, plan, nonneg(3), 1, o), std::invalid_argument);
  MeshSimulator sim(t, plan, nonneg(3), 1);
  SolverConfig c;
  SolverState s = init_state(t.dims(), 2, nonneg(3), c);
  EXPECT_THROW(sim.update(s), ProtocolError);  // no state installed
}

TEST(DistributedFit, SingleBlockIsBitwiseCentralized) {
  const SyntheticData d = generate(Dims{8, 7, 6}, 2, 1e-2, 3);
  SolverConfig c;
  c.seed = 4;
  const FitResult ref = fit(d.tensor, 2, nonneg(3), c);
  const DistributedFitResult r = distributed_fit(
      d.tensor, 2, nonneg(3), c, PartitionPlan::uniform(d.tensor.dims(), 1));
  EXPECT_EQ(r.fit.rfe, ref.rfe);
  EXPECT_EQ(r.fit.iterations, ref.iterations);
  EXPECT_EQ(r.fit.converged, ref.converged);
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_EQ(r.fit.model.factors[m], ref.model.factors[m]);
    EXPECT_EQ(r.fit.state.duals[m], ref.state.duals[m]);
  }
  EXPECT_EQ(r.fit.state.rho, ref.state.rho);
}

TEST(DistributedFit, TwoByTwoMatchesCentralized) {
  const SyntheticData d = generate(Dims{8, 8, 8}, 2, 1e-3, 5);
  SolverConfig c;
  c.seed = 6;
  const FitResult ref = fit(d.tensor, 2, nonneg(3), c);
  const DistributedFitResult r = distributed_fit(
      d.tensor, 2, nonneg(3), c, PartitionPlan::uniform(d.tensor.dims(), 2));
  EXPECT_EQ(r.fit.iterations, ref.iterations);
  EXPECT_LE(max_rel(r.fit.model.factors, ref.model.factors), 1e-12);
  EXPECT_NEAR(r.fit.rfe, ref.rfe, 1e-12);
  const std::size_t per = expected_messages_per_iteration(nonneg(3), 2, 1);
  ASSERT_EQ(r.stats.messages_per_iteration.size(),
            static_cast<std::size_t>(r.fit.iterations));
  for (std::size_t n : r.stats.messages_per_iteration) EXPECT_EQ(n, per);
  EXPECT_EQ(r.stats.total, per * static_cast<std::size_t>(r.fit.iterations));
}

TEST(TrajectoryDeviation, RandomInstances) {
  Rng rng(7);
  for (int n = 0; n < 12; ++n) {
    const Dims dims = random_dims(rng, 12, 3);
    const Index mesh = uniform_int(rng, 1, std::min<Index>(3, *std::min_element(
                                                              dims.begin(), dims.end())));
    const Index rank = uniform_int(rng, 1, 4);
    const SyntheticData d = generate(dims, rank, 1e-2, static_cast<std::uint64_t>(n));
    SolverConfig c;
    c.seed = static_cast<std::uint64_t>(100 + n);
    const auto dev = trajectory_deviation(d.tensor, rank, nonneg(3), c,
                                          PartitionPlan::uniform(dims, mesh), 50);
    ASSERT_EQ(dev.size(), 50u);
    EXPECT_LE(*std::max_element(dev.begin(), dev.end()), 1e-12)
        << "instance " << n << " mesh " << mesh;
  }
}

TEST(TrajectoryDeviation, OrderFourAndMixedConstraints) {
  const Dims dims{5, 6, 4, 6};
  const std::vector<ConstraintSpec> specs{
      ConstraintSpec::row_stochastic(), ConstraintSpec::cardinality(8),
      ConstraintSpec::non_negative(), ConstraintSpec::non_negative()};
  const SyntheticData d = generate(dims, 2, 1e-2, 9, specs);
  SolverConfig c;
  c.seed = 2;
  for (Index mesh : {2, 3}) {
    const auto dev = trajectory_deviation(d.tensor, 2, specs, c,
                                          PartitionPlan::uniform(dims, mesh), 40);
    EXPECT_LE(*std::max_element(dev.begin(), dev.end()), 1e-12) << mesh;
  }
}

TEST(MessageCount, MatchesHandCount) {
  struct Case {
    std::vector<ConstraintSpec> specs;
    Index mesh;
    int sweeps;
    std::size_t card;
  };
  const std::vector<Case> cases{
      {nonneg(3), 2, 1, 0},
      {nonneg(3), 3, 1, 0},
      {nonneg(3), 2, 2, 0},
      {{ConstraintSpec::cardinality(10), ConstraintSpec::non_negative(),
        ConstraintSpec::row_stochastic()},
       2, 1, 1},
      {nonneg(4), 2, 1, 0},
  };
  EXPECT_EQ(hand_count(3, 2, 1, 0), 36u);
  for (const auto& k : cases) {
    const std::size_t order = k.specs.size();
    Dims dims(order, 6);
    const SyntheticData d = generate(dims, 2, 1e-2, 1, k.specs);
    SolverConfig c;
    c.inner_sweeps = k.sweeps;
    c.n_max = 5;
    c.max_restarts = 0;
    const std::size_t expect =
        hand_count(order, static_cast<std::size_t>(k.mesh), k.sweeps, k.card);
    EXPECT_EQ(expected_messages_per_iteration(k.specs, k.mesh, k.sweeps), expect);
    const DistributedFitResult r = distributed_fit(
        d.tensor, 2, k.specs, c, PartitionPlan::uniform(dims, k.mesh));
    for (std::size_t n : r.stats.messages_per_iteration) EXPECT_EQ(n, expect);
    std::size_t by_kind = 0;
    for (std::size_t n : r.stats.by_kind) by_kind += n;
    EXPECT_EQ(by_kind, r.stats.total);
  }
}

TEST(MeshSimulator, ThreadCountDoesNotChangeBits) {
  const SyntheticData d = generate(Dims{9, 9, 9}, 3, 1e-2, 11);
  SolverConfig c;
  c.seed = 5;
  const PartitionPlan plan = PartitionPlan::uniform(d.tensor.dims(), 3);
  MeshOptions one;
  MeshOptions three;
  three.threads = 3;
  const auto a = distributed_fit(d.tensor, 3, nonneg(3), c, plan, one);
  const auto b = distributed_fit(d.tensor, 3, nonneg(3), c, plan, three);
  EXPECT_EQ(a.fit.rfe, b.fit.rfe);
  EXPECT_EQ(a.fit.iterations, b.fit.iterations);
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_EQ(a.fit.model.factors[m], b.fit.model.factors[m]);
  }
}

TEST(MeshSimulator, TraceHasOneLinePerMessage) {
  const SyntheticData d = generate(Dims{6, 6, 6}, 2, 1e-2, 2);
  SolverConfig c;
  c.n_max = 3;
  c.max_restarts = 1;
  std::ostringstream trace;
  MeshOptions o;
  o.trace = &trace;
  const auto r = distributed_fit(d.tensor, 2, nonneg(3), c,
                                 PartitionPlan::uniform(d.tensor.dims(), 2), o);
  std::istringstream in(trace.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,iteration,wave,kind,source,dest,payload");
  std::size_t lines = 0;
  std::size_t epoch2 = 0;
  while (std::getline(in, line)) {
    ++lines;
    if (line.rfind("2,", 0) == 0) ++epoch2;
  }
  EXPECT_EQ(lines, r.stats.total);
  if (r.fit.restarts > 0) EXPECT_GT(epoch2, 0u);
}

}  // namespace
