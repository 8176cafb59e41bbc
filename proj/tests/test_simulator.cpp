// Copyright 2026 the pimann authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include <gtest/gtest.h>

#include <map>
#include <set>

#include "oracles.hpp"
#include "pimann/error.hpp"
#include "pimann/simulator.hpp"

namespace pimann {
namespace {

struct UniformCosts {
  double prep = 1e-6;
  uint32_t payload = 52;
  double pu_time = 5e-6;
  uint32_t result = 320;
  double rerank = 2e-7;
  double merge = 2e-7;
};

// Records of query q go round-robin over the PUs.
Workload uniform_workload(size_t nq, size_t n_pus, size_t per_query, const UniformCosts& c) {
  Workload w;
  w.n_pus = n_pus;
  for (size_t q = 0; q < nq; ++q) {
    QueryWork qw{c.prep, c.merge, static_cast<uint32_t>(w.records.size()), static_cast<uint32_t>(per_query)};
    w.queries.push_back(qw);
    for (size_t j = 0; j < per_query; ++j) {
      WorkRecord r;
      r.query = static_cast<uint32_t>(q);
      r.cluster = static_cast<ClusterId>(j);
      r.pu = static_cast<uint32_t>((q * per_query + j) % n_pus);
      r.pu_time = c.pu_time;
      r.candidates = 40;
      r.payload_bytes = c.payload;
      r.result_bytes = c.result;
      r.rerank_time = c.rerank;
      w.records.push_back(r);
    }
  }
  return w;
}

PipelineConfig pipe(Strategy s, size_t nb = 0, double wait = -1) {
  PipelineConfig p;
  p.strategy = s;
  p.batch_threshold = nb;
  p.wait_limit = wait;
  return p;
}

constexpr Strategy kAll[] = {Strategy::kBatchSync, Strategy::kPerQuery, Strategy::kMiniBatch};

TEST(Simulator, OneQueryOnePuIsSumOfStages) {
  PimSystemModel m;
  m.n_pus = 1;
  const UniformCosts c;
  const Workload w = uniform_workload(1, 1, 1, c);
  const double want = c.prep + transfer_time(c.payload, m.link) + m.launch + c.pu_time +
                      transfer_time(c.result, m.link) + c.rerank + c.merge;
  for (Strategy s : kAll) {
    const SimReport r = simulate_workload(w, m, pipe(s));
    EXPECT_NEAR(r.makespan, want, 1e-12 * want) << to_string(s);
    EXPECT_NEAR(r.busy.prep + r.busy.push + r.busy.proc + r.busy.pull + r.busy.rerank, want, 1e-12 * want);
    EXPECT_DOUBLE_EQ(r.qps, 1.0 / r.makespan);
  }
}

struct SteadyCase {
  const char* name;
  UniformCosts costs;
  size_t nb;
};

TEST(Simulator, SteadyStateMatchesSlowestStage) {
  const SteadyCase cases[] = {
      {"host-prep", {2e-6, 52, 5e-6, 320, 2e-7, 2e-7}, 16},
      {"pu-bound", {1e-7, 52, 4e-5, 320, 1e-7, 1e-7}, 16},
      {"post-bound", {1e-7, 52, 2e-6, 320, 2e-6, 1e-6}, 8},
  };
  PimSystemModel m;
  m.n_pus = 16;
  for (const auto& sc : cases) {
    const Workload w = uniform_workload(4000, 16, 8, sc.costs);
    const StageCosts st = stage_costs(w.mean_costs(), m);
    const double pre = st.pre(sc.nb), proc = st.proc(sc.nb), post = st.post(sc.nb);
    const SimReport r = simulate_workload(w, m, pipe(Strategy::kMiniBatch, sc.nb, 1.0));
    const double predicted = 8.0 * std::max({pre, proc, post}) / static_cast<double>(sc.nb);
    EXPECT_NEAR(r.steady_per_query / predicted, 1.0, 0.05)
        << sc.name << " pre=" << pre << " proc=" << proc << " post=" << post;
    EXPECT_EQ(r.timeout_flushes, 0u) << sc.name;
  }
}

struct SweepResult {
  size_t n_star = 0;
  size_t argmin = 0;
  double at_n_star = 0;
  double best = 0;
};

SweepResult sweep_batch_threshold(const Workload& w, const PimSystemModel& m) {
  SweepResult r;
  r.n_star = optimal_minibatch(workload_stage_costs(w, m), 64).n_star;
  r.best = 1e300;
  for (size_t nb = 1; nb <= 64; ++nb) {
    const double t = simulate_workload(w, m, pipe(Strategy::kMiniBatch, nb, 1.0)).steady_per_query;
    if (t < r.best) r.best = t, r.argmin = nb;
    if (nb == r.n_star) r.at_n_star = t;
  }
  return r;
}

PimSystemModel slow_link_model() {
  PimSystemModel m;
  m.n_pus = 16;
  m.link.t0 = 5e-6;
  m.link.bandwidth = 2.68e9;
  return m;
}

TEST(Simulator, OptimizerMatchesSimulatedSweep) {
  // Return transfers cross the knee at 26 records, a sharp optimum.
  const Workload w = uniform_workload(3000, 16, 8, {1.5e-7, 52, 1e-6, 320, 1e-8, 3e-8});
  const SweepResult r = sweep_batch_threshold(w, slow_link_model());
  EXPECT_GT(r.n_star, 1u);
  EXPECT_LT(r.n_star, 64u);
  EXPECT_LE(std::abs(static_cast<long>(r.argmin) - static_cast<long>(r.n_star)), 1)
      << "sweep " << r.argmin << " optimizer " << r.n_star;
}

TEST(Simulator, OptimizerNearSweepMinimumOnPlateau) {
  // PU and return stages balance over a wide range of N, so the curve is
  // flat and only the attained time is meaningful.
  const Workload w = uniform_workload(3000, 16, 8, {1.5e-7, 52, 6e-6, 320, 1e-8, 3e-8});
  const SweepResult r = sweep_batch_threshold(w, slow_link_model());
  EXPECT_LE(r.at_n_star, 1.05 * r.best) << "sweep " << r.argmin << " optimizer " << r.n_star;
}

TEST(Simulator, BottleneckPuSetsProcessingStage) {
  PimSystemModel m;
  m.n_pus = 4;
  Workload w = uniform_workload(100, 4, 4, {});
  EXPECT_NEAR(workload_stage_costs(w, m).proc(10), stage_costs(w.mean_costs(), m).proc(10), 1e-18);
  for (auto& r : w.records) {
    if (r.pu == 3) r.pu = 0;
  }
  // PU 0 now holds half the records.
  const double want = 0.5 * (m.launch + 10 * 5e-6);
  EXPECT_NEAR(workload_stage_costs(w, m).proc(10), want, 1e-15);
}

TEST(Simulator, TraceShowsWorkConservingFifoStages) {
  PimSystemModel m;
  m.n_pus = 8;
  const Workload w = uniform_workload(1500, 8, 3, {3e-7, 52, 4e-6, 320, 3e-7, 2e-7});
  for (size_t nb : {1, 4, 12}) {
    const SimReport r = simulate_workload(w, m, pipe(Strategy::kMiniBatch, nb), true);
    ASSERT_EQ(r.trace.size(), r.n_batches);
    std::map<uint32_t, std::vector<const BatchTrace*>> per_pu;
    for (const auto& b : r.trace) per_pu[b.pu].push_back(&b);
    for (auto& [pu, list] : per_pu) {
      std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->arrived < b->arrived; });
      double prev_end = 0;
      for (const BatchTrace* b : list) {
        EXPECT_DOUBLE_EQ(b->proc_start, std::max(b->arrived, prev_end));
        EXPECT_GE(b->proc_start, prev_end);
        prev_end = b->proc_end;
      }
    }
    std::vector<const BatchTrace*> by_end;
    for (const auto& b : r.trace) by_end.push_back(&b);
    std::stable_sort(by_end.begin(), by_end.end(), [](auto* a, auto* b) { return a->pull_start < b->pull_start; });
    double prev_done = 0;
    for (const BatchTrace* b : by_end) {
      EXPECT_GE(b->pull_start, b->proc_end);
      EXPECT_DOUBLE_EQ(b->pull_start, std::max(b->proc_end, prev_done));
      EXPECT_LE(b->records, nb);
      prev_done = b->done;
    }
    EXPECT_LE(r.max_in_flight, r.in_flight_bound);
  }
}

TEST(Simulator, InFlightBoundHolds) {
  PimSystemModel m;
  m.n_pus = 4;
  const Workload w = uniform_workload(400, 4, 2, {1e-7, 52, 2e-5, 320, 1e-7, 1e-7});
  double prev = 0;
  for (size_t bound : {1, 2, 8}) {
    PipelineConfig p = pipe(Strategy::kMiniBatch, 4);
    p.in_flight = bound;
    const SimReport r = simulate_workload(w, m, p);
    EXPECT_LE(r.max_in_flight, bound);
    EXPECT_EQ(r.in_flight_bound, bound);
    for (double c : r.completion) EXPECT_GT(c, 0.0);
    if (prev > 0) {
      EXPECT_LE(r.makespan, prev * (1 + 1e-12));
    }
    prev = r.makespan;
  }
}

TEST(Simulator, StageBusyWithinCapacity) {
  PimSystemModel m;
  m.n_pus = 8;
  const Workload w = uniform_workload(800, 8, 4, {});
  for (Strategy s : kAll) {
    const SimReport r = simulate_workload(w, m, pipe(s));
    for (double b : {r.busy.prep, r.busy.push, r.busy.proc, r.busy.pull, r.busy.rerank}) EXPECT_GE(b, 0.0);
    EXPECT_LE(r.busy.prep + r.busy.push, r.makespan * (1 + 1e-12)) << to_string(s);
    EXPECT_LE(r.busy.pull + r.busy.rerank, r.makespan * (1 + 1e-12)) << to_string(s);
    EXPECT_LE(r.busy.proc, m.n_pus * r.makespan);
    for (double b : r.pu_busy) EXPECT_LE(b, r.makespan);
    EXPECT_DOUBLE_EQ(*std::max_element(r.completion.begin(), r.completion.end()), r.makespan);
  }
}

TEST(Simulator, RejectsInconsistentInputs) {
  PimSystemModel m;
  m.n_pus = 4;
  Workload w = uniform_workload(10, 4, 2, {});
  PimSystemModel other = m;
  other.n_pus = 5;
  EXPECT_THROW(simulate_workload(w, other, pipe(Strategy::kMiniBatch)), ConfigError);
  PipelineConfig p = pipe(Strategy::kBatchSync);
  p.sync_batch = 0;
  EXPECT_THROW(simulate_workload(w, m, p), ConfigError);
  w.records[3].pu = 7;
  EXPECT_THROW(simulate_workload(w, m, pipe(Strategy::kMiniBatch)), RoutingError);
  EXPECT_THROW(parse_strategy("round_robin"), ConfigError);
}

struct FunctionalFixture : ::testing::Test {
  static void SetUpTestSuite() {
    const std::string spec = "gaussian:blobs=8,n=4000,dim=32,latent=8,sigma=0.3,noise=0.02,seed=21";
    base = new VectorSet(load_vectors(spec));
    queries = new VectorSet(load_vectors(spec + ",stream=1,n=600"));
    BuildParams bp;
    bp.n_clusters = 40;
    bp.seed = 21;
    index = new CompactIndex(build_index(*base, bp));
    model = new PimSystemModel();
    model->n_pus = 16;
    *model = model_for_index(*model, *index);
    run = new FunctionalRun(run_functional(*index, *base, *queries, QueryPlan{}, *model));
  }
  static void TearDownTestSuite() {
    delete run;
    delete model;
    delete index;
    delete queries;
    delete base;
  }
  static VectorSet* base;
  static VectorSet* queries;
  static CompactIndex* index;
  static PimSystemModel* model;
  static FunctionalRun* run;
};
VectorSet* FunctionalFixture::base = nullptr;
VectorSet* FunctionalFixture::queries = nullptr;
CompactIndex* FunctionalFixture::index = nullptr;
PimSystemModel* FunctionalFixture::model = nullptr;
FunctionalRun* FunctionalFixture::run = nullptr;

TEST_F(FunctionalFixture, WorkloadShape) {
  EXPECT_EQ(run->results.size(), 600u);
  EXPECT_EQ(run->workload.records.size(), 600u * 8);
  EXPECT_EQ(run->workload.n_pus, 16u);
  double f = 0;
  for (double x : run->frequencies) f += x;
  EXPECT_DOUBLE_EQ(f, 600.0 * 8);
  for (const auto& r : run->workload.records) EXPECT_EQ(run->placement.cluster_to_pu[r.cluster], r.pu);
  for (const auto& q : run->results) EXPECT_EQ(q.entries.size(), 10u);
}

TEST_F(FunctionalFixture, ResultsIndependentOfModel) {
  PimSystemModel slow = *model;
  slow.link.t0 = 1e-3;
  slow.pu.frequency_hz = 1e6;
  slow.host.flop = 1e-6;
  const FunctionalRun again = run_functional(*index, *base, *queries, QueryPlan{}, slow);
  EXPECT_EQ(again.results, run->results);
  const GroundTruth gt = compute_ground_truth(*queries, *base, 10);
  std::optional<double> recall;
  for (Strategy s : kAll) {
    const SimReport r = simulate(*run, *model, pipe(s), &gt);
    ASSERT_TRUE(r.recall);
    if (recall) {
      EXPECT_EQ(*r.recall, *recall);
    }
    recall = r.recall;
  }
  EXPECT_EQ(*recall, mean_recall(run->results, gt, 10));
}

TEST_F(FunctionalFixture, BarrierDominanceAndOrdering) {
  const SimReport mini = simulate(*run, *model, pipe(Strategy::kMiniBatch));
  const SimReport sync = simulate(*run, *model, pipe(Strategy::kBatchSync));
  const SimReport per = simulate(*run, *model, pipe(Strategy::kPerQuery));
  EXPECT_GE(sync.makespan, mini.makespan);
  EXPECT_GT(mini.qps, per.qps);
  // One batch per (query, PU) pair.
  std::set<std::pair<uint32_t, uint32_t>> pairs;
  for (const auto& r : run->workload.records) pairs.insert({r.query, r.pu});
  EXPECT_EQ(per.n_batches, pairs.size());
}

TEST_F(FunctionalFixture, Deterministic) {
  for (Strategy s : kAll) {
    const SimReport a = simulate(*run, *model, pipe(s), nullptr, 10, true);
    const SimReport b = simulate(*run, *model, pipe(s), nullptr, 10, true);
    EXPECT_EQ(a.completion, b.completion);
    EXPECT_EQ(a.pu_busy, b.pu_busy);
    EXPECT_EQ(a.makespan, b.makespan);
    EXPECT_EQ(a.n_batches, b.n_batches);
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].done, b.trace[i].done);
  }
}

TEST_F(FunctionalFixture, PlacementRevalidated) {
  PimSystemModel tiny = *model;
  tiny.pu_capacity_bytes = 1000;
  EXPECT_THROW(simulate(*run, tiny, pipe(Strategy::kMiniBatch)), PlacementError);
  EXPECT_THROW(run_functional(*index, *base, *queries, QueryPlan{}, tiny), PlacementError);
}

}  // namespace
}  // namespace pimann
