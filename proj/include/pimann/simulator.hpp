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
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pimann/compact_index.hpp"
#include "pimann/host_pipeline.hpp"
#include "pimann/pim_model.hpp"
#include "pimann/search.hpp"

namespace pimann {

enum class Strategy { kBatchSync, kPerQuery, kMiniBatch };

Strategy parse_strategy(std::string_view s);
std::string_view to_string(Strategy s);

struct PipelineConfig {
  Strategy strategy = Strategy::kMiniBatch;
  size_t batch_threshold = 0;  // N_B; 0 means optimal_minibatch over 1..max_batch
  double wait_limit = -1.0;    // seconds; negative means the default
  size_t in_flight = 0;        // 0 means 2 * n_pus
  size_t sync_batch = 1024;    // queries per batch_sync round
  size_t max_batch = 64;       // upper end of the N_B search

  void validate() const;
};

/// In-PU work of one (query, cluster) pair, produced by the functional pass.
struct WorkRecord {
  uint32_t query = 0;
  ClusterId cluster = 0;
  uint32_t pu = 0;
  double pu_time = 0.0;
  uint32_t candidates = 0;
  uint32_t payload_bytes = 0;
  uint32_t result_bytes = 0;
  double rerank_time = 0.0;
};

struct QueryWork {
  double prep_time = 0.0;
  double merge_time = 0.0;
  uint32_t first_record = 0;  // records of a query are contiguous
  uint32_t n_records = 0;
};

struct Workload {
  size_t n_pus = 1;
  std::vector<QueryWork> queries;
  std::vector<WorkRecord> records;

  /// Mean per-record costs; query prep and merge are spread over records.
  RecordCosts mean_costs() const;
};

/// Busy seconds of the five stages: query prep, push transfer, in-PU
/// search, pull transfer, rerank and merge.
struct StageBusy {
  double prep = 0.0;
  double push = 0.0;
  double proc = 0.0;
  double pull = 0.0;
  double rerank = 0.0;
};

struct BatchTrace {
  uint32_t pu = 0;
  uint32_t records = 0;
  double created = 0.0;
  double push_start = 0.0;
  double arrived = 0.0;
  double proc_start = 0.0;
  double proc_end = 0.0;
  double pull_start = 0.0;
  double pulled = 0.0;
  double done = 0.0;
};

struct SimReport {
  std::string strategy;
  size_t n_queries = 0;
  size_t n_records = 0;
  size_t n_batches = 0;
  size_t batch_threshold = 0;
  double wait_limit = 0.0;
  size_t in_flight_bound = 0;
  double makespan = 0.0;
  double qps = 0.0;
  double steady_per_query = 0.0;  // completion spacing over the 20%..80% window
  std::optional<double> recall;
  StageBusy busy;
  std::vector<double> pu_busy;
  size_t threshold_flushes = 0;
  size_t timeout_flushes = 0;
  size_t final_flushes = 0;
  size_t max_in_flight = 0;
  std::vector<double> completion;  // per query
  std::vector<BatchTrace> trace;   // filled when requested
};

/// Stage costs of a routed workload. Like `stage_costs` on the mean record
/// costs, except T_proc follows the bottleneck PU: the largest
/// share_p * (launch + N * mean pu_time_p) over PUs, which reduces to the
/// balanced formula when every PU gets the same records.
StageCosts workload_stage_costs(const Workload& w, const PimSystemModel& model);

/// Resolves defaults (N_B, wait limit, in-flight bound) for a workload.
PipelineConfig resolve_pipeline(const PipelineConfig& cfg, const Workload& w,
                                const PimSystemModel& model);

/// Timing pass over a fixed workload on a deterministic virtual clock.
SimReport simulate_workload(const Workload& w, const PimSystemModel& model,
                            const PipelineConfig& cfg, bool keep_trace = false);

/// Functional pass: probe, search and rerank every query for real, and
/// record the modeled cost of each step.
struct FunctionalRun {
  std::vector<QueryResult> results;
  Workload workload;
  Placement placement;
  std::vector<uint64_t> footprints;
  std::vector<double> frequencies;
};

struct QueryPlan {
  SearchParams search;
  size_t nprobe = 8;
  size_t k = 10;
};

/// Cluster frequencies are the probe counts of this query set.
FunctionalRun run_functional(const CompactIndex& index, const VectorSet& base,
                             const VectorSet& queries, const QueryPlan& plan,
                             const PimSystemModel& model);

/// Mean recall@k of the results against ground-truth ids.
double mean_recall(const std::vector<QueryResult>& results, const GroundTruth& gt, size_t k);

/// Validates the placement, then runs the timing pass.
SimReport simulate(const FunctionalRun& run, const PimSystemModel& model,
                   const PipelineConfig& cfg, const GroundTruth* gt = nullptr, size_t k = 10,
                   bool keep_trace = false);

/// Model with the PU parameters matched to an index.
PimSystemModel model_for_index(PimSystemModel model, const CompactIndex& index);

}  // namespace pimann
