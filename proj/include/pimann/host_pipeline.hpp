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

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "pimann/ivf.hpp"
#include "pimann/pim_model.hpp"
#include "pimann/vector_set.hpp"

namespace pimann {

struct DispatchRecord {
  uint32_t query = 0;
  uint32_t pu = 0;
  ClusterId cluster = 0;
  double enqueue_time = 0.0;
  uint32_t payload_bytes = 0;
  uint32_t index = 0;  // position in the caller's record table

  friend bool operator==(const DispatchRecord&, const DispatchRecord&) = default;
};

enum class FlushReason { kThreshold, kTimeout, kEndOfStream };

struct MiniBatch {
  uint32_t pu = 0;
  std::vector<DispatchRecord> records;  // FIFO order
  double flush_time = 0.0;
  FlushReason reason = FlushReason::kThreshold;

  uint64_t payload_bytes() const;
};

/// Per-PU buffers that flush when `threshold` records are waiting or the
/// oldest has waited `wait_limit`.
class Dispatcher {
 public:
  Dispatcher(size_t n_pus, size_t threshold, double wait_limit);

  /// Appends a record; returns the batch when its buffer reaches the threshold.
  std::optional<MiniBatch> enqueue(const DispatchRecord& r);
  /// Flushes, in PU order, every buffer whose oldest record is due by `now`.
  std::vector<MiniBatch> expire(double now);
  /// Earliest time a buffer times out, if any is non-empty.
  std::optional<double> next_deadline() const;
  /// Flushes every non-empty buffer in PU order.
  std::vector<MiniBatch> flush_all(double now, FlushReason reason = FlushReason::kEndOfStream);

  size_t pending() const;
  size_t threshold() const { return threshold_; }
  double wait_limit() const { return wait_limit_; }

 private:
  MiniBatch take(uint32_t pu, double now, FlushReason reason);

  size_t threshold_;
  double wait_limit_;
  std::vector<std::vector<DispatchRecord>> buffers_;
};

/// One query to route: the clusters it probes, with the QueryCode size.
struct QueryDispatch {
  uint32_t query = 0;
  double time = 0.0;
  std::vector<ClusterId> clusters;
  uint32_t payload_bytes = 0;
};

/// Routes a time-ordered query stream into per-PU batches. Buffers left at
/// the end flush at their timeout. Throws RoutingError for a cluster that
/// has no PU.
std::vector<MiniBatch> dispatch(std::span<const QueryDispatch> stream,
                                std::span<const uint32_t> cluster_to_pu, size_t n_pus,
                                size_t threshold, double wait_limit);

struct SourcedId {
  NodeId id = 0;
  ClusterId cluster = 0;
};

struct ResultEntry {
  NodeId id = 0;
  double dist = 0.0;  // exact squared distance
  ClusterId cluster = 0;

  friend bool operator==(const ResultEntry&, const ResultEntry&) = default;
};

struct QueryResult {
  uint32_t query = 0;
  std::vector<ResultEntry> entries;  // ascending by (dist, id)
  bool short_result = false;         // fewer than k candidates were available

  std::vector<NodeId> ids() const;

  friend bool operator==(const QueryResult&, const QueryResult&) = default;
};

/// Exact squared distances for the candidates, top-k ascending, ties by id.
/// Throws CorruptionError on a repeated candidate id.
QueryResult rerank(std::span<const float> query, std::span<const SourcedId> candidates,
                   const VectorSet& raw, size_t k, uint32_t query_id = 0);

/// k smallest across the inputs. Throws CorruptionError if an id appears
/// in more than one input.
QueryResult merge_topk(std::span<const QueryResult> parts, size_t k);

}  // namespace pimann
