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
#include <functional>
#include <span>
#include <vector>

#include "pimann/search.hpp"

namespace pimann {

/// Host <-> PU transfer latency: a fixed overhead plus bytes at the external
/// bandwidth, with bytes past `knee` costing `kappa` times more.
struct TransferModel {
  double t0 = 20e-6;
  double bandwidth = 150e9;  // bytes/s, shared by concurrent transfers
  double knee = 8192.0;
  double kappa = 4.0;

  /// Bandwidth-equivalent byte count after the knee penalty.
  double effective_bytes(double bytes) const;
  void validate() const;
};

double transfer_time(double bytes, const TransferModel& tm);

/// Host-side cost constants, measured once with `pimann calibrate` and kept
/// fixed so simulated times do not depend on the machine running them.
struct HostCostModel {
  double dispatch_fixed = 3.0e-7;  // per query
  double flop = 3.4e-10;           // per multiply-add in prep and rerank
  double rerank_fixed = 6.0e-9;    // per candidate
  double merge_fixed = 2.5e-7;     // per query

  /// Probe scan over all centroids plus one rotation per probed cluster.
  double prep_time(size_t n_clusters, size_t nprobe, size_t dim) const;
  double rerank_time(size_t n_candidates, size_t dim) const;
  void validate() const;
};

struct PimSystemModel {
  size_t n_pus = 64;
  double pu_capacity_bytes = 64.0 * 1024 * 1024;
  double launch = 5e-6;  // per kernel launch on a PU
  PuParams pu;
  TransferModel link;
  HostCostModel host;

  void validate() const;
};

struct Placement {
  std::vector<uint32_t> cluster_to_pu;
  std::vector<uint64_t> pu_bytes;
  std::vector<double> pu_work;  // frequency-weighted footprint

  size_t n_pus() const { return pu_bytes.size(); }
  /// max / min PU work (infinite if some PU has none).
  double imbalance() const;
  /// Throws PlacementError if a cluster is unplaced or a PU over capacity.
  void validate(std::span<const uint64_t> footprints, double capacity) const;
};

/// Clusters in descending frequency * footprint order, each to the
/// least-loaded PU that still has room. Ties by smaller PU id.
Placement place_clusters(std::span<const uint64_t> footprints, std::span<const double> frequencies,
                         const PimSystemModel& model);

/// Uniformly random PU per cluster among those with room (comparison only).
Placement random_placement(std::span<const uint64_t> footprints,
                           std::span<const double> frequencies, const PimSystemModel& model,
                           uint64_t seed);

/// Per-batch stage times as functions of the batch size.
struct StageCosts {
  std::function<double(size_t)> pre;
  std::function<double(size_t)> proc;
  std::function<double(size_t)> post;
};

struct MiniBatchChoice {
  size_t n_star = 1;
  double per_item = 0.0;  // max stage time / n_star
  double t_pre = 0.0;
  double t_proc = 0.0;
  double t_post = 0.0;
  /// T_proc within 10% of max(T_pre, T_post) at n_star.
  bool proc_balanced = false;
};

/// argmin over N in 1..n_max of max(T_pre, T_proc, T_post) / N; ties to the
/// smaller N.
MiniBatchChoice optimal_minibatch(const StageCosts& costs, size_t n_max);

/// Mean per-record costs of a workload, used to build StageCosts.
struct RecordCosts {
  double prep = 0.0;       // host dispatch time per record
  double payload = 0.0;    // bytes pushed per record
  double pu_time = 0.0;    // in-PU search time per record
  double result = 0.0;     // bytes pulled per record
  double rerank = 0.0;     // host post-processing time per record
};

/// T_pre = N prep + transfer(N payload); T_proc = (launch + N pu_time) / n_pus;
/// T_post = transfer(N result) + N rerank.
StageCosts stage_costs(const RecordCosts& rc, const PimSystemModel& model);

}  // namespace pimann
