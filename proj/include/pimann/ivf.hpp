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
#include <span>
#include <vector>

#include "pimann/vector_set.hpp"

namespace pimann {

using ClusterId = uint32_t;

/// Inverted-file partition. Centroids are member means and are not
/// renormalized.
struct IvfPartition {
  VectorSet centroids;
  std::vector<ClusterId> assignment;          // node id -> cluster
  std::vector<std::vector<NodeId>> members;   // ascending node ids
  std::vector<double> objective_history;      // sum of squared distances per iteration

  size_t n_clusters() const { return members.size(); }

  /// Throws CorruptionError if assignment and member lists disagree or a
  /// cluster is empty.
  void validate(size_t n_nodes) const;
};

struct KMeansParams {
  size_t n_clusters = 0;  // 0 means round(sqrt(n))
  size_t max_iters = 25;
  uint64_t seed = 0;
};

size_t default_cluster_count(size_t n);

/// k-means++ seeding followed by Lloyd iterations. Stops after `max_iters`
/// or when no assignment changes. Empty clusters are refilled from the
/// farthest member of the largest cluster.
IvfPartition kmeans(const VectorSet& vs, const KMeansParams& params);

/// The `nprobe` nearest centroids, ascending by squared distance, ties by
/// smaller cluster id.
std::vector<ClusterId> probe_clusters(std::span<const float> query,
                                      const IvfPartition& part, size_t nprobe);

/// Every centroid ranked by distance to `point` (same ordering rule).
std::vector<ClusterId> rank_centroids(std::span<const float> point,
                                      const VectorSet& centroids);

}  // namespace pimann
