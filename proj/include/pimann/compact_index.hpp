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
#include <string>
#include <vector>

#include "pimann/ivf.hpp"
#include "pimann/quantizer.hpp"
#include "pimann/vector_set.hpp"

namespace pimann {

using LocalId = uint32_t;
using Adjacency = std::vector<std::vector<LocalId>>;

/// One IVF cluster's PIM-resident search structure. Codes and factors are
/// stored once per member; adjacency lists hold local indices only.
struct ClusterIndex {
  ClusterId cluster_id = 0;
  std::vector<float> centroid;
  std::vector<NodeId> members;       // global ids, ascending
  std::vector<uint32_t> adj_offsets;  // size members + 1
  std::vector<LocalId> adjacency;
  size_t words = 0;                  // code words per member
  std::vector<uint64_t> codes;       // members x words
  std::vector<NodeFactor> factors;
  double unit_norm = 1.0;            // mean residual norm
  AlphaShift alpha;
  LocalId entry = 0;

  size_t size() const { return members.size(); }
  std::span<const LocalId> neighbors(LocalId i) const {
    return {adjacency.data() + adj_offsets[i], adj_offsets[i + 1] - adj_offsets[i]};
  }
  std::span<const uint64_t> code(LocalId i) const {
    return {codes.data() + static_cast<size_t>(i) * words, words};
  }

  /// Throws CorruptionError naming the first violated layout invariant.
  void validate(size_t degree_bound) const;

  friend bool operator==(const ClusterIndex&, const ClusterIndex&) = default;
};

struct IndexMeta {
  uint32_t dim = 0;
  uint64_t n_nodes = 0;
  uint32_t degree = 16;
  uint32_t bq = 4;
  uint64_t kmeans_seed = 0;
  uint64_t rotation_seed = 0;
  uint32_t kmeans_iters = 25;
  bool calibrated_alpha = false;

  friend bool operator==(const IndexMeta&, const IndexMeta&) = default;
};

struct CompactIndex {
  IndexMeta meta;
  Rotation rotation;
  IvfPartition partition;
  std::vector<ClusterIndex> clusters;

  size_t max_cluster_size() const;
  /// Validates the partition against the clusters and every cluster layout.
  void validate() const;
};

struct BuildParams {
  size_t n_clusters = 0;  // 0 means round(sqrt(n))
  size_t kmeans_iters = 25;
  size_t degree = 16;
  int bq = 4;
  bool calibrate_alpha = false;
  uint64_t seed = 0;
};

/// Exact k-nearest-neighbor lists with k = min(R, m - 1), augmented with
/// reverse edges and truncated back to the R closest. Ties by smaller index.
Adjacency knn_graph(const VectorSet& points, size_t degree);

/// Adds edges from reachable nodes until every node is reachable from
/// `entry`, keeping degree <= R. Returns the number of edges rewritten.
size_t ensure_reachable(Adjacency& adj, const VectorSet& points, LocalId entry,
                        size_t degree);

size_t reachable_from(const Adjacency& adj, LocalId entry);

/// knn_graph followed by ensure_reachable.
Adjacency build_cluster_graph(const VectorSet& points, size_t degree, LocalId entry);

/// Encodes every member once, builds the per-cluster graphs and picks alpha.
/// Members that coincide with their centroid move to the next-nearest
/// centroid (at most 3 tries); clusters left empty are dropped and the
/// partition renumbered in place.
std::vector<ClusterIndex> assemble_compact_index(IvfPartition& part, const VectorSet& vs,
                                                 const Rotation& rot, size_t degree,
                                                 bool calibrate);

/// kmeans, rotation and assembly with seeds derived from `params.seed`.
CompactIndex build_index(const VectorSet& vs, const BuildParams& params);

enum class Layout { kCompact, kLegacy };

struct FootprintParams {
  size_t id_bytes = 4;
  size_t factor_bytes = 4;         // compact layout
  size_t legacy_factor_bytes = 4;  // per-edge metadata of the legacy layout
};

struct FootprintReport {
  Layout layout = Layout::kCompact;
  uint64_t ids = 0;
  uint64_t codes = 0;
  uint64_t factors = 0;
  uint64_t centroids = 0;
  uint64_t raw_vectors = 0;
  uint64_t nodes = 0;

  uint64_t total() const { return ids + codes + factors + centroids + raw_vectors; }
  /// Per node, excluding the amortized centroids.
  double per_node() const;
};

/// Layout arithmetic for n nodes in `n_clusters` clusters with R slots per
/// node: compact = code + factor + R * id per node plus centroids; legacy =
/// raw vector + R * (code + factor + id) per node.
FootprintReport footprint_model(uint64_t n_nodes, uint64_t n_clusters, size_t dim,
                                size_t degree, Layout layout, const FootprintParams& p = {});

FootprintReport footprint_bytes(std::span<const ClusterIndex> clusters, size_t dim, size_t degree,
                                Layout layout, const FootprintParams& p = {});

/// Bytes one cluster occupies on a PU under the compact layout.
uint64_t cluster_footprint(const ClusterIndex& ci, size_t dim, size_t degree,
                           const FootprintParams& p = {});

/// legacy total / compact total.
double reduction_ratio(const FootprintReport& legacy, const FootprintReport& compact);

/// Index file: 8-byte magic, u32 version, u64 payload length, u32 CRC-32 of
/// the payload, then the payload; all fields little-endian.
std::vector<uint8_t> serialize_index(const CompactIndex& index);
CompactIndex deserialize_index(std::span<const uint8_t> bytes);
void save_index(const std::string& path, const CompactIndex& index);
CompactIndex load_index(const std::string& path);

}  // namespace pimann
