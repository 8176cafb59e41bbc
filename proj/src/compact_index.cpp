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
#include "pimann/compact_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pimann/error.hpp"

namespace pimann {

void ClusterIndex::validate(size_t degree_bound) const {
  const size_t m = members.size();
  const std::string where = "cluster " + std::to_string(cluster_id) + ": ";
  if (m == 0) throw CorruptionError(where + "no members");
  if (factors.size() != m) throw CorruptionError(where + "factor count differs from members");
  if (codes.size() != m * words) throw CorruptionError(where + "code count differs from members");
  if (adj_offsets.size() != m + 1 || adj_offsets.front() != 0 ||
      adj_offsets.back() != adjacency.size())
    throw CorruptionError(where + "malformed adjacency offsets");
  if (entry >= m) throw CorruptionError(where + "entry point out of range");
  for (size_t i = 1; i < m; ++i)
    if (members[i - 1] >= members[i]) throw CorruptionError(where + "member ids not ascending");
  for (LocalId i = 0; i < m; ++i) {
    if (adj_offsets[i + 1] < adj_offsets[i]) throw CorruptionError(where + "offsets decrease");
    const auto nb = neighbors(i);
    if (nb.size() > degree_bound)
      throw CorruptionError(where + "node " + std::to_string(i) + " exceeds degree bound");
    for (LocalId j : nb)
      if (j >= m || j == i)
        throw CorruptionError(where + "node " + std::to_string(i) + " has invalid neighbor");
  }
}

size_t CompactIndex::max_cluster_size() const {
  size_t best = 0;
  for (const auto& c : clusters) best = std::max(best, c.size());
  return best;
}

void CompactIndex::validate() const {
  partition.validate(meta.n_nodes);
  if (clusters.size() != partition.n_clusters())
    throw CorruptionError("index: cluster count differs from partition");
  for (size_t c = 0; c < clusters.size(); ++c) {
    const auto& ci = clusters[c];
    if (ci.cluster_id != c) throw CorruptionError("index: cluster ids not sequential");
    if (ci.members != partition.members[c])
      throw CorruptionError("index: cluster " + std::to_string(c) + " members differ from partition");
    if (ci.words != code_words(meta.dim)) throw CorruptionError("index: code width mismatch");
    ci.validate(meta.degree);
  }
}

namespace {

std::vector<double> pairwise(const VectorSet& pts) {
  const size_t m = pts.count();
  std::vector<double> d(m * m, 0.0);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = i + 1; j < m; ++j) d[i * m + j] = d[j * m + i] = squared_l2(pts.row(i), pts.row(j));
  return d;
}

void sort_by_distance(std::vector<LocalId>& list, const double* row) {
  std::sort(list.begin(), list.end(), [&](LocalId a, LocalId b) {
    return row[a] < row[b] || (row[a] == row[b] && a < b);
  });
}

}  // namespace

Adjacency knn_graph(const VectorSet& points, size_t degree) {
  const size_t m = points.count();
  Adjacency adj(m);
  if (m <= 1 || degree == 0) return adj;
  const size_t k = std::min(degree, m - 1);
  const auto d = pairwise(points);
  for (size_t i = 0; i < m; ++i) {
    std::vector<LocalId> all;
    all.reserve(m - 1);
    for (size_t j = 0; j < m; ++j)
      if (j != i) all.push_back(static_cast<LocalId>(j));
    sort_by_distance(all, d.data() + i * m);
    all.resize(k);
    adj[i] = std::move(all);
  }
  Adjacency aug = adj;
  for (size_t i = 0; i < m; ++i)
    for (LocalId j : adj[i]) aug[j].push_back(static_cast<LocalId>(i));
  for (size_t i = 0; i < m; ++i) {
    auto& list = aug[i];
    sort_by_distance(list, d.data() + i * m);
    list.erase(std::unique(list.begin(), list.end()), list.end());
    if (list.size() > degree) list.resize(degree);
  }
  return aug;
}

namespace {

std::vector<char> reach_mask(const Adjacency& adj, LocalId entry) {
  std::vector<char> seen(adj.size(), 0);
  if (adj.empty()) return seen;
  std::vector<LocalId> stack{entry};
  seen[entry] = 1;
  while (!stack.empty()) {
    const LocalId v = stack.back();
    stack.pop_back();
    for (LocalId w : adj[v])
      if (!seen[w]) {
        seen[w] = 1;
        stack.push_back(w);
      }
  }
  return seen;
}

}  // namespace

size_t reachable_from(const Adjacency& adj, LocalId entry) {
  const auto seen = reach_mask(adj, entry);
  return static_cast<size_t>(std::count(seen.begin(), seen.end(), 1));
}

size_t ensure_reachable(Adjacency& adj, const VectorSet& points, LocalId entry, size_t degree) {
  const size_t m = adj.size();
  if (m <= 1 || degree == 0) return 0;
  size_t rewritten = 0;
  std::vector<char> skipped(m, 0);
  for (size_t guard = 0; guard < 4 * m; ++guard) {
    const auto seen = reach_mask(adj, entry);
    std::vector<size_t> indeg(m, 0);
    for (const auto& list : adj)
      for (LocalId w : list) ++indeg[w];

    // Closest (unreachable, reachable) pair.
    LocalId best_u = 0, best_v = 0;
    double best_d = -1.0;
    for (LocalId u = 0; u < m; ++u) {
      if (seen[u] || skipped[u]) continue;
      for (LocalId v = 0; v < m; ++v) {
        if (!seen[v]) continue;
        const double dd = squared_l2(points.row(u), points.row(v));
        if (best_d < 0.0 || dd < best_d) {
          best_d = dd;
          best_u = u;
          best_v = v;
        }
      }
    }
    if (best_d < 0.0) break;

    // Prefer a reachable node with a free slot, nearest to u.
    std::vector<LocalId> cands;
    for (LocalId v = 0; v < m; ++v)
      if (seen[v]) cands.push_back(v);
    std::vector<double> du(m);
    for (LocalId v : cands) du[v] = squared_l2(points.row(best_u), points.row(v));
    sort_by_distance(cands, du.data());
    bool linked = false;
    for (LocalId v : cands) {
      if (adj[v].size() < degree) {
        adj[v].push_back(best_u);
        linked = true;
        break;
      }
    }
    if (!linked) {
      // Replace the farthest neighbor of the nearest reachable node, as long
      // as that neighbor keeps another in-edge.
      for (LocalId v : cands) {
        auto& list = adj[v];
        for (size_t pos = list.size(); pos-- > 0;) {
          if (indeg[list[pos]] >= 2) {
            list[pos] = best_u;
            linked = true;
            break;
          }
        }
        if (linked) break;
      }
    }
    (void)best_v;
    if (linked) ++rewritten;
    else skipped[best_u] = 1;
  }
  for (size_t i = 0; i < m; ++i) {
    // Keep lists ordered by distance for reproducible layouts.
    std::vector<double> di(m);
    for (LocalId j : adj[i]) di[j] = squared_l2(points.row(i), points.row(j));
    sort_by_distance(adj[i], di.data());
  }
  return rewritten;
}

Adjacency build_cluster_graph(const VectorSet& points, size_t degree, LocalId entry) {
  Adjacency adj = knn_graph(points, degree);
  ensure_reachable(adj, points, entry, degree);
  return adj;
}

namespace {

constexpr int kReassignTries = 3;

VectorSet gather(const VectorSet& vs, std::span<const NodeId> ids) {
  std::vector<float> data;
  data.reserve(ids.size() * vs.dim());
  for (NodeId id : ids) {
    const auto row = vs.row(id);
    data.insert(data.end(), row.begin(), row.end());
  }
  return VectorSet(vs.dim(), std::move(data));
}

bool equals_centroid(std::span<const float> v, std::span<const float> c) {
  for (size_t i = 0; i < v.size(); ++i)
    if (v[i] != c[i]) return false;
  return true;
}

// Moves members that coincide with their centroid; renumbers after dropping
// empty clusters.
void reassign_zero_residuals(IvfPartition& part, const VectorSet& vs) {
  bool moved = false;
  for (NodeId id = 0; id < vs.count(); ++id) {
    if (!equals_centroid(vs.row(id), part.centroids.row(part.assignment[id]))) continue;
    const auto ranked = rank_centroids(vs.row(id), part.centroids);
    bool placed = false;
    int tries = 0;
    for (ClusterId c : ranked) {
      if (c == part.assignment[id]) continue;
      if (tries++ >= kReassignTries) break;
      if (!equals_centroid(vs.row(id), part.centroids.row(c))) {
        part.assignment[id] = c;
        placed = true;
        break;
      }
    }
    if (!placed)
      throw DegenerateInputError("build: node " + std::to_string(id) +
                                 " coincides with every candidate centroid");
    moved = true;
  }
  if (!moved) return;

  std::vector<size_t> counts(part.n_clusters(), 0);
  for (ClusterId c : part.assignment) ++counts[c];
  std::vector<ClusterId> remap(part.n_clusters(), 0);
  std::vector<float> cent;
  ClusterId next = 0;
  for (size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    remap[c] = next++;
    const auto row = part.centroids.row(c);
    cent.insert(cent.end(), row.begin(), row.end());
  }
  for (ClusterId& c : part.assignment) c = remap[c];
  part.centroids = VectorSet(vs.dim(), std::move(cent));
  part.members.assign(next, {});
  for (NodeId id = 0; id < vs.count(); ++id) part.members[part.assignment[id]].push_back(id);
}

}  // namespace

std::vector<ClusterIndex> assemble_compact_index(IvfPartition& part, const VectorSet& vs,
                                                 const Rotation& rot, size_t degree,
                                                 bool calibrate) {
  if (rot.dim != vs.dim()) throw ContractError("build: rotation dim differs from data dim");
  reassign_zero_residuals(part, vs);
  part.validate(vs.count());

  std::vector<ClusterIndex> out(part.n_clusters());
  const auto nc = static_cast<std::ptrdiff_t>(part.n_clusters());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t cc = 0; cc < nc; ++cc) {
    const auto c = static_cast<size_t>(cc);
    ClusterIndex& ci = out[c];
    ci.cluster_id = static_cast<ClusterId>(c);
    const auto centroid = part.centroids.row(c);
    ci.centroid.assign(centroid.begin(), centroid.end());
    ci.members = part.members[c];
    ci.words = code_words(vs.dim());
    const VectorSet pts = gather(vs, ci.members);
    const size_t m = pts.count();

    std::vector<EncodedNode> enc;
    enc.reserve(m);
    double norm_sum = 0.0;
    for (size_t i = 0; i < m; ++i) {
      enc.push_back(encode_node(pts.row(i), centroid, rot));
      norm_sum += enc.back().residual_norm;
    }
    ci.unit_norm = norm_sum / static_cast<double>(m);
    ci.codes.reserve(m * ci.words);
    ci.factors.reserve(m);
    for (const auto& e : enc) {
      ci.codes.insert(ci.codes.end(), e.code.begin(), e.code.end());
      ci.factors.push_back(make_node_factor(e.residual_norm, e.cos_theta, ci.unit_norm));
    }
    ci.alpha = calibrate ? calibrate_alpha(ci.factors) : default_alpha_shift();

    LocalId entry = 0;
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < m; ++i) {
      const double d = squared_l2(pts.row(i), centroid);
      if (d < best) {
        best = d;
        entry = static_cast<LocalId>(i);
      }
    }
    ci.entry = entry;

    const Adjacency adj = build_cluster_graph(pts, degree, entry);
    ci.adj_offsets.assign(1, 0);
    for (const auto& list : adj) {
      ci.adjacency.insert(ci.adjacency.end(), list.begin(), list.end());
      ci.adj_offsets.push_back(static_cast<uint32_t>(ci.adjacency.size()));
    }
  }
  return out;
}

CompactIndex build_index(const VectorSet& vs, const BuildParams& params) {
  if (params.degree == 0) throw ParameterError("build: degree must be positive");
  if (params.bq < 1 || params.bq > 8) throw ParameterError("build: bq outside 1..8");
  CompactIndex index;
  index.meta.dim = static_cast<uint32_t>(vs.dim());
  index.meta.n_nodes = vs.count();
  index.meta.degree = static_cast<uint32_t>(params.degree);
  index.meta.bq = static_cast<uint32_t>(params.bq);
  index.meta.kmeans_seed = params.seed;
  index.meta.rotation_seed = params.seed ^ 0x9e3779b97f4a7c15ull;
  index.meta.kmeans_iters = static_cast<uint32_t>(params.kmeans_iters);
  index.meta.calibrated_alpha = params.calibrate_alpha;

  index.partition = kmeans(vs, {params.n_clusters, params.kmeans_iters, params.seed});
  index.rotation = make_rotation(vs.dim(), index.meta.rotation_seed);
  index.clusters = assemble_compact_index(index.partition, vs, index.rotation, params.degree,
                                          params.calibrate_alpha);
  return index;
}

double FootprintReport::per_node() const {
  return nodes == 0 ? 0.0 : static_cast<double>(total() - centroids) / static_cast<double>(nodes);
}

FootprintReport footprint_model(uint64_t n_nodes, uint64_t n_clusters, size_t dim, size_t degree,
                                Layout layout, const FootprintParams& p) {
  const uint64_t code = (dim + 7) / 8;
  FootprintReport r;
  r.layout = layout;
  r.nodes = n_nodes;
  if (layout == Layout::kCompact) {
    r.ids = n_nodes * degree * p.id_bytes;
    r.codes = n_nodes * code;
    r.factors = n_nodes * p.factor_bytes;
    r.centroids = n_clusters * dim * 4;
  } else {
    r.raw_vectors = n_nodes * dim * 4;
    r.ids = n_nodes * degree * p.id_bytes;
    r.codes = n_nodes * degree * code;
    r.factors = n_nodes * degree * p.legacy_factor_bytes;
  }
  return r;
}

FootprintReport footprint_bytes(std::span<const ClusterIndex> clusters, size_t dim, size_t degree,
                                Layout layout, const FootprintParams& p) {
  uint64_t n = 0;
  for (const auto& c : clusters) n += c.size();
  return footprint_model(n, clusters.size(), dim, degree, layout, p);
}

uint64_t cluster_footprint(const ClusterIndex& ci, size_t dim, size_t degree,
                           const FootprintParams& p) {
  return footprint_model(ci.size(), 1, dim, degree, Layout::kCompact, p).total();
}

double reduction_ratio(const FootprintReport& legacy, const FootprintReport& compact) {
  return static_cast<double>(legacy.total()) / static_cast<double>(compact.total());
}

}  // namespace pimann
