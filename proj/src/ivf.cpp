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
#include "pimann/ivf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "pimann/error.hpp"

namespace pimann {

void IvfPartition::validate(size_t n_nodes) const {
  if (assignment.size() != n_nodes)
    throw CorruptionError("partition: assignment covers " + std::to_string(assignment.size()) +
                          " nodes, expected " + std::to_string(n_nodes));
  if (centroids.count() != members.size())
    throw CorruptionError("partition: centroid count differs from cluster count");
  std::vector<char> seen(n_nodes, 0);
  for (size_t c = 0; c < members.size(); ++c) {
    if (members[c].empty()) throw CorruptionError("partition: cluster " + std::to_string(c) + " is empty");
    for (NodeId id : members[c]) {
      if (id >= n_nodes || seen[id])
        throw CorruptionError("partition: node " + std::to_string(id) + " listed twice or out of range");
      seen[id] = 1;
      if (assignment[id] != c)
        throw CorruptionError("partition: node " + std::to_string(id) + " assignment mismatch");
    }
  }
  for (size_t i = 0; i < n_nodes; ++i)
    if (!seen[i]) throw CorruptionError("partition: node " + std::to_string(i) + " unassigned");
}

size_t default_cluster_count(size_t n) {
  return std::max<size_t>(1, static_cast<size_t>(std::llround(std::sqrt(static_cast<double>(n)))));
}

namespace {

double sq_dist(const float* a, const double* b, size_t dim) {
  double acc = 0.0;
  for (size_t j = 0; j < dim; ++j) {
    const double d = static_cast<double>(a[j]) - b[j];
    acc += d * d;
  }
  return acc;
}

struct Lloyd {
  const VectorSet& vs;
  size_t k;
  size_t dim;
  std::vector<double> centroids;  // k x dim
  std::vector<ClusterId> assign;
  std::vector<double> cost;       // per point, to its centroid

  bool assign_step() {
    const auto n = static_cast<std::ptrdiff_t>(vs.count());
    int changed = 0;
#pragma omp parallel for schedule(static) reduction(| : changed)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const float* x = vs.row(static_cast<size_t>(i)).data();
      double best = sq_dist(x, centroids.data(), dim);
      ClusterId arg = 0;
      for (size_t c = 1; c < k; ++c) {
        const double d = sq_dist(x, centroids.data() + c * dim, dim);
        if (d < best) {
          best = d;
          arg = static_cast<ClusterId>(c);
        }
      }
      if (assign[static_cast<size_t>(i)] != arg) changed = 1;
      assign[static_cast<size_t>(i)] = arg;
    }
    return changed != 0;
  }

  void update_step() {
    std::vector<double> sums(k * dim, 0.0);
    std::vector<size_t> counts(k, 0);
    for (size_t i = 0; i < vs.count(); ++i) {
      const ClusterId c = assign[i];
      ++counts[c];
      const auto row = vs.row(i);
      for (size_t j = 0; j < dim; ++j) sums[c * dim + j] += row[j];
    }
    for (size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // keeps the previous centroid; repaired below
      for (size_t j = 0; j < dim; ++j)
        centroids[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
    }
  }

  std::vector<size_t> counts() const {
    std::vector<size_t> out(k, 0);
    for (ClusterId c : assign) ++out[c];
    return out;
  }

  // Moves the farthest member of the largest cluster into each empty cluster.
  bool repair_empty() {
    bool repaired = false;
    for (;;) {
      auto cnt = counts();
      auto empty = std::find(cnt.begin(), cnt.end(), size_t{0});
      if (empty == cnt.end()) break;
      const auto largest = static_cast<ClusterId>(
          std::max_element(cnt.begin(), cnt.end()) - cnt.begin());
      if (cnt[largest] < 2) break;  // cannot happen when k <= n
      size_t far = 0;
      double far_d = -1.0;
      for (size_t i = 0; i < vs.count(); ++i) {
        if (assign[i] != largest) continue;
        const double d = sq_dist(vs.row(i).data(), centroids.data() + largest * dim, dim);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      const auto target = static_cast<ClusterId>(empty - cnt.begin());
      assign[far] = target;
      const auto row = vs.row(far);
      for (size_t j = 0; j < dim; ++j) centroids[target * dim + j] = row[j];
      update_step();
      repaired = true;
    }
    return repaired;
  }

  double objective() const {
    double acc = 0.0;
    for (size_t i = 0; i < vs.count(); ++i)
      acc += sq_dist(vs.row(i).data(), centroids.data() + assign[i] * dim, dim);
    return acc;
  }
};

}  // namespace

IvfPartition kmeans(const VectorSet& vs, const KMeansParams& params) {
  const size_t n = vs.count();
  const size_t k = params.n_clusters == 0 ? default_cluster_count(n) : params.n_clusters;
  if (n == 0) throw ParameterError("kmeans: empty vector set");
  if (k > n)
    throw ParameterError("kmeans: n_clusters=" + std::to_string(k) + " exceeds count " +
                         std::to_string(n));
  const size_t dim = vs.dim();
  std::mt19937_64 rng(params.seed);

  Lloyd st{vs, k, dim, std::vector<double>(k * dim), std::vector<ClusterId>(n, 0), {}};

  // k-means++ seeding.
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);
  size_t first = std::uniform_int_distribution<size_t>(0, n - 1)(rng);
  for (size_t c = 0; c < k; ++c) {
    size_t pick = first;
    if (c > 0) {
      const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
      if (total > 0.0) {
        double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        pick = n - 1;
        for (size_t i = 0; i < n; ++i) {
          if (u < nearest[i]) {
            pick = i;
            break;
          }
          u -= nearest[i];
        }
        while (chosen[pick] || nearest[pick] == 0.0) pick = (pick + n - 1) % n;
      } else {
        // All remaining points coincide with a chosen one; take the next
        // unchosen point in a seeded order.
        std::vector<size_t> rest;
        for (size_t i = 0; i < n; ++i)
          if (!chosen[i]) rest.push_back(i);
        pick = rest[std::uniform_int_distribution<size_t>(0, rest.size() - 1)(rng)];
      }
    }
    chosen[pick] = 1;
    const auto row = vs.row(pick);
    for (size_t j = 0; j < dim; ++j) st.centroids[c * dim + j] = row[j];
    for (size_t i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], sq_dist(vs.row(i).data(), st.centroids.data() + c * dim, dim));
  }

  IvfPartition part;
  st.assign_step();
  for (size_t it = 0; it < params.max_iters; ++it) {
    st.update_step();
    st.repair_empty();
    part.objective_history.push_back(st.objective());
    if (!st.assign_step()) break;
  }
  st.update_step();
  st.repair_empty();

  std::vector<float> cent(k * dim);
  for (size_t i = 0; i < k * dim; ++i) cent[i] = static_cast<float>(st.centroids[i]);
  part.centroids = VectorSet(dim, std::move(cent));
  part.assignment = std::move(st.assign);
  part.members.assign(k, {});
  for (size_t i = 0; i < n; ++i) part.members[part.assignment[i]].push_back(static_cast<NodeId>(i));
  return part;
}

std::vector<ClusterId> rank_centroids(std::span<const float> point, const VectorSet& centroids) {
  if (point.size() != centroids.dim())
    throw ParameterError("probe: query dim " + std::to_string(point.size()) + " != centroid dim " +
                         std::to_string(centroids.dim()));
  std::vector<Neighbor> d(centroids.count());
  for (size_t c = 0; c < centroids.count(); ++c)
    d[c] = {static_cast<NodeId>(c), squared_l2(point, centroids.row(c))};
  std::sort(d.begin(), d.end(), neighbor_less);
  std::vector<ClusterId> out(d.size());
  for (size_t i = 0; i < d.size(); ++i) out[i] = d[i].id;
  return out;
}

std::vector<ClusterId> probe_clusters(std::span<const float> query, const IvfPartition& part,
                                      size_t nprobe) {
  if (nprobe == 0 || nprobe > part.n_clusters())
    throw ParameterError("probe: nprobe=" + std::to_string(nprobe) + " outside [1, " +
                         std::to_string(part.n_clusters()) + "]");
  auto ranked = rank_centroids(query, part.centroids);
  ranked.resize(nprobe);
  return ranked;
}

}  // namespace pimann
