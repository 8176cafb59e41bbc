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
#include "pimann/pim_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "pimann/error.hpp"

namespace pimann {

double TransferModel::effective_bytes(double bytes) const {
  return std::min(bytes, knee) + kappa * std::max(0.0, bytes - knee);
}

void TransferModel::validate() const {
  if (!(t0 >= 0.0) || !(bandwidth > 0.0) || !(knee >= 0.0) || !(kappa >= 1.0))
    throw ConfigError("transfer model: need t0 >= 0, bandwidth > 0, knee >= 0, kappa >= 1");
}

double transfer_time(double bytes, const TransferModel& tm) {
  return tm.t0 + tm.effective_bytes(bytes) / tm.bandwidth;
}

double HostCostModel::prep_time(size_t n_clusters, size_t nprobe, size_t dim) const {
  const double work = static_cast<double>(n_clusters * dim + nprobe * dim * dim);
  return dispatch_fixed + flop * work;
}

double HostCostModel::rerank_time(size_t n_candidates, size_t dim) const {
  return static_cast<double>(n_candidates) * (rerank_fixed + flop * static_cast<double>(dim));
}

void HostCostModel::validate() const {
  if (dispatch_fixed < 0 || flop < 0 || rerank_fixed < 0 || merge_fixed < 0)
    throw ConfigError("host cost model: negative cost");
}

void PimSystemModel::validate() const {
  if (n_pus == 0) throw ConfigError("model: n_pus must be positive");
  if (!(pu_capacity_bytes > 0)) throw ConfigError("model: pu capacity must be positive");
  if (!(pu.frequency_hz > 0) || !(pu.internal_bandwidth > 0))
    throw ConfigError("model: PU frequency and bandwidth must be positive");
  if (launch < 0) throw ConfigError("model: negative launch cost");
  link.validate();
  host.validate();
}

double Placement::imbalance() const {
  if (pu_work.empty()) return 1.0;
  const auto [lo, hi] = std::minmax_element(pu_work.begin(), pu_work.end());
  if (*lo <= 0.0) return std::numeric_limits<double>::infinity();
  return *hi / *lo;
}

void Placement::validate(std::span<const uint64_t> footprints, double capacity) const {
  if (cluster_to_pu.size() != footprints.size())
    throw PlacementError("placement covers " + std::to_string(cluster_to_pu.size()) +
                         " clusters, index has " + std::to_string(footprints.size()));
  std::vector<uint64_t> bytes(n_pus(), 0);
  for (size_t c = 0; c < footprints.size(); ++c) {
    if (cluster_to_pu[c] >= n_pus())
      throw PlacementError("cluster " + std::to_string(c) + " is not placed");
    bytes[cluster_to_pu[c]] += footprints[c];
  }
  for (size_t p = 0; p < bytes.size(); ++p)
    if (static_cast<double>(bytes[p]) > capacity)
      throw PlacementError("PU " + std::to_string(p) + " holds " + std::to_string(bytes[p]) +
                           " bytes, capacity " + std::to_string(capacity));
}

namespace {

void check_feasible(std::span<const uint64_t> footprints, std::span<const double> frequencies,
                    const PimSystemModel& model) {
  if (footprints.size() != frequencies.size())
    throw ParameterError("placement: footprint and frequency counts differ");
  const double total = std::accumulate(footprints.begin(), footprints.end(), 0.0);
  std::string too_big;
  for (size_t c = 0; c < footprints.size(); ++c)
    if (static_cast<double>(footprints[c]) > model.pu_capacity_bytes)
      too_big += (too_big.empty() ? "" : ",") + std::to_string(c);
  if (!too_big.empty())
    throw PlacementError("clusters larger than a PU: " + too_big);
  if (total > model.pu_capacity_bytes * static_cast<double>(model.n_pus))
    throw PlacementError("total footprint " + std::to_string(total) + " exceeds " +
                         std::to_string(model.n_pus) + " PUs");
}

Placement empty_placement(size_t n_clusters, size_t n_pus) {
  Placement pl;
  pl.cluster_to_pu.assign(n_clusters, std::numeric_limits<uint32_t>::max());
  pl.pu_bytes.assign(n_pus, 0);
  pl.pu_work.assign(n_pus, 0.0);
  return pl;
}

}  // namespace

Placement place_clusters(std::span<const uint64_t> footprints, std::span<const double> frequencies,
                         const PimSystemModel& model) {
  check_feasible(footprints, frequencies, model);
  const size_t nc = footprints.size();
  std::vector<size_t> order(nc);
  std::iota(order.begin(), order.end(), 0);
  auto weight = [&](size_t c) { return frequencies[c] * static_cast<double>(footprints[c]); };
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return weight(a) > weight(b); });

  Placement pl = empty_placement(nc, model.n_pus);
  std::string failed;
  for (size_t c : order) {
    size_t best = model.n_pus;
    for (size_t p = 0; p < model.n_pus; ++p) {
      if (static_cast<double>(pl.pu_bytes[p] + footprints[c]) > model.pu_capacity_bytes) continue;
      if (best == model.n_pus || pl.pu_work[p] < pl.pu_work[best]) best = p;
    }
    if (best == model.n_pus) {
      failed += (failed.empty() ? "" : ",") + std::to_string(c);
      continue;
    }
    pl.cluster_to_pu[c] = static_cast<uint32_t>(best);
    pl.pu_bytes[best] += footprints[c];
    pl.pu_work[best] += weight(c);
  }
  if (!failed.empty()) throw PlacementError("no PU has room for clusters: " + failed);
  return pl;
}

Placement random_placement(std::span<const uint64_t> footprints,
                           std::span<const double> frequencies, const PimSystemModel& model,
                           uint64_t seed) {
  check_feasible(footprints, frequencies, model);
  std::mt19937_64 rng(seed);
  Placement pl = empty_placement(footprints.size(), model.n_pus);
  for (size_t c = 0; c < footprints.size(); ++c) {
    std::vector<size_t> room;
    for (size_t p = 0; p < model.n_pus; ++p)
      if (static_cast<double>(pl.pu_bytes[p] + footprints[c]) <= model.pu_capacity_bytes) room.push_back(p);
    if (room.empty()) throw PlacementError("no PU has room for cluster " + std::to_string(c));
    const size_t p = room[std::uniform_int_distribution<size_t>(0, room.size() - 1)(rng)];
    pl.cluster_to_pu[c] = static_cast<uint32_t>(p);
    pl.pu_bytes[p] += footprints[c];
    pl.pu_work[p] += frequencies[c] * static_cast<double>(footprints[c]);
  }
  return pl;
}

MiniBatchChoice optimal_minibatch(const StageCosts& costs, size_t n_max) {
  if (n_max == 0) throw ParameterError("optimal_minibatch: n_max must be positive");
  MiniBatchChoice best;
  best.per_item = std::numeric_limits<double>::infinity();
  for (size_t n = 1; n <= n_max; ++n) {
    const double a = costs.pre(n), b = costs.proc(n), c = costs.post(n);
    const double per = std::max({a, b, c}) / static_cast<double>(n);
    if (per < best.per_item) {
      best.n_star = n;
      best.per_item = per;
      best.t_pre = a;
      best.t_proc = b;
      best.t_post = c;
    }
  }
  const double host = std::max(best.t_pre, best.t_post);
  best.proc_balanced = host > 0.0 && std::fabs(best.t_proc - host) <= 0.1 * host;
  return best;
}

StageCosts stage_costs(const RecordCosts& rc, const PimSystemModel& model) {
  const TransferModel link = model.link;
  const double launch = model.launch;
  const auto pus = static_cast<double>(model.n_pus);
  StageCosts sc;
  sc.pre = [rc, link](size_t n) {
    const auto nn = static_cast<double>(n);
    return nn * rc.prep + transfer_time(nn * rc.payload, link);
  };
  sc.proc = [rc, launch, pus](size_t n) {
    return (launch + static_cast<double>(n) * rc.pu_time) / pus;
  };
  sc.post = [rc, link](size_t n) {
    const auto nn = static_cast<double>(n);
    return transfer_time(nn * rc.result, link) + nn * rc.rerank;
  };
  return sc;
}

}  // namespace pimann
