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
#include "pimann/host_pipeline.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <unordered_set>

#include "pimann/error.hpp"

namespace pimann {

uint64_t MiniBatch::payload_bytes() const {
  uint64_t b = 0;
  for (const auto& r : records) b += r.payload_bytes;
  return b;
}

Dispatcher::Dispatcher(size_t n_pus, size_t threshold, double wait_limit)
    : threshold_(threshold), wait_limit_(wait_limit), buffers_(n_pus) {
  if (n_pus == 0) throw ConfigError("dispatcher: no PUs");
  if (threshold == 0) throw ConfigError("dispatcher: batch threshold must be at least 1");
  if (!(wait_limit >= 0.0)) throw ConfigError("dispatcher: negative wait limit");
}

MiniBatch Dispatcher::take(uint32_t pu, double now, FlushReason reason) {
  MiniBatch b;
  b.pu = pu;
  b.flush_time = now;
  b.reason = reason;
  b.records.swap(buffers_[pu]);
  return b;
}

std::optional<MiniBatch> Dispatcher::enqueue(const DispatchRecord& r) {
  if (r.pu >= buffers_.size())
    throw RoutingError("record for PU " + std::to_string(r.pu) + " but only " +
                       std::to_string(buffers_.size()) + " PUs");
  auto& buf = buffers_[r.pu];
  buf.push_back(r);
  if (buf.size() >= threshold_) return take(r.pu, r.enqueue_time, FlushReason::kThreshold);
  return std::nullopt;
}

std::vector<MiniBatch> Dispatcher::expire(double now) {
  std::vector<MiniBatch> out;
  for (uint32_t p = 0; p < buffers_.size(); ++p) {
    const auto& buf = buffers_[p];
    if (!buf.empty() && buf.front().enqueue_time + wait_limit_ <= now)
      out.push_back(take(p, now, FlushReason::kTimeout));
  }
  return out;
}

std::optional<double> Dispatcher::next_deadline() const {
  std::optional<double> best;
  for (const auto& buf : buffers_) {
    if (buf.empty()) continue;
    const double d = buf.front().enqueue_time + wait_limit_;
    if (!best || d < *best) best = d;
  }
  return best;
}

std::vector<MiniBatch> Dispatcher::flush_all(double now, FlushReason reason) {
  std::vector<MiniBatch> out;
  for (uint32_t p = 0; p < buffers_.size(); ++p)
    if (!buffers_[p].empty()) out.push_back(take(p, now, reason));
  return out;
}

size_t Dispatcher::pending() const {
  size_t n = 0;
  for (const auto& buf : buffers_) n += buf.size();
  return n;
}

std::vector<MiniBatch> dispatch(std::span<const QueryDispatch> stream,
                                std::span<const uint32_t> cluster_to_pu, size_t n_pus,
                                size_t threshold, double wait_limit) {
  Dispatcher d(n_pus, threshold, wait_limit);
  std::vector<MiniBatch> out;
  auto drain_until = [&](double t) {
    while (auto dl = d.next_deadline()) {
      if (*dl > t) break;
      for (auto& b : d.expire(*dl)) out.push_back(std::move(b));
    }
  };
  uint32_t index = 0;
  for (const QueryDispatch& q : stream) {
    drain_until(q.time);
    for (ClusterId c : q.clusters) {
      if (c >= cluster_to_pu.size() || cluster_to_pu[c] >= n_pus)
        throw RoutingError("cluster " + std::to_string(c) + " has no PU");
      DispatchRecord r{q.query, cluster_to_pu[c], c, q.time, q.payload_bytes, index++};
      if (auto b = d.enqueue(r)) out.push_back(std::move(*b));
    }
  }
  drain_until(std::numeric_limits<double>::infinity());
  return out;
}

std::vector<NodeId> QueryResult::ids() const {
  std::vector<NodeId> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

namespace {

bool entry_less(const ResultEntry& a, const ResultEntry& b) {
  return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
}

}  // namespace

QueryResult rerank(std::span<const float> query, std::span<const SourcedId> candidates,
                   const VectorSet& raw, size_t k, uint32_t query_id) {
  QueryResult out;
  out.query = query_id;
  std::unordered_set<NodeId> seen;
  out.entries.reserve(candidates.size());
  for (const SourcedId& c : candidates) {
    if (!seen.insert(c.id).second)
      throw CorruptionError("rerank: candidate " + std::to_string(c.id) + " repeated");
    if (c.id >= raw.count()) throw CorruptionError("rerank: candidate id out of range");
    out.entries.push_back({c.id, squared_l2(query, raw.row(c.id)), c.cluster});
  }
  const size_t keep = std::min(k, out.entries.size());
  std::partial_sort(out.entries.begin(), out.entries.begin() + static_cast<std::ptrdiff_t>(keep),
                    out.entries.end(), entry_less);
  out.entries.resize(keep);
  out.short_result = keep < k;
  return out;
}

QueryResult merge_topk(std::span<const QueryResult> parts, size_t k) {
  QueryResult out;
  if (!parts.empty()) out.query = parts.front().query;
  std::unordered_set<NodeId> seen;
  for (const auto& p : parts)
    for (const auto& e : p.entries) {
      if (!seen.insert(e.id).second)
        throw CorruptionError("merge: node " + std::to_string(e.id) + " returned by two clusters");
      out.entries.push_back(e);
    }
  const size_t keep = std::min(k, out.entries.size());
  std::partial_sort(out.entries.begin(), out.entries.begin() + static_cast<std::ptrdiff_t>(keep),
                    out.entries.end(), entry_less);
  out.entries.resize(keep);
  out.short_result = keep < k;
  return out;
}

}  // namespace pimann
