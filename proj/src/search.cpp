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
#include "pimann/search.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pimann/error.hpp"

namespace pimann {

KernelMode parse_kernel_mode(std::string_view s) {
  if (s == "multiplication-free" || s == "mulfree") return KernelMode::kMultiplicationFree;
  if (s == "float-validation" || s == "float") return KernelMode::kFloatValidation;
  throw ConfigError("unknown kernel mode '" + std::string(s) + "'");
}

AlphaMode parse_alpha_mode(std::string_view s) {
  if (s == "fixed-0.8" || s == "fixed") return AlphaMode::kFixed;
  if (s == "calibrated") return AlphaMode::kCalibrated;
  if (s == "per-node-validation" || s == "per-node") return AlphaMode::kPerNode;
  throw ConfigError("unknown alpha mode '" + std::string(s) + "'");
}

std::string_view to_string(KernelMode m) {
  return m == KernelMode::kMultiplicationFree ? "multiplication-free" : "float-validation";
}

std::string_view to_string(AlphaMode m) {
  switch (m) {
    case AlphaMode::kFixed: return "fixed-0.8";
    case AlphaMode::kCalibrated: return "calibrated";
    case AlphaMode::kPerNode: return "per-node-validation";
  }
  return "?";
}

void SearchParams::validate() const {
  if (beam < 1 || ef < beam)
    throw ParameterError("search: need ef >= beam >= 1 (ef=" + std::to_string(ef) +
                         ", beam=" + std::to_string(beam) + ")");
}

DistanceEvaluator::DistanceEvaluator(const ClusterIndex& ci, const QueryCode& qc, AlphaMode alpha,
                                     KernelMode kernel)
    : ci_(ci), qc_(qc), mode_(alpha), kernel_(kernel) {
  if (qc.cluster_id != ci.cluster_id || qc.dim != ci.centroid.size() ||
      qc.words != ci.words)
    throw ContractError("query code for cluster " + std::to_string(qc.cluster_id) +
                        " used against cluster " + std::to_string(ci.cluster_id));
  switch (alpha) {
    case AlphaMode::kFixed: alpha_ = default_alpha_shift(); break;
    case AlphaMode::kCalibrated: alpha_ = ci.alpha; break;
    case AlphaMode::kPerNode: alpha_ = default_alpha_shift(); break;
  }
}

double DistanceEvaluator::operator()(LocalId i) const {
  const auto code = ci_.code(i);
  const NodeFactor& nf = ci_.factors[i];
  if (kernel_ == KernelMode::kFloatValidation) {
    const double inv = mode_ == AlphaMode::kPerNode ? 1.0 / nf.cos_theta : 1.0 / alpha_.alpha;
    return approx_distance_float(qc_, code, nf, inv);
  }
  if (mode_ == AlphaMode::kPerNode) return static_cast<double>(approx_distance_per_node(qc_, code, nf));
  return static_cast<double>(approx_distance(qc_, code, nf, alpha_));
}

namespace {

struct BeamEntry {
  double dist;
  LocalId local;
  bool expanded;
};

bool entry_less(double da, LocalId a, double db, LocalId b) {
  return da < db || (da == db && a < b);
}

}  // namespace

CandidateSet beam_search(const ClusterIndex& ci, const QueryCode& qc, const SearchParams& p) {
  p.validate();
  if (ci.size() == 0) throw ParameterError("search: empty cluster");
  const DistanceEvaluator score(ci, qc, p.alpha, p.kernel);

  CandidateSet out;
  out.cluster = ci.cluster_id;
  std::vector<char> visited(ci.size(), 0);
  std::vector<Candidate> scored;
  std::vector<BeamEntry> beam;
  beam.reserve(p.beam + 1);

  auto visit = [&](LocalId i) {
    visited[i] = 1;
    const double d = score(i);
    ++out.stats.evals;
    scored.push_back({ci.members[i], i, d});
    if (beam.size() == p.beam && !entry_less(d, i, beam.back().dist, beam.back().local)) return;
    auto pos = std::find_if(beam.begin(), beam.end(), [&](const BeamEntry& e) {
      return entry_less(d, i, e.dist, e.local);
    });
    beam.insert(pos, {d, i, false});
    if (beam.size() > p.beam) beam.pop_back();
  };

  visit(ci.entry);
  const size_t hop_limit = p.hop_limit();
  for (;;) {
    auto next = std::find_if(beam.begin(), beam.end(), [](const BeamEntry& e) { return !e.expanded; });
    if (next == beam.end() || out.stats.hops >= hop_limit) break;
    next->expanded = true;
    const LocalId v = next->local;
    ++out.stats.hops;
    for (LocalId w : ci.neighbors(v))
      if (!visited[w]) visit(w);
  }

  const size_t keep = std::min(p.ef, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    [](const Candidate& a, const Candidate& b) {
                      return entry_less(a.dist, a.local, b.dist, b.local);
                    });
  scored.resize(keep);
  out.items = std::move(scored);
  return out;
}

// Per plane and word: AND, popcount (two 32-bit halves) and an add, all on
// 64-bit values. Per plane: shift and accumulate.
KernelOpMix eval_op_mix(size_t dim, int bq, bool multiply_free) {
  const double words = static_cast<double>(code_words(dim));
  const double planes = bq;
  KernelOpMix mix;
  mix.int_ops = planes * words * 4.0 + planes * 4.0;
  mix.popcounts = planes * words * 2.0;
  // popcount of the code itself and the balance term
  mix.popcounts += words * 2.0;
  mix.int_ops += words * 2.0 + 4.0;
  mix.bytes = words * 8.0 + 4.0;
  if (multiply_free) {
    // 2S - sumq, doubling, centered correction, scale shift, sign split,
    // two shift-add terms, final subtraction
    mix.int_ops += 6.0 + 6.0 + 2.0 + 4.0 + 8.0 + 2.0;
  } else {
    // 2S - sumq in integers, then convert both sums, scale by the step and
    // lo, combine, apply the per-node factor and subtract from the factor
    mix.int_ops += 4.0;
    mix.converts = 2.0;
    mix.fp_muls = 3.0;
    mix.fp_adds = 2.0;
    mix.bytes += 4.0;  // per-node scale
  }
  return mix;
}

double eval_cycles(const PuParams& pu) {
  const KernelOpMix mix = eval_op_mix(pu.dim, pu.bq, pu.multiply_free);
  const double bytes_per_cycle = pu.internal_bandwidth / pu.frequency_hz;
  return mix.int_ops * pu.ops.int_op + mix.popcounts * pu.ops.popcount +
         mix.fp_adds * pu.ops.fp_add + mix.fp_muls * pu.ops.fp_mul +
         mix.converts * pu.ops.convert + mix.bytes / bytes_per_cycle;
}

double hop_cycles(const PuParams& pu) {
  const double bytes_per_cycle = pu.internal_bandwidth / pu.frequency_hz;
  return pu.hop_overhead_cycles +
         static_cast<double>(pu.degree * pu.id_bytes) / bytes_per_cycle;
}

double search_cost(const SearchStats& stats, const PuParams& pu) {
  return (static_cast<double>(stats.evals) * eval_cycles(pu) +
          static_cast<double>(stats.hops) * hop_cycles(pu)) /
         pu.frequency_hz;
}

}  // namespace pimann
