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
#include <string_view>
#include <vector>

#include "pimann/compact_index.hpp"
#include "pimann/quantizer.hpp"

namespace pimann {

enum class KernelMode { kMultiplicationFree, kFloatValidation };
/// kFixed: alpha = 0.8. kCalibrated: the alpha stored with each cluster
/// (its mean cos_theta when the index was built with calibration).
/// kPerNode: each node's own cos_theta (validation).
enum class AlphaMode { kFixed, kCalibrated, kPerNode };

KernelMode parse_kernel_mode(std::string_view s);
AlphaMode parse_alpha_mode(std::string_view s);
std::string_view to_string(KernelMode m);
std::string_view to_string(AlphaMode m);

struct SearchParams {
  size_t ef = 40;
  size_t beam = 30;
  size_t max_hops = 0;  // 0 means 10 * ef
  AlphaMode alpha = AlphaMode::kFixed;
  KernelMode kernel = KernelMode::kMultiplicationFree;

  size_t hop_limit() const { return max_hops == 0 ? 10 * ef : max_hops; }
  /// Throws ParameterError unless ef >= beam >= 1.
  void validate() const;
};

struct SearchStats {
  uint64_t hops = 0;
  uint64_t evals = 0;

  friend bool operator==(const SearchStats&, const SearchStats&) = default;
};

struct Candidate {
  NodeId id = 0;       // global
  LocalId local = 0;
  double dist = 0.0;   // approximate, fixed-point units

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct CandidateSet {
  ClusterId cluster = 0;
  std::vector<Candidate> items;  // ascending by (dist, id)
  SearchStats stats;

  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

/// Scores one member of a cluster against a bound query code.
class DistanceEvaluator {
 public:
  DistanceEvaluator(const ClusterIndex& ci, const QueryCode& qc, AlphaMode alpha,
                    KernelMode kernel);
  double operator()(LocalId i) const;
  const AlphaShift& alpha() const { return alpha_; }

 private:
  const ClusterIndex& ci_;
  const QueryCode& qc_;
  AlphaMode mode_;
  KernelMode kernel_;
  AlphaShift alpha_;
};

/// Best-first search from the entry point with a beam of `beam` nodes.
/// Returns the best `ef` of every node scored. Throws ContractError when
/// the query code was built for another cluster.
CandidateSet beam_search(const ClusterIndex& ci, const QueryCode& qc, const SearchParams& p);

/// Cycle costs on a 32-bit in-memory core without a hardware multiplier;
/// 64-bit integer operations count twice.
struct OpCosts {
  double int_op = 1.0;
  double popcount = 1.0;
  double fp_add = 12.0;
  double fp_mul = 30.0;
  double convert = 10.0;
};

struct KernelOpMix {
  double int_ops = 0.0;
  double popcounts = 0.0;
  double fp_adds = 0.0;
  double fp_muls = 0.0;
  double converts = 0.0;
  double bytes = 0.0;  // local-memory bytes read
};

/// Operation mix of one distance evaluation. The multiply-enabled variant
/// keeps the popcount inner product but applies the affine query constants
/// and the per-node scale in floating point.
KernelOpMix eval_op_mix(size_t dim, int bq, bool multiply_free);

struct PuParams {
  double frequency_hz = 3.5e8;
  double internal_bandwidth = 2.8e12 / 3584.0;  // bytes/s per PU
  OpCosts ops;
  double hop_overhead_cycles = 15.0;
  size_t dim = 32;
  int bq = 4;
  size_t degree = 16;
  size_t id_bytes = 4;
  bool multiply_free = true;
};

double eval_cycles(const PuParams& pu);
double hop_cycles(const PuParams& pu);

/// (evals * eval_cycles + hops * hop_cycles) / frequency, in seconds.
double search_cost(const SearchStats& stats, const PuParams& pu);

}  // namespace pimann
