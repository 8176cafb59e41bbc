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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pimann/ivf.hpp"

namespace pimann {

/// Fractional bits of the per-node factor and of the folded query scale.
inline constexpr int kFactorFracBits = 16;

/// Shared random orthogonal transform P (row-major).
struct Rotation {
  size_t dim = 0;
  uint64_t seed = 0;
  std::vector<double> matrix;

  static Rotation identity(size_t dim);

  std::vector<double> apply(std::span<const double> x) const;            // P x
  std::vector<double> apply_transpose(std::span<const double> y) const;  // P^T y

  friend bool operator==(const Rotation&, const Rotation&) = default;
};

Rotation make_rotation(size_t dim, uint64_t seed);

inline size_t code_words(size_t dim) { return (dim + 63) / 64; }

/// A node code before the cluster scale is known.
struct EncodedNode {
  std::vector<uint64_t> code;  // bit i set iff rotated residual component i >= 0
  double residual_norm = 0.0;
  double cos_theta = 0.0;      // <o_bar, o>, in (0, 1]
};

/// Throws DegenerateInputError when the vector equals the centroid.
EncodedNode encode_node(std::span<const float> vec, std::span<const float> centroid,
                        const Rotation& rot);

/// Query-independent term for one node, in units of the cluster scale
/// (the mean residual norm squared) with kFactorFracBits fractional bits.
struct NodeFactor {
  int32_t rabitq_factor = 0;
  float cos_theta = 1.0f;  // validation modes only

  friend bool operator==(const NodeFactor&, const NodeFactor&) = default;
};

/// Throws KernelError if the factor does not fit 32 bits.
NodeFactor make_node_factor(double residual_norm, double cos_theta, double unit_norm);

/// 1/alpha as a sum of at most three signed powers of two.
struct ShiftTerm {
  int8_t shift = 0;  // term is 2^-shift; negative shifts are left shifts
  bool negative = false;

  friend bool operator==(const ShiftTerm&, const ShiftTerm&) = default;
};

struct AlphaShift {
  std::vector<ShiftTerm> terms;
  double alpha = 1.0;  // the value the terms were fitted to

  /// Sum of the terms as a real number.
  double inverse() const;

  friend bool operator==(const AlphaShift&, const AlphaShift&) = default;
};

inline constexpr double kDefaultAlpha = 0.8;
inline constexpr int kMinShift = -2;
inline constexpr int kMaxShift = 24;
inline constexpr double kAlphaTolerance = 1.0 / 64.0;

/// Closest representation of 1/alpha: fewest terms within
/// kAlphaTolerance, then smallest error, then positive signs and
/// non-negative shifts. Throws ParameterError if alpha is not in (0, 4].
AlphaShift alpha_shift_for(double alpha);
AlphaShift default_alpha_shift();
/// alpha = mean cos_theta over the cluster.
AlphaShift calibrate_alpha(std::span<const NodeFactor> factors);

template <class Int>
Int shift_add_scale_t(Int x, const AlphaShift& a) {
  Int acc = 0;
  for (const ShiftTerm& t : a.terms) {
    const Int part = t.shift >= 0 ? (x >> t.shift) : (x << -t.shift);
    acc = t.negative ? acc - part : acc + part;
  }
  return acc;
}

inline int64_t shift_add_scale(int64_t x, const AlphaShift& a) {
  return shift_add_scale_t<int64_t>(x, a);
}

/// A query scalar-quantized against one cluster.
///
/// The rotated residual q' = P (q - c) is mapped onto a grid of `2^bq - 1`
/// steps centered on zero: component k_i approximates (q'_i - lo) / step with
/// lo = -width / 2. The step is `2^scale_shift` times `unit_norm * sqrt(D) /
/// 2^kFactorFracBits`, so the per-candidate scale reduces to a shift.
struct QueryCode {
  ClusterId cluster_id = 0;
  size_t dim = 0;
  int bq = 0;
  size_t words = 0;
  std::vector<uint8_t> components;
  int64_t sumq = 0;
  double lo = 0.0;
  double width = 1.0;
  double step = 0.0;
  int scale_shift = 0;
  bool centered = true;     // false only for a zero residual
  bool degenerate = false;  // residual was zero; all components are 0
  std::vector<uint64_t> planes;  // bq planes of `words` words
  double unit_norm = 1.0;
  double residual_sq_units = 0.0;  // |q - c|^2 / unit_norm^2

  size_t payload_bytes() const;
};

/// Throws ParameterError for bq outside 1..8 and KernelError if the
/// popcount accumulator could overflow 62 bits.
QueryCode preprocess_query(std::span<const float> query, std::span<const float> centroid,
                           const Rotation& rot, int bq, double unit_norm,
                           ClusterId cluster_id = 0);

/// Sum over set code bits of the query components, from bit-plane popcounts.
template <class Int>
Int masked_inner_t(const uint64_t* code, const uint64_t* planes, int bq, size_t words) {
  Int sum = 0;
  const uint64_t* plane = planes;
  for (int j = 0; j < bq; ++j) {
    Int pc = 0;
    for (size_t w = 0; w < words; ++w) pc = pc + Int(std::popcount(code[w] & plane[w]));
    sum = sum + (pc << j);
    plane += words;
  }
  return sum;
}

/// (2 <x_bar, q'> scaled) before the alpha correction: the signed integer the
/// kernel hands to the shift-add scaler.
template <class Int>
Int rabitq_result_t(const QueryCode& qc, const uint64_t* code) {
  Int ones = 0;
  for (size_t w = 0; w < qc.words; ++w) ones = ones + Int(std::popcount(code[w]));
  const Int balance = (ones << 1) - Int(static_cast<int64_t>(qc.dim));
  const Int s = masked_inner_t<Int>(code, qc.planes.data(), qc.bq, qc.words);
  Int r = ((s << 1) - Int(qc.sumq)) << 1;
  if (qc.centered) r = r - ((balance << qc.bq) - balance);
  return r << qc.scale_shift;
}

/// Fixed-point distance: factor minus alpha-scaled result. No multiply or
/// divide on this path.
template <class Int>
Int approx_distance_t(const QueryCode& qc, const uint64_t* code, const NodeFactor& nf,
                      const AlphaShift& a) {
  const Int x = rabitq_result_t<Int>(qc, code);
  const bool neg = x < Int(0);
  const Int scaled = shift_add_scale_t<Int>(neg ? Int(0) - x : x, a);
  const Int f = Int(static_cast<int64_t>(nf.rabitq_factor));
  return neg ? f + scaled : f - scaled;
}

inline int64_t masked_inner(std::span<const uint64_t> code, const QueryCode& qc) {
  return masked_inner_t<int64_t>(code.data(), qc.planes.data(), qc.bq, qc.words);
}

inline int64_t approx_distance(const QueryCode& qc, std::span<const uint64_t> code,
                               const NodeFactor& nf, const AlphaShift& a) {
  return approx_distance_t<int64_t>(qc, code.data(), nf, a);
}

/// Validation: same fixed-point path but scaled by the node's own
/// 1/cos_theta (2^32 fixed point). Uses a multiply.
int64_t approx_distance_per_node(const QueryCode& qc, std::span<const uint64_t> code,
                                 const NodeFactor& nf);

/// Floating-point evaluation on the dequantized query with a real 1/alpha,
/// in the same units as the fixed-point result.
double approx_distance_float(const QueryCode& qc, std::span<const uint64_t> code,
                             const NodeFactor& nf, double inv_alpha);

/// Inverse of the query grid: lo + step * k_i.
std::vector<double> dequantize(const QueryCode& qc);

}  // namespace pimann
