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
#include "pimann/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "linalg.hpp"
#include "pimann/error.hpp"

namespace pimann {

Rotation Rotation::identity(size_t dim) {
  Rotation r;
  r.dim = dim;
  r.matrix.assign(dim * dim, 0.0);
  for (size_t i = 0; i < dim; ++i) r.matrix[i * dim + i] = 1.0;
  return r;
}

std::vector<double> Rotation::apply(std::span<const double> x) const {
  std::vector<double> y(dim, 0.0);
  for (size_t i = 0; i < dim; ++i) {
    const double* row = matrix.data() + i * dim;
    double acc = 0.0;
    for (size_t j = 0; j < dim; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

std::vector<double> Rotation::apply_transpose(std::span<const double> y) const {
  std::vector<double> x(dim, 0.0);
  for (size_t i = 0; i < dim; ++i) {
    const double* row = matrix.data() + i * dim;
    for (size_t j = 0; j < dim; ++j) x[j] += row[j] * y[i];
  }
  return x;
}

Rotation make_rotation(size_t dim, uint64_t seed) {
  if (dim == 0) throw ParameterError("rotation: dim must be positive");
  std::mt19937_64 rng(seed);
  Rotation r;
  r.dim = dim;
  r.seed = seed;
  r.matrix = detail::random_orthogonal(dim, rng);
  return r;
}

EncodedNode encode_node(std::span<const float> vec, std::span<const float> centroid,
                        const Rotation& rot) {
  const size_t dim = rot.dim;
  if (vec.size() != dim || centroid.size() != dim)
    throw ParameterError("encode: dimension mismatch");
  std::vector<double> r(dim);
  double norm = 0.0;
  for (size_t i = 0; i < dim; ++i) {
    r[i] = static_cast<double>(vec[i]) - static_cast<double>(centroid[i]);
    norm += r[i] * r[i];
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) throw DegenerateInputError("encode: vector equals its centroid");
  for (double& v : r) v /= norm;
  const auto u = rot.apply(r);

  EncodedNode out;
  out.code.assign(code_words(dim), 0);
  double abs_sum = 0.0;
  for (size_t i = 0; i < dim; ++i) {
    if (u[i] >= 0.0) out.code[i >> 6] |= uint64_t{1} << (i & 63);
    abs_sum += std::fabs(u[i]);
  }
  out.residual_norm = norm;
  out.cos_theta = std::min(1.0, abs_sum / std::sqrt(static_cast<double>(dim)));
  return out;
}

NodeFactor make_node_factor(double residual_norm, double cos_theta, double unit_norm) {
  if (!(unit_norm > 0.0)) throw DegenerateInputError("node factor: cluster scale is zero");
  const double ratio = residual_norm / unit_norm;
  const double scaled = std::ldexp(ratio * ratio, kFactorFracBits);
  if (!(scaled < static_cast<double>(std::numeric_limits<int32_t>::max())))
    throw KernelError("node factor: residual ratio " + std::to_string(ratio) +
                      " overflows 32 bits at frac_bits=" + std::to_string(kFactorFracBits));
  NodeFactor nf;
  nf.rabitq_factor = static_cast<int32_t>(std::llround(scaled));
  nf.cos_theta = static_cast<float>(cos_theta);
  return nf;
}

double AlphaShift::inverse() const {
  double v = 0.0;
  for (const ShiftTerm& t : terms) v += (t.negative ? -1.0 : 1.0) * std::ldexp(1.0, -t.shift);
  return v;
}

namespace {

struct Fit {
  std::vector<ShiftTerm> terms;
  double error = std::numeric_limits<double>::infinity();
  int negatives = 0;
  int left_shifts = 0;
};

bool better(const Fit& a, const Fit& b) {
  constexpr double kEps = 1e-12;
  if (std::fabs(a.error - b.error) > kEps) return a.error < b.error;
  if (a.negatives != b.negatives) return a.negatives < b.negatives;
  if (a.left_shifts != b.left_shifts) return a.left_shifts < b.left_shifts;
  return false;  // first found wins (scan order is by ascending shift)
}

Fit make_fit(const std::vector<ShiftTerm>& terms, double target) {
  Fit f;
  f.terms = terms;
  double v = 0.0;
  for (const ShiftTerm& t : terms) {
    v += (t.negative ? -1.0 : 1.0) * std::ldexp(1.0, -t.shift);
    f.negatives += t.negative ? 1 : 0;
    f.left_shifts += t.shift < 0 ? 1 : 0;
  }
  f.error = std::fabs(v - target);
  return f;
}

}  // namespace

// Exhaustive search over sets of distinct shifts; the leading (smallest
// shift) term is always positive since the target is positive.
AlphaShift alpha_shift_for(double alpha) {
  if (!(alpha > 0.0) || alpha > 4.0)
    throw ParameterError("alpha " + std::to_string(alpha) + " outside (0, 4]");
  const double target = 1.0 / alpha;
  const int n_shift = kMaxShift - kMinShift + 1;
  Fit best_by_size[3];
  for (int a = 0; a < n_shift; ++a) {
    const ShiftTerm ta{static_cast<int8_t>(kMinShift + a), false};
    Fit f1 = make_fit({ta}, target);
    if (better(f1, best_by_size[0])) best_by_size[0] = f1;
    for (int b = a + 1; b < n_shift; ++b) {
      for (int sb = 0; sb < 2; ++sb) {
        const ShiftTerm tb{static_cast<int8_t>(kMinShift + b), sb == 1};
        Fit f2 = make_fit({ta, tb}, target);
        if (better(f2, best_by_size[1])) best_by_size[1] = f2;
        for (int c = b + 1; c < n_shift; ++c) {
          for (int sc = 0; sc < 2; ++sc) {
            const ShiftTerm tc{static_cast<int8_t>(kMinShift + c), sc == 1};
            Fit f3 = make_fit({ta, tb, tc}, target);
            if (better(f3, best_by_size[2])) best_by_size[2] = f3;
          }
        }
      }
    }
  }
  AlphaShift out;
  for (const Fit& f : best_by_size) {
    if (f.error <= kAlphaTolerance) {
      out.terms = f.terms;
      out.alpha = alpha;
      return out;
    }
  }
  // No fit within tolerance: snap alpha to the closest representable value.
  const Fit* best = &best_by_size[0];
  for (const Fit& f : best_by_size)
    if (better(f, *best)) best = &f;
  out.terms = best->terms;
  out.alpha = 1.0 / out.inverse();
  return out;
}

AlphaShift default_alpha_shift() {
  static const AlphaShift cached = alpha_shift_for(kDefaultAlpha);
  return cached;
}

AlphaShift calibrate_alpha(std::span<const NodeFactor> factors) {
  if (factors.empty()) throw ParameterError("calibrate_alpha: empty cluster");
  double sum = 0.0;
  for (const NodeFactor& f : factors) sum += f.cos_theta;
  return alpha_shift_for(sum / static_cast<double>(factors.size()));
}

size_t QueryCode::payload_bytes() const {
  // components as bit-planes, plus sumq, shift, cluster id and flags
  return planes.size() * sizeof(uint64_t) + 8 + 4 + 4 + 4;
}

namespace {

int bit_length(uint64_t v) { return v == 0 ? 0 : 64 - std::countl_zero(v); }

}  // namespace

QueryCode preprocess_query(std::span<const float> query, std::span<const float> centroid,
                           const Rotation& rot, int bq, double unit_norm, ClusterId cluster_id) {
  const size_t dim = rot.dim;
  if (bq < 1 || bq > 8) throw ParameterError("query bits " + std::to_string(bq) + " outside 1..8");
  if (query.size() != dim || centroid.size() != dim)
    throw ParameterError("preprocess_query: dimension mismatch");
  if (!(unit_norm > 0.0)) throw DegenerateInputError("preprocess_query: cluster scale is zero");

  std::vector<double> r(dim);
  double rsq = 0.0;
  for (size_t i = 0; i < dim; ++i) {
    r[i] = static_cast<double>(query[i]) - static_cast<double>(centroid[i]);
    rsq += r[i] * r[i];
  }
  const auto u = rot.apply(r);
  double max_abs = 0.0;
  for (double v : u) max_abs = std::max(max_abs, std::fabs(v));

  QueryCode qc;
  qc.cluster_id = cluster_id;
  qc.dim = dim;
  qc.bq = bq;
  qc.words = code_words(dim);
  qc.unit_norm = unit_norm;
  qc.residual_sq_units = rsq / (unit_norm * unit_norm);
  qc.components.assign(dim, 0);
  qc.planes.assign(static_cast<size_t>(bq) * qc.words, 0);

  const int64_t levels = (int64_t{1} << bq) - 1;
  if (max_abs == 0.0) {
    qc.lo = 0.0;
    qc.width = 1.0;
    qc.step = 1.0 / static_cast<double>(levels);
    qc.centered = false;
    qc.degenerate = true;
    return qc;
  }

  const double base_step =
      unit_norm * std::sqrt(static_cast<double>(dim)) / std::ldexp(1.0, kFactorFracBits);
  int shift = 0;
  while (static_cast<double>(levels) * std::ldexp(base_step, shift) < 2.0 * max_abs) ++shift;

  const int acc_bits = bit_length(static_cast<uint64_t>(6 * levels) * dim);
  if (acc_bits + shift + 2 > 62)
    throw KernelError("fixed-point scale overflow: shift=" + std::to_string(shift) +
                      " bq=" + std::to_string(bq) + " dim=" + std::to_string(dim) +
                      " frac_bits=" + std::to_string(kFactorFracBits));

  qc.scale_shift = shift;
  qc.step = std::ldexp(base_step, shift);
  qc.width = static_cast<double>(levels) * qc.step;
  qc.lo = -0.5 * qc.width;
  for (size_t i = 0; i < dim; ++i) {
    const double k = std::nearbyint((u[i] - qc.lo) / qc.step);
    const auto comp = static_cast<int64_t>(std::clamp(k, 0.0, static_cast<double>(levels)));
    qc.components[i] = static_cast<uint8_t>(comp);
    qc.sumq += comp;
    for (int j = 0; j < bq; ++j)
      if ((comp >> j) & 1)
        qc.planes[static_cast<size_t>(j) * qc.words + (i >> 6)] |= uint64_t{1} << (i & 63);
  }
  return qc;
}

int64_t approx_distance_per_node(const QueryCode& qc, std::span<const uint64_t> code,
                                 const NodeFactor& nf) {
  const int64_t x = rabitq_result_t<int64_t>(qc, code.data());
  __extension__ using Wide = __int128;
  const auto inv = static_cast<Wide>(std::llround(std::ldexp(1.0 / nf.cos_theta, 32)));
  const Wide prod = static_cast<Wide>(x < 0 ? -x : x) * inv;
  const auto scaled = static_cast<int64_t>(prod >> 32);
  return x < 0 ? nf.rabitq_factor + scaled : nf.rabitq_factor - scaled;
}

double approx_distance_float(const QueryCode& qc, std::span<const uint64_t> code,
                             const NodeFactor& nf, double inv_alpha) {
  // 2 <x_bar, q_hat> / unit_norm, expressed in 2^-frac_bits units.
  double ip = 0.0;
  for (size_t i = 0; i < qc.dim; ++i) {
    const double qi = qc.degenerate ? 0.0 : qc.lo + qc.step * qc.components[i];
    const bool bit = (code[i >> 6] >> (i & 63)) & 1;
    ip += bit ? qi : -qi;
  }
  ip /= std::sqrt(static_cast<double>(qc.dim));
  const double cross = std::ldexp(2.0 * ip / qc.unit_norm, kFactorFracBits);
  return static_cast<double>(nf.rabitq_factor) - inv_alpha * cross;
}

std::vector<double> dequantize(const QueryCode& qc) {
  std::vector<double> out(qc.dim);
  for (size_t i = 0; i < qc.dim; ++i)
    out[i] = qc.degenerate ? 0.0 : qc.lo + qc.step * static_cast<double>(qc.components[i]);
  return out;
}

}  // namespace pimann
