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
#include <string_view>
#include <vector>

namespace pimann {

using NodeId = uint32_t;

/// Dense row-major float vectors; row i has id i. Immutable once built.
class VectorSet {
 public:
  VectorSet() = default;
  /// Throws ParameterError when `data.size()` is not a multiple of `dim` or a
  /// component is not finite.
  VectorSet(size_t dim, std::vector<float> data);

  size_t dim() const { return dim_; }
  size_t count() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const { return count() == 0; }

  std::span<const float> row(size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<const float> data() const { return data_; }

  friend bool operator==(const VectorSet&, const VectorSet&) = default;

 private:
  size_t dim_ = 0;
  std::vector<float> data_;
};

enum class VecsFormat { kFvecs, kBvecs, kIvecs, kSynthetic };

/// Accepts "fvecs", "bvecs", "ivecs" and "synthetic".
VecsFormat parse_vecs_format(std::string_view name);
/// Infers the format from a file extension; anything containing ':' is a
/// synthetic spec.
VecsFormat infer_vecs_format(std::string_view path);

/// Reads a .fvecs/.bvecs/.ivecs file, or generates a synthetic set when
/// `format` is kSynthetic (then `path` is the spec string).
VectorSet load_vectors(const std::string& path, VecsFormat format);
VectorSet load_vectors(const std::string& path);

/// bvecs and ivecs require integral components in the representable range.
void save_vectors(const std::string& path, const VectorSet& vs, VecsFormat format);

/// Synthetic generator: isotropic Gaussian mixture.
///
/// Spec strings look like `gaussian:blobs=4,n=1000,dim=16,seed=7`. Optional
/// keys: `sigma` (per-axis standard deviation, default 0.15), `latent`
/// (dimension the mixture lives in before a seed-fixed orthonormal embedding,
/// default `dim`), `noise` (isotropic ambient noise added after embedding,
/// default 0) and `stream` (selects an independent sample stream that shares
/// the blob centers, used for query sets).
///
/// Centers are the vertices of a regular simplex under a random rotation when
/// blobs <= latent + 1, and random unit directions otherwise.
struct SyntheticSpec {
  size_t blobs = 4;
  size_t n = 1000;
  size_t dim = 16;
  uint64_t seed = 0;
  double sigma = 0.15;
  size_t latent = 0;  // 0 means dim
  double noise = 0.0;
  uint64_t stream = 0;
};

SyntheticSpec parse_synthetic_spec(std::string_view spec);

struct SyntheticData {
  VectorSet vectors;
  std::vector<uint32_t> labels;  // blob index per row
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Scales every row to unit Euclidean norm. Throws DegenerateInputError naming
/// the first zero row.
VectorSet normalize(const VectorSet& vs);

double squared_l2(std::span<const float> a, std::span<const float> b);

struct Neighbor {
  NodeId id = 0;
  double dist = 0.0;  // squared Euclidean

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Ascending by distance, ties by smaller id.
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
}

/// Exact k smallest squared distances, ascending, ties by smaller id.
std::vector<Neighbor> brute_force_knn(std::span<const float> query,
                                      const VectorSet& vs, size_t k);

struct GroundTruth {
  size_t k = 0;
  std::vector<std::vector<Neighbor>> per_query;
};

GroundTruth compute_ground_truth(const VectorSet& queries, const VectorSet& base,
                                 size_t k);

/// Ground truth as ivecs: one record of k ids per query.
void save_ground_truth(const std::string& path, const GroundTruth& gt);
/// Loads ids only; distances are left at zero.
GroundTruth load_ground_truth(const std::string& path);

/// |result[:k] ∩ truth| / k.
double recall_at_k(std::span<const NodeId> result, std::span<const NodeId> truth,
                   size_t k);

}  // namespace pimann
