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
#include "pimann/vector_set.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <unordered_set>

#include "byte_order.hpp"
#include "linalg.hpp"
#include "pimann/error.hpp"

namespace pimann {

VectorSet::VectorSet(size_t dim, std::vector<float> data)
    : dim_(dim), data_(std::move(data)) {
  if (dim_ == 0 && !data_.empty()) throw ParameterError("vector set: dim must be positive");
  if (dim_ != 0 && data_.size() % dim_ != 0)
    throw ParameterError("vector set: data size " + std::to_string(data_.size()) +
                         " is not a multiple of dim " + std::to_string(dim_));
  for (size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i]))
      throw ParameterError("vector set: non-finite component in row " +
                           std::to_string(i / dim_));
  }
}

VecsFormat parse_vecs_format(std::string_view name) {
  if (name == "fvecs") return VecsFormat::kFvecs;
  if (name == "bvecs") return VecsFormat::kBvecs;
  if (name == "ivecs") return VecsFormat::kIvecs;
  if (name == "synthetic") return VecsFormat::kSynthetic;
  throw ConfigError("unknown vector format '" + std::string(name) + "'");
}

VecsFormat infer_vecs_format(std::string_view path) {
  if (path.find(':') != std::string_view::npos) return VecsFormat::kSynthetic;
  auto ends_with = [&](std::string_view ext) {
    return path.size() >= ext.size() && path.substr(path.size() - ext.size()) == ext;
  };
  if (ends_with(".fvecs")) return VecsFormat::kFvecs;
  if (ends_with(".bvecs")) return VecsFormat::kBvecs;
  if (ends_with(".ivecs")) return VecsFormat::kIvecs;
  throw ConfigError("cannot infer vector format of '" + std::string(path) + "'");
}

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path + "'");
}

size_t component_bytes(VecsFormat f) { return f == VecsFormat::kBvecs ? 1 : 4; }

VectorSet decode_vecs(const std::vector<uint8_t>& bytes, VecsFormat format,
                      const std::string& path) {
  detail::ByteReader rd(bytes.data(), bytes.size());
  const size_t width = component_bytes(format);
  size_t dim = 0;
  std::vector<float> data;
  size_t record = 0;
  while (rd.remaining() > 0) {
    if (rd.remaining() < 4)
      throw IoError("'" + path + "' truncated in header of record " + std::to_string(record));
    const int32_t d = rd.i32();
    if (d <= 0)
      throw FormatError("'" + path + "' record " + std::to_string(record) +
                        " has non-positive dimension " + std::to_string(d));
    if (record == 0) {
      dim = static_cast<size_t>(d);
    } else if (static_cast<size_t>(d) != dim) {
      throw FormatError("'" + path + "' record " + std::to_string(record) + " has dimension " +
                        std::to_string(d) + ", expected " + std::to_string(dim));
    }
    if (rd.remaining() < dim * width)
      throw IoError("'" + path + "' truncated in body of record " + std::to_string(record));
    for (size_t j = 0; j < dim; ++j) {
      switch (format) {
        case VecsFormat::kFvecs: data.push_back(rd.f32()); break;
        case VecsFormat::kBvecs: data.push_back(static_cast<float>(rd.u8())); break;
        case VecsFormat::kIvecs: data.push_back(static_cast<float>(rd.i32())); break;
        case VecsFormat::kSynthetic: break;
      }
    }
    ++record;
  }
  if (record == 0) throw FormatError("'" + path + "' contains no records");
  try {
    return VectorSet(dim, std::move(data));
  } catch (const ParameterError& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  size_t start = 0;
  while (start <= s.size()) {
    const size_t pos = s.find(sep, start);
    const size_t end = pos == std::string_view::npos ? s.size() : pos;
    parts.push_back(s.substr(start, end - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("synthetic spec: bad value '" + std::string(text) + "' for '" +
                      std::string(key) + "'");
  return value;
}

}  // namespace

SyntheticSpec parse_synthetic_spec(std::string_view spec) {
  const size_t colon = spec.find(':');
  if (colon == std::string_view::npos || spec.substr(0, colon) != "gaussian")
    throw ConfigError("synthetic spec must start with 'gaussian:' (got '" + std::string(spec) +
                      "')");
  SyntheticSpec out;
  bool have_n = false, have_dim = false;
  for (std::string_view item : split(spec.substr(colon + 1), ',')) {
    if (item.empty()) continue;
    const size_t eq = item.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("synthetic spec: expected key=value, got '" + std::string(item) + "'");
    const std::string_view key = item.substr(0, eq);
    const std::string_view val = item.substr(eq + 1);
    if (key == "blobs") out.blobs = parse_number<size_t>(key, val);
    else if (key == "n") { out.n = parse_number<size_t>(key, val); have_n = true; }
    else if (key == "dim") { out.dim = parse_number<size_t>(key, val); have_dim = true; }
    else if (key == "seed") out.seed = parse_number<uint64_t>(key, val);
    else if (key == "sigma") out.sigma = parse_number<double>(key, val);
    else if (key == "latent") out.latent = parse_number<size_t>(key, val);
    else if (key == "noise") out.noise = parse_number<double>(key, val);
    else if (key == "stream") out.stream = parse_number<uint64_t>(key, val);
    else throw ConfigError("synthetic spec: unknown key '" + std::string(key) + "'");
  }
  if (!have_n || !have_dim) throw ConfigError("synthetic spec requires n and dim");
  if (out.dim == 0 || out.blobs == 0) throw ConfigError("synthetic spec: dim and blobs must be positive");
  if (out.latent > out.dim) throw ConfigError("synthetic spec: latent exceeds dim");
  if (out.sigma < 0 || out.noise < 0) throw ConfigError("synthetic spec: negative sigma/noise");
  return out;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  const size_t dim = spec.dim;
  const size_t latent = spec.latent == 0 ? dim : spec.latent;
  std::mt19937_64 center_rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Blob centers in the latent space, unit circumradius.
  std::vector<double> centers(spec.blobs * latent, 0.0);
  if (spec.blobs <= latent + 1 && spec.blobs > 1) {
    // Regular simplex via the Helmert basis: column i of the (b-1) x b
    // Helmert matrix is vertex i, centered at the origin.
    const size_t b = spec.blobs;
    std::vector<double> simplex(b * latent, 0.0);
    for (size_t i = 0; i < b; ++i) {
      for (size_t k = 0; k + 1 < b; ++k) {
        const double norm = std::sqrt(static_cast<double>((k + 1) * (k + 2)));
        double h = 0.0;
        if (i <= k) h = 1.0 / norm;
        else if (i == k + 1) h = -static_cast<double>(k + 1) / norm;
        simplex[i * latent + k] = h;
      }
    }
    std::vector<double> rot = detail::random_orthogonal(latent, center_rng);
    for (size_t i = 0; i < b; ++i) {
      double norm = 0.0;
      for (size_t r = 0; r < latent; ++r) {
        double acc = 0.0;
        for (size_t c = 0; c < latent; ++c) acc += rot[r * latent + c] * simplex[i * latent + c];
        centers[i * latent + r] = acc;
        norm += acc * acc;
      }
      norm = std::sqrt(norm);
      for (size_t r = 0; r < latent; ++r) centers[i * latent + r] /= norm;
    }
  } else {
    for (size_t i = 0; i < spec.blobs; ++i) {
      double norm = 0.0;
      for (size_t r = 0; r < latent; ++r) {
        const double g = gauss(center_rng);
        centers[i * latent + r] = g;
        norm += g * g;
      }
      norm = std::sqrt(norm);
      for (size_t r = 0; r < latent; ++r) centers[i * latent + r] /= norm;
    }
  }

  // Orthonormal embedding of the latent space: first `latent` columns of a
  // random orthogonal dim x dim matrix.
  std::vector<double> embed;
  if (latent < dim) embed = detail::random_orthogonal(dim, center_rng);

  std::seed_seq seq{static_cast<uint32_t>(spec.seed), static_cast<uint32_t>(spec.seed >> 32),
                    static_cast<uint32_t>(spec.stream), static_cast<uint32_t>(spec.stream >> 32),
                    0x51a7u};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<size_t> pick(0, spec.blobs - 1);

  SyntheticData out;
  out.labels.resize(spec.n);
  std::vector<float> data(spec.n * dim);
  std::vector<double> z(latent);
  for (size_t i = 0; i < spec.n; ++i) {
    const size_t label = pick(rng);
    out.labels[i] = static_cast<uint32_t>(label);
    for (size_t r = 0; r < latent; ++r)
      z[r] = centers[label * latent + r] + spec.sigma * gauss(rng);
    for (size_t r = 0; r < dim; ++r) {
      double x;
      if (latent < dim) {
        x = 0.0;
        for (size_t c = 0; c < latent; ++c) x += embed[r * dim + c] * z[c];
      } else {
        x = z[r];
      }
      if (spec.noise > 0) x += spec.noise * gauss(rng);
      data[i * dim + r] = static_cast<float>(x);
    }
  }
  out.vectors = VectorSet(dim, std::move(data));
  return out;
}

VectorSet load_vectors(const std::string& path, VecsFormat format) {
  if (format == VecsFormat::kSynthetic) return generate_synthetic(parse_synthetic_spec(path)).vectors;
  return decode_vecs(read_file(path), format, path);
}

VectorSet load_vectors(const std::string& path) {
  return load_vectors(path, infer_vecs_format(path));
}

void save_vectors(const std::string& path, const VectorSet& vs, VecsFormat format) {
  if (format == VecsFormat::kSynthetic) throw ConfigError("cannot save in synthetic format");
  detail::ByteWriter w;
  for (size_t i = 0; i < vs.count(); ++i) {
    w.i32(static_cast<int32_t>(vs.dim()));
    for (float v : vs.row(i)) {
      switch (format) {
        case VecsFormat::kFvecs: w.f32(v); break;
        case VecsFormat::kBvecs:
          if (v != std::floor(v) || v < 0.0f || v > 255.0f)
            throw ParameterError("bvecs: component " + std::to_string(v) + " in row " +
                                 std::to_string(i) + " is not a byte");
          w.u8(static_cast<uint8_t>(v));
          break;
        case VecsFormat::kIvecs:
          if (v != std::floor(v) || std::fabs(v) > 2147483520.0f)
            throw ParameterError("ivecs: component in row " + std::to_string(i) +
                                 " is not an int32");
          w.i32(static_cast<int32_t>(v));
          break;
        case VecsFormat::kSynthetic: break;
      }
    }
  }
  write_file(path, w.buffer());
}

VectorSet normalize(const VectorSet& vs) {
  std::vector<float> out(vs.data().begin(), vs.data().end());
  const size_t dim = vs.dim();
  for (size_t i = 0; i < vs.count(); ++i) {
    double norm = 0.0;
    for (float v : vs.row(i)) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw DegenerateInputError("normalize: row " + std::to_string(i) + " has zero norm");
    for (size_t j = 0; j < dim; ++j)
      out[i * dim + j] = static_cast<float>(static_cast<double>(out[i * dim + j]) / norm);
  }
  return VectorSet(dim, std::move(out));
}

double squared_l2(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

std::vector<Neighbor> brute_force_knn(std::span<const float> query, const VectorSet& vs,
                                      size_t k) {
  if (query.size() != vs.dim())
    throw ParameterError("brute_force_knn: query dim " + std::to_string(query.size()) +
                         " != set dim " + std::to_string(vs.dim()));
  if (k == 0 || k > vs.count())
    throw ParameterError("brute_force_knn: k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(vs.count()) + "]");
  std::vector<Neighbor> all(vs.count());
  for (size_t i = 0; i < vs.count(); ++i)
    all[i] = {static_cast<NodeId>(i), squared_l2(query, vs.row(i))};
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    neighbor_less);
  all.resize(k);
  return all;
}

GroundTruth compute_ground_truth(const VectorSet& queries, const VectorSet& base, size_t k) {
  if (queries.dim() != base.dim())
    throw ParameterError("ground truth: query dim " + std::to_string(queries.dim()) +
                         " != base dim " + std::to_string(base.dim()));
  GroundTruth gt;
  gt.k = k;
  gt.per_query.resize(queries.count());
  const auto nq = static_cast<std::ptrdiff_t>(queries.count());
  if (k == 0 || k > base.count())
    throw ParameterError("ground truth: k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(base.count()) + "]");
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t q = 0; q < nq; ++q)
    gt.per_query[static_cast<size_t>(q)] = brute_force_knn(queries.row(static_cast<size_t>(q)), base, k);
  return gt;
}

void save_ground_truth(const std::string& path, const GroundTruth& gt) {
  detail::ByteWriter w;
  for (const auto& row : gt.per_query) {
    w.i32(static_cast<int32_t>(row.size()));
    for (const auto& nb : row) w.i32(static_cast<int32_t>(nb.id));
  }
  write_file(path, w.buffer());
}

GroundTruth load_ground_truth(const std::string& path) {
  const auto bytes = read_file(path);
  detail::ByteReader rd(bytes.data(), bytes.size());
  GroundTruth gt;
  while (rd.remaining() > 0) {
    if (rd.remaining() < 4) throw IoError("'" + path + "' truncated");
    const int32_t k = rd.i32();
    if (k <= 0) throw FormatError("'" + path + "' has non-positive record length");
    if (gt.per_query.empty()) gt.k = static_cast<size_t>(k);
    else if (static_cast<size_t>(k) != gt.k) throw FormatError("'" + path + "' mixes record lengths");
    if (rd.remaining() < gt.k * 4) throw IoError("'" + path + "' truncated");
    std::vector<Neighbor> row(gt.k);
    for (auto& nb : row) {
      const int32_t id = rd.i32();
      if (id < 0) throw FormatError("'" + path + "' has a negative id");
      nb.id = static_cast<NodeId>(id);
    }
    gt.per_query.push_back(std::move(row));
  }
  return gt;
}

double recall_at_k(std::span<const NodeId> result, std::span<const NodeId> truth, size_t k) {
  if (k == 0) return 0.0;
  const size_t nr = std::min(result.size(), k);
  const size_t nt = std::min(truth.size(), k);
  std::unordered_set<NodeId> t(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(nt));
  size_t hits = 0;
  std::unordered_set<NodeId> seen;
  for (size_t i = 0; i < nr; ++i) {
    if (seen.insert(result[i]).second && t.count(result[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace pimann
