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
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <zlib.h>

#include "byte_order.hpp"
#include "pimann/compact_index.hpp"
#include "pimann/error.hpp"

namespace pimann {

namespace {

constexpr char kMagic[8] = {'P', 'I', 'M', 'A', 'N', 'N', 'I', 'X'};
constexpr uint32_t kVersion = 1;
constexpr size_t kHeaderBytes = 8 + 4 + 8 + 4;

uint32_t crc_of(const uint8_t* data, size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<uint32_t>(crc);
}

void write_payload(detail::ByteWriter& w, const CompactIndex& ix) {
  const IndexMeta& m = ix.meta;
  w.u32(m.dim);
  w.u64(m.n_nodes);
  w.u32(m.degree);
  w.u32(m.bq);
  w.u64(m.kmeans_seed);
  w.u64(m.rotation_seed);
  w.u32(m.kmeans_iters);
  w.u8(m.calibrated_alpha ? 1 : 0);

  for (double v : ix.rotation.matrix) w.f64(v);

  const IvfPartition& p = ix.partition;
  w.u32(static_cast<uint32_t>(p.n_clusters()));
  for (float v : p.centroids.data()) w.f32(v);
  for (ClusterId c : p.assignment) w.u32(c);
  w.u32(static_cast<uint32_t>(p.objective_history.size()));
  for (double v : p.objective_history) w.f64(v);

  for (const ClusterIndex& ci : ix.clusters) {
    w.u32(ci.cluster_id);
    w.u32(static_cast<uint32_t>(ci.size()));
    for (uint32_t off : ci.adj_offsets) w.u32(off);
    for (LocalId j : ci.adjacency) w.u32(j);
    for (uint64_t word : ci.codes) w.u64(word);
    for (const NodeFactor& f : ci.factors) {
      w.i32(f.rabitq_factor);
      w.f32(f.cos_theta);
    }
    w.f64(ci.unit_norm);
    w.f64(ci.alpha.alpha);
    w.u8(static_cast<uint8_t>(ci.alpha.terms.size()));
    for (const ShiftTerm& t : ci.alpha.terms) {
      w.u8(static_cast<uint8_t>(t.shift));
      w.u8(t.negative ? 1 : 0);
    }
    w.u32(ci.entry);
  }
}

CompactIndex read_payload(detail::ByteReader& r) {
  auto need = [&](uint64_t bytes, const char* what) {
    if (bytes > r.remaining())
      throw CorruptionError(std::string("index: payload too short for ") + what);
  };
  CompactIndex ix;
  IndexMeta& m = ix.meta;
  m.dim = r.u32();
  m.n_nodes = r.u64();
  m.degree = r.u32();
  m.bq = r.u32();
  m.kmeans_seed = r.u64();
  m.rotation_seed = r.u64();
  m.kmeans_iters = r.u32();
  m.calibrated_alpha = r.u8() != 0;
  if (!r.ok() || m.dim == 0) throw CorruptionError("index: bad meta block");

  need(uint64_t{m.dim} * m.dim * 8, "rotation");
  ix.rotation.dim = m.dim;
  ix.rotation.seed = m.rotation_seed;
  ix.rotation.matrix.resize(size_t{m.dim} * m.dim);
  for (double& v : ix.rotation.matrix) v = r.f64();

  const uint32_t nc = r.u32();
  need(uint64_t{nc} * m.dim * 4 + m.n_nodes * 4, "partition");
  std::vector<float> cent(size_t{nc} * m.dim);
  for (float& v : cent) v = r.f32();
  IvfPartition& p = ix.partition;
  p.centroids = VectorSet(m.dim, std::move(cent));
  p.assignment.resize(m.n_nodes);
  for (ClusterId& c : p.assignment) {
    c = r.u32();
    if (c >= nc) throw CorruptionError("index: assignment out of range");
  }
  const uint32_t nh = r.u32();
  need(uint64_t{nh} * 8, "objective history");
  p.objective_history.resize(nh);
  for (double& v : p.objective_history) v = r.f64();
  p.members.assign(nc, {});
  for (NodeId id = 0; id < m.n_nodes; ++id) p.members[p.assignment[id]].push_back(id);

  const size_t words = code_words(m.dim);
  ix.clusters.resize(nc);
  for (uint32_t c = 0; c < nc; ++c) {
    ClusterIndex& ci = ix.clusters[c];
    ci.cluster_id = r.u32();
    const uint32_t size = r.u32();
    if (!r.ok() || ci.cluster_id != c || size != p.members[c].size())
      throw CorruptionError("index: cluster " + std::to_string(c) + " header mismatch");
    const auto row = p.centroids.row(c);
    ci.centroid.assign(row.begin(), row.end());
    ci.members = p.members[c];
    ci.words = words;
    need(uint64_t{size + 1} * 4, "adjacency offsets");
    ci.adj_offsets.resize(size + 1);
    for (uint32_t& off : ci.adj_offsets) off = r.u32();
    const uint64_t edges = ci.adj_offsets.back();
    need(edges * 4 + uint64_t{size} * (words * 8 + 8), "adjacency and codes");
    ci.adjacency.resize(edges);
    for (LocalId& j : ci.adjacency) j = r.u32();
    ci.codes.resize(size_t{size} * words);
    for (uint64_t& wd : ci.codes) wd = r.u64();
    ci.factors.resize(size);
    for (NodeFactor& f : ci.factors) {
      f.rabitq_factor = r.i32();
      f.cos_theta = r.f32();
    }
    ci.unit_norm = r.f64();
    ci.alpha.alpha = r.f64();
    const uint8_t nterms = r.u8();
    if (nterms > 3) throw CorruptionError("index: too many alpha terms");
    ci.alpha.terms.resize(nterms);
    for (ShiftTerm& t : ci.alpha.terms) {
      t.shift = static_cast<int8_t>(r.u8());
      t.negative = r.u8() != 0;
    }
    ci.entry = r.u32();
    if (!r.ok()) throw CorruptionError("index: payload truncated in cluster " + std::to_string(c));
  }
  if (r.remaining() != 0) throw CorruptionError("index: trailing bytes after payload");
  return ix;
}

}  // namespace

std::vector<uint8_t> serialize_index(const CompactIndex& index) {
  detail::ByteWriter payload;
  write_payload(payload, index);
  const auto& body = payload.buffer();
  detail::ByteWriter out;
  out.bytes(kMagic, sizeof(kMagic));
  out.u32(kVersion);
  out.u64(body.size());
  out.u32(crc_of(body.data(), body.size()));
  out.bytes(body.data(), body.size());
  return out.buffer();
}

CompactIndex deserialize_index(std::span<const uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw CorruptionError("index: file shorter than header");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError("index: bad magic");
  detail::ByteReader hdr(bytes.data() + 8, kHeaderBytes - 8);
  const uint32_t version = hdr.u32();
  if (version != kVersion)
    throw FormatError("index: unsupported version " + std::to_string(version));
  const uint64_t length = hdr.u64();
  const uint32_t crc = hdr.u32();
  if (bytes.size() - kHeaderBytes != length)
    throw CorruptionError("index: payload length " + std::to_string(bytes.size() - kHeaderBytes) +
                          " differs from header " + std::to_string(length));
  const uint8_t* body = bytes.data() + kHeaderBytes;
  if (crc_of(body, length) != crc) throw CorruptionError("index: checksum mismatch");
  detail::ByteReader r(body, length);
  CompactIndex ix = read_payload(r);
  ix.validate();
  return ix;
}

void save_index(const std::string& path, const CompactIndex& index) {
  const auto bytes = serialize_index(index);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path + "'");
}

CompactIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_index(bytes);
}

}  // namespace pimann
