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
#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <random>

#include "counted_int.hpp"
#include "oracles.hpp"
#include "pimann/compact_index.hpp"
#include "pimann/error.hpp"
#include "pimann/quantizer.hpp"

namespace pimann {
namespace {

using testing::CountedInt;
using testing::OpCounts;

std::vector<float> vec(std::initializer_list<float> v) { return v; }

TEST(Rotation, OneDimensional) {
  const Rotation r = make_rotation(1, 5);
  ASSERT_EQ(r.matrix.size(), 1u);
  EXPECT_NEAR(std::fabs(r.matrix[0]), 1.0, 1e-12);
}

TEST(Rotation, OrthogonalDeterministicIsometry) {
  for (uint64_t seed : {1u, 2u, 77u}) {
    const Rotation r = make_rotation(32, seed);
    EXPECT_TRUE(r == make_rotation(32, seed));
    double worst = 0;
    for (size_t i = 0; i < 32; ++i)
      for (size_t j = 0; j < 32; ++j) {
        double s = 0;
        for (size_t k = 0; k < 32; ++k) s += r.matrix[k * 32 + i] * r.matrix[k * 32 + j];
        worst = std::max(worst, std::fabs(s - (i == j ? 1.0 : 0.0)));
      }
    EXPECT_LE(worst, 1e-5);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<double> x(32);
    for (auto& v : x) v = g(rng);
    const auto y = r.apply(x);
    double nx = 0, ny = 0;
    for (size_t i = 0; i < 32; ++i) {
      nx += x[i] * x[i];
      ny += y[i] * y[i];
    }
    EXPECT_NEAR(std::sqrt(ny), std::sqrt(nx), 1e-6 * std::sqrt(nx));
    const auto back = r.apply_transpose(y);
    for (size_t i = 0; i < 32; ++i) EXPECT_NEAR(back[i], x[i], 1e-9);
  }
  EXPECT_FALSE(make_rotation(16, 1) == make_rotation(16, 2));
}

TEST(EncodeNode, SignReadout) {
  const auto c = vec({0.5f, 0.5f});
  const auto o = vec({1.5f, -0.5f});
  const EncodedNode e = encode_node(o, c, Rotation::identity(2));
  EXPECT_EQ(e.code[0] & 1u, 1u);
  EXPECT_EQ((e.code[0] >> 1) & 1u, 0u);
  EXPECT_NEAR(e.residual_norm, std::sqrt(2.0), 1e-12);
  EXPECT_THROW(encode_node(c, c, Rotation::identity(2)), DegenerateInputError);
}

TEST(EncodeNode, CosThetaMatchesReconstruction) {
  const size_t d = 32;
  const Rotation rot = make_rotation(d, 3);
  const VectorSet pts = testing::random_set(200, d, 4);
  const std::vector<float> c(d, 0.1f);
  for (size_t n = 0; n < pts.count(); ++n) {
    const EncodedNode e = encode_node(pts.row(n), c, rot);
    EXPECT_GT(e.cos_theta, 0.0);
    EXPECT_LE(e.cos_theta, 1.0);
    EXPECT_EQ(e.code.size(), 1u);
    // o_bar = P^T x_bar with x_bar_i = +-1/sqrt(D); cos = <o_bar, o>.
    std::vector<double> xbar(d);
    for (size_t i = 0; i < d; ++i) xbar[i] = ((e.code[0] >> i) & 1 ? 1.0 : -1.0) / std::sqrt(double(d));
    double dot = 0, norm = 0;
    for (size_t j = 0; j < d; ++j) {
      double obar_j = 0;
      for (size_t i = 0; i < d; ++i) obar_j += rot.matrix[i * d + j] * xbar[i];
      const double r = double(pts.row(n)[j]) - c[j];
      dot += obar_j * r;
      norm += r * r;
    }
    EXPECT_NEAR(e.cos_theta, dot / std::sqrt(norm), 1e-5);
  }
}

TEST(EncodeNode, PaddingBitsZero) {
  const size_t d = 70;
  const Rotation rot = make_rotation(d, 9);
  const VectorSet pts = testing::random_set(20, d, 5);
  const std::vector<float> c(d, 0.0f);
  for (size_t n = 0; n < pts.count(); ++n) {
    const EncodedNode e = encode_node(pts.row(n), c, rot);
    ASSERT_EQ(e.code.size(), 2u);
    EXPECT_EQ(e.code[1] >> (d - 64), 0u);
  }
}

TEST(NodeFactor, MatchesFloatWithinOneUlp) {
  const size_t d = 32;
  const Rotation rot = make_rotation(d, 8);
  const VectorSet pts = testing::random_set(50, d, 6);
  const std::vector<float> c(d, -0.2f);
  const double unit = 4.7;
  for (size_t n = 0; n < pts.count(); ++n) {
    const EncodedNode e = encode_node(pts.row(n), c, rot);
    const NodeFactor nf = make_node_factor(e.residual_norm, e.cos_theta, unit);
    const double want = static_cast<double>(testing::ref_sqdist(pts.row(n), c)) / (unit * unit) * 65536.0;
    EXPECT_LE(std::fabs(nf.rabitq_factor - want), 1.0);
    EXPECT_FLOAT_EQ(nf.cos_theta, static_cast<float>(e.cos_theta));
  }
  EXPECT_THROW(make_node_factor(1.0, 0.8, 0.0), DegenerateInputError);
  EXPECT_THROW(make_node_factor(1e6, 0.8, 1.0), KernelError);
}

TEST(PreprocessQuery, EqualRotatedResidualGivesEqualComponents) {
  const size_t d = 16;
  const std::vector<float> c(d, 0.0f), q(d, 0.75f);
  const QueryCode qc = preprocess_query(q, c, Rotation::identity(d), 4, 1.0);
  for (size_t i = 1; i < d; ++i) EXPECT_EQ(qc.components[i], qc.components[0]);
  EXPECT_EQ(qc.sumq, static_cast<int64_t>(d) * qc.components[0]);
}

TEST(PreprocessQuery, OneBitSigns) {
  const QueryCode qc = preprocess_query(vec({-1, 1}), vec({0, 0}), Rotation::identity(2), 1, 1.0);
  EXPECT_EQ(qc.components[0], 0);
  EXPECT_EQ(qc.components[1], 1);
  EXPECT_EQ(qc.sumq, 1);
}

TEST(PreprocessQuery, DequantizationErrorAndPlanes) {
  const size_t d = 40;
  const Rotation rot = make_rotation(d, 12);
  const VectorSet qs = testing::random_set(30, d, 13);
  const std::vector<float> c(d, 0.3f);
  for (int bq : {1, 2, 4, 8}) {
    for (size_t n = 0; n < qs.count(); ++n) {
      const QueryCode qc = preprocess_query(qs.row(n), c, rot, bq, 2.5, 7);
      EXPECT_EQ(qc.cluster_id, 7u);
      std::vector<double> r(d);
      for (size_t i = 0; i < d; ++i) r[i] = double(qs.row(n)[i]) - c[i];
      const auto u = rot.apply(r);
      const auto deq = dequantize(qc);
      int64_t sum = 0;
      for (size_t i = 0; i < d; ++i) {
        EXPECT_LT(qc.components[i], 1 << bq);
        EXPECT_LE(std::fabs(deq[i] - u[i]), qc.width / std::ldexp(1.0, bq) + 1e-12);
        sum += qc.components[i];
        for (int j = 0; j < bq; ++j) {
          const bool plane_bit = (qc.planes[j * qc.words + i / 64] >> (i % 64)) & 1;
          EXPECT_EQ(plane_bit, bool((qc.components[i] >> j) & 1));
        }
      }
      EXPECT_EQ(qc.sumq, sum);
    }
  }
}

TEST(PreprocessQuery, DegenerateResidual) {
  const auto c = vec({1, 2, 3});
  const QueryCode qc = preprocess_query(c, c, Rotation::identity(3), 4, 1.0);
  EXPECT_TRUE(qc.degenerate);
  EXPECT_EQ(qc.width, 1.0);
  EXPECT_EQ(qc.sumq, 0);
  for (auto k : qc.components) EXPECT_EQ(k, 0);
}

TEST(PreprocessQuery, Errors) {
  const auto c = vec({0, 0});
  EXPECT_THROW(preprocess_query(vec({1, 0}), c, Rotation::identity(2), 0, 1.0), ParameterError);
  EXPECT_THROW(preprocess_query(vec({1, 0}), c, Rotation::identity(2), 9, 1.0), ParameterError);
  try {
    preprocess_query(vec({1e6f, 0}), c, Rotation::identity(2), 8, 1e-12);
    FAIL();
  } catch (const KernelError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("shift"), std::string::npos);
    EXPECT_NE(msg.find("frac_bits"), std::string::npos);
  }
}

QueryCode code_with_components(const std::vector<uint8_t>& comps, int bq) {
  QueryCode qc;
  qc.dim = comps.size();
  qc.bq = bq;
  qc.words = code_words(qc.dim);
  qc.components = comps;
  qc.planes.assign(static_cast<size_t>(bq) * qc.words, 0);
  for (size_t i = 0; i < comps.size(); ++i) {
    qc.sumq += comps[i];
    for (int j = 0; j < bq; ++j)
      if ((comps[i] >> j) & 1) qc.planes[j * qc.words + i / 64] |= uint64_t{1} << (i % 64);
  }
  return qc;
}

int64_t naive_masked(const std::vector<uint64_t>& code, const std::vector<uint8_t>& comps) {
  int64_t s = 0;
  for (size_t i = 0; i < comps.size(); ++i)
    if ((code[i / 64] >> (i % 64)) & 1) s += comps[i];
  return s;
}

TEST(MaskedInner, ZeroAndFullCodes) {
  const QueryCode qc = code_with_components({3, 1, 4, 1, 5, 9, 2, 6}, 4);
  EXPECT_EQ(masked_inner(std::vector<uint64_t>{0}, qc), 0);
  EXPECT_EQ(masked_inner(std::vector<uint64_t>{0xff}, qc), qc.sumq);
}

TEST(MaskedInner, ExhaustiveSmall) {
  for (size_t d = 1; d <= 4; ++d)
    for (int bq = 1; bq <= 2; ++bq) {
      const size_t levels = size_t{1} << bq;
      size_t n_queries = 1;
      for (size_t i = 0; i < d; ++i) n_queries *= levels;
      for (size_t qi = 0; qi < n_queries; ++qi) {
        std::vector<uint8_t> comps(d);
        size_t rest = qi;
        for (size_t i = 0; i < d; ++i) {
          comps[i] = static_cast<uint8_t>(rest % levels);
          rest /= levels;
        }
        const QueryCode qc = code_with_components(comps, bq);
        for (uint64_t code = 0; code < (uint64_t{1} << d); ++code)
          ASSERT_EQ(masked_inner(std::vector<uint64_t>{code}, qc), naive_masked({code}, comps));
      }
    }
  // D = 8, one bit: every code against every query.
  for (uint64_t qbits = 0; qbits < 256; ++qbits) {
    std::vector<uint8_t> comps(8);
    for (size_t i = 0; i < 8; ++i) comps[i] = (qbits >> i) & 1;
    const QueryCode qc = code_with_components(comps, 1);
    for (uint64_t code = 0; code < 256; ++code)
      ASSERT_EQ(masked_inner(std::vector<uint64_t>{code}, qc), std::popcount(code & qbits));
  }
}

TEST(MaskedInner, RandomizedWide) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t d = 1 + rng() % 300;
    const int bq = 1 + static_cast<int>(rng() % 8);
    std::vector<uint8_t> comps(d);
    for (auto& c : comps) c = static_cast<uint8_t>(rng() % (1u << bq));
    std::vector<uint64_t> code(code_words(d));
    for (auto& w : code) w = rng();
    if (d % 64) code.back() &= (uint64_t{1} << (d % 64)) - 1;
    ASSERT_EQ(masked_inner(code, code_with_components(comps, bq)), naive_masked(code, comps));
  }
}

TEST(AlphaShift, KnownDecompositions) {
  const AlphaShift a08 = alpha_shift_for(0.8);
  ASSERT_EQ(a08.terms.size(), 2u);
  EXPECT_EQ(a08.terms[0], (ShiftTerm{0, false}));
  EXPECT_EQ(a08.terms[1], (ShiftTerm{2, false}));
  EXPECT_TRUE(default_alpha_shift() == a08);

  const AlphaShift a1 = alpha_shift_for(1.0);
  ASSERT_EQ(a1.terms.size(), 1u);
  EXPECT_EQ(a1.terms[0], (ShiftTerm{0, false}));

  const AlphaShift a064 = alpha_shift_for(0.64);
  ASSERT_EQ(a064.terms.size(), 3u);
  EXPECT_EQ(a064.terms[0], (ShiftTerm{0, false}));
  EXPECT_EQ(a064.terms[1], (ShiftTerm{1, false}));
  EXPECT_EQ(a064.terms[2], (ShiftTerm{4, false}));
  EXPECT_DOUBLE_EQ(a064.inverse(), 1.5625);

  EXPECT_THROW(alpha_shift_for(0.0), ParameterError);
  EXPECT_THROW(alpha_shift_for(-0.5), ParameterError);
}

TEST(AlphaShift, ToleranceOrSnapSweep) {
  for (int i = 1; i <= 400; ++i) {
    const double alpha = i / 100.0;
    const AlphaShift a = alpha_shift_for(alpha);
    ASSERT_GE(a.terms.size(), 1u);
    ASSERT_LE(a.terms.size(), 3u);
    const double err = std::fabs(a.inverse() - 1.0 / alpha);
    if (err <= kAlphaTolerance) {
      EXPECT_EQ(a.alpha, alpha);
    } else {
      EXPECT_DOUBLE_EQ(a.alpha, 1.0 / a.inverse()) << alpha;
    }
  }
}

TEST(AlphaShift, CalibrateUsesMeanCosTheta) {
  std::vector<NodeFactor> f(4);
  f[0].cos_theta = 0.7f;
  f[1].cos_theta = 0.8f;
  f[2].cos_theta = 0.9f;
  f[3].cos_theta = 0.8f;
  EXPECT_NEAR(calibrate_alpha(f).alpha, 0.8, 1e-6);
  EXPECT_THROW(calibrate_alpha(std::span<const NodeFactor>{}), ParameterError);
}

TEST(ShiftAddScale, FloorComposition) {
  const AlphaShift a = alpha_shift_for(0.8);
  EXPECT_EQ(shift_add_scale(8, a), 10);
  EXPECT_EQ(shift_add_scale(100, a), 125);
  EXPECT_EQ(shift_add_scale(7, a), 8);
}

struct ClusterFixture {
  CompactIndex index;
  VectorSet base;
  VectorSet queries;
};

const ClusterFixture& fixture() {
  static const ClusterFixture f = [] {
    ClusterFixture x;
    x.base = load_vectors("gaussian:blobs=16,n=4000,dim=32,latent=8,sigma=0.3,noise=0.02,seed=5");
    x.queries = load_vectors("gaussian:blobs=16,n=200,dim=32,latent=8,sigma=0.3,noise=0.02,seed=5,stream=1");
    BuildParams bp;
    bp.n_clusters = 40;
    bp.seed = 5;
    x.index = build_index(x.base, bp);
    return x;
  }();
  return f;
}

TEST(ApproxDistance, ZeroQueryResidualGivesFactor) {
  const auto& f = fixture();
  const ClusterIndex& ci = f.index.clusters[0];
  const QueryCode qc = preprocess_query(ci.centroid, ci.centroid, f.index.rotation, 4, ci.unit_norm, 0);
  for (LocalId i = 0; i < ci.size(); ++i)
    EXPECT_EQ(approx_distance(qc, ci.code(i), ci.factors[i], default_alpha_shift()), ci.factors[i].rabitq_factor);
}

TEST(ApproxDistance, DefaultAlphaIsAddAndQuarter) {
  const auto& f = fixture();
  const ClusterIndex& ci = f.index.clusters[1];
  const QueryCode qc = preprocess_query(f.queries.row(0), ci.centroid, f.index.rotation, 4, ci.unit_norm, 1);
  for (LocalId i = 0; i < ci.size(); ++i) {
    const int64_t x = rabitq_result_t<int64_t>(qc, ci.code(i).data());
    const int64_t ax = x < 0 ? -x : x;
    const int64_t scaled = ax + (ax >> 2);
    const int64_t want = x < 0 ? ci.factors[i].rabitq_factor + scaled : ci.factors[i].rabitq_factor - scaled;
    EXPECT_EQ(approx_distance(qc, ci.code(i), ci.factors[i], default_alpha_shift()), want);
  }
}

TEST(ApproxDistance, NoMultiplyOrDivideOnCandidatePath) {
  const auto& f = fixture();
  const ClusterIndex& ci = f.index.clusters[2];
  const QueryCode qc = preprocess_query(f.queries.row(1), ci.centroid, f.index.rotation, 4, ci.unit_norm, 2);
  for (const AlphaShift& a : {default_alpha_shift(), alpha_shift_for(0.64), alpha_shift_for(0.3)}) {
    for (LocalId i = 0; i < ci.size(); ++i) {
      OpCounts::reset();
      const CountedInt got = approx_distance_t<CountedInt>(qc, ci.code(i).data(), ci.factors[i], a);
      EXPECT_EQ(OpCounts::mul, 0u);
      EXPECT_EQ(OpCounts::div, 0u);
      EXPECT_GT(OpCounts::add + OpCounts::sub, 0u);
      EXPECT_GT(OpCounts::shift, 0u);
      EXPECT_EQ(got.value(), approx_distance(qc, ci.code(i), ci.factors[i], a));
    }
  }
  OpCounts::reset();
  const CountedInt s = masked_inner_t<CountedInt>(ci.code(0).data(), qc.planes.data(), qc.bq, qc.words);
  EXPECT_EQ(OpCounts::mul + OpCounts::div, 0u);
  EXPECT_EQ(s.value(), masked_inner(ci.code(0), qc));
}

TEST(CountedIntInstrument, CountsMultiplies) {
  OpCounts::reset();
  CountedInt a = 3;
  const CountedInt b = a * CountedInt(4);
  EXPECT_EQ(b.value(), 12);
  EXPECT_EQ(OpCounts::mul, 1u);
}

// Floating-point evaluation written from the raw vectors: rotated residual,
// dequantized grid, reconstructed code and per-node 1/cos.
double float_oracle(const Rotation& rot, std::span<const float> q, const ClusterIndex& ci,
                    const QueryCode& qc, LocalId i, std::span<const float> node) {
  const size_t d = rot.dim;
  double inner = 0;
  for (size_t r = 0; r < d; ++r) {
    const double qhat = qc.lo + qc.step * qc.components[r];
    const double xbar = ((ci.code(i)[r / 64] >> (r % 64)) & 1 ? 1.0 : -1.0) / std::sqrt(double(d));
    inner += xbar * qhat;
  }
  (void)q;
  const double factor = static_cast<double>(testing::ref_sqdist(node, ci.centroid)) / (ci.unit_norm * ci.unit_norm);
  return 65536.0 * (factor - 2.0 * inner / ci.unit_norm / ci.factors[i].cos_theta);
}

TEST(ApproxDistance, PerNodeFixedPointMatchesFloat) {
  const auto& f = fixture();
  double worst = 0;
  for (size_t c = 0; c < 5; ++c) {
    const ClusterIndex& ci = f.index.clusters[c];
    for (size_t qi = 0; qi < 10; ++qi) {
      const auto q = f.queries.row(qi);
      const QueryCode qc = preprocess_query(q, ci.centroid, f.index.rotation, 4, ci.unit_norm, ci.cluster_id);
      for (LocalId i = 0; i < ci.size(); ++i) {
        const double fixed = static_cast<double>(approx_distance_per_node(qc, ci.code(i), ci.factors[i]));
        const double want = float_oracle(f.index.rotation, q, ci, qc, i, f.base.row(ci.members[i]));
        const double lib_float = approx_distance_float(qc, ci.code(i), ci.factors[i], 1.0 / ci.factors[i].cos_theta);
        const double scale = std::fabs(ci.factors[i].rabitq_factor) + std::fabs(want - ci.factors[i].rabitq_factor) +
                             65536.0 * qc.residual_sq_units;
        worst = std::max(worst, std::fabs(fixed - want) / scale);
        // The float path starts from the stored factor, which rounds the
        // exact one to the nearest unit.
        const double exact_factor = 65536.0 *
                                    static_cast<double>(testing::ref_sqdist(f.base.row(ci.members[i]), ci.centroid)) /
                                    (ci.unit_norm * ci.unit_norm);
        EXPECT_LE(std::fabs(ci.factors[i].rabitq_factor - exact_factor), 0.5 + 1e-6 * scale);
        EXPECT_NEAR(lib_float, want - exact_factor + ci.factors[i].rabitq_factor, 1e-6 * scale);
      }
    }
  }
  EXPECT_LE(worst, std::ldexp(1.0, -12));
}

TEST(ApproxDistance, RankCorrelationWithExact) {
  const auto& f = fixture();
  for (size_t c = 0; c < 10; ++c) {
    const ClusterIndex& ci = f.index.clusters[c];
    if (ci.size() < 20) continue;
    // A query that probes this cluster first.
    size_t qi = 0;
    double best = 1e300;
    for (size_t j = 0; j < f.queries.count(); ++j) {
      const double d = static_cast<double>(testing::ref_sqdist(f.queries.row(j), ci.centroid));
      if (d < best) best = d, qi = j;
    }
    const auto q = f.queries.row(qi);
    const QueryCode qc = preprocess_query(q, ci.centroid, f.index.rotation, 4, ci.unit_norm, ci.cluster_id);
    std::vector<double> approx, exact;
    for (LocalId i = 0; i < ci.size(); ++i) {
      approx.push_back(static_cast<double>(approx_distance(qc, ci.code(i), ci.factors[i], ci.alpha)));
      exact.push_back(static_cast<double>(testing::ref_sqdist(q, f.base.row(ci.members[i]))));
    }
    EXPECT_GE(testing::spearman(approx, exact), 0.9) << "cluster " << c << " size " << ci.size();
  }
}

std::vector<float> random_unit(std::mt19937_64& rng, size_t dim) {
  std::normal_distribution<double> g;
  std::vector<double> v(dim);
  double n = 0;
  for (auto& x : v) x = g(rng), n += x * x;
  std::vector<float> out(dim);
  for (size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / std::sqrt(n));
  return out;
}

struct ArgminSetup {
  VectorSet pts;
  IvfPartition part;
  Rotation rot;
  ClusterIndex ci;
};

ArgminSetup argmin_setup() {
  std::mt19937_64 rng(3);
  std::vector<float> data;
  for (int i = 0; i < 1000; ++i) {
    const auto u = random_unit(rng, 32);
    data.insert(data.end(), u.begin(), u.end());
  }
  ArgminSetup s{VectorSet(32, data), {}, make_rotation(32, 10), {}};
  s.part = kmeans(s.pts, {1, 1, 0});
  s.ci = assemble_compact_index(s.part, s.pts, s.rot, 16, false)[0];
  return s;
}

// Hit rate of the approximate argmin in the exact top-10 for random unit
// queries; `estimate` scores member i for a query.
template <class Score>
double argmin_hit_rate(const ArgminSetup& s, uint64_t seed, Score estimate) {
  std::mt19937_64 rng(seed);
  size_t hits = 0;
  const size_t trials = 200;
  for (size_t t = 0; t < trials; ++t) {
    const auto q = random_unit(rng, 32);
    LocalId arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (LocalId i = 0; i < s.ci.size(); ++i) {
      const double d = estimate(q, i);
      if (d < best) best = d, arg = i;
    }
    const auto top = testing::ref_knn(q, s.pts, 10);
    hits += std::find(top.begin(), top.end(), s.ci.members[arg]) != top.end();
  }
  return static_cast<double>(hits) / trials;
}

TEST(ApproxDistance, ArgminInExactTopTen) {
  const ArgminSetup s = argmin_setup();
  const double rate = argmin_hit_rate(s, 12, [&](std::span<const float> q, LocalId i) {
    const QueryCode qc = preprocess_query(q, s.ci.centroid, s.rot, 4, s.ci.unit_norm, 0);
    return static_cast<double>(approx_distance(qc, s.ci.code(i), s.ci.factors[i], s.ci.alpha));
  });
  EXPECT_GE(rate, 0.95);
}

TEST(ApproxDistance, ArgminMatchesUnquantizedEstimator) {
  // The same sign-code estimator evaluated in doubles on the unquantized
  // rotated query with each node's exact cos(theta).
  const ArgminSetup s = argmin_setup();
  const size_t d = 32;
  const auto ideal = [&](std::span<const float> q, LocalId i) {
    std::vector<double> rq(d), ro(d);
    double no = 0;
    for (size_t j = 0; j < d; ++j) {
      rq[j] = double(q[j]) - s.ci.centroid[j];
      ro[j] = double(s.pts.row(s.ci.members[i])[j]) - s.ci.centroid[j];
      no += ro[j] * ro[j];
    }
    no = std::sqrt(no);
    const auto pq = s.rot.apply(rq), po = s.rot.apply(ro);
    double cos = 0, ip = 0;
    for (size_t j = 0; j < d; ++j) {
      const double xb = (po[j] >= 0 ? 1.0 : -1.0) / std::sqrt(double(d));
      cos += xb * po[j] / no;
      ip += xb * pq[j];
    }
    return no * no - 2.0 * no * ip / cos;
  };
  const double want = argmin_hit_rate(s, 12, ideal);
  const double got = argmin_hit_rate(s, 12, [&](std::span<const float> q, LocalId i) {
    const QueryCode qc = preprocess_query(q, s.ci.centroid, s.rot, 4, s.ci.unit_norm, 0);
    return static_cast<double>(approx_distance(qc, s.ci.code(i), s.ci.factors[i], s.ci.alpha));
  });
  const double per_node = argmin_hit_rate(s, 12, [&](std::span<const float> q, LocalId i) {
    const QueryCode qc = preprocess_query(q, s.ci.centroid, s.rot, 4, s.ci.unit_norm, 0);
    return static_cast<double>(approx_distance_per_node(qc, s.ci.code(i), s.ci.factors[i]));
  });
  EXPECT_GE(got, want - 0.05);
  EXPECT_GE(per_node, want - 0.05);
}

}  // namespace
}  // namespace pimann
