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
#include "pimann/commands.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "pimann/ivf.hpp"
#include "pimann/quantizer.hpp"

#ifndef PIMANN_VERSION
#define PIMANN_VERSION "unknown"
#endif

namespace pimann {

using nlohmann::ordered_json;

namespace {

std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

ordered_json config_json(const RunConfig& cfg) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : config_pairs(cfg)) j[k] = v;
  ordered_json m = ordered_json::object();
  for (const auto& [k, v] : model_pairs(cfg.model)) m[k] = v;
  j["resolved_model"] = m;
  return j;
}

ordered_json report_header(const RunConfig& cfg, std::string_view command) {
  ordered_json j;
  j["command"] = command;
  j["version"] = artifact_version();
  j["config"] = config_json(cfg);
  return j;
}

ordered_json footprint_json(const FootprintReport& r) {
  return {{"layout", r.layout == Layout::kCompact ? "compact" : "legacy"},
          {"ids", r.ids},
          {"codes", r.codes},
          {"factors", r.factors},
          {"centroids", r.centroids},
          {"raw_vectors", r.raw_vectors},
          {"nodes", r.nodes},
          {"total", r.total()},
          {"per_node", r.per_node()}};
}

ordered_json busy_json(const StageBusy& b) {
  return {{"prep", b.prep}, {"push", b.push}, {"proc", b.proc}, {"pull", b.pull}, {"rerank", b.rerank}};
}

ordered_json sim_json(const SimReport& r) {
  ordered_json j;
  j["strategy"] = r.strategy;
  j["n_queries"] = r.n_queries;
  j["n_records"] = r.n_records;
  j["n_batches"] = r.n_batches;
  j["batch_threshold"] = r.batch_threshold;
  j["wait_limit"] = r.wait_limit;
  j["in_flight_bound"] = r.in_flight_bound;
  j["makespan"] = r.makespan;
  j["qps"] = r.qps;
  j["steady_per_query"] = r.steady_per_query;
  j["recall"] = r.recall ? ordered_json(*r.recall) : ordered_json(nullptr);
  j["busy"] = busy_json(r.busy);
  j["pu_busy"] = r.pu_busy;
  j["threshold_flushes"] = r.threshold_flushes;
  j["timeout_flushes"] = r.timeout_flushes;
  j["final_flushes"] = r.final_flushes;
  j["max_in_flight"] = r.max_in_flight;
  return j;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path);
}

void set_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) omp_set_num_threads(static_cast<int>(cfg.threads));
}

void need(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

VectorSet load_checked(const std::string& what, const std::string& path) {
  need(!path.empty(), what + " is required");
  return load_vectors(path);
}

std::optional<GroundTruth> load_gt(const RunConfig& cfg, size_t n_queries) {
  if (cfg.gt.empty()) return std::nullopt;
  GroundTruth gt = load_ground_truth(cfg.gt);
  if (gt.per_query.size() != n_queries)
    throw FormatError("ground truth has " + std::to_string(gt.per_query.size()) +
                      " rows for " + std::to_string(n_queries) + " queries");
  if (gt.k < cfg.k)
    throw FormatError("ground truth holds " + std::to_string(gt.k) + " ids per query, k is " +
                      std::to_string(cfg.k));
  return gt;
}

template <class F>
double time_per_call(size_t reps, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  for (size_t i = 0; i < reps; ++i) f(i);
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(reps);
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParameter:
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kPlacement:
    case ErrorKind::kRouting:
      return 4;
    default:
      return 3;
  }
}

std::string artifact_version() { return PIMANN_VERSION; }

BuildParams build_params(const RunConfig& cfg) {
  BuildParams bp;
  bp.n_clusters = cfg.n_clusters;
  bp.kmeans_iters = cfg.kmeans_iters;
  bp.degree = cfg.degree;
  bp.bq = cfg.bq;
  bp.calibrate_alpha = cfg.alpha == AlphaMode::kCalibrated;
  bp.seed = cfg.seed;
  return bp;
}

std::string bench_csv_header() {
  return "strategy,ef,nprobe,n_b,recall,qps,prep_s,push_s,proc_s,pull_s,rerank_s";
}

std::string bench_csv_row(const BenchRow& r) {
  std::string s = r.strategy + ',' + std::to_string(r.ef) + ',' + std::to_string(r.nprobe) + ',' +
                  std::to_string(r.n_b) + ',' + (r.recall ? fmt(*r.recall) : std::string()) + ',' +
                  fmt(r.qps);
  for (double x : {r.per_query.prep, r.per_query.push, r.per_query.proc, r.per_query.pull,
                   r.per_query.rerank})
    s += ',' + fmt(x);
  return s;
}

std::vector<BenchRow> run_bench(const RunConfig& cfg, const CompactIndex& index,
                                const VectorSet& base, const VectorSet& queries,
                                const GroundTruth* gt) {
  const PimSystemModel model = model_for_index(cfg.model, index);
  {
    // Placement feasibility does not depend on the queries; check it before
    // the functional pass.
    std::vector<uint64_t> fp;
    for (const auto& ci : index.clusters) fp.push_back(cluster_footprint(ci, index.meta.dim, index.meta.degree));
    const std::vector<double> uniform(fp.size(), 1.0);
    place_clusters(fp, uniform, model).validate(fp, model.pu_capacity_bytes);
  }
  const std::vector<size_t> efs = cfg.sweep_ef.empty() ? std::vector<size_t>{cfg.ef} : cfg.sweep_ef;
  const std::vector<size_t> nprobes =
      cfg.sweep_nprobe.empty() ? std::vector<size_t>{cfg.nprobe} : cfg.sweep_nprobe;
  const std::vector<size_t> nbs =
      cfg.sweep_nb.empty() ? std::vector<size_t>{cfg.batch_threshold} : cfg.sweep_nb;

  std::vector<BenchRow> rows;
  for (size_t ef : efs) {
    for (size_t np : nprobes) {
      QueryPlan plan;
      plan.search = cfg.search_params();
      plan.search.ef = ef;
      plan.search.beam = std::min(cfg.beam, ef);
      plan.nprobe = np;
      plan.k = cfg.k;
      const FunctionalRun run = run_functional(index, base, queries, plan, model);
      for (Strategy s : cfg.strategies) {
        const bool uses_nb = s == Strategy::kMiniBatch;
        for (size_t i = 0; i < (uses_nb ? nbs.size() : 1); ++i) {
          const SimReport rep = simulate(run, model, cfg.pipeline(s, uses_nb ? nbs[i] : 0), gt, cfg.k);
          BenchRow row;
          row.strategy = rep.strategy;
          row.ef = ef;
          row.nprobe = std::min(np, index.clusters.size());
          row.n_b = uses_nb ? rep.batch_threshold : 0;
          row.recall = rep.recall;
          row.qps = rep.qps;
          const double nq = rep.n_queries > 0 ? static_cast<double>(rep.n_queries) : 1.0;
          row.per_query = {rep.busy.prep / nq, rep.busy.push / nq, rep.busy.proc / nq,
                           rep.busy.pull / nq, rep.busy.rerank / nq};
          row.report = rep;
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

int cmd_build(const RunConfig& cfg, std::ostream& out) {
  set_threads(cfg);
  const VectorSet base = load_checked("base", cfg.base);
  const CompactIndex index = build_index(base, build_params(cfg));
  ensure_dir(cfg.out);
  const std::string path = cfg.index_path();
  if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
    ensure_dir(parent.string());
  save_index(path, index);

  const auto compact = footprint_bytes(index.clusters, index.meta.dim, index.meta.degree, Layout::kCompact);
  const auto legacy = footprint_bytes(index.clusters, index.meta.dim, index.meta.degree, Layout::kLegacy);
  const double ratio = reduction_ratio(legacy, compact);

  std::ostringstream csv;
  csv << "layout,ids,codes,factors,centroids,raw_vectors,total,per_node\n";
  for (const auto* r : {&compact, &legacy})
    csv << (r->layout == Layout::kCompact ? "compact" : "legacy") << ',' << r->ids << ',' << r->codes
        << ',' << r->factors << ',' << r->centroids << ',' << r->raw_vectors << ',' << r->total() << ','
        << fmt(r->per_node()) << '\n';
  write_text(cfg.out + "/footprint.csv", csv.str());

  ordered_json j = report_header(cfg, "build");
  j["index"] = path;
  j["n_nodes"] = index.meta.n_nodes;
  j["n_clusters"] = index.clusters.size();
  j["max_cluster_size"] = index.max_cluster_size();
  j["footprint"] = {{"compact", footprint_json(compact)}, {"legacy", footprint_json(legacy)}, {"reduction_ratio", ratio}};
  write_text(cfg.out + "/build.json", j.dump(2) + "\n");

  out << csv.str() << "reduction_ratio," << fmt(ratio) << "\n";
  return 0;
}

int cmd_search(const RunConfig& cfg, std::ostream& out) {
  set_threads(cfg);
  const CompactIndex index = load_index(cfg.index_path());
  const VectorSet base = load_checked("base", cfg.base);
  const VectorSet queries = load_checked("queries", cfg.queries);
  const auto gt = load_gt(cfg, queries.count());
  QueryPlan plan;
  plan.search = cfg.search_params();
  plan.nprobe = cfg.nprobe;
  plan.k = cfg.k;
  const FunctionalRun run = run_functional(index, base, queries, plan, model_for_index(cfg.model, index));

  ensure_dir(cfg.out);
  std::ostringstream csv;
  csv << "query,rank,id,dist,cluster\n";
  size_t short_results = 0;
  for (const auto& r : run.results) {
    short_results += r.short_result ? 1 : 0;
    for (size_t i = 0; i < r.entries.size(); ++i)
      csv << r.query << ',' << i << ',' << r.entries[i].id << ',' << fmt(r.entries[i].dist) << ','
          << r.entries[i].cluster << '\n';
  }
  write_text(cfg.out + "/results.csv", csv.str());

  ordered_json j = report_header(cfg, "search");
  j["n_queries"] = queries.count();
  j["short_results"] = short_results;
  if (gt) {
    const double recall = mean_recall(run.results, *gt, cfg.k);
    j["recall"] = recall;
    out << "recall@" << cfg.k << "," << fmt(recall) << "\n";
  } else {
    j["recall"] = nullptr;
    j["note"] = "no ground truth given; recall omitted";
    out << "recall omitted: no ground truth given\n";
  }
  write_text(cfg.out + "/search.json", j.dump(2) + "\n");
  out << "results," << cfg.out << "/results.csv\n";
  return 0;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
  set_threads(cfg);
  const CompactIndex index = load_index(cfg.index_path());
  const VectorSet base = load_checked("base", cfg.base);
  const VectorSet queries = load_checked("queries", cfg.queries);
  const auto gt = load_gt(cfg, queries.count());
  const auto rows = run_bench(cfg, index, base, queries, gt ? &*gt : nullptr);

  ensure_dir(cfg.out);
  std::string csv = bench_csv_header() + "\n";
  ordered_json reports = ordered_json::array();
  for (const auto& r : rows) {
    csv += bench_csv_row(r) + "\n";
    ordered_json rj = sim_json(r.report);
    rj["ef"] = r.ef;
    rj["nprobe"] = r.nprobe;
    reports.push_back(rj);
  }
  write_text(cfg.out + "/bench.csv", csv);
  ordered_json j = report_header(cfg, "bench");
  if (!gt) j["note"] = "no ground truth given; recall omitted";
  j["reports"] = reports;
  write_text(cfg.out + "/bench.json", j.dump(2) + "\n");
  out << csv;
  return 0;
}

int cmd_groundtruth(const RunConfig& cfg, std::ostream& out) {
  set_threads(cfg);
  need(!cfg.gt.empty(), "gt output path is required");
  const VectorSet base = load_checked("base", cfg.base);
  const VectorSet queries = load_checked("queries", cfg.queries);
  if (base.dim() != queries.dim())
    throw FormatError("query dim " + std::to_string(queries.dim()) + " differs from base dim " +
                      std::to_string(base.dim()));
  const GroundTruth gt = compute_ground_truth(queries, base, cfg.k);
  if (const auto parent = std::filesystem::path(cfg.gt).parent_path(); !parent.empty())
    ensure_dir(parent.string());
  save_ground_truth(cfg.gt, gt);
  out << "wrote " << gt.per_query.size() << " x " << gt.k << " ids to " << cfg.gt << "\n";
  return 0;
}

HostCostModel calibrate_host_costs(uint64_t seed) {
  constexpr size_t kDim = 128;
  constexpr size_t kRows = 4096;
  SyntheticSpec spec;
  spec.blobs = 16;
  spec.n = kRows;
  spec.dim = kDim;
  spec.seed = seed;
  const VectorSet vs = generate_synthetic(spec).vectors;
  std::vector<float> q(vs.row(0).begin(), vs.row(0).end());
  volatile double sink = 0.0;

  HostCostModel hc;
  const Rotation big = make_rotation(kDim, seed);
  std::vector<double> x(q.begin(), q.end());
  const double per_matvec = time_per_call(20000, [&](size_t i) {
    x[i % kDim] += 1e-9;
    sink = sink + big.apply(x)[0];
  });
  hc.flop = per_matvec / (kDim * kDim);

  std::vector<SourcedId> cand;
  for (NodeId i = 0; i < 64; ++i) cand.push_back({i * 61 % static_cast<NodeId>(kRows), 0});
  const double per_rerank = time_per_call(2000, [&](size_t) {
    sink = sink + rerank(q, cand, vs, 10).entries.front().dist;
  });
  hc.rerank_fixed = std::max(0.0, per_rerank / 64.0 - hc.flop * kDim);

  KMeansParams kp;
  kp.n_clusters = 64;
  kp.max_iters = 5;
  kp.seed = seed;
  const IvfPartition part = kmeans(vs, kp);
  const Rotation rot = make_rotation(kDim, seed);
  const size_t nprobe = 8;
  const double per_prep = time_per_call(300, [&](size_t i) {
    const auto row = vs.row(i % kRows);
    for (ClusterId c : probe_clusters(row, part, nprobe)) {
      const QueryCode qc = preprocess_query(row, part.centroids.row(c), rot, 4, 1.0, c);
      sink = sink + static_cast<double>(qc.sumq);
    }
  });
  hc.dispatch_fixed = std::max(0.0, per_prep - hc.flop * (64.0 * kDim + nprobe * kDim * kDim));

  std::vector<QueryResult> parts(nprobe);
  for (size_t p = 0; p < nprobe; ++p) {
    std::vector<SourcedId> c;
    for (NodeId i = 0; i < 10; ++i) c.push_back({static_cast<NodeId>(p * 10 + i), static_cast<ClusterId>(p)});
    parts[p] = rerank(q, c, vs, 10);
  }
  hc.merge_fixed = time_per_call(20000, [&](size_t) { sink = sink + merge_topk(parts, 10).entries.size(); });
  (void)sink;
  return hc;
}

int cmd_calibrate(const RunConfig& cfg, std::ostream& out) {
  const HostCostModel hc = calibrate_host_costs(cfg.seed);
  out << "# host cost constants measured on this machine; pass with --model\n";
  out << "host.dispatch_fixed=" << fmt(hc.dispatch_fixed) << "\n";
  out << "host.flop=" << fmt(hc.flop) << "\n";
  out << "host.rerank_fixed=" << fmt(hc.rerank_fixed) << "\n";
  out << "host.merge_fixed=" << fmt(hc.merge_fixed) << "\n";
  return 0;
}

int run_command(std::string_view name, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    cfg.validate();
    if (name == "build") return cmd_build(cfg, out);
    if (name == "search") return cmd_search(cfg, out);
    if (name == "bench") return cmd_bench(cfg, out);
    if (name == "groundtruth") return cmd_groundtruth(cfg, out);
    if (name == "calibrate") return cmd_calibrate(cfg, out);
    throw ConfigError("unknown command '" + std::string(name) + "'");
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pimann
