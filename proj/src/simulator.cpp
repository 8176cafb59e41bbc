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
#include "pimann/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <queue>
#include <string>

#include "pimann/error.hpp"

namespace pimann {

Strategy parse_strategy(std::string_view s) {
  if (s == "batch_sync" || s == "batch-sync") return Strategy::kBatchSync;
  if (s == "per_query" || s == "per-query") return Strategy::kPerQuery;
  if (s == "mini_batch" || s == "mini-batch") return Strategy::kMiniBatch;
  throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kBatchSync: return "batch_sync";
    case Strategy::kPerQuery: return "per_query";
    case Strategy::kMiniBatch: return "mini_batch";
  }
  return "?";
}

void PipelineConfig::validate() const {
  if (sync_batch == 0) throw ConfigError("pipeline: sync batch must be at least 1");
  if (max_batch == 0) throw ConfigError("pipeline: max batch must be at least 1");
}

RecordCosts Workload::mean_costs() const {
  RecordCosts rc;
  if (records.empty()) return rc;
  for (const auto& q : queries) {
    rc.prep += q.prep_time;
    rc.rerank += q.merge_time;
  }
  for (const auto& r : records) {
    rc.payload += r.payload_bytes;
    rc.pu_time += r.pu_time;
    rc.result += r.result_bytes;
    rc.rerank += r.rerank_time;
  }
  const auto n = static_cast<double>(records.size());
  rc.prep /= n;
  rc.payload /= n;
  rc.pu_time /= n;
  rc.result /= n;
  rc.rerank /= n;
  return rc;
}

StageCosts workload_stage_costs(const Workload& w, const PimSystemModel& model) {
  StageCosts sc = stage_costs(w.mean_costs(), model);
  if (w.records.empty()) return sc;
  std::vector<double> count(model.n_pus, 0.0), work(model.n_pus, 0.0);
  for (const auto& r : w.records) {
    if (r.pu >= model.n_pus) throw RoutingError("record routed to missing PU " + std::to_string(r.pu));
    count[r.pu] += 1.0;
    work[r.pu] += r.pu_time;
  }
  const auto total = static_cast<double>(w.records.size());
  std::vector<std::pair<double, double>> loads;  // (share, mean pu_time)
  for (size_t p = 0; p < model.n_pus; ++p)
    if (count[p] > 0) loads.emplace_back(count[p] / total, work[p] / count[p]);
  const double launch = model.launch;
  sc.proc = [loads, launch](size_t n) {
    double worst = 0.0;
    for (const auto& [share, t] : loads)
      worst = std::max(worst, share * (launch + static_cast<double>(n) * t));
    return worst;
  };
  return sc;
}

PipelineConfig resolve_pipeline(const PipelineConfig& cfg, const Workload& w,
                                const PimSystemModel& model) {
  cfg.validate();
  PipelineConfig out = cfg;
  const RecordCosts rc = w.mean_costs();
  if (out.batch_threshold == 0)
    out.batch_threshold = optimal_minibatch(workload_stage_costs(w, model), out.max_batch).n_star;
  if (out.wait_limit < 0.0) {
    // Twice the time the dispatcher needs to fill one buffer per PU.
    out.wait_limit = 2.0 * static_cast<double>(model.n_pus * out.batch_threshold) * rc.prep;
  }
  if (out.in_flight == 0) out.in_flight = 2 * model.n_pus;
  if (out.strategy == Strategy::kPerQuery) out.in_flight = std::numeric_limits<size_t>::max();
  return out;
}

namespace {

class EventQueue {
 public:
  using Fn = std::function<void()>;

  void at(double t, Fn fn) { heap_.push({t, seq_++, std::move(fn)}); }
  double now() const { return now_; }
  void run() {
    while (!heap_.empty()) {
      Event e = heap_.top();
      heap_.pop();
      now_ = e.t;
      e.fn();
    }
  }

 private:
  struct Event {
    double t;
    uint64_t seq;
    Fn fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.t > b.t || (a.t == b.t && a.seq > b.seq);
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  uint64_t seq_ = 0;
  double now_ = 0.0;
};

// Processor-sharing link: every active flow gets bandwidth / active.
class SharedLink {
 public:
  SharedLink(EventQueue& q, double bandwidth) : q_(q), bw_(bandwidth) {}

  void start(double work, EventQueue::Fn done) {
    if (work <= 0.0) {
      q_.at(q_.now(), std::move(done));
      return;
    }
    advance();
    flows_.push_back({next_id_++, work, std::move(done)});
    reschedule();
  }

 private:
  struct Flow {
    uint64_t id;
    double remaining;
    EventQueue::Fn done;
  };

  void advance() {
    const double dt = q_.now() - last_;
    if (dt > 0.0 && !flows_.empty()) {
      const double per = dt * bw_ / static_cast<double>(flows_.size());
      for (auto& f : flows_) f.remaining -= per;
    }
    last_ = q_.now();
  }

  void reschedule() {
    ++version_;
    if (flows_.empty()) return;
    const auto it = std::min_element(flows_.begin(), flows_.end(), [](const Flow& a, const Flow& b) {
      return a.remaining < b.remaining || (a.remaining == b.remaining && a.id < b.id);
    });
    const double t = q_.now() + std::max(0.0, it->remaining) * static_cast<double>(flows_.size()) / bw_;
    const uint64_t v = version_;
    q_.at(t, [this, v] { complete(v); });
  }

  void complete(uint64_t v) {
    if (v != version_) return;
    advance();
    double min_rem = std::numeric_limits<double>::infinity();
    for (const auto& f : flows_) min_rem = std::min(min_rem, f.remaining);
    const double eps = 1e-6;
    std::vector<EventQueue::Fn> done;
    std::vector<Flow> keep;
    for (auto& f : flows_) {
      if (f.remaining <= std::max(min_rem, 0.0) + eps) done.push_back(std::move(f.done));
      else keep.push_back(std::move(f));
    }
    flows_ = std::move(keep);
    reschedule();
    for (auto& fn : done) fn();
  }

  EventQueue& q_;
  double bw_;
  std::vector<Flow> flows_;
  uint64_t next_id_ = 0;
  uint64_t version_ = 0;
  double last_ = 0.0;
};

struct SimBatch {
  MiniBatch mb;
  BatchTrace tr;
  double result_bytes = 0.0;
};

class PipelineSim {
 public:
  PipelineSim(const Workload& w, const PimSystemModel& m, const PipelineConfig& cfg, SimReport& rep)
      : w_(w),
        m_(m),
        cfg_(cfg),
        rep_(rep),
        link_(q_, m.link.bandwidth),
        buffers_(m.n_pus, cfg.strategy == Strategy::kPerQuery ? std::numeric_limits<size_t>::max()
                                                              : cfg.batch_threshold,
                 cfg.wait_limit),
        pu_queue_(m.n_pus),
        pu_busy_(m.n_pus, false),
        done_records_(w.queries.size(), 0) {}

  void run() {
    q_.at(0.0, [this] { dispatcher_step(); });
    q_.run();
  }

 private:
  void transfer(double bytes, double* busy, EventQueue::Fn done) {
    const double start = q_.now();
    const double work = m_.link.effective_bytes(bytes);
    q_.at(start + m_.link.t0, [this, start, work, busy, done = std::move(done)]() mutable {
      link_.start(work, [this, start, busy, done = std::move(done)] {
        *busy += q_.now() - start;
        done();
      });
    });
  }

  void add_ready(MiniBatch mb) {
    switch (mb.reason) {
      case FlushReason::kThreshold: ++rep_.threshold_flushes; break;
      case FlushReason::kTimeout: ++rep_.timeout_flushes; break;
      case FlushReason::kEndOfStream: ++rep_.final_flushes; break;
    }
    SimBatch b;
    b.tr.pu = mb.pu;
    b.tr.records = static_cast<uint32_t>(mb.records.size());
    b.tr.created = q_.now();
    for (const auto& r : mb.records) b.result_bytes += w_.records[r.index].result_bytes;
    b.mb = std::move(mb);
    batches_.push_back(std::move(b));
    ready_.push_back(batches_.size() - 1);
  }

  void dispatcher_step() {
    if (disp_busy_) return;
    for (auto& b : buffers_.expire(q_.now())) add_ready(std::move(b));
    if (!ready_.empty()) {
      if (in_flight_ >= cfg_.in_flight) {
        disp_blocked_ = true;
        return;
      }
      const size_t id = ready_.front();
      ready_.pop_front();
      ++in_flight_;
      rep_.max_in_flight = std::max(rep_.max_in_flight, in_flight_);
      disp_busy_ = true;
      batches_[id].tr.push_start = q_.now();
      transfer(static_cast<double>(batches_[id].mb.payload_bytes()), &rep_.busy.push, [this, id] {
        disp_busy_ = false;
        SimBatch& b = batches_[id];
        b.tr.arrived = q_.now();
        pu_queue_[b.mb.pu].push_back(id);
        pu_step(b.mb.pu);
        dispatcher_step();
      });
      return;
    }
    if (next_query_ < w_.queries.size()) {
      const uint32_t qi = next_query_++;
      const QueryWork& qw = w_.queries[qi];
      disp_busy_ = true;
      rep_.busy.prep += qw.prep_time;
      q_.at(q_.now() + qw.prep_time, [this, qi] {
        disp_busy_ = false;
        const QueryWork& qw2 = w_.queries[qi];
        for (uint32_t r = qw2.first_record; r < qw2.first_record + qw2.n_records; ++r) {
          const WorkRecord& wr = w_.records[r];
          DispatchRecord dr{wr.query, wr.pu, wr.cluster, q_.now(), wr.payload_bytes, r};
          if (auto b = buffers_.enqueue(dr)) add_ready(std::move(*b));
        }
        if (cfg_.strategy == Strategy::kPerQuery) {
          for (auto& b : buffers_.flush_all(q_.now(), FlushReason::kThreshold)) add_ready(std::move(b));
        } else if (next_query_ == w_.queries.size()) {
          for (auto& b : buffers_.flush_all(q_.now())) add_ready(std::move(b));
        }
        dispatcher_step();
      });
    }
  }

  void pu_step(uint32_t pu) {
    if (pu_busy_[pu] || pu_queue_[pu].empty()) return;
    const size_t id = pu_queue_[pu].front();
    pu_queue_[pu].pop_front();
    pu_busy_[pu] = true;
    SimBatch& b = batches_[id];
    double t = m_.launch;
    for (const auto& r : b.mb.records) t += w_.records[r.index].pu_time;
    b.tr.proc_start = q_.now();
    rep_.pu_busy[pu] += t;
    rep_.busy.proc += t;
    q_.at(q_.now() + t, [this, pu, id] {
      pu_busy_[pu] = false;
      batches_[id].tr.proc_end = q_.now();
      post_queue_.push_back(id);
      post_step();
      pu_step(pu);
    });
  }

  void post_step() {
    if (post_busy_ || post_queue_.empty()) return;
    const size_t id = post_queue_.front();
    post_queue_.pop_front();
    post_busy_ = true;
    batches_[id].tr.pull_start = q_.now();
    transfer(batches_[id].result_bytes, &rep_.busy.pull, [this, id] {
      SimBatch& b = batches_[id];
      b.tr.pulled = q_.now();
      --in_flight_;
      if (disp_blocked_) {
        disp_blocked_ = false;
        dispatcher_step();
      }
      double t = 0.0;
      for (const auto& r : b.mb.records) {
        t += w_.records[r.index].rerank_time;
        const uint32_t qi = r.query;
        if (++done_records_[qi] == w_.queries[qi].n_records) {
          t += w_.queries[qi].merge_time;
          rep_.completion[qi] = q_.now() + t;
        }
      }
      rep_.busy.rerank += t;
      q_.at(q_.now() + t, [this, id] {
        batches_[id].tr.done = q_.now();
        post_busy_ = false;
        post_step();
      });
    });
  }

 public:
  std::deque<SimBatch> batches_;  // references stay valid across push_back

 private:
  const Workload& w_;
  const PimSystemModel& m_;
  const PipelineConfig& cfg_;
  SimReport& rep_;
  EventQueue q_;
  SharedLink link_;
  Dispatcher buffers_;
  std::deque<size_t> ready_;
  std::vector<std::deque<size_t>> pu_queue_;
  std::vector<bool> pu_busy_;
  std::deque<size_t> post_queue_;
  std::vector<uint32_t> done_records_;
  uint32_t next_query_ = 0;
  size_t in_flight_ = 0;
  bool disp_busy_ = false;
  bool disp_blocked_ = false;
  bool post_busy_ = false;
};

// Global barriers between the stages of each batch of queries; one parallel
// transfer per direction per batch.
void run_batch_sync(const Workload& w, const PimSystemModel& m, const PipelineConfig& cfg,
                    SimReport& rep, bool keep_trace) {
  double t = 0.0;
  const size_t nq = w.queries.size();
  for (size_t q0 = 0; q0 < nq; q0 += cfg.sync_batch) {
    const size_t q1 = std::min(nq, q0 + cfg.sync_batch);
    const double created = t;
    for (size_t q = q0; q < q1; ++q) t += w.queries[q].prep_time;
    rep.busy.prep += t - created;

    std::vector<double> push_bytes(m.n_pus, 0.0), pull_bytes(m.n_pus, 0.0), work(m.n_pus, 0.0);
    std::vector<uint32_t> count(m.n_pus, 0);
    for (size_t q = q0; q < q1; ++q) {
      const QueryWork& qw = w.queries[q];
      for (uint32_t r = qw.first_record; r < qw.first_record + qw.n_records; ++r) {
        const WorkRecord& wr = w.records[r];
        push_bytes[wr.pu] += wr.payload_bytes;
        pull_bytes[wr.pu] += wr.result_bytes;
        work[wr.pu] += wr.pu_time;
        ++count[wr.pu];
      }
    }
    const double push_start = t;
    double push = m.link.t0;
    for (double b : push_bytes) push += m.link.effective_bytes(b) / m.link.bandwidth;
    t += push;
    rep.busy.push += push;

    const double proc_start = t;
    double proc = 0.0;
    for (size_t p = 0; p < m.n_pus; ++p) {
      if (count[p] == 0) continue;
      const double tp = m.launch + work[p];
      rep.pu_busy[p] += tp;
      rep.busy.proc += tp;
      proc = std::max(proc, tp);
    }
    t += proc;

    const double pull_start = t;
    double pull = m.link.t0;
    for (double b : pull_bytes) pull += m.link.effective_bytes(b) / m.link.bandwidth;
    t += pull;
    rep.busy.pull += pull;

    const double post_start = t;
    for (size_t q = q0; q < q1; ++q) {
      const QueryWork& qw = w.queries[q];
      for (uint32_t r = qw.first_record; r < qw.first_record + qw.n_records; ++r)
        t += w.records[r].rerank_time;
      t += qw.merge_time;
      rep.completion[q] = t;
    }
    rep.busy.rerank += t - post_start;
    ++rep.n_batches;
    if (keep_trace) {
      for (size_t p = 0; p < m.n_pus; ++p) {
        if (count[p] == 0) continue;
        rep.trace.push_back({static_cast<uint32_t>(p), count[p], created, push_start, proc_start,
                             proc_start, proc_start + m.launch + work[p], pull_start, post_start, t});
      }
    }
  }
}

}  // namespace

SimReport simulate_workload(const Workload& w, const PimSystemModel& model,
                            const PipelineConfig& cfg_in, bool keep_trace) {
  model.validate();
  if (w.n_pus != model.n_pus)
    throw ConfigError("workload was routed for " + std::to_string(w.n_pus) + " PUs, model has " +
                      std::to_string(model.n_pus));
  for (const auto& r : w.records)
    if (r.pu >= model.n_pus) throw RoutingError("record routed to missing PU " + std::to_string(r.pu));
  const PipelineConfig cfg = resolve_pipeline(cfg_in, w, model);
  if (cfg.in_flight == 0) throw ConfigError("pipeline: in-flight bound of 0 deadlocks");

  SimReport rep;
  rep.strategy = std::string(to_string(cfg.strategy));
  rep.n_queries = w.queries.size();
  rep.n_records = w.records.size();
  rep.batch_threshold = cfg.batch_threshold;
  rep.wait_limit = cfg.wait_limit;
  rep.in_flight_bound = cfg.strategy == Strategy::kPerQuery ? 0 : cfg.in_flight;
  rep.pu_busy.assign(model.n_pus, 0.0);
  rep.completion.assign(w.queries.size(), 0.0);

  if (cfg.strategy == Strategy::kBatchSync) {
    run_batch_sync(w, model, cfg, rep, keep_trace);
  } else {
    PipelineSim sim(w, model, cfg, rep);
    sim.run();
    rep.n_batches = sim.batches_.size();
    if (keep_trace)
      for (const auto& b : sim.batches_) rep.trace.push_back(b.tr);
  }

  if (!rep.completion.empty()) {
    rep.makespan = *std::max_element(rep.completion.begin(), rep.completion.end());
    rep.qps = rep.makespan > 0.0 ? static_cast<double>(rep.n_queries) / rep.makespan : 0.0;
    std::vector<double> sorted = rep.completion;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    const auto i20 = static_cast<size_t>(std::floor(0.2 * static_cast<double>(n)));
    const auto i80 = static_cast<size_t>(std::ceil(0.8 * static_cast<double>(n))) - 1;
    rep.steady_per_query = i80 > i20 ? (sorted[i80] - sorted[i20]) / static_cast<double>(i80 - i20)
                                     : rep.makespan / static_cast<double>(n);
  }
  return rep;
}

PimSystemModel model_for_index(PimSystemModel model, const CompactIndex& index) {
  model.pu.dim = index.meta.dim;
  model.pu.bq = static_cast<int>(index.meta.bq);
  model.pu.degree = index.meta.degree;
  return model;
}

FunctionalRun run_functional(const CompactIndex& index, const VectorSet& base,
                             const VectorSet& queries, const QueryPlan& plan,
                             const PimSystemModel& model_in) {
  plan.search.validate();
  if (queries.dim() != index.meta.dim || base.dim() != index.meta.dim)
    throw ParameterError("run: query/base dim differs from index dim " + std::to_string(index.meta.dim));
  if (base.count() != index.meta.n_nodes)
    throw ContractError("run: base set has " + std::to_string(base.count()) +
                        " vectors, index was built over " + std::to_string(index.meta.n_nodes));
  const PimSystemModel model = model_for_index(model_in, index);
  model.validate();
  const size_t nc = index.clusters.size();
  const size_t nprobe = std::min(plan.nprobe, nc);
  if (nprobe == 0) throw ParameterError("run: nprobe must be positive");
  PuParams pu = model.pu;
  pu.multiply_free = plan.search.kernel == KernelMode::kMultiplicationFree &&
                     plan.search.alpha != AlphaMode::kPerNode;

  const size_t nq = queries.count();
  FunctionalRun run;
  run.results.resize(nq);
  run.workload.n_pus = model.n_pus;
  run.workload.queries.resize(nq);
  run.workload.records.resize(nq * nprobe);

  const auto nqi = static_cast<std::ptrdiff_t>(nq);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t qq = 0; qq < nqi; ++qq) {
    const auto qi = static_cast<size_t>(qq);
    const auto q = queries.row(qi);
    const auto probes = probe_clusters(q, index.partition, nprobe);
    std::vector<QueryResult> parts;
    parts.reserve(nprobe);
    for (size_t j = 0; j < probes.size(); ++j) {
      const ClusterIndex& ci = index.clusters[probes[j]];
      const QueryCode qc = preprocess_query(q, ci.centroid, index.rotation,
                                            static_cast<int>(index.meta.bq), ci.unit_norm, ci.cluster_id);
      const CandidateSet cs = beam_search(ci, qc, plan.search);
      std::vector<SourcedId> cand;
      cand.reserve(cs.items.size());
      for (const auto& c : cs.items) cand.push_back({c.id, ci.cluster_id});
      parts.push_back(rerank(q, cand, base, plan.k, static_cast<uint32_t>(qi)));

      WorkRecord& wr = run.workload.records[qi * nprobe + j];
      wr.query = static_cast<uint32_t>(qi);
      wr.cluster = ci.cluster_id;
      wr.pu_time = search_cost(cs.stats, pu);
      wr.candidates = static_cast<uint32_t>(cs.items.size());
      wr.payload_bytes = static_cast<uint32_t>(qc.payload_bytes());
      wr.result_bytes = static_cast<uint32_t>(cs.items.size() * 8);
      wr.rerank_time = model.host.rerank_time(cs.items.size(), index.meta.dim);
    }
    run.results[qi] = merge_topk(parts, plan.k);
    run.results[qi].query = static_cast<uint32_t>(qi);
    QueryWork& qw = run.workload.queries[qi];
    qw.prep_time = model.host.prep_time(nc, nprobe, index.meta.dim);
    qw.merge_time = model.host.merge_fixed;
    qw.first_record = static_cast<uint32_t>(qi * nprobe);
    qw.n_records = static_cast<uint32_t>(nprobe);
  }

  run.frequencies.assign(nc, 0.0);
  for (const auto& r : run.workload.records) run.frequencies[r.cluster] += 1.0;
  run.footprints.resize(nc);
  for (size_t c = 0; c < nc; ++c)
    run.footprints[c] = cluster_footprint(index.clusters[c], index.meta.dim, index.meta.degree);
  run.placement = place_clusters(run.footprints, run.frequencies, model);
  for (auto& r : run.workload.records) r.pu = run.placement.cluster_to_pu[r.cluster];
  return run;
}

double mean_recall(const std::vector<QueryResult>& results, const GroundTruth& gt, size_t k) {
  if (results.size() != gt.per_query.size())
    throw ParameterError("recall: " + std::to_string(results.size()) + " results vs " +
                         std::to_string(gt.per_query.size()) + " ground-truth rows");
  if (results.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < results.size(); ++i) {
    const auto ids = results[i].ids();
    std::vector<NodeId> truth;
    for (size_t j = 0; j < std::min(k, gt.per_query[i].size()); ++j) truth.push_back(gt.per_query[i][j].id);
    sum += recall_at_k(ids, truth, k);
  }
  return sum / static_cast<double>(results.size());
}

SimReport simulate(const FunctionalRun& run, const PimSystemModel& model, const PipelineConfig& cfg,
                   const GroundTruth* gt, size_t k, bool keep_trace) {
  run.placement.validate(run.footprints, model.pu_capacity_bytes);
  if (run.placement.n_pus() != model.n_pus)
    throw PlacementError("placement was made for " + std::to_string(run.placement.n_pus()) +
                         " PUs, model has " + std::to_string(model.n_pus));
  SimReport rep = simulate_workload(run.workload, model, cfg, keep_trace);
  if (gt != nullptr) rep.recall = mean_recall(run.results, *gt, k);
  return rep;
}

}  // namespace pimann
