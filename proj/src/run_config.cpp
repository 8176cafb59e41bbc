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
#include "pimann/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pimann/error.hpp"

namespace pimann {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty())
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(out)) throw ConfigError(std::string(key) + " must be finite");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for " + std::string(key));
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto part = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
    if (!part.empty()) out.push_back(part);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<size_t> parse_size_list(std::string_view key, std::string_view v) {
  std::vector<size_t> out;
  for (auto p : split_list(v)) out.push_back(parse_number<size_t>(key, p));
  return out;
}

std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

template <class T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string s;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ',';
    s += f(xs[i]);
  }
  return s;
}

struct ModelField {
  std::function<void(PimSystemModel&, std::string_view, std::string_view)> set;
  std::function<std::string(const PimSystemModel&)> get;
};

template <class T>
ModelField field(T PimSystemModel::*outer) {
  return {[outer](PimSystemModel& m, std::string_view k, std::string_view v) {
            m.*outer = parse_number<T>(k, v);
          },
          [outer](const PimSystemModel& m) {
            if constexpr (std::is_floating_point_v<T>) return fmt(m.*outer);
            else return std::to_string(m.*outer);
          }};
}

template <class S, class T>
ModelField field(S PimSystemModel::*outer, T S::*inner) {
  return {[outer, inner](PimSystemModel& m, std::string_view k, std::string_view v) {
            if constexpr (std::is_same_v<T, bool>) (m.*outer).*inner = parse_bool(k, v);
            else (m.*outer).*inner = parse_number<T>(k, v);
          },
          [outer, inner](const PimSystemModel& m) {
            const T x = (m.*outer).*inner;
            if constexpr (std::is_same_v<T, bool>) return std::string(x ? "1" : "0");
            else if constexpr (std::is_floating_point_v<T>) return fmt(x);
            else return std::to_string(x);
          }};
}

const std::vector<std::pair<std::string, ModelField>>& model_fields() {
  static const std::vector<std::pair<std::string, ModelField>> fields = {
      {"n_pus", field(&PimSystemModel::n_pus)},
      {"pu_capacity_bytes", field(&PimSystemModel::pu_capacity_bytes)},
      {"launch", field(&PimSystemModel::launch)},
      {"pu.frequency_hz", field(&PimSystemModel::pu, &PuParams::frequency_hz)},
      {"pu.internal_bandwidth", field(&PimSystemModel::pu, &PuParams::internal_bandwidth)},
      {"pu.hop_overhead_cycles", field(&PimSystemModel::pu, &PuParams::hop_overhead_cycles)},
      {"pu.id_bytes", field(&PimSystemModel::pu, &PuParams::id_bytes)},
      {"link.t0", field(&PimSystemModel::link, &TransferModel::t0)},
      {"link.bandwidth", field(&PimSystemModel::link, &TransferModel::bandwidth)},
      {"link.knee", field(&PimSystemModel::link, &TransferModel::knee)},
      {"link.kappa", field(&PimSystemModel::link, &TransferModel::kappa)},
      {"host.dispatch_fixed", field(&PimSystemModel::host, &HostCostModel::dispatch_fixed)},
      {"host.flop", field(&PimSystemModel::host, &HostCostModel::flop)},
      {"host.rerank_fixed", field(&PimSystemModel::host, &HostCostModel::rerank_fixed)},
      {"host.merge_fixed", field(&PimSystemModel::host, &HostCostModel::merge_fixed)},
  };
  return fields;
}

// Op costs are set on the PU params by name as well.
const std::vector<std::pair<std::string, double OpCosts::*>>& op_fields() {
  static const std::vector<std::pair<std::string, double OpCosts::*>> f = {
      {"pu.ops.int_op", &OpCosts::int_op},   {"pu.ops.popcount", &OpCosts::popcount},
      {"pu.ops.fp_add", &OpCosts::fp_add},   {"pu.ops.fp_mul", &OpCosts::fp_mul},
      {"pu.ops.convert", &OpCosts::convert},
  };
  return f;
}

}  // namespace

void apply_model_setting(PimSystemModel& model, std::string_view key, std::string_view value) {
  for (const auto& [name, f] : model_fields())
    if (name == key) return f.set(model, key, value);
  for (const auto& [name, member] : op_fields())
    if (name == key) {
      model.pu.ops.*member = parse_number<double>(key, value);
      return;
    }
  throw ConfigError("unknown model key '" + std::string(key) + "'");
}

std::vector<std::string> model_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, f] : model_fields()) keys.push_back(name);
  for (const auto& [name, m] : op_fields()) keys.push_back(name);
  return keys;
}

std::vector<std::pair<std::string, std::string>> model_pairs(const PimSystemModel& model) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, f] : model_fields()) out.emplace_back(name, f.get(model));
  for (const auto& [name, m] : op_fields()) out.emplace_back(name, fmt(model.pu.ops.*m));
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty())
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    out.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void load_model_file(const std::string& path, PimSystemModel& model) {
  for (const auto& [k, v] : parse_key_values(read_text(path))) apply_model_setting(model, k, v);
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  for (const auto& [k, v] : parse_key_values(read_text(path))) apply_setting(base, k, v);
  return base;
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const std::string v(trim(value));
  if (key.starts_with("model.")) {
    const auto sub = key.substr(6);
    apply_model_setting(cfg.model, sub, v);
    for (auto& [k, old] : cfg.model_overrides)
      if (k == sub) {
        old = v;
        return;
      }
    cfg.model_overrides.emplace_back(std::string(sub), v);
    return;
  }
  if (key == "base") cfg.base = v;
  else if (key == "queries") cfg.queries = v;
  else if (key == "gt") cfg.gt = v;
  else if (key == "index") cfg.index = v;
  else if (key == "out") cfg.out = v;
  else if (key == "model_file") {
    cfg.model_file = v;
    if (!v.empty()) load_model_file(v, cfg.model);
  } else if (key == "clusters") cfg.n_clusters = parse_number<size_t>(key, v);
  else if (key == "kmeans_iters") cfg.kmeans_iters = parse_number<size_t>(key, v);
  else if (key == "degree") cfg.degree = parse_number<size_t>(key, v);
  else if (key == "bq") cfg.bq = parse_number<int>(key, v);
  else if (key == "ef") cfg.ef = parse_number<size_t>(key, v);
  else if (key == "beam") cfg.beam = parse_number<size_t>(key, v);
  else if (key == "max_hops") cfg.max_hops = parse_number<size_t>(key, v);
  else if (key == "nprobe") cfg.nprobe = parse_number<size_t>(key, v);
  else if (key == "k") cfg.k = parse_number<size_t>(key, v);
  else if (key == "alpha_mode") cfg.alpha = parse_alpha_mode(v);
  else if (key == "kernel") cfg.kernel = parse_kernel_mode(v);
  else if (key == "seed") cfg.seed = parse_number<uint64_t>(key, v);
  else if (key == "threads") cfg.threads = parse_number<size_t>(key, v);
  else if (key == "strategy") {
    cfg.strategies.clear();
    if (v == "all") {
      cfg.strategies = {Strategy::kBatchSync, Strategy::kPerQuery, Strategy::kMiniBatch};
    } else {
      for (auto p : split_list(v)) cfg.strategies.push_back(parse_strategy(p));
    }
  } else if (key == "batch_threshold") cfg.batch_threshold = parse_number<size_t>(key, v);
  else if (key == "wait_us") cfg.wait_us = parse_number<double>(key, v);
  else if (key == "in_flight") cfg.in_flight = parse_number<size_t>(key, v);
  else if (key == "sync_batch") cfg.sync_batch = parse_number<size_t>(key, v);
  else if (key == "sweep_ef") cfg.sweep_ef = parse_size_list(key, v);
  else if (key == "sweep_nprobe") cfg.sweep_nprobe = parse_size_list(key, v);
  else if (key == "sweep_nb") cfg.sweep_nb = parse_size_list(key, v);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> config_pairs(const RunConfig& c) {
  auto sizes = [](const std::vector<size_t>& xs) {
    return join<size_t>(xs, [](const size_t& x) { return std::to_string(x); });
  };
  std::vector<std::pair<std::string, std::string>> out = {
      {"base", c.base},
      {"queries", c.queries},
      {"gt", c.gt},
      {"index", c.index},
      {"out", c.out},
      {"model_file", c.model_file},
      {"clusters", std::to_string(c.n_clusters)},
      {"kmeans_iters", std::to_string(c.kmeans_iters)},
      {"degree", std::to_string(c.degree)},
      {"bq", std::to_string(c.bq)},
      {"ef", std::to_string(c.ef)},
      {"beam", std::to_string(c.beam)},
      {"max_hops", std::to_string(c.max_hops)},
      {"nprobe", std::to_string(c.nprobe)},
      {"k", std::to_string(c.k)},
      {"alpha_mode", std::string(to_string(c.alpha))},
      {"kernel", std::string(to_string(c.kernel))},
      {"seed", std::to_string(c.seed)},
      {"threads", std::to_string(c.threads)},
      {"strategy", join<Strategy>(c.strategies, [](const Strategy& s) { return std::string(to_string(s)); })},
      {"batch_threshold", std::to_string(c.batch_threshold)},
      {"wait_us", fmt(c.wait_us)},
      {"in_flight", std::to_string(c.in_flight)},
      {"sync_batch", std::to_string(c.sync_batch)},
      {"sweep_ef", sizes(c.sweep_ef)},
      {"sweep_nprobe", sizes(c.sweep_nprobe)},
      {"sweep_nb", sizes(c.sweep_nb)},
  };
  for (const auto& [k, v] : c.model_overrides) out.emplace_back("model." + k, v);
  return out;
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(n_clusters >= 1, "clusters must be at least 1");
  need(degree >= 1, "degree must be at least 1");
  need(bq >= 1 && bq <= 8, "bq must be in 1..8");
  need(k >= 1, "k must be at least 1");
  need(nprobe >= 1, "nprobe must be at least 1");
  need(!strategies.empty(), "at least one strategy is required");
  need(sync_batch >= 1, "sync_batch must be at least 1");
  for (size_t e : sweep_ef) need(e >= 1, "sweep_ef entries must be at least 1");
  for (size_t p : sweep_nprobe) need(p >= 1, "sweep_nprobe entries must be at least 1");
  for (size_t b : sweep_nb) need(b >= 1, "sweep_nb entries must be at least 1");
  try {
    search_params().validate();
    for (size_t e : sweep_ef) {
      SearchParams sp = search_params();
      sp.ef = e;
      sp.beam = std::min(beam, e);
      sp.validate();
    }
    model.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

std::string RunConfig::index_path() const {
  return index.empty() ? out + "/index.pimann" : index;
}

SearchParams RunConfig::search_params() const {
  SearchParams sp;
  sp.ef = ef;
  sp.beam = std::min(beam, ef);
  sp.max_hops = max_hops;
  sp.alpha = alpha;
  sp.kernel = kernel;
  return sp;
}

PipelineConfig RunConfig::pipeline(Strategy s, size_t n_b) const {
  PipelineConfig pc;
  pc.strategy = s;
  pc.batch_threshold = n_b;
  pc.wait_limit = wait_us < 0.0 ? -1.0 : wait_us * 1e-6;
  pc.in_flight = in_flight;
  pc.sync_batch = sync_batch;
  return pc;
}

}  // namespace pimann
