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
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pimann/pim_model.hpp"
#include "pimann/search.hpp"
#include "pimann/simulator.hpp"

namespace pimann {

/// Everything one CLI invocation depends on. Every report embeds it.
struct RunConfig {
  std::string base;     // vector file or synthetic spec
  std::string queries;  // vector file or synthetic spec
  std::string gt;       // ground-truth ivecs; empty means none
  std::string index;    // index file; empty means <out>/index.pimann
  std::string out = "pimann-out";
  std::string model_file;

  size_t n_clusters = 100;
  size_t kmeans_iters = 25;
  size_t degree = 16;
  int bq = 4;
  size_t ef = 40;
  size_t beam = 30;
  size_t max_hops = 0;
  size_t nprobe = 8;
  size_t k = 10;
  AlphaMode alpha = AlphaMode::kFixed;
  KernelMode kernel = KernelMode::kMultiplicationFree;
  uint64_t seed = 42;
  size_t threads = 0;  // 0 means all cores

  std::vector<Strategy> strategies{Strategy::kMiniBatch};
  size_t batch_threshold = 0;  // 0 means the modeled optimum
  double wait_us = -1.0;       // negative means the default
  size_t in_flight = 0;
  size_t sync_batch = 1024;

  std::vector<size_t> sweep_ef;      // empty means {ef}
  std::vector<size_t> sweep_nprobe;  // empty means {nprobe}
  std::vector<size_t> sweep_nb;      // empty means {batch_threshold}

  PimSystemModel model;
  std::vector<std::pair<std::string, std::string>> model_overrides;

  /// Throws ConfigError for the first value outside its documented range.
  void validate() const;
  std::string index_path() const;
  /// The beam is capped at ef.
  SearchParams search_params() const;
  PipelineConfig pipeline(Strategy s, size_t n_b) const;
};

/// Sets one key. `model.<name>` keys override the system model. Throws
/// ConfigError on unknown keys and malformed values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Sets a model parameter by name; accepts the names listed by
/// `model_keys()`.
void apply_model_setting(PimSystemModel& model, std::string_view key, std::string_view value);
std::vector<std::string> model_keys();

/// key=value lines with `#` comments and blank lines.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);
RunConfig load_config_file(const std::string& path, RunConfig base = {});
void load_model_file(const std::string& path, PimSystemModel& model);

/// The config as ordered key/value pairs; applying them reproduces it.
std::vector<std::pair<std::string, std::string>> config_pairs(const RunConfig& cfg);
std::vector<std::pair<std::string, std::string>> model_pairs(const PimSystemModel& model);

}  // namespace pimann
