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

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pimann/compact_index.hpp"
#include "pimann/error.hpp"
#include "pimann/run_config.hpp"
#include "pimann/simulator.hpp"
#include "pimann/vector_set.hpp"

namespace pimann {

/// 0 success, 2 configuration, 3 data, 4 model infeasibility.
int exit_code_for(ErrorKind kind);

/// `git describe` of the build.
std::string artifact_version();

BuildParams build_params(const RunConfig& cfg);

/// One bench CSV row. Stage columns are busy seconds per query.
struct BenchRow {
  std::string strategy;
  size_t ef = 0;
  size_t nprobe = 0;
  size_t n_b = 0;  // 0 for strategies without a batch threshold
  std::optional<double> recall;
  double qps = 0.0;
  StageBusy per_query;
  SimReport report;
};

/// Every (ef, nprobe) point runs one functional pass shared by all
/// strategies and N_B values.
std::vector<BenchRow> run_bench(const RunConfig& cfg, const CompactIndex& index,
                                const VectorSet& base, const VectorSet& queries,
                                const GroundTruth* gt);

/// CSV header of the bench output.
std::string bench_csv_header();
std::string bench_csv_row(const BenchRow& row);

/// Host-cost constants measured on this machine.
HostCostModel calibrate_host_costs(uint64_t seed);

int cmd_build(const RunConfig& cfg, std::ostream& out);
int cmd_search(const RunConfig& cfg, std::ostream& out);
int cmd_bench(const RunConfig& cfg, std::ostream& out);
int cmd_groundtruth(const RunConfig& cfg, std::ostream& out);
int cmd_calibrate(const RunConfig& cfg, std::ostream& out);

/// Validates the config, runs the named command and maps errors to exit
/// codes, printing the message to `err`.
int run_command(std::string_view name, const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace pimann
