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
#include <cstdlib>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "pimann/commands.hpp"
#include "pimann/run_config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"pimann: compact IVF-graph index and PIM pipeline simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", pimann::artifact_version());

  std::string config_file;
  std::string model_file;
  std::vector<std::string> sets;
  app.add_option("--config", config_file, "key=value config file, applied first");
  app.add_option("--model", model_file, "key=value system model file");
  app.add_option("--set", sets, "extra key=value setting, applied last")->take_all();

  // Flag name -> config key. Values are applied in this order after the
  // config and model files.
  const std::vector<std::pair<std::string, std::string>> flags = {
      {"base", "base"},           {"queries", "queries"},
      {"gt", "gt"},               {"index", "index"},
      {"out", "out"},             {"clusters", "clusters"},
      {"kmeans-iters", "kmeans_iters"},
      {"degree", "degree"},       {"bq", "bq"},
      {"ef", "ef"},               {"beam", "beam"},
      {"max-hops", "max_hops"},   {"nprobe", "nprobe"},
      {"k", "k"},                 {"alpha-mode", "alpha_mode"},
      {"kernel", "kernel"},       {"seed", "seed"},
      {"threads", "threads"},     {"strategy", "strategy"},
      {"batch-threshold", "batch_threshold"},
      {"wait-us", "wait_us"},     {"in-flight", "in_flight"},
      {"sync-batch", "sync_batch"},
      {"sweep-ef", "sweep_ef"},   {"sweep-nprobe", "sweep_nprobe"},
      {"sweep-nb", "sweep_nb"},
  };
  std::vector<std::string> values(flags.size());
  std::vector<CLI::Option*> opts;
  for (size_t i = 0; i < flags.size(); ++i)
    opts.push_back(app.add_option("--" + flags[i].first, values[i], "sets " + flags[i].second));

  app.add_subcommand("build", "build an index and report its footprint");
  app.add_subcommand("search", "functional search with optional recall");
  app.add_subcommand("bench", "simulated benchmark over strategies and sweeps");
  app.add_subcommand("groundtruth", "exact k nearest neighbours as ivecs");
  app.add_subcommand("calibrate", "measure host cost constants for the model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  pimann::RunConfig cfg;
  if (const char* env = std::getenv("PIMANN_OUT")) cfg.out = env;
  try {
    if (!config_file.empty()) cfg = pimann::load_config_file(config_file, cfg);
    if (!model_file.empty()) pimann::apply_setting(cfg, "model_file", model_file);
    for (size_t i = 0; i < flags.size(); ++i)
      if (opts[i]->count() > 0) pimann::apply_setting(cfg, flags[i].second, values[i]);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw pimann::ConfigError("--set expects key=value, got '" + s + "'");
      pimann::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
  } catch (const pimann::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pimann::exit_code_for(e.kind());
  }

  const std::string name = app.get_subcommands().front()->get_name();
  return pimann::run_command(name, cfg, std::cout, std::cerr);
}
