// Copyright 2026 The rrtpredict Authors
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

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "rrt/rrt.h"

namespace {

int fail(rrt_status s) {
  std::fprintf(stderr, "rrt: %s\n", rrt_last_error());
  return static_cast<int>(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predict renal replacement therapy onset from claims"};
  app.require_subcommand(1);

  std::string config_path;
  unsigned workers = 0;
  std::uint64_t seed = 0;
  std::string task = "all";
  app.add_option("--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--workers", workers, "Worker threads (overrides the config)")->check(CLI::Range(1u, 1024u));
  auto* seed_opt = app.add_option("--seed", seed, "Seed (overrides the config)");
  app.add_option("--task", task, "Restrict train/predict/evaluate to one task")
      ->check(CLI::IsMember({"all", "rrt", "dialysis", "transplant"}));

  static const char* const kStages[][2] = {
      {"synth", "Generate a synthetic cohort"},
      {"triggers", "Enumerate triggers, eligibility, labels and the split"},
      {"featurize", "Build the vocabulary and sparse feature rows"},
      {"train", "Train one model per task"},
      {"predict", "Score the test split"},
      {"evaluate", "Write the evaluation report"},
      {"reproduce", "Run every stage in order"},
  };
  app.fallthrough();
  for (const auto& s : kStages) app.add_subcommand(s[0], s[1]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : RRT_ERR_CONFIG;
  }

  rrt_stage stage;
  if (rrt_status s = rrt_parse_stage(app.get_subcommands().front()->get_name().c_str(), &stage)) return fail(s);

  rrt_pipeline* p = nullptr;
  if (rrt_status s = rrt_pipeline_open(config_path.c_str(), &p)) return fail(s);
  rrt_status s = RRT_OK;
  if (workers) s = rrt_pipeline_set_workers(p, workers);
  if (!s && *seed_opt) s = rrt_pipeline_set_seed(p, seed);
  if (!s && task != "all") {
    rrt_task t;
    s = rrt_parse_task(task.c_str(), &t);
    if (!s) s = rrt_pipeline_set_task(p, t);
  }
  if (!s) s = rrt_pipeline_run(p, stage);
  std::fputs(rrt_pipeline_log(p), stderr);
  if (!s && *rrt_pipeline_report(p)) std::fputs(rrt_pipeline_report(p), stdout);
  rrt_pipeline_close(p);
  return s ? fail(s) : 0;
}
