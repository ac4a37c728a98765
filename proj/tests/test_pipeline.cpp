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

#include <doctest.h>

#include <filesystem>

#include "rrt/error.hpp"
#include "rrt/pipeline.hpp"
#include "scratch_dir.hpp"

using namespace rrt;
using namespace rrt::testing;
namespace fs = std::filesystem;

namespace {

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool all_skipped(const std::vector<StageOutcome>& v) {
  for (const auto& o : v)
    if (!o.skipped) return false;
  return !v.empty();
}

}  // namespace

TEST_CASE("artifact header") {
  ArtifactHeader h{"triggers", 1, 0xabcULL, 42, 0x1234ULL};
  CHECK(h.line() == "# rrtpredict artifact=triggers stage_version=1 config=0000000000000abc seed=42 inputs=0000000000001234");
  const auto back = ArtifactHeader::parse(h.line());
  REQUIRE(back.has_value());
  CHECK(back->line() == h.line());
  CHECK(h.same_lineage(ArtifactHeader{"vocabulary", 1, 0xabcULL, 42, 0x1234ULL}));
  CHECK_FALSE(h.same_lineage(ArtifactHeader{"triggers", 1, 0xabcULL, 43, 0x1234ULL}));
  CHECK_FALSE(ArtifactHeader::parse("# something else").has_value());
  CHECK_FALSE(ArtifactHeader::parse("").has_value());
}

TEST_CASE("stage names") {
  for (auto s : {Stage::synth, Stage::triggers, Stage::featurize, Stage::train, Stage::predict, Stage::evaluate,
                 Stage::reproduce})
    CHECK(parse_stage(to_string(s)) == s);
  CHECK_FALSE(parse_stage("deploy").has_value());
}

TEST_CASE("pipeline config validation") {
  ScratchDir dir("cfg");
  const auto base = dir.path();
  const auto ok = PipelineConfig::from_json_text(small_pipeline_config("work"), base);
  CHECK(ok.work_dir == base / "work");
  CHECK(ok.tasks.size() == 2);
  CHECK(ok.synth->seed == 7);

  CHECK(message_of([&] { PipelineConfig::from_json_text(R"({"work_dir": "w", "colour": 1})", base); })
            .find("colour") != std::string::npos);
  CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"work_dir": "w", "horizons": [60, 30]})", base).validate(),
                  ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"work_dir": "w", "split": {"train": 0.5, "valid": 0.1, "test": 0.1}})", base)
                      .validate(),
                  ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"work_dir": "w", "tasks": ["kidney"]})", base).validate(),
                  ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json_text("{", base), ConfigError);
  CHECK_THROWS_AS(
      PipelineConfig::from_json_text(R"({"work_dir": "w", "claims_path": "missing.tsv"})", base).validate(),
      ConfigError);
  CHECK_THROWS_AS(PipelineConfig::load(base / "nope.json"), ConfigError);
}

TEST_CASE("stages refuse to run out of order") {
  ScratchDir dir("order");
  Pipeline p(PipelineConfig::from_json_text(small_pipeline_config("work"), dir.path()));
  const auto msg = message_of([&] { p.run(Stage::evaluate); });
  INFO(msg);
  CHECK(msg.find("run 'triggers' first") != std::string::npos);
  CHECK_THROWS_AS(p.run(Stage::triggers), DataError);
  CHECK(message_of([&] { p.run(Stage::triggers); }).find("run 'synth' first") != std::string::npos);
}

TEST_CASE("end to end run, skipping and staleness") {
  ScratchDir dir("e2e");
  auto cfg = PipelineConfig::from_json_text(small_pipeline_config("work"), dir.path());
  Pipeline p(cfg);
  p.run(Stage::synth);
  p.run(Stage::triggers);
  p.run(Stage::featurize);

  // Evaluate before training names the missing model file.
  const auto msg = message_of([&] { p.run(Stage::evaluate); });
  CHECK(msg.find("model_rrt.bin") != std::string::npos);
  CHECK(msg.find("run 'train' first") != std::string::npos);

  const auto first = p.run(Stage::reproduce);
  CHECK_FALSE(p.report().empty());
  CHECK(p.report().find("ROC-AUC") != std::string::npos);
  for (const auto* name : {"claims.tsv", "ground_truth.tsv", "triggers.tsv", "vocab.tsv", "features_train.tsv",
                           "model_rrt.bin", "model_dialysis.bin", "predictions_rrt.tsv", "report.txt",
                           "report.json"})
    CHECK(fs::exists(p.path(name)));
  CHECK_FALSE(fs::exists(p.path("model_transplant.bin")));
  const auto report = slurp(p.path("report.json"));

  Pipeline again(cfg);
  CHECK(all_skipped(again.run(Stage::reproduce)));
  CHECK(slurp(p.path("report.json")) == report);

  // Touching an input invalidates everything downstream of it.
  {
    auto text = slurp(p.path("triggers.tsv"));
    text += "# appended comment\n";
    dir.write("work/triggers.tsv", text);
  }
  Pipeline stale(cfg);
  const auto stale_msg = message_of([&] { stale.run(Stage::train); });
  CHECK(stale_msg.find("stale") != std::string::npos);
  CHECK(stale_msg.find("run 'featurize' first") != std::string::npos);
  const auto rerun = stale.run(Stage::featurize);
  CHECK_FALSE(rerun.front().skipped);

  // A different seed makes the claims stale.
  Pipeline reseeded(cfg);
  reseeded.set_seed(8);
  CHECK(message_of([&] { reseeded.run(Stage::triggers); }).find("run 'synth' first") != std::string::npos);
}

TEST_CASE("artifacts from a truncated write are rejected") {
  ScratchDir dir("trunc");
  Pipeline p(PipelineConfig::from_json_text(small_pipeline_config("work"), dir.path()));
  p.run(Stage::synth);
  dir.write("work/claims.tsv", "B\tX\n");
  CHECK_THROWS_AS(p.run(Stage::triggers), DataError);
  CHECK_FALSE(p.run(Stage::synth).front().skipped);
  CHECK(p.run(Stage::synth).front().skipped);
}
