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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rrt/claims.hpp"
#include "rrt/features.hpp"
#include "rrt/model.hpp"
#include "rrt/synth.hpp"
#include "rrt/triggers.hpp"

namespace rrt {

enum class Stage : std::uint8_t { synth, triggers, featurize, train, predict, evaluate, reproduce };
std::string_view to_string(Stage stage);
std::optional<Stage> parse_stage(std::string_view s);

inline constexpr std::uint64_t kStageVersion = 1;

/// Parsed pipeline configuration. Relative paths are resolved against the
/// directory holding the config file.
struct PipelineConfig {
  std::filesystem::path work_dir;
  std::optional<std::filesystem::path> claims_path;  // exclusive with `synth`
  std::optional<SynthConfig> synth;
  DateRange dataset_range;
  DateRange trigger_range{Date::from_ymd(2012, 1, 1), Date::from_ymd(2015, 12, 1)};
  /// ckd, dialysis, transplant, access_creation; absent entries use the defaults.
  std::array<std::optional<std::filesystem::path>, 4> codeset_paths;
  Horizons horizons;
  TimeBuckets buckets;
  std::size_t min_count = 1;
  SplitRatios split;
  std::uint64_t seed = 1;
  std::vector<HyperParams> grid{HyperParams{}};
  std::vector<double> sensitivity_targets{0.6, 0.7, 0.8};
  std::vector<Task> tasks{kAllTasks.begin(), kAllTasks.end()};
  unsigned workers = 1;

  /// Throws ConfigError naming the offending key.
  static PipelineConfig from_json_text(std::string_view text, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);

  /// Checks ranges and that every referenced input file exists.
  void validate() const;
  void set_seed(std::uint64_t value);
  ClinicalCodeSets codesets() const;
};

/// First line of every text artifact:
///   # rrtpredict artifact=NAME stage_version=N config=HEX seed=N inputs=HEX
struct ArtifactHeader {
  std::string artifact;
  std::uint64_t stage_version = kStageVersion;
  std::uint64_t config = 0;
  std::uint64_t seed = 0;
  std::uint64_t inputs = 0;

  std::string line() const;
  static std::optional<ArtifactHeader> parse(std::string_view line);
  /// Reads only the first line of `path`; nullopt when missing or headerless.
  static std::optional<ArtifactHeader> read(const std::filesystem::path& path);
  /// Same lineage, ignoring the artifact name.
  bool same_lineage(const ArtifactHeader& other) const;
};

struct StageOutcome {
  Stage stage = Stage::synth;
  bool skipped = false;  // outputs were already current
  std::string message;
};

/// Runs stages against the files in work_dir. Each stage checks the lineage
/// of the artifacts it reads, writes its outputs atomically, and is a no-op
/// when its outputs already carry the expected lineage.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  const PipelineConfig& config() const { return config_; }
  void set_workers(unsigned workers) { config_.workers = workers == 0 ? 1 : workers; }
  void set_seed(std::uint64_t seed) { config_.set_seed(seed); }
  /// Restricts train, predict and evaluate to one task.
  void set_task(std::optional<Task> task);

  /// `reproduce` runs every stage in order (skipping synth for claims input).
  std::vector<StageOutcome> run(Stage stage);

  /// Text of the last evaluation report produced or loaded by `evaluate`.
  const std::string& report() const { return report_; }

  std::filesystem::path path(std::string_view name) const { return config_.work_dir / std::string(name); }

 private:
  StageOutcome run_synth();
  StageOutcome run_triggers();
  StageOutcome run_featurize();
  StageOutcome run_train();
  StageOutcome run_predict();
  StageOutcome run_evaluate();

  std::filesystem::path claims_file() const;
  ArtifactHeader expect_triggers() const;
  ArtifactHeader expect_featurize() const;
  ArtifactHeader expect_train(Task task) const;
  ArtifactHeader expect_predict(Task task) const;
  ArtifactHeader expect_evaluate() const;
  void require(const std::filesystem::path& file, const ArtifactHeader& expected, Stage producer) const;
  void require_model(Task task) const;

  PipelineConfig config_;
  std::vector<Task> active_tasks_;
  std::string report_;
};

}  // namespace rrt
