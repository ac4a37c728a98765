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

#include "rrt/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "rrt/error.hpp"
#include "rrt/metrics.hpp"
#include "rrt/util.hpp"

namespace rrt {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 7> kStageNames = {"synth",   "triggers", "featurize", "train",
                                                         "predict", "evaluate", "reproduce"};
constexpr std::array<std::string_view, 4> kCodesetNames = {"ckd", "dialysis", "transplant", "access_creation"};
constexpr std::string_view kHeaderPrefix = "# rrtpredict ";

[[noreturn]] void config_error(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

Date json_date(const json& v, const std::string& key) {
  if (!v.is_string()) config_error(key, "expected a YYYY-MM-DD string");
  auto d = Date::parse(v.get<std::string>());
  if (!d) config_error(key, "invalid date '" + v.get<std::string>() + "'");
  return *d;
}

std::vector<int> json_int_list(const json& v, const std::string& key) {
  if (!v.is_array() || v.empty()) config_error(key, "expected a non-empty array of integers");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) config_error(key, "expected integers");
    out.push_back(e.get<int>());
  }
  return out;
}

double json_number(const json& v, const std::string& key) {
  if (!v.is_number()) config_error(key, "expected a number");
  return v.get<double>();
}

std::uint64_t json_count(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) config_error(key, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

using HyperSetter = void (*)(HyperParams&, const json&, const std::string&);
const std::map<std::string, HyperSetter, std::less<>>& hyper_fields() {
  static const std::map<std::string, HyperSetter, std::less<>> fields = {
      {"l1_coefficient", [](HyperParams& h, const json& v, const std::string& k) { h.l1_coefficient = json_number(v, k); }},
      {"initial_learning_rate",
       [](HyperParams& h, const json& v, const std::string& k) { h.initial_learning_rate = json_number(v, k); }},
      {"decay_rate", [](HyperParams& h, const json& v, const std::string& k) { h.decay_rate = json_number(v, k); }},
      {"decay_steps", [](HyperParams& h, const json& v, const std::string& k) { h.decay_steps = json_count(v, k); }},
      {"batch_size", [](HyperParams& h, const json& v, const std::string& k) { h.batch_size = json_count(v, k); }},
      {"max_epochs", [](HyperParams& h, const json& v, const std::string& k) { h.max_epochs = json_count(v, k); }},
      {"patience", [](HyperParams& h, const json& v, const std::string& k) { h.patience = json_count(v, k); }},
  };
  return fields;
}

HyperParams parse_hyper(const json& obj) {
  if (!obj.is_object()) config_error("hyperparams", "expected an object");
  HyperParams h;
  for (const auto& [key, v] : obj.items()) {
    auto it = hyper_fields().find(key);
    if (it == hyper_fields().end()) config_error("hyperparams." + key, "unknown hyperparameter");
    it->second(h, v, "hyperparams." + key);
  }
  return h;
}

// Cartesian product of per-field value lists; unlisted fields keep defaults.
std::vector<HyperParams> parse_grid(const json& obj) {
  if (!obj.is_object()) config_error("grid", "expected an object of arrays");
  std::vector<HyperParams> grid{HyperParams{}};
  for (const auto& [key, values] : obj.items()) {
    auto it = hyper_fields().find(key);
    if (it == hyper_fields().end()) config_error("grid." + key, "unknown hyperparameter");
    if (!values.is_array() || values.empty()) config_error("grid." + key, "expected a non-empty array");
    std::vector<HyperParams> next;
    for (const auto& base : grid) {
      for (const auto& v : values) {
        HyperParams h = base;
        it->second(h, v, "grid." + key);
        next.push_back(h);
      }
    }
    grid = std::move(next);
  }
  return grid;
}

std::string hyper_fingerprint_text(const HyperParams& h) {
  return format_double(h.l1_coefficient) + "," + format_double(h.initial_learning_rate) + "," +
         format_double(h.decay_rate) + "," + std::to_string(h.decay_steps) + "," + std::to_string(h.batch_size) + "," +
         std::to_string(h.max_epochs) + "," + std::to_string(h.patience);
}

template <class T>
std::string join(const std::vector<T>& values, char sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(values[i]);
    else
      out += std::to_string(values[i]);
  }
  return out;
}

// A missing input hashes to a marker, so the expected lineage can be built
// before `require` reports which upstream stage is missing.
std::uint64_t hash_file(const fs::path& path, std::uint64_t state) {
  if (!fs::exists(path)) return fnv1a64("<missing>", state);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    state = fnv1a64(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), state);
  }
  return state;
}

std::uint64_t hash_files(std::initializer_list<fs::path> paths) {
  std::uint64_t state = kFnvOffset;
  for (const auto& p : paths) state = hash_file(p, state);
  return state;
}

std::string with_header(const ArtifactHeader& header, std::string_view body) {
  std::string out = header.line();
  out += '\n';
  out += body;
  return out;
}

std::string_view strip_header(std::string_view text) {
  if (text.substr(0, kHeaderPrefix.size()) != kHeaderPrefix) return text;
  const auto nl = text.find('\n');
  return nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
}

bool current(const fs::path& file, const ArtifactHeader& expected) {
  auto h = ArtifactHeader::read(file);
  return h && h->artifact == expected.artifact && h->same_lineage(expected);
}

std::string model_file(Task t) { return "model_" + std::string(to_string(t)) + ".bin"; }
std::string log_file(Task t) { return "train_log_" + std::string(to_string(t)) + ".tsv"; }
std::string tuning_file(Task t) { return "tuning_" + std::string(to_string(t)) + ".tsv"; }
std::string predictions_file(Task t) { return "predictions_" + std::string(to_string(t)) + ".tsv"; }
std::string features_file(SplitRole r) { return "features_" + std::string(to_string(r)) + ".tsv"; }

std::vector<double> parse_doubles(std::string_view text, std::size_t line_no) {
  std::vector<double> out;
  for (auto f : split(text, ' ')) {
    double v = 0;
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || p != f.data() + f.size()) throw ParseError(line_no, "bad probability '" + std::string(f) + "'");
    out.push_back(v);
  }
  return out;
}

std::string stage_hint(Stage s) { return "run '" + std::string(to_string(s)) + "' first"; }

}  // namespace

std::string_view to_string(Stage stage) { return kStageNames[static_cast<std::size_t>(stage)]; }

std::optional<Stage> parse_stage(std::string_view s) {
  auto it = std::find(kStageNames.begin(), kStageNames.end(), s);
  if (it == kStageNames.end()) return std::nullopt;
  return static_cast<Stage>(it - kStageNames.begin());
}

// ---------------------------------------------------------------------------
// PipelineConfig

PipelineConfig PipelineConfig::from_json_text(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  auto resolve = [&](const json& v, const std::string& key) {
    if (!v.is_string() || v.get<std::string>().empty()) config_error(key, "expected a path string");
    fs::path p = v.get<std::string>();
    return p.is_absolute() ? p : base_dir / p;
  };

  PipelineConfig c;
  bool has_work_dir = false, has_hyper = false, has_grid = false;
  std::optional<Date> dataset_start, dataset_end;
  std::optional<Date> trigger_start, trigger_end;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "work_dir") {
        c.work_dir = resolve(v, key);
        has_work_dir = true;
      } else if (key == "claims_path") {
        c.claims_path = resolve(v, key);
      } else if (key == "synth") {
        if (!v.is_object()) config_error(key, "expected an object");
        if (v.contains("seed")) config_error("synth.seed", "the top-level 'seed' drives generation");
        c.synth = SynthConfig::from_json_text(v.dump());
      } else if (key == "dataset_start") {
        dataset_start = json_date(v, key);
      } else if (key == "dataset_end") {
        dataset_end = json_date(v, key);
      } else if (key == "trigger_start") {
        trigger_start = json_date(v, key);
      } else if (key == "trigger_end") {
        trigger_end = json_date(v, key);
      } else if (key == "codesets") {
        if (!v.is_object()) config_error(key, "expected an object");
        for (const auto& [name, p] : v.items()) {
          auto it = std::find(kCodesetNames.begin(), kCodesetNames.end(), name);
          if (it == kCodesetNames.end()) config_error("codesets." + name, "unknown code set");
          c.codeset_paths[static_cast<std::size_t>(it - kCodesetNames.begin())] = resolve(p, "codesets." + name);
        }
      } else if (key == "horizons") {
        c.horizons = Horizons(json_int_list(v, key));
      } else if (key == "buckets") {
        c.buckets = TimeBuckets(json_int_list(v, key));
      } else if (key == "min_count") {
        c.min_count = json_count(v, key);
      } else if (key == "split") {
        if (!v.is_object()) config_error(key, "expected an object");
        for (const auto& [name, r] : v.items()) {
          if (name == "train") c.split.train = json_number(r, "split.train");
          else if (name == "valid") c.split.valid = json_number(r, "split.valid");
          else if (name == "test") c.split.test = json_number(r, "split.test");
          else config_error("split." + name, "unknown split");
        }
      } else if (key == "seed") {
        c.seed = json_count(v, key);
      } else if (key == "hyperparams") {
        c.grid = {parse_hyper(v)};
        has_hyper = true;
      } else if (key == "grid") {
        c.grid = parse_grid(v);
        has_grid = true;
      } else if (key == "sensitivity_targets") {
        if (!v.is_array() || v.empty()) config_error(key, "expected a non-empty array");
        c.sensitivity_targets.clear();
        for (const auto& t : v) c.sensitivity_targets.push_back(json_number(t, key));
      } else if (key == "tasks") {
        if (!v.is_array() || v.empty()) config_error(key, "expected a non-empty array");
        c.tasks.clear();
        for (const auto& t : v) {
          auto task = t.is_string() ? parse_task(t.get<std::string>()) : std::nullopt;
          if (!task) config_error(key, "tasks are 'rrt', 'dialysis' or 'transplant'");
          if (std::find(c.tasks.begin(), c.tasks.end(), *task) == c.tasks.end()) c.tasks.push_back(*task);
        }
        std::sort(c.tasks.begin(), c.tasks.end());
      } else if (key == "workers") {
        c.workers = static_cast<unsigned>(std::max<std::uint64_t>(1, json_count(v, key)));
      } else {
        config_error(key, "unknown key");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!has_work_dir) config_error("work_dir", "required");
  if (has_hyper && has_grid) throw ConfigError("config: give either 'hyperparams' or 'grid', not both");
  if (c.claims_path.has_value() == c.synth.has_value())
    throw ConfigError("config: exactly one of 'claims_path' or 'synth' is required");
  if (c.synth) {
    if (dataset_start || dataset_end) throw ConfigError("config: dataset_start/dataset_end come from the synth section");
    c.dataset_range = c.synth->date_range;
  } else {
    if (!dataset_end) config_error("dataset_end", "required with claims_path");
    c.dataset_range = {dataset_start.value_or(Date::from_ymd(1900, 1, 1)), *dataset_end};
  }
  if (trigger_start) c.trigger_range.start = *trigger_start;
  if (trigger_end) c.trigger_range.end = *trigger_end;
  c.set_seed(c.seed);
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file '" + path.string() + "'");
  }
  return from_json_text(text, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

void PipelineConfig::set_seed(std::uint64_t value) {
  seed = value;
  if (synth) synth->seed = value;
  for (auto& h : grid) h.seed = value;
}

void PipelineConfig::validate() const {
  if (synth) synth->validate();
  if (!(dataset_range.start < dataset_range.end)) throw ConfigError("config: dataset_start must precede dataset_end");
  if (trigger_range.end < trigger_range.start) throw ConfigError("config: trigger_end precedes trigger_start");
  if (trigger_range.start < dataset_range.start) throw ConfigError("config: trigger_start precedes the dataset start");
  check_censoring_buffer(trigger_range, dataset_range.end, horizons);
  if (buckets.edges().front() != 0) throw ConfigError("config key 'buckets': the first edge must be 0");
  for (double r : {split.train, split.valid, split.test})
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("config key 'split': ratios must be in [0, 1]");
  if (split.train <= 0.0 || split.valid <= 0.0 || split.test <= 0.0)
    throw ConfigError("config key 'split': every split needs a positive share");
  if (std::abs(split.train + split.valid + split.test - 1.0) > 1e-9)
    throw ConfigError("config key 'split': ratios must sum to 1");
  if (grid.empty()) throw ConfigError("config: hyperparameter grid is empty");
  for (const auto& h : grid) h.validate();
  for (double t : sensitivity_targets)
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("config key 'sensitivity_targets': targets must be in (0, 1]");
  if (claims_path && !fs::is_regular_file(*claims_path))
    throw ConfigError("claims file '" + claims_path->string() + "' does not exist");
  for (std::size_t i = 0; i < codeset_paths.size(); ++i)
    if (codeset_paths[i] && !fs::is_regular_file(*codeset_paths[i]))
      throw ConfigError("code set file '" + codeset_paths[i]->string() + "' for '" + std::string(kCodesetNames[i]) +
                        "' does not exist");
}

ClinicalCodeSets PipelineConfig::codesets() const {
  const auto& d = ClinicalCodeSets::defaults();
  std::array<CodeSet, 4> sets = {d.ckd, d.dialysis, d.transplant, d.access_creation};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!codeset_paths[i]) continue;
    try {
      sets[i] = CodeSet::parse(std::string(kCodesetNames[i]), read_file(*codeset_paths[i]));
    } catch (const ParseError& e) {
      throw ConfigError("code set '" + codeset_paths[i]->string() + "': " + e.what());
    }
    if (sets[i].empty()) throw ConfigError("code set '" + codeset_paths[i]->string() + "' is empty");
  }
  return ClinicalCodeSets::make(sets[0], sets[1], sets[2], sets[3]);
}

// ---------------------------------------------------------------------------
// ArtifactHeader

std::string ArtifactHeader::line() const {
  return std::string(kHeaderPrefix) + "artifact=" + artifact + " stage_version=" + std::to_string(stage_version) +
         " config=" + to_hex(config) + " seed=" + std::to_string(seed) + " inputs=" + to_hex(inputs);
}

std::optional<ArtifactHeader> ArtifactHeader::parse(std::string_view line) {
  if (line.substr(0, kHeaderPrefix.size()) != kHeaderPrefix) return std::nullopt;
  ArtifactHeader h;
  unsigned seen = 0;
  try {
    for (auto field : split(line.substr(kHeaderPrefix.size()), ' ')) {
      const auto eq = field.find('=');
      if (eq == std::string_view::npos) return std::nullopt;
      const auto key = field.substr(0, eq), value = field.substr(eq + 1);
      auto dec = [&] {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc() || p != value.data() + value.size()) throw std::invalid_argument("bad number");
        return v;
      };
      if (key == "artifact") h.artifact = std::string(value), seen |= 1;
      else if (key == "stage_version") h.stage_version = dec(), seen |= 2;
      else if (key == "config") h.config = parse_hex(value), seen |= 4;
      else if (key == "seed") h.seed = dec(), seen |= 8;
      else if (key == "inputs") h.inputs = parse_hex(value), seen |= 16;
    }
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (seen != 31) return std::nullopt;
  return h;
}

std::optional<ArtifactHeader> ArtifactHeader::read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string line;
  std::getline(in, line);
  return parse(line);
}

bool ArtifactHeader::same_lineage(const ArtifactHeader& o) const {
  return stage_version == o.stage_version && config == o.config && seed == o.seed && inputs == o.inputs;
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  config_.validate();
  config_.codesets();
  active_tasks_ = config_.tasks;
}

void Pipeline::set_task(std::optional<Task> task) {
  if (!task) {
    active_tasks_ = config_.tasks;
    return;
  }
  if (std::find(config_.tasks.begin(), config_.tasks.end(), *task) == config_.tasks.end())
    throw ConfigError("task '" + std::string(to_string(*task)) + "' is not enabled in the config");
  active_tasks_ = {*task};
}

fs::path Pipeline::claims_file() const { return config_.claims_path ? *config_.claims_path : path("claims.tsv"); }

void Pipeline::require(const fs::path& file, const ArtifactHeader& expected, Stage producer) const {
  if (!fs::exists(file))
    throw DataError("missing artifact '" + file.string() + "'; " + stage_hint(producer));
  auto h = ArtifactHeader::read(file);
  if (!h || h->artifact != expected.artifact)
    throw DataError("artifact '" + file.string() + "' has no valid lineage header; " + stage_hint(producer));
  if (!h->same_lineage(expected))
    throw DataError("artifact '" + file.string() + "' is stale (config, seed or inputs changed); " +
                    stage_hint(producer));
}

void Pipeline::require_model(Task task) const {
  const auto file = path(model_file(task));
  if (!fs::exists(file)) throw DataError("missing model file '" + file.string() + "'; " + stage_hint(Stage::train));
  const auto expected = expect_train(task);
  const auto [params, lineage] = parse_model(read_file(file));
  const ModelLineage want{expected.config, expected.seed, expected.stage_version, expected.inputs};
  if (!(lineage == want))
    throw DataError("model file '" + file.string() + "' is stale (config, seed or inputs changed); " +
                    stage_hint(Stage::train));
}

ArtifactHeader Pipeline::expect_triggers() const {
  const auto sets = config_.codesets();
  std::string text = "triggers|" + config_.trigger_range.start.iso() + "|" + config_.trigger_range.end.iso() + "|" +
                     config_.dataset_range.start.iso() + "|" + config_.dataset_range.end.iso() + "|" +
                     join(std::vector<int>(config_.horizons.overlapping().begin(), config_.horizons.overlapping().end()), ',') +
                     "|" + format_double(config_.split.train) + "," + format_double(config_.split.valid) + "," +
                     format_double(config_.split.test);
  for (const CodeSet* s : {&sets.ckd, &sets.dialysis, &sets.transplant, &sets.access_creation})
    text += "|" + s->serialize();
  return {"triggers", kStageVersion, fnv1a64(text), config_.seed, hash_files({claims_file()})};
}

ArtifactHeader Pipeline::expect_featurize() const {
  const std::string text =
      "featurize|" + join(std::vector<int>(config_.buckets.edges().begin(), config_.buckets.edges().end()), ',') + "|" +
      std::to_string(config_.min_count);
  return {"features", kStageVersion, fnv1a64(text), config_.seed,
          hash_files({claims_file(), path("triggers.tsv")})};
}

ArtifactHeader Pipeline::expect_train(Task task) const {
  std::string text = "train|" + std::string(to_string(task));
  for (const auto& h : config_.grid) text += "|" + hyper_fingerprint_text(h);
  return {"train", kStageVersion, fnv1a64(text), config_.seed,
          hash_files({path("vocab.tsv"), path(features_file(SplitRole::train)), path(features_file(SplitRole::valid))})};
}

ArtifactHeader Pipeline::expect_predict(Task task) const {
  const std::string text = "predict|" + std::string(to_string(task));
  return {"predictions", kStageVersion, fnv1a64(text), config_.seed,
          hash_files({path(model_file(task)), path("vocab.tsv"), path(features_file(SplitRole::test))})};
}

ArtifactHeader Pipeline::expect_evaluate() const {
  std::string text = "evaluate|" + join(config_.sensitivity_targets, ',') + "|" +
                     join(std::vector<int>(config_.horizons.overlapping().begin(), config_.horizons.overlapping().end()), ',');
  std::uint64_t inputs = hash_files({path("triggers.tsv"), claims_file()});
  for (Task t : active_tasks_) {
    text += "|" + std::string(to_string(t));
    inputs = hash_file(path(predictions_file(t)), inputs);
  }
  return {"report", kStageVersion, fnv1a64(text), config_.seed, inputs};
}

std::vector<StageOutcome> Pipeline::run(Stage stage) {
  switch (stage) {
    case Stage::synth:
      return {run_synth()};
    case Stage::triggers:
      return {run_triggers()};
    case Stage::featurize:
      return {run_featurize()};
    case Stage::train:
      return {run_train()};
    case Stage::predict:
      return {run_predict()};
    case Stage::evaluate:
      return {run_evaluate()};
    case Stage::reproduce:
      break;
  }
  std::vector<StageOutcome> out;
  if (config_.synth) out.push_back(run_synth());
  out.push_back(run_triggers());
  out.push_back(run_featurize());
  out.push_back(run_train());
  out.push_back(run_predict());
  out.push_back(run_evaluate());
  return out;
}

StageOutcome Pipeline::run_synth() {
  if (!config_.synth)
    throw ConfigError("'synth' needs a synth section; this config reads claims from '" +
                      config_.claims_path->string() + "'");
  const ArtifactHeader claims_h{"claims", kStageVersion, fnv1a64("synth|" + config_.synth->to_json_text()),
                                config_.seed, 0};
  ArtifactHeader truth_h = claims_h;
  truth_h.artifact = "ground_truth";
  if (current(path("claims.tsv"), claims_h) && current(path("ground_truth.tsv"), truth_h))
    return {Stage::synth, true, "synth: claims.tsv is current"};

  const auto out = generate(*config_.synth, config_.workers);
  std::string claims = claims_h.line() + "\n# hazard_multiplier=" + format_double(out.hazard_multiplier) +
                       " pilot_prevalence_365d=" + format_double(out.calibrated_prevalence) + "\n";
  claims += write_claims(out.dataset);
  write_file_atomic(path("claims.tsv"), claims);
  write_file_atomic(path("ground_truth.tsv"),
                    with_header(truth_h, "# beneficiary_id\tevent_type\tdate\n" + serialize_ground_truth(out.events)));
  std::size_t n_claims = 0;
  for (const auto& tl : out.dataset.timelines) n_claims += tl.claims.size();
  return {Stage::synth, false,
          "synth: " + std::to_string(out.dataset.size()) + " beneficiaries, " + std::to_string(n_claims) +
              " claims, " + std::to_string(out.events.size()) + " ground-truth events"};
}

namespace {

Dataset load_claims(const fs::path& file, const DateRange& range) {
  return parse_claims(read_file(file), ParseOptions{range});
}

}  // namespace

StageOutcome Pipeline::run_triggers() {
  const auto file = claims_file();
  if (!fs::exists(file))
    throw DataError("missing claims file '" + file.string() + "'; " + stage_hint(Stage::synth));
  if (config_.synth) {
    const ArtifactHeader claims_h{"claims", kStageVersion, fnv1a64("synth|" + config_.synth->to_json_text()),
                                  config_.seed, 0};
    require(file, claims_h, Stage::synth);
  }
  const auto header = expect_triggers();
  if (current(path("triggers.tsv"), header)) return {Stage::triggers, true, "triggers: triggers.tsv is current"};

  const auto ds = load_claims(file, config_.dataset_range);
  const auto sets = config_.codesets();
  std::vector<std::string> ids;
  ids.reserve(ds.size());
  for (const auto& tl : ds.timelines) ids.push_back(tl.id());
  const auto split = split_beneficiaries(ids, config_.split, config_.seed);
  std::unordered_map<std::string_view, SplitRole> role;
  for (const auto& id : split.train) role.emplace(id, SplitRole::train);
  for (const auto& id : split.valid) role.emplace(id, SplitRole::valid);
  for (const auto& id : split.test) role.emplace(id, SplitRole::test);

  std::vector<std::string> chunks(ds.size());
  std::vector<std::size_t> eligible(ds.size(), 0);
  parallel_for(ds.size(), config_.workers, [&](std::size_t i) {
    const auto& tl = ds.timelines[i];
    const SplitRole r = role.at(tl.id());
    for (auto& t : enumerate_triggers(tl, config_.trigger_range, config_.dataset_range.end, sets, config_.horizons)) {
      eligible[i] += t.eligible();
      append_trigger_record(chunks[i], {std::move(t), r});
    }
  });
  std::string out = header.line() + "\n# beneficiary_id\ttrigger_date\teligible\treasons\tsplit\trrt\tdialysis\ttransplant\n";
  std::size_t total_eligible = 0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    out += chunks[i];
    total_eligible += eligible[i];
  }
  write_file_atomic(path("triggers.tsv"), out);
  const auto per = first_of_months(config_.trigger_range).size();
  return {Stage::triggers, false,
          "triggers: " + std::to_string(ds.size() * per) + " candidate triggers, " + std::to_string(total_eligible) +
              " eligible (split " + std::to_string(split.train.size()) + "/" + std::to_string(split.valid.size()) +
              "/" + std::to_string(split.test.size()) + " beneficiaries)"};
}

StageOutcome Pipeline::run_featurize() {
  require(path("triggers.tsv"), expect_triggers(), Stage::triggers);
  const auto header = expect_featurize();
  ArtifactHeader vocab_h = header;
  vocab_h.artifact = "vocabulary";
  bool all_current = current(path("vocab.tsv"), vocab_h);
  for (auto r : {SplitRole::train, SplitRole::valid, SplitRole::test})
    all_current = all_current && current(path(features_file(r)), header);
  if (all_current) return {Stage::featurize, true, "featurize: vocabulary and feature files are current"};

  const auto ds = load_claims(claims_file(), config_.dataset_range);
  const auto records = parse_trigger_table(read_file(path("triggers.tsv")), true);
  std::array<std::vector<const TriggerRecord*>, 3> by_role;
  for (const auto& r : records) by_role[static_cast<std::size_t>(r.split)].push_back(&r);
  auto timeline = [&](const Trigger& t) {
    const auto* tl = ds.find(t.beneficiary_id);
    if (!tl) throw DataError("trigger table references unknown beneficiary '" + t.beneficiary_id + "'");
    return tl;
  };

  std::vector<FeatureSource> sources;
  for (const auto* r : by_role[0]) sources.push_back({timeline(r->trigger), r->trigger.trigger_date});
  const auto vocab = Vocabulary::build(sources, config_.buckets, config_.min_count, config_.workers);
  write_file_atomic(path("vocab.tsv"), with_header(vocab_h, vocab.serialize()));

  std::string summary = "featurize: vocabulary " + std::to_string(vocab.size()) + " keys; rows";
  for (auto role : {SplitRole::train, SplitRole::valid, SplitRole::test}) {
    const auto& recs = by_role[static_cast<std::size_t>(role)];
    std::vector<std::string> chunks(recs.size());
    parallel_for(recs.size(), config_.workers, [&](std::size_t i) {
      const auto& t = recs[i]->trigger;
      FeatureRow row;
      row.trigger_key = t.key();
      for (Task task : kAllTasks) row.label_digits.push_back(t.label(task).digits());
      row.indices = featurize(*timeline(t), t.trigger_date, vocab).indices;
      append_feature_row(chunks[i], row);
    });
    std::string out = header.line() + "\n# dimension=" + std::to_string(vocab.size()) +
                      " vocab_hash=" + to_hex(vocab.hash()) + "\n";
    for (const auto& c : chunks) out += c;
    write_file_atomic(path(features_file(role)), out);
    summary += " " + std::string(to_string(role)) + "=" + std::to_string(recs.size());
  }
  return {Stage::featurize, false, summary};
}

namespace {

struct FeatureSet {
  std::vector<FeatureRow> rows;
  std::vector<Example> examples(Task task) const {
    std::vector<Example> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
      const auto label = DisjointLabel::parse_digits(r.label_digits.at(static_cast<std::size_t>(task)));
      if (!label) throw DataError("feature row '" + r.trigger_key + "' has a malformed label");
      out.push_back({r.indices, label->cls});
    }
    return out;
  }
};

FeatureSet load_features(const fs::path& file, const Vocabulary& vocab) {
  FeatureSet fs;
  try {
    fs.rows = parse_feature_rows(read_file(file), static_cast<std::uint32_t>(vocab.size()));
  } catch (const ParseError& e) {
    throw DataError("'" + file.string() + "': " + e.what());
  }
  for (const auto& r : fs.rows)
    if (r.label_digits.size() != kNumTasks)
      throw DataError("'" + file.string() + "': row '" + r.trigger_key + "' needs one label per task");
  return fs;
}

Vocabulary load_vocab(const fs::path& file) {
  try {
    return Vocabulary::parse(read_file(file));
  } catch (const ParseError& e) {
    throw DataError("'" + file.string() + "': " + e.what());
  }
}

std::string format_tuning(const TuneResult& r) {
  std::string out =
      "l1_coefficient\tinitial_learning_rate\tdecay_rate\tdecay_steps\tbatch_size\tmax_epochs\tpatience\tvalid_loss\n";
  for (const auto& t : r.trials) {
    const auto& h = t.hyper;
    out += format_double(h.l1_coefficient) + "\t" + format_double(h.initial_learning_rate) + "\t" +
           format_double(h.decay_rate) + "\t" + std::to_string(h.decay_steps) + "\t" + std::to_string(h.batch_size) +
           "\t" + std::to_string(h.max_epochs) + "\t" + std::to_string(h.patience) + "\t" +
           format_double(t.valid_loss) + "\n";
  }
  return out;
}

}  // namespace

StageOutcome Pipeline::run_train() {
  const auto feat_h = expect_featurize();
  ArtifactHeader vocab_h = feat_h;
  vocab_h.artifact = "vocabulary";
  require(path("vocab.tsv"), vocab_h, Stage::featurize);
  require(path(features_file(SplitRole::train)), feat_h, Stage::featurize);
  require(path(features_file(SplitRole::valid)), feat_h, Stage::featurize);

  std::optional<Vocabulary> vocab;
  std::optional<FeatureSet> train_rows, valid_rows;
  std::string summary = "train:";
  bool all_skipped = true;
  for (Task task : active_tasks_) {
    const auto header = expect_train(task);
    ArtifactHeader log_h = header, tuning_h = header;
    log_h.artifact = "train_log";
    tuning_h.artifact = "tuning";
    const ModelLineage lineage{header.config, header.seed, header.stage_version, header.inputs};
    bool up_to_date = current(path(log_file(task)), log_h) && current(path(tuning_file(task)), tuning_h) &&
                      fs::exists(path(model_file(task)));
    if (up_to_date) {
      try {
        up_to_date = parse_model(read_file(path(model_file(task)))).second == lineage;
      } catch (const Error&) {
        up_to_date = false;
      }
    }
    if (up_to_date) {
      summary += " " + std::string(to_string(task)) + "=current";
      continue;
    }
    all_skipped = false;
    if (!vocab) {
      vocab = load_vocab(path("vocab.tsv"));
      train_rows = load_features(path(features_file(SplitRole::train)), *vocab);
      valid_rows = load_features(path(features_file(SplitRole::valid)), *vocab);
    }
    const auto tr = train_rows->examples(task);
    const auto va = valid_rows->examples(task);
    const auto result = tune(config_.grid, tr, va, config_.horizons.num_classes(), vocab->size(), vocab->hash());
    write_file_atomic(path(model_file(task)), serialize_model(result.best_run.params, lineage));
    write_file_atomic(path(log_file(task)), with_header(log_h, format_train_log(result.best_run.log)));
    write_file_atomic(path(tuning_file(task)), with_header(tuning_h, format_tuning(result)));
    summary += " " + std::string(to_string(task)) + " best_valid_loss=" + format_double(result.best_run.best_valid_loss) +
               " epoch=" + std::to_string(result.best_run.best_epoch) +
               " nonzero=" + std::to_string(result.best_run.params.nonzero_weights());
  }
  return {Stage::train, all_skipped, summary};
}

StageOutcome Pipeline::run_predict() {
  const auto feat_h = expect_featurize();
  ArtifactHeader vocab_h = feat_h;
  vocab_h.artifact = "vocabulary";
  require(path("vocab.tsv"), vocab_h, Stage::featurize);
  require(path(features_file(SplitRole::test)), feat_h, Stage::featurize);

  std::optional<Vocabulary> vocab;
  std::optional<FeatureSet> test_rows;
  std::string summary = "predict:";
  bool all_skipped = true;
  for (Task task : active_tasks_) {
    require_model(task);
    const auto header = expect_predict(task);
    if (current(path(predictions_file(task)), header)) {
      summary += " " + std::string(to_string(task)) + "=current";
      continue;
    }
    all_skipped = false;
    if (!vocab) {
      vocab = load_vocab(path("vocab.tsv"));
      test_rows = load_features(path(features_file(SplitRole::test)), *vocab);
    }
    const auto params = parse_model(read_file(path(model_file(task))), vocab->hash()).first;
    const auto& rows = test_rows->rows;
    std::vector<std::string> lines(rows.size());
    parallel_for(rows.size(), config_.workers, [&](std::size_t i) {
      const auto pv = predict(rows[i].indices, params);
      std::string& line = lines[i];
      line = rows[i].trigger_key;
      line += '\t';
      for (std::size_t k = 0; k < pv.s.size(); ++k) {
        if (k) line += ' ';
        line += format_double(pv.s[k]);
      }
      line += '\t';
      for (std::size_t k = 0; k < pv.p.size(); ++k) {
        if (k) line += ' ';
        line += format_double(pv.p[k]);
      }
      line += '\n';
    });
    std::string out = header.line() + "\n# trigger\tdisjoint scores s\toverlapping probabilities p\n";
    for (const auto& l : lines) out += l;
    write_file_atomic(path(predictions_file(task)), out);
    summary += " " + std::string(to_string(task)) + "=" + std::to_string(rows.size());
  }
  return {Stage::predict, all_skipped, summary};
}

StageOutcome Pipeline::run_evaluate() {
  require(path("triggers.tsv"), expect_triggers(), Stage::triggers);
  for (Task task : active_tasks_) {
    require_model(task);
    require(path(predictions_file(task)), expect_predict(task), Stage::predict);
  }
  const auto header = expect_evaluate();
  if (current(path("report.txt"), header) && fs::exists(path("report.json"))) {
    report_ = std::string(strip_header(read_file(path("report.txt"))));
    return {Stage::evaluate, true, report_};
  }

  const auto records = parse_trigger_table(read_file(path("triggers.tsv")), true);
  std::vector<Trigger> all;
  all.reserve(records.size());
  std::vector<const Trigger*> test;
  for (const auto& r : records) all.push_back(r.trigger);
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == SplitRole::test) test.push_back(&all[i]);

  EvaluationReport report;
  report.horizon_days.assign(config_.horizons.overlapping().begin(), config_.horizons.overlapping().end());
  report.sensitivity_targets = config_.sensitivity_targets;
  report.prevalence = prevalence_table(all, config_.horizons);

  std::vector<double> dialysis_scores;
  for (Task task : active_tasks_) {
    const auto file = path(predictions_file(task));
    const auto text = read_file(file);
    std::unordered_map<std::string, std::vector<double>> by_key;
    std::size_t line_no = 0;
    try {
      for (auto line : split(text, '\n')) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto f = split(line, '\t');
        if (f.size() != 3) throw ParseError(line_no, "prediction row needs 3 fields");
        auto p = parse_doubles(f[2], line_no);
        if (p.size() != config_.horizons.num_windows()) throw ParseError(line_no, "prediction width mismatch");
        by_key.emplace(std::string(f[0]), std::move(p));
      }
    } catch (const ParseError& e) {
      throw DataError("'" + file.string() + "': " + e.what());
    }
    std::vector<std::vector<double>> overlapping;
    overlapping.reserve(test.size());
    for (const auto* t : test) {
      auto it = by_key.find(t->key());
      if (it == by_key.end())
        throw DataError("'" + file.string() + "' has no prediction for test trigger " + t->key() + "; " +
                        stage_hint(Stage::predict));
      overlapping.push_back(std::move(it->second));
    }
    if (by_key.size() != test.size())
      throw DataError("'" + file.string() + "' does not match the test split; " + stage_hint(Stage::predict));
    report.tasks.push_back(evaluate_task(task, test, overlapping, config_.horizons, config_.sensitivity_targets));
    if (task == Task::dialysis)
      for (const auto& p : overlapping) dialysis_scores.push_back(p.back());
  }

  if (!dialysis_scores.empty()) {
    const auto ds = load_claims(claims_file(), config_.dataset_range);
    std::vector<ScoredTrigger> scored;
    for (std::size_t i = 0; i < test.size(); ++i) scored.push_back({test[i], dialysis_scores[i]});
    try {
      report.impact = impact_analysis(scored, ds, config_.codesets(), config_.sensitivity_targets, config_.horizons);
      report.impact_note =
          "Share of correctly flagged dialysis patients (longest-horizon dialysis model, test split) with no "
          "access-creation code before dialysis onset; one count per beneficiary at the earliest flagged trigger.";
    } catch (const DataError& e) {
      report.impact_note = std::string("impact analysis not available: ") + e.what();
    }
  } else {
    report.impact_note = "impact analysis needs the dialysis task";
  }

  report_ = report.to_text();
  auto j = nlohmann::ordered_json::parse(report.to_json());
  j["lineage"] = {{"stage_version", header.stage_version},
                  {"config", to_hex(header.config)},
                  {"seed", header.seed},
                  {"inputs", to_hex(header.inputs)}};
  write_file_atomic(path("report.json"), j.dump(2) + "\n");
  write_file_atomic(path("report.txt"), with_header(header, report_));
  return {Stage::evaluate, false, report_};
}

}  // namespace rrt
