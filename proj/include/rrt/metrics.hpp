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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rrt/claims.hpp"
#include "rrt/triggers.hpp"

namespace rrt {

struct ScoredExample {
  double score = 0;
  std::uint8_t label = 0;
};

/// Confusion counts at a threshold; score >= threshold is a positive call.
struct OperatingPoint {
  double threshold = 0;
  double sensitivity = 0;
  double specificity = 0;
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Mann-Whitney statistic with ties counted as one half. O(n log n).
/// Throws DataError unless both classes are present.
double roc_auc(std::span<const ScoredExample> set);

/// Average precision: sum over distinct thresholds of
/// (recall increment) x (precision). Throws DataError with zero positives.
double pr_auc(std::span<const ScoredExample> set);

OperatingPoint operating_point_at(std::span<const ScoredExample> set, double threshold);

/// Distinct score maximizing sqrt(sensitivity * specificity); ties go to the
/// lowest threshold.
OperatingPoint gmean_operating_point(std::span<const ScoredExample> set);

/// Highest distinct score whose sensitivity reaches `target`.
OperatingPoint threshold_at_sensitivity(std::span<const ScoredExample> set, double target);

/// Label prevalence of eligible triggers per task and overlapping horizon.
struct PrevalenceTable {
  std::size_t eligible = 0;
  std::array<std::vector<std::uint64_t>, kNumTasks> positives;
  std::array<std::vector<double>, kNumTasks> prevalence;
};
PrevalenceTable prevalence_table(std::span<const Trigger> triggers, const Horizons& horizons = {});

/// A scored eligible trigger for the longest-horizon dialysis task.
struct ScoredTrigger {
  const Trigger* trigger = nullptr;
  double score = 0;
};

struct ImpactRow {
  double target_sensitivity = 0;
  OperatingPoint point;
  std::uint64_t flagged_beneficiaries = 0;
  std::uint64_t without_prior_access = 0;
  double percent_without_access = 0;
};

/// For each target sensitivity: pick the operating point on the longest
/// dialysis horizon, take beneficiaries with a correctly flagged trigger
/// (earliest qualifying one), and report the percentage with no
/// access-creation code strictly before their dialysis onset. Throws
/// DataError if no beneficiary is flagged correctly.
std::vector<ImpactRow> impact_analysis(std::span<const ScoredTrigger> scored, const Dataset& dataset,
                                       const ClinicalCodeSets& sets, std::span<const double> targets,
                                       const Horizons& horizons = {});

struct HorizonMetrics {
  int horizon_days = 0;
  std::uint64_t positives = 0;
  std::uint64_t total = 0;
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
  std::optional<OperatingPoint> gmean;
};

struct TaskMetrics {
  Task task = Task::rrt;
  std::vector<HorizonMetrics> horizons;
  std::vector<OperatingPoint> at_sensitivity;  // longest horizon, one per target
};

struct EvaluationReport {
  std::vector<int> horizon_days;
  std::vector<double> sensitivity_targets;
  PrevalenceTable prevalence;     // all eligible triggers
  std::vector<TaskMetrics> tasks;  // test split
  std::vector<ImpactRow> impact;   // empty when not computed
  std::string impact_note;

  std::string to_text() const;
  std::string to_json() const;
};

/// Metrics for one task: per horizon ROC-AUC, PR-AUC, G-mean point, and the
/// sensitivity-targeted points at the longest horizon. `overlapping[i]` holds
/// the overlapping-window probabilities for `triggers[i]`. Metrics that are
/// undefined on the given set are left empty.
TaskMetrics evaluate_task(Task task, std::span<const Trigger* const> triggers,
                          std::span<const std::vector<double>> overlapping, const Horizons& horizons,
                          std::span<const double> targets);

}  // namespace rrt
