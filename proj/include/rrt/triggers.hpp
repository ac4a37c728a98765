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
#include <string_view>
#include <vector>

#include "rrt/claims.hpp"

namespace rrt {

enum class Task : std::uint8_t { rrt, dialysis, transplant };
inline constexpr std::size_t kNumTasks = 3;
inline constexpr std::array<Task, kNumTasks> kAllTasks = {Task::rrt, Task::dialysis, Task::transplant};

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view s);
const CodeSet& task_codes(const ClinicalCodeSets& sets, Task task);

/// Overlapping prediction horizons (days). Disjoint window k covers day
/// offsets (end[k-1], end[k]], with end[-1] = 0; together they partition
/// (0, end[K-1]].
class Horizons {
 public:
  Horizons() : Horizons(std::vector<int>{30, 60, 90, 180, 365}) {}
  /// Throws ConfigError unless ends are positive and strictly increasing.
  explicit Horizons(std::vector<int> overlapping_ends);

  std::size_t num_windows() const { return ends_.size(); }
  std::size_t num_classes() const { return ends_.size() + 1; }
  std::span<const int> overlapping() const { return ends_; }
  int window_start(std::size_t k) const { return k == 0 ? 0 : ends_[k - 1]; }
  int window_end(std::size_t k) const { return ends_[k]; }
  int longest() const { return ends_.back(); }

  /// Disjoint window holding offset `days`, or num_windows() (the explicit
  /// negative class) when the offset is outside (0, longest()].
  std::size_t window_of(int days) const;

  bool operator==(const Horizons&) const = default;

 private:
  std::vector<int> ends_;
};

enum class Ineligibility : std::uint8_t {
  under_65 = 1,
  no_ckd_dx = 2,
  rrt_already_initiated = 4,
  insufficient_history = 8,
  no_recent_claim = 16,
};

class ReasonSet {
 public:
  constexpr ReasonSet() = default;
  constexpr explicit ReasonSet(std::uint8_t bits) : bits_(bits) {}

  void add(Ineligibility r) { bits_ |= static_cast<std::uint8_t>(r); }
  bool has(Ineligibility r) const { return (bits_ & static_cast<std::uint8_t>(r)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::uint8_t bits() const { return bits_; }

  /// Comma-separated reason names in declaration order, "-" when empty.
  std::string str() const;
  static std::optional<ReasonSet> parse(std::string_view s);

  bool operator==(const ReasonSet&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

/// One-hot target over the disjoint windows plus a trailing negative class.
struct DisjointLabel {
  std::uint8_t cls = 0;
  std::uint8_t num_classes = 6;

  std::vector<std::uint8_t> one_hot() const;
  bool is_negative() const { return cls + 1 == num_classes; }
  /// Overlapping label for horizon i: event in any of disjoint windows 0..i.
  bool positive_within(std::size_t horizon) const { return cls <= horizon && !is_negative(); }
  /// e.g. "010000"
  std::string digits() const;
  static std::optional<DisjointLabel> parse_digits(std::string_view s);

  bool operator==(const DisjointLabel&) const = default;
};

struct EligibilityRules {
  int min_age = 65;
  int history_days = 365;
  int recent_days = 30;
};

struct Trigger {
  std::string beneficiary_id;
  Date trigger_date;
  ReasonSet reasons;
  /// Indexed by Task; present for eligible triggers only.
  std::array<std::optional<DisjointLabel>, kNumTasks> labels;

  bool eligible() const { return reasons.empty(); }
  const DisjointLabel& label(Task task) const { return *labels[static_cast<std::size_t>(task)]; }
  /// "beneficiary_id|YYYY-MM-DD"
  std::string key() const;
};

ReasonSet check_eligibility(const ClaimTimeline& timeline, Date t, const ClinicalCodeSets& sets,
                            const EligibilityRules& rules = {});

/// Class of the first `task` event strictly after t. Only meaningful for an
/// eligible trigger.
DisjointLabel label_trigger(const ClaimTimeline& timeline, Date t, const CodeSet& task,
                            const Horizons& horizons = {});

/// Throws ConfigError if range.end + longest horizon exceeds dataset_end.
void check_censoring_buffer(const DateRange& trigger_range, Date dataset_end, const Horizons& horizons);

/// One trigger per first-of-month in `range`, with eligibility and (for
/// eligible triggers) labels for every task.
std::vector<Trigger> enumerate_triggers(const ClaimTimeline& timeline, const DateRange& range, Date dataset_end,
                                        const ClinicalCodeSets& sets, const Horizons& horizons = {},
                                        const EligibilityRules& rules = {});

std::vector<Date> first_of_months(const DateRange& range);

enum class SplitRole : std::uint8_t { train, valid, test };
std::string_view to_string(SplitRole role);
std::optional<SplitRole> parse_split_role(std::string_view s);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;
};

/// Orders ids by a keyed hash of (seed, id) and cuts the order at the rounded
/// cumulative ratios. Each output list is sorted by id.
Split split_beneficiaries(std::span<const std::string> ids, const SplitRatios& ratios, std::uint64_t seed);

/// One row of the persisted trigger table.
struct TriggerRecord {
  Trigger trigger;
  SplitRole split = SplitRole::train;
};

/// Row format (TAB-separated):
///   beneficiary_id  trigger_date  eligible(0|1)  reasons  split  rrt  dialysis  transplant
/// Labels are digit strings ("010000") or "-" for ineligible triggers.
void append_trigger_record(std::string& out, const TriggerRecord& record);
/// Parses a trigger table, skipping '#' lines. With `eligible_only`, ineligible
/// rows are validated but dropped.
std::vector<TriggerRecord> parse_trigger_table(std::string_view text, bool eligible_only);

}  // namespace rrt
