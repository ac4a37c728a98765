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

#include "rrt/triggers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "rrt/error.hpp"
#include "rrt/util.hpp"

namespace rrt {
namespace {

constexpr std::array<std::string_view, kNumTasks> kTaskNames = {"rrt", "dialysis", "transplant"};
constexpr std::array<std::string_view, 3> kSplitNames = {"train", "valid", "test"};
constexpr std::array<std::pair<Ineligibility, std::string_view>, 5> kReasonNames = {{
    {Ineligibility::under_65, "under_65"},
    {Ineligibility::no_ckd_dx, "no_ckd_dx"},
    {Ineligibility::rrt_already_initiated, "rrt_already_initiated"},
    {Ineligibility::insufficient_history, "insufficient_history"},
    {Ineligibility::no_recent_claim, "no_recent_claim"},
}};

// Per-timeline facts that make each eligibility check O(log n).
struct EligibilityContext {
  std::optional<Date> first_ckd;
  std::optional<Date> first_rrt;
  std::vector<Date> claim_dates;

  EligibilityContext(const ClaimTimeline& timeline, const ClinicalCodeSets& sets)
      : first_ckd(first_occurrence(timeline, sets.ckd)), first_rrt(first_occurrence(timeline, sets.rrt)) {
    claim_dates.reserve(timeline.claims.size());
    for (const auto& c : timeline.claims) claim_dates.push_back(c.service_date);
  }

  ReasonSet check(const Beneficiary& b, Date t, const EligibilityRules& rules) const {
    ReasonSet r;
    if (b.age_at(t) < rules.min_age) r.add(Ineligibility::under_65);
    if (!first_ckd || *first_ckd >= t) r.add(Ineligibility::no_ckd_dx);
    // An event dated on the trigger day counts as already initiated.
    if (first_rrt && *first_rrt <= t) r.add(Ineligibility::rrt_already_initiated);
    if (claim_dates.empty() || claim_dates.front() > t.plus_days(-rules.history_days))
      r.add(Ineligibility::insufficient_history);
    auto it = std::lower_bound(claim_dates.begin(), claim_dates.end(), t.plus_days(-rules.recent_days));
    if (it == claim_dates.end() || *it >= t) r.add(Ineligibility::no_recent_claim);
    return r;
  }
};

}  // namespace

std::string_view to_string(Task task) { return kTaskNames[static_cast<std::size_t>(task)]; }

std::optional<Task> parse_task(std::string_view s) {
  for (std::size_t i = 0; i < kNumTasks; ++i)
    if (kTaskNames[i] == s) return static_cast<Task>(i);
  return std::nullopt;
}

const CodeSet& task_codes(const ClinicalCodeSets& sets, Task task) {
  switch (task) {
    case Task::rrt:
      return sets.rrt;
    case Task::dialysis:
      return sets.dialysis;
    case Task::transplant:
      return sets.transplant;
  }
  return sets.rrt;
}

Horizons::Horizons(std::vector<int> overlapping_ends) : ends_(std::move(overlapping_ends)) {
  if (ends_.empty()) throw ConfigError("horizons: at least one horizon required");
  if (ends_.size() > 254) throw ConfigError("horizons: too many horizons");
  int prev = 0;
  for (int e : ends_) {
    if (e <= prev) throw ConfigError("horizons: ends must be positive and strictly increasing");
    prev = e;
  }
}

std::size_t Horizons::window_of(int days) const {
  if (days <= 0) return ends_.size();
  auto it = std::lower_bound(ends_.begin(), ends_.end(), days);
  return static_cast<std::size_t>(it - ends_.begin());
}

std::string ReasonSet::str() const {
  if (empty()) return "-";
  std::string out;
  for (auto [r, name] : kReasonNames) {
    if (!has(r)) continue;
    if (!out.empty()) out += ',';
    out += name;
  }
  return out;
}

std::optional<ReasonSet> ReasonSet::parse(std::string_view s) {
  ReasonSet out;
  if (s == "-") return out;
  for (auto part : split(s, ',')) {
    bool found = false;
    for (auto [r, name] : kReasonNames) {
      if (name == part) {
        out.add(r);
        found = true;
      }
    }
    if (!found) return std::nullopt;
  }
  return out;
}

std::vector<std::uint8_t> DisjointLabel::one_hot() const {
  std::vector<std::uint8_t> v(num_classes, 0);
  v[cls] = 1;
  return v;
}

std::string DisjointLabel::digits() const {
  std::string s(num_classes, '0');
  s[cls] = '1';
  return s;
}

std::optional<DisjointLabel> DisjointLabel::parse_digits(std::string_view s) {
  if (s.size() < 2 || s.size() > 255) return std::nullopt;
  if (std::count(s.begin(), s.end(), '1') != 1) return std::nullopt;
  if (std::count(s.begin(), s.end(), '0') != static_cast<std::ptrdiff_t>(s.size() - 1)) return std::nullopt;
  return DisjointLabel{static_cast<std::uint8_t>(s.find('1')), static_cast<std::uint8_t>(s.size())};
}

std::string Trigger::key() const { return beneficiary_id + "|" + trigger_date.iso(); }

ReasonSet check_eligibility(const ClaimTimeline& timeline, Date t, const ClinicalCodeSets& sets,
                            const EligibilityRules& rules) {
  return EligibilityContext(timeline, sets).check(timeline.beneficiary, t, rules);
}

DisjointLabel label_trigger(const ClaimTimeline& timeline, Date t, const CodeSet& task, const Horizons& horizons) {
  const auto k = static_cast<std::uint8_t>(horizons.num_windows());
  DisjointLabel label{k, static_cast<std::uint8_t>(k + 1)};
  auto it = std::upper_bound(timeline.claims.begin(), timeline.claims.end(), t,
                             [](Date d, const Claim& c) { return d < c.service_date; });
  for (; it != timeline.claims.end(); ++it) {
    if (it->service_date - t > horizons.longest()) break;
    if (task.matches(*it)) {
      label.cls = static_cast<std::uint8_t>(horizons.window_of(it->service_date - t));
      break;
    }
  }
  return label;
}

void check_censoring_buffer(const DateRange& range, Date dataset_end, const Horizons& horizons) {
  if (range.end < range.start) throw ConfigError("trigger range end precedes its start");
  if (range.end.plus_days(horizons.longest()) > dataset_end)
    throw ConfigError("trigger range ends " + range.end.iso() + ", leaving less than " +
                      std::to_string(horizons.longest()) + " days before dataset end " + dataset_end.iso());
}

std::vector<Date> first_of_months(const DateRange& range) {
  std::vector<Date> out;
  Date d = range.start.is_first_of_month() ? range.start : range.start.first_of_next_month();
  for (; d <= range.end; d = d.first_of_next_month()) out.push_back(d);
  return out;
}

std::vector<Trigger> enumerate_triggers(const ClaimTimeline& timeline, const DateRange& range, Date dataset_end,
                                        const ClinicalCodeSets& sets, const Horizons& horizons,
                                        const EligibilityRules& rules) {
  check_censoring_buffer(range, dataset_end, horizons);
  const EligibilityContext ctx(timeline, sets);
  std::vector<Trigger> out;
  for (Date t : first_of_months(range)) {
    Trigger trig;
    trig.beneficiary_id = timeline.id();
    trig.trigger_date = t;
    trig.reasons = ctx.check(timeline.beneficiary, t, rules);
    if (trig.eligible()) {
      for (Task task : kAllTasks)
        trig.labels[static_cast<std::size_t>(task)] = label_trigger(timeline, t, task_codes(sets, task), horizons);
    }
    out.push_back(std::move(trig));
  }
  return out;
}

std::string_view to_string(SplitRole role) { return kSplitNames[static_cast<std::size_t>(role)]; }

std::optional<SplitRole> parse_split_role(std::string_view s) {
  for (std::size_t i = 0; i < kSplitNames.size(); ++i)
    if (kSplitNames[i] == s) return static_cast<SplitRole>(i);
  return std::nullopt;
}

Split split_beneficiaries(std::span<const std::string> ids, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be non-negative and sum to 1");

  std::vector<std::pair<std::uint64_t, const std::string*>> keyed;
  keyed.reserve(ids.size());
  for (const auto& id : ids) keyed.emplace_back(splitmix64(fnv1a64(id, splitmix64(seed))), &id);
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : *a.second < *b.second;
  });

  const auto n = static_cast<double>(keyed.size());
  const auto cut1 = static_cast<std::size_t>(std::llround(ratios.train * n));
  const auto cut2 = std::max(cut1, static_cast<std::size_t>(std::llround((ratios.train + ratios.valid) * n)));
  Split s;
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    auto& dst = i < cut1 ? s.train : (i < cut2 ? s.valid : s.test);
    dst.push_back(*keyed[i].second);
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.valid.begin(), s.valid.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void append_trigger_record(std::string& out, const TriggerRecord& rec) {
  const auto& t = rec.trigger;
  out += t.beneficiary_id;
  out += '\t';
  out += t.trigger_date.iso();
  out += t.eligible() ? "\t1\t" : "\t0\t";
  out += t.reasons.str();
  out += '\t';
  out += to_string(rec.split);
  for (const auto& label : t.labels) {
    out += '\t';
    out += label ? label->digits() : "-";
  }
  out += '\n';
}

std::vector<TriggerRecord> parse_trigger_table(std::string_view text, bool eligible_only) {
  std::vector<TriggerRecord> out;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, '\t');
    if (f.size() != 5 + kNumTasks) throw ParseError(line_no, "trigger record needs 8 fields");
    TriggerRecord rec;
    rec.trigger.beneficiary_id = std::string(f[0]);
    auto date = Date::parse(f[1]);
    if (!date || !date->is_first_of_month()) throw ParseError(line_no, "invalid trigger_date");
    rec.trigger.trigger_date = *date;
    auto reasons = ReasonSet::parse(f[3]);
    if (!reasons) throw ParseError(line_no, "invalid reasons field");
    rec.trigger.reasons = *reasons;
    if ((f[2] == "1") != reasons->empty() || (f[2] != "0" && f[2] != "1"))
      throw ParseError(line_no, "eligible flag disagrees with reasons");
    auto role = parse_split_role(f[4]);
    if (!role) throw ParseError(line_no, "invalid split field");
    rec.split = *role;
    for (std::size_t k = 0; k < kNumTasks; ++k) {
      if (f[5 + k] == "-") continue;
      auto label = DisjointLabel::parse_digits(f[5 + k]);
      if (!label) throw ParseError(line_no, "invalid label vector");
      rec.trigger.labels[k] = *label;
    }
    if (rec.trigger.eligible() &&
        std::any_of(rec.trigger.labels.begin(), rec.trigger.labels.end(), [](const auto& l) { return !l; }))
      throw ParseError(line_no, "eligible trigger without labels");
    if (eligible_only && !rec.trigger.eligible()) continue;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace rrt
