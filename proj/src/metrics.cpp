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

#include "rrt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <json.hpp>

#include "rrt/error.hpp"

namespace rrt {
namespace {

struct ClassCounts {
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
};

ClassCounts count_classes(std::span<const ScoredExample> set) {
  ClassCounts c;
  for (const auto& e : set) {
    if (std::isnan(e.score)) throw DataError("score is NaN");
    (e.label ? c.pos : c.neg) += 1;
  }
  return c;
}

std::vector<ScoredExample> sorted_descending(std::span<const ScoredExample> set) {
  std::vector<ScoredExample> v(set.begin(), set.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return v;
}

// Walks distinct scores from high to low, calling fn(threshold, tp, fp)
// with the cumulative counts for "score >= threshold".
template <class Fn>
void sweep_thresholds(const std::vector<ScoredExample>& desc, Fn&& fn) {
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < desc.size();) {
    const double t = desc[i].score;
    for (; i < desc.size() && desc[i].score == t; ++i) (desc[i].label ? tp : fp) += 1;
    fn(t, tp, fp);
  }
}

OperatingPoint make_point(double threshold, std::uint64_t tp, std::uint64_t fp, const ClassCounts& c) {
  OperatingPoint op;
  op.threshold = threshold;
  op.tp = tp;
  op.fp = fp;
  op.fn = c.pos - tp;
  op.tn = c.neg - fp;
  op.sensitivity = c.pos ? static_cast<double>(tp) / static_cast<double>(c.pos) : 0.0;
  op.specificity = c.neg ? static_cast<double>(op.tn) / static_cast<double>(c.neg) : 0.0;
  return op;
}

}  // namespace

double roc_auc(std::span<const ScoredExample> set) {
  const auto c = count_classes(set);
  if (c.pos == 0 || c.neg == 0) throw DataError("undefined metric: ROC-AUC needs both classes");
  std::vector<ScoredExample> v(set.begin(), set.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  // Twice the U statistic, kept integral so tie handling is exact.
  unsigned __int128 twice_u = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < v.size();) {
    const double s = v[i].score;
    std::uint64_t p = 0, n = 0;
    for (; i < v.size() && v[i].score == s; ++i) (v[i].label ? p : n) += 1;
    twice_u += static_cast<unsigned __int128>(p) * (2 * neg_below + n);
    neg_below += n;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

double pr_auc(std::span<const ScoredExample> set) {
  const auto c = count_classes(set);
  if (c.pos == 0) throw DataError("undefined metric: PR-AUC needs at least one positive");
  double ap = 0.0;
  std::uint64_t prev_tp = 0;
  sweep_thresholds(sorted_descending(set), [&](double, std::uint64_t tp, std::uint64_t fp) {
    if (tp == prev_tp) return;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += static_cast<double>(tp - prev_tp) / static_cast<double>(c.pos) * precision;
    prev_tp = tp;
  });
  return ap;
}

OperatingPoint operating_point_at(std::span<const ScoredExample> set, double threshold) {
  const auto c = count_classes(set);
  std::uint64_t tp = 0, fp = 0;
  for (const auto& e : set)
    if (e.score >= threshold) (e.label ? tp : fp) += 1;
  return make_point(threshold, tp, fp, c);
}

OperatingPoint gmean_operating_point(std::span<const ScoredExample> set) {
  const auto c = count_classes(set);
  if (c.pos == 0 || c.neg == 0) throw DataError("undefined metric: G-mean needs both classes");
  // sqrt(sensitivity * specificity) is monotone in tp * tn for fixed class totals.
  unsigned __int128 best = 0;
  bool have = false;
  OperatingPoint out;
  sweep_thresholds(sorted_descending(set), [&](double t, std::uint64_t tp, std::uint64_t fp) {
    const auto product = static_cast<unsigned __int128>(tp) * (c.neg - fp);
    if (!have || product >= best) {
      best = product;
      out = make_point(t, tp, fp, c);
      have = true;
    }
  });
  return out;
}

OperatingPoint threshold_at_sensitivity(std::span<const ScoredExample> set, double target) {
  const auto c = count_classes(set);
  if (c.pos == 0) throw DataError("sensitivity target needs at least one positive");
  const auto needed = static_cast<std::uint64_t>(
      std::max(0.0, std::ceil(target * static_cast<double>(c.pos) - 1e-9)));
  std::optional<OperatingPoint> out;
  sweep_thresholds(sorted_descending(set), [&](double t, std::uint64_t tp, std::uint64_t fp) {
    if (!out && tp >= needed) out = make_point(t, tp, fp, c);
  });
  return *out;
}

PrevalenceTable prevalence_table(std::span<const Trigger> triggers, const Horizons& horizons) {
  PrevalenceTable table;
  for (auto& p : table.positives) p.assign(horizons.num_windows(), 0);
  for (const auto& t : triggers) {
    if (!t.eligible()) continue;
    ++table.eligible;
    for (std::size_t k = 0; k < kNumTasks; ++k)
      for (std::size_t h = 0; h < horizons.num_windows(); ++h)
        if (t.labels[k]->positive_within(h)) ++table.positives[k][h];
  }
  for (std::size_t k = 0; k < kNumTasks; ++k) {
    table.prevalence[k].resize(horizons.num_windows());
    for (std::size_t h = 0; h < horizons.num_windows(); ++h)
      table.prevalence[k][h] =
          table.eligible ? static_cast<double>(table.positives[k][h]) / static_cast<double>(table.eligible) : 0.0;
  }
  return table;
}

std::vector<ImpactRow> impact_analysis(std::span<const ScoredTrigger> scored, const Dataset& dataset,
                                       const ClinicalCodeSets& sets, std::span<const double> targets,
                                       const Horizons& horizons) {
  const std::size_t last = horizons.num_windows() - 1;
  std::vector<ScoredExample> set;
  set.reserve(scored.size());
  for (const auto& s : scored)
    set.push_back({s.score, static_cast<std::uint8_t>(s.trigger->label(Task::dialysis).positive_within(last))});

  std::vector<ImpactRow> rows;
  for (double target : targets) {
    ImpactRow row;
    row.target_sensitivity = target;
    row.point = threshold_at_sensitivity(set, target);
    // Earliest correctly flagged trigger per beneficiary.
    std::map<std::string, Date> flagged;
    for (std::size_t i = 0; i < scored.size(); ++i) {
      if (!set[i].label || set[i].score < row.point.threshold) continue;
      const auto& trig = *scored[i].trigger;
      auto [it, inserted] = flagged.emplace(trig.beneficiary_id, trig.trigger_date);
      if (!inserted && trig.trigger_date < it->second) it->second = trig.trigger_date;
    }
    if (flagged.empty()) throw DataError("impact analysis: no correctly flagged dialysis beneficiaries");
    for (const auto& [id, trigger_date] : flagged) {
      const auto* timeline = dataset.find(id);
      if (!timeline) throw DataError("impact analysis: beneficiary '" + id + "' missing from claims");
      const auto onset = first_occurrence(*timeline, sets.dialysis);
      if (!onset || *onset <= trigger_date)
        throw DataError("impact analysis: beneficiary '" + id + "' has no dialysis onset after its trigger");
      bool prior_access = false;
      for (const auto& c : timeline->claims) {
        if (c.service_date >= *onset) break;
        if (sets.access_creation.matches(c)) {
          prior_access = true;
          break;
        }
      }
      if (!prior_access) ++row.without_prior_access;
    }
    row.flagged_beneficiaries = flagged.size();
    row.percent_without_access =
        100.0 * static_cast<double>(row.without_prior_access) / static_cast<double>(row.flagged_beneficiaries);
    rows.push_back(row);
  }
  return rows;
}

TaskMetrics evaluate_task(Task task, std::span<const Trigger* const> triggers,
                          std::span<const std::vector<double>> overlapping, const Horizons& horizons,
                          std::span<const double> targets) {
  if (triggers.size() != overlapping.size()) throw DataError("evaluate: triggers and predictions differ in length");
  TaskMetrics out;
  out.task = task;
  std::vector<ScoredExample> set(triggers.size());
  for (std::size_t h = 0; h < horizons.num_windows(); ++h) {
    HorizonMetrics m;
    m.horizon_days = horizons.window_end(h);
    m.total = triggers.size();
    for (std::size_t i = 0; i < triggers.size(); ++i) {
      if (overlapping[i].size() != horizons.num_windows()) throw DataError("evaluate: prediction width mismatch");
      set[i] = {overlapping[i][h], static_cast<std::uint8_t>(triggers[i]->label(task).positive_within(h))};
      m.positives += set[i].label;
    }
    if (m.positives > 0) m.pr_auc = pr_auc(set);
    if (m.positives > 0 && m.positives < m.total) {
      m.roc_auc = roc_auc(set);
      m.gmean = gmean_operating_point(set);
    }
    if (h + 1 == horizons.num_windows() && m.positives > 0)
      for (double t : targets) out.at_sensitivity.push_back(threshold_at_sensitivity(set, t));
    out.horizons.push_back(m);
  }
  return out;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string opt(const std::optional<double>& v, int digits) { return v ? fixed(*v, digits) : "n/a"; }

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

}  // namespace

std::string EvaluationReport::to_text() const {
  std::string out;
  out += "Label prevalence (eligible triggers: " + std::to_string(prevalence.eligible) + ")\n";
  out += pad("horizon", 10);
  for (Task t : kAllTasks) out += pad(std::string(to_string(t)), 14);
  out += '\n';
  for (std::size_t h = 0; h < horizon_days.size(); ++h) {
    out += pad(std::to_string(horizon_days[h]) + "d", 10);
    for (std::size_t k = 0; k < kNumTasks; ++k)
      out += pad(prevalence.prevalence[k].empty() ? "n/a" : fixed(100.0 * prevalence.prevalence[k][h], 3) + "%", 14);
    out += '\n';
  }

  out += "\nTest performance (sensitivity/specificity at the G-mean threshold)\n";
  for (const auto& tm : tasks) {
    out += pad(std::string(to_string(tm.task)), 12) + pad("metric", 13);
    for (const auto& h : tm.horizons) out += pad(std::to_string(h.horizon_days) + "d", 10);
    out += '\n';
    auto line = [&](const char* name, auto get) {
      out += pad("", 12) + pad(name, 13);
      for (const auto& h : tm.horizons) out += pad(get(h), 10);
      out += '\n';
    };
    line("ROC-AUC", [](const HorizonMetrics& h) { return opt(h.roc_auc, 3); });
    line("PR-AUC", [](const HorizonMetrics& h) { return opt(h.pr_auc, 3); });
    line("Sensitivity", [](const HorizonMetrics& h) { return h.gmean ? fixed(h.gmean->sensitivity, 3) : "n/a"; });
    line("Specificity", [](const HorizonMetrics& h) { return h.gmean ? fixed(h.gmean->specificity, 3) : "n/a"; });
    line("Positives", [](const HorizonMetrics& h) { return std::to_string(h.positives); });
  }

  out += "\nDialysis beneficiaries flagged at the longest horizon without prior access creation\n";
  if (impact.empty()) {
    out += "  " + (impact_note.empty() ? std::string("not computed") : impact_note) + "\n";
  } else {
    out += pad("Sensitivity", 13) + pad("Specificity", 13) + pad("% patients", 12) + pad("flagged", 10) + '\n';
    for (const auto& r : impact)
      out += pad(fixed(100.0 * r.target_sensitivity, 0) + "%", 13) + pad(fixed(100.0 * r.point.specificity, 2) + "%", 13) +
             pad(fixed(r.percent_without_access, 2) + "%", 12) + pad(std::to_string(r.flagged_beneficiaries), 10) +
             '\n';
  }
  return out;
}

std::string EvaluationReport::to_json() const {
  using nlohmann::ordered_json;
  auto point = [](const OperatingPoint& p) {
    return ordered_json{{"threshold", p.threshold}, {"sensitivity", p.sensitivity}, {"specificity", p.specificity},
                        {"tp", p.tp}, {"fp", p.fp}, {"tn", p.tn}, {"fn", p.fn}};
  };
  ordered_json j;
  j["horizons"] = horizon_days;
  ordered_json prev;
  prev["eligible_triggers"] = prevalence.eligible;
  for (std::size_t k = 0; k < kNumTasks; ++k) {
    ordered_json row;
    for (std::size_t h = 0; h < horizon_days.size() && h < prevalence.prevalence[k].size(); ++h)
      row[std::to_string(horizon_days[h])] = prevalence.prevalence[k][h];
    prev[std::string(to_string(static_cast<Task>(k)))] = row;
  }
  j["prevalence"] = prev;
  ordered_json perf = ordered_json::object();
  for (const auto& tm : tasks) {
    ordered_json t;
    for (const auto& h : tm.horizons) {
      ordered_json m;
      m["positives"] = h.positives;
      m["total"] = h.total;
      m["roc_auc"] = h.roc_auc ? ordered_json(*h.roc_auc) : ordered_json(nullptr);
      m["pr_auc"] = h.pr_auc ? ordered_json(*h.pr_auc) : ordered_json(nullptr);
      m["gmean"] = h.gmean ? point(*h.gmean) : ordered_json(nullptr);
      t[std::to_string(h.horizon_days)] = m;
    }
    ordered_json targets = ordered_json::array();
    for (const auto& p : tm.at_sensitivity) targets.push_back(point(p));
    t["at_target_sensitivity"] = targets;
    perf[std::string(to_string(tm.task))] = t;
  }
  j["performance"] = perf;
  j["sensitivity_targets"] = sensitivity_targets;
  ordered_json impact_rows = ordered_json::array();
  for (const auto& r : impact)
    impact_rows.push_back({{"target_sensitivity", r.target_sensitivity},
                           {"operating_point", point(r.point)},
                           {"flagged_beneficiaries", r.flagged_beneficiaries},
                           {"without_prior_access", r.without_prior_access},
                           {"percent_without_access", r.percent_without_access}});
  j["impact"] = impact_rows;
  if (!impact_note.empty()) j["impact_note"] = impact_note;
  return j.dump(2) + "\n";
}

}  // namespace rrt
