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

// Independent reference implementations used by the unit and acceptance
// tests. They favour obviousness over speed and share no code with the
// library beyond its data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rrt/claims.hpp"
#include "rrt/features.hpp"
#include "rrt/metrics.hpp"
#include "rrt/triggers.hpp"

namespace rrt::oracle {

/// Day-by-day scan of offsets 1..366; returns the disjoint class index.
inline std::size_t label(const ClaimTimeline& tl, Date t, const CodeSet& task, const std::vector<int>& ends) {
  for (int d = 1; d <= 366; ++d) {
    const Date day = t.plus_days(d);
    bool hit = false;
    for (const auto& c : tl.claims)
      if (c.service_date == day)
        for (const auto& it : c.items) hit = hit || task.contains(it);
    if (!hit) continue;
    for (std::size_t k = 0; k < ends.size(); ++k) {
      const int lo = k == 0 ? 0 : ends[k - 1];
      if (d > lo && d <= ends[k]) return k;
    }
    return ends.size();
  }
  return ends.size();
}

/// Each criterion checked by its own linear scan.
inline std::uint8_t eligibility_bits(const ClaimTimeline& tl, Date t, const ClinicalCodeSets& sets) {
  std::uint8_t bits = 0;
  if (t.year() - tl.beneficiary.birth_year < 65) bits |= 1;
  bool ckd = false;
  for (const auto& c : tl.claims)
    if (c.service_date < t)
      for (const auto& it : c.items) ckd = ckd || sets.ckd.contains(it);
  if (!ckd) bits |= 2;
  for (const auto& c : tl.claims)
    if (c.service_date <= t)
      for (const auto& it : c.items)
        if (sets.rrt.contains(it)) bits |= 4;
  bool history = false, recent = false;
  for (const auto& c : tl.claims) {
    if (c.service_date <= t.plus_days(-365)) history = true;
    if (c.service_date >= t.plus_days(-30) && c.service_date < t) recent = true;
  }
  if (!history) bits |= 8;
  if (!recent) bits |= 16;
  return bits;
}

/// O(n^2) Mann-Whitney: ties count one half. Returned as twice-U over
/// (P * N) pairs so integer comparisons stay exact.
inline double roc_auc(const std::vector<ScoredExample>& set) {
  std::uint64_t twice_u = 0, pos = 0, neg = 0;
  for (const auto& a : set) (a.label ? pos : neg)++;
  for (const auto& a : set)
    if (a.label)
      for (const auto& b : set)
        if (!b.label) twice_u += a.score > b.score ? 2 : (a.score == b.score ? 1 : 0);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

struct GmeanPoint {
  double threshold;
  std::uint64_t tp, fp, tn, fn;
};

/// Exhaustive scan over every distinct score as a ">= threshold" cut.
/// Maximises tp*tn (equivalently sensitivity * specificity); ties go to the lowest threshold.
inline GmeanPoint gmean(const std::vector<ScoredExample>& set) {
  std::set<double> thresholds;
  for (const auto& s : set) thresholds.insert(s.score);
  GmeanPoint best{0, 0, 0, 0, 0};
  bool have = false;
  // Class totals are fixed, so sensitivity * specificity orders like tp * tn; compared exactly.
  unsigned __int128 best_val = 0;
  for (double th : thresholds) {
    GmeanPoint p{th, 0, 0, 0, 0};
    for (const auto& s : set) {
      const bool flag = s.score >= th;
      if (s.label) (flag ? p.tp : p.fn)++;
      else (flag ? p.fp : p.tn)++;
    }
    const auto val = static_cast<unsigned __int128>(p.tp) * p.tn;
    if (!have || val > best_val) {
      best = p;
      best_val = val;
      have = true;
    }
  }
  return best;
}

/// Average precision by direct definition: mean over positives of the
/// precision at that positive's score (all examples scoring >= it).
inline double average_precision(const std::vector<ScoredExample>& set) {
  double total = 0;
  std::uint64_t pos = 0;
  for (const auto& a : set) {
    if (!a.label) continue;
    ++pos;
    std::uint64_t above = 0, above_pos = 0;
    for (const auto& b : set)
      if (b.score >= a.score) ++above, above_pos += b.label;
    total += static_cast<double>(above_pos) / static_cast<double>(above);
  }
  return total / static_cast<double>(pos);
}

/// Feature indices by direct construction: one key string per (item, bucket)
/// for claims with 0 < offset < last edge, plus the demographic keys.
inline std::vector<std::uint32_t> features(const ClaimTimeline& tl, Date t, const Vocabulary& vocab) {
  static const char* kAge[] = {"lt65", "65-75", "75-85", "85-95", "95+"};
  const int age = t.year() - tl.beneficiary.birth_year;
  const int age_idx = age < 65 ? 0 : std::min(4, 1 + (age - 65) / 10);
  std::set<std::string> keys = {"demo:sex=" + std::string(to_string(tl.beneficiary.sex)),
                                "demo:race=" + std::string(to_string(tl.beneficiary.race)),
                                std::string("demo:age=") + kAge[age_idx]};
  const auto edges = vocab.buckets().edges();
  for (const auto& c : tl.claims) {
    const int offset = t.days() - c.service_date.days();
    if (offset <= 0) continue;
    for (std::size_t b = 0; b + 1 < edges.size(); ++b)
      if (offset >= edges[b] && offset < edges[b + 1])
        for (const auto& it : c.items) keys.insert(std::string(to_string(it.system)) + ":" + it.code + "@" + std::to_string(b));
  }
  std::vector<std::uint32_t> out;
  for (const auto& k : keys)
    if (auto i = vocab.find(k)) out.push_back(*i);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace rrt::oracle
