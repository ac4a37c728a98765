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

#include "rrt/features.hpp"

#include <algorithm>
#include <charconv>
#include <map>

#include "rrt/error.hpp"
#include "rrt/util.hpp"

namespace rrt {
namespace {

constexpr std::array<std::string_view, kNumAgeBuckets> kAgeNames = {"lt65", "65-75", "75-85", "85-95", "95+"};

std::string sex_key(Sex s) { return "demo:sex=" + std::string(to_string(s)); }
std::string race_key(Race r) { return "demo:race=" + std::string(to_string(r)); }
std::string age_key(std::size_t b) { return "demo:age=" + std::string(kAgeNames[b]); }

using BucketCounts = std::unordered_map<CodedItem, std::vector<std::uint32_t>, CodedItemHash>;

// Calls fn(item, bucket) for each coded item in the look-back window,
// possibly repeating keys.
template <class Fn>
void for_each_lookback_item(const ClaimTimeline& timeline, Date t, const TimeBuckets& buckets, Fn&& fn) {
  auto end = std::lower_bound(timeline.claims.begin(), timeline.claims.end(), t,
                              [](const Claim& c, Date d) { return c.service_date < d; });
  for (auto it = end; it != timeline.claims.begin();) {
    --it;
    const int offset = t - it->service_date;
    auto bucket = buckets.bucket_of(offset);
    if (!bucket) {
      if (offset >= buckets.horizon()) break;
      continue;
    }
    for (const auto& item : it->items) fn(item, *bucket);
  }
}

}  // namespace

TimeBuckets::TimeBuckets(std::vector<int> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 2 || edges_.front() < 0) throw ConfigError("time buckets: need at least two edges, first >= 0");
  for (std::size_t i = 1; i < edges_.size(); ++i)
    if (edges_[i] <= edges_[i - 1]) throw ConfigError("time buckets: edges must be strictly increasing");
}

std::optional<std::size_t> TimeBuckets::bucket_of(int offset) const {
  // Offset 0 is the trigger day itself and never contributes.
  if (offset <= 0 || offset < edges_.front() || offset >= edges_.back()) return std::nullopt;
  auto it = std::upper_bound(edges_.begin(), edges_.end(), offset);
  return static_cast<std::size_t>(it - edges_.begin()) - 1;
}

std::size_t age_bucket(int age) {
  if (age < 65) return 0;
  return std::min<std::size_t>(1 + static_cast<std::size_t>((age - 65) / 10), kNumAgeBuckets - 1);
}

std::string_view age_bucket_name(std::size_t bucket) { return kAgeNames[bucket]; }

std::string coded_key(const CodedItem& item, std::size_t bucket) {
  return item.str() + "@" + std::to_string(bucket);
}

Vocabulary Vocabulary::build(std::span<const FeatureSource> sources, const TimeBuckets& buckets,
                             std::size_t min_count, unsigned workers) {
  if (sources.empty()) throw DataError("cannot build a vocabulary from an empty training set");
  const std::size_t chunks = std::max(1u, workers);
  std::vector<BucketCounts> partial(chunks);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t lo = sources.size() * c / chunks, hi = sources.size() * (c + 1) / chunks;
    std::vector<std::pair<const CodedItem*, std::size_t>> seen;
    for (std::size_t i = lo; i < hi; ++i) {
      seen.clear();
      for_each_lookback_item(*sources[i].timeline, sources[i].trigger_date, buckets,
                             [&](const CodedItem& item, std::size_t b) { seen.emplace_back(&item, b); });
      std::sort(seen.begin(), seen.end(), [](const auto& a, const auto& b) {
        return std::tie(*a.first, a.second) < std::tie(*b.first, b.second);
      });
      seen.erase(std::unique(seen.begin(), seen.end(),
                             [](const auto& a, const auto& b) { return *a.first == *b.first && a.second == b.second; }),
                 seen.end());
      for (auto [item, b] : seen) {
        auto& counts = partial[c][*item];
        if (counts.empty()) counts.assign(buckets.size(), 0);
        ++counts[b];
      }
    }
  });

  BucketCounts total;
  for (auto& p : partial) {
    for (auto& [item, counts] : p) {
      auto& dst = total[item];
      if (dst.empty()) dst.assign(buckets.size(), 0);
      for (std::size_t b = 0; b < counts.size(); ++b) dst[b] += counts[b];
    }
  }

  std::vector<std::string> keys;
  for (std::size_t s = 0; s < kNumSexes; ++s) keys.push_back(sex_key(static_cast<Sex>(s)));
  for (std::size_t r = 0; r < kNumRaces; ++r) keys.push_back(race_key(static_cast<Race>(r)));
  for (std::size_t a = 0; a < kNumAgeBuckets; ++a) keys.push_back(age_key(a));
  for (const auto& [item, counts] : total)
    for (std::size_t b = 0; b < counts.size(); ++b)
      if (counts[b] >= std::max<std::size_t>(min_count, 1)) keys.push_back(coded_key(item, b));
  return from_keys(std::move(keys), buckets);
}

Vocabulary Vocabulary::from_keys(std::vector<std::string> keys, TimeBuckets buckets) {
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) throw DataError("vocabulary: duplicate key");
  Vocabulary v;
  v.buckets_ = std::move(buckets);
  v.keys_ = std::move(keys);
  v.by_key_.reserve(v.keys_.size());
  for (std::uint32_t i = 0; i < v.keys_.size(); ++i) {
    const auto& key = v.keys_[i];
    v.by_key_.emplace(key, i);
    if (key.rfind("demo:", 0) == 0) continue;
    const auto at = key.rfind('@');
    const auto colon = key.find(':');
    if (at == std::string::npos || colon == std::string::npos || colon > at)
      throw DataError("vocabulary: malformed key '" + key + "'");
    auto system = parse_code_system(std::string_view(key).substr(0, colon));
    std::size_t bucket = 0;
    auto [p, ec] = std::from_chars(key.data() + at + 1, key.data() + key.size(), bucket);
    if (!system || ec != std::errc() || p != key.data() + key.size() || bucket >= v.buckets_.size())
      throw DataError("vocabulary: malformed key '" + key + "'");
    auto& cols = v.coded_[CodedItem{*system, key.substr(colon + 1, at - colon - 1)}];
    if (cols.empty()) cols.assign(v.buckets_.size(), -1);
    cols[bucket] = static_cast<std::int32_t>(i);
  }
  auto need = [&](const std::string& key) {
    auto it = v.by_key_.find(key);
    if (it == v.by_key_.end()) throw DataError("vocabulary: missing demographic key '" + key + "'");
    return it->second;
  };
  for (std::size_t s = 0; s < kNumSexes; ++s) v.sex_[s] = need(sex_key(static_cast<Sex>(s)));
  for (std::size_t r = 0; r < kNumRaces; ++r) v.race_[r] = need(race_key(static_cast<Race>(r)));
  for (std::size_t a = 0; a < kNumAgeBuckets; ++a) v.age_[a] = need(age_key(a));
  v.hash_ = fnv1a64(v.serialize());
  return v;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::vector<std::string> keys;
  std::optional<TimeBuckets> buckets;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# buckets ", 0) == 0) {
        std::vector<int> edges;
        for (auto e : split(line.substr(10), ',')) {
          int v = 0;
          auto [p, ec] = std::from_chars(e.data(), e.data() + e.size(), v);
          if (ec != std::errc() || p != e.data() + e.size()) throw ParseError(line_no, "bad bucket edge");
          edges.push_back(v);
        }
        buckets = TimeBuckets(std::move(edges));
      }
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(line_no, "vocabulary line needs key<TAB>index");
    std::uint32_t index = 0;
    auto idx = line.substr(tab + 1);
    auto [p, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), index);
    if (ec != std::errc() || p != idx.data() + idx.size() || index != keys.size())
      throw ParseError(line_no, "vocabulary indices must be dense and in order");
    keys.emplace_back(line.substr(0, tab));
  }
  if (!buckets) throw DataError("vocabulary: missing '# buckets' header");
  auto v = from_keys(keys, *buckets);
  if (v.keys_ != keys) throw DataError("vocabulary: keys are not sorted");
  return v;
}

std::string Vocabulary::serialize() const {
  std::string out = "# buckets ";
  for (std::size_t i = 0; i < buckets_.edges().size(); ++i) {
    if (i) out += ',';
    out += std::to_string(buckets_.edges()[i]);
  }
  out += '\n';
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    out += keys_[i];
    out += '\t';
    out += std::to_string(i);
    out += '\n';
  }
  return out;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view key) const {
  auto it = by_key_.find(std::string(key));
  if (it == by_key_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::int32_t>* Vocabulary::coded(const CodedItem& item) const {
  auto it = coded_.find(item);
  return it == coded_.end() ? nullptr : &it->second;
}

FeatureVector featurize(const ClaimTimeline& timeline, Date t, const Vocabulary& vocab) {
  FeatureVector fv;
  fv.dimension = static_cast<std::uint32_t>(vocab.size());
  fv.vocab_hash = vocab.hash();
  const auto& b = timeline.beneficiary;
  fv.indices.push_back(vocab.sex_index(b.sex));
  fv.indices.push_back(vocab.race_index(b.race));
  fv.indices.push_back(vocab.age_index(age_bucket(b.age_at(t))));
  for_each_lookback_item(timeline, t, vocab.buckets(), [&](const CodedItem& item, std::size_t bucket) {
    if (const auto* cols = vocab.coded(item); cols && (*cols)[bucket] >= 0)
      fv.indices.push_back(static_cast<std::uint32_t>((*cols)[bucket]));
  });
  std::sort(fv.indices.begin(), fv.indices.end());
  fv.indices.erase(std::unique(fv.indices.begin(), fv.indices.end()), fv.indices.end());
  return fv;
}

void append_feature_row(std::string& out, const FeatureRow& row) {
  out += row.trigger_key;
  out += '\t';
  for (std::size_t i = 0; i < row.label_digits.size(); ++i) {
    if (i) out += ',';
    out += row.label_digits[i];
  }
  out += '\t';
  for (std::size_t i = 0; i < row.indices.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(row.indices[i]);
  }
  out += '\n';
}

std::vector<FeatureRow> parse_feature_rows(std::string_view text, std::uint32_t dimension) {
  std::vector<FeatureRow> rows;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, '\t');
    if (f.size() != 3) throw ParseError(line_no, "feature row needs 3 fields");
    FeatureRow row;
    row.trigger_key = std::string(f[0]);
    for (auto l : split(f[1], ',')) row.label_digits.emplace_back(l);
    if (!f[2].empty()) {
      for (auto tok : split(f[2], ' ')) {
        std::uint32_t v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size() || v >= dimension ||
            (!row.indices.empty() && v <= row.indices.back()))
          throw ParseError(line_no, "feature indices must be increasing and below the vocabulary size");
        row.indices.push_back(v);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace rrt
