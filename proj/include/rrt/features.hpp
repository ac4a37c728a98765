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
#include <unordered_map>
#include <vector>

#include "rrt/claims.hpp"

namespace rrt {

/// Look-back buckets over (trigger_date - service_date) in days. Bucket b
/// covers [edge[b], edge[b+1]).
class TimeBuckets {
 public:
  TimeBuckets() : TimeBuckets(std::vector<int>{0, 30, 90, 365, 3650}) {}
  /// Edges must start at 0 or above and be strictly increasing.
  explicit TimeBuckets(std::vector<int> edges);

  std::size_t size() const { return edges_.size() - 1; }
  std::span<const int> edges() const { return edges_; }
  int horizon() const { return edges_.back(); }
  std::optional<std::size_t> bucket_of(int offset_days) const;

  bool operator==(const TimeBuckets&) const = default;

 private:
  std::vector<int> edges_;
};

/// Ten-year age buckets anchored at 65, plus one for anyone younger.
inline constexpr std::size_t kNumAgeBuckets = 5;
std::size_t age_bucket(int age);
std::string_view age_bucket_name(std::size_t bucket);

/// Sparse binary feature vector; indices strictly increasing and < dimension.
struct FeatureVector {
  std::vector<std::uint32_t> indices;
  std::uint32_t dimension = 0;
  std::uint64_t vocab_hash = 0;

  bool operator==(const FeatureVector&) const = default;
};

struct FeatureSource {
  const ClaimTimeline* timeline = nullptr;
  Date trigger_date;
};

/// "SYSTEM:code@bucket"
std::string coded_key(const CodedItem& item, std::size_t bucket);

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Collects every coded key seen in at least `min_count` of the sources
  /// and adds the full demographic value sets. Indices follow sorted key
  /// order. Throws DataError on an empty source list.
  static Vocabulary build(std::span<const FeatureSource> sources, const TimeBuckets& buckets = {},
                          std::size_t min_count = 1, unsigned workers = 1);

  /// Text form: "# buckets e0,e1,..." then "key<TAB>index" lines, sorted.
  static Vocabulary parse(std::string_view text);
  std::string serialize() const;

  std::size_t size() const { return keys_.size(); }
  std::uint64_t hash() const { return hash_; }
  const TimeBuckets& buckets() const { return buckets_; }
  const std::string& key(std::uint32_t index) const { return keys_[index]; }
  std::optional<std::uint32_t> find(std::string_view key) const;

  std::uint32_t sex_index(Sex s) const { return sex_[static_cast<std::size_t>(s)]; }
  std::uint32_t race_index(Race r) const { return race_[static_cast<std::size_t>(r)]; }
  std::uint32_t age_index(std::size_t bucket) const { return age_[bucket]; }
  /// Per-bucket column of a coded item; -1 where the key is out of vocabulary.
  const std::vector<std::int32_t>* coded(const CodedItem& item) const;

  bool operator==(const Vocabulary& other) const { return keys_ == other.keys_ && buckets_ == other.buckets_; }

 private:
  static Vocabulary from_keys(std::vector<std::string> keys, TimeBuckets buckets);

  TimeBuckets buckets_;
  std::vector<std::string> keys_;
  std::unordered_map<std::string, std::uint32_t> by_key_;
  std::unordered_map<CodedItem, std::vector<std::int32_t>, CodedItemHash> coded_;
  std::array<std::uint32_t, kNumSexes> sex_{};
  std::array<std::uint32_t, kNumRaces> race_{};
  std::array<std::uint32_t, kNumAgeBuckets> age_{};
  std::uint64_t hash_ = 0;
};

/// Binary presence of (system, code, bucket) for claims strictly before t
/// and within the bucket horizon, plus one sex, one race and one age column.
/// Keys missing from the vocabulary are dropped.
FeatureVector featurize(const ClaimTimeline& timeline, Date t, const Vocabulary& vocab);

/// Row of a persisted feature matrix.
struct FeatureRow {
  std::string trigger_key;
  std::vector<std::string> label_digits;  // one per task
  std::vector<std::uint32_t> indices;
};

/// "trigger_key<TAB>lab1,lab2,...<TAB>i1 i2 ..."
void append_feature_row(std::string& out, const FeatureRow& row);
std::vector<FeatureRow> parse_feature_rows(std::string_view text, std::uint32_t dimension);

}  // namespace rrt
