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

#include <string>
#include <vector>

#include "rrt/claims.hpp"
#include "rrt/date.hpp"
#include "rrt/util.hpp"

namespace rrt::testing {

inline Date ymd(int y, unsigned m, unsigned d) { return Date::from_ymd(y, m, d); }

inline Beneficiary beneficiary(std::string id, int birth_year = 1940, Date enrolled = ymd(2005, 1, 1)) {
  return Beneficiary{std::move(id), Sex::female, Race::white, birth_year, enrolled, std::nullopt};
}

inline Claim claim(const std::string& id, Date d, std::vector<CodedItem> items = {},
                   ClaimType type = ClaimType::carrier) {
  return Claim{id, d, type, std::move(items)};
}

inline CodedItem ckd_code() { return {CodeSystem::ICD10_DX, "N18.4"}; }
inline CodedItem dialysis_code() { return {CodeSystem::CPT, "90960"}; }
inline CodedItem transplant_code() { return {CodeSystem::CPT, "50360"}; }
inline CodedItem access_code() { return {CodeSystem::CPT, "36821"}; }

/// Timeline builder; claims are sorted on `build()`.
class TimelineBuilder {
 public:
  explicit TimelineBuilder(std::string id, int birth_year = 1940) { tl_.beneficiary = beneficiary(std::move(id), birth_year); }
  TimelineBuilder& add(Date d, std::vector<CodedItem> items = {}) {
    tl_.claims.push_back(claim(tl_.id(), d, std::move(items)));
    return *this;
  }
  ClaimTimeline build() {
    sort_claims(tl_.claims);
    return tl_;
  }

 private:
  ClaimTimeline tl_;
};

/// Random timeline over a small code alphabet that includes the default
/// clinical codes, so eligibility, labels and features all get exercised.
inline ClaimTimeline random_timeline(Rng& rng, const std::string& id, Date lo, Date hi, std::size_t max_claims = 40) {
  static const std::vector<CodedItem> kAlphabet = {
      ckd_code(),
      {CodeSystem::ICD9_DX, "585.3"},
      dialysis_code(),
      {CodeSystem::CPT, "90966"},
      transplant_code(),
      access_code(),
      {CodeSystem::ICD10_DX, "E11.9"},
      {CodeSystem::ICD10_DX, "I10"},
      {CodeSystem::CPT, "99213"},
      {CodeSystem::PERFORMER_ROLE, "NEPHROLOGY"},
      {CodeSystem::REVENUE_CODE, "0821"},
      {CodeSystem::RXNORM, "197361"},
  };
  ClaimTimeline tl;
  tl.beneficiary = beneficiary(id, 1925 + static_cast<int>(rng.below(30)), lo);
  tl.beneficiary.sex = static_cast<Sex>(rng.below(kNumSexes));
  tl.beneficiary.race = static_cast<Race>(rng.below(kNumRaces));
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  const auto n = rng.below(max_claims + 1);
  for (std::uint64_t i = 0; i < n; ++i) {
    Claim c = claim(id, lo.plus_days(static_cast<int>(rng.below(span))), {},
                    static_cast<ClaimType>(rng.below(kNumClaimTypes)));
    const auto k = rng.below(4);
    for (std::uint64_t j = 0; j < k; ++j) c.items.push_back(kAlphabet[rng.below(kAlphabet.size())]);
    tl.claims.push_back(std::move(c));
  }
  sort_claims(tl.claims);
  return tl;
}

}  // namespace rrt::testing
