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
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "rrt/date.hpp"

namespace rrt {

enum class Sex : std::uint8_t { female, male, unknown };
inline constexpr std::size_t kNumSexes = 3;

enum class Race : std::uint8_t { asian, black, hispanic, native_american, white, other, unknown };
inline constexpr std::size_t kNumRaces = 7;

/// The coded feature streams carried by claims. Demographics are not coded
/// items; they live on the Beneficiary.
enum class CodeSystem : std::uint8_t {
  ICD9_DX,
  ICD10_DX,
  CCS_DX,
  HCC,
  ICD9_PX,
  ICD10_PX,
  CCS_PX,
  CPT,
  HCPCS,
  HCPCS_ALPHA,
  PERFORMER_ROLE,
  ENCOUNTER_CLASS,
  ADMIT_SOURCE,
  DISCHARGE_DISPOSITION,
  PRINCIPAL_DX_ICD9,
  PRINCIPAL_DX_ICD10,
  ENCOUNTER_CCS,
  ENCOUNTER_HCC,
  REVENUE_CODE,
  MED_HCPCS,
  RXNORM,
};
inline constexpr std::size_t kNumCodeSystems = 21;

enum class ClaimType : std::uint8_t { inpatient, outpatient, home_health, skilled_nursing, carrier };
inline constexpr std::size_t kNumClaimTypes = 5;

std::string_view to_string(Sex v);
std::string_view to_string(Race v);
std::string_view to_string(CodeSystem v);
std::string_view to_string(ClaimType v);
std::optional<Sex> parse_sex(std::string_view s);
std::optional<Race> parse_race(std::string_view s);
std::optional<CodeSystem> parse_code_system(std::string_view s);
std::optional<ClaimType> parse_claim_type(std::string_view s);

struct Beneficiary {
  std::string id;
  Sex sex = Sex::unknown;
  Race race = Race::unknown;
  int birth_year = 0;
  Date enrollment_date;
  std::optional<Date> death_date;

  /// Age by calendar year only.
  int age_at(Date d) const { return d.year() - birth_year; }
  bool operator==(const Beneficiary&) const = default;
};

struct CodedItem {
  CodeSystem system = CodeSystem::ICD10_DX;
  std::string code;

  auto operator<=>(const CodedItem&) const = default;
  /// "SYSTEM:code"
  std::string str() const;
};

struct CodedItemHash {
  std::size_t operator()(const CodedItem& item) const noexcept;
};

struct Claim {
  std::string beneficiary_id;
  Date service_date;
  ClaimType claim_type = ClaimType::carrier;
  std::vector<CodedItem> items;

  bool operator==(const Claim&) const = default;
};

/// A beneficiary's claims in ascending service_date order. Equal dates keep
/// input order.
struct ClaimTimeline {
  Beneficiary beneficiary;
  std::vector<Claim> claims;

  const std::string& id() const { return beneficiary.id; }
  bool operator==(const ClaimTimeline&) const = default;
};

/// Timelines ordered by beneficiary id.
struct Dataset {
  std::vector<ClaimTimeline> timelines;

  const ClaimTimeline* find(std::string_view id) const;
  std::size_t size() const { return timelines.size(); }
  bool operator==(const Dataset&) const = default;
};

struct ParseOptions {
  /// When set, every claim must fall inside this range.
  std::optional<DateRange> date_range;
};

/// Line-delimited claims input. Record grammar (fields TAB-separated):
///
///   B  id  sex  race  birth_year  enrollment_date  death_date|-
///   C  beneficiary_id  service_date  claim_type  [SYSTEM:code ...]
///
/// Blank lines and lines starting with '#' are ignored. Records may appear in
/// any order; claims are attached to their beneficiary after the whole
/// stream is read.
Dataset parse_claims(std::istream& in, const ParseOptions& options = {});
Dataset parse_claims(std::string_view text, const ParseOptions& options = {});

/// Emits each beneficiary record followed by its claims, ids ascending.
void write_claims(std::ostream& out, const Dataset& dataset);
std::string write_claims(const Dataset& dataset);

/// Appends the claim lines of one timeline (no beneficiary record).
void append_timeline(std::string& out, const ClaimTimeline& timeline);

/// Sorts claims by date, keeping input order for equal dates.
void sort_claims(std::vector<Claim>& claims);

/// A named set of (system, code) pairs.
class CodeSet {
 public:
  CodeSet() = default;
  explicit CodeSet(std::string name) : name_(std::move(name)) {}
  CodeSet(std::string name, std::initializer_list<CodedItem> items);

  const std::string& name() const { return name_; }
  void insert(CodedItem item) { codes_.insert(std::move(item)); }
  bool contains(const CodedItem& item) const { return codes_.count(item) != 0; }
  bool matches(const Claim& claim) const;
  std::size_t size() const { return codes_.size(); }
  bool empty() const { return codes_.empty(); }
  /// Members in sorted order.
  std::vector<CodedItem> sorted() const;

  static CodeSet set_union(std::string name, const CodeSet& a, const CodeSet& b);

  /// One "SYSTEM:code" per line; '#' comments and blank lines ignored.
  static CodeSet parse(std::string name, std::string_view text);
  std::string serialize() const;

  bool operator==(const CodeSet& other) const { return codes_ == other.codes_; }

 private:
  std::string name_;
  std::unordered_set<CodedItem, CodedItemHash> codes_;
};

/// The clinical definitions used across the pipeline. `rrt` is always the
/// union of `dialysis` and `transplant`.
struct ClinicalCodeSets {
  CodeSet ckd;
  CodeSet dialysis;
  CodeSet transplant;
  CodeSet rrt;
  CodeSet access_creation;

  static ClinicalCodeSets make(CodeSet ckd, CodeSet dialysis, CodeSet transplant, CodeSet access_creation);
  /// Dialysis CPT 90951-90970, transplant CPT 50360/50365, CKD stage
  /// diagnoses (ICD-9 585.x, ICD-10 N18.x), AV fistula/graft and
  /// peritoneal catheter placement for access creation.
  static const ClinicalCodeSets& defaults();
};

/// Earliest service date of a claim carrying any code in `codes`.
std::optional<Date> first_occurrence(const ClaimTimeline& timeline, const CodeSet& codes);

}  // namespace rrt
