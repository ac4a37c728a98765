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

#include "rrt/claims.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "rrt/error.hpp"
#include "rrt/util.hpp"

namespace rrt {
namespace {

constexpr std::array<std::string_view, kNumSexes> kSexNames = {"female", "male", "unknown"};
constexpr std::array<std::string_view, kNumRaces> kRaceNames = {
    "asian", "black", "hispanic", "native_american", "white", "other", "unknown"};
constexpr std::array<std::string_view, kNumCodeSystems> kSystemNames = {
    "ICD9_DX",         "ICD10_DX",         "CCS_DX",          "HCC",
    "ICD9_PX",         "ICD10_PX",         "CCS_PX",          "CPT",
    "HCPCS",           "HCPCS_ALPHA",      "PERFORMER_ROLE",  "ENCOUNTER_CLASS",
    "ADMIT_SOURCE",    "DISCHARGE_DISPOSITION", "PRINCIPAL_DX_ICD9", "PRINCIPAL_DX_ICD10",
    "ENCOUNTER_CCS",   "ENCOUNTER_HCC",    "REVENUE_CODE",    "MED_HCPCS",
    "RXNORM"};
constexpr std::array<std::string_view, kNumClaimTypes> kClaimTypeNames = {
    "inpatient", "outpatient", "home_health", "skilled_nursing", "carrier"};

template <class Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<Enum>(i);
  return std::nullopt;
}

std::optional<CodedItem> parse_item(std::string_view field) {
  const auto colon = field.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto system = parse_code_system(field.substr(0, colon));
  auto code = field.substr(colon + 1);
  if (!system || code.empty()) return std::nullopt;
  return CodedItem{*system, std::string(code)};
}

struct PendingClaim {
  std::size_t line;
  Claim claim;
};

}  // namespace

std::string_view to_string(Sex v) { return kSexNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(Race v) { return kRaceNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(CodeSystem v) { return kSystemNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(ClaimType v) { return kClaimTypeNames[static_cast<std::size_t>(v)]; }
std::optional<Sex> parse_sex(std::string_view s) { return lookup<Sex>(kSexNames, s); }
std::optional<Race> parse_race(std::string_view s) { return lookup<Race>(kRaceNames, s); }
std::optional<CodeSystem> parse_code_system(std::string_view s) { return lookup<CodeSystem>(kSystemNames, s); }
std::optional<ClaimType> parse_claim_type(std::string_view s) { return lookup<ClaimType>(kClaimTypeNames, s); }

std::string CodedItem::str() const {
  std::string out(to_string(system));
  out += ':';
  out += code;
  return out;
}

std::size_t CodedItemHash::operator()(const CodedItem& item) const noexcept {
  return static_cast<std::size_t>(
      splitmix64(fnv1a64(item.code) ^ static_cast<std::uint64_t>(item.system)));
}

const ClaimTimeline* Dataset::find(std::string_view id) const {
  auto it = std::lower_bound(timelines.begin(), timelines.end(), id,
                             [](const ClaimTimeline& t, std::string_view v) { return t.id() < v; });
  return it != timelines.end() && it->id() == id ? &*it : nullptr;
}

void sort_claims(std::vector<Claim>& claims) {
  std::stable_sort(claims.begin(), claims.end(),
                   [](const Claim& a, const Claim& b) { return a.service_date < b.service_date; });
}

Dataset parse_claims(std::istream& in, const ParseOptions& options) {
  std::vector<Beneficiary> beneficiaries;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<PendingClaim> pending;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, '\t');
    if (f[0] == "B") {
      if (f.size() != 7) throw ParseError(line_no, "beneficiary record needs 7 fields, got " + std::to_string(f.size()));
      Beneficiary b;
      b.id = std::string(f[1]);
      if (b.id.empty()) throw ParseError(line_no, "empty beneficiary id");
      auto sex = parse_sex(f[2]);
      if (!sex) throw ParseError(line_no, "unknown sex '" + std::string(f[2]) + "'");
      auto race = parse_race(f[3]);
      if (!race) throw ParseError(line_no, "unknown race '" + std::string(f[3]) + "'");
      b.sex = *sex;
      b.race = *race;
      auto [p, ec] = std::from_chars(f[4].data(), f[4].data() + f[4].size(), b.birth_year);
      if (ec != std::errc() || p != f[4].data() + f[4].size())
        throw ParseError(line_no, "invalid birth_year '" + std::string(f[4]) + "'");
      auto enrolled = Date::parse(f[5]);
      if (!enrolled) throw ParseError(line_no, "invalid enrollment_date '" + std::string(f[5]) + "'");
      b.enrollment_date = *enrolled;
      if (b.birth_year >= b.enrollment_date.year())
        throw ParseError(line_no, "birth_year must precede the enrollment year");
      if (f[6] != "-") {
        auto death = Date::parse(f[6]);
        if (!death) throw ParseError(line_no, "invalid death_date '" + std::string(f[6]) + "'");
        if (*death < b.enrollment_date) throw ParseError(line_no, "death_date precedes enrollment_date");
        b.death_date = *death;
      }
      if (!index.emplace(b.id, beneficiaries.size()).second)
        throw ParseError(line_no, "duplicate beneficiary record '" + b.id + "'");
      beneficiaries.push_back(std::move(b));
    } else if (f[0] == "C") {
      if (f.size() < 2 || f[1].empty()) throw ParseError(line_no, "claim record missing beneficiary_id field");
      if (f.size() < 3 || f[2].empty()) throw ParseError(line_no, "claim record missing service_date field");
      if (f.size() < 4 || f[3].empty()) throw ParseError(line_no, "claim record missing claim_type field");
      Claim c;
      c.beneficiary_id = std::string(f[1]);
      auto date = Date::parse(f[2]);
      if (!date) throw ParseError(line_no, "invalid service_date '" + std::string(f[2]) + "'");
      if (options.date_range && !options.date_range->contains(*date))
        throw ParseError(line_no, "service_date " + date->iso() + " outside the dataset date range");
      c.service_date = *date;
      auto type = parse_claim_type(f[3]);
      if (!type) throw ParseError(line_no, "unknown claim_type '" + std::string(f[3]) + "'");
      c.claim_type = *type;
      for (std::size_t i = 4; i < f.size(); ++i) {
        if (f[i].empty()) continue;
        auto item = parse_item(f[i]);
        if (!item) throw ParseError(line_no, "malformed coded item '" + std::string(f[i]) + "'");
        c.items.push_back(std::move(*item));
      }
      pending.push_back({line_no, std::move(c)});
    } else {
      throw ParseError(line_no, "unknown record tag '" + std::string(f[0]) + "'");
    }
  }

  std::vector<std::vector<Claim>> per(beneficiaries.size());
  for (auto& p : pending) {
    auto it = index.find(p.claim.beneficiary_id);
    if (it == index.end())
      throw ParseError(p.line, "claim references unknown beneficiary '" + p.claim.beneficiary_id + "'");
    per[it->second].push_back(std::move(p.claim));
  }

  Dataset ds;
  ds.timelines.reserve(beneficiaries.size());
  for (std::size_t i = 0; i < beneficiaries.size(); ++i) {
    sort_claims(per[i]);
    ds.timelines.push_back({std::move(beneficiaries[i]), std::move(per[i])});
  }
  std::sort(ds.timelines.begin(), ds.timelines.end(),
            [](const ClaimTimeline& a, const ClaimTimeline& b) { return a.id() < b.id(); });
  return ds;
}

Dataset parse_claims(std::string_view text, const ParseOptions& options) {
  std::istringstream in{std::string(text)};
  return parse_claims(in, options);
}

void append_timeline(std::string& out, const ClaimTimeline& timeline) {
  for (const auto& c : timeline.claims) {
    out += "C\t";
    out += c.beneficiary_id;
    out += '\t';
    out += c.service_date.iso();
    out += '\t';
    out += to_string(c.claim_type);
    for (const auto& item : c.items) {
      out += '\t';
      out += to_string(item.system);
      out += ':';
      out += item.code;
    }
    out += '\n';
  }
}

namespace {
void append_beneficiary(std::string& out, const Beneficiary& b) {
  out += "B\t";
  out += b.id;
  out += '\t';
  out += to_string(b.sex);
  out += '\t';
  out += to_string(b.race);
  out += '\t';
  out += std::to_string(b.birth_year);
  out += '\t';
  out += b.enrollment_date.iso();
  out += '\t';
  out += b.death_date ? b.death_date->iso() : "-";
  out += '\n';
}
}  // namespace

std::string write_claims(const Dataset& dataset) {
  std::vector<const ClaimTimeline*> order;
  order.reserve(dataset.timelines.size());
  for (const auto& t : dataset.timelines) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id() < b->id(); });
  std::string out;
  for (const auto* t : order) {
    append_beneficiary(out, t->beneficiary);
    append_timeline(out, *t);
  }
  return out;
}

void write_claims(std::ostream& out, const Dataset& dataset) { out << write_claims(dataset); }

CodeSet::CodeSet(std::string name, std::initializer_list<CodedItem> items) : name_(std::move(name)) {
  for (const auto& i : items) codes_.insert(i);
}

bool CodeSet::matches(const Claim& claim) const {
  return std::any_of(claim.items.begin(), claim.items.end(), [&](const CodedItem& i) { return contains(i); });
}

std::vector<CodedItem> CodeSet::sorted() const {
  std::vector<CodedItem> out(codes_.begin(), codes_.end());
  std::sort(out.begin(), out.end());
  return out;
}

CodeSet CodeSet::set_union(std::string name, const CodeSet& a, const CodeSet& b) {
  CodeSet out(std::move(name));
  out.codes_ = a.codes_;
  out.codes_.insert(b.codes_.begin(), b.codes_.end());
  return out;
}

CodeSet CodeSet::parse(std::string name, std::string_view text) {
  CodeSet out(std::move(name));
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    if (line.empty() || line[0] == '#') continue;
    auto item = parse_item(line);
    if (!item) throw ParseError(line_no, "malformed code set entry '" + std::string(line) + "'");
    out.insert(std::move(*item));
  }
  return out;
}

std::string CodeSet::serialize() const {
  std::string out = "# " + name_ + "\n";
  for (const auto& item : sorted()) out += item.str() + "\n";
  return out;
}

ClinicalCodeSets ClinicalCodeSets::make(CodeSet ckd, CodeSet dialysis, CodeSet transplant, CodeSet access) {
  ClinicalCodeSets s;
  s.rrt = CodeSet::set_union("rrt", dialysis, transplant);
  s.ckd = std::move(ckd);
  s.dialysis = std::move(dialysis);
  s.transplant = std::move(transplant);
  s.access_creation = std::move(access);
  return s;
}

const ClinicalCodeSets& ClinicalCodeSets::defaults() {
  static const ClinicalCodeSets sets = [] {
    CodeSet ckd("ckd");
    for (const char* c : {"585.1", "585.2", "585.3", "585.4", "585.5", "585.6", "585.9"})
      ckd.insert({CodeSystem::ICD9_DX, c});
    for (const char* c : {"N18.1", "N18.2", "N18.3", "N18.4", "N18.5", "N18.6", "N18.9"})
      ckd.insert({CodeSystem::ICD10_DX, c});
    CodeSet dialysis("dialysis");
    for (int c = 90951; c <= 90970; ++c) dialysis.insert({CodeSystem::CPT, std::to_string(c)});
    CodeSet transplant("transplant", {{CodeSystem::CPT, "50360"}, {CodeSystem::CPT, "50365"}});
    CodeSet access("access_creation");
    for (const char* c : {"36818", "36819", "36820", "36821", "36825", "36830", "49421"})
      access.insert({CodeSystem::CPT, c});
    return make(std::move(ckd), std::move(dialysis), std::move(transplant), std::move(access));
  }();
  return sets;
}

std::optional<Date> first_occurrence(const ClaimTimeline& timeline, const CodeSet& codes) {
  for (const auto& c : timeline.claims)
    if (codes.matches(c)) return c.service_date;
  return std::nullopt;
}

}  // namespace rrt
