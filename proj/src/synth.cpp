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

#include "rrt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include <json.hpp>

#include "rrt/error.hpp"
#include "rrt/triggers.hpp"
#include "rrt/util.hpp"

namespace rrt {
namespace {

constexpr std::array<std::string_view, 4> kEventNames = {"dialysis", "transplant", "access_creation", "death"};

constexpr double kHazardSteepness = 15.0;
constexpr double kHazardCap = 1.0;
// Mean monthly severity increment; each step is uniform in [0.5, 1.5] times it.
constexpr double kMonthlyDrift = 0.002;
// Severity at CKD onset is 0.05 + kInitMax * u^kInitPow.
constexpr double kInitMax = 0.8;
constexpr double kInitPow = 2.0;
// Advanced-disease markers follow a logistic in severity.
constexpr double kMarkerMid = 0.9;
constexpr double kMarkerMax = 0.6;
// Pre-RRT visits: a dense workup near onset plus sparse earlier referrals,
// each with exponential lead time in days.
constexpr double kPrepVisits = 16.0;
constexpr double kPrepMeanDays = 45.0;
constexpr double kReferralVisits = 2.0;
constexpr double kReferralMeanDays = 150.0;

// Fraction of monthly_hazard_scale at a given severity; 1 from end stage
// (severity 1) on, falling by e^-15 per unit below it.
double hazard_shape(double severity) {
  if (severity <= 0.0) return 0.0;
  return std::exp(kHazardSteepness * (std::min(severity, kHazardCap) - kHazardCap));
}

int ckd_stage(double severity) { return std::min(6, 1 + static_cast<int>(severity / 0.2)); }

const Date kIcd10Switch = Date::from_ymd(2015, 10, 1);

// Background code systems. The DX/PX/PDX entries resolve to the ICD-9 or
// ICD-10 variant by service date.
enum class Slot : std::uint8_t { dx, px, pdx, fixed };
struct SystemWeight {
  Slot slot;
  CodeSystem system;
  double weight;
};

using SystemMix = std::vector<SystemWeight>;

const std::array<SystemMix, kNumClaimTypes>& claim_mixes() {
  static const std::array<SystemMix, kNumClaimTypes> mixes = [] {
    std::array<SystemMix, kNumClaimTypes> m;
    using S = CodeSystem;
    m[static_cast<std::size_t>(ClaimType::inpatient)] = {
        {Slot::dx, S::ICD10_DX, 0.20},           {Slot::px, S::ICD10_PX, 0.10},
        {Slot::fixed, S::CCS_PX, 0.05},          {Slot::fixed, S::ENCOUNTER_CLASS, 0.05},
        {Slot::fixed, S::ADMIT_SOURCE, 0.10},    {Slot::fixed, S::DISCHARGE_DISPOSITION, 0.10},
        {Slot::pdx, S::PRINCIPAL_DX_ICD10, 0.10}, {Slot::fixed, S::ENCOUNTER_CCS, 0.10},
        {Slot::fixed, S::ENCOUNTER_HCC, 0.05},   {Slot::fixed, S::REVENUE_CODE, 0.10},
        {Slot::fixed, S::RXNORM, 0.05}};
    m[static_cast<std::size_t>(ClaimType::outpatient)] = {
        {Slot::dx, S::ICD10_DX, 0.25},        {Slot::fixed, S::CPT, 0.15},
        {Slot::fixed, S::REVENUE_CODE, 0.15}, {Slot::fixed, S::CCS_DX, 0.05},
        {Slot::fixed, S::HCC, 0.05},          {Slot::fixed, S::CCS_PX, 0.05},
        {Slot::fixed, S::ENCOUNTER_CLASS, 0.10}, {Slot::fixed, S::RXNORM, 0.10},
        {Slot::fixed, S::MED_HCPCS, 0.05},    {Slot::pdx, S::PRINCIPAL_DX_ICD10, 0.05}};
    const SystemMix post_acute = {{Slot::dx, S::ICD10_DX, 0.30},           {Slot::fixed, S::REVENUE_CODE, 0.20},
                                  {Slot::fixed, S::ENCOUNTER_CLASS, 0.10},  {Slot::fixed, S::DISCHARGE_DISPOSITION, 0.10},
                                  {Slot::fixed, S::ADMIT_SOURCE, 0.10},     {Slot::fixed, S::RXNORM, 0.10},
                                  {Slot::fixed, S::HCPCS, 0.10}};
    m[static_cast<std::size_t>(ClaimType::home_health)] = post_acute;
    m[static_cast<std::size_t>(ClaimType::skilled_nursing)] = post_acute;
    m[static_cast<std::size_t>(ClaimType::carrier)] = {
        {Slot::dx, S::ICD10_DX, 0.35},        {Slot::fixed, S::CPT, 0.25},
        {Slot::fixed, S::HCPCS, 0.08},        {Slot::fixed, S::HCPCS_ALPHA, 0.05},
        {Slot::fixed, S::PERFORMER_ROLE, 0.12}, {Slot::fixed, S::CCS_DX, 0.05},
        {Slot::fixed, S::HCC, 0.05},          {Slot::fixed, S::MED_HCPCS, 0.05}};
    return m;
  }();
  return mixes;
}

CodeSystem resolve(const SystemWeight& w, Date d) {
  const bool icd10 = d >= kIcd10Switch;
  switch (w.slot) {
    case Slot::dx:
      return icd10 ? CodeSystem::ICD10_DX : CodeSystem::ICD9_DX;
    case Slot::px:
      return icd10 ? CodeSystem::ICD10_PX : CodeSystem::ICD9_PX;
    case Slot::pdx:
      return icd10 ? CodeSystem::PRINCIPAL_DX_ICD10 : CodeSystem::PRINCIPAL_DX_ICD9;
    case Slot::fixed:
      break;
  }
  return w.system;
}

// Prefixes keep synthetic background codes disjoint from the clinical sets.
constexpr std::array<std::string_view, kNumCodeSystems> kBackgroundPrefix = {
    "V", "R", "D", "H", "P9", "P0", "CP", "T", "G", "A", "ROLE", "EC", "AS", "DD", "V", "R", "D", "H", "1", "J", "7"};

std::string background_code(CodeSystem system, std::uint32_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04u", kBackgroundPrefix[static_cast<std::size_t>(system)].data(), index);
  return buf;
}

std::string stage_dx(int stage) { return "N18." + std::to_string(stage); }
std::string stage_dx9(int stage) { return "585." + std::to_string(stage); }

CodedItem ckd_dx(int stage, Date d) {
  return d >= kIcd10Switch ? CodedItem{CodeSystem::ICD10_DX, stage_dx(stage)}
                           : CodedItem{CodeSystem::ICD9_DX, stage_dx9(stage)};
}

// Pre-RRT workup: access planning and education for dialysis, evaluation for transplant.
CodedItem prep_item(bool transplant, std::uint64_t pick, Date d) {
  static const CodedItem kDialysis[] = {{CodeSystem::CPT, "93985"},         {CodeSystem::CPT, "93986"},
                                        {CodeSystem::HCPCS_ALPHA, "G0420"}, {CodeSystem::HCPCS_ALPHA, "G0421"},
                                        {CodeSystem::CPT, "76770"},         {CodeSystem::CPT, "82565"}};
  static const CodedItem kTransplant[] = {{CodeSystem::CPT, "86812"}, {CodeSystem::CPT, "86813"},
                                          {CodeSystem::CPT, "86805"}, {CodeSystem::CPT, "76770"},
                                          {CodeSystem::CPT, "82565"}, {CodeSystem::ICD9_DX, "V49.83"}};
  if (!transplant) return kDialysis[pick];
  if (pick == 5 && d >= kIcd10Switch) return {CodeSystem::ICD10_DX, "Z76.82"};
  return kTransplant[pick];
}

struct Latent {
  Beneficiary beneficiary;
  int first_month = 0;  // first month with claims
  Date claims_start;
  int death_month = -1;
  std::optional<Date> death;
  bool ckd = false;
  int ckd_month = 0;
  std::vector<double> severity;  // per month, 0 before CKD
  std::vector<double> event_u;   // per month, from the event stream
  std::vector<double> event_day_u;
  bool transplant = false;
  bool access = false;
  int access_lead = 1;
  int access_kind = 0;
};

struct Onset {
  int month = -1;
  Date date;
  bool transplant = false;
};

class Generator {
 public:
  explicit Generator(const SynthConfig& cfg) : cfg_(cfg) {
    const Date s = cfg.date_range.start;
    month0_ = Date::from_ymd(s.year(), s.month(), 1);
    const Date e = cfg.date_range.end;
    months_ = (e.year() - s.year()) * 12 + static_cast<int>(e.month()) - static_cast<int>(s.month()) + 1;
    total_weight_.fill(0.0);
    for (std::size_t t = 0; t < kNumClaimTypes; ++t)
      for (const auto& w : claim_mixes()[t]) total_weight_[t] += w.weight;
  }

  int months() const { return months_; }

  Date month_start(int m) const {
    const int idx = static_cast<int>(month0_.month()) - 1 + m;
    return Date::from_ymd(month0_.year() + idx / 12, static_cast<unsigned>(idx % 12) + 1, 1);
  }
  int month_days(int m) const {
    const Date d = month_start(m);
    return static_cast<int>(days_in_month(d.year(), d.month()));
  }
  int month_of(Date d) const { return (d.year() - month0_.year()) * 12 + static_cast<int>(d.month()) - static_cast<int>(month0_.month()); }

  std::string make_id(std::uint64_t index) const {
    char buf[32];
    const int width = std::max(7, static_cast<int>(std::to_string(cfg_.n_beneficiaries).size()));
    std::snprintf(buf, sizeof buf, "B%0*llu", width, static_cast<unsigned long long>(index));
    return buf;
  }

  Latent latent(std::uint64_t seed, std::uint64_t index, std::string id) const {
    Rng a(seed, 4 * index);
    Rng b(seed, 4 * index + 1);
    Latent l;
    auto& ben = l.beneficiary;
    ben.id = std::move(id);
    const double us = a.uniform();
    ben.sex = us < 0.56 ? Sex::female : (us < 0.995 ? Sex::male : Sex::unknown);
    static constexpr std::array<std::pair<Race, double>, 6> kRaceCdf = {{{Race::white, 0.80},
                                                                         {Race::black, 0.89},
                                                                         {Race::hispanic, 0.92},
                                                                         {Race::asian, 0.95},
                                                                         {Race::native_american, 0.955},
                                                                         {Race::other, 0.98}}};
    const double ur = a.uniform();
    ben.race = Race::unknown;
    for (auto [race, cdf] : kRaceCdf) {
      if (ur < cdf) {
        ben.race = race;
        break;
      }
    }
    const int start_year = cfg_.date_range.start.year();
    const int age_at_start = 55 + static_cast<int>(a.below(41));
    ben.birth_year = start_year - age_at_start;
    const bool early_entitlement = a.bernoulli(0.1);
    const int enroll_year = ben.birth_year + (early_entitlement ? 60 + static_cast<int>(a.below(5)) : 65);
    ben.enrollment_date = Date::from_ymd(enroll_year, 1 + static_cast<unsigned>(a.below(12)), 1);
    l.claims_start = std::max(ben.enrollment_date, cfg_.date_range.start);
    l.first_month = month_of(l.claims_start);

    l.ckd = a.bernoulli(cfg_.ckd_fraction);
    const int onset_offset = -36 + static_cast<int>(a.below(36 + 60));
    const double initial = 0.05 + kInitMax * std::pow(a.uniform(), kInitPow);
    const double drift = cfg_.hazard_mode == HazardMode::progressive ? kMonthlyDrift * -std::log(1.0 - a.uniform()) : 0.0;
    l.transplant = a.bernoulli(cfg_.transplant_fraction);
    l.access = a.bernoulli(cfg_.access_creation_fraction);
    l.access_lead = 1 + static_cast<int>(a.below(12));
    l.access_kind = static_cast<int>(a.below(10));

    l.severity.assign(static_cast<std::size_t>(months_), 0.0);
    if (l.ckd) {
      l.ckd_month = std::max(onset_offset, 0);
      double x = initial;
      for (int m = onset_offset; m < months_; ++m) {
        const double u = a.uniform();
        if (m > onset_offset && drift > 0.0) {
          x += drift * (0.5 + u);
          x = std::min(1.3, x);
        }
        if (m >= 0) l.severity[static_cast<std::size_t>(m)] = x;
      }
    }
    // Death is drawn for every month so the stream layout is fixed.
    for (int m = 0; m < months_; ++m) {
      const double x = l.severity[static_cast<std::size_t>(m)];
      const double mu = 0.0015 + 0.0002 * std::max(0, age_at_start + m / 12 - 70) + 0.006 * x;
      const double u = a.uniform();
      const double day_u = a.uniform();
      if (l.death_month < 0 && m >= l.first_month && u < mu) {
        l.death_month = m;
        const Date d = month_start(m).plus_days(static_cast<int>(day_u * month_days(m)));
        l.death = std::min(d, cfg_.date_range.end);
      }
    }
    if (l.death && *l.death < ben.enrollment_date) l.death = ben.enrollment_date;
    ben.death_date = l.death;

    l.event_u.resize(static_cast<std::size_t>(months_));
    l.event_day_u.resize(static_cast<std::size_t>(months_));
    for (int m = 0; m < months_; ++m) {
      l.event_u[static_cast<std::size_t>(m)] = b.uniform();
      l.event_day_u[static_cast<std::size_t>(m)] = b.uniform();
    }
    return l;
  }

  double monthly_hazard(const Latent& l, int m, double multiplier) const {
    if (!l.ckd || m < l.ckd_month || m < l.first_month) return 0.0;
    if (l.death_month >= 0 && m > l.death_month) return 0.0;
    return std::min(1.0, multiplier * cfg_.monthly_hazard_scale * hazard_shape(l.severity[static_cast<std::size_t>(m)]));
  }

  Onset onset(const Latent& l, double multiplier) const {
    for (int m = l.first_month; m < months_; ++m) {
      if (l.event_u[static_cast<std::size_t>(m)] < monthly_hazard(l, m, multiplier)) return onset_in(l, m);
    }
    return {};
  }

  // The onset that results if the first hazard hit falls in month m.
  Onset onset_in(const Latent& l, int m) const {
    const Date d =
        month_start(m).plus_days(static_cast<int>(l.event_day_u[static_cast<std::size_t>(m)] * month_days(m)));
    if ((l.death && d >= *l.death) || d > cfg_.date_range.end || d < l.claims_start) return {};
    return {m, d, l.transplant};
  }

  // Claims for one beneficiary; `onset.month < 0` means no RRT event.
  ClaimTimeline emit(const Latent& l, const Onset& onset, std::uint64_t seed, std::uint64_t index,
                     std::vector<GroundTruthEvent>* events) const {
    Rng c(seed, 4 * index + 2);
    ClaimTimeline tl;
    tl.beneficiary = l.beneficiary;
    const std::string& id = tl.beneficiary.id;
    const Date last_day = l.death ? std::min(*l.death, cfg_.date_range.end) : cfg_.date_range.end;

    auto new_claim = [&](Date d, ClaimType type) -> Claim& {
      tl.claims.push_back(Claim{id, d, type, {}});
      return tl.claims.back();
    };

    std::optional<Date> access_date;
    if (onset.month >= 0 && !onset.transplant && l.access) {
      const int m = std::max(onset.month - l.access_lead, l.first_month);
      Date d = month_start(m).plus_days(static_cast<int>(c.uniform() * month_days(m)));
      d = std::max(d, l.claims_start);
      if (d < onset.date) access_date = d;
    } else {
      c.uniform();
    }

    for (int m = l.first_month; m < months_; ++m) {
      const Date ms = month_start(m);
      if (ms > last_day) break;
      const double x = l.severity[static_cast<std::size_t>(m)];
      const bool ckd_active = l.ckd && m >= l.ckd_month;
      const bool after_rrt = onset.month >= 0 && m >= onset.month;
      const double rate = cfg_.claims_rate * (1.0 + (ckd_active ? 2.5 * x : 0.0));
      const std::uint32_t n = c.poisson(rate);
      for (std::uint32_t k = 0; k < n; ++k) {
        Date d = ms.plus_days(static_cast<int>(c.uniform() * month_days(m)));
        const ClaimType type = draw_claim_type(c);
        const auto n_items = 1 + c.poisson(1.5);
        const bool keep = d >= l.claims_start && d <= last_day;
        Claim scratch{id, d, type, {}};
        for (std::uint32_t i = 0; i < n_items; ++i) scratch.items.push_back(background_item(c, type, d));
        if (ckd_active) add_ckd_signal(c, scratch, x, after_rrt && !onset.transplant);
        if (after_rrt && onset.transplant && onset.date < d && c.bernoulli(0.3))
          scratch.items.push_back(d >= kIcd10Switch ? CodedItem{CodeSystem::ICD10_DX, "Z94.0"}
                                                    : CodedItem{CodeSystem::ICD9_DX, "V42.0"});
        if (keep) tl.claims.push_back(std::move(scratch));
      }
      if (onset.month == m) {
        // Preparation visits cluster before onset; lead times are exponential in days.
        const auto near = c.poisson(kPrepVisits);
        const auto visits = near + c.poisson(kReferralVisits);
        for (std::uint32_t k = 0; k < visits; ++k) {
          const double mean = k < near ? kPrepMeanDays : kReferralMeanDays;
          const int lead = 1 + static_cast<int>(-std::log(1.0 - c.uniform()) * mean);
          const auto pick = c.below(6);
          const Date d = onset.date.plus_days(-std::min(lead, 365));
          if (d < l.claims_start) continue;
          const int vm = std::max(month_of(d), 0);
          auto& cl = new_claim(d, ClaimType::carrier);
          cl.items.push_back({CodeSystem::PERFORMER_ROLE, "NEPHROLOGY"});
          cl.items.push_back(ckd_dx(std::max(4, ckd_stage(l.severity[static_cast<std::size_t>(vm)])), d));
          cl.items.push_back(prep_item(onset.transplant, pick, d));
        }
      }
      if (access_date && month_of(*access_date) == m) {
        static constexpr const char* kAccess[] = {"36821", "36821", "36821", "36818", "36819",
                                                  "36820", "36830", "36830", "36825", "49421"};
        auto& cl = new_claim(*access_date, ClaimType::outpatient);
        cl.items.push_back({CodeSystem::CPT, kAccess[l.access_kind]});
        cl.items.push_back(ckd_dx(std::max(4, ckd_stage(x)), *access_date));
        if (events) events->push_back({id, EventType::access_creation, *access_date});
      }
      if (onset.month >= 0 && !onset.transplant && m >= onset.month) {
        // Monthly ESRD dialysis services from onset on.
        Date d = m == onset.month ? onset.date : ms.plus_days(static_cast<int>(c.uniform() * month_days(m)));
        if (d <= last_day) {
          auto& cl = new_claim(d, ClaimType::carrier);
          cl.items.push_back({CodeSystem::CPT, std::to_string(90960 + c.below(3))});
          cl.items.push_back({CodeSystem::REVENUE_CODE, "0821"});
          cl.items.push_back(ckd_dx(6, d));
        }
      }
      if (onset.month == m && onset.transplant) {
        auto& cl = new_claim(onset.date, ClaimType::inpatient);
        cl.items.push_back({CodeSystem::CPT, c.bernoulli(0.8) ? "50360" : "50365"});
        cl.items.push_back(ckd_dx(6, onset.date));
        cl.items.push_back({CodeSystem::ENCOUNTER_CLASS, "EC0000"});
      }
    }
    sort_claims(tl.claims);
    if (events) {
      if (onset.month >= 0)
        events->push_back({id, onset.transplant ? EventType::transplant : EventType::dialysis, onset.date});
      if (l.death) events->push_back({id, EventType::death, *l.death});
    }
    return tl;
  }

 private:
  ClaimType draw_claim_type(Rng& c) const {
    const double u = c.uniform();
    if (u < 0.55) return ClaimType::carrier;
    if (u < 0.80) return ClaimType::outpatient;
    if (u < 0.87) return ClaimType::inpatient;
    if (u < 0.94) return ClaimType::home_health;
    return ClaimType::skilled_nursing;
  }

  CodedItem background_item(Rng& c, ClaimType type, Date d) const {
    const auto t = static_cast<std::size_t>(type);
    const auto& mix = claim_mixes()[t];
    double u = c.uniform() * total_weight_[t];
    const SystemWeight* pick = &mix.back();
    for (const auto& w : mix) {
      if (u < w.weight) {
        pick = &w;
        break;
      }
      u -= w.weight;
    }
    const CodeSystem system = resolve(*pick, d);
    const auto size = cfg_.vocab_sizes[static_cast<std::size_t>(system)];
    // Squared uniform skews usage toward low indices, like real code usage.
    const double v = c.uniform();
    const auto index = std::min<std::uint32_t>(size - 1, static_cast<std::uint32_t>(v * v * size));
    return {system, background_code(system, index)};
  }

  void add_ckd_signal(Rng& c, Claim& claim, double x, bool on_dialysis) const {
    const int stage = on_dialysis ? 6 : ckd_stage(x);
    if (c.bernoulli(0.35 + 0.5 * std::min(x, 1.0))) claim.items.push_back(ckd_dx(stage, claim.service_date));
    if (c.bernoulli(0.25)) claim.items.push_back({CodeSystem::CCS_DX, "158"});
    if (c.bernoulli(0.25)) {
      const char* hcc = stage <= 3 ? "HCC138" : (stage == 4 ? "HCC137" : "HCC136");
      claim.items.push_back({CodeSystem::HCC, hcc});
    }
    if (claim.claim_type == ClaimType::carrier && c.bernoulli(0.05 + 0.5 * std::min(x, 1.0)))
      claim.items.push_back({CodeSystem::PERFORMER_ROLE, "NEPHROLOGY"});
    // Advanced-CKD care: anemia management and pre-dialysis education.
    const double advanced = kMarkerMax / (1.0 + std::exp(-25.0 * (x - kMarkerMid)));
    if (c.bernoulli(advanced)) claim.items.push_back({CodeSystem::MED_HCPCS, x >= 1.0 ? "J0882" : "J0881"});
    if (c.bernoulli(0.5 * advanced)) claim.items.push_back({CodeSystem::HCPCS_ALPHA, "G0420"});
  }

  const SynthConfig& cfg_;
  Date month0_;
  int months_ = 0;
  std::array<double, kNumClaimTypes> total_weight_{};
};

// Calibration pilot over the cohort's first beneficiaries (same streams as the
// generated cohort). For every CKD beneficiary and every month in which an
// onset is plausible, the realized timeline is generated and its eligible and
// positive 365-day triggers counted; prevalence at a given multiplier is then
// the ratio of expected counts under the onset-month distribution.
struct Pilot {
  struct Counts {
    double eligible = 0;
    double positive = 0;
  };
  struct Patient {
    Latent latent;
    std::vector<int> months;  // candidate onset months, ascending
    std::vector<Counts> at;   // counts when onset falls in months[k]
    Counts none;              // counts without an onset
  };
  std::vector<Patient> patients;
};

constexpr double kNegligibleHazard = 1e-5;

Pilot build_pilot(const SynthConfig& cfg, const Generator& gen, unsigned workers) {
  const auto seed = cfg.seed;
  const auto& sets = ClinicalCodeSets::defaults();
  const Horizons horizons;
  const auto dates = first_of_months(cfg.calibration_range);
  auto count = [&](const ClaimTimeline& tl) {
    Pilot::Counts c;
    for (Date t : dates) {
      if (t > cfg.date_range.end) break;
      if (!check_eligibility(tl, t, sets).empty()) continue;
      c.eligible += 1;
      c.positive += label_trigger(tl, t, sets.rrt, horizons).positive_within(horizons.num_windows() - 1);
    }
    return c;
  };
  const auto n = static_cast<std::size_t>(std::min(cfg.calibration_cohort, cfg.n_beneficiaries));
  std::vector<std::optional<Pilot::Patient>> slots(n);
  parallel_for(n, workers, [&](std::size_t i) {
    auto l = gen.latent(seed, i, gen.make_id(i));
    if (!l.ckd) return;
    Pilot::Patient p;
    p.none = count(gen.emit(l, Onset{}, seed, i, nullptr));
    for (int m = l.first_month; m < gen.months(); ++m) {
      if (gen.monthly_hazard(l, m, 1.0) < kNegligibleHazard) continue;
      const auto on = gen.onset_in(l, m);
      p.months.push_back(m);
      p.at.push_back(on.month < 0 ? p.none : count(gen.emit(l, on, seed, i, nullptr)));
    }
    p.latent = std::move(l);
    slots[i] = std::move(p);
  });
  Pilot pilot;
  for (auto& s : slots)
    if (s) pilot.patients.push_back(std::move(*s));
  return pilot;
}

double expected_prevalence(const Pilot& pilot, const Generator& gen, double multiplier) {
  double num = 0.0, den = 0.0;
  for (const auto& p : pilot.patients) {
    double survival = 1.0, onset_mass = 0.0;
    std::size_t k = 0;
    for (int m = p.latent.first_month; m < gen.months() && k < p.months.size(); ++m) {
      const double h = gen.monthly_hazard(p.latent, m, multiplier);
      if (m == p.months[k]) {
        const double w = survival * h;
        num += w * p.at[k].positive;
        den += w * p.at[k].eligible;
        onset_mass += w;
        ++k;
      }
      survival *= 1.0 - h;
    }
    const double rest = std::max(0.0, 1.0 - onset_mass);
    num += rest * p.none.positive;
    den += rest * p.none.eligible;
  }
  return den > 0.0 ? num / den : 0.0;
}

void check_probability(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("synth: ") + name + " must be in [0, 1]");
}

}  // namespace

std::string_view to_string(EventType type) { return kEventNames[static_cast<std::size_t>(type)]; }

std::array<std::uint32_t, kNumCodeSystems> default_vocab_sizes() {
  return {300, 400, 120, 60, 80, 80, 60, 300, 150, 60, 30, 6, 10, 12, 150, 200, 80, 40, 80, 60, 200};
}

void SynthConfig::validate() const {
  if (n_beneficiaries < 1) throw ConfigError("synth: n_beneficiaries must be >= 1");
  if (!(date_range.start < date_range.end)) throw ConfigError("synth: start must precede end");
  check_probability(ckd_fraction, "ckd_fraction");
  check_probability(monthly_hazard_scale, "monthly_hazard_scale");
  check_probability(target_365d_prevalence, "target_365d_prevalence");
  check_probability(access_creation_fraction, "access_creation_fraction");
  check_probability(transplant_fraction, "transplant_fraction");
  if (!(claims_rate >= 0.0) || !std::isfinite(claims_rate)) throw ConfigError("synth: claims_rate must be >= 0");
  for (auto v : vocab_sizes)
    if (v == 0) throw ConfigError("synth: vocab sizes must be positive");
  if (calibration_cohort == 0) throw ConfigError("synth: calibration_cohort must be positive");
}

SynthConfig SynthConfig::from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
  SynthConfig c;
  auto date = [](const nlohmann::json& v, const char* key) {
    if (!v.is_string()) throw ConfigError(std::string("synth: ") + key + " must be a YYYY-MM-DD string");
    auto d = Date::parse(v.get<std::string>());
    if (!d) throw ConfigError(std::string("synth: invalid date for ") + key);
    return *d;
  };
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n_beneficiaries") c.n_beneficiaries = v.get<std::uint64_t>();
      else if (key == "start") c.date_range.start = date(v, "start");
      else if (key == "end") c.date_range.end = date(v, "end");
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "ckd_fraction") c.ckd_fraction = v.get<double>();
      else if (key == "monthly_hazard_scale") c.monthly_hazard_scale = v.get<double>();
      else if (key == "target_365d_prevalence") c.target_365d_prevalence = v.get<double>();
      else if (key == "access_creation_fraction") c.access_creation_fraction = v.get<double>();
      else if (key == "transplant_fraction") c.transplant_fraction = v.get<double>();
      else if (key == "claims_rate") c.claims_rate = v.get<double>();
      else if (key == "hazard_mode") {
        const auto s = v.get<std::string>();
        if (s == "progressive") c.hazard_mode = HazardMode::progressive;
        else if (s == "constant") c.hazard_mode = HazardMode::constant;
        else throw ConfigError("synth: hazard_mode must be 'progressive' or 'constant'");
      } else if (key == "vocab_sizes") {
        if (!v.is_object()) throw ConfigError("synth: vocab_sizes must be an object");
        for (const auto& [sys, n] : v.items()) {
          auto system = parse_code_system(sys);
          if (!system) throw ConfigError("synth: unknown code system '" + sys + "' in vocab_sizes");
          c.vocab_sizes[static_cast<std::size_t>(*system)] = n.get<std::uint32_t>();
        }
      } else if (key == "calibration_start") c.calibration_range.start = date(v, "calibration_start");
      else if (key == "calibration_end") c.calibration_range.end = date(v, "calibration_end");
      else if (key == "calibration_cohort") c.calibration_cohort = v.get<std::uint64_t>();
      else throw ConfigError("synth: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string SynthConfig::to_json_text() const {
  nlohmann::ordered_json j;
  j["n_beneficiaries"] = n_beneficiaries;
  j["start"] = date_range.start.iso();
  j["end"] = date_range.end.iso();
  j["seed"] = seed;
  j["ckd_fraction"] = ckd_fraction;
  j["monthly_hazard_scale"] = monthly_hazard_scale;
  j["target_365d_prevalence"] = target_365d_prevalence;
  j["access_creation_fraction"] = access_creation_fraction;
  j["transplant_fraction"] = transplant_fraction;
  j["claims_rate"] = claims_rate;
  j["hazard_mode"] = hazard_mode == HazardMode::progressive ? "progressive" : "constant";
  nlohmann::ordered_json sizes;
  for (std::size_t i = 0; i < kNumCodeSystems; ++i)
    sizes[std::string(to_string(static_cast<CodeSystem>(i)))] = vocab_sizes[i];
  j["vocab_sizes"] = sizes;
  j["calibration_start"] = calibration_range.start.iso();
  j["calibration_end"] = calibration_range.end.iso();
  j["calibration_cohort"] = calibration_cohort;
  return j.dump(2);
}

double pilot_prevalence(const SynthConfig& config, double multiplier) {
  config.validate();
  const Generator gen(config);
  return expected_prevalence(build_pilot(config, gen, 1), gen, multiplier);
}

SynthOutput generate(const SynthConfig& config, unsigned workers) {
  config.validate();
  const Generator gen(config);
  SynthOutput out;

  if (config.target_365d_prevalence > 0.0) {
    const auto pilot = build_pilot(config, gen, workers);
    const double reachable = expected_prevalence(pilot, gen, 1.0);
    if (config.monthly_hazard_scale <= 0.0 || reachable < config.target_365d_prevalence)
      throw ConfigError("synth: target_365d_prevalence " + format_double(config.target_365d_prevalence) +
                        " is unreachable; monthly_hazard_scale " + format_double(config.monthly_hazard_scale) +
                        " yields at most " + format_double(reachable) +
                        " on the calibration pilot (raise monthly_hazard_scale or ckd_fraction)");
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (expected_prevalence(pilot, gen, mid) < config.target_365d_prevalence ? lo : hi) = mid;
    }
    out.hazard_multiplier = hi;
    out.calibrated_prevalence = expected_prevalence(pilot, gen, hi);
  }

  const auto n = static_cast<std::size_t>(config.n_beneficiaries);
  out.dataset.timelines.resize(n);
  std::vector<std::vector<GroundTruthEvent>> events(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto l = gen.latent(config.seed, i, gen.make_id(i));
    const auto on = gen.onset(l, out.hazard_multiplier);
    out.dataset.timelines[i] = gen.emit(l, on, config.seed, i, &events[i]);
  });
  for (auto& e : events) {
    std::sort(e.begin(), e.end(), [](const auto& a, const auto& b) {
      return std::tie(a.date, a.type) < std::tie(b.date, b.type);
    });
    out.events.insert(out.events.end(), e.begin(), e.end());
  }
  return out;
}

std::string serialize_ground_truth(const std::vector<GroundTruthEvent>& events) {
  std::string out;
  for (const auto& e : events) {
    out += e.beneficiary_id;
    out += '\t';
    out += to_string(e.type);
    out += '\t';
    out += e.date.iso();
    out += '\n';
  }
  return out;
}

std::vector<GroundTruthEvent> parse_ground_truth(std::string_view text) {
  std::vector<GroundTruthEvent> out;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, '\t');
    if (f.size() != 3) throw ParseError(line_no, "ground-truth record needs 3 fields");
    GroundTruthEvent e;
    e.beneficiary_id = std::string(f[0]);
    auto it = std::find(kEventNames.begin(), kEventNames.end(), f[1]);
    if (it == kEventNames.end()) throw ParseError(line_no, "unknown event type '" + std::string(f[1]) + "'");
    e.type = static_cast<EventType>(it - kEventNames.begin());
    auto d = Date::parse(f[2]);
    if (!d) throw ParseError(line_no, "invalid event date");
    e.date = *d;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace rrt
