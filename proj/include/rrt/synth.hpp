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
#include <string>
#include <string_view>
#include <vector>

#include "rrt/claims.hpp"

namespace rrt {

/// progressive: severity drifts upward every month. constant: severity (and
/// therefore the monthly hazard) is fixed per beneficiary.
enum class HazardMode : std::uint8_t { progressive, constant };

/// Background vocabulary size per code system, in CodeSystem order.
std::array<std::uint32_t, kNumCodeSystems> default_vocab_sizes();

struct SynthConfig {
  std::uint64_t n_beneficiaries = 50000;
  DateRange date_range{Date::from_ymd(2011, 1, 1), Date::from_ymd(2016, 12, 31)};
  std::uint64_t seed = 20240601;
  double ckd_fraction = 0.2;
  /// Upper bound on the monthly RRT hazard (reached at end-stage severity).
  double monthly_hazard_scale = 0.3;
  /// Per-eligible-trigger 365-day RRT label prevalence the generator aims for.
  double target_365d_prevalence = 0.01;
  double access_creation_fraction = 0.65;
  double transplant_fraction = 0.08;
  /// Mean claims per beneficiary-month at zero severity.
  double claims_rate = 0.4;
  HazardMode hazard_mode = HazardMode::progressive;
  std::array<std::uint32_t, kNumCodeSystems> vocab_sizes = default_vocab_sizes();
  /// Trigger months and number of leading beneficiaries used to calibrate the
  /// hazard multiplier.
  DateRange calibration_range{Date::from_ymd(2012, 1, 1), Date::from_ymd(2015, 12, 1)};
  std::uint64_t calibration_cohort = 50000;

  /// Throws ConfigError on the first invalid field.
  void validate() const;

  /// JSON object; absent keys keep their defaults, unknown keys are rejected.
  static SynthConfig from_json_text(std::string_view text);
  std::string to_json_text() const;
};

enum class EventType : std::uint8_t { dialysis, transplant, access_creation, death };
std::string_view to_string(EventType type);

struct GroundTruthEvent {
  std::string beneficiary_id;
  EventType type = EventType::dialysis;
  Date date;
  auto operator<=>(const GroundTruthEvent&) const = default;
};

struct SynthOutput {
  Dataset dataset;
  std::vector<GroundTruthEvent> events;  // sorted by (id, date, type)
  double hazard_multiplier = 0;          // calibrated multiplier on monthly_hazard_scale
  double calibrated_prevalence = 0;      // pilot estimate at that multiplier
};

/// Deterministic in (config, seed) regardless of `workers`. Throws
/// ConfigError when the target prevalence cannot be reached.
SynthOutput generate(const SynthConfig& config, unsigned workers = 1);

/// Estimated per-trigger 365-day prevalence on the calibration pilot for a
/// given hazard multiplier (exposed for diagnostics and tests).
double pilot_prevalence(const SynthConfig& config, double multiplier);

/// "beneficiary_id<TAB>event_type<TAB>date" lines.
std::string serialize_ground_truth(const std::vector<GroundTruthEvent>& events);
std::vector<GroundTruthEvent> parse_ground_truth(std::string_view text);

}  // namespace rrt
