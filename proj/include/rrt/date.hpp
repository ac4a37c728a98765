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

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace rrt {

/// A proleptic Gregorian calendar day, stored as days since 1970-01-01.
/// There is no time-of-day: claims carry dates only.
class Date {
 public:
  constexpr Date() = default;

  static constexpr Date from_days(std::int32_t days) { return Date(days); }
  /// Throws std::invalid_argument for an impossible calendar date.
  static Date from_ymd(int year, unsigned month, unsigned day);
  /// Strict YYYY-MM-DD; returns nullopt on anything else.
  static std::optional<Date> parse(std::string_view iso);

  constexpr std::int32_t days() const { return days_; }
  int year() const;
  unsigned month() const;
  unsigned day() const;

  constexpr Date plus_days(std::int32_t n) const { return Date(days_ + n); }
  Date first_of_next_month() const;
  bool is_first_of_month() const { return day() == 1; }

  std::string iso() const;

  constexpr auto operator<=>(const Date&) const = default;
  friend constexpr std::int32_t operator-(Date a, Date b) { return a.days_ - b.days_; }

 private:
  constexpr explicit Date(std::int32_t days) : days_(days) {}
  std::int32_t days_ = 0;
};

bool is_leap_year(int year);
unsigned days_in_month(int year, unsigned month);

/// Inclusive calendar range.
struct DateRange {
  Date start;
  Date end;
  bool contains(Date d) const { return start <= d && d <= end; }
};

}  // namespace rrt
