// Copyright 2026 The agilerec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "agilerec/common.hpp"

namespace agilerec {

enum class UnitType {
  kBecauseYouSearched,
  kBecauseYouEnrolled,
  kAlsoViewed,
  kNewNoteworthy,
  kNowViewing,
  kBestsellers,
  kCustom,
};

std::string_view to_string(UnitType type);
UnitType parse_unit_type(std::string_view text);

inline constexpr size_t kUnitVisibleDefault = 4;
inline constexpr size_t kUnitExpandTo = 12;
inline constexpr size_t kUnitMaxCandidates = 24;

struct Unit {
  std::string unit_id;
  UnitType unit_type = UnitType::kCustom;
  std::vector<int64_t> candidates;

  // Unique candidates, at most 24.
  void validate() const;
};

struct RankedUnit {
  std::string unit_id;
  UnitType unit_type = UnitType::kCustom;
  std::vector<int64_t> courses;
  double unit_score = 0;  // top-min(4, n) sum when the unit was selected
};

struct RankedPage {
  std::vector<RankedUnit> units;
};

using ScoreMap = std::unordered_map<int64_t, double>;

// Score descending, ties by course_id ascending. Throws InvalidArgument when
// a candidate has no score.
std::vector<int64_t> rank_unit(const Unit& unit, const ScoreMap& scores);

// Greedy page assembly: repeatedly take the unit with the largest sum of its
// current top-4 scores (ties: lower unit_id), then strike that unit's top 4
// from every remaining unit. Units left empty are dropped.
RankedPage rank_page(const std::vector<Unit>& units, const ScoreMap& scores);

// Control layout: units in the given (rule) order, courses in seeded random
// order per unit, then the same top-4 dedup applied front to back.
RankedPage baseline_page(const std::vector<Unit>& units, uint64_t seed);

// Number of courses repeated across the first-4 slots of different units.
size_t first_view_duplicates(const RankedPage& page);

}  // namespace agilerec
