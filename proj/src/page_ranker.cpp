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
#include "agilerec/page_ranker.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <set>
#include <unordered_set>

namespace agilerec {

namespace {

constexpr std::array<std::string_view, 7> kUnitTypeNames{
    "because-you-searched", "because-you-enrolled", "also-viewed", "new-noteworthy",
    "now-viewing",          "bestsellers",          "custom"};

double top_sum(const std::vector<int64_t>& sorted, const ScoreMap& scores) {
  double s = 0;
  const size_t n = std::min(kUnitVisibleDefault, sorted.size());
  for (size_t i = 0; i < n; ++i) s += scores.at(sorted[i]);
  return s;
}

void check_unique_ids(const std::vector<Unit>& units) {
  std::set<std::string_view> ids;
  for (const auto& u : units) {
    u.validate();
    if (!ids.insert(u.unit_id).second) throw InvalidArgument("duplicate unit id '" + u.unit_id + "'");
  }
}

// Strikes `taken` from every unit in `rest` and drops emptied units.
void strike(std::vector<RankedUnit>& rest, const std::vector<int64_t>& taken) {
  for (auto& u : rest) {
    std::erase_if(u.courses, [&](int64_t c) { return std::find(taken.begin(), taken.end(), c) != taken.end(); });
  }
  std::erase_if(rest, [](const RankedUnit& u) { return u.courses.empty(); });
}

std::vector<int64_t> first_four(const std::vector<int64_t>& courses) {
  return {courses.begin(), courses.begin() + static_cast<ptrdiff_t>(std::min(kUnitVisibleDefault, courses.size()))};
}

}  // namespace

std::string_view to_string(UnitType type) { return kUnitTypeNames[static_cast<size_t>(type)]; }

UnitType parse_unit_type(std::string_view text) {
  for (size_t i = 0; i < kUnitTypeNames.size(); ++i) {
    if (kUnitTypeNames[i] == text) return static_cast<UnitType>(i);
  }
  throw InvalidArgument("unknown unit type '" + std::string(text) + "'");
}

void Unit::validate() const {
  if (unit_id.empty()) throw InvalidArgument("unit without id");
  if (candidates.size() > kUnitMaxCandidates) {
    throw InvalidArgument("unit '" + unit_id + "' has more than 24 candidates");
  }
  std::unordered_set<int64_t> seen;
  for (int64_t c : candidates) {
    if (!seen.insert(c).second) {
      throw InvalidArgument("unit '" + unit_id + "' lists course " + std::to_string(c) + " twice");
    }
  }
}

std::vector<int64_t> rank_unit(const Unit& unit, const ScoreMap& scores) {
  unit.validate();
  std::vector<std::pair<double, int64_t>> keyed;
  keyed.reserve(unit.candidates.size());
  for (int64_t c : unit.candidates) {
    auto it = scores.find(c);
    if (it == scores.end()) {
      throw InvalidArgument("no score for course " + std::to_string(c) + " in unit '" + unit.unit_id + "'");
    }
    keyed.emplace_back(it->second, c);
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  std::vector<int64_t> out;
  out.reserve(keyed.size());
  for (const auto& [s, c] : keyed) out.push_back(c);
  return out;
}

RankedPage rank_page(const std::vector<Unit>& units, const ScoreMap& scores) {
  check_unique_ids(units);
  std::vector<RankedUnit> rest;
  for (const auto& u : units) {
    if (u.candidates.empty()) continue;
    rest.push_back({u.unit_id, u.unit_type, rank_unit(u, scores), 0});
  }
  RankedPage page;
  while (!rest.empty()) {
    size_t best = 0;
    double best_sum = top_sum(rest[0].courses, scores);
    for (size_t i = 1; i < rest.size(); ++i) {
      const double s = top_sum(rest[i].courses, scores);
      if (s > best_sum || (s == best_sum && rest[i].unit_id < rest[best].unit_id)) {
        best = i;
        best_sum = s;
      }
    }
    RankedUnit chosen = std::move(rest[best]);
    rest.erase(rest.begin() + static_cast<ptrdiff_t>(best));
    chosen.unit_score = best_sum;
    strike(rest, first_four(chosen.courses));
    page.units.push_back(std::move(chosen));
  }
  return page;
}

RankedPage baseline_page(const std::vector<Unit>& units, uint64_t seed) {
  check_unique_ids(units);
  std::mt19937_64 rng(seed);
  std::vector<RankedUnit> rest;
  for (const auto& u : units) {
    std::vector<int64_t> courses = u.candidates;
    // Fisher-Yates with explicit bounded draws: identical on every platform.
    for (size_t i = courses.size(); i > 1; --i) {
      const uint64_t j = rng() % i;
      std::swap(courses[i - 1], courses[j]);
    }
    if (!courses.empty()) rest.push_back({u.unit_id, u.unit_type, std::move(courses), 0});
  }
  RankedPage page;
  while (!rest.empty()) {
    RankedUnit chosen = std::move(rest.front());
    rest.erase(rest.begin());
    strike(rest, first_four(chosen.courses));
    page.units.push_back(std::move(chosen));
  }
  return page;
}

size_t first_view_duplicates(const RankedPage& page) {
  std::unordered_set<int64_t> seen;
  size_t dups = 0;
  for (const auto& u : page.units) {
    for (int64_t c : first_four(u.courses)) dups += !seen.insert(c).second;
  }
  return dups;
}

}  // namespace agilerec
