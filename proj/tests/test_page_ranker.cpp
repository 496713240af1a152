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
#include <doctest.h>

#include <algorithm>
#include <random>

#include "agilerec/page_ranker.hpp"
#include "page_oracle.hpp"

using namespace agilerec;

namespace {

Unit unit(std::string id, std::vector<int64_t> courses) {
  return Unit{std::move(id), UnitType::kCustom, std::move(courses)};
}

struct Instance {
  std::vector<Unit> units;
  ScoreMap scores;
};

// Courses drawn from a small pool so units overlap; coarse scores force ties.
Instance random_instance(std::mt19937_64& rng, size_t n_units, size_t max_courses) {
  Instance inst;
  const int64_t pool = static_cast<int64_t>(max_courses) * 2;
  for (int64_t c = 1; c <= pool; ++c) inst.scores[c] = static_cast<double>(rng() % 6);
  for (size_t u = 0; u < n_units; ++u) {
    std::vector<int64_t> all;
    for (int64_t c = 1; c <= pool; ++c) all.push_back(c);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(1 + rng() % max_courses);
    inst.units.push_back(unit("u" + std::to_string(rng() % 10), all));
  }
  // unit ids must be unique
  for (size_t u = 0; u < inst.units.size(); ++u) inst.units[u].unit_id += "_" + std::to_string(u);
  return inst;
}

}  // namespace

TEST_CASE("rank_unit sorts by score then course id") {
  CHECK(rank_unit(unit("x", {1, 2, 3}), {{1, 3.0}, {2, 1.0}, {3, 2.0}}) == std::vector<int64_t>{1, 3, 2});
  CHECK(rank_unit(unit("x", {9, 4, 7, 1}), {{9, 1.0}, {4, 1.0}, {7, 1.0}, {1, 1.0}}) ==
        std::vector<int64_t>{1, 4, 7, 9});
  CHECK_THROWS_AS(rank_unit(unit("x", {1, 2}), {{1, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(rank_unit(unit("x", {1, 1}), {{1, 1.0}}), InvalidArgument);
}

TEST_CASE("rank_unit on a 24-course unit matches the reference sort") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int64_t> courses;
    ScoreMap scores;
    for (int64_t c = 100; c < 124; ++c) {
      courses.push_back(c);
      scores[c] = static_cast<double>(rng() % 8) * 0.25;
    }
    std::shuffle(courses.begin(), courses.end(), rng);
    CHECK(rank_unit(unit("x", courses), scores) == oracle::ordered(courses, scores));
  }
}

TEST_CASE("two units sharing a course: hand trace") {
  // A: 1..5 with scores 10,9,8,7,1. B: 1, 6..9 with 10,6,5,4,3.
  ScoreMap s{{1, 10}, {2, 9}, {3, 8}, {4, 7}, {5, 1}, {6, 6}, {7, 5}, {8, 4}, {9, 3}};
  auto page = rank_page({unit("B", {9, 8, 7, 6, 1}), unit("A", {5, 4, 3, 2, 1})}, s);
  REQUIRE(page.units.size() == 2);
  CHECK(page.units[0].unit_id == "A");
  CHECK(page.units[0].unit_score == 34.0);
  CHECK(page.units[0].courses == std::vector<int64_t>{1, 2, 3, 4, 5});
  // Course 1 is struck from B; B is rescored without it: 6 + 5 + 4 + 3.
  CHECK(page.units[1].unit_id == "B");
  CHECK(page.units[1].unit_score == 18.0);
  CHECK(page.units[1].courses == std::vector<int64_t>{6, 7, 8, 9});
}

TEST_CASE("greedy can reorder units once shared courses are struck") {
  // Round 1: A = 10+9+1+1 = 21, B = 10+8 = 18, C = 7+7 = 14.
  // Round 2 (course 1 gone): B = 8, C = 14.
  ScoreMap s{{1, 10}, {2, 9}, {3, 1}, {4, 1}, {5, 8}, {6, 7}, {7, 7}};
  auto page = rank_page({unit("A", {1, 2, 3, 4}), unit("B", {1, 5}), unit("C", {6, 7})}, s);
  REQUIRE(page.units.size() == 3);
  CHECK(page.units[0].unit_id == "A");
  CHECK(page.units[1].unit_id == "C");
  CHECK(page.units[2].unit_id == "B");
  CHECK(page.units[2].courses == std::vector<int64_t>{5});
}

TEST_CASE("courses beyond the first four stay in the selected unit and later units") {
  ScoreMap s;
  for (int64_t c = 1; c <= 8; ++c) s[c] = 10.0 - c;
  auto page = rank_page({unit("A", {1, 2, 3, 4, 5, 6}), unit("B", {5, 6, 7})}, s);
  CHECK(page.units[0].courses == std::vector<int64_t>{1, 2, 3, 4, 5, 6});
  CHECK(page.units[1].courses == std::vector<int64_t>{5, 6, 7});
  CHECK(first_view_duplicates(page) == 0);
}

TEST_CASE("disjoint units order by plain top-4 sums") {
  ScoreMap s;
  for (int64_t c = 1; c <= 12; ++c) s[c] = static_cast<double>(c);
  auto page = rank_page({unit("low", {1, 2, 3, 4}), unit("high", {9, 10, 11, 12}), unit("mid", {5, 6, 7, 8})}, s);
  CHECK(page.units[0].unit_id == "high");
  CHECK(page.units[1].unit_id == "mid");
  CHECK(page.units[2].unit_id == "low");
  CHECK(page.units[0].unit_score == 42);
}

TEST_CASE("single unit, equal-sum tie and emptied units") {
  ScoreMap s{{1, 1}, {2, 2}, {3, 3}};
  auto one = rank_page({unit("only", {1, 2, 3})}, s);
  REQUIRE(one.units.size() == 1);
  CHECK(one.units[0].courses == std::vector<int64_t>{3, 2, 1});

  auto tie = rank_page({unit("zeta", {3}), unit("alpha", {3})}, s);
  REQUIRE(tie.units.size() == 1);  // zeta empties once alpha takes course 3
  CHECK(tie.units[0].unit_id == "alpha");

  CHECK(rank_page({}, s).units.empty());
  CHECK(rank_page({unit("empty", {})}, s).units.empty());
  CHECK_THROWS_AS(rank_page({unit("a", {1}), unit("a", {2})}, s), InvalidArgument);
}

TEST_CASE("rank_page equals the step-by-step reference on small instances") {
  std::mt19937_64 rng(11);
  size_t checked = 0;
  for (size_t n_units = 1; n_units <= 5; ++n_units) {
    for (size_t max_courses = 1; max_courses <= 8; ++max_courses) {
      for (int rep = 0; rep < 150; ++rep) {
        auto inst = random_instance(rng, n_units, max_courses);
        auto got = rank_page(inst.units, inst.scores);
        auto want = oracle::rank_page(inst.units, inst.scores);
        REQUIRE(got.units.size() == want.size());
        for (size_t i = 0; i < want.size(); ++i) {
          CHECK(got.units[i].unit_id == want[i].unit_id);
          CHECK(got.units[i].courses == want[i].courses);
          CHECK(got.units[i].unit_score == want[i].score);
        }
        ++checked;
      }
    }
  }
  CHECK(checked == 6000);
}

TEST_CASE("first-view dedup and permutation stability on random pages") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    ScoreMap scores;
    for (int64_t c = 0; c < 60; ++c) scores[c] = u(rng);  // distinct with probability 1
    std::vector<Unit> units;
    for (int k = 0; k < 8; ++k) {
      std::vector<int64_t> all(60);
      for (int64_t c = 0; c < 60; ++c) all[c] = c;
      std::shuffle(all.begin(), all.end(), rng);
      all.resize(4 + rng() % 21);
      units.push_back(unit("unit" + std::to_string(k), all));
    }
    auto page = rank_page(units, scores);
    CHECK(first_view_duplicates(page) == 0);
    for (const auto& ru : page.units) CHECK(!ru.courses.empty());
    auto shuffled = units;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto again = rank_page(shuffled, scores);
    REQUIRE(again.units.size() == page.units.size());
    for (size_t i = 0; i < page.units.size(); ++i) {
      CHECK(again.units[i].unit_id == page.units[i].unit_id);
      CHECK(again.units[i].courses == page.units[i].courses);
    }
  }
}

TEST_CASE("baseline layout keeps rule order, is seeded and dedups") {
  std::vector<Unit> units;
  for (int k = 0; k < 5; ++k) {
    std::vector<int64_t> c;
    for (int64_t i = 0; i < 10; ++i) c.push_back(k * 3 + i);
    units.push_back(unit("r" + std::to_string(k), c));
  }
  auto a = baseline_page(units, 42);
  auto b = baseline_page(units, 42);
  auto c = baseline_page(units, 43);
  CHECK(first_view_duplicates(a) == 0);
  bool differs = false;
  for (size_t i = 0; i < a.units.size(); ++i) {
    CHECK(a.units[i].courses == b.units[i].courses);
    if (i < c.units.size()) differs = differs || a.units[i].courses != c.units[i].courses;
  }
  CHECK(differs);
  for (size_t i = 1; i < a.units.size(); ++i) CHECK(a.units[i - 1].unit_id < a.units[i].unit_id);
}

TEST_CASE("unit type names round trip") {
  for (auto t : {UnitType::kBecauseYouSearched, UnitType::kBecauseYouEnrolled, UnitType::kAlsoViewed,
                 UnitType::kNewNoteworthy, UnitType::kNowViewing, UnitType::kBestsellers, UnitType::kCustom}) {
    CHECK(parse_unit_type(to_string(t)) == t);
  }
  CHECK_THROWS_AS(parse_unit_type("trending"), InvalidArgument);
}
