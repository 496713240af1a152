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

#include <filesystem>
#include <random>

#include "agilerec/scoring.hpp"

using namespace agilerec;

namespace {

RawEvent ev(const char* visitor, int64_t course, const char* date, int64_t impressions, int64_t clicks) {
  RawEvent e;
  e.visitor_id = visitor;
  e.course_id = course;
  e.date = Date::parse(date);
  e.impressions = impressions;
  e.clicks = clicks;
  e.page_context = PageContext::kFeatured;
  return e;
}

std::shared_ptr<const RegressionTree> constant_tree(double value) {
  return std::make_shared<const RegressionTree>(course_feature_schema(), "target",
                                                std::vector<TreeNode>{{value, 1, std::nullopt, -1, -1, true}});
}

std::shared_ptr<FunnelStore> small_store() {
  auto store = std::make_shared<FunnelStore>();
  store->register_courses({{1, 1, 1, 10.0, Date::parse("2015-01-01")},
                           {2, 1, 1, 0.0, Date::parse("2015-01-01")},
                           {3, 2, 1, 25.0, Date::parse("2015-01-01")}});
  store->ingest_events({ev("pos", 1, "2015-09-01", 1, 1), ev("neg", 1, "2015-09-01", 1, 0),
                        ev("x", 2, "2015-09-01", 5, 1), ev("x", 3, "2015-09-01", 5, 0)});
  return store;
}

// Random marketplace plus an EPMI tree trained on it.
struct World {
  std::shared_ptr<FunnelStore> store = std::make_shared<FunnelStore>();
  std::shared_ptr<FeatureEngine> engine;
  ScoreModels models;
  std::vector<std::string> visitors;
  std::vector<int64_t> courses;
  Date as_of;
};

World random_world(uint64_t seed) {
  World w;
  std::mt19937_64 rng(seed);
  std::vector<CourseDimension> catalog;
  for (int64_t c = 1; c <= 40; ++c) {
    catalog.push_back({c, c % 5, 1, c % 3 == 0 ? 0.0 : 5.0 * c, Date::parse("2015-01-01")});
    w.courses.push_back(c);
  }
  w.store->register_courses(catalog);
  std::vector<RawEvent> batch;
  for (int i = 0; i < 6000; ++i) {
    RawEvent e;
    e.visitor_id = "v" + std::to_string(rng() % 50);
    e.course_id = 1 + static_cast<int64_t>(rng() % 40);
    e.date = Date::parse("2015-06-01") + static_cast<int32_t>(rng() % 60);
    e.page_context = PageContext::kFeatured;
    e.impressions = 1 + static_cast<int64_t>(rng() % 3);
    e.clicks = static_cast<int64_t>(rng() % (e.impressions + 1));
    e.enrollments = e.clicks && (rng() % 4 == 0) ? 1 : 0;
    e.minutes_consumed = e.enrollments * 30.0;
    if (e.enrollments) e.nps_response = static_cast<int>(rng() % 11);
    batch.push_back(e);
  }
  w.store->ingest_events(batch);
  w.engine = std::make_shared<FeatureEngine>(w.store->snapshot());
  const DateRange range{Date::parse("2015-06-15"), Date::parse("2015-07-30")};
  for (auto t : {ModelTarget::kEpmi, ModelTarget::kCpe, ModelTarget::kNpe}) {
    auto tree = std::make_shared<const RegressionTree>(
        train_tree(build_training_set(*w.engine, t, range), {5, 5, 1e-6}));
    (t == ModelTarget::kEpmi ? w.models.epmi : t == ModelTarget::kCpe ? w.models.cpe : w.models.npe) = tree;
  }
  for (int v = 0; v < 60; ++v) w.visitors.push_back("v" + std::to_string(v));  // v50..v59 are cold
  w.as_of = Date::parse("2015-07-31");
  return w;
}

}  // namespace

TEST_CASE("score formula hand arithmetic") {
  CHECK(combine_score(2.0, 10, 30, 0.4, InterestState::kNull, {1, 1, 1, 0, 1}) == 240.0);
  CHECK(combine_score(2.0, 10, 30, 0.4, InterestState::kPositive, {1, 1, 1, 1, 1}) == 744.0);
  CHECK(combine_score(2.0, 10, 30, 0.4, InterestState::kNegative, {1, 1, 1, 2, 1}) ==
        doctest::Approx(240.0 * 0.64));
  CHECK(combine_score(2.0, 0, 30, 0.4, InterestState::kNull, {1, 0, 0, 0, 1}) == 2.0);  // free course clamp
  CHECK(combine_score(-0.5, 10, 30, 0.4, InterestState::kNull, {}) == 0.0);
}

TEST_CASE("presets") {
  CHECK(ScoreParams::preset("enrollment") == ScoreParams{0, 0, 0, 0, 1});
  CHECK(ScoreParams::preset("consumption") == ScoreParams{0, 1, 0, 0, 1});
  CHECK(ScoreParams::preset("revenue") == ScoreParams{1, 0, 0, 0, 1});
  CHECK(ScoreParams::preset("quality") == ScoreParams{0, 0, 1, 0, 1});
  const auto b = ScoreParams::preset("blended");
  CHECK(b.alpha > 0);
  CHECK(b.alpha < 1);
  CHECK_THROWS_AS(ScoreParams::preset("greedy"), InvalidArgument);
  CHECK_THROWS_AS((ScoreParams{-1, 0, 0, 0, 1}.validate()), InvalidArgument);
  CHECK_THROWS_AS((ScoreParams{0, 0, 0, 0, 0}.validate()), InvalidArgument);
}

TEST_CASE("engine score matches the formula on the visitor's features") {
  auto store = small_store();
  auto engine = std::make_shared<FeatureEngine>(store->snapshot());
  ScoringEngine scoring(engine, {constant_tree(2.0), constant_tree(30.0), constant_tree(0.4)});
  const Date as_of = Date::parse("2015-09-02");
  const ScoreParams p{1, 1, 1, 0, 1};
  CHECK(scoring.score("pos", 1, as_of, p) == 240.0);
  CHECK(scoring.score("pos", 1, as_of, {1, 1, 1, 1, 1}) == 744.0);
  CHECK(scoring.score("neg", 1, as_of, {1, 1, 1, 1, 1}) == doctest::Approx(240.0 * 0.8));
  CHECK(scoring.score("cold", 1, as_of, {1, 1, 1, 1, 1}) == 240.0);
  CHECK(scoring.score("cold", 2, as_of, {1, 0, 0, 0, 1}) == 2.0);
  CHECK_THROWS_AS(scoring.score("cold", 99, as_of, p), NotFound);

  ScoringEngine epmi_only(engine, {constant_tree(2.0), nullptr, nullptr});
  CHECK(epmi_only.score("pos", 1, as_of, ScoreParams::preset("revenue")) == 20.0);
  CHECK_THROWS_AS(epmi_only.score("pos", 1, as_of, ScoreParams::preset("consumption")), Error);
  CHECK_THROWS_AS(ScoringEngine(engine, {}).score("pos", 1, as_of, {}), Error);
}

TEST_CASE("enrollment preset with tau 0 ranks exactly by predicted EPMI") {
  auto w = random_world(1);
  ScoringEngine scoring(w.engine, w.models);
  REQUIRE(w.models.epmi->node_count() > 1);
  const auto aggregates = w.engine->compute_trailing_aggregates(w.as_of);
  for (const auto& v : w.visitors) {
    auto scores = scoring.score_on_request(v, w.courses, w.as_of, ScoreParams::preset("enrollment"));
    const auto profile = w.engine->visitor_profile(v, w.as_of);
    for (const auto& s : scores) {
      const auto fv = w.engine->build_feature_vector(profile, *aggregates, s.course_id, PageContext::kFeatured);
      CHECK(s.score == std::max(0.0, w.models.epmi->predict(fv)));
    }
  }
}

TEST_CASE("monotone in every factor") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 50), e(0, 3);
  for (int i = 0; i < 2000; ++i) {
    const ScoreParams p{e(rng), e(rng), e(rng), e(rng), 1};
    const double ep = u(rng), pr = u(rng), cp = u(rng), np = u(rng) / 50, d = u(rng);
    const double base = combine_score(ep, pr, cp, np, InterestState::kNull, p);
    CHECK(combine_score(ep + d, pr, cp, np, InterestState::kNull, p) >= base);
    CHECK(combine_score(ep, pr + d, cp, np, InterestState::kNull, p) >= base);
    CHECK(combine_score(ep, pr, cp + d, np, InterestState::kNull, p) >= base);
    CHECK(combine_score(ep, pr, cp, np + d / 50, InterestState::kNull, p) >= base);
    CHECK(combine_score(ep, pr, cp, np, InterestState::kPositive, p) >= base);
    CHECK(combine_score(ep, pr, cp, np, InterestState::kNegative, p) <= base);
    CHECK(std::isfinite(base));
    CHECK(base >= 0);
  }
}

TEST_CASE("batch scores equal on-request scores") {
  auto w = random_world(2);
  ScoringEngine scoring(w.engine, w.models);
  const auto params = ScoreParams::preset("blended");
  BatchOptions opts;
  opts.partition_size = 7;
  opts.threads = 3;
  opts.variant_tag = "treat";
  auto batch = scoring.batch_score(w.visitors, w.courses, w.as_of, params, opts);
  CHECK(batch.errors.empty());
  CHECK(batch.partition_count == 9);
  REQUIRE(batch.entries.size() == w.visitors.size());
  for (size_t i = 0; i < w.visitors.size(); ++i) {
    const auto& e = batch.entries[i];
    CHECK(e.visitor_id == w.visitors[i]);
    CHECK(e.variant_tag == "treat");
    auto live = scoring.score_on_request(e.visitor_id, w.courses, w.as_of, params);
    CHECK(live == e.scores);
    for (const auto& s : e.scores) {
      CHECK(std::isfinite(s.score));
      CHECK(s.score >= 0);
    }
  }
  CHECK(scoring.score("v3", 7, w.as_of, params) == batch.entries[3].scores[6].score);

  auto none = scoring.batch_score(w.visitors, {}, w.as_of, params);
  CHECK(none.entries.size() == w.visitors.size());
  for (const auto& e : none.entries) CHECK(e.scores.empty());
}

TEST_CASE("batch failures are reported per partition and can be rerun") {
  auto w = random_world(3);
  ScoringEngine scoring(w.engine, w.models);
  std::vector<int64_t> bad = w.courses;
  bad.push_back(999);
  BatchOptions opts;
  opts.partition_size = 25;
  auto failed = scoring.batch_score(w.visitors, bad, w.as_of, {}, opts);
  CHECK(failed.entries.empty());
  REQUIRE(failed.errors.size() == 3);
  CHECK(failed.errors[1].first_visitor == "v25");

  opts.only_partitions = std::vector<size_t>{2, 0};
  auto rerun = scoring.batch_score(w.visitors, w.courses, w.as_of, {}, opts);
  CHECK(rerun.completed_partitions == std::vector<size_t>{0, 2});
  CHECK(rerun.entries.size() == 25 + 10);
  CHECK(rerun.entries.back().visitor_id == "v59");
  opts.only_partitions = std::vector<size_t>{3};
  CHECK_THROWS_AS(scoring.batch_score(w.visitors, w.courses, w.as_of, {}, opts), InvalidArgument);
}

TEST_CASE("score cache file round trip") {
  ScoreCache cache;
  cache.put({"alice", Date::parse("2015-09-01"), "", {{1, 2.5}, {7, 0.125}}});
  cache.put({"alice", Date::parse("2015-09-01"), "treat", {{1, 3.0}}});
  cache.put({"bob", Date::parse("2015-09-02"), "", {}});
  CHECK_THROWS_AS(cache.put({"bob", Date::parse("2015-09-02"), "", {}}), InvalidArgument);
  CHECK_THROWS_AS(cache.put({"carol", Date::parse("2015-09-02"), "", {{1, -1.0}}}), InvalidArgument);

  const auto path = std::filesystem::temp_directory_path() / "agilerec_score_cache.bin";
  cache.write(path);
  auto back = ScoreCache::read(path);
  CHECK(back.size() == 3);
  const auto* a = back.get("alice");
  REQUIRE(a);
  CHECK(a->as_of == Date::parse("2015-09-01"));
  CHECK(a->scores == std::vector<CourseScore>{{1, 2.5}, {7, 0.125}});
  CHECK(back.get("alice", "treat")->scores[0].score == 3.0);
  CHECK(back.get("nobody") == nullptr);

  // 4 magic + 1 version + 4 count, then "alice": 2+5, 4, 2+0, 4, 2*16
  const auto bytes = read_file(path);
  CHECK(bytes.size() > 9);
  CHECK(static_cast<uint8_t>(bytes[4]) == 1);
  write_file_atomically(path, bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(ScoreCache::read(path), Error);
  std::filesystem::remove(path);
}
