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

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "agilerec/cube.hpp"
#include "cube_oracle.hpp"

using namespace agilerec;

namespace {

std::string fixture(const char* name) { return std::string(AGILEREC_FIXTURES) + "/" + name; }

ExperimentConfig experiment(const std::string& id, const std::string& control, const std::string& test) {
  ExperimentConfig c;
  c.experiment_id = id;
  c.salt = id;
  c.start_date = Date::parse("2015-09-01");
  c.variants.push_back({control, 0.5, {}, RankerMode::kBaseline, {}, true});
  c.variants.push_back({test, 0.5, {}, RankerMode::kScored, {}, false});
  return c;
}

const CubeCell& find_cell(const CubeBuild& b, const std::string& cube, const std::string& bin,
                          const std::string& tag) {
  for (const auto& c : b.cells) {
    if (c.cube == cube && c.bin == bin && c.variant_tag == tag) return c;
  }
  FAIL("no cell " << cube << "/" << bin << "/" << tag);
  throw std::logic_error("unreachable");
}

MeasureAggregate sample(std::initializer_list<double> xs) {
  MeasureAggregate a;
  for (double x : xs) a.add(x);
  return a;
}

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

const DateRange kSeptember{Date::parse("2015-09-01"), Date::parse("2015-09-30")};

// Random slate and direct-landing traffic across two arms plus untagged rows.
void random_log(FunnelStore& store, uint64_t seed, int events) {
  std::mt19937_64 rng(seed);
  std::vector<RawEvent> batch;
  const char* tags[] = {"r-ctl", "r-test", ""};
  const PageContext contexts[] = {PageContext::kFeatured, PageContext::kSearch, PageContext::kEmail,
                                  PageContext::kCourseLanding};
  for (int i = 0; i < events; ++i) {
    RawEvent e;
    e.visitor_id = "v" + std::to_string(rng() % 300);
    e.course_id = static_cast<int64_t>(rng() % 40) + 1;
    e.date = Date::parse("2015-09-01") + static_cast<int32_t>(rng() % 10);
    e.page_context = contexts[rng() % 4];
    // A visitor keeps one arm; a few rows stay untagged.
    const auto vh = std::hash<std::string>{}(e.visitor_id);
    e.variant_tag = rng() % 20 == 0 ? tags[2] : tags[vh % 2];
    if (is_slate_context(e.page_context)) {
      e.impressions = static_cast<int64_t>(rng() % 3) + 1;
      e.clicks = static_cast<int64_t>(rng() % (e.impressions + 1));
      e.enrollments = e.clicks && rng() % 3 == 0 ? 1 : 0;
    } else {
      e.enrollments = rng() % 2;
    }
    if (e.enrollments) {
      e.revenue = static_cast<double>(rng() % 5000) / 100.0;
      e.minutes_consumed = static_cast<double>(rng() % 10000) / 16.0;
      if (rng() % 2) e.nps_response = static_cast<int>(rng() % 11);
    }
    batch.push_back(e);
  }
  auto r = store.ingest_events(batch);
  REQUIRE(r.rejects.empty());
}

}  // namespace

TEST_CASE("five-row fixture: page_context cells by hand") {
  FunnelStore store;
  std::ifstream in(fixture("five_events.ndjson"));
  REQUIRE(store.ingest_ndjson(in).rejects.empty());
  const auto build = build_cubes(*store.snapshot(), experiment("fx", "ctl", "test"), kSeptember, {"page_context"});
  REQUIRE(build.cubes == std::vector<std::string>{"_all", "page_context"});
  // 2 coordinates (one visitor-day per arm) x (1 + 3 bins).
  CHECK(build.cells.size() == 8);

  const auto& featured_ctl = find_cell(build, "page_context", "featured", "ctl");
  CHECK(featured_ctl.visitor_newness == "new");
  CHECK(featured_ctl[Measure::kImpressions] == MeasureAggregate{3, 9, 1});
  CHECK(featured_ctl[Measure::kClicks] == MeasureAggregate{2, 4, 1});
  CHECK(featured_ctl[Measure::kEnrollments] == MeasureAggregate{1, 1, 1});
  CHECK(featured_ctl[Measure::kRevenue] == MeasureAggregate{20, 400, 1});
  CHECK(featured_ctl[Measure::kMinutesConsumed] == MeasureAggregate{45.5, 2070.25, 1});
  CHECK(featured_ctl[Measure::kNps] == MeasureAggregate{9, 81, 1});

  // The test arm's visitor-day never touched featured: zeros, still counted.
  const auto& featured_test = find_cell(build, "page_context", "featured", "test");
  CHECK(featured_test[Measure::kImpressions] == MeasureAggregate{0, 0, 1});
  CHECK(featured_test[Measure::kNps] == MeasureAggregate{0, 0, 0});

  CHECK(find_cell(build, "page_context", "search", "test")[Measure::kImpressions] == MeasureAggregate{2, 4, 1});
  CHECK(find_cell(build, "page_context", "search", "test")[Measure::kClicks] == MeasureAggregate{1, 1, 1});
  CHECK(find_cell(build, "page_context", "email", "test")[Measure::kMinutesConsumed] ==
        MeasureAggregate{10.25, 105.0625, 1});
  CHECK(find_cell(build, "page_context", "email", "ctl")[Measure::kEnrollments] == MeasureAggregate{0, 0, 1});

  const auto& all_test = find_cell(build, "_all", "all", "test");
  CHECK(all_test[Measure::kImpressions] == MeasureAggregate{2, 4, 1});
  CHECK(all_test[Measure::kEnrollments] == MeasureAggregate{1, 1, 1});
  CHECK(all_test[Measure::kMinutesConsumed] == MeasureAggregate{10.25, 105.0625, 1});
}

TEST_CASE("single visitor-day, single row") {
  FunnelStore store;
  RawEvent e;
  e.visitor_id = "solo";
  e.course_id = 3;
  e.date = Date::parse("2015-09-03");
  e.variant_tag = "s-test";
  e.impressions = 7;
  e.clicks = 2;
  store.ingest_events({e});
  const auto build = build_cubes(*store.snapshot(), experiment("s", "s-ctl", "s-test"), kSeptember, {"course_id"});
  const auto& cell = find_cell(build, "course_id", "3", "s-test");
  CHECK(cell[Measure::kImpressions] == MeasureAggregate{7, 49, 1});
  CHECK(cell[Measure::kClicks] == MeasureAggregate{2, 4, 1});
}

TEST_CASE("cubes match a brute-force recomputation from raw rows") {
  FunnelStore store;
  random_log(store, 11, 20000);
  std::vector<CourseDimension> courses;
  for (int64_t c = 1; c <= 40; ++c) courses.push_back({c, c % 6, c % 3, c % 4 == 0 ? 0.0 : 19.99, Date::parse("2015-01-01")});
  store.register_courses(courses);
  auto snap = store.snapshot();
  const auto exp = experiment("r", "r-ctl", "r-test");
  const std::vector<std::string> numerators = {"page_context", "course_id", "course.subcategory_id"};
  const auto build = build_cubes(*snap, exp, kSeptember, numerators);
  for (const auto& cube : build.cubes) {
    CAPTURE(cube);
    std::string why;
    CHECK_MESSAGE(oracle::equal(oracle::cells(*snap, {"r-ctl", "r-test"}, kSeptember, cube),
                                oracle::collapse(build, cube), &why),
                  why);
  }
}

TEST_CASE("marginal consistency and conservation") {
  FunnelStore store;
  random_log(store, 5, 8000);
  auto snap = store.snapshot();
  const auto build = build_cubes(*snap, experiment("r", "r-ctl", "r-test"), kSeptember, {"page_context", "course_id"});

  Measures store_totals;
  for (const auto& r : snap->rows) {
    if (r.key.variant_tag == "r-ctl" || r.key.variant_tag == "r-test") store_totals += r.measures;
  }
  for (const std::string cube : {"_all", "page_context", "course_id"}) {
    // Collapse the numerator: per coordinate sums must equal the _all cube.
    std::map<std::tuple<std::string, int32_t, std::string>, std::array<MeasureAggregate, kMeasureCount>> by_coord;
    std::map<std::tuple<std::string, int32_t, std::string>, std::array<MeasureAggregate, kMeasureCount>> all;
    for (const auto& c : build.cells) {
      const auto key = std::make_tuple(c.variant_tag, c.date.days(), c.visitor_newness);
      if (c.cube == cube) {
        for (int m = 0; m < kMeasureCount; ++m) {
          by_coord[key][m].sum_x += c.measures[m].sum_x;
          by_coord[key][m].sum_x2 += c.measures[m].sum_x2;
          by_coord[key][m].n = c.measures[m].n;  // same visitor-days in every bin
        }
      }
      if (c.cube == "_all") all[key] = c.measures;
    }
    REQUIRE(by_coord.size() == all.size());
    for (const auto& [key, m] : by_coord) {
      const auto& a = all.at(key);
      for (int i = 0; i < kMeasureCount; ++i) {
        if (static_cast<Measure>(i) == Measure::kNps) continue;
        CHECK(m[i].sum_x == doctest::Approx(a[i].sum_x).epsilon(1e-12));
        CHECK(m[i].n == a[i].n);
        // Nonnegative measures: splitting a unit's value across bins never
        // increases its square.
        CHECK(m[i].sum_x2 <= a[i].sum_x2 * (1 + 1e-12));
      }
    }
    double impressions = 0, revenue = 0;
    for (const auto& c : build.cells) {
      if (c.cube != cube) continue;
      impressions += c[Measure::kImpressions].sum_x;
      revenue += c[Measure::kRevenue].sum_x;
    }
    CHECK(impressions == static_cast<double>(store_totals.impressions));
    CHECK(revenue == doctest::Approx(store_totals.revenue).epsilon(1e-12));
  }
  for (const auto& c : build.cells) {
    for (const auto& a : c.measures) {
      CHECK(a.n >= 0);
      if (a.n > 0) CHECK(a.sum_x2 >= a.sum_x * a.sum_x / static_cast<double>(a.n) * (1 - 1e-12));
    }
  }
}

TEST_CASE("dimension classification") {
  FunnelStore store;
  random_log(store, 3, 200);
  store.register_dimension("visitor", {"visitor_id"},
                           DimensionTable({"visitor_id", "country"}, {{"v1", "US"}, {"v2", "TR"}}));
  store.register_dimension("visitor_day", {"visitor_id", "date"},
                           DimensionTable({"visitor_id", "date", "device"}, {{"v1", "2015-09-01", "mobile"}}));
  store.register_courses({{1, 10, 1, 0, Date::parse("2015-01-01")}});
  auto snap = store.snapshot();
  CHECK(classify_dimension(*snap, "page_context").kind == DimensionKind::kNumerator);
  CHECK(classify_dimension(*snap, "course.category_id").kind == DimensionKind::kNumerator);
  CHECK(classify_dimension(*snap, "visitor.country").kind == DimensionKind::kDenominator);
  CHECK(classify_dimension(*snap, "visitor_day.device").kind == DimensionKind::kDenominator);
  CHECK_THROWS_AS(classify_dimension(*snap, "visitor.age"), NotFound);
  CHECK_THROWS_AS(classify_dimension(*snap, "nope.x"), NotFound);

  const auto exp = experiment("r", "r-ctl", "r-test");
  CHECK_THROWS_AS(build_cubes(*snap, exp, kSeptember, {"visitor.country"}), DimensionClassificationError);
  CHECK_THROWS_AS(build_cubes(*snap, exp, kSeptember, {"date"}), DimensionClassificationError);
  CHECK_THROWS_AS(build_cubes(*snap, exp, kSeptember, {}, {"course.category_id"}), DimensionClassificationError);

  const auto build = build_cubes(*snap, exp, kSeptember, {"page_context"}, {"visitor.country"});
  CHECK(build.denominator_dims == std::vector<std::string>{"visitor.country"});
  int us = 0, missing = 0;
  for (const auto& c : build.cells) {
    REQUIRE(c.denominators.size() == 1);
    us += c.denominators[0].second == "US";
    missing += c.denominators[0].second == kMissingBin;
  }
  CHECK(us > 0);
  CHECK(missing > 0);
}

TEST_CASE("welch t test reference values") {
  auto r = welch_ttest(sample({2, 4, 6}), sample({1, 3, 5}));
  REQUIRE(r.defined);
  CHECK(r.mean_test == 4);
  CHECK(r.mean_control == 3);
  CHECK(std::fabs(r.t_stat - 0.6123724356957945) < 1e-9);
  CHECK(std::fabs(r.df - 4.0) < 1e-9);
  CHECK(r.significant_95 == Significance::kNotSignificant);
  CHECK(std::fabs(*r.diff_pct - 100.0 / 3.0) < 1e-9);
  CHECK(r.small_sample_flag);

  // Unequal sizes and variances.
  r = welch_ttest(sample({10, 12, 14, 16, 18}), sample({1, 2, 3}));
  CHECK(std::fabs(r.t_stat - 7.855844048495725) < 1e-9);
  CHECK(std::fabs(r.df - 5.157894736842106) < 1e-9);
  CHECK(r.significant_95 == Significance::kPositive);
  r = welch_ttest(sample({1, 2, 3}), sample({10, 12, 14, 16, 18}));
  CHECK(r.significant_95 == Significance::kNegative);

  r = welch_ttest(sample({1, 5, 9}), sample({1, 5, 9}));
  CHECK(r.t_stat == 0);
  CHECK(r.significant_95 == Significance::kNotSignificant);

  r = welch_ttest(sample({3, 3, 3}), sample({3, 3}));
  CHECK(r.defined);
  CHECK(r.t_stat == 0);
  CHECK(r.significant_95 == Significance::kNotSignificant);

  r = welch_ttest(sample({3}), sample({1, 2, 3}));
  CHECK(!r.defined);
  CHECK(std::isnan(r.t_stat));
  CHECK(r.significant_95 == Significance::kNotSignificant);
  r = welch_ttest({}, {});
  CHECK(!r.defined);
  CHECK(!r.diff_pct);

  MeasureAggregate a, b;
  for (int i = 0; i < 40; ++i) a.add(i % 7), b.add(i % 5);
  CHECK(!welch_ttest(a, b).small_sample_flag);
}

TEST_CASE("query rotates, filters and matches direct computation") {
  FunnelStore store;
  random_log(store, 21, 6000);
  auto snap = store.snapshot();
  const auto exp = experiment("r", "r-ctl", "r-test");
  AnalyticsTable table;
  table.append(build_cubes(*snap, exp, kSeptember, {"page_context", "course_id"}));

  auto results = table.query({"r", "page_context", Measure::kClicks, {}});
  REQUIRE(results.size() == 4);
  // Direct computation from per-visitor-day values.
  const auto direct = oracle::cells(*snap, {"r-ctl", "r-test"}, kSeptember, "page_context");
  for (const auto& r : results) {
    MeasureAggregate test, ctl;
    for (const auto& [key, aggs] : direct) {
      if (std::get<0>(key) != r.bin) continue;
      auto& dst = std::get<1>(key) == "r-test" ? test : ctl;
      dst.sum_x += aggs[1].sum_x;
      dst.sum_x2 += aggs[1].sum_x2;
      dst.n += aggs[1].n;
    }
    const auto want = welch_ttest(test, ctl);
    CHECK(r.test_variant == "r-test");
    CHECK(r.control_variant == "r-ctl");
    CHECK(r.n_test == want.n_test);
    CHECK(std::fabs(r.t_stat - want.t_stat) < 1e-9);
    CHECK(r.significant_95 == want.significant_95);
  }

  auto one_day = table.query({"r", "_all", Measure::kImpressions, {{"date", "2015-09-03"}}});
  REQUIRE(one_day.size() == 1);
  int64_t units = 0;
  for (const auto& [key, aggs] : oracle::cells(*snap, {"r-ctl", "r-test"}, {Date::parse("2015-09-03"), Date::parse("2015-09-03")}, "_all")) {
    if (std::get<1>(key) == "r-test") units += aggs[0].n;
  }
  CHECK(one_day[0].n_test == units);
  auto span = table.query({"r", "_all", Measure::kImpressions, {{"date", "2015-09-01..2015-09-10"}}});
  auto everything = table.query({"r", "_all", Measure::kImpressions, {}});
  CHECK(span[0].t_stat == everything[0].t_stat);
  auto returning = table.query({"r", "_all", Measure::kImpressions, {{"visitor_newness", "returning"}}});
  auto fresh = table.query({"r", "_all", Measure::kImpressions, {{"visitor_newness", "new"}}});
  CHECK(returning[0].n_test + fresh[0].n_test == everything[0].n_test);

  CHECK_THROWS_AS(table.query({"nope", "_all", Measure::kClicks, {}}), NotFound);
  CHECK_THROWS_AS(table.query({"r", "course.category_id", Measure::kClicks, {}}), NotFound);
  CHECK_THROWS_AS(table.query({"r", "_all", Measure::kClicks, {{"country", "US"}}}), NotFound);
  CHECK_THROWS_AS(table.query({"r", "_all", Measure::kClicks, {{"date", "yesterday"}}}), InvalidArgument);
  CHECK_THROWS_AS(parse_measure("bounces"), InvalidArgument);
}

TEST_CASE("analytics table keeps historical experiments and round trips through CSV") {
  FunnelStore store;
  random_log(store, 8, 3000);
  std::ifstream in(fixture("five_events.ndjson"));
  store.ingest_ndjson(in);
  store.register_dimension("visitor", {"visitor_id"},
                           DimensionTable({"visitor_id", "country"}, {{"v1", "U;S=1%"}, {"v2", "TR"}}));
  auto snap = store.snapshot();
  AnalyticsTable table;
  table.append(build_cubes(*snap, experiment("r", "r-ctl", "r-test"), kSeptember, {"page_context"}));
  auto ended = experiment("fx", "ctl", "test");
  ended.end_date = Date::parse("2015-09-02");
  table.append(build_cubes(*snap, ended, kSeptember, {"page_context"}, {"visitor.country"}));
  CHECK(table.experiments() == std::vector<std::string>{"fx", "r"});

  std::stringstream csv;
  table.write_csv(csv);
  const auto back = AnalyticsTable::read_csv(csv);
  CHECK(back.cell_count() == table.cell_count());
  CHECK(back.experiment("fx").denominator_dims == std::vector<std::string>{"visitor.country"});
  for (const std::string id : {"r", "fx"}) {
    for (const std::string cube : {"_all", "page_context"}) {
      for (int m = 0; m < kMeasureCount; ++m) {
        const CubeQuery q{id, cube, static_cast<Measure>(m), {}};
        const auto a = table.query(q), b = back.query(q);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
          CHECK(a[i].bin == b[i].bin);
          CHECK(a[i].n_test == b[i].n_test);
          CHECK(same(a[i].mean_test, b[i].mean_test));
          CHECK(same(a[i].mean_control, b[i].mean_control));
        }
      }
    }
  }
  auto filtered = back.query({"fx", "_all", Measure::kImpressions, {{"visitor.country", "U;S=1%"}}});
  REQUIRE(filtered.size() == 1);
  CHECK(filtered[0].n_control == 1);
  CHECK(filtered[0].n_test == 0);
  CHECK(!filtered[0].defined);
}
