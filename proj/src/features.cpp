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
#include "agilerec/features.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace agilerec {

namespace {

constexpr std::array<double, 3> kBaseMultipliers{0.8, 1.0, 3.1};

double decayed_weight(const SubcategoryInterestSpec& spec, Date as_of, Date last_seen) {
  if (spec.g == SubcategoryInterestSpec::G::kConstant) return 1.0;
  return std::exp2(-static_cast<double>(as_of - last_seen) / spec.half_life_days);
}

double interest_value(const SubcategoryInterestSpec& spec, InterestState s) {
  if (spec.f == SubcategoryInterestSpec::F::kIndicatorPositive) {
    return s == InterestState::kPositive ? 1.0 : 0.0;
  }
  switch (s) {
    case InterestState::kPositive:
      return 1.0;
    case InterestState::kNegative:
      return -1.0;
    case InterestState::kNull:
      break;
  }
  return 0.0;
}

}  // namespace

std::string_view to_string(InterestState state) {
  switch (state) {
    case InterestState::kNegative:
      return "negative";
    case InterestState::kNull:
      return "null";
    case InterestState::kPositive:
      return "positive";
  }
  return "null";
}

double interest_base_multiplier(InterestState state) {
  return kBaseMultipliers[static_cast<size_t>(state)];
}

double interest_multiplier(InterestState state, double tau) {
  if (!(tau >= 0)) throw InvalidArgument("tau must be >= 0");
  return std::pow(interest_base_multiplier(state), tau);
}

std::string_view to_string(ModelTarget target) {
  switch (target) {
    case ModelTarget::kEpmi:
      return "epmi";
    case ModelTarget::kCpe:
      return "cpe";
    case ModelTarget::kNpe:
      return "npe";
  }
  return "epmi";
}

ModelTarget parse_model_target(std::string_view text) {
  if (text == "epmi") return ModelTarget::kEpmi;
  if (text == "cpe") return ModelTarget::kCpe;
  if (text == "npe") return ModelTarget::kNpe;
  throw InvalidArgument("unknown model target '" + std::string(text) + "'");
}

std::shared_ptr<const FeatureSchema> course_feature_schema() {
  static const auto schema = std::make_shared<const FeatureSchema>(std::vector<FeatureDef>{
      {"epmi", FeatureKind::kNumeric, {}},
      {"cpe", FeatureKind::kNumeric, {}},
      {"npe", FeatureKind::kNumeric, {}},
      {"price", FeatureKind::kNumeric, {}},
      {"is_free", FeatureKind::kNumeric, {}},
      {"course_age_days", FeatureKind::kNumeric, {}},
      {"course_interest_state", FeatureKind::kCategorical, {"negative", "null", "positive"}},
      {"subcategory_interest", FeatureKind::kNumeric, {}},
      {"subcategory_seen_count", FeatureKind::kNumeric, {}},
      {"page_context",
       FeatureKind::kCategorical,
       {"featured", "search", "course-landing", "email", "other"}},
  });
  return schema;
}

// ---------------------------------------------------------------------------

AggregateTable::AggregateTable(Date as_of, Priors priors,
                               std::unordered_map<int64_t, TrailingCourseAggregates> courses)
    : as_of_(as_of), priors_(priors), courses_(std::move(courses)) {}

TrailingCourseAggregates AggregateTable::get(int64_t course_id) const {
  if (auto it = courses_.find(course_id); it != courses_.end()) return it->second;
  TrailingCourseAggregates a;
  a.course_id = course_id;
  a.as_of = as_of_;
  a.epmi = priors_.epmi;
  a.cpe = priors_.cpe;
  a.npe = priors_.npe;
  return a;
}

void AggregateTable::write_csv(std::ostream& out) const {
  out << "course_id,as_of,impressions_91d,clicks_91d,enrollments_91d,revenue_91d,minutes_91d,"
         "nps_responses_91d,nps_score_sum_91d,epmi,cpe,npe\n";
  std::vector<int64_t> ids;
  for (const auto& [id, _] : courses_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (int64_t id : ids) {
    const auto& a = courses_.at(id);
    out << id << ',' << a.as_of.to_string() << ',' << a.impressions_91d << ',' << a.clicks_91d
        << ',' << a.enrollments_91d << ',' << format_double(a.revenue_91d) << ','
        << format_double(a.minutes_91d) << ',' << a.nps_responses_91d << ','
        << a.nps_score_sum_91d << ',' << format_double(a.epmi) << ',' << format_double(a.cpe)
        << ',' << format_double(a.npe) << '\n';
  }
}

InterestState VisitorProfile::course_state(int64_t course_id) const {
  auto it = courses.find(course_id);
  return it == courses.end() ? InterestState::kNull : it->second.state;
}

SubcategoryInterest VisitorProfile::subcategory(int64_t subcategory_id) const {
  if (auto it = subcategories.find(subcategory_id); it != subcategories.end()) return it->second;
  return {visitor_id, subcategory_id, kSubcategoryInterestPrior, 0};
}

// ---------------------------------------------------------------------------

FeatureEngine::FeatureEngine(std::shared_ptr<const FunnelSnapshot> snapshot, FeatureConfig config)
    : snapshot_(std::move(snapshot)), config_(config), schema_(course_feature_schema()) {
  if (!(config_.subcategory.half_life_days > 0)) throw InvalidArgument("half-life must be > 0");
  const auto& rows = snapshot_->rows;
  for (uint32_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.is_seen()) visitor_rows_[r.key.visitor_id].push_back(i);
    auto& days = course_days_[r.key.course_id];
    if (days.empty() || days.back().first != r.key.date) days.emplace_back(r.key.date, Measures{});
    days.back().second += r.measures;
  }
  for (auto& [_, idx] : visitor_rows_) {
    std::stable_sort(idx.begin(), idx.end(), [&](uint32_t a, uint32_t b) {
      return rows[a].key.course_id < rows[b].key.course_id;
    });
  }
}

void FeatureEngine::check_as_of(Date as_of) const {
  if (auto first = snapshot_->min_date(); first && as_of < *first) {
    throw InvalidArgument("as_of " + as_of.to_string() + " predates the store start " +
                          first->to_string());
  }
}

void FeatureEngine::set_prior_override(int64_t course_id, Priors priors) {
  std::lock_guard lock(cache_mu_);
  prior_overrides_[course_id] = priors;
  aggregate_cache_.clear();
}

std::shared_ptr<const AggregateTable> FeatureEngine::compute_trailing_aggregates(Date as_of) const {
  check_as_of(as_of);
  std::lock_guard lock(cache_mu_);
  if (auto it = aggregate_cache_.find(as_of); it != aggregate_cache_.end()) return it->second;

  const DateRange window = trailing_window(as_of);
  std::unordered_map<int64_t, TrailingCourseAggregates> courses;
  Measures global;
  for (const auto& [course_id, days] : course_days_) {
    auto lo = std::lower_bound(days.begin(), days.end(), window.from,
                               [](const auto& d, Date v) { return d.first < v; });
    Measures sum;
    for (auto it = lo; it != days.end() && it->first <= window.to; ++it) sum += it->second;
    if (sum == Measures{}) continue;
    global += sum;
    TrailingCourseAggregates a;
    a.course_id = course_id;
    a.as_of = as_of;
    a.impressions_91d = sum.impressions;
    a.clicks_91d = sum.clicks;
    a.enrollments_91d = sum.enrollments;
    a.revenue_91d = sum.revenue;
    a.minutes_91d = sum.minutes_consumed;
    a.nps_responses_91d = sum.nps_responses;
    a.nps_score_sum_91d = sum.nps_score_sum;
    courses.emplace(course_id, a);
  }

  Priors priors = kFallbackPriors;
  if (global.impressions > 0) priors.epmi = 1000.0 * global.enrollments / global.impressions;
  if (global.enrollments > 0) priors.cpe = global.minutes_consumed / global.enrollments;
  if (global.nps_responses > 0) {
    priors.npe = static_cast<double>(global.nps_score_sum) / global.nps_responses / 10.0;
  }

  for (const auto& [id, _] : *snapshot_->courses) {
    if (!courses.contains(id)) courses.emplace(id, TrailingCourseAggregates{id, as_of});
  }
  for (auto& [id, a] : courses) {
    Priors p = priors;
    if (auto o = prior_overrides_.find(id); o != prior_overrides_.end()) p = o->second;
    a.epmi = a.impressions_91d > 0 ? 1000.0 * a.enrollments_91d / a.impressions_91d : p.epmi;
    a.cpe = a.enrollments_91d > 0 ? a.minutes_91d / a.enrollments_91d : p.cpe;
    a.npe = a.nps_responses_91d > 0
                ? static_cast<double>(a.nps_score_sum_91d) / a.nps_responses_91d / 10.0
                : p.npe;
  }
  auto table = std::make_shared<const AggregateTable>(as_of, priors, std::move(courses));
  aggregate_cache_.emplace(as_of, table);
  return table;
}

CourseInterest FeatureEngine::compute_course_interest(const std::string& visitor_id,
                                                      int64_t course_id, Date as_of) const {
  CourseInterest out{visitor_id, course_id, InterestState::kNull};
  auto it = visitor_rows_.find(visitor_id);
  if (it == visitor_rows_.end()) return out;
  const auto& rows = snapshot_->rows;
  const auto& idx = it->second;
  auto lo = std::lower_bound(idx.begin(), idx.end(), course_id,
                             [&](uint32_t i, int64_t c) { return rows[i].key.course_id < c; });
  auto hi = std::upper_bound(lo, idx.end(), course_id,
                             [&](int64_t c, uint32_t i) { return c < rows[i].key.course_id; });
  const DateRange window = trailing_window(as_of);
  std::optional<Date> last;
  bool clicked = false;
  for (auto p = lo; p != hi; ++p) {
    const auto& r = rows[*p];
    if (!window.contains(r.key.date)) continue;
    if (!last || *last < r.key.date) {
      last = r.key.date;
      clicked = false;
    }
    if (r.key.date == *last && r.measures.clicks > 0) clicked = true;
  }
  if (last) out.state = clicked ? InterestState::kPositive : InterestState::kNegative;
  return out;
}

VisitorProfile FeatureEngine::profile_impl(const std::string& visitor_id, Date as_of,
                                           const SubcategoryInterestSpec& spec) const {
  VisitorProfile profile;
  profile.visitor_id = visitor_id;
  profile.as_of = as_of;
  auto it = visitor_rows_.find(visitor_id);
  if (it == visitor_rows_.end()) return profile;

  const auto& rows = snapshot_->rows;
  const DateRange window = trailing_window(as_of);
  struct Last {
    Date date;
    bool clicked = false;
  };
  std::unordered_map<int64_t, Last> last;
  for (uint32_t i : it->second) {
    const auto& r = rows[i];
    if (!window.contains(r.key.date)) continue;
    auto [l, inserted] = last.try_emplace(r.key.course_id, Last{r.key.date, false});
    if (!inserted && l->second.date < r.key.date) l->second = {r.key.date, false};
    if (l->second.date == r.key.date && r.measures.clicks > 0) l->second.clicked = true;
  }

  struct Acc {
    double num = 0;
    double den = 0;
    int64_t seen = 0;
  };
  std::unordered_map<int64_t, Acc> acc;
  for (const auto& [course_id, l] : last) {
    const InterestState s = l.clicked ? InterestState::kPositive : InterestState::kNegative;
    profile.courses[course_id] = {s, l.date};
    const CourseDimension* c = snapshot_->course(course_id);
    if (!c) continue;
    const double g = decayed_weight(spec, as_of, l.date);
    auto& a = acc[c->subcategory_id];
    a.num += interest_value(spec, s) * g;
    a.den += g;
    ++a.seen;
  }
  for (const auto& [sub, a] : acc) {
    profile.subcategories[sub] = {visitor_id, sub, a.den > 0 ? a.num / a.den : kSubcategoryInterestPrior,
                                  a.seen};
  }
  return profile;
}

VisitorProfile FeatureEngine::visitor_profile(const std::string& visitor_id, Date as_of) const {
  check_as_of(as_of);
  return profile_impl(visitor_id, as_of, config_.subcategory);
}

SubcategoryInterest FeatureEngine::compute_subcategory_interest(
    const std::string& visitor_id, int64_t subcategory_id, Date as_of,
    const SubcategoryInterestSpec& spec) const {
  const auto& catalog = *snapshot_->courses;
  const bool known = std::any_of(catalog.begin(), catalog.end(), [&](const auto& kv) {
    return kv.second.subcategory_id == subcategory_id;
  });
  if (!known) throw NotFound("unknown subcategory " + std::to_string(subcategory_id));
  if (!(spec.half_life_days > 0)) throw InvalidArgument("half-life must be > 0");
  return profile_impl(visitor_id, as_of, spec).subcategory(subcategory_id);
}

FeatureVector FeatureEngine::build_feature_vector(const std::string& visitor_id, int64_t course_id,
                                                  Date as_of, PageContext context) const {
  if (!snapshot_->course(course_id)) throw NotFound("unknown course " + std::to_string(course_id));
  auto aggregates = compute_trailing_aggregates(as_of);
  return build_feature_vector(visitor_profile(visitor_id, as_of), *aggregates, course_id, context);
}

FeatureVector FeatureEngine::build_feature_vector(const VisitorProfile& profile,
                                                  const AggregateTable& aggregates,
                                                  int64_t course_id, PageContext context) const {
  const CourseDimension* course = snapshot_->course(course_id);
  if (!course) throw NotFound("unknown course " + std::to_string(course_id));
  const auto agg = aggregates.get(course_id);
  const auto sub = profile.subcategory(course->subcategory_id);
  FeatureVector v;
  v.schema = schema_;
  v.values = {
      agg.epmi,
      agg.cpe,
      agg.npe,
      course->price,
      course->is_free() ? 1.0 : 0.0,
      static_cast<double>(profile.as_of - course->published_date),
      static_cast<double>(profile.course_state(course_id)),
      sub.value,
      static_cast<double>(sub.seen_count),
      static_cast<double>(context),
  };
  return v;
}

// ---------------------------------------------------------------------------

TrainingSet build_training_set(const FeatureEngine& engine, ModelTarget target, DateRange range,
                               bool aggregate) {
  const auto& snap = engine.snapshot();
  TrainingSet out;
  out.schema = course_feature_schema();
  const auto first = snap.min_date();
  if (!first) return out;
  // Features need at least one day of history.
  if (range.from <= *first) range.from = *first + 1;

  struct Acc {
    double weight = 0;
    double sum = 0;
  };
  std::map<std::vector<double>, Acc> groups;
  auto emit = [&](std::vector<double> features, double weight, double sum) {
    if (aggregate) {
      auto& a = groups[std::move(features)];
      a.weight += weight;
      a.sum += sum;
    } else {
      out.rows.push_back({std::move(features), sum / weight, weight});
    }
  };

  // Profiles are reused across consecutive rows of the same visitor-day.
  std::string cached_visitor;
  Date cached_date;
  std::optional<VisitorProfile> profile;
  std::shared_ptr<const AggregateTable> aggregates;
  auto features_for = [&](const std::string& visitor, int64_t course, Date date,
                          PageContext context) {
    const Date as_of = date - 1;
    if (!aggregates || aggregates->as_of() != as_of) aggregates = engine.compute_trailing_aggregates(as_of);
    if (!profile || cached_visitor != visitor || cached_date != date) {
      profile = engine.visitor_profile(visitor, as_of);
      cached_visitor = visitor;
      cached_date = date;
    }
    return engine.build_feature_vector(*profile, *aggregates, course, context).values;
  };

  if (target == ModelTarget::kEpmi) {
    auto [lo, hi] = snap.date_span(range);
    for (size_t i = lo; i < hi; ++i) {
      const auto& r = snap.rows[i];
      if (!r.is_seen() || !snap.course(r.key.course_id)) continue;
      emit(features_for(r.key.visitor_id, r.key.course_id, r.key.date, r.key.page_context),
           static_cast<double>(r.measures.impressions), 1000.0 * r.measures.enrollments);
    }
  } else {
    auto enrollments = build_enrollment_funnel(snap, *snap.max_date());
    std::stable_sort(enrollments.begin(), enrollments.end(), [](const auto& a, const auto& b) {
      if (a.enrollment_date != b.enrollment_date) return a.enrollment_date < b.enrollment_date;
      return a.visitor_id < b.visitor_id;
    });
    for (const auto& e : enrollments) {
      if (!range.contains(e.enrollment_date) || !snap.course(e.course_id)) continue;
      double value = e.minutes_consumed;
      if (target == ModelTarget::kNpe) {
        if (!e.nps_response) continue;
        value = *e.nps_response / 10.0;
      }
      emit(features_for(e.visitor_id, e.course_id, e.enrollment_date, e.page_context), 1.0, value);
    }
  }

  if (aggregate) {
    out.rows.reserve(groups.size());
    for (auto& [features, a] : groups) out.rows.push_back({features, a.sum / a.weight, a.weight});
  }
  return out;
}

double InterestStateTotals::epmi(InterestState s) const {
  const auto i = static_cast<size_t>(s);
  return impressions[i] > 0 ? 1000.0 * enrollments[i] / impressions[i] : 0.0;
}

std::array<double, 3> InterestStateTotals::ratios() const {
  const double base = epmi(InterestState::kNull);
  std::array<double, 3> out{};
  for (size_t i = 0; i < 3; ++i) out[i] = base > 0 ? epmi(static_cast<InterestState>(i)) / base : 0.0;
  return out;
}

InterestStateTotals interest_state_totals(const FeatureEngine& engine, DateRange range) {
  InterestStateTotals totals;
  const auto& snap = engine.snapshot();
  auto [lo, hi] = snap.date_span(range);
  for (size_t i = lo; i < hi; ++i) {
    const auto& r = snap.rows[i];
    if (!r.is_seen()) continue;
    const auto state =
        engine.compute_course_interest(r.key.visitor_id, r.key.course_id, r.key.date - 1).state;
    totals.impressions[static_cast<size_t>(state)] += r.measures.impressions;
    totals.enrollments[static_cast<size_t>(state)] += r.measures.enrollments;
  }
  return totals;
}

}  // namespace agilerec
