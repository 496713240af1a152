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

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "agilerec/feature_schema.hpp"
#include "agilerec/funnel_store.hpp"

namespace agilerec {

struct Priors {
  double epmi = 0;
  double cpe = 0;
  double npe = 0;
};

// Used only when the whole marketplace window has no data.
inline constexpr Priors kFallbackPriors{1.0, 1.0, 0.5};

struct TrailingCourseAggregates {
  int64_t course_id = 0;
  Date as_of;
  int64_t impressions_91d = 0;
  int64_t clicks_91d = 0;
  int64_t enrollments_91d = 0;
  double revenue_91d = 0;
  double minutes_91d = 0;
  int64_t nps_responses_91d = 0;
  int64_t nps_score_sum_91d = 0;
  double epmi = 0;  // enrollments per 1000 impressions
  double cpe = 0;   // minutes per enrollment
  double npe = 0;   // mean NPS response / 10
};

class AggregateTable {
 public:
  AggregateTable(Date as_of, Priors priors,
                 std::unordered_map<int64_t, TrailingCourseAggregates> courses);

  Date as_of() const { return as_of_; }
  const Priors& priors() const { return priors_; }
  // Courses without window data come back with prior values.
  TrailingCourseAggregates get(int64_t course_id) const;
  const std::unordered_map<int64_t, TrailingCourseAggregates>& courses() const { return courses_; }

  void write_csv(std::ostream& out) const;

 private:
  Date as_of_;
  Priors priors_;
  std::unordered_map<int64_t, TrailingCourseAggregates> courses_;
};

enum class InterestState : uint8_t { kNegative = 0, kNull = 1, kPositive = 2 };

std::string_view to_string(InterestState state);

struct CourseInterest {
  std::string visitor_id;
  int64_t course_id = 0;
  InterestState state = InterestState::kNull;
};

// Base multipliers 0.8 : 1.0 : 3.1 raised to `tau`.
double interest_multiplier(InterestState state, double tau);
double interest_base_multiplier(InterestState state);

// The configurable f and g of the subcategory interest ratio.
struct SubcategoryInterestSpec {
  enum class F { kIndicatorPositive, kSigned };
  enum class G { kConstant, kRecencyDecay };
  F f = F::kIndicatorPositive;
  G g = G::kConstant;
  double half_life_days = 30;
};

struct SubcategoryInterest {
  std::string visitor_id;
  int64_t subcategory_id = 0;
  double value = 0;
  int64_t seen_count = 0;
};

inline constexpr double kSubcategoryInterestPrior = 0.05;

struct FeatureConfig {
  SubcategoryInterestSpec subcategory;
};

// Per-(visitor, as_of) interest state, computed in one pass over the
// visitor's history and reused for every candidate course.
struct VisitorProfile {
  std::string visitor_id;
  Date as_of;
  struct Seen {
    InterestState state = InterestState::kNull;
    Date last_seen;
  };
  std::unordered_map<int64_t, Seen> courses;
  std::unordered_map<int64_t, SubcategoryInterest> subcategories;

  InterestState course_state(int64_t course_id) const;
  SubcategoryInterest subcategory(int64_t subcategory_id) const;
};

// The single feature layout shared by training and scoring.
std::shared_ptr<const FeatureSchema> course_feature_schema();

class FeatureEngine {
 public:
  explicit FeatureEngine(std::shared_ptr<const FunnelSnapshot> snapshot, FeatureConfig config = {});

  const FunnelSnapshot& snapshot() const { return *snapshot_; }
  std::shared_ptr<const FunnelSnapshot> snapshot_ptr() const { return snapshot_; }
  const FeatureConfig& config() const { return config_; }

  // Window [as_of - 90, as_of]. Cached per as_of; throws when as_of
  // predates the store.
  std::shared_ptr<const AggregateTable> compute_trailing_aggregates(Date as_of) const;

  CourseInterest compute_course_interest(const std::string& visitor_id, int64_t course_id,
                                         Date as_of) const;
  SubcategoryInterest compute_subcategory_interest(const std::string& visitor_id,
                                                   int64_t subcategory_id, Date as_of,
                                                   const SubcategoryInterestSpec& spec) const;
  SubcategoryInterest compute_subcategory_interest(const std::string& visitor_id,
                                                   int64_t subcategory_id, Date as_of) const {
    return compute_subcategory_interest(visitor_id, subcategory_id, as_of, config_.subcategory);
  }

  VisitorProfile visitor_profile(const std::string& visitor_id, Date as_of) const;

  FeatureVector build_feature_vector(const std::string& visitor_id, int64_t course_id, Date as_of,
                                     PageContext context) const;
  FeatureVector build_feature_vector(const VisitorProfile& profile, const AggregateTable& aggregates,
                                     int64_t course_id, PageContext context) const;

  // Hook for curated per-course priors (cold start). Clears cached tables.
  void set_prior_override(int64_t course_id, Priors priors);

 private:
  void check_as_of(Date as_of) const;
  VisitorProfile profile_impl(const std::string& visitor_id, Date as_of,
                              const SubcategoryInterestSpec& spec) const;

  std::shared_ptr<const FunnelSnapshot> snapshot_;
  FeatureConfig config_;
  std::shared_ptr<const FeatureSchema> schema_;
  // Seen rows per visitor, ordered by (course_id, date).
  std::unordered_map<std::string, std::vector<uint32_t>> visitor_rows_;
  // Daily totals per course, ordered by date.
  std::unordered_map<int64_t, std::vector<std::pair<Date, Measures>>> course_days_;
  std::map<int64_t, Priors> prior_overrides_;
  mutable std::mutex cache_mu_;
  mutable std::map<Date, std::shared_ptr<const AggregateTable>> aggregate_cache_;
};

enum class ModelTarget { kEpmi, kCpe, kNpe };

std::string_view to_string(ModelTarget target);
ModelTarget parse_model_target(std::string_view text);

// Training rows for `target` over impression (EPMI) or enrollment (CPE/NPE)
// dates in `range`. Features are built as of the previous day, exactly as
// the scoring path would on that date. Rows with identical features are
// aggregated: weight = impressions (EPMI) or enrollments (CPE/NPE).
TrainingSet build_training_set(const FeatureEngine& engine, ModelTarget target, DateRange range,
                               bool aggregate = true);

// Impressions and enrollments grouped by the prior-day course interest state.
struct InterestStateTotals {
  std::array<int64_t, 3> impressions{};
  std::array<int64_t, 3> enrollments{};

  double epmi(InterestState s) const;
  // EPMI of each state relative to the null state.
  std::array<double, 3> ratios() const;
};

InterestStateTotals interest_state_totals(const FeatureEngine& engine, DateRange range);

}  // namespace agilerec
