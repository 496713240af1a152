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
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agilerec/experiments.hpp"
#include "agilerec/features.hpp"
#include "agilerec/funnel_store.hpp"
#include "agilerec/page_ranker.hpp"

namespace agilerec {

enum class ScenarioKind { kAa, kUniformLift, kInterestRatios, kExploreVsPopularity };

std::string_view to_string(ScenarioKind kind);
ScenarioKind parse_scenario(std::string_view text);

struct Scenario {
  ScenarioKind kind = ScenarioKind::kAa;
  // uniform_lift: the test arms' click (or enrollment) probability is
  // multiplied by 1 + lift_pct / 100.
  std::string lift_measure = "clicks";
  double lift_pct = 0;
  // interest_ratios: enrollment odds per impression by the prior-day
  // course interest state (negative, null, positive).
  double r_neg = 0.8, r_null = 1.0, r_pos = 3.1;
};

// Behavioral constants are fields so runs are fully described by the config.
struct SimConfig {
  uint64_t seed = 1;
  int n_courses = 200;
  int n_subcategories = 20;
  int n_visitors = 2000;
  int n_days = 14;
  Date start_date = Date::from_ymd(2015, 9, 1);
  double free_course_fraction = 0.25;
  double position_bias_decay = 0.85;  // examination probability factor per unit rank
  Scenario scenario;

  int units_per_page = 6;
  int candidates_per_unit = 24;
  double visit_probability = 0.7;  // per visitor per day
  double appeal_sd = 0.8;          // course appeal ~ N(0, sd)
  double quality_sd = 0.5;         // course quality ~ N(0, sd)
  double affinity_sd = 0.6;        // visitor-subcategory affinity ~ N(0, sd)
  double click_intercept = -2.6;   // logit of the click probability
  double enroll_intercept = -1.4;  // logit of enrollment given a click
  double enroll_appeal_weight = 0.5;
  double nps_response_probability = 0.4;
  double direct_landing_probability = 0.02;  // email enrollments per session
  // explore_vs_popularity: click logit offsets by prior-day course state.
  double fatigue_offset = -3.0;
  double interest_offset = 1.5;
  // interest_ratios: constant click probability and base enrollment
  // probability given a click.
  double ratio_click_probability = 0.2;
  double ratio_enroll_probability = 0.15;

  // Throws InvalidArgument.
  void validate() const;
};

nlohmann::json to_json(const SimConfig& config);
SimConfig sim_config_from_json(const nlohmann::json& j);

struct LatentCourse {
  int64_t course_id = 0;
  double appeal = 0;
  double quality = 0;
  double price = 0;
  int64_t subcategory_id = 0;
};

struct Catalog {
  std::vector<LatentCourse> latent;
  std::vector<CourseDimension> courses;
};

Catalog generate_catalog(const SimConfig& config);

struct SessionRequest {
  const std::string& visitor_id;
  Date date;
  // Assigned variant; null for visitors outside the experiment's traffic.
  const VariantConfig* variant;
  const std::vector<Unit>& units;
  uint64_t seed;  // per-session seed for randomized layouts
};

// Serving-side state rebuilt every simulated night from the store.
struct NightlyState {
  std::shared_ptr<const FunnelSnapshot> snapshot;
  std::shared_ptr<const FeatureEngine> features;
  std::shared_ptr<const AggregateTable> aggregates;  // as of the previous day
};

class SimRanker {
 public:
  virtual ~SimRanker() = default;
  // Called before each day's sessions with state as of the previous day.
  virtual void begin_day(Date date, const NightlyState& state) = 0;
  virtual RankedPage rank(const SessionRequest& request) = 0;
};

// Per variant: baseline layout for RankerMode::kBaseline, otherwise
// combine_score over the nightly trailing aggregates and prior-day interest
// state with the variant's ScoreParams.
class AggregateRanker : public SimRanker {
 public:
  void begin_day(Date date, const NightlyState& state) override;
  RankedPage rank(const SessionRequest& request) override;

 private:
  NightlyState state_;
  Date as_of_;
};

struct SimResult {
  Catalog catalog;
  std::vector<RawEvent> events;  // day, then visitor order
  std::shared_ptr<const FunnelSnapshot> snapshot;
  int64_t sessions = 0;
};

// Runs every day's sessions, ingesting each day into a store and rebuilding
// features overnight. Deterministic for a given config.
SimResult run_sessions(const SimConfig& config, const ExperimentConfig& experiment, SimRanker& ranker);
SimResult run_sessions(const SimConfig& config, const ExperimentConfig& experiment);

// Two 50/50 arms suited to the scenario; ids "<prefix>-control", "<prefix>-test".
ExperimentConfig default_sim_experiment(const SimConfig& config, const std::string& prefix = "sim");

// Share of seen slate impressions whose course is free; nullopt without any.
std::optional<double> measure_free_share(const std::vector<RawEvent>& log,
                                         const std::vector<CourseDimension>& courses);

void write_ndjson(const std::vector<RawEvent>& events, std::ostream& out);

}  // namespace agilerec
