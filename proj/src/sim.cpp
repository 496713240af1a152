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
#include "agilerec/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace agilerec {

using nlohmann::json;

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t stream_seed(uint64_t seed, uint64_t a, uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Visitor {
  std::string id;
  std::vector<double> affinity;  // per subcategory
  std::vector<Unit> units;       // stable candidate lists
  std::unordered_set<int64_t> owned;
};

constexpr UnitType kUnitTypes[] = {UnitType::kBecauseYouSearched, UnitType::kBecauseYouEnrolled,
                                   UnitType::kAlsoViewed,         UnitType::kNewNoteworthy,
                                   UnitType::kNowViewing,         UnitType::kBestsellers};

std::vector<Visitor> make_visitors(const SimConfig& config, const Catalog& catalog) {
  std::vector<std::vector<int64_t>> by_sub(static_cast<size_t>(config.n_subcategories));
  for (const auto& c : catalog.latent) by_sub[static_cast<size_t>(c.subcategory_id - 1)].push_back(c.course_id);

  std::vector<Visitor> out(static_cast<size_t>(config.n_visitors));
  for (int i = 0; i < config.n_visitors; ++i) {
    std::mt19937_64 rng(stream_seed(config.seed, 0x76697369746f72ull, static_cast<uint64_t>(i)));
    std::normal_distribution<double> affinity(0.0, config.affinity_sd);
    Visitor& v = out[static_cast<size_t>(i)];
    v.id = "u" + std::to_string(i + 1);
    v.affinity.resize(static_cast<size_t>(config.n_subcategories));
    for (auto& a : v.affinity) a = affinity(rng);
    std::uniform_int_distribution<int> sub(0, config.n_subcategories - 1);
    std::uniform_int_distribution<size_t> any(0, catalog.latent.size() - 1);
    for (int u = 0; u < config.units_per_page; ++u) {
      Unit unit;
      unit.unit_id = "unit" + std::to_string(u);
      unit.unit_type = kUnitTypes[u % 6];
      std::vector<int64_t> pool = by_sub[static_cast<size_t>(sub(rng))];
      std::shuffle(pool.begin(), pool.end(), rng);
      std::unordered_set<int64_t> in(pool.begin(), pool.end());
      const size_t want = static_cast<size_t>(config.candidates_per_unit);
      // Pad thin subcategories with courses from anywhere.
      for (int tries = 0; pool.size() < want && tries < 1000; ++tries) {
        const int64_t c = catalog.latent[any(rng)].course_id;
        if (in.insert(c).second) pool.push_back(c);
      }
      if (pool.size() > want) pool.resize(want);
      unit.candidates = std::move(pool);
      v.units.push_back(std::move(unit));
    }
  }
  return out;
}

InterestState state_of(const VisitorProfile* profile, int64_t course_id) {
  return profile ? profile->course_state(course_id) : InterestState::kNull;
}

}  // namespace

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kAa: return "aa";
    case ScenarioKind::kUniformLift: return "uniform_lift";
    case ScenarioKind::kInterestRatios: return "interest_ratios";
    case ScenarioKind::kExploreVsPopularity: break;
  }
  return "explore_vs_popularity";
}

ScenarioKind parse_scenario(std::string_view text) {
  for (auto k : {ScenarioKind::kAa, ScenarioKind::kUniformLift, ScenarioKind::kInterestRatios,
                 ScenarioKind::kExploreVsPopularity}) {
    if (to_string(k) == text) return k;
  }
  throw InvalidArgument("unknown scenario '" + std::string(text) + "'");
}

void SimConfig::validate() const {
  if (n_courses <= 0 || n_subcategories <= 0 || n_visitors <= 0 || n_days <= 0) {
    throw InvalidArgument("sim sizes must be positive");
  }
  if (n_subcategories > n_courses) throw InvalidArgument("more subcategories than courses");
  if (!(free_course_fraction >= 0 && free_course_fraction <= 1)) {
    throw InvalidArgument("free_course_fraction must be in [0, 1]");
  }
  if (!(position_bias_decay > 0 && position_bias_decay <= 1)) {
    throw InvalidArgument("position_bias_decay must be in (0, 1]");
  }
  if (units_per_page <= 0 || candidates_per_unit <= 0 ||
      candidates_per_unit > static_cast<int>(kUnitMaxCandidates)) {
    throw InvalidArgument("units_per_page must be positive and candidates_per_unit in [1, 24]");
  }
  for (double p : {visit_probability, nps_response_probability, direct_landing_probability,
                   ratio_click_probability, ratio_enroll_probability}) {
    if (!(p >= 0 && p <= 1)) throw InvalidArgument("probabilities must be in [0, 1]");
  }
  for (double sd : {appeal_sd, quality_sd, affinity_sd}) {
    if (!(sd >= 0) || !std::isfinite(sd)) throw InvalidArgument("standard deviations must be >= 0");
  }
  if (scenario.kind == ScenarioKind::kUniformLift) {
    if (scenario.lift_measure != "clicks" && scenario.lift_measure != "enrollments") {
      throw InvalidArgument("uniform_lift measure must be clicks or enrollments");
    }
    if (!(scenario.lift_pct > -100) || !std::isfinite(scenario.lift_pct)) {
      throw InvalidArgument("uniform_lift pct must be > -100");
    }
  }
  if (scenario.kind == ScenarioKind::kInterestRatios) {
    const double top = std::max({scenario.r_neg, scenario.r_null, scenario.r_pos});
    if (!(scenario.r_neg > 0 && scenario.r_null > 0 && scenario.r_pos > 0)) {
      throw InvalidArgument("interest ratios must be positive");
    }
    if (ratio_enroll_probability * top / scenario.r_null > 1) {
      throw InvalidArgument("ratio_enroll_probability too large for the planted ratios");
    }
  }
}

json to_json(const SimConfig& c) {
  json scenario = {{"kind", std::string(to_string(c.scenario.kind))}};
  if (c.scenario.kind == ScenarioKind::kUniformLift) {
    scenario["measure"] = c.scenario.lift_measure;
    scenario["pct"] = c.scenario.lift_pct;
  } else if (c.scenario.kind == ScenarioKind::kInterestRatios) {
    scenario["r_neg"] = c.scenario.r_neg;
    scenario["r_null"] = c.scenario.r_null;
    scenario["r_pos"] = c.scenario.r_pos;
  }
  return {{"seed", c.seed},
          {"n_courses", c.n_courses},
          {"n_subcategories", c.n_subcategories},
          {"n_visitors", c.n_visitors},
          {"n_days", c.n_days},
          {"start_date", c.start_date.to_string()},
          {"free_course_fraction", c.free_course_fraction},
          {"position_bias_decay", c.position_bias_decay},
          {"scenario", scenario},
          {"units_per_page", c.units_per_page},
          {"candidates_per_unit", c.candidates_per_unit},
          {"visit_probability", c.visit_probability},
          {"appeal_sd", c.appeal_sd},
          {"quality_sd", c.quality_sd},
          {"affinity_sd", c.affinity_sd},
          {"click_intercept", c.click_intercept},
          {"enroll_intercept", c.enroll_intercept},
          {"enroll_appeal_weight", c.enroll_appeal_weight},
          {"nps_response_probability", c.nps_response_probability},
          {"direct_landing_probability", c.direct_landing_probability},
          {"fatigue_offset", c.fatigue_offset},
          {"interest_offset", c.interest_offset},
          {"ratio_click_probability", c.ratio_click_probability},
          {"ratio_enroll_probability", c.ratio_enroll_probability}};
}

SimConfig sim_config_from_json(const json& j) {
  SimConfig c;
  try {
    if (!j.is_object()) throw InvalidArgument("sim config must be a JSON object");
    static const std::unordered_set<std::string> known = {
        "seed", "n_courses", "n_subcategories", "n_visitors", "n_days", "start_date",
        "free_course_fraction", "position_bias_decay", "scenario", "units_per_page",
        "candidates_per_unit", "visit_probability", "appeal_sd", "quality_sd", "affinity_sd",
        "click_intercept", "enroll_intercept", "enroll_appeal_weight", "nps_response_probability",
        "direct_landing_probability", "fatigue_offset", "interest_offset", "ratio_click_probability",
        "ratio_enroll_probability", "experiment"};
    for (const auto& [k, _] : j.items()) {
      if (!known.count(k)) throw InvalidArgument("unknown sim config field '" + k + "'");
    }
    c.seed = j.value("seed", c.seed);
    c.n_courses = j.value("n_courses", c.n_courses);
    c.n_subcategories = j.value("n_subcategories", c.n_subcategories);
    c.n_visitors = j.value("n_visitors", c.n_visitors);
    c.n_days = j.value("n_days", c.n_days);
    if (j.contains("start_date")) c.start_date = Date::parse(j.at("start_date").get<std::string>());
    c.free_course_fraction = j.value("free_course_fraction", c.free_course_fraction);
    c.position_bias_decay = j.value("position_bias_decay", c.position_bias_decay);
    c.units_per_page = j.value("units_per_page", c.units_per_page);
    c.candidates_per_unit = j.value("candidates_per_unit", c.candidates_per_unit);
    c.visit_probability = j.value("visit_probability", c.visit_probability);
    c.appeal_sd = j.value("appeal_sd", c.appeal_sd);
    c.quality_sd = j.value("quality_sd", c.quality_sd);
    c.affinity_sd = j.value("affinity_sd", c.affinity_sd);
    c.click_intercept = j.value("click_intercept", c.click_intercept);
    c.enroll_intercept = j.value("enroll_intercept", c.enroll_intercept);
    c.enroll_appeal_weight = j.value("enroll_appeal_weight", c.enroll_appeal_weight);
    c.nps_response_probability = j.value("nps_response_probability", c.nps_response_probability);
    c.direct_landing_probability = j.value("direct_landing_probability", c.direct_landing_probability);
    c.fatigue_offset = j.value("fatigue_offset", c.fatigue_offset);
    c.interest_offset = j.value("interest_offset", c.interest_offset);
    c.ratio_click_probability = j.value("ratio_click_probability", c.ratio_click_probability);
    c.ratio_enroll_probability = j.value("ratio_enroll_probability", c.ratio_enroll_probability);
    if (j.contains("scenario")) {
      const auto& s = j.at("scenario");
      if (s.is_string()) {
        c.scenario.kind = parse_scenario(s.get<std::string>());
      } else {
        c.scenario.kind = parse_scenario(s.at("kind").get<std::string>());
        c.scenario.lift_measure = s.value("measure", c.scenario.lift_measure);
        c.scenario.lift_pct = s.value("pct", c.scenario.lift_pct);
        c.scenario.r_neg = s.value("r_neg", c.scenario.r_neg);
        c.scenario.r_null = s.value("r_null", c.scenario.r_null);
        c.scenario.r_pos = s.value("r_pos", c.scenario.r_pos);
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad sim config: ") + e.what());
  }
  c.validate();
  return c;
}

Catalog generate_catalog(const SimConfig& config) {
  config.validate();
  std::mt19937_64 rng(stream_seed(config.seed, 0x636174616c6f67ull, 0));
  std::normal_distribution<double> appeal(0.0, config.appeal_sd);
  std::normal_distribution<double> quality(0.0, config.quality_sd);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> age(0, 700);
  static constexpr double kPrices[] = {19.99, 29.99, 49.99, 99.99, 199.99};
  std::uniform_int_distribution<size_t> price(0, std::size(kPrices) - 1);
  const int n_categories = std::max(1, config.n_subcategories / 4);

  Catalog out;
  for (int i = 0; i < config.n_courses; ++i) {
    LatentCourse c;
    c.course_id = i + 1;
    // Every subcategory gets courses; the rest are spread evenly.
    c.subcategory_id = i % config.n_subcategories + 1;
    c.appeal = appeal(rng);
    c.quality = quality(rng);
    c.price = unit(rng) < config.free_course_fraction ? 0.0 : kPrices[price(rng)];
    CourseDimension d;
    d.course_id = c.course_id;
    d.subcategory_id = c.subcategory_id;
    d.category_id = (c.subcategory_id - 1) % n_categories + 1;
    d.price = c.price;
    d.published_date = config.start_date - age(rng) - 1;
    out.latent.push_back(c);
    out.courses.push_back(d);
  }
  return out;
}

void AggregateRanker::begin_day(Date date, const NightlyState& state) {
  state_ = state;
  as_of_ = date - 1;
}

RankedPage AggregateRanker::rank(const SessionRequest& request) {
  if (!request.variant || request.variant->ranker_mode == RankerMode::kBaseline) {
    return baseline_page(request.units, request.seed);
  }
  const ScoreParams& params = request.variant->score_params;
  std::optional<VisitorProfile> profile;
  if (params.tau != 0 && state_.snapshot && !state_.snapshot->rows.empty()) {
    profile = state_.features->visitor_profile(request.visitor_id, as_of_);
  }
  ScoreMap scores;
  for (const auto& unit : request.units) {
    for (int64_t c : unit.candidates) {
      if (scores.count(c)) continue;
      const auto agg = state_.aggregates->get(c);
      const CourseDimension* course = state_.snapshot->course(c);
      scores[c] = combine_score(agg.epmi, course ? course->price : 0.0, agg.cpe, agg.npe,
                                state_of(profile ? &*profile : nullptr, c), params);
    }
  }
  return rank_page(request.units, scores);
}

SimResult run_sessions(const SimConfig& config, const ExperimentConfig& experiment, SimRanker& ranker) {
  config.validate();
  experiment.validate();
  SimResult result;
  result.catalog = generate_catalog(config);
  const auto& latent = result.catalog.latent;
  std::unordered_map<int64_t, const LatentCourse*> by_id;
  for (const auto& c : latent) by_id[c.course_id] = &c;
  auto visitors = make_visitors(config, result.catalog);

  FunnelStore store;
  store.register_courses(result.catalog.courses);
  const Scenario& sc = config.scenario;
  const bool needs_state =
      sc.kind == ScenarioKind::kInterestRatios || sc.kind == ScenarioKind::kExploreVsPopularity;
  const double lift = 1.0 + sc.lift_pct / 100.0;

  for (int day = 0; day < config.n_days; ++day) {
    const Date date = config.start_date + day;
    NightlyState night;
    night.snapshot = store.snapshot();
    night.features = std::make_shared<const FeatureEngine>(night.snapshot);
    night.aggregates = night.features->compute_trailing_aggregates(date - 1);
    ranker.begin_day(date, night);
    const bool have_history = !night.snapshot->rows.empty();

    std::vector<RawEvent> today;
    for (size_t vi = 0; vi < visitors.size(); ++vi) {
      Visitor& v = visitors[vi];
      std::mt19937_64 rng(stream_seed(config.seed, static_cast<uint64_t>(date.days()), vi));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      if (unit(rng) >= config.visit_probability) continue;
      ++result.sessions;

      const VariantConfig* variant = assign_variant(v.id, experiment);
      const std::string tag = variant ? variant->variant_tag : std::string();
      const bool treated = variant && !variant->is_control;

      std::vector<Unit> units;
      for (const auto& u : v.units) {
        Unit copy{u.unit_id, u.unit_type, {}};
        for (int64_t c : u.candidates) {
          if (!v.owned.count(c)) copy.candidates.push_back(c);
        }
        if (!copy.candidates.empty()) units.push_back(std::move(copy));
      }
      std::optional<VisitorProfile> profile;
      if (needs_state && have_history) profile = night.features->visitor_profile(v.id, date - 1);

      const uint64_t layout_seed = rng();
      const RankedPage page = ranker.rank({v.id, date, variant, units, layout_seed});

      auto enroll = [&](RawEvent& e, const LatentCourse& c) {
        std::normal_distribution<double> noise(0.0, 0.5);
        std::normal_distribution<double> nps_noise(0.0, 1.5);
        e.enrollments = 1;
        e.revenue = c.price;
        e.minutes_consumed = std::round(60.0 * std::exp(c.quality + noise(rng)) * 100.0) / 100.0;
        if (unit(rng) < config.nps_response_probability) {
          e.nps_response = static_cast<int>(std::clamp(std::round(7.0 + 2.0 * c.quality + nps_noise(rng)), 0.0, 10.0));
        }
        v.owned.insert(c.course_id);
      };

      double examine = 1.0;
      for (const auto& ranked : page.units) {
        const bool examined = unit(rng) < examine;
        examine *= config.position_bias_decay;
        if (!examined) continue;
        const size_t visible = std::min(kUnitVisibleDefault, ranked.courses.size());
        for (size_t k = 0; k < visible; ++k) {
          const LatentCourse& c = *by_id.at(ranked.courses[k]);
          const InterestState state = state_of(profile ? &*profile : nullptr, c.course_id);
          double p_click, p_enroll;
          if (sc.kind == ScenarioKind::kInterestRatios) {
            const double r = state == InterestState::kNegative ? sc.r_neg
                             : state == InterestState::kPositive ? sc.r_pos
                                                                 : sc.r_null;
            p_click = config.ratio_click_probability;
            p_enroll = config.ratio_enroll_probability * r / sc.r_null;
          } else {
            double logit = config.click_intercept + c.appeal +
                           v.affinity[static_cast<size_t>(c.subcategory_id - 1)];
            double enroll_logit = config.enroll_intercept + config.enroll_appeal_weight * c.appeal;
            if (sc.kind == ScenarioKind::kExploreVsPopularity) {
              if (state == InterestState::kNegative) logit += config.fatigue_offset;
              if (state == InterestState::kPositive) {
                logit += config.interest_offset;
                enroll_logit += config.interest_offset;
              }
            }
            p_click = sigmoid(logit);
            p_enroll = sigmoid(enroll_logit);
          }
          if (sc.kind == ScenarioKind::kUniformLift && treated) {
            if (sc.lift_measure == "clicks") {
              // Enrollments per impression stay put so only clicks move.
              const double lifted = std::min(1.0, p_click * lift);
              p_enroll = std::min(1.0, p_enroll * p_click / lifted);
              p_click = lifted;
            } else {
              p_enroll = std::min(1.0, p_enroll * lift);
            }
          }
          RawEvent e;
          e.visitor_id = v.id;
          e.course_id = c.course_id;
          e.date = date;
          e.page_context = PageContext::kFeatured;
          e.variant_tag = tag;
          e.impressions = 1;
          if (unit(rng) < p_click) {
            e.clicks = 1;
            if (unit(rng) < p_enroll) enroll(e, c);
          }
          today.push_back(std::move(e));
        }
      }

      if (unit(rng) < config.direct_landing_probability) {
        std::uniform_int_distribution<size_t> any(0, latent.size() - 1);
        const LatentCourse& c = latent[any(rng)];
        if (!v.owned.count(c.course_id)) {
          RawEvent e;
          e.visitor_id = v.id;
          e.course_id = c.course_id;
          e.date = date;
          e.page_context = PageContext::kEmail;
          e.variant_tag = tag;
          enroll(e, c);
          today.push_back(std::move(e));
        }
      }
    }
    const auto report = store.ingest_events(today);
    if (!report.rejects.empty()) {
      throw Error("simulator produced an invalid event: " + report.rejects.front().reason);
    }
    result.events.insert(result.events.end(), std::make_move_iterator(today.begin()),
                         std::make_move_iterator(today.end()));
  }
  result.snapshot = store.snapshot();
  return result;
}

SimResult run_sessions(const SimConfig& config, const ExperimentConfig& experiment) {
  AggregateRanker ranker;
  return run_sessions(config, experiment, ranker);
}

ExperimentConfig default_sim_experiment(const SimConfig& config, const std::string& prefix) {
  ExperimentConfig e;
  e.experiment_id = prefix + "-" + std::string(to_string(config.scenario.kind));
  e.name = e.experiment_id;
  e.salt = e.experiment_id + "-" + std::to_string(config.seed);
  e.start_date = config.start_date;
  VariantConfig control{prefix + "-control", 0.5, ScoreParams::preset("enrollment"), RankerMode::kScored, {}, true};
  VariantConfig test{prefix + "-test", 0.5, ScoreParams::preset("enrollment"), RankerMode::kScored, {}, false};
  switch (config.scenario.kind) {
    case ScenarioKind::kInterestRatios:
      control.ranker_mode = test.ranker_mode = RankerMode::kBaseline;
      break;
    case ScenarioKind::kExploreVsPopularity:
      test.score_params.tau = 3;
      break;
    default:
      break;
  }
  e.variants = {control, test};
  return e;
}

std::optional<double> measure_free_share(const std::vector<RawEvent>& log,
                                         const std::vector<CourseDimension>& courses) {
  std::unordered_map<int64_t, bool> is_free;
  for (const auto& c : courses) is_free[c.course_id] = c.is_free();
  int64_t seen = 0, free = 0;
  for (const auto& e : log) {
    if (e.impressions <= 0 || !is_slate_context(e.page_context)) continue;
    auto it = is_free.find(e.course_id);
    if (it == is_free.end()) throw NotFound("course " + std::to_string(e.course_id) + " is not in the catalog");
    seen += e.impressions;
    if (it->second) free += e.impressions;
  }
  if (seen == 0) return std::nullopt;
  return static_cast<double>(free) / static_cast<double>(seen);
}

void write_ndjson(const std::vector<RawEvent>& events, std::ostream& out) {
  for (const auto& e : events) out << event_to_json(e) << '\n';
}

}  // namespace agilerec
