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
#include "agilerec/server.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include <httplib.h>

namespace agilerec {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

json error_body(const std::string& message, uint64_t snapshot_id) {
  return {{"error", message}, {"snapshot_id", snapshot_id}};
}

InterestState state_of(const VisitorProfile* profile, int64_t course_id) {
  return profile ? profile->course_state(course_id) : InterestState::kNull;
}

Date today_utc() {
  const auto now = std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now());
  return Date(static_cast<int32_t>(now.time_since_epoch().count()));
}

json to_json(const ScoreParams& p) {
  return {{"alpha", p.alpha}, {"beta", p.beta}, {"gamma", p.gamma}, {"tau", p.tau}, {"p_min", p.p_min}};
}

json to_json(const DifferentialResult& r) {
  json j = {{"measure", r.measure},
            {"bin", r.bin},
            {"test_variant", r.test_variant},
            {"control_variant", r.control_variant},
            {"n_test", r.n_test},
            {"n_control", r.n_control},
            {"defined", r.defined},
            {"mean_test", number(r.mean_test)},
            {"mean_control", number(r.mean_control)},
            {"diff_pct", r.diff_pct ? number(*r.diff_pct) : json(nullptr)},
            {"t_stat", number(r.t_stat)},
            {"df", number(r.df)},
            {"significant_95", std::string(to_string(r.significant_95))},
            {"small_sample_flag", r.small_sample_flag}};
  // Zero-variance arms with different means give an infinite t; keep the sign.
  if (std::isinf(r.t_stat)) j["t_stat"] = r.t_stat > 0 ? "inf" : "-inf";
  return j;
}

std::vector<std::pair<std::string, std::string>> parse_filters(const std::multimap<std::string, std::string>& query) {
  std::vector<std::pair<std::string, std::string>> out;
  auto [lo, hi] = query.equal_range("filters");
  for (auto it = lo; it != hi; ++it) {
    std::string_view rest = it->second;
    while (!rest.empty()) {
      const size_t comma = rest.find(',');
      const std::string_view term = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view() : rest.substr(comma + 1);
      if (term.empty()) continue;
      const size_t eq = term.find('=');
      if (eq == std::string_view::npos || eq == 0) {
        throw InvalidArgument("filter '" + std::string(term) + "' is not key=value");
      }
      out.emplace_back(std::string(term.substr(0, eq)), std::string(term.substr(eq + 1)));
    }
  }
  return out;
}

const std::string* single(const std::multimap<std::string, std::string>& query, const std::string& key) {
  auto it = query.find(key);
  return it == query.end() ? nullptr : &it->second;
}

}  // namespace

std::vector<Unit> units_from_json(const json& j) {
  if (!j.is_array()) throw InvalidArgument("units must be a JSON array");
  std::vector<Unit> units;
  for (const auto& u : j) {
    Unit unit;
    unit.unit_id = u.at("unit_id").get<std::string>();
    if (u.contains("unit_type")) unit.unit_type = parse_unit_type(u.at("unit_type").get<std::string>());
    unit.candidates = u.at("candidate_courses").get<std::vector<int64_t>>();
    unit.validate();
    units.push_back(std::move(unit));
  }
  return units;
}

struct ApiServer::Http {
  httplib::Server server;
};

ApiServer::ApiServer(ServerOptions options) : options_(std::move(options)), http_(std::make_unique<Http>()) {
  std::shared_ptr<const AnalyticsTable> analytics = std::make_shared<AnalyticsTable>();
  if (options_.data_dir) {
    const fs::path& dir = *options_.data_dir;
    fs::create_directories(dir);
    store_ = std::make_unique<FunnelStore>(dir / "store");
    experiments_ = std::make_unique<ExperimentRegistry>(dir / "experiments");
    models_ = std::make_unique<ModelRepository>(options_.models_dir.value_or(dir / "models"));
    if (fs::exists(dir / "analytics.csv")) {
      analytics = std::make_shared<AnalyticsTable>(AnalyticsTable::load(dir / "analytics.csv"));
    }
    if (fs::exists(dir / "unit_presets.json")) {
      const json presets = json::parse(read_file(dir / "unit_presets.json"));
      for (const auto& [name, units] : presets.items()) options_.unit_presets.try_emplace(name, units_from_json(units));
    }
  } else {
    store_ = std::make_unique<FunnelStore>();
    experiments_ = std::make_unique<ExperimentRegistry>();
    if (options_.models_dir) models_ = std::make_unique<ModelRepository>(*options_.models_dir);
  }
  options_.default_params.validate();
  publish(std::move(analytics));
}

ApiServer::~ApiServer() = default;

std::shared_ptr<const ServingState> ApiServer::state() const {
  std::lock_guard lock(state_mu_);
  return state_;
}

void ApiServer::set_analytics(AnalyticsTable table) {
  std::lock_guard write(write_mu_);
  publish(std::make_shared<const AnalyticsTable>(std::move(table)));
}

void ApiServer::refresh() {
  std::lock_guard write(write_mu_);
  publish(nullptr);
}

// Builds the next state off-lock, then swaps the pointer. Requests holding
// the previous state finish against it.
void ApiServer::publish(std::shared_ptr<const AnalyticsTable> analytics) {
  auto next = std::make_shared<ServingState>();
  next->snapshot = store_->snapshot();
  next->features = std::make_shared<FeatureEngine>(next->snapshot);
  next->latest_date = next->snapshot->max_date();
  if (next->latest_date) next->features->compute_trailing_aggregates(*next->latest_date);  // warm the cache
  if (models_) {
    for (ModelTarget t : {ModelTarget::kEpmi, ModelTarget::kCpe, ModelTarget::kNpe}) {
      if (auto m = models_->active_manifest(t)) {
        std::shared_ptr<const RegressionTree> tree = load_model(m->model_id, m->version);
        if (t == ModelTarget::kEpmi) next->active_models.epmi = tree;
        if (t == ModelTarget::kCpe) next->active_models.cpe = tree;
        if (t == ModelTarget::kNpe) next->active_models.npe = tree;
      }
    }
  }
  std::lock_guard lock(state_mu_);
  next->analytics = analytics ? std::move(analytics) : state_->analytics;
  next->snapshot_id = state_ ? state_->snapshot_id + 1 : 1;
  state_ = std::move(next);
}

std::shared_ptr<const RegressionTree> ApiServer::load_model(const std::string& model_id, int64_t version) const {
  std::lock_guard lock(model_mu_);
  auto key = std::make_pair(model_id, version);
  if (auto it = model_cache_.find(key); it != model_cache_.end()) return it->second;
  auto tree = std::make_shared<const RegressionTree>(models_->load(model_id, version).tree);
  model_cache_.emplace(std::move(key), tree);
  return tree;
}

std::shared_ptr<const RegressionTree> ApiServer::model_for(ModelTarget target, int64_t version) const {
  if (!models_) throw NotFound("no model repository configured");
  // Versions are per model_id; prefer the target's active model_id.
  std::optional<std::string> model_id;
  const auto active = models_->active_manifest(target);
  for (const auto& m : models_->list()) {
    if (m.target != target || m.version != version) continue;
    if (!model_id || (active && m.model_id == active->model_id)) model_id = m.model_id;
  }
  if (!model_id) {
    throw NotFound("no " + std::string(to_string(target)) + " model with version " + std::to_string(version));
  }
  return load_model(*model_id, version);
}

ScoreModels ApiServer::models_for(const VariantConfig* variant, const ServingState& state) const {
  ScoreModels out = state.active_models;
  if (!variant) return out;
  for (const auto& [target, version] : variant->model_versions) {
    auto tree = model_for(target, version);
    if (target == ModelTarget::kEpmi) out.epmi = tree;
    if (target == ModelTarget::kCpe) out.cpe = tree;
    if (target == ModelTarget::kNpe) out.npe = tree;
  }
  return out;
}

namespace {

template <class F>
HttpResult guarded(uint64_t snapshot_id, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    return {400, error_body(std::string("malformed JSON: ") + e.what(), snapshot_id).dump()};
  } catch (const InvalidArgument& e) {
    return {400, error_body(e.what(), snapshot_id).dump()};
  } catch (const NotFound& e) {
    return {404, error_body(e.what(), snapshot_id).dump()};
  } catch (const Conflict& e) {
    return {409, error_body(e.what(), snapshot_id).dump()};
  } catch (const std::exception& e) {
    return {500, error_body(e.what(), snapshot_id).dump()};
  }
}

}  // namespace

HttpResult ApiServer::rank(const std::string& body) const {
  const auto st = state();
  return guarded(st->snapshot_id, [&]() -> HttpResult {
    const json in = json::parse(body);
    if (!in.is_object()) throw InvalidArgument("request body must be an object");
    const std::string visitor_id = in.at("visitor_id").get<std::string>();
    if (visitor_id.empty()) throw InvalidArgument("empty visitor_id");
    const PageContext context =
        in.contains("page_context") ? parse_page_context(in.at("page_context").get<std::string>()) : PageContext::kFeatured;

    std::vector<Unit> units;
    if (in.contains("units")) {
      units = units_from_json(in.at("units"));
    } else if (in.contains("preset")) {
      const auto name = in.at("preset").get<std::string>();
      auto it = options_.unit_presets.find(name);
      if (it == options_.unit_presets.end()) throw NotFound("unknown unit preset '" + name + "'");
      units = it->second;
    } else {
      throw InvalidArgument("request needs units or preset");
    }

    // Serving day: the day after the newest data unless given.
    const Date date = in.contains("date") ? Date::parse(in.at("date").get<std::string>())
                                          : (st->latest_date ? *st->latest_date + 1 : today_utc());

    std::optional<ExperimentConfig> experiment;
    const VariantConfig* variant = nullptr;
    if (in.contains("experiment_id")) {
      experiment = experiments_->get(in.at("experiment_id").get<std::string>());
      variant = assign_variant(visitor_id, *experiment);
    } else {
      for (auto& e : experiments_->list()) {
        if (!e.active_on(date)) continue;
        experiment = std::move(e);
        variant = assign_variant(visitor_id, *experiment);
        if (variant) break;
        experiment.reset();
      }
    }

    const ScoreParams& params = variant ? variant->score_params : options_.default_params;
    const RankerMode mode = variant ? variant->ranker_mode : RankerMode::kScored;
    json out = {{"snapshot_id", st->snapshot_id},
                {"visitor_id", visitor_id},
                {"date", date.to_string()},
                {"page_context", std::string(to_string(context))},
                {"experiment_id", experiment ? json(experiment->experiment_id) : json(nullptr)},
                {"variant_tag", variant ? json(variant->variant_tag) : json(nullptr)},
                {"ranker_mode", std::string(to_string(mode))},
                {"score_params", to_json(params)}};

    RankedPage page;
    ScoreMap scores;
    if (mode == RankerMode::kBaseline) {
      // Fixed per (snapshot, visitor, day) unless the caller supplies a seed.
      const uint64_t seed = in.contains("seed") ? in.at("seed").get<uint64_t>()
                                                : assignment_hash(date.to_string() + ":" + std::to_string(st->snapshot_id),
                                                                  visitor_id);
      page = baseline_page(units, seed);
      out["scorer"] = "none";
    } else {
      std::vector<int64_t> courses;
      std::unordered_set<int64_t> seen;
      for (const auto& u : units) {
        for (int64_t c : u.candidates) {
          if (seen.insert(c).second) courses.push_back(c);
        }
      }
      const ScoreModels models = models_for(variant, *st);
      const Date as_of = date - 1;
      const bool have_models =
          models.epmi && (params.beta == 0 || models.cpe) && (params.gamma == 0 || models.npe);
      if (have_models) {
        ScoringEngine engine(st->features, models);
        for (const auto& s : engine.score_on_request(visitor_id, courses, as_of, params, context)) {
          scores[s.course_id] = s.score;
        }
        out["scorer"] = "model";
      } else {
        // No trained models yet: trailing aggregates stand in for predictions.
        const auto aggregates = st->features->compute_trailing_aggregates(as_of);
        std::optional<VisitorProfile> profile;
        if (params.tau != 0 && !st->snapshot->rows.empty()) profile = st->features->visitor_profile(visitor_id, as_of);
        for (int64_t c : courses) {
          const auto agg = aggregates->get(c);
          const CourseDimension* course = st->snapshot->course(c);
          scores[c] = combine_score(agg.epmi, course ? course->price : 0.0, agg.cpe, agg.npe,
                                    state_of(profile ? &*profile : nullptr, c), params);
        }
        out["scorer"] = "aggregates";
      }
      page = rank_page(units, scores);
    }

    json ranked = json::array();
    for (const auto& u : page.units) {
      json ju = {{"unit_id", u.unit_id}, {"unit_type", std::string(to_string(u.unit_type))}, {"course_ids", u.courses}};
      if (mode == RankerMode::kScored) {
        json s = json::array();
        for (int64_t c : u.courses) s.push_back(number(scores.at(c)));
        ju["scores"] = std::move(s);
        ju["unit_score"] = number(u.unit_score);
      }
      ranked.push_back(std::move(ju));
    }
    out["units"] = std::move(ranked);
    return {200, out.dump()};
  });
}

HttpResult ApiServer::ingest(const std::string& body) {
  std::unique_lock write(write_mu_);
  return guarded(state()->snapshot_id, [&]() -> HttpResult {
    std::istringstream in(body);
    const IngestReport report = store_->ingest_ndjson(in);
    publish(nullptr);
    json rejects = json::array();
    for (const auto& r : report.rejects) rejects.push_back({{"line", r.line}, {"reason", r.reason}});
    const json out = {{"snapshot_id", state()->snapshot_id},
                      {"rows_merged", report.rows_merged},
                      {"rows_created", report.rows_created},
                      {"duplicates", report.duplicates},
                      {"rejects", std::move(rejects)}};
    return {200, out.dump()};
  });
}

HttpResult ApiServer::list_experiments() const {
  const auto st = state();
  return guarded(st->snapshot_id, [&]() -> HttpResult {
    json list = json::array();
    for (const auto& e : experiments_->list()) {
      json j = to_json(e);
      const bool built = st->analytics->has_experiment(e.experiment_id);
      j["has_analytics"] = built;
      j["cubes"] = built ? json(st->analytics->experiment(e.experiment_id).cubes) : json::array();
      list.push_back(std::move(j));
    }
    return {200, json{{"snapshot_id", st->snapshot_id}, {"experiments", std::move(list)}}.dump()};
  });
}

HttpResult ApiServer::cube(const std::multimap<std::string, std::string>& query) const {
  const auto st = state();
  return guarded(st->snapshot_id, [&]() -> HttpResult {
    const std::string* experiment = single(query, "experiment");
    if (!experiment || experiment->empty()) throw InvalidArgument("missing experiment parameter");
    CubeQuery q;
    q.experiment_id = *experiment;
    if (const auto* n = single(query, "numerator"); n && !n->empty()) q.numerator = *n;
    if (const auto* m = single(query, "measure"); m && !m->empty()) q.measure = parse_measure(*m);
    q.filters = parse_filters(query);
    if (!st->analytics->has_experiment(q.experiment_id)) {
      experiments_->get(q.experiment_id);  // NotFound when unknown
      throw Conflict("no analytics built for experiment '" + q.experiment_id + "'");
    }
    const auto results = st->analytics->query(q);
    json rows = json::array();
    for (const auto& r : results) rows.push_back(to_json(r));
    const json out = {{"snapshot_id", st->snapshot_id},
                      {"experiment_id", q.experiment_id},
                      {"numerator", q.numerator},
                      {"measure", std::string(to_string(q.measure))},
                      {"control_variant", st->analytics->experiment(q.experiment_id).control_variant},
                      {"results", std::move(rows)}};
    return {200, out.dump()};
  });
}

HttpResult ApiServer::build_cube(const std::string& body) {
  std::unique_lock write(write_mu_);
  return guarded(state()->snapshot_id, [&]() -> HttpResult {
    const json in = json::parse(body);
    const ExperimentConfig e = experiments_->get(in.at("experiment_id").get<std::string>());
    const auto st = state();
    std::vector<std::string> numerators, denominators;
    if (in.contains("numerators")) numerators = in.at("numerators").get<std::vector<std::string>>();
    if (in.contains("denominators")) denominators = in.at("denominators").get<std::vector<std::string>>();
    DateRange range{e.start_date, e.end_date.value_or(st->latest_date.value_or(e.start_date))};
    if (in.contains("from")) range.from = Date::parse(in.at("from").get<std::string>());
    if (in.contains("to")) range.to = Date::parse(in.at("to").get<std::string>());
    if (range.empty()) throw InvalidArgument("empty date range");

    CubeBuild build = build_cubes(*st->snapshot, e, range, numerators, denominators);
    const json cubes = build.cubes;
    const size_t cells = build.cells.size();
    auto table = std::make_shared<AnalyticsTable>(*st->analytics);
    table->append(std::move(build));
    if (options_.data_dir) table->save(*options_.data_dir / "analytics.csv");
    publish(std::move(table));
    const json out = {{"snapshot_id", state()->snapshot_id},
                      {"experiment_id", e.experiment_id},
                      {"from", range.from.to_string()},
                      {"to", range.to.to_string()},
                      {"cubes", cubes},
                      {"cells", cells}};
    return {200, out.dump()};
  });
}

HttpResult ApiServer::list_models() const {
  const auto st = state();
  return guarded(st->snapshot_id, [&]() -> HttpResult {
    json list = json::array();
    if (models_) {
      for (const auto& m : models_->list()) {
        json j = to_json(m);
        const auto active = models_->active_manifest(m.target);
        j["active"] = active && active->model_id == m.model_id && active->version == m.version;
        list.push_back(std::move(j));
      }
    }
    return {200, json{{"snapshot_id", st->snapshot_id}, {"models", std::move(list)}}.dump()};
  });
}

HttpResult ApiServer::health() const {
  const auto st = state();
  const json out = {{"status", "ok"},
                    {"snapshot_id", st->snapshot_id},
                    {"rows", st->snapshot->rows.size()},
                    {"latest_date", st->latest_date ? json(st->latest_date->to_string()) : json(nullptr)}};
  return {200, out.dump()};
}

int ApiServer::bind(const std::string& host, int port) {
  auto& s = http_->server;
  // Small JSON replies on keep-alive connections otherwise wait on delayed ACKs.
  s.set_tcp_nodelay(true);
  s.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  auto reply = [](httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  auto params = [](const httplib::Request& req) {
    std::multimap<std::string, std::string> out(req.params.begin(), req.params.end());
    return out;
  };
  s.Post("/rank", [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, rank(req.body)); });
  s.Post("/ingest", [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, ingest(req.body)); });
  s.Get("/experiments", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, list_experiments()); });
  s.Get("/cube", [this, reply, params](const httplib::Request& req, httplib::Response& res) {
    reply(res, cube(params(req)));
  });
  s.Post("/cube/build", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, build_cube(req.body));
  });
  s.Get("/models", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, list_models()); });
  s.Get("/healthz", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.set_error_handler([this](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    res.set_content(error_body(httplib::status_message(res.status), state()->snapshot_id).dump(), "application/json");
  });

  if (port == 0) return s.bind_to_any_port(host);
  if (!s.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void ApiServer::serve() { http_->server.listen_after_bind(); }

void ApiServer::stop() { http_->server.stop(); }

}  // namespace agilerec
