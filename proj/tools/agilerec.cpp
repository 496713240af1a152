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
// Command-line front end over a data directory laid out as the server
// expects: store/, experiments/, models/, analytics.csv.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "agilerec/cube.hpp"
#include "agilerec/experiments.hpp"
#include "agilerec/features.hpp"
#include "agilerec/funnel_store.hpp"
#include "agilerec/model_repository.hpp"
#include "agilerec/scoring.hpp"
#include "agilerec/server.hpp"
#include "agilerec/sim.hpp"
#include "agilerec/tree_model.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace agilerec;

namespace {

struct Globals {
  std::string data_dir = "agilerec-data";
  fs::path dir() const { return data_dir; }
};

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  return out;
}

json report_json(const IngestReport& r) {
  json rejects = json::array();
  for (const auto& x : r.rejects) rejects.push_back({{"line", x.line}, {"reason", x.reason}});
  return {{"rows_merged", r.rows_merged}, {"rows_created", r.rows_created}, {"duplicates", r.duplicates},
          {"rejects", rejects}};
}

DateRange range_or_store(const std::string& from, const std::string& to, const FunnelSnapshot& snap) {
  const auto lo = snap.min_date(), hi = snap.max_date();
  if ((from.empty() && !lo) || (to.empty() && !hi)) throw InvalidArgument("the store is empty; pass --from/--to");
  return {from.empty() ? *lo : Date::parse(from), to.empty() ? *hi : Date::parse(to)};
}

Date as_of_or_latest(const std::string& as_of, const FunnelSnapshot& snap) {
  if (!as_of.empty()) return Date::parse(as_of);
  if (auto hi = snap.max_date()) return *hi;
  throw InvalidArgument("the store is empty; pass --as-of");
}

ScoreModels active_models(const ModelRepository& repo) {
  ScoreModels m;
  auto load = [&](ModelTarget t) -> std::shared_ptr<const RegressionTree> {
    if (!repo.active_manifest(t)) return nullptr;
    return std::make_shared<const RegressionTree>(repo.get_active(t).tree);
  };
  m.epmi = load(ModelTarget::kEpmi);
  m.cpe = load(ModelTarget::kCpe);
  m.npe = load(ModelTarget::kNpe);
  return m;
}

std::vector<std::string> read_lines(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agilerec: funnel store, models, experiments and cube analytics"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--data-dir", g.data_dir, "Data directory")->capture_default_str();

  std::function<void()> action;
  auto on = [&](CLI::App* cmd, std::function<void()> f) { cmd->callback([&action, f] { action = f; }); };

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Ingest NDJSON events (file or - for stdin)");
  std::string ingest_file = "-";
  ingest->add_option("file", ingest_file);
  on(ingest, [&] {
    FunnelStore store(g.dir() / "store");
    IngestReport r;
    if (ingest_file == "-") {
      r = store.ingest_ndjson(std::cin);
    } else {
      auto in = open_in(ingest_file);
      r = store.ingest_ndjson(in);
    }
    print(report_json(r));
  });

  auto* compact = app.add_subcommand("compact", "Rewrite the snapshot and apply retention");
  on(compact, [&] {
    FunnelStore store(g.dir() / "store");
    store.compact();
    std::cout << store.snapshot()->rows.size() << " rows\n";
  });

  // scan
  auto* scan_cmd = app.add_subcommand("scan", "Print funnel rows as CSV");
  std::vector<std::string> scan_filters;
  std::string scan_from, scan_to;
  scan_cmd->add_option("--filter", scan_filters, "field=value or dimension.attribute=value");
  scan_cmd->add_option("--from", scan_from);
  scan_cmd->add_option("--to", scan_to);
  on(scan_cmd, [&] {
    FunnelStore store(g.dir() / "store");
    const auto snap = store.snapshot();
    if (snap->rows.empty()) return;
    const auto rows = store.scan(ScanFilter::parse(scan_filters), range_or_store(scan_from, scan_to, *snap));
    static const char* kFields[] = {"visitor_id",  "course_id", "date",    "page_context",     "variant_tag",
                                    "impressions", "clicks",    "enrollments", "revenue", "minutes_consumed",
                                    "nps_responses", "nps_score_sum"};
    for (size_t i = 0; i < std::size(kFields); ++i) std::cout << (i ? "," : "") << kFields[i];
    std::cout << '\n';
    for (const auto& row : rows) {
      for (size_t i = 0; i < std::size(kFields); ++i) std::cout << (i ? "," : "") << csv_escape(funnel_field(row, kFields[i]));
      std::cout << '\n';
    }
  });

  // dim register
  auto* dim = app.add_subcommand("dim", "Dimension tables")->require_subcommand(1);
  auto* dim_register = dim->add_subcommand("register", "Register a dimension from CSV");
  std::string dim_name, dim_csv;
  std::vector<std::string> dim_keys;
  dim_register->add_option("--name", dim_name)->required();
  dim_register->add_option("--keys", dim_keys, "Key fields (course_id, visitor_id, date)")->delimiter(',');
  dim_register->add_option("--csv", dim_csv)->required();
  on(dim_register, [&] {
    FunnelStore store(g.dir() / "store");
    auto in = open_in(dim_csv);
    auto table = DimensionTable::from_csv(in);
    if (dim_name == "course") {
      store.register_courses(courses_from_table(table));
    } else {
      if (dim_keys.empty()) throw InvalidArgument("--keys is required");
      store.register_dimension(dim_name, dim_keys, std::move(table));
    }
    std::cout << "dangling keys: " << store.dangling_keys(dim_name) << '\n';
  });

  // features
  auto* features = app.add_subcommand("features", "Feature tables")->require_subcommand(1);
  auto* features_build = features->add_subcommand("build", "Write trailing course aggregates as CSV");
  std::string feat_as_of, feat_out;
  features_build->add_option("--as-of", feat_as_of, "Default: newest store date");
  features_build->add_option("--out", feat_out, "Default: stdout");
  on(features_build, [&] {
    FunnelStore store(g.dir() / "store");
    FeatureEngine engine(store.snapshot());
    const auto table = engine.compute_trailing_aggregates(as_of_or_latest(feat_as_of, engine.snapshot()));
    if (feat_out.empty()) {
      table->write_csv(std::cout);
    } else {
      auto out = open_out(feat_out);
      table->write_csv(out);
    }
  });
  auto* features_vector = features->add_subcommand("vector", "Print one feature vector");
  std::string fv_visitor, fv_context = "featured";
  int64_t fv_course = 0;
  features_vector->add_option("--visitor", fv_visitor)->required();
  features_vector->add_option("--course", fv_course)->required();
  features_vector->add_option("--as-of", feat_as_of);
  features_vector->add_option("--context", fv_context)->capture_default_str();
  on(features_vector, [&] {
    FunnelStore store(g.dir() / "store");
    FeatureEngine engine(store.snapshot());
    const auto v = engine.build_feature_vector(fv_visitor, fv_course, as_of_or_latest(feat_as_of, engine.snapshot()),
                                               parse_page_context(fv_context));
    json out = json::object();
    for (size_t i = 0; i < v.schema->size(); ++i) {
      const auto& def = (*v.schema)[i];
      const double x = v.values[i];
      if (std::isnan(x)) {
        out[def.name] = nullptr;
      } else if (def.kind == FeatureKind::kCategorical) {
        out[def.name] = def.categories.at(static_cast<size_t>(x));
      } else {
        out[def.name] = x;
      }
    }
    print(out);
  });

  // model
  auto* model = app.add_subcommand("model", "Model repository")->require_subcommand(1);
  auto* model_train = model->add_subcommand("train", "Train and save a regression tree");
  std::string m_target = "epmi", m_id, m_from, m_to;
  TreeParams tree_params;
  model_train->add_option("--target", m_target, "epmi, cpe or npe")->capture_default_str();
  model_train->add_option("--model-id", m_id, "Default: <target>-tree");
  model_train->add_option("--from", m_from);
  model_train->add_option("--to", m_to);
  model_train->add_option("--max-depth", tree_params.max_depth)->capture_default_str();
  model_train->add_option("--min-leaf-weight", tree_params.min_leaf_weight)->capture_default_str();
  model_train->add_option("--min-gain", tree_params.min_gain)->capture_default_str();
  on(model_train, [&] {
    FunnelStore store(g.dir() / "store");
    auto engine = std::make_shared<FeatureEngine>(store.snapshot());
    const ModelTarget target = parse_model_target(m_target);
    const DateRange range = range_or_store(m_from, m_to, engine->snapshot());
    const auto data = build_training_set(*engine, target, range);
    if (data.rows.empty()) throw InvalidArgument("no training rows in the range");
    const auto tree = train_tree(data, tree_params, m_target + "_target");
    ModelRepository repo(g.dir() / "models");
    ModelManifest manifest;
    manifest.model_id = m_id.empty() ? m_target + "-tree" : m_id;
    manifest.target = target;
    manifest.training_window = range;
    auto saved = repo.save_model(tree, manifest);
    json j = to_json(saved);
    j["training_rows"] = data.rows.size();
    j["leaves"] = tree.leaf_count();
    print(j);
  });
  auto* model_eval = model->add_subcommand("eval", "Residuals of a saved model on a date range");
  int64_t m_version = 0;
  model_eval->add_option("--model-id", m_id)->required();
  model_eval->add_option("--version", m_version)->required();
  model_eval->add_option("--from", m_from);
  model_eval->add_option("--to", m_to);
  on(model_eval, [&] {
    FunnelStore store(g.dir() / "store");
    FeatureEngine engine(store.snapshot());
    ModelRepository repo(g.dir() / "models");
    const auto loaded = repo.load(m_id, m_version);
    const auto data = build_training_set(engine, loaded.manifest.target, range_or_store(m_from, m_to, engine.snapshot()));
    const auto r = evaluate_holdout(loaded.tree, data);
    json deciles = json::array();
    for (const auto& b : r.deciles) {
      deciles.push_back({{"count", b.count}, {"weight", b.weight}, {"mean_prediction", b.mean_prediction},
                         {"mean_actual", b.mean_actual}, {"bias", b.bias}});
    }
    print({{"count", r.count}, {"total_weight", r.total_weight}, {"weighted_mae", r.weighted_mae},
           {"weighted_bias", r.weighted_bias}, {"deciles", deciles}});
  });
  auto* model_activate = model->add_subcommand("activate", "Make a saved version active for its target");
  model_activate->add_option("--model-id", m_id)->required();
  model_activate->add_option("--version", m_version)->required();
  on(model_activate, [&] {
    ModelRepository repo(g.dir() / "models");
    repo.activate(m_id, m_version);
    std::cout << "activated " << m_id << " v" << m_version << '\n';
  });
  auto* model_list = model->add_subcommand("list", "List saved models");
  on(model_list, [&] {
    ModelRepository repo(g.dir() / "models");
    json out = json::array();
    for (const auto& m : repo.list()) out.push_back(to_json(m));
    print(out);
  });

  // score
  auto* score = app.add_subcommand("score", "Score with the active models")->require_subcommand(1);
  std::string s_preset = "enrollment", s_as_of, s_visitor, s_visitors, s_out;
  int64_t s_course = 0;
  size_t s_threads = 0;
  auto* score_one = score->add_subcommand("one", "Score one (visitor, course)");
  score_one->add_option("--visitor", s_visitor)->required();
  score_one->add_option("--course", s_course)->required();
  score_one->add_option("--as-of", s_as_of);
  score_one->add_option("--preset", s_preset)->capture_default_str();
  on(score_one, [&] {
    FunnelStore store(g.dir() / "store");
    auto engine = std::make_shared<FeatureEngine>(store.snapshot());
    ScoringEngine scorer(engine, active_models(ModelRepository(g.dir() / "models")));
    const Date as_of = as_of_or_latest(s_as_of, engine->snapshot());
    std::cout << format_double(scorer.score(s_visitor, s_course, as_of, ScoreParams::preset(s_preset))) << '\n';
  });
  auto* score_batch = score->add_subcommand("batch", "Nightly batch into a score cache file");
  score_batch->add_option("--as-of", s_as_of);
  score_batch->add_option("--preset", s_preset)->capture_default_str();
  score_batch->add_option("--visitors", s_visitors, "One visitor per line; default every visitor in the store");
  score_batch->add_option("--out", s_out)->required();
  score_batch->add_option("--threads", s_threads);
  on(score_batch, [&] {
    FunnelStore store(g.dir() / "store");
    auto engine = std::make_shared<FeatureEngine>(store.snapshot());
    ScoringEngine scorer(engine, active_models(ModelRepository(g.dir() / "models")));
    const auto& snap = engine->snapshot();
    std::vector<std::string> visitors;
    if (!s_visitors.empty()) {
      visitors = read_lines(s_visitors);
    } else {
      std::set<std::string> seen;
      for (const auto& r : snap.rows) seen.insert(r.key.visitor_id);
      visitors.assign(seen.begin(), seen.end());
    }
    std::vector<int64_t> courses;
    for (const auto& [id, c] : *snap.courses) courses.push_back(id);
    BatchOptions options;
    options.threads = s_threads;
    const auto result =
        scorer.batch_score(visitors, courses, as_of_or_latest(s_as_of, snap), ScoreParams::preset(s_preset), options);
    ScoreCache cache;
    for (auto e : result.entries) cache.put(std::move(e));
    cache.write(s_out);
    json errors = json::array();
    for (const auto& e : result.errors) {
      errors.push_back({{"partition", e.partition}, {"first_visitor", e.first_visitor}, {"message", e.message}});
    }
    print({{"entries", cache.size()}, {"partitions", result.partition_count}, {"errors", errors}});
    if (!result.errors.empty()) throw Error("some partitions failed");
  });

  // sim
  auto* sim = app.add_subcommand("sim", "Marketplace simulator")->require_subcommand(1);
  auto* sim_run = sim->add_subcommand("run", "Simulate sessions and write the event log");
  std::string sim_config, sim_out, sim_courses;
  bool sim_ingest = false;
  sim_run->add_option("--config", sim_config, "JSON config; defaults when omitted");
  sim_run->add_option("--out", sim_out, "NDJSON event log")->required();
  sim_run->add_option("--courses-out", sim_courses, "Course dimension CSV");
  sim_run->add_flag("--ingest", sim_ingest, "Also load events, courses and the experiment into --data-dir");
  on(sim_run, [&] {
    SimConfig config;
    if (!sim_config.empty()) {
      auto in = open_in(sim_config);
      config = sim_config_from_json(json::parse(in));
    }
    const ExperimentConfig experiment = default_sim_experiment(config);
    const auto result = run_sessions(config, experiment);
    {
      auto out = open_out(sim_out);
      write_ndjson(result.events, out);
    }
    if (!sim_courses.empty()) {
      auto out = open_out(sim_courses);
      courses_to_table(result.catalog.courses).write_csv(out);
    }
    if (sim_ingest) {
      FunnelStore store(g.dir() / "store");
      store.register_courses(result.catalog.courses);
      store.ingest_events(result.events);
      ExperimentRegistry registry(g.dir() / "experiments");
      registry.create(experiment);
    }
    const auto share = measure_free_share(result.events, result.catalog.courses);
    print({{"experiment_id", experiment.experiment_id},
           {"events", result.events.size()},
           {"sessions", result.sessions},
           {"rows", result.snapshot->rows.size()},
           {"free_share", share ? json(*share) : json(nullptr)}});
  });

  // cube
  auto* cube = app.add_subcommand("cube", "Experiment cube analytics")->require_subcommand(1);
  std::string c_experiment, c_from, c_to, c_numerator = std::string(kAllCube), c_measure = "enrollments";
  std::vector<std::string> c_numerators, c_denominators, c_filters;
  auto* cube_build = cube->add_subcommand("build", "Build cubes into analytics.csv");
  cube_build->add_option("--experiment", c_experiment)->required();
  cube_build->add_option("--numerator", c_numerators, "Numerator dimension (repeatable)");
  cube_build->add_option("--denominator", c_denominators, "Extra denominator dimension (repeatable)");
  cube_build->add_option("--from", c_from);
  cube_build->add_option("--to", c_to);
  on(cube_build, [&] {
    FunnelStore store(g.dir() / "store");
    ExperimentRegistry registry(g.dir() / "experiments");
    const auto e = registry.get(c_experiment);
    const auto snap = store.snapshot();
    DateRange range{e.start_date, e.end_date.value_or(snap->max_date().value_or(e.start_date))};
    if (!c_from.empty()) range.from = Date::parse(c_from);
    if (!c_to.empty()) range.to = Date::parse(c_to);
    auto build = build_cubes(*snap, e, range, c_numerators, c_denominators);
    const size_t cells = build.cells.size();
    const fs::path path = g.dir() / "analytics.csv";
    AnalyticsTable table = fs::exists(path) ? AnalyticsTable::load(path) : AnalyticsTable();
    table.append(std::move(build));
    table.save(path);
    std::cout << cells << " cells for " << c_experiment << '\n';
  });
  auto* cube_query = cube->add_subcommand("query", "Differential results as JSON");
  cube_query->add_option("--experiment", c_experiment)->required();
  cube_query->add_option("--numerator", c_numerator)->capture_default_str();
  cube_query->add_option("--measure", c_measure)->capture_default_str();
  cube_query->add_option("--filter", c_filters, "key=value (repeatable)");
  on(cube_query, [&] {
    ServerOptions options;
    options.data_dir = g.dir();
    ApiServer server(options);
    std::multimap<std::string, std::string> q{
        {"experiment", c_experiment}, {"numerator", c_numerator}, {"measure", c_measure}};
    for (const auto& f : c_filters) q.emplace("filters", f);
    const auto r = server.cube(q);
    std::cout << json::parse(r.body).dump(2) << '\n';
    if (r.status == 404) throw NotFound(json::parse(r.body).at("error").get<std::string>());
    if (r.status != 200) throw Error(json::parse(r.body).at("error").get<std::string>());
  });

  // experiment
  auto* experiment = app.add_subcommand("experiment", "Experiment registry")->require_subcommand(1);
  auto* exp_list = experiment->add_subcommand("list", "List experiments");
  on(exp_list, [&] {
    ExperimentRegistry registry(g.dir() / "experiments");
    json out = json::array();
    for (const auto& e : registry.list()) out.push_back(to_json(e));
    print(out);
  });
  auto* exp_create = experiment->add_subcommand("create", "Register an experiment from a JSON file");
  std::string exp_file;
  exp_create->add_option("--file", exp_file)->required();
  on(exp_create, [&] {
    ExperimentRegistry registry(g.dir() / "experiments");
    auto in = open_in(exp_file);
    auto config = experiment_from_json(json::parse(in));
    const std::string id = config.experiment_id;
    registry.create(std::move(config));
    std::cout << "created " << id << '\n';
  });

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP API server");
  int port = 8080;
  std::string host = "127.0.0.1", cors = "*";
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--cors-origin", cors)->capture_default_str();
  on(serve, [&] {
    ServerOptions options;
    options.data_dir = g.dir();
    options.cors_origin = cors;
    ApiServer server(options);
    const int bound = server.bind(host, port);
    std::cerr << "listening on " << host << ':' << bound << '\n';
    server.serve();
  });

  CLI11_PARSE(app, argc, argv);
  try {
    action();
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NotFound& e) {
    std::cerr << "not found: " << e.what() << '\n';
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
