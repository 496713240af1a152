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

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "agilerec/cube.hpp"
#include "agilerec/experiments.hpp"
#include "agilerec/features.hpp"
#include "agilerec/funnel_store.hpp"
#include "agilerec/model_repository.hpp"
#include "agilerec/page_ranker.hpp"
#include "agilerec/scoring.hpp"

namespace agilerec {

class Conflict : public Error {
 public:
  using Error::Error;
};

struct ServerOptions {
  // Layout under data_dir: store/, experiments/, models/, analytics.csv and
  // an optional unit_presets.json. Without it everything is in memory.
  std::optional<std::filesystem::path> data_dir;
  // Model repository location; defaults to data_dir/models. Lets an
  // in-memory server still serve trained models.
  std::optional<std::filesystem::path> models_dir;
  std::string cors_origin = "*";
  // Ranking for visitors outside every experiment.
  ScoreParams default_params = ScoreParams::preset("enrollment");
  std::map<std::string, std::vector<Unit>> unit_presets;
};

// Immutable view that every request reads; replaced wholesale on ingest,
// model activation or cube builds.
struct ServingState {
  uint64_t snapshot_id = 0;
  std::shared_ptr<const FunnelSnapshot> snapshot;
  std::shared_ptr<const FeatureEngine> features;
  std::optional<Date> latest_date;  // newest funnel date
  std::shared_ptr<const AnalyticsTable> analytics;
  ScoreModels active_models;
};

struct HttpResult {
  int status = 200;
  std::string body;  // JSON
};

class ApiServer {
 public:
  explicit ApiServer(ServerOptions options);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  FunnelStore& store() { return *store_; }
  ExperimentRegistry& experiments() { return *experiments_; }
  ModelRepository* models() { return models_.get(); }

  void set_analytics(AnalyticsTable table);
  // Republishes the serving state from the store, registry and repository.
  void refresh();
  std::shared_ptr<const ServingState> state() const;

  // Endpoint bodies, callable without a socket. `query` holds the URL
  // parameters; repeated keys keep their order.
  HttpResult rank(const std::string& body) const;
  HttpResult ingest(const std::string& body);
  HttpResult list_experiments() const;
  HttpResult cube(const std::multimap<std::string, std::string>& query) const;
  HttpResult build_cube(const std::string& body);
  HttpResult list_models() const;
  HttpResult health() const;

  // Binds to host:port (0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void serve();
  void stop();

 private:
  struct Http;

  std::shared_ptr<const RegressionTree> model_for(ModelTarget target, int64_t version) const;
  std::shared_ptr<const RegressionTree> load_model(const std::string& model_id, int64_t version) const;
  ScoreModels models_for(const VariantConfig* variant, const ServingState& state) const;
  void publish(std::shared_ptr<const AnalyticsTable> analytics);

  ServerOptions options_;
  std::unique_ptr<FunnelStore> store_;
  std::unique_ptr<ExperimentRegistry> experiments_;
  std::unique_ptr<ModelRepository> models_;
  std::unique_ptr<Http> http_;

  mutable std::mutex state_mu_;
  std::shared_ptr<const ServingState> state_;
  std::mutex write_mu_;  // ingest and cube builds are serialized
  mutable std::mutex model_mu_;
  mutable std::map<std::pair<std::string, int64_t>, std::shared_ptr<const RegressionTree>> model_cache_;
};

// Parses the unit list of a /rank body or a presets file entry.
std::vector<Unit> units_from_json(const nlohmann::json& j);

}  // namespace agilerec
