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
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "agilerec/pmml.hpp"

namespace agilerec {

class CorruptModel : public Error {
 public:
  using Error::Error;
};

std::string sha256_hex(std::string_view bytes);

nlohmann::json to_json(const ModelManifest& manifest);

struct LoadedModel {
  RegressionTree tree;
  ModelManifest manifest;
};

// Layout: <dir>/<model_id>/<version>.pmml plus <dir>/manifest.json, which
// lists every saved version and the active version per target.
class ModelRepository {
 public:
  explicit ModelRepository(std::filesystem::path dir);

  // Assigns the next version for manifest.model_id and fills in the digest
  // (and created_at when empty). The first model saved for a target becomes
  // active.
  ModelManifest save_model(const std::string& document, ModelManifest manifest);
  ModelManifest save_model(const RegressionTree& tree, ModelManifest manifest);

  LoadedModel load(const std::string& model_id, int64_t version) const;
  LoadedModel get_active(ModelTarget target) const;
  std::optional<ModelManifest> active_manifest(ModelTarget target) const;
  void activate(const std::string& model_id, int64_t version);

  std::vector<ModelManifest> list() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  void write_index() const;
  const ModelManifest& find(const std::string& model_id, int64_t version) const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, int64_t>, ModelManifest> models_;
  std::map<ModelTarget, std::pair<std::string, int64_t>> active_;
};

}  // namespace agilerec
