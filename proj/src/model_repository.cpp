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
#include "agilerec/model_repository.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <json.hpp>

namespace agilerec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void check_model_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") throw InvalidArgument("invalid model id '" + id + "'");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok) throw InvalidArgument("invalid model id '" + id + "'");
  }
}

ModelManifest from_json(const json& j) {
  ModelManifest m;
  m.model_id = j.at("model_id").get<std::string>();
  m.target = parse_model_target(j.at("target").get<std::string>());
  m.version = j.at("version").get<int64_t>();
  m.created_at = j.at("created_at").get<std::string>();
  m.training_window = {Date::parse(j.at("training_window").at("from").get<std::string>()),
                       Date::parse(j.at("training_window").at("to").get<std::string>())};
  m.document_digest = j.at("document_digest").get<std::string>();
  return m;
}

}  // namespace

json to_json(const ModelManifest& m) {
  return {{"model_id", m.model_id},
          {"target", std::string(to_string(m.target))},
          {"version", m.version},
          {"created_at", m.created_at},
          {"training_window", {{"from", m.training_window.from.to_string()},
                               {"to", m.training_window.to.to_string()}}},
          {"document_digest", m.document_digest}};
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

ModelRepository::ModelRepository(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  const fs::path index = dir_ / "manifest.json";
  if (!fs::exists(index)) return;
  json j;
  try {
    j = json::parse(read_file(index));
    for (const auto& m : j.at("models")) {
      auto manifest = from_json(m);
      models_[{manifest.model_id, manifest.version}] = manifest;
    }
    for (const auto& [target, ref] : j.at("active").items()) {
      active_[parse_model_target(target)] = {ref.at("model_id").get<std::string>(),
                                             ref.at("version").get<int64_t>()};
    }
  } catch (const json::exception& e) {
    throw CorruptModel("model index " + index.string() + " is unreadable: " + e.what());
  }
}

void ModelRepository::write_index() const {
  json models = json::array();
  for (const auto& [key, m] : models_) models.push_back(to_json(m));
  json active = json::object();
  for (const auto& [target, ref] : active_) {
    active[std::string(to_string(target))] = {{"model_id", ref.first}, {"version", ref.second}};
  }
  write_file_atomically(dir_ / "manifest.json", json{{"models", models}, {"active", active}}.dump(2) + "\n");
}

ModelManifest ModelRepository::save_model(const std::string& document, ModelManifest manifest) {
  check_model_id(manifest.model_id);
  from_pmml(document);  // refuse documents the loader would reject
  std::lock_guard lock(mu_);
  int64_t version = 1;
  for (const auto& [key, m] : models_) {
    if (key.first == manifest.model_id) {
      if (m.target != manifest.target) {
        throw InvalidArgument("model '" + manifest.model_id + "' already holds target " +
                              std::string(to_string(m.target)));
      }
      version = std::max(version, key.second + 1);
    }
  }
  manifest.version = version;
  manifest.document_digest = sha256_hex(document);
  if (manifest.created_at.empty()) manifest.created_at = now_utc();

  fs::create_directories(dir_ / manifest.model_id);
  write_file_atomically(dir_ / manifest.model_id / (std::to_string(version) + ".pmml"), document);
  models_[{manifest.model_id, version}] = manifest;
  if (!active_.count(manifest.target)) active_[manifest.target] = {manifest.model_id, version};
  write_index();
  return manifest;
}

ModelManifest ModelRepository::save_model(const RegressionTree& tree, ModelManifest manifest) {
  // The version inside the document header is provisional until assigned.
  std::string doc;
  {
    std::lock_guard lock(mu_);
    int64_t version = 1;
    for (const auto& [key, m] : models_) {
      if (key.first == manifest.model_id) version = std::max(version, key.second + 1);
    }
    manifest.version = version;
    if (manifest.created_at.empty()) manifest.created_at = now_utc();
  }
  doc = to_pmml(tree, &manifest);
  return save_model(doc, manifest);
}

const ModelManifest& ModelRepository::find(const std::string& model_id, int64_t version) const {
  auto it = models_.find({model_id, version});
  if (it == models_.end()) {
    throw NotFound("no model " + model_id + " version " + std::to_string(version));
  }
  return it->second;
}

LoadedModel ModelRepository::load(const std::string& model_id, int64_t version) const {
  ModelManifest manifest;
  {
    std::lock_guard lock(mu_);
    manifest = find(model_id, version);
  }
  const fs::path path = dir_ / model_id / (std::to_string(version) + ".pmml");
  std::string doc;
  try {
    doc = read_file(path);
  } catch (const NotFound&) {
    throw CorruptModel("model document " + path.string() + " is missing");
  }
  if (sha256_hex(doc) != manifest.document_digest) {
    throw CorruptModel("digest mismatch for " + path.string());
  }
  return {from_pmml(doc), manifest};
}

std::optional<ModelManifest> ModelRepository::active_manifest(ModelTarget target) const {
  std::lock_guard lock(mu_);
  auto it = active_.find(target);
  if (it == active_.end()) return std::nullopt;
  return find(it->second.first, it->second.second);
}

LoadedModel ModelRepository::get_active(ModelTarget target) const {
  auto m = active_manifest(target);
  if (!m) throw NotFound("no active model for target " + std::string(to_string(target)));
  return load(m->model_id, m->version);
}

void ModelRepository::activate(const std::string& model_id, int64_t version) {
  std::lock_guard lock(mu_);
  const ModelManifest& m = find(model_id, version);
  auto previous = active_;
  active_[m.target] = {model_id, version};
  try {
    write_index();
  } catch (...) {
    active_ = std::move(previous);
    throw;
  }
}

std::vector<ModelManifest> ModelRepository::list() const {
  std::lock_guard lock(mu_);
  std::vector<ModelManifest> out;
  for (const auto& [key, m] : models_) out.push_back(m);
  return out;
}

}  // namespace agilerec
