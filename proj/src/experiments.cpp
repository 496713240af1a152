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
#include "agilerec/experiments.hpp"

#include <cmath>
#include <set>

namespace agilerec {

using nlohmann::json;

std::string_view to_string(RankerMode mode) { return mode == RankerMode::kScored ? "scored" : "baseline"; }

RankerMode parse_ranker_mode(std::string_view text) {
  if (text == "scored") return RankerMode::kScored;
  if (text == "baseline") return RankerMode::kBaseline;
  throw InvalidArgument("unknown ranker mode '" + std::string(text) + "'");
}

void ExperimentConfig::validate() const {
  if (experiment_id.empty()) throw InvalidArgument("experiment without id");
  if (salt.empty()) throw InvalidArgument("experiment " + experiment_id + " has an empty salt");
  if (!(traffic_fraction > 0 && traffic_fraction <= 1)) {
    throw InvalidArgument("traffic_fraction must be in (0, 1]");
  }
  if (variants.empty()) throw InvalidArgument("experiment " + experiment_id + " has no variants");
  double total = 0;
  int controls = 0;
  std::set<std::string_view> tags;
  for (const auto& v : variants) {
    if (v.variant_tag.empty()) throw InvalidArgument("variant without tag");
    if (!tags.insert(v.variant_tag).second) throw InvalidArgument("duplicate variant tag " + v.variant_tag);
    if (!(v.weight > 0) || !std::isfinite(v.weight)) {
      throw InvalidArgument("variant " + v.variant_tag + " needs a positive weight");
    }
    v.score_params.validate();
    total += v.weight;
    controls += v.is_control;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw InvalidArgument("variant weights must sum to 1");
  if (controls != 1) throw InvalidArgument("experiment needs exactly one control variant");
  if (end_date && *end_date < start_date) throw InvalidArgument("experiment ends before it starts");
}

const VariantConfig& ExperimentConfig::control() const {
  for (const auto& v : variants) {
    if (v.is_control) return v;
  }
  throw InvalidArgument("experiment " + experiment_id + " has no control");
}

const VariantConfig* ExperimentConfig::variant(std::string_view tag) const {
  for (const auto& v : variants) {
    if (v.variant_tag == tag) return &v;
  }
  return nullptr;
}

json to_json(const ExperimentConfig& c) {
  json variants = json::array();
  for (const auto& v : c.variants) {
    json versions = json::object();
    for (const auto& [t, ver] : v.model_versions) versions[std::string(to_string(t))] = ver;
    variants.push_back({{"variant_tag", v.variant_tag},
                        {"weight", v.weight},
                        {"score_params",
                         {{"alpha", v.score_params.alpha},
                          {"beta", v.score_params.beta},
                          {"gamma", v.score_params.gamma},
                          {"tau", v.score_params.tau},
                          {"p_min", v.score_params.p_min}}},
                        {"ranker_mode", std::string(to_string(v.ranker_mode))},
                        {"model_versions", versions},
                        {"is_control", v.is_control}});
  }
  return {{"experiment_id", c.experiment_id},
          {"name", c.name},
          {"salt", c.salt},
          {"traffic_fraction", c.traffic_fraction},
          {"variants", variants},
          {"start_date", c.start_date.to_string()},
          {"end_date", c.end_date ? json(c.end_date->to_string()) : json(nullptr)}};
}

ExperimentConfig experiment_from_json(const json& j) {
  try {
    ExperimentConfig c;
    c.experiment_id = j.at("experiment_id").get<std::string>();
    c.name = j.value("name", c.experiment_id);
    c.salt = j.value("salt", c.experiment_id);
    c.traffic_fraction = j.value("traffic_fraction", 1.0);
    for (const auto& v : j.at("variants")) {
      VariantConfig vc;
      vc.variant_tag = v.at("variant_tag").get<std::string>();
      vc.weight = v.at("weight").get<double>();
      if (v.contains("score_params")) {
        const auto& p = v.at("score_params");
        if (p.is_string()) {
          vc.score_params = ScoreParams::preset(p.get<std::string>());
        } else {
          vc.score_params.alpha = p.value("alpha", 0.0);
          vc.score_params.beta = p.value("beta", 0.0);
          vc.score_params.gamma = p.value("gamma", 0.0);
          vc.score_params.tau = p.value("tau", 0.0);
          vc.score_params.p_min = p.value("p_min", 1.0);
        }
      }
      vc.ranker_mode = parse_ranker_mode(v.value("ranker_mode", "scored"));
      if (v.contains("model_versions")) {
        for (const auto& [t, ver] : v.at("model_versions").items()) {
          vc.model_versions[parse_model_target(t)] = ver.get<int64_t>();
        }
      }
      vc.is_control = v.value("is_control", false);
      c.variants.push_back(std::move(vc));
    }
    c.start_date = Date::parse(j.at("start_date").get<std::string>());
    if (j.contains("end_date") && !j.at("end_date").is_null()) {
      c.end_date = Date::parse(j.at("end_date").get<std::string>());
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad experiment config: ") + e.what());
  }
}

uint64_t assignment_hash(std::string_view salt, std::string_view visitor_id) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  };
  feed(salt);
  feed(":");
  feed(visitor_id);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ull;
  h ^= h >> 33;
  return h;
}

const VariantConfig* assign_variant(std::string_view visitor_id, const ExperimentConfig& config) {
  const uint64_t h = assignment_hash(config.salt, visitor_id);
  constexpr double kScale = 4294967296.0;  // 2^32
  const double include = static_cast<double>(h >> 32) / kScale;
  if (include >= config.traffic_fraction) return nullptr;
  const double u = static_cast<double>(h & 0xFFFFFFFFull) / kScale;
  double cumulative = 0;
  for (const auto& v : config.variants) {
    cumulative += v.weight;
    if (u < cumulative) return &v;
  }
  return &config.variants.back();  // weights summing to 1 - 1e-12
}

std::optional<std::string> assign(std::string_view visitor_id, const ExperimentConfig& config) {
  const VariantConfig* v = assign_variant(visitor_id, config);
  if (!v) return std::nullopt;
  return v->variant_tag;
}

ExperimentRegistry::ExperimentRegistry(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
  if (!dir_) return;
  std::filesystem::create_directories(*dir_);
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(*dir_)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    json j;
    try {
      j = json::parse(read_file(f));
    } catch (const json::exception& e) {
      throw InvalidArgument(f.string() + ": " + e.what());
    }
    auto config = experiment_from_json(j);
    for (const auto& v : config.variants) {
      if (tag_owner_.count(v.variant_tag)) throw InvalidArgument("variant tag " + v.variant_tag + " is reused");
      tag_owner_[v.variant_tag] = config.experiment_id;
    }
    experiments_[config.experiment_id] = std::move(config);
  }
}

void ExperimentRegistry::persist(const ExperimentConfig& config) const {
  if (dir_) write_file_atomically(*dir_ / (config.experiment_id + ".json"), to_json(config).dump(2) + "\n");
}

void ExperimentRegistry::create(ExperimentConfig config) {
  config.validate();
  for (char c : config.experiment_id) {
    if (c == '/' || c == '\\') throw InvalidArgument("experiment id may not contain path separators");
  }
  std::lock_guard lock(mu_);
  if (experiments_.count(config.experiment_id)) {
    throw InvalidArgument("experiment " + config.experiment_id + " already exists");
  }
  for (const auto& v : config.variants) {
    if (tag_owner_.count(v.variant_tag)) {
      throw InvalidArgument("variant tag " + v.variant_tag + " belongs to experiment " + tag_owner_[v.variant_tag]);
    }
  }
  persist(config);
  for (const auto& v : config.variants) tag_owner_[v.variant_tag] = config.experiment_id;
  experiments_[config.experiment_id] = std::move(config);
}

void ExperimentRegistry::end(const std::string& experiment_id, Date end_date) {
  std::lock_guard lock(mu_);
  auto it = experiments_.find(experiment_id);
  if (it == experiments_.end()) throw NotFound("unknown experiment " + experiment_id);
  ExperimentConfig updated = it->second;
  updated.end_date = end_date;
  updated.validate();
  persist(updated);
  it->second = std::move(updated);
}

void ExperimentRegistry::set_traffic_fraction(const std::string& experiment_id, double fraction) {
  std::lock_guard lock(mu_);
  auto it = experiments_.find(experiment_id);
  if (it == experiments_.end()) throw NotFound("unknown experiment " + experiment_id);
  ExperimentConfig updated = it->second;
  updated.traffic_fraction = fraction;
  updated.validate();
  persist(updated);
  it->second = std::move(updated);
}

ExperimentConfig ExperimentRegistry::get(const std::string& experiment_id) const {
  std::lock_guard lock(mu_);
  auto it = experiments_.find(experiment_id);
  if (it == experiments_.end()) throw NotFound("unknown experiment " + experiment_id);
  return it->second;
}

std::vector<ExperimentConfig> ExperimentRegistry::list() const {
  std::lock_guard lock(mu_);
  std::vector<ExperimentConfig> out;
  for (const auto& [id, c] : experiments_) out.push_back(c);
  return out;
}

std::optional<std::string> ExperimentRegistry::experiment_for_tag(const std::string& variant_tag) const {
  std::lock_guard lock(mu_);
  auto it = tag_owner_.find(variant_tag);
  if (it == tag_owner_.end()) return std::nullopt;
  return it->second;
}

void ExperimentRegistry::check_tag(const std::string& variant_tag) const {
  if (!experiment_for_tag(variant_tag)) {
    throw NotFound("variant tag " + variant_tag + " belongs to no experiment");
  }
}

void ExperimentRegistry::tag_exposure(RawEvent& event, const std::string& variant_tag) const {
  check_tag(variant_tag);
  if (event.variant_tag == variant_tag) return;
  if (!event.variant_tag.empty()) {
    throw InvalidArgument("event already tagged " + event.variant_tag + ", refusing " + variant_tag);
  }
  event.variant_tag = variant_tag;
}

void ExperimentRegistry::tag_exposure(ImpressionRow& row, const std::string& variant_tag) const {
  check_tag(variant_tag);
  if (row.key.variant_tag == variant_tag) return;
  if (!row.key.variant_tag.empty()) {
    throw InvalidArgument("row already tagged " + row.key.variant_tag + ", refusing " + variant_tag);
  }
  row.key.variant_tag = variant_tag;
}

}  // namespace agilerec
