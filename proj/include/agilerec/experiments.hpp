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
#include <vector>

#include <json.hpp>

#include "agilerec/funnel_store.hpp"
#include "agilerec/scoring.hpp"

namespace agilerec {

enum class RankerMode { kScored, kBaseline };

std::string_view to_string(RankerMode mode);
RankerMode parse_ranker_mode(std::string_view text);

struct VariantConfig {
  std::string variant_tag;
  double weight = 0;
  ScoreParams score_params;
  RankerMode ranker_mode = RankerMode::kScored;
  std::map<ModelTarget, int64_t> model_versions;
  bool is_control = false;
};

struct ExperimentConfig {
  std::string experiment_id;
  std::string name;
  std::string salt;
  double traffic_fraction = 1.0;
  std::vector<VariantConfig> variants;
  Date start_date;
  std::optional<Date> end_date;

  // Throws InvalidArgument: weights must sum to 1 (1e-9), tags unique,
  // exactly one control, traffic_fraction in (0, 1].
  void validate() const;
  const VariantConfig& control() const;
  const VariantConfig* variant(std::string_view tag) const;
  bool active_on(Date d) const { return d >= start_date && (!end_date || d <= *end_date); }
};

nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_from_json(const nlohmann::json& j);

// FNV-1a 64 over salt ":" visitor_id, finished with the murmur3 fmix64 mixer.
// Fixed for the lifetime of stored experiments; golden values are tested.
uint64_t assignment_hash(std::string_view salt, std::string_view visitor_id);

// The high 32 hash bits decide inclusion (below traffic_fraction), the low
// 32 bits pick the variant by cumulative weight. Raising traffic_fraction
// therefore never moves an included visitor.
const VariantConfig* assign_variant(std::string_view visitor_id, const ExperimentConfig& config);
std::optional<std::string> assign(std::string_view visitor_id, const ExperimentConfig& config);

class ExperimentRegistry {
 public:
  // With a directory, every change is persisted as <dir>/<experiment_id>.json
  // and existing files are loaded.
  explicit ExperimentRegistry(std::optional<std::filesystem::path> dir = std::nullopt);

  void create(ExperimentConfig config);
  void end(const std::string& experiment_id, Date end_date);
  void set_traffic_fraction(const std::string& experiment_id, double fraction);

  ExperimentConfig get(const std::string& experiment_id) const;
  // Every experiment, ended ones included, by experiment_id.
  std::vector<ExperimentConfig> list() const;
  std::optional<std::string> experiment_for_tag(const std::string& variant_tag) const;

  // Sets the row's variant tag. Idempotent for the same tag; a different
  // existing tag raises InvalidArgument, an unregistered tag NotFound.
  void tag_exposure(RawEvent& event, const std::string& variant_tag) const;
  void tag_exposure(ImpressionRow& row, const std::string& variant_tag) const;

 private:
  void check_tag(const std::string& variant_tag) const;
  void persist(const ExperimentConfig& config) const;

  std::optional<std::filesystem::path> dir_;
  mutable std::mutex mu_;
  std::map<std::string, ExperimentConfig> experiments_;
  std::map<std::string, std::string> tag_owner_;
};

}  // namespace agilerec
