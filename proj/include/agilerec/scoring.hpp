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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "agilerec/features.hpp"
#include "agilerec/tree_model.hpp"

namespace agilerec {

struct ScoreParams {
  double alpha = 0;  // price exponent
  double beta = 0;   // consumption exponent
  double gamma = 0;  // quality exponent
  double tau = 0;    // interest multiplier exponent
  double p_min = 1;  // price clamp, keeps free courses rankable

  // Throws InvalidArgument unless exponents are finite and >= 0 and p_min > 0.
  void validate() const;
  bool operator==(const ScoreParams&) const = default;

  // enrollment, consumption, revenue, quality, blended
  static ScoreParams preset(std::string_view name);
  static const std::vector<std::string>& preset_names();
};

// Score = max(epmi, 0) * max(price, p_min)^alpha * cpe^beta * npe^gamma * m^tau
// with m the base interest multiplier.
double combine_score(double epmi, double price, double cpe, double npe, InterestState state,
                     const ScoreParams& params);

struct ScoreModels {
  std::shared_ptr<const RegressionTree> epmi;
  std::shared_ptr<const RegressionTree> cpe;
  std::shared_ptr<const RegressionTree> npe;
};

struct CourseScore {
  int64_t course_id = 0;
  double score = 0;
  bool operator==(const CourseScore&) const = default;
};

struct ScoreCacheEntry {
  std::string visitor_id;
  Date as_of;
  std::string variant_tag;
  std::vector<CourseScore> scores;  // candidate order
};

struct PartitionError {
  size_t partition = 0;
  std::string first_visitor;
  std::string message;
};

struct BatchOptions {
  size_t partition_size = 1000;
  // Run only these partitions (restart after a partial failure).
  std::optional<std::vector<size_t>> only_partitions;
  size_t threads = 0;  // 0: hardware concurrency
  std::string variant_tag;
  PageContext context = PageContext::kFeatured;
};

struct BatchResult {
  std::vector<ScoreCacheEntry> entries;  // visitor order, failed partitions omitted
  std::vector<size_t> completed_partitions;
  std::vector<PartitionError> errors;
  size_t partition_count = 0;
};

class ScoringEngine {
 public:
  ScoringEngine(std::shared_ptr<const FeatureEngine> features, ScoreModels models);

  const FeatureEngine& features() const { return *features_; }
  const ScoreModels& models() const { return models_; }

  // Features are taken as of `as_of`. Throws NotFound for an unknown course
  // and Error when a model needed by `params` is absent.
  double score(const std::string& visitor_id, int64_t course_id, Date as_of, const ScoreParams& params,
               PageContext context = PageContext::kFeatured) const;

  std::vector<CourseScore> score_on_request(const std::string& visitor_id,
                                            std::span<const int64_t> courses, Date as_of,
                                            const ScoreParams& params,
                                            PageContext context = PageContext::kFeatured) const;

  BatchResult batch_score(std::span<const std::string> visitors, std::span<const int64_t> courses,
                          Date as_of, const ScoreParams& params, const BatchOptions& options = {}) const;

 private:
  void check_models(const ScoreParams& params) const;
  double score_one(const VisitorProfile& profile, const AggregateTable& aggregates, int64_t course_id,
                   const ScoreParams& params, PageContext context) const;

  std::shared_ptr<const FeatureEngine> features_;
  ScoreModels models_;
};

// File-backed snapshot of nightly scores, keyed by (visitor_id, variant_tag).
//
// Layout, little-endian:
//   "ARSC" magic, u8 version (1), u32 entry count, then per entry:
//   u16 length + visitor bytes, i32 as_of (days since 1970-01-01),
//   u16 length + variant bytes, u32 score count, count x (i64 course, f64 score)
class ScoreCache {
 public:
  static constexpr uint8_t kVersion = 1;

  // Entries are immutable: a second put for the same key throws.
  void put(ScoreCacheEntry entry);
  const ScoreCacheEntry* get(const std::string& visitor_id, const std::string& variant_tag = "") const;
  size_t size() const { return entries_.size(); }

  void write(const std::filesystem::path& path) const;
  static ScoreCache read(const std::filesystem::path& path);

 private:
  std::map<std::pair<std::string, std::string>, ScoreCacheEntry> entries_;
};

}  // namespace agilerec
