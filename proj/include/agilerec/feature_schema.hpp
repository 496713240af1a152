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

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agilerec/common.hpp"

namespace agilerec {

class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

enum class FeatureKind { kNumeric, kCategorical };

struct FeatureDef {
  std::string name;
  FeatureKind kind = FeatureKind::kNumeric;
  // Categorical domain; a value is stored as its index into this list.
  std::vector<std::string> categories;

  bool operator==(const FeatureDef&) const = default;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureDef> features);

  const std::vector<FeatureDef>& features() const { return features_; }
  size_t size() const { return features_.size(); }
  const FeatureDef& operator[](size_t i) const { return features_[i]; }
  std::optional<size_t> index_of(std::string_view name) const;
  // Category index within feature `feature`, or nullopt when outside the domain.
  std::optional<size_t> category_index(size_t feature, std::string_view value) const;

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<FeatureDef> features_;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

// Values in schema order. Categorical features hold their category index;
// NaN marks a missing value.
struct FeatureVector {
  std::shared_ptr<const FeatureSchema> schema;
  std::vector<double> values;

  double get(std::string_view name) const;
  // Bitwise equality including missing markers.
  bool same_values(const FeatureVector& other) const;
};

struct TrainingRow {
  std::vector<double> features;
  double target = 0;
  double weight = 1;
};

struct TrainingSet {
  std::shared_ptr<const FeatureSchema> schema;
  std::vector<TrainingRow> rows;

  // Throws InvalidArgument when a weight is not positive or a target not finite.
  void validate() const;
};

}  // namespace agilerec
