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
#include "agilerec/feature_schema.hpp"

#include <cstring>
#include <set>

namespace agilerec {

FeatureSchema::FeatureSchema(std::vector<FeatureDef> features) : features_(std::move(features)) {
  std::set<std::string_view> names;
  for (const auto& f : features_) {
    if (f.name.empty()) throw InvalidArgument("feature with empty name");
    if (!names.insert(f.name).second) throw InvalidArgument("duplicate feature '" + f.name + "'");
    if (f.kind == FeatureKind::kNumeric && !f.categories.empty()) {
      throw InvalidArgument("numeric feature '" + f.name + "' cannot have categories");
    }
    std::set<std::string_view> cats(f.categories.begin(), f.categories.end());
    if (cats.size() != f.categories.size()) {
      throw InvalidArgument("feature '" + f.name + "' has duplicate categories");
    }
  }
}

std::optional<size_t> FeatureSchema::index_of(std::string_view name) const {
  for (size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<size_t> FeatureSchema::category_index(size_t feature, std::string_view value) const {
  const auto& cats = features_.at(feature).categories;
  for (size_t i = 0; i < cats.size(); ++i) {
    if (cats[i] == value) return i;
  }
  return std::nullopt;
}

double FeatureVector::get(std::string_view name) const {
  auto i = schema->index_of(name);
  if (!i) throw InvalidArgument("no feature named '" + std::string(name) + "'");
  return values[*i];
}

bool FeatureVector::same_values(const FeatureVector& other) const {
  return values.size() == other.values.size() &&
         std::memcmp(values.data(), other.values.data(), values.size() * sizeof(double)) == 0;
}

void TrainingSet::validate() const {
  if (!schema) throw InvalidArgument("training set has no schema");
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.features.size() != schema->size()) {
      throw InvalidArgument("training row " + std::to_string(i) + " has the wrong width");
    }
    if (!(r.weight > 0) || !std::isfinite(r.weight)) {
      throw InvalidArgument("training row " + std::to_string(i) + " has a non-positive weight");
    }
    if (!std::isfinite(r.target)) {
      throw InvalidArgument("training row " + std::to_string(i) + " has a non-finite target");
    }
  }
}

}  // namespace agilerec
