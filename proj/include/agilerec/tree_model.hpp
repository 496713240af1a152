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

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agilerec/feature_schema.hpp"

namespace agilerec {

// Pre-pruning ("trimming") limits. min_gain is relative to the root's
// weighted sum of squared errors.
struct TreeParams {
  int max_depth = 6;
  double min_leaf_weight = 1000;
  double min_gain = 1e-6;
};

inline constexpr size_t kMaxSplitCategories = 32;

struct TreeSplit {
  size_t feature = 0;
  // Numeric features: x <= threshold goes left, x > threshold goes right.
  double threshold = 0;
  // Categorical features: category bitmasks. A category in neither mask
  // stops at this node.
  uint32_t left_categories = 0;
  uint32_t right_categories = 0;

  bool operator==(const TreeSplit&) const = default;
};

struct TreeNode {
  double prediction = 0;
  double weight = 0;
  std::optional<TreeSplit> split;
  int32_t left = -1;
  int32_t right = -1;
  bool default_left = true;  // missing values

  bool is_leaf() const { return !split.has_value(); }
};

class RegressionTree {
 public:
  RegressionTree(std::shared_ptr<const FeatureSchema> schema, std::string target_name,
                 std::vector<TreeNode> nodes);

  const FeatureSchema& schema() const { return *schema_; }
  std::shared_ptr<const FeatureSchema> schema_ptr() const { return schema_; }
  const std::string& target_name() const { return target_name_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  size_t node_count() const { return nodes_.size(); }
  size_t leaf_count() const;
  int depth() const;

  // Throws SchemaMismatch when v was built against a different schema.
  double predict(const FeatureVector& v) const;
  // Raw values in schema order; only the width is checked.
  double predict(std::span<const double> values) const;
  // Index of the node that produces the prediction.
  size_t route(std::span<const double> values) const;

  // Same shape, splits and default children; predictions and weights
  // compared within `tolerance` (relative).
  bool same_structure(const RegressionTree& other, double tolerance = 0) const;

 private:
  std::shared_ptr<const FeatureSchema> schema_;
  std::string target_name_;
  std::vector<TreeNode> nodes_;
};

// Weighted CART regression. The best split at a node is chosen over all
// candidates by weighted variance reduction; the node stays a leaf when that
// split breaks a trimming limit. Growing is therefore monotone in each limit.
RegressionTree train_tree(const TrainingSet& data, const TreeParams& params = {},
                          std::string target_name = "target");

struct ResidualBin {
  size_t count = 0;
  double weight = 0;
  double min_prediction = 0;
  double max_prediction = 0;
  double mean_prediction = 0;  // weighted
  double mean_actual = 0;      // weighted
  double bias = 0;             // mean_prediction - mean_actual
};

struct ResidualReport {
  size_t count = 0;
  double total_weight = 0;
  double weighted_mae = 0;
  double weighted_bias = 0;  // prediction - actual
  // Bins by weighted prediction quantile.
  std::array<ResidualBin, 10> deciles{};
};

ResidualReport evaluate_holdout(const RegressionTree& tree, const TrainingSet& holdout);

}  // namespace agilerec
