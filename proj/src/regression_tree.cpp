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
#include <algorithm>
#include <cmath>
#include <numeric>

#include "agilerec/tree_model.hpp"

namespace agilerec {

namespace {

// Neumaier-compensated long double sum. Weighted rows and their
// row-expanded copies must produce the same sums.
struct Sum {
  long double s = 0;
  long double c = 0;

  void add(long double x) {
    long double t = s + x;
    if (std::fabs(s) >= std::fabs(x)) {
      c += (s - t) + x;
    } else {
      c += (x - t) + s;
    }
    s = t;
  }
  void add(const Sum& o) {
    add(o.s);
    add(o.c);
  }
  long double value() const { return s + c; }
};

struct Stats {
  Sum w, wy, wyy;

  void add_row(double weight, double target) {
    const long double lw = weight;
    w.add(lw);
    wy.add(lw * target);
    wyy.add(lw * target * target);
  }
  void add(const Stats& o) {
    w.add(o.w);
    wy.add(o.wy);
    wyy.add(o.wyy);
  }
  Stats minus(const Stats& o) const {
    Stats r = *this;
    r.w.add(-o.w.s);
    r.w.add(-o.w.c);
    r.wy.add(-o.wy.s);
    r.wy.add(-o.wy.c);
    r.wyy.add(-o.wyy.s);
    r.wyy.add(-o.wyy.c);
    return r;
  }
  long double weight() const { return w.value(); }
  long double sse() const {
    const long double W = w.value();
    if (W <= 0) return 0;
    const long double S = wy.value();
    return std::max<long double>(0, wyy.value() - S * S / W);
  }
  double mean() const { return static_cast<double>(wy.value() / w.value()); }
};

struct Candidate {
  TreeSplit split;
  long double gain = -1;
  long double left_weight = 0;
  long double right_weight = 0;
  bool missing_left = true;
  bool valid = false;
};

class Trainer {
 public:
  Trainer(const TrainingSet& data, const TreeParams& params) : data_(data), params_(params) {}

  std::vector<TreeNode> run() {
    std::vector<uint32_t> all(data_.rows.size());
    std::iota(all.begin(), all.end(), 0u);
    Stats root = stats_of(all);
    root_sse_ = root.sse();
    grow(std::move(all), 0);
    return std::move(nodes_);
  }

 private:
  Stats stats_of(const std::vector<uint32_t>& rows) const {
    Stats s;
    for (uint32_t r : rows) s.add_row(data_.rows[r].weight, data_.rows[r].target);
    return s;
  }

  double x(uint32_t row, size_t f) const { return data_.rows[row].features[f]; }

  // Gain of a partition with missing rows sent to the heavier side.
  void consider(Candidate& best, const TreeSplit& split, const Stats& left, const Stats& right,
                const Stats& missing, long double parent_sse) const {
    Stats l = left, r = right;
    const bool missing_left = left.weight() >= right.weight();
    (missing_left ? l : r).add(missing);
    const long double gain = parent_sse - l.sse() - r.sse();
    // Near-equal gains keep the earlier candidate (lower feature, lower threshold).
    const long double tol = 1e-10L * parent_sse;
    if (!best.valid || gain > best.gain + tol) {
      best.split = split;
      best.gain = gain;
      best.left_weight = l.weight();
      best.right_weight = r.weight();
      best.missing_left = missing_left;
      best.valid = true;
    }
  }

  void numeric_candidates(Candidate& best, const std::vector<uint32_t>& rows, size_t f,
                          long double parent_sse) const {
    std::vector<uint32_t> present;
    Stats missing;
    for (uint32_t r : rows) {
      if (is_missing(x(r, f))) {
        missing.add_row(data_.rows[r].weight, data_.rows[r].target);
      } else {
        present.push_back(r);
      }
    }
    if (present.size() < 2) return;
    std::sort(present.begin(), present.end(), [&](uint32_t a, uint32_t b) {
      return x(a, f) < x(b, f) || (x(a, f) == x(b, f) && a < b);
    });
    Stats total = stats_of(present);
    Stats left;
    for (size_t i = 0; i + 1 < present.size(); ++i) {
      left.add_row(data_.rows[present[i]].weight, data_.rows[present[i]].target);
      const double xi = x(present[i], f);
      if (xi == x(present[i + 1], f)) continue;
      TreeSplit split;
      split.feature = f;
      split.threshold = xi;
      consider(best, split, left, total.minus(left), missing, parent_sse);
    }
  }

  void categorical_candidates(Candidate& best, const std::vector<uint32_t>& rows, size_t f,
                              long double parent_sse) const {
    const size_t k = data_.schema->features()[f].categories.size();
    std::vector<Stats> per(k);
    Stats missing;
    for (uint32_t r : rows) {
      const double v = x(r, f);
      if (is_missing(v)) {
        missing.add_row(data_.rows[r].weight, data_.rows[r].target);
      } else {
        per[static_cast<size_t>(v)].add_row(data_.rows[r].weight, data_.rows[r].target);
      }
    }
    std::vector<size_t> present;
    for (size_t c = 0; c < k; ++c) {
      if (per[c].weight() > 0) present.push_back(c);
    }
    if (present.size() < 2) return;
    std::sort(present.begin(), present.end(), [&](size_t a, size_t b) {
      const double ma = per[a].mean(), mb = per[b].mean();
      return ma < mb || (ma == mb && a < b);
    });
    uint32_t all_mask = 0;
    for (size_t c : present) all_mask |= 1u << c;
    Stats left;
    uint32_t left_mask = 0;
    for (size_t j = 0; j + 1 < present.size(); ++j) {
      left.add(per[present[j]]);
      left_mask |= 1u << present[j];
      Stats r;
      for (size_t i = j + 1; i < present.size(); ++i) r.add(per[present[i]]);
      TreeSplit split;
      split.feature = f;
      split.left_categories = left_mask;
      split.right_categories = all_mask & ~left_mask;
      consider(best, split, left, r, missing, parent_sse);
    }
  }

  bool goes_left(uint32_t row, const TreeSplit& split, bool missing_left) const {
    const double v = x(row, split.feature);
    if (is_missing(v)) return missing_left;
    if (data_.schema->features()[split.feature].kind == FeatureKind::kNumeric) {
      return v <= split.threshold;
    }
    return (split.left_categories >> static_cast<size_t>(v)) & 1u;
  }

  int32_t grow(std::vector<uint32_t> rows, int depth) {
    const Stats here = stats_of(rows);
    const auto id = static_cast<int32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_[id].prediction = here.mean();
    nodes_[id].weight = static_cast<double>(here.weight());

    const long double sse = here.sse();
    if (depth >= params_.max_depth || sse <= 0 || root_sse_ <= 0) return id;

    Candidate best;
    for (size_t f = 0; f < data_.schema->size(); ++f) {
      if (data_.schema->features()[f].kind == FeatureKind::kNumeric) {
        numeric_candidates(best, rows, f, sse);
      } else {
        categorical_candidates(best, rows, f, sse);
      }
    }
    if (!best.valid) return id;
    if (best.gain <= static_cast<long double>(params_.min_gain) * root_sse_) return id;
    if (std::min(best.left_weight, best.right_weight) <
        static_cast<long double>(params_.min_leaf_weight)) {
      return id;
    }

    std::vector<uint32_t> left, right;
    for (uint32_t r : rows) (goes_left(r, best.split, best.missing_left) ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    nodes_[id].split = best.split;
    nodes_[id].default_left = best.left_weight >= best.right_weight;
    const int32_t l = grow(std::move(left), depth + 1);
    const int32_t r = grow(std::move(right), depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  const TrainingSet& data_;
  TreeParams params_;
  long double root_sse_ = 0;
  std::vector<TreeNode> nodes_;
};

bool close(double a, double b, double tol) {
  if (a == b) return true;
  return std::fabs(a - b) <= tol * std::max(std::fabs(a), std::fabs(b));
}

}  // namespace

RegressionTree::RegressionTree(std::shared_ptr<const FeatureSchema> schema, std::string target_name,
                               std::vector<TreeNode> nodes)
    : schema_(std::move(schema)), target_name_(std::move(target_name)), nodes_(std::move(nodes)) {
  if (!schema_) throw InvalidArgument("tree has no schema");
  if (nodes_.empty()) throw InvalidArgument("tree has no nodes");
  const auto n = static_cast<int32_t>(nodes_.size());
  std::vector<int> parents(nodes_.size(), 0);
  for (const auto& node : nodes_) {
    if (node.is_leaf()) continue;
    if (node.left <= 0 || node.right <= 0 || node.left >= n || node.right >= n) {
      throw InvalidArgument("tree node has invalid children");
    }
    ++parents[node.left];
    ++parents[node.right];
    const size_t f = node.split->feature;
    if (f >= schema_->size()) throw InvalidArgument("split on unknown feature");
    const auto& def = (*schema_)[f];
    if (def.kind == FeatureKind::kCategorical) {
      if (def.categories.size() > kMaxSplitCategories) {
        throw InvalidArgument("categorical split on more than 32 categories");
      }
      if (node.split->left_categories & node.split->right_categories) {
        throw InvalidArgument("categorical split sends a category both ways");
      }
    }
  }
  if (parents[0] != 0) throw InvalidArgument("tree root has a parent");
  for (size_t i = 1; i < parents.size(); ++i) {
    if (parents[i] != 1) throw InvalidArgument("tree node " + std::to_string(i) + " is not reachable once");
  }
}

size_t RegressionTree::leaf_count() const {
  return static_cast<size_t>(std::count_if(nodes_.begin(), nodes_.end(),
                                           [](const TreeNode& n) { return n.is_leaf(); }));
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  // Children always follow their parent in the node vector.
  for (size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes_[i].is_leaf()) {
      d[nodes_[i].left] = d[i] + 1;
      d[nodes_[i].right] = d[i] + 1;
    }
  }
  return best;
}

size_t RegressionTree::route(std::span<const double> values) const {
  if (values.size() != schema_->size()) {
    throw SchemaMismatch("feature vector has " + std::to_string(values.size()) +
                         " values, tree expects " + std::to_string(schema_->size()));
  }
  size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& node = nodes_[i];
    const TreeSplit& s = *node.split;
    const double v = values[s.feature];
    bool left;
    if (is_missing(v)) {
      left = node.default_left;
    } else if ((*schema_)[s.feature].kind == FeatureKind::kNumeric) {
      left = v <= s.threshold;
    } else {
      if (v < 0 || v >= kMaxSplitCategories || v != std::floor(v)) return i;
      const uint32_t bit = 1u << static_cast<uint32_t>(v);
      if (s.left_categories & bit) {
        left = true;
      } else if (s.right_categories & bit) {
        left = false;
      } else {
        return i;
      }
    }
    i = static_cast<size_t>(left ? node.left : node.right);
  }
  return i;
}

double RegressionTree::predict(std::span<const double> values) const {
  return nodes_[route(values)].prediction;
}

double RegressionTree::predict(const FeatureVector& v) const {
  if (!v.schema || (v.schema != schema_ && !(*v.schema == *schema_))) {
    throw SchemaMismatch("feature vector schema does not match the tree");
  }
  return predict(std::span<const double>(v.values));
}

bool RegressionTree::same_structure(const RegressionTree& other, double tolerance) const {
  if (!(*schema_ == *other.schema_) || nodes_.size() != other.nodes_.size()) return false;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const auto& a = nodes_[i];
    const auto& b = other.nodes_[i];
    if (a.split != b.split || a.left != b.left || a.right != b.right) return false;
    if (!a.is_leaf() && a.default_left != b.default_left) return false;
    if (!close(a.prediction, b.prediction, tolerance) || !close(a.weight, b.weight, tolerance)) {
      return false;
    }
  }
  return true;
}

RegressionTree train_tree(const TrainingSet& data, const TreeParams& params, std::string target_name) {
  data.validate();
  if (data.rows.empty()) throw InvalidArgument("cannot train on an empty training set");
  if (params.max_depth < 0 || !(params.min_leaf_weight >= 0) || !(params.min_gain >= 0)) {
    throw InvalidArgument("tree parameters must be non-negative");
  }
  for (size_t f = 0; f < data.schema->size(); ++f) {
    const auto& def = (*data.schema)[f];
    if (def.kind != FeatureKind::kCategorical) continue;
    if (def.categories.size() > kMaxSplitCategories) {
      throw InvalidArgument("feature '" + def.name + "' has more than 32 categories");
    }
    for (const auto& row : data.rows) {
      const double v = row.features[f];
      if (is_missing(v)) continue;
      if (v < 0 || v >= static_cast<double>(def.categories.size()) || v != std::floor(v)) {
        throw InvalidArgument("feature '" + def.name + "' has an out-of-domain category index");
      }
    }
  }
  Trainer trainer(data, params);
  return RegressionTree(data.schema, std::move(target_name), trainer.run());
}

ResidualReport evaluate_holdout(const RegressionTree& tree, const TrainingSet& holdout) {
  holdout.validate();
  if (holdout.rows.empty()) throw InvalidArgument("holdout set is empty");
  struct Scored {
    double prediction, actual, weight;
  };
  std::vector<Scored> scored;
  scored.reserve(holdout.rows.size());
  for (const auto& row : holdout.rows) {
    scored.push_back({tree.predict(std::span<const double>(row.features)), row.target, row.weight});
  }

  ResidualReport report;
  report.count = scored.size();
  long double w = 0, abs_err = 0, err = 0;
  for (const auto& s : scored) {
    w += s.weight;
    abs_err += s.weight * std::fabs(s.prediction - s.actual);
    err += s.weight * (s.prediction - s.actual);
  }
  report.total_weight = static_cast<double>(w);
  report.weighted_mae = static_cast<double>(abs_err / w);
  report.weighted_bias = static_cast<double>(err / w);

  // Deciles by the midpoint of each row's cumulative weight span.
  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored& a, const Scored& b) { return a.prediction < b.prediction; });
  std::array<long double, 10> sp{}, sa{};
  long double before = 0;
  for (const auto& s : scored) {
    const long double mid = before + s.weight / 2.0L;
    before += s.weight;
    const auto d = std::min<size_t>(9, static_cast<size_t>(10.0L * mid / w));
    auto& bin = report.deciles[d];
    if (bin.count == 0) bin.min_prediction = s.prediction;
    bin.max_prediction = s.prediction;
    ++bin.count;
    bin.weight += s.weight;
    sp[d] += s.weight * s.prediction;
    sa[d] += s.weight * s.actual;
  }
  for (size_t d = 0; d < 10; ++d) {
    auto& bin = report.deciles[d];
    if (bin.count == 0) continue;
    bin.mean_prediction = static_cast<double>(sp[d] / bin.weight);
    bin.mean_actual = static_cast<double>(sa[d] / bin.weight);
    bin.bias = bin.mean_prediction - bin.mean_actual;
  }
  return report;
}

}  // namespace agilerec
