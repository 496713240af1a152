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
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agilerec/experiments.hpp"
#include "agilerec/funnel_store.hpp"

namespace agilerec {

// A numerator dimension that maps onto (visitor, date), or a denominator
// dimension that does not.
class DimensionClassificationError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class Measure : uint8_t {
  kImpressions,
  kClicks,
  kEnrollments,
  kRevenue,
  kMinutesConsumed,
  kNpsResponses,
  kNpsScoreSum,
  kNps,  // per-visitor-day mean response; n counts visitor-days with responses
};

inline constexpr int kMeasureCount = 8;

std::string_view to_string(Measure m);
Measure parse_measure(std::string_view text);

enum class DimensionKind { kNumerator, kDenominator };

struct DimensionSpec {
  std::string name;  // funnel key field or "dimension.attribute"
  DimensionKind kind = DimensionKind::kNumerator;
};

// Classifies `name` against the snapshot's registered dimensions. Throws
// NotFound for unknown dimensions or attributes.
DimensionSpec classify_dimension(const FunnelSnapshot& snapshot, std::string_view name);

// Sufficient statistics of one measure over visitor-day units.
struct MeasureAggregate {
  double sum_x = 0;
  double sum_x2 = 0;
  int64_t n = 0;

  void add(double x) {
    sum_x += x;
    sum_x2 += x * x;
    ++n;
  }
  MeasureAggregate& operator+=(const MeasureAggregate& o) {
    sum_x += o.sum_x;
    sum_x2 += o.sum_x2;
    n += o.n;
    return *this;
  }
  bool operator==(const MeasureAggregate&) const = default;
};

inline constexpr std::string_view kAllCube = "_all";
inline constexpr std::string_view kAllBin = "all";
inline constexpr std::string_view kMissingBin = "(missing)";

struct CubeCell {
  std::string cube;  // numerator dimension name, or "_all"
  std::string bin;   // numerator value
  std::string variant_tag;
  bool is_control = false;
  Date date;
  std::string visitor_newness;  // "new" | "returning"
  // Configured denominator dims, sorted by name.
  std::vector<std::pair<std::string, std::string>> denominators;
  std::array<MeasureAggregate, kMeasureCount> measures{};

  const MeasureAggregate& operator[](Measure m) const { return measures[static_cast<size_t>(m)]; }
  MeasureAggregate& operator[](Measure m) { return measures[static_cast<size_t>(m)]; }
};

struct CubeBuild {
  std::string experiment_id;
  std::string control_variant;
  std::vector<std::string> variants;
  std::vector<std::string> cubes;  // "_all" first
  std::vector<std::string> denominator_dims;
  std::vector<CubeCell> cells;
};

// One cube per numerator dimension plus the "_all" cube, over rows tagged
// with the experiment's variants and dated in `range`. The unit is the
// visitor-day; a visitor-day with no rows in a bin contributes 0 to that
// bin's additive measures.
CubeBuild build_cubes(const FunnelSnapshot& snapshot, const ExperimentConfig& experiment,
                      DateRange range, const std::vector<std::string>& numerator_dims,
                      const std::vector<std::string>& denominator_dims = {});

enum class Significance { kPositive, kNegative, kNotSignificant };

std::string_view to_string(Significance s);

struct DifferentialResult {
  std::string measure;
  std::string bin;
  std::string test_variant;
  std::string control_variant;
  int64_t n_test = 0;
  int64_t n_control = 0;
  // False when either arm has n < 2; the statistics are then NaN.
  bool defined = false;
  double mean_test = 0;
  double mean_control = 0;
  std::optional<double> diff_pct;  // unset when the control mean is 0
  double t_stat = 0;
  double df = 0;
  Significance significant_95 = Significance::kNotSignificant;
  bool small_sample_flag = false;
};

inline constexpr double kZeroVarianceEpsilon = 1e-12;
inline constexpr int64_t kSmallSampleN = 30;

// Welch two-sample t test, test minus control, two-sided at 95%.
DifferentialResult welch_ttest(const MeasureAggregate& test, const MeasureAggregate& control);

struct CubeQuery {
  std::string experiment_id;
  std::string numerator = std::string(kAllCube);
  Measure measure = Measure::kEnrollments;
  // key=value terms over date, variant_tag, visitor_newness and configured
  // denominator dims. Repeated keys are OR-ed; a date value may be a
  // range "from..to".
  std::vector<std::pair<std::string, std::string>> filters;
};

// Long-format table of cube cells across experiments, indexed in memory.
class AnalyticsTable {
 public:
  // Replaces any cells previously stored for the experiment.
  void append(CubeBuild build);

  bool has_experiment(std::string_view experiment_id) const;
  std::vector<std::string> experiments() const;
  const CubeBuild& experiment(std::string_view experiment_id) const;

  // One result per (bin, test variant), bins sorted. Throws NotFound for an
  // unknown experiment or numerator, InvalidArgument for bad filters.
  std::vector<DifferentialResult> query(const CubeQuery& q) const;

  // Rows: experiment_id, cube, bin, variant_tag, role, date, visitor_newness,
  // denominators, measure, sum_x, sum_x2, n.
  void write_csv(std::ostream& out) const;
  static AnalyticsTable read_csv(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static AnalyticsTable load(const std::filesystem::path& path);

  size_t cell_count() const;

 private:
  std::map<std::string, CubeBuild, std::less<>> experiments_;
  // experiment -> cube -> cell indices
  std::map<std::string, std::map<std::string, std::vector<size_t>, std::less<>>, std::less<>> index_;
};

}  // namespace agilerec
