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
#include "agilerec/cube.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

namespace agilerec {

namespace {

constexpr std::array<std::string_view, kMeasureCount> kMeasureNames = {
    "impressions", "clicks", "enrollments", "revenue", "minutes_consumed",
    "nps_responses", "nps_score_sum", "nps"};

const char* kTableHeader =
    "experiment_id,cube,bin,variant_tag,role,date,visitor_newness,denominators,measure,sum_x,sum_x2,n";

// A resolved dimension: either a funnel key field or a joined attribute.
struct Resolver {
  std::string name;
  const RegisteredDimension* dim = nullptr;
  std::string attribute;

  std::string value(const ImpressionRow& row) const {
    if (!dim) {
      if (name == "page_context") return std::string(to_string(row.key.page_context));
      if (name == "course_id") return std::to_string(row.key.course_id);
      if (name == "visitor_id") return row.key.visitor_id;
      return std::string(kAllBin);
    }
    auto v = dim->lookup(row.key, attribute);
    return v ? std::string(*v) : std::string(kMissingBin);
  }
};

Resolver resolve(const FunnelSnapshot& snapshot, const std::string& name) {
  Resolver r{name, nullptr, {}};
  const auto dot = name.find('.');
  if (dot != std::string::npos) {
    r.dim = snapshot.dimensions.at(name.substr(0, dot)).get();
    r.attribute = name.substr(dot + 1);
  }
  return r;
}

// '%', '=', ';' escaped so denominator coordinates fit one CSV field.
std::string pct_encode(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '%' || c == '=' || c == ';') {
      static const char* hex = "0123456789ABCDEF";
      out += '%';
      out += hex[(static_cast<unsigned char>(c) >> 4) & 0xF];
      out += hex[static_cast<unsigned char>(c) & 0xF];
    } else {
      out += c;
    }
  }
  return out;
}

std::string pct_decode(std::string_view s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::string encode_denominators(const std::vector<std::pair<std::string, std::string>>& d) {
  std::string out;
  for (size_t i = 0; i < d.size(); ++i) {
    if (i) out += ';';
    out += pct_encode(d[i].first) + "=" + pct_encode(d[i].second);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> decode_denominators(std::string_view s) {
  std::vector<std::pair<std::string, std::string>> out;
  size_t start = 0;
  while (start < s.size()) {
    size_t end = s.find(';', start);
    if (end == std::string_view::npos) end = s.size();
    const auto term = s.substr(start, end - start);
    const auto eq = term.find('=');
    if (eq == std::string_view::npos) throw InvalidArgument("malformed denominator term");
    out.emplace_back(pct_decode(term.substr(0, eq)), pct_decode(term.substr(eq + 1)));
    start = end + 1;
  }
  return out;
}

double measure_value(const Measures& m, Measure which) {
  switch (which) {
    case Measure::kImpressions: return static_cast<double>(m.impressions);
    case Measure::kClicks: return static_cast<double>(m.clicks);
    case Measure::kEnrollments: return static_cast<double>(m.enrollments);
    case Measure::kRevenue: return m.revenue;
    case Measure::kMinutesConsumed: return m.minutes_consumed;
    case Measure::kNpsResponses: return static_cast<double>(m.nps_responses);
    case Measure::kNpsScoreSum: return static_cast<double>(m.nps_score_sum);
    case Measure::kNps:
      return m.nps_responses ? static_cast<double>(m.nps_score_sum) / static_cast<double>(m.nps_responses) : 0;
  }
  return 0;
}

struct Coordinates {
  std::string variant_tag;
  Date date;
  std::string newness;
  std::vector<std::pair<std::string, std::string>> denominators;
  int64_t units = 0;
};

auto cell_order(const std::vector<std::string>& cubes) {
  return [&cubes](const CubeCell& a, const CubeCell& b) {
    if (a.cube != b.cube) {
      return std::find(cubes.begin(), cubes.end(), a.cube) < std::find(cubes.begin(), cubes.end(), b.cube);
    }
    return std::tie(a.bin, a.variant_tag, a.date, a.visitor_newness, a.denominators) <
           std::tie(b.bin, b.variant_tag, b.date, b.visitor_newness, b.denominators);
  };
}

}  // namespace

std::string_view to_string(Measure m) { return kMeasureNames[static_cast<size_t>(m)]; }

Measure parse_measure(std::string_view text) {
  for (size_t i = 0; i < kMeasureNames.size(); ++i) {
    if (kMeasureNames[i] == text) return static_cast<Measure>(i);
  }
  throw InvalidArgument("unknown measure '" + std::string(text) + "'");
}

std::string_view to_string(Significance s) {
  switch (s) {
    case Significance::kPositive: return "positive";
    case Significance::kNegative: return "negative";
    case Significance::kNotSignificant: break;
  }
  return "not-significant";
}

DimensionSpec classify_dimension(const FunnelSnapshot& snapshot, std::string_view name) {
  const std::string n(name);
  if (n == "page_context" || n == "course_id") return {n, DimensionKind::kNumerator};
  if (n == "visitor_id" || n == "date" || n == "variant_tag" || n == "visitor_newness" ||
      n == "experiment_id") {
    return {n, DimensionKind::kDenominator};
  }
  const auto dot = n.find('.');
  if (dot == std::string::npos) throw NotFound("unknown dimension '" + n + "'");
  auto it = snapshot.dimensions.find(std::string_view(n).substr(0, dot));
  if (it == snapshot.dimensions.end()) throw NotFound("unknown dimension '" + n.substr(0, dot) + "'");
  if (!it->second->has_attribute(n.substr(dot + 1))) {
    throw NotFound("dimension '" + it->first + "' has no attribute '" + n.substr(dot + 1) + "'");
  }
  for (const auto& k : it->second->key_fields()) {
    if (k != "visitor_id" && k != "date") return {n, DimensionKind::kNumerator};
  }
  return {n, DimensionKind::kDenominator};
}

CubeBuild build_cubes(const FunnelSnapshot& snapshot, const ExperimentConfig& experiment,
                      DateRange range, const std::vector<std::string>& numerator_dims,
                      const std::vector<std::string>& denominator_dims) {
  CubeBuild out;
  out.experiment_id = experiment.experiment_id;
  out.control_variant = experiment.control().variant_tag;
  for (const auto& v : experiment.variants) out.variants.push_back(v.variant_tag);

  std::vector<Resolver> numerators;
  out.cubes.emplace_back(kAllCube);
  numerators.push_back({std::string(kAllCube), nullptr, {}});
  for (const auto& name : numerator_dims) {
    if (name == kAllCube) continue;
    if (classify_dimension(snapshot, name).kind != DimensionKind::kNumerator) {
      throw DimensionClassificationError("'" + name +
                                         "' maps onto (visitor, date) and cannot be a numerator dimension");
    }
    if (std::find(out.cubes.begin(), out.cubes.end(), name) != out.cubes.end()) continue;
    out.cubes.push_back(name);
    numerators.push_back(resolve(snapshot, name));
  }
  std::vector<Resolver> denominators;
  for (const auto& name : denominator_dims) {
    if (name == "date" || name == "variant_tag" || name == "visitor_newness" || name == "experiment_id") continue;
    if (classify_dimension(snapshot, name).kind != DimensionKind::kDenominator) {
      throw DimensionClassificationError("'" + name +
                                         "' does not map onto (visitor, date) and cannot be a denominator dimension");
    }
    if (std::find(out.denominator_dims.begin(), out.denominator_dims.end(), name) != out.denominator_dims.end()) {
      continue;
    }
    out.denominator_dims.push_back(name);
  }
  std::sort(out.denominator_dims.begin(), out.denominator_dims.end());
  for (const auto& name : out.denominator_dims) denominators.push_back(resolve(snapshot, name));

  std::unordered_map<std::string_view, bool> tags;  // tag -> is_control
  for (const auto& v : experiment.variants) tags[v.variant_tag] = v.is_control;

  // Newness is relative to the visitor's first row anywhere in the store.
  std::unordered_map<std::string_view, Date> first_seen;
  for (const auto& row : snapshot.rows) first_seen.try_emplace(row.key.visitor_id, row.key.date);

  std::vector<Coordinates> coords;
  std::unordered_map<std::string, size_t> coord_index;
  std::vector<std::set<std::string>> bins(numerators.size());
  std::unordered_map<std::string, size_t> cell_index;
  std::vector<std::pair<size_t, size_t>> cell_refs;  // (cube, coord) per cell

  auto cell_for = [&](size_t cube, const std::string& bin, size_t coord) -> CubeCell& {
    std::string key = std::to_string(cube);
    key += '\x1f';
    key += bin;
    key += '\x1f';
    key += std::to_string(coord);
    auto [it, inserted] = cell_index.try_emplace(std::move(key), out.cells.size());
    if (inserted) {
      const auto& c = coords[coord];
      CubeCell cell;
      cell.cube = out.cubes[cube];
      cell.bin = bin;
      cell.variant_tag = c.variant_tag;
      cell.is_control = tags.at(c.variant_tag);
      cell.date = c.date;
      cell.visitor_newness = c.newness;
      cell.denominators = c.denominators;
      out.cells.push_back(std::move(cell));
      cell_refs.emplace_back(cube, coord);
    }
    return out.cells[it->second];
  };

  std::vector<std::pair<std::string, Measures>> slices;
  auto visit_unit = [&](const ImpressionRow* const* begin, const ImpressionRow* const* end) {
    const ImpressionRow& first = **begin;
    Coordinates c;
    c.variant_tag = first.key.variant_tag;
    c.date = first.key.date;
    c.newness = first_seen.at(first.key.visitor_id) == first.key.date ? "new" : "returning";
    for (const auto& d : denominators) c.denominators.emplace_back(d.name, d.value(first));
    std::string key = c.variant_tag + '\x1f' + std::to_string(c.date.days()) + '\x1f' + c.newness;
    for (const auto& [n, v] : c.denominators) key += '\x1f' + v;
    auto [cit, inserted] = coord_index.try_emplace(std::move(key), coords.size());
    if (inserted) coords.push_back(std::move(c));
    const size_t coord = cit->second;
    ++coords[coord].units;

    for (size_t cube = 0; cube < numerators.size(); ++cube) {
      slices.clear();
      for (auto it = begin; it != end; ++it) {
        std::string bin = numerators[cube].value(**it);
        auto s = std::find_if(slices.begin(), slices.end(), [&](const auto& p) { return p.first == bin; });
        if (s == slices.end()) {
          slices.emplace_back(std::move(bin), (*it)->measures);
        } else {
          s->second += (*it)->measures;
        }
      }
      for (const auto& [bin, m] : slices) {
        bins[cube].insert(bin);
        CubeCell& cell = cell_for(cube, bin, coord);
        for (int i = 0; i < kMeasureCount; ++i) {
          const auto which = static_cast<Measure>(i);
          if (which == Measure::kNps) {
            if (m.nps_responses > 0) cell[which].add(measure_value(m, which));
          } else {
            const double x = measure_value(m, which);
            cell[which].sum_x += x;
            cell[which].sum_x2 += x * x;
          }
        }
      }
    }
  };

  // Rows are sorted by (date, visitor, ...), so a visitor-day is contiguous.
  auto [lo, hi] = snapshot.date_span(range);
  std::vector<const ImpressionRow*> group;
  for (size_t i = lo; i < hi;) {
    size_t j = i;
    const auto& head = snapshot.rows[i].key;
    while (j < hi && snapshot.rows[j].key.date == head.date && snapshot.rows[j].key.visitor_id == head.visitor_id) ++j;
    group.clear();
    for (size_t k = i; k < j; ++k) {
      if (tags.count(snapshot.rows[k].key.variant_tag)) group.push_back(&snapshot.rows[k]);
    }
    // One unit per (visitor, date, variant tag).
    std::stable_sort(group.begin(), group.end(),
                     [](const ImpressionRow* a, const ImpressionRow* b) { return a->key.variant_tag < b->key.variant_tag; });
    for (size_t a = 0; a < group.size();) {
      size_t b = a;
      while (b < group.size() && group[b]->key.variant_tag == group[a]->key.variant_tag) ++b;
      visit_unit(group.data() + a, group.data() + b);
      a = b;
    }
    i = j;
  }

  // Every bin exists for every coordinate; visitor-days without rows in a
  // bin are zeros of the additive measures.
  for (size_t cube = 0; cube < numerators.size(); ++cube) {
    for (const auto& bin : bins[cube]) {
      for (size_t coord = 0; coord < coords.size(); ++coord) {
        CubeCell& cell = cell_for(cube, bin, coord);
        for (int m = 0; m < kMeasureCount; ++m) {
          if (static_cast<Measure>(m) != Measure::kNps) cell.measures[m].n = coords[coord].units;
        }
      }
    }
  }
  std::sort(out.cells.begin(), out.cells.end(), cell_order(out.cubes));
  return out;
}

DifferentialResult welch_ttest(const MeasureAggregate& test, const MeasureAggregate& control) {
  DifferentialResult r;
  r.n_test = test.n;
  r.n_control = control.n;
  r.small_sample_flag = test.n < kSmallSampleN || control.n < kSmallSampleN;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.mean_test = test.n ? test.sum_x / static_cast<double>(test.n) : nan;
  r.mean_control = control.n ? control.sum_x / static_cast<double>(control.n) : nan;
  if (control.n && r.mean_control != 0 && test.n) {
    r.diff_pct = (r.mean_test - r.mean_control) / r.mean_control * 100.0;
  }
  if (test.n < 2 || control.n < 2) {
    r.t_stat = nan;
    r.df = nan;
    return r;
  }
  r.defined = true;
  const double na = static_cast<double>(test.n), nb = static_cast<double>(control.n);
  const double va = std::max(0.0, (test.sum_x2 - test.sum_x * test.sum_x / na) / (na - 1));
  const double vb = std::max(0.0, (control.sum_x2 - control.sum_x * control.sum_x / nb) / (nb - 1));
  const double diff = r.mean_test - r.mean_control;
  if (va < kZeroVarianceEpsilon && vb < kZeroVarianceEpsilon) {
    r.df = na + nb - 2;
    if (diff == 0) {
      r.t_stat = 0;
    } else {
      // Two point masses: any difference is certain.
      r.t_stat = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.significant_95 = diff > 0 ? Significance::kPositive : Significance::kNegative;
    }
    return r;
  }
  const double sa = va / na, sb = vb / nb;
  r.t_stat = diff / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1) + sb * sb / (nb - 1));
  const double critical = boost::math::quantile(boost::math::students_t(r.df), 0.975);
  if (std::fabs(r.t_stat) > critical) {
    r.significant_95 = diff > 0 ? Significance::kPositive : Significance::kNegative;
  }
  return r;
}

void AnalyticsTable::append(CubeBuild build) {
  auto& cubes = index_[build.experiment_id];
  cubes.clear();
  for (const auto& c : build.cubes) cubes[c];
  for (size_t i = 0; i < build.cells.size(); ++i) cubes[build.cells[i].cube].push_back(i);
  experiments_[build.experiment_id] = std::move(build);
}

bool AnalyticsTable::has_experiment(std::string_view experiment_id) const {
  return experiments_.find(experiment_id) != experiments_.end();
}

std::vector<std::string> AnalyticsTable::experiments() const {
  std::vector<std::string> out;
  for (const auto& [id, b] : experiments_) out.push_back(id);
  return out;
}

const CubeBuild& AnalyticsTable::experiment(std::string_view experiment_id) const {
  auto it = experiments_.find(experiment_id);
  if (it == experiments_.end()) throw NotFound("no cubes for experiment '" + std::string(experiment_id) + "'");
  return it->second;
}

size_t AnalyticsTable::cell_count() const {
  size_t n = 0;
  for (const auto& [id, b] : experiments_) n += b.cells.size();
  return n;
}

std::vector<DifferentialResult> AnalyticsTable::query(const CubeQuery& q) const {
  const CubeBuild& build = experiment(q.experiment_id);
  const auto& cubes = index_.find(q.experiment_id)->second;
  const std::string numerator = q.numerator.empty() ? std::string(kAllCube) : q.numerator;
  auto cit = cubes.find(numerator);
  if (cit == cubes.end()) {
    throw NotFound("experiment '" + q.experiment_id + "' has no cube for '" + numerator + "'");
  }

  struct DateSpan {
    Date from, to;
  };
  std::vector<DateSpan> dates;
  std::map<std::string, std::set<std::string>, std::less<>> equals;
  for (const auto& [key, value] : q.filters) {
    if (key == "date") {
      const auto dots = value.find("..");
      if (dots == std::string::npos) {
        const Date d = Date::parse(value);
        dates.push_back({d, d});
      } else {
        dates.push_back({Date::parse(value.substr(0, dots)), Date::parse(value.substr(dots + 2))});
      }
    } else if (key == "variant_tag" || key == "visitor_newness" ||
               std::find(build.denominator_dims.begin(), build.denominator_dims.end(), key) !=
                   build.denominator_dims.end()) {
      equals[key].insert(value);
    } else {
      throw NotFound("unknown filter dimension '" + key + "'");
    }
  }
  auto keep = [&](const CubeCell& c) {
    if (!dates.empty() && std::none_of(dates.begin(), dates.end(), [&](const DateSpan& s) {
          return s.from <= c.date && c.date <= s.to;
        })) {
      return false;
    }
    for (const auto& [key, values] : equals) {
      std::string_view v;
      if (key == "variant_tag") {
        v = c.variant_tag;
      } else if (key == "visitor_newness") {
        v = c.visitor_newness;
      } else {
        for (const auto& [n, val] : c.denominators) {
          if (n == key) v = val;
        }
      }
      if (!values.count(std::string(v))) return false;
    }
    return true;
  };

  std::map<std::string, std::map<std::string, MeasureAggregate>> acc;
  for (size_t i : cit->second) {
    const CubeCell& c = build.cells[i];
    if (!keep(c)) continue;
    acc[c.bin][c.variant_tag] += c[q.measure];
  }
  std::vector<DifferentialResult> out;
  for (const auto& [bin, arms] : acc) {
    auto control = arms.find(build.control_variant);
    const MeasureAggregate ctl = control == arms.end() ? MeasureAggregate{} : control->second;
    for (const auto& tag : build.variants) {
      if (tag == build.control_variant) continue;
      auto t = arms.find(tag);
      DifferentialResult r = welch_ttest(t == arms.end() ? MeasureAggregate{} : t->second, ctl);
      r.measure = std::string(to_string(q.measure));
      r.bin = bin;
      r.test_variant = tag;
      r.control_variant = build.control_variant;
      out.push_back(std::move(r));
    }
  }
  return out;
}

void AnalyticsTable::write_csv(std::ostream& out) const {
  out << kTableHeader << '\n';
  for (const auto& [id, build] : experiments_) {
    // Variants without cells still need a row so the role survives reload.
    std::set<std::string> seen;
    for (const auto& c : build.cells) seen.insert(c.variant_tag);
    for (const auto& tag : build.variants) {
      if (!seen.count(tag)) {
        out << csv_escape(id) << ",," << ',' << csv_escape(tag) << ','
            << (tag == build.control_variant ? "control" : "test") << ",,,,,,,\n";
      }
    }
    for (const auto& cube : build.cubes) {
      if (std::none_of(build.cells.begin(), build.cells.end(), [&](const CubeCell& c) { return c.cube == cube; })) {
        out << csv_escape(id) << ',' << csv_escape(cube) << ",,,,,,,,,,\n";
      }
    }
    const std::string dims = [&] {
      std::string s;
      for (size_t i = 0; i < build.denominator_dims.size(); ++i) s += (i ? ";" : "") + pct_encode(build.denominator_dims[i]);
      return s;
    }();
    out << csv_escape(id) << ",,,,,,," << csv_escape(dims) << ",,,,\n";
    for (const auto& c : build.cells) {
      const std::string prefix = csv_escape(id) + ',' + csv_escape(c.cube) + ',' + csv_escape(c.bin) + ',' +
                                 csv_escape(c.variant_tag) + ',' + (c.is_control ? "control" : "test") + ',' +
                                 c.date.to_string() + ',' + c.visitor_newness + ',' +
                                 csv_escape(encode_denominators(c.denominators)) + ',';
      for (int m = 0; m < kMeasureCount; ++m) {
        const auto& a = c.measures[m];
        out << prefix << kMeasureNames[m] << ',' << format_double(a.sum_x) << ',' << format_double(a.sum_x2) << ','
            << a.n << '\n';
      }
    }
  }
}

AnalyticsTable AnalyticsTable::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTableHeader) throw InvalidArgument("not an analytics table");
  std::map<std::string, CubeBuild, std::less<>> builds;
  std::map<std::string, std::map<std::string, size_t>> cell_ids;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 12) throw InvalidArgument("analytics table line " + std::to_string(line_no) + ": bad field count");
    CubeBuild& b = builds[f[0]];
    b.experiment_id = f[0];
    auto add_cube = [&b](const std::string& cube) {
      if (std::find(b.cubes.begin(), b.cubes.end(), cube) == b.cubes.end()) b.cubes.push_back(cube);
    };
    auto add_variant = [&b](const std::string& tag, const std::string& role) {
      if (std::find(b.variants.begin(), b.variants.end(), tag) == b.variants.end()) b.variants.push_back(tag);
      if (role == "control") b.control_variant = tag;
    };
    if (f[8].empty()) {
      // Metadata rows: a cube, a variant, or the denominator dim list.
      if (!f[1].empty()) add_cube(f[1]);
      if (!f[3].empty()) add_variant(f[3], f[4]);
      if (!f[7].empty()) {
        std::string_view s = f[7];
        size_t start = 0;
        while (start <= s.size()) {
          size_t end = s.find(';', start);
          if (end == std::string_view::npos) end = s.size();
          b.denominator_dims.push_back(pct_decode(s.substr(start, end - start)));
          start = end + 1;
        }
      }
      continue;
    }
    add_cube(f[1]);
    add_variant(f[3], f[4]);
    const std::string key = f[1] + '\x1f' + f[2] + '\x1f' + f[3] + '\x1f' + f[5] + '\x1f' + f[6] + '\x1f' + f[7];
    auto [it, inserted] = cell_ids[f[0]].try_emplace(key, b.cells.size());
    if (inserted) {
      CubeCell c;
      c.cube = f[1];
      c.bin = f[2];
      c.variant_tag = f[3];
      c.is_control = f[4] == "control";
      c.date = Date::parse(f[5]);
      c.visitor_newness = f[6];
      c.denominators = decode_denominators(f[7]);
      b.cells.push_back(std::move(c));
    }
    auto& a = b.cells[it->second][parse_measure(f[8])];
    a.sum_x = parse_double(f[9]);
    a.sum_x2 = parse_double(f[10]);
    a.n = std::stoll(f[11]);
  }
  AnalyticsTable table;
  for (auto& [id, b] : builds) {
    auto all = std::find(b.cubes.begin(), b.cubes.end(), kAllCube);
    if (all != b.cubes.end()) std::rotate(b.cubes.begin(), all, all + 1);
    std::sort(b.denominator_dims.begin(), b.denominator_dims.end());
    table.append(std::move(b));
  }
  return table;
}

void AnalyticsTable::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  write_csv(out);
  write_file_atomically(path, out.str());
}

AnalyticsTable AnalyticsTable::load(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  return read_csv(in);
}

}  // namespace agilerec
