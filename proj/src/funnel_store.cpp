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
#include "agilerec/funnel_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace agilerec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kContextNames[] = {"featured", "search", "course-landing", "email",
                                              "other"};

const std::set<std::string, std::less<>> kFunnelKeyFields = {"visitor_id", "course_id", "date"};
const std::set<std::string, std::less<>> kRowFields = {
    "visitor_id",  "course_id",       "date",          "page_context",  "variant_tag",
    "impressions", "clicks",          "enrollments",   "revenue",       "minutes_consumed",
    "nps_responses", "nps_score_sum"};

const char* kSnapshotHeader =
    "visitor_id,course_id,date,page_context,variant_tag,impressions,clicks,enrollments,revenue,"
    "minutes_consumed,nps_responses,nps_score_sum";

int64_t json_int(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return 0;
  if (it->is_number_integer()) return it->get<int64_t>();
  if (it->is_number_float()) {
    const double v = it->get<double>();
    if (v == std::floor(v)) return static_cast<int64_t>(v);
  }
  throw InvalidArgument(std::string("field '") + field + "' must be an integer");
}

double json_number(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return 0;
  if (!it->is_number()) throw InvalidArgument(std::string("field '") + field + "' must be a number");
  return it->get<double>();
}

std::string json_text(const json& obj, const char* field, bool required) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) {
    if (required) throw InvalidArgument(std::string("missing field '") + field + "'");
    return {};
  }
  if (!it->is_string()) throw InvalidArgument(std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

// Why an event cannot enter the store, or empty when it can.
std::string validate(const RawEvent& e) {
  if (e.visitor_id.empty()) return "empty visitor_id";
  if (e.impressions < 0 || e.clicks < 0 || e.enrollments < 0) return "negative count";
  if (!(e.revenue >= 0) || !std::isfinite(e.revenue)) return "revenue must be finite and >= 0";
  if (!(e.minutes_consumed >= 0) || !std::isfinite(e.minutes_consumed)) {
    return "minutes_consumed must be finite and >= 0";
  }
  if (e.nps_response && (*e.nps_response < 0 || *e.nps_response > 10)) {
    return "nps_response outside 0-10";
  }
  if (is_slate_context(e.page_context)) {
    if (e.clicks > e.impressions) return "clicks exceed impressions in a slate context";
    if (e.enrollments > e.clicks) return "enrollments exceed clicks in a slate context";
  }
  return {};
}

ImpressionRow row_from_event(const RawEvent& e) {
  ImpressionRow row;
  row.key = {e.visitor_id, e.course_id, e.date, e.page_context, e.variant_tag};
  row.measures.impressions = e.impressions;
  row.measures.clicks = e.clicks;
  row.measures.enrollments = e.enrollments;
  row.measures.revenue = e.revenue;
  row.measures.minutes_consumed = e.minutes_consumed;
  if (e.nps_response) {
    row.measures.nps_responses = 1;
    row.measures.nps_score_sum = *e.nps_response;
  }
  return row;
}

std::string funnel_key_value(const RowKey& key, std::string_view field) {
  if (field == "visitor_id") return key.visitor_id;
  if (field == "course_id") return std::to_string(key.course_id);
  if (field == "date") return key.date.to_string();
  throw StarSchemaViolation("'" + std::string(field) + "' is not a funnel key field");
}

void write_snapshot_csv(const FunnelSnapshot& snap, std::ostream& out) {
  out << kSnapshotHeader << '\n';
  for (const auto& r : snap.rows) {
    const auto& m = r.measures;
    out << csv_escape(r.key.visitor_id) << ',' << r.key.course_id << ',' << r.key.date.to_string()
        << ',' << to_string(r.key.page_context) << ',' << csv_escape(r.key.variant_tag) << ','
        << m.impressions << ',' << m.clicks << ',' << m.enrollments << ','
        << format_double(m.revenue) << ',' << format_double(m.minutes_consumed) << ','
        << m.nps_responses << ',' << m.nps_score_sum << '\n';
  }
}

std::vector<ImpressionRow> read_snapshot_csv(std::istream& in) {
  std::vector<ImpressionRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  if (line != kSnapshotHeader) throw Error("snapshot file has an unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 12) throw Error("snapshot row has " + std::to_string(f.size()) + " fields");
    ImpressionRow r;
    r.key = {f[0], std::stoll(f[1]), Date::parse(f[2]), parse_page_context(f[3]), f[4]};
    r.measures = {std::stoll(f[5]), std::stoll(f[6]), std::stoll(f[7]), parse_double(f[8]),
                  parse_double(f[9]), std::stoll(f[10]), std::stoll(f[11])};
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

std::string_view to_string(PageContext context) {
  return kContextNames[static_cast<size_t>(context)];
}

PageContext parse_page_context(std::string_view text) {
  for (size_t i = 0; i < std::size(kContextNames); ++i) {
    if (kContextNames[i] == text) return static_cast<PageContext>(i);
  }
  throw InvalidArgument("unknown page_context '" + std::string(text) + "'");
}

Measures& Measures::operator+=(const Measures& o) {
  impressions += o.impressions;
  clicks += o.clicks;
  enrollments += o.enrollments;
  revenue += o.revenue;
  minutes_consumed += o.minutes_consumed;
  nps_responses += o.nps_responses;
  nps_score_sum += o.nps_score_sum;
  return *this;
}

RawEvent parse_event(std::string_view json_line) {
  json obj;
  try {
    obj = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("malformed JSON: ") + e.what());
  }
  if (!obj.is_object()) throw InvalidArgument("event must be a JSON object");
  RawEvent e;
  e.visitor_id = json_text(obj, "visitor_id", true);
  if (!obj.contains("course_id")) throw InvalidArgument("missing field 'course_id'");
  e.course_id = json_int(obj, "course_id");
  e.date = Date::parse(json_text(obj, "date", true));
  const std::string ctx = json_text(obj, "page_context", false);
  e.page_context = ctx.empty() ? PageContext::kOther : parse_page_context(ctx);
  e.variant_tag = json_text(obj, "variant_tag", false);
  e.impressions = json_int(obj, "impressions");
  e.clicks = json_int(obj, "clicks");
  e.enrollments = json_int(obj, "enrollments");
  e.revenue = json_number(obj, "revenue");
  e.minutes_consumed = json_number(obj, "minutes_consumed");
  if (auto it = obj.find("nps_response"); it != obj.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw InvalidArgument("nps_response must be an integer or null");
    e.nps_response = it->get<int>();
  }
  e.dedup_token = json_text(obj, "dedup_token", false);
  return e;
}

std::string event_to_json(const RawEvent& e) {
  json obj = json::object();
  obj["visitor_id"] = e.visitor_id;
  obj["course_id"] = e.course_id;
  obj["date"] = e.date.to_string();
  obj["page_context"] = std::string(to_string(e.page_context));
  obj["variant_tag"] = e.variant_tag.empty() ? json(nullptr) : json(e.variant_tag);
  obj["impressions"] = e.impressions;
  obj["clicks"] = e.clicks;
  obj["enrollments"] = e.enrollments;
  obj["revenue"] = e.revenue;
  obj["minutes_consumed"] = e.minutes_consumed;
  obj["nps_response"] = e.nps_response ? json(*e.nps_response) : json(nullptr);
  obj["dedup_token"] = e.dedup_token.empty() ? json(nullptr) : json(e.dedup_token);
  return obj.dump();
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

DimensionTable::DimensionTable(std::vector<std::string> columns,
                               std::vector<std::vector<std::string>> rows)
    : columns_(std::move(columns)), rows_(std::move(rows)) {
  for (size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].size() != columns_.size()) {
      throw InvalidArgument("dimension row " + std::to_string(i + 1) + " has " +
                            std::to_string(rows_[i].size()) + " fields, expected " +
                            std::to_string(columns_.size()));
    }
  }
}

DimensionTable DimensionTable::from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("dimension CSV is empty");
  auto columns = split_csv_line(line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(split_csv_line(line));
  }
  return DimensionTable(std::move(columns), std::move(rows));
}

void DimensionTable::write_csv(std::ostream& out) const {
  for (size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << csv_escape(columns_[i]);
  out << '\n';
  for (const auto& row : rows_) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_escape(row[i]);
    out << '\n';
  }
}

std::optional<size_t> DimensionTable::column_index(std::string_view name) const {
  for (size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i] == name) return i;
  }
  return std::nullopt;
}

RegisteredDimension::RegisteredDimension(std::string name, std::vector<std::string> key_fields,
                                         DimensionTable table)
    : name_(std::move(name)), key_fields_(std::move(key_fields)), table_(std::move(table)) {
  if (key_fields_.empty()) throw StarSchemaViolation("dimension '" + name_ + "' has no key fields");
  std::vector<size_t> key_cols;
  for (const auto& k : key_fields_) {
    if (!kFunnelKeyFields.contains(k)) {
      throw StarSchemaViolation("dimension '" + name_ + "' key field '" + k +
                                "' is not a funnel key (visitor_id, course_id, date)");
    }
    auto col = table_.column_index(k);
    if (!col) throw InvalidArgument("dimension '" + name_ + "' has no column '" + k + "'");
    key_cols.push_back(*col);
  }
  for (size_t r = 0; r < table_.rows().size(); ++r) {
    std::string key;
    for (size_t c : key_cols) {
      key += table_.rows()[r][c];
      key += '\x1f';
    }
    if (!index_.emplace(std::move(key), r).second) {
      throw InvalidArgument("dimension '" + name_ + "' has a duplicate key at row " +
                            std::to_string(r + 1));
    }
  }
}

std::string RegisteredDimension::join_key(const RowKey& key) const {
  std::string out;
  for (const auto& k : key_fields_) {
    out += funnel_key_value(key, k);
    out += '\x1f';
  }
  return out;
}

bool RegisteredDimension::joins(const RowKey& key) const { return index_.contains(join_key(key)); }

bool RegisteredDimension::has_attribute(std::string_view attribute) const {
  return table_.column_index(attribute).has_value();
}

std::optional<std::string_view> RegisteredDimension::lookup(const RowKey& key,
                                                            std::string_view attribute) const {
  auto col = table_.column_index(attribute);
  if (!col) {
    throw InvalidArgument("dimension '" + name_ + "' has no attribute '" + std::string(attribute) +
                          "'");
  }
  auto it = index_.find(join_key(key));
  if (it == index_.end()) return std::nullopt;
  return table_.rows()[it->second][*col];
}

std::vector<CourseDimension> courses_from_table(const DimensionTable& table) {
  auto col = [&](const char* name) {
    auto c = table.column_index(name);
    if (!c) throw InvalidArgument(std::string("course dimension missing column '") + name + "'");
    return *c;
  };
  const size_t id = col("course_id"), sub = col("subcategory_id"), cat = col("category_id"),
               price = col("price"), pub = col("published_date");
  std::vector<CourseDimension> out;
  std::map<int64_t, int64_t> subcat_owner;
  for (const auto& row : table.rows()) {
    CourseDimension c;
    c.course_id = std::stoll(row[id]);
    c.subcategory_id = std::stoll(row[sub]);
    c.category_id = std::stoll(row[cat]);
    c.price = parse_double(row[price]);
    c.published_date = Date::parse(row[pub]);
    if (!(c.price >= 0)) throw InvalidArgument("course price must be >= 0");
    auto [it, inserted] = subcat_owner.emplace(c.subcategory_id, c.category_id);
    if (!inserted && it->second != c.category_id) {
      throw InvalidArgument("subcategory " + std::to_string(c.subcategory_id) +
                            " belongs to more than one category");
    }
    out.push_back(c);
  }
  return out;
}

DimensionTable courses_to_table(const std::vector<CourseDimension>& courses) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(courses.size());
  for (const auto& c : courses) {
    rows.push_back({std::to_string(c.course_id), std::to_string(c.subcategory_id),
                    std::to_string(c.category_id), format_double(c.price),
                    c.published_date.to_string()});
  }
  return DimensionTable({"course_id", "subcategory_id", "category_id", "price", "published_date"},
                        std::move(rows));
}

// ---------------------------------------------------------------------------
// Snapshot

std::optional<Date> FunnelSnapshot::min_date() const {
  if (rows.empty()) return std::nullopt;
  return rows.front().key.date;
}

std::optional<Date> FunnelSnapshot::max_date() const {
  if (rows.empty()) return std::nullopt;
  return rows.back().key.date;
}

const CourseDimension* FunnelSnapshot::course(int64_t course_id) const {
  auto it = courses->find(course_id);
  return it == courses->end() ? nullptr : &it->second;
}

std::pair<size_t, size_t> FunnelSnapshot::date_span(DateRange range) const {
  if (range.empty()) return {0, 0};
  auto lo = std::partition_point(rows.begin(), rows.end(),
                                 [&](const ImpressionRow& r) { return r.key.date < range.from; });
  auto hi = std::partition_point(lo, rows.end(),
                                 [&](const ImpressionRow& r) { return r.key.date <= range.to; });
  return {static_cast<size_t>(lo - rows.begin()), static_cast<size_t>(hi - rows.begin())};
}

ScanFilter ScanFilter::parse(const std::vector<std::string>& expressions) {
  ScanFilter f;
  for (const auto& e : expressions) {
    auto eq = e.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw InvalidArgument("filter must look like field=value, got '" + e + "'");
    }
    f.terms.emplace_back(e.substr(0, eq), e.substr(eq + 1));
  }
  return f;
}

std::string funnel_field(const ImpressionRow& row, std::string_view field) {
  const auto& m = row.measures;
  if (field == "visitor_id") return row.key.visitor_id;
  if (field == "course_id") return std::to_string(row.key.course_id);
  if (field == "date") return row.key.date.to_string();
  if (field == "page_context") return std::string(to_string(row.key.page_context));
  if (field == "variant_tag") return row.key.variant_tag;
  if (field == "impressions") return std::to_string(m.impressions);
  if (field == "clicks") return std::to_string(m.clicks);
  if (field == "enrollments") return std::to_string(m.enrollments);
  if (field == "revenue") return format_double(m.revenue);
  if (field == "minutes_consumed") return format_double(m.minutes_consumed);
  if (field == "nps_responses") return std::to_string(m.nps_responses);
  if (field == "nps_score_sum") return std::to_string(m.nps_score_sum);
  throw InvalidArgument("unknown funnel field '" + std::string(field) + "'");
}

std::vector<ImpressionRow> scan(const FunnelSnapshot& snapshot, const ScanFilter& filter,
                                DateRange range) {
  struct Term {
    const RegisteredDimension* dim = nullptr;
    std::string field;
    std::string value;
  };
  std::vector<Term> terms;
  for (const auto& [field, value] : filter.terms) {
    auto dot = field.find('.');
    if (dot == std::string::npos) {
      if (!kRowFields.contains(field)) throw InvalidArgument("unknown funnel field '" + field + "'");
      terms.push_back({nullptr, field, value});
      continue;
    }
    const std::string dim_name = field.substr(0, dot);
    auto it = snapshot.dimensions.find(dim_name);
    if (it == snapshot.dimensions.end()) throw NotFound("unknown dimension '" + dim_name + "'");
    std::string attr = field.substr(dot + 1);
    if (!it->second->has_attribute(attr)) {
      throw InvalidArgument("dimension '" + dim_name + "' has no attribute '" + attr + "'");
    }
    terms.push_back({it->second.get(), std::move(attr), value});
  }

  std::vector<ImpressionRow> out;
  auto [lo, hi] = snapshot.date_span(range);
  for (size_t i = lo; i < hi; ++i) {
    const auto& row = snapshot.rows[i];
    bool keep = true;
    for (const auto& t : terms) {
      if (t.dim) {
        auto v = t.dim->lookup(row.key, t.field);
        keep = v && *v == t.value;
      } else {
        keep = funnel_field(row, t.field) == t.value;
      }
      if (!keep) break;
    }
    if (keep) out.push_back(row);
  }
  return out;
}

std::vector<EnrollmentRow> build_enrollment_funnel(const FunnelSnapshot& snapshot, Date as_of) {
  // Group row indices by (visitor, course); snapshot rows are date-ordered so
  // each group comes out chronologically.
  std::map<std::pair<std::string_view, int64_t>, std::vector<size_t>> groups;
  for (size_t i = 0; i < snapshot.rows.size(); ++i) {
    const auto& r = snapshot.rows[i];
    if (r.key.date > as_of) break;
    const auto& m = r.measures;
    if (m.enrollments > 0 || m.minutes_consumed > 0 || m.nps_responses > 0) {
      groups[{r.key.visitor_id, r.key.course_id}].push_back(i);
    }
  }

  std::vector<EnrollmentRow> out;
  for (const auto& [vc, idx] : groups) {
    struct Enrollment {
      Date date;
      int64_t count = 0;
      double revenue = 0;
      double minutes = 0;
      int64_t nps_n = 0;
      int64_t nps_sum = 0;
      PageContext context = PageContext::kFeatured;
      std::string variant;
    };
    std::vector<Enrollment> enrollments;
    for (size_t i : idx) {
      const auto& r = snapshot.rows[i];
      const auto& m = r.measures;
      if (m.enrollments > 0) {
        if (enrollments.empty() || enrollments.back().date != r.key.date) {
          enrollments.push_back({r.key.date, 0, 0, 0, 0, 0, r.key.page_context, r.key.variant_tag});
        }
        enrollments.back().count += m.enrollments;
        enrollments.back().revenue += m.revenue;
      }
      // Consumption and NPS belong to the latest enrollment within the
      // attribution window; anything outside a window is not attributable.
      if (!enrollments.empty() &&
          r.key.date - enrollments.back().date < FunnelStore::kAttributionDays) {
        enrollments.back().minutes += m.minutes_consumed;
        enrollments.back().nps_n += m.nps_responses;
        enrollments.back().nps_sum += m.nps_score_sum;
      }
    }
    for (const auto& e : enrollments) {
      std::optional<int> nps;
      if (e.nps_n > 0) {
        nps = static_cast<int>(std::lround(static_cast<double>(e.nps_sum) / e.nps_n));
      }
      for (int64_t k = 0; k < e.count; ++k) {
        out.push_back({std::string(vc.first), vc.second, e.date, e.context, e.variant,
                       e.revenue / e.count, e.minutes / e.count, nps});
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const EnrollmentRow& a, const EnrollmentRow& b) {
    return a.enrollment_date < b.enrollment_date;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Store

FunnelStore::FunnelStore() : snapshot_(std::make_shared<FunnelSnapshot>()) {}

FunnelStore::FunnelStore(const fs::path& dir) : FunnelStore() {
  dir_ = dir;
  fs::create_directories(dir / "events");
  fs::create_directories(dir / "dims");

  auto snap = std::make_shared<FunnelSnapshot>();
  if (std::ifstream in(dir / "snapshot.csv"); in) snap->rows = read_snapshot_csv(in);

  for (const auto& entry : fs::directory_iterator(dir / "dims")) {
    if (entry.path().extension() != ".csv") continue;
    std::ifstream in(entry.path());
    auto table = DimensionTable::from_csv(in);
    std::vector<std::string> keys;
    std::ifstream kin(fs::path(entry.path()).replace_extension(".keys"));
    std::string line;
    if (std::getline(kin, line)) keys = split_csv_line(line);
    const std::string name = entry.path().stem().string();
    if (name == "course") {
      auto catalog = std::make_shared<CourseCatalog>();
      for (const auto& c : courses_from_table(table)) (*catalog)[c.course_id] = c;
      snap->courses = std::move(catalog);
    }
    snap->dimensions[name] =
        std::make_shared<RegisteredDimension>(name, std::move(keys), std::move(table));
  }
  snap->id = next_snapshot_id_++;
  snapshot_ = std::move(snap);

  if (std::ifstream tin(dir / "dedup_tokens.txt"); tin) {
    std::string token;
    while (std::getline(tin, token)) {
      if (!token.empty()) dedup_tokens_.insert(token);
    }
  }

  // Pending partitions were validated when first ingested; replay without
  // their tokens so they are not reported as duplicates.
  std::vector<fs::path> partitions;
  for (const auto& entry : fs::directory_iterator(dir / "events")) {
    if (entry.path().extension() == ".ndjson") partitions.push_back(entry.path());
  }
  std::sort(partitions.begin(), partitions.end());
  std::vector<std::pair<size_t, RawEvent>> pending;
  for (const auto& p : partitions) {
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto e = parse_event(line);
      e.dedup_token.clear();
      pending.emplace_back(pending.size() + 1, std::move(e));
    }
  }
  if (!pending.empty()) {
    auto saved = std::move(dir_);
    dir_.reset();
    ingest_lines(pending, {});
    dir_ = std::move(saved);
  }
}

std::shared_ptr<const FunnelSnapshot> FunnelStore::snapshot() const {
  std::lock_guard lock(mu_);
  return snapshot_;
}

void FunnelStore::publish(std::shared_ptr<const FunnelSnapshot> next) {
  std::lock_guard lock(mu_);
  snapshot_ = std::move(next);
}

IngestReport FunnelStore::ingest_events(const std::vector<RawEvent>& batch) {
  std::vector<std::pair<size_t, RawEvent>> lines;
  lines.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) lines.emplace_back(i + 1, batch[i]);
  return ingest_lines(lines, {});
}

IngestReport FunnelStore::ingest_ndjson(std::istream& in) {
  std::vector<std::pair<size_t, RawEvent>> lines;
  std::vector<IngestReport::Reject> rejects;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    try {
      lines.emplace_back(line_no, parse_event(line));
    } catch (const Error& e) {
      rejects.push_back({line_no, e.what()});
    }
  }
  return ingest_lines(lines, std::move(rejects));
}

IngestReport FunnelStore::ingest_lines(const std::vector<std::pair<size_t, RawEvent>>& batch,
                                       std::vector<IngestReport::Reject> rejects) {
  IngestReport report;
  report.rejects = std::move(rejects);
  auto current = snapshot();

  std::vector<const std::pair<size_t, RawEvent>*> valid;
  std::optional<Date> newest = current->max_date();
  for (const auto& item : batch) {
    if (auto why = validate(item.second); !why.empty()) {
      report.rejects.push_back({item.first, why});
      continue;
    }
    valid.push_back(&item);
    if (!newest || *newest < item.second.date) newest = item.second.date;
  }

  std::vector<ImpressionRow> incoming;
  std::vector<RawEvent> accepted;
  std::unordered_set<std::string> batch_tokens;
  for (const auto* item : valid) {
    const RawEvent& e = item->second;
    if (e.date < *newest - (kRetentionDays - 1)) {
      report.rejects.push_back({item->first, "date " + e.date.to_string() +
                                                 " is outside the retention window"});
      continue;
    }
    if (!e.dedup_token.empty()) {
      if (dedup_tokens_.contains(e.dedup_token) || !batch_tokens.insert(e.dedup_token).second) {
        ++report.duplicates;
        continue;
      }
    }
    incoming.push_back(row_from_event(e));
    if (dir_) accepted.push_back(e);
  }
  std::sort(report.rejects.begin(), report.rejects.end(),
            [](const auto& a, const auto& b) { return a.line < b.line; });
  if (incoming.empty()) return report;

  std::stable_sort(incoming.begin(), incoming.end(),
                   [](const ImpressionRow& a, const ImpressionRow& b) { return a.key < b.key; });

  // Merge the sorted batch into the current rows.
  auto next = std::make_shared<FunnelSnapshot>();
  next->courses = current->courses;
  next->dimensions = current->dimensions;
  next->rows.reserve(current->rows.size() + incoming.size());
  const auto& old_rows = current->rows;
  size_t i = 0;
  for (size_t j = 0; j < incoming.size();) {
    const RowKey& key = incoming[j].key;
    while (i < old_rows.size() && old_rows[i].key < key) next->rows.push_back(old_rows[i++]);
    ImpressionRow merged;
    if (i < old_rows.size() && old_rows[i].key == key) {
      merged = old_rows[i++];
    } else {
      merged.key = key;
      ++report.rows_created;
      merged.measures = incoming[j++].measures;
    }
    while (j < incoming.size() && incoming[j].key == key) merged.measures += incoming[j++].measures;
    next->rows.push_back(std::move(merged));
  }
  while (i < old_rows.size()) next->rows.push_back(old_rows[i++]);

  // merged = accepted records that landed on an already existing key.
  report.rows_merged = incoming.size() - report.rows_created;

  {
    std::lock_guard lock(mu_);
    next->id = next_snapshot_id_++;
    dedup_tokens_.insert(batch_tokens.begin(), batch_tokens.end());
    snapshot_ = std::move(next);
  }
  if (dir_) persist_events(accepted);
  return report;
}

void FunnelStore::persist_events(const std::vector<RawEvent>& accepted) {
  std::map<Date, std::string> by_date;
  std::string tokens;
  for (const auto& e : accepted) {
    by_date[e.date] += event_to_json(e) + "\n";
    if (!e.dedup_token.empty()) tokens += e.dedup_token + "\n";
  }
  for (const auto& [date, text] : by_date) {
    std::ofstream out(*dir_ / "events" / (date.to_string() + ".ndjson"), std::ios::app);
    out << text;
  }
  if (!tokens.empty()) {
    std::ofstream out(*dir_ / "dedup_tokens.txt", std::ios::app);
    out << tokens;
  }
}

void FunnelStore::register_dimension(const std::string& name,
                                     const std::vector<std::string>& key_fields,
                                     DimensionTable rows) {
  if (name.empty() || name.find_first_of("./\\") != std::string::npos) {
    throw InvalidArgument("invalid dimension name '" + name + "'");
  }
  auto dim = std::make_shared<RegisteredDimension>(name, key_fields, std::move(rows));
  std::shared_ptr<const CourseCatalog> catalog;
  if (name == "course") {
    if (key_fields != std::vector<std::string>{"course_id"}) {
      throw StarSchemaViolation("the course dimension must be keyed by course_id");
    }
    auto c = std::make_shared<CourseCatalog>();
    for (const auto& course : courses_from_table(dim->table())) (*c)[course.course_id] = course;
    catalog = std::move(c);
  }
  if (dir_) {
    std::ostringstream csv;
    dim->table().write_csv(csv);
    write_file_atomically(*dir_ / "dims" / (name + ".csv"), csv.str());
    std::string keys;
    for (size_t i = 0; i < key_fields.size(); ++i) keys += (i ? "," : "") + key_fields[i];
    write_file_atomically(*dir_ / "dims" / (name + ".keys"), keys + "\n");
  }
  std::lock_guard lock(mu_);
  auto next = std::make_shared<FunnelSnapshot>(*snapshot_);
  next->id = next_snapshot_id_++;
  next->dimensions[name] = std::move(dim);
  if (catalog) next->courses = std::move(catalog);
  snapshot_ = std::move(next);
}

void FunnelStore::register_courses(const std::vector<CourseDimension>& courses) {
  register_dimension("course", {"course_id"}, courses_to_table(courses));
}

void FunnelStore::compact() {
  auto current = snapshot();
  if (auto newest = current->max_date()) {
    const Date cutoff = *newest - (kRetentionDays - 1);
    if (current->min_date() < cutoff) {
      auto next = std::make_shared<FunnelSnapshot>(*current);
      auto [lo, hi] = next->date_span({cutoff, *newest});
      next->rows.erase(next->rows.begin(), next->rows.begin() + static_cast<ptrdiff_t>(lo));
      std::lock_guard lock(mu_);
      next->id = next_snapshot_id_++;
      snapshot_ = next;
      current = next;
    }
  }
  if (!dir_) return;
  std::ostringstream csv;
  write_snapshot_csv(*current, csv);
  write_file_atomically(*dir_ / "snapshot.csv", csv.str());
  for (const auto& entry : fs::directory_iterator(*dir_ / "events")) fs::remove(entry.path());
}

std::vector<EnrollmentRow> FunnelStore::build_enrollment_funnel(Date as_of) const {
  return agilerec::build_enrollment_funnel(*snapshot(), as_of);
}

std::vector<ImpressionRow> FunnelStore::scan(const ScanFilter& filter, DateRange range) const {
  return agilerec::scan(*snapshot(), filter, range);
}

size_t FunnelStore::dangling_keys(std::string_view dimension) const {
  auto snap = snapshot();
  auto it = snap->dimensions.find(dimension);
  if (it == snap->dimensions.end()) throw NotFound("unknown dimension '" + std::string(dimension) + "'");
  size_t dangling = 0;
  for (const auto& row : snap->rows) dangling += !it->second->joins(row.key);
  return dangling;
}

}  // namespace agilerec
