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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "agilerec/common.hpp"

namespace agilerec {

class StarSchemaViolation : public Error {
 public:
  using Error::Error;
};

enum class PageContext : uint8_t { kFeatured, kSearch, kCourseLanding, kEmail, kOther };

inline constexpr int kPageContextCount = 5;

std::string_view to_string(PageContext context);
PageContext parse_page_context(std::string_view text);

// Slate contexts render ranked course lists; everything else is a direct
// landing that may carry enrollments without impressions.
inline bool is_slate_context(PageContext c) {
  return c == PageContext::kFeatured || c == PageContext::kSearch;
}

struct Measures {
  int64_t impressions = 0;
  int64_t clicks = 0;
  int64_t enrollments = 0;
  double revenue = 0;
  double minutes_consumed = 0;
  int64_t nps_responses = 0;
  int64_t nps_score_sum = 0;

  Measures& operator+=(const Measures& o);
  bool operator==(const Measures&) const = default;
};

struct RowKey {
  std::string visitor_id;
  int64_t course_id = 0;
  Date date;
  PageContext page_context = PageContext::kFeatured;
  std::string variant_tag;

  // Date-major so snapshots stream in date-partition order.
  auto operator<=>(const RowKey& o) const {
    if (auto c = date <=> o.date; c != 0) return c;
    if (auto c = visitor_id <=> o.visitor_id; c != 0) return c;
    if (auto c = course_id <=> o.course_id; c != 0) return c;
    if (auto c = page_context <=> o.page_context; c != 0) return c;
    return variant_tag <=> o.variant_tag;
  }
  bool operator==(const RowKey&) const = default;
};

struct ImpressionRow {
  RowKey key;
  Measures measures;

  bool is_direct_landing() const {
    return measures.impressions == 0 && !is_slate_context(key.page_context);
  }
  // A course counts as seen only through a slate impression.
  bool is_seen() const { return measures.impressions >= 1 && is_slate_context(key.page_context); }
  bool operator==(const ImpressionRow&) const = default;
};

struct CourseDimension {
  int64_t course_id = 0;
  int64_t subcategory_id = 0;
  int64_t category_id = 0;
  double price = 0;
  Date published_date;

  bool is_free() const { return price == 0; }
};

struct EnrollmentRow {
  std::string visitor_id;
  int64_t course_id = 0;
  Date enrollment_date;
  PageContext page_context = PageContext::kFeatured;
  std::string variant_tag;
  double revenue = 0;
  double minutes_consumed = 0;
  std::optional<int> nps_response;
};

// One line of the NDJSON event format.
struct RawEvent {
  std::string visitor_id;
  int64_t course_id = 0;
  Date date;
  PageContext page_context = PageContext::kFeatured;
  std::string variant_tag;
  int64_t impressions = 0;
  int64_t clicks = 0;
  int64_t enrollments = 0;
  double revenue = 0;
  double minutes_consumed = 0;
  std::optional<int> nps_response;
  std::string dedup_token;
};

RawEvent parse_event(std::string_view json_line);
std::string event_to_json(const RawEvent& event);

struct IngestReport {
  struct Reject {
    size_t line = 0;
    std::string reason;
  };
  size_t rows_merged = 0;
  size_t rows_created = 0;
  size_t duplicates = 0;
  std::vector<Reject> rejects;
};

// Generic dimension keyed by a subset of the funnel keys.
class DimensionTable {
 public:
  DimensionTable() = default;
  DimensionTable(std::vector<std::string> columns, std::vector<std::vector<std::string>> rows);

  static DimensionTable from_csv(std::istream& in);
  void write_csv(std::ostream& out) const;

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::optional<size_t> column_index(std::string_view name) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

class RegisteredDimension {
 public:
  RegisteredDimension(std::string name, std::vector<std::string> key_fields, DimensionTable table);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& key_fields() const { return key_fields_; }
  const DimensionTable& table() const { return table_; }

  // Joined attribute value for a funnel key; nullopt when the key dangles.
  std::optional<std::string_view> lookup(const RowKey& key, std::string_view attribute) const;
  bool has_attribute(std::string_view attribute) const;
  bool joins(const RowKey& key) const;

 private:
  std::string join_key(const RowKey& key) const;

  std::string name_;
  std::vector<std::string> key_fields_;
  DimensionTable table_;
  std::unordered_map<std::string, size_t> index_;
};

using CourseCatalog = std::map<int64_t, CourseDimension>;

// Immutable, key-unique view of the funnel. Rows are sorted by RowKey.
struct FunnelSnapshot {
  uint64_t id = 0;
  std::vector<ImpressionRow> rows;
  std::shared_ptr<const CourseCatalog> courses = std::make_shared<CourseCatalog>();
  std::map<std::string, std::shared_ptr<const RegisteredDimension>, std::less<>> dimensions;

  std::optional<Date> min_date() const;
  std::optional<Date> max_date() const;
  const CourseDimension* course(int64_t course_id) const;
  // Half-open index range of rows with date in `range`.
  std::pair<size_t, size_t> date_span(DateRange range) const;
};

struct ScanFilter {
  // field=value equality terms; field is a funnel key field or "dimension.attribute".
  std::vector<std::pair<std::string, std::string>> terms;

  static ScanFilter parse(const std::vector<std::string>& expressions);
};

class FunnelStore {
 public:
  static constexpr int kRetentionDays = 400;
  static constexpr int kAttributionDays = 30;

  FunnelStore();
  // Persistent store rooted at `dir`; loads the compacted snapshot and
  // replays pending partitions.
  explicit FunnelStore(const std::filesystem::path& dir);

  IngestReport ingest_events(const std::vector<RawEvent>& batch);
  // Parses NDJSON, rejecting malformed lines by line number.
  IngestReport ingest_ndjson(std::istream& in);

  void register_dimension(const std::string& name, const std::vector<std::string>& key_fields,
                          DimensionTable rows);
  void register_courses(const std::vector<CourseDimension>& courses);

  std::shared_ptr<const FunnelSnapshot> snapshot() const;

  // Rewrites the key-unique snapshot file and clears pending partitions.
  void compact();

  std::vector<EnrollmentRow> build_enrollment_funnel(Date as_of) const;
  std::vector<ImpressionRow> scan(const ScanFilter& filter, DateRange range) const;
  // Funnel rows whose keys do not join the named dimension.
  size_t dangling_keys(std::string_view dimension) const;

  const std::optional<std::filesystem::path>& directory() const { return dir_; }

 private:
  IngestReport ingest_lines(const std::vector<std::pair<size_t, RawEvent>>& batch,
                            std::vector<IngestReport::Reject> rejects);
  void publish(std::shared_ptr<const FunnelSnapshot> next);
  void persist_events(const std::vector<RawEvent>& accepted);

  std::optional<std::filesystem::path> dir_;
  mutable std::mutex mu_;
  std::shared_ptr<const FunnelSnapshot> snapshot_;
  std::unordered_set<std::string> dedup_tokens_;
  uint64_t next_snapshot_id_ = 1;
};

std::vector<EnrollmentRow> build_enrollment_funnel(const FunnelSnapshot& snapshot, Date as_of);
std::vector<ImpressionRow> scan(const FunnelSnapshot& snapshot, const ScanFilter& filter,
                                DateRange range);

std::vector<CourseDimension> courses_from_table(const DimensionTable& table);
DimensionTable courses_to_table(const std::vector<CourseDimension>& courses);

// Field value of a funnel row as text (key fields and measures).
std::string funnel_field(const ImpressionRow& row, std::string_view field);

// CSV helpers shared by the persisted tables.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

}  // namespace agilerec
