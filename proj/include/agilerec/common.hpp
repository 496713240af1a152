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

#include <compare>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace agilerec {

// Errors are reported with exceptions. Each module throws a subclass so
// callers (the CLI and the HTTP facade) can map them onto exit codes and
// status codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

// UTC calendar date stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(int32_t days_since_epoch) : days_(days_since_epoch) {}

  static Date from_ymd(int year, unsigned month, unsigned day);
  // Parses strict YYYY-MM-DD. Throws InvalidArgument.
  static Date parse(std::string_view text);

  constexpr int32_t days() const { return days_; }
  std::string to_string() const;

  constexpr Date operator+(int32_t n) const { return Date(days_ + n); }
  constexpr Date operator-(int32_t n) const { return Date(days_ - n); }
  constexpr int32_t operator-(Date other) const { return days_ - other.days_; }
  Date& operator++() {
    ++days_;
    return *this;
  }

  constexpr auto operator<=>(const Date&) const = default;

 private:
  int32_t days_ = 0;
};

// Inclusive on both ends.
struct DateRange {
  Date from;
  Date to;

  bool contains(Date d) const { return from <= d && d <= to; }
  bool empty() const { return to < from; }
};

// Length of the trailing feature window, counting as_of itself.
inline constexpr int kTrailingWindowDays = 91;

inline DateRange trailing_window(Date as_of) {
  return {as_of - (kTrailingWindowDays - 1), as_of};
}

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

// Write to "<path>.tmp" then rename over `path`.
void write_file_atomically(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace agilerec
