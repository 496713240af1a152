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

#include <string>
#include <string_view>

#include "agilerec/features.hpp"
#include "agilerec/tree_model.hpp"

namespace agilerec {

class PmmlParseError : public Error {
 public:
  PmmlParseError(const std::string& what, int line, int column)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// A well-formed document using something outside the TreeModel subset.
class UnsupportedConstruct : public Error {
 public:
  explicit UnsupportedConstruct(std::string construct)
      : Error("unsupported PMML construct: " + construct), construct_(std::move(construct)) {}
  const std::string& construct() const { return construct_; }

 private:
  std::string construct_;
};

// Structurally valid XML using allowed constructs in an inconsistent way.
class InvalidModelDocument : public Error {
 public:
  using Error::Error;
};

struct ModelManifest {
  std::string model_id;
  ModelTarget target = ModelTarget::kEpmi;
  int64_t version = 0;
  std::string created_at;  // UTC, ISO 8601
  DateRange training_window;
  std::string document_digest;  // sha256 hex of the document bytes
};

std::string to_pmml(const RegressionTree& tree, const ModelManifest* manifest = nullptr);
RegressionTree from_pmml(std::string_view document);

}  // namespace agilerec
