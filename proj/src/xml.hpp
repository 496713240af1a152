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

// Minimal XML reader for the model document subset: elements, attributes,
// character data, comments, CDATA and the XML declaration. No DTDs.

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "agilerec/pmml.hpp"

namespace agilerec::xml {

struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Element> children;
  std::string text;
  int line = 0;
  int column = 0;

  const std::string* attribute(std::string_view key) const {
    for (const auto& [k, v] : attributes) {
      if (k == key) return &v;
    }
    return nullptr;
  }
};

// Throws PmmlParseError with a 1-based line and column.
Element parse(std::string_view text);

std::string escape(std::string_view text);

}  // namespace agilerec::xml
