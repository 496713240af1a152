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

// Step-by-step reference of the greedy featured-page procedure, written
// without sharing code with the ranker: plain maps, repeated max extraction.

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "agilerec/page_ranker.hpp"

namespace oracle {

struct Row {
  std::string unit_id;
  std::vector<int64_t> courses;
  double score;
};

// Highest remaining score first; equal scores take the smaller course id.
inline std::vector<int64_t> ordered(std::vector<int64_t> pool, const agilerec::ScoreMap& scores) {
  std::vector<int64_t> out;
  while (!pool.empty()) {
    size_t pick = 0;
    for (size_t i = 1; i < pool.size(); ++i) {
      const double a = scores.at(pool[i]), b = scores.at(pool[pick]);
      if (a > b || (a == b && pool[i] < pool[pick])) pick = i;
    }
    out.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<long>(pick));
  }
  return out;
}

inline std::vector<Row> rank_page(const std::vector<agilerec::Unit>& units, const agilerec::ScoreMap& scores) {
  std::map<std::string, std::vector<int64_t>> remaining;
  for (const auto& u : units) {
    if (!u.candidates.empty()) remaining[u.unit_id] = u.candidates;
  }
  std::vector<Row> page;
  while (!remaining.empty()) {
    std::string best_id;
    double best = -std::numeric_limits<double>::infinity();
    // std::map iterates ids ascending, so a strict '>' keeps the lower id on ties.
    for (const auto& [id, pool] : remaining) {
      auto o = ordered(pool, scores);
      double s = 0;
      for (size_t i = 0; i < o.size() && i < 4; ++i) s += scores.at(o[i]);
      if (best_id.empty() || s > best) {
        best = s;
        best_id = id;
      }
    }
    auto o = ordered(remaining[best_id], scores);
    page.push_back({best_id, o, best});
    remaining.erase(best_id);
    std::vector<int64_t> shown(o.begin(), o.begin() + static_cast<long>(std::min<size_t>(4, o.size())));
    for (auto it = remaining.begin(); it != remaining.end();) {
      std::vector<int64_t> kept;
      for (int64_t c : it->second) {
        bool hit = false;
        for (int64_t s : shown) hit = hit || s == c;
        if (!hit) kept.push_back(c);
      }
      if (kept.empty()) {
        it = remaining.erase(it);
      } else {
        it->second = kept;
        ++it;
      }
    }
  }
  return page;
}

}  // namespace oracle
