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
#include "agilerec/scoring.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

namespace agilerec {

void ScoreParams::validate() const {
  for (double v : {alpha, beta, gamma, tau}) {
    if (!std::isfinite(v) || v < 0) throw InvalidArgument("score exponents must be finite and >= 0");
  }
  if (!std::isfinite(p_min) || p_min <= 0) throw InvalidArgument("p_min must be positive");
}

const std::vector<std::string>& ScoreParams::preset_names() {
  static const std::vector<std::string> names{"enrollment", "consumption", "revenue", "quality", "blended"};
  return names;
}

ScoreParams ScoreParams::preset(std::string_view name) {
  ScoreParams p;
  if (name == "enrollment") return p;
  if (name == "consumption") {
    p.beta = 1;
  } else if (name == "revenue") {
    p.alpha = 1;
  } else if (name == "quality") {
    p.gamma = 1;
  } else if (name == "blended") {
    p.alpha = 0.5;
    p.beta = 0.5;
    p.gamma = 0.5;
  } else {
    throw InvalidArgument("unknown score preset '" + std::string(name) + "'");
  }
  return p;
}

double combine_score(double epmi, double price, double cpe, double npe, InterestState state,
                     const ScoreParams& params) {
  double s = std::max(epmi, 0.0);
  if (params.alpha != 0) s *= std::pow(std::max(price, params.p_min), params.alpha);
  if (params.beta != 0) s *= std::pow(std::max(cpe, 0.0), params.beta);
  if (params.gamma != 0) s *= std::pow(std::max(npe, 0.0), params.gamma);
  if (params.tau != 0) s *= interest_multiplier(state, params.tau);
  return s;
}

ScoringEngine::ScoringEngine(std::shared_ptr<const FeatureEngine> features, ScoreModels models)
    : features_(std::move(features)), models_(std::move(models)) {
  if (!features_) throw InvalidArgument("scoring engine needs a feature engine");
  const auto schema = course_feature_schema();
  for (const auto* m : {&models_.epmi, &models_.cpe, &models_.npe}) {
    if (*m && !((*m)->schema() == *schema)) {
      throw SchemaMismatch("model schema does not match the course feature schema");
    }
  }
}

void ScoringEngine::check_models(const ScoreParams& params) const {
  params.validate();
  if (!models_.epmi) throw Error("no active model for target epmi");
  if (params.beta != 0 && !models_.cpe) throw Error("no active model for target cpe");
  if (params.gamma != 0 && !models_.npe) throw Error("no active model for target npe");
}

double ScoringEngine::score_one(const VisitorProfile& profile, const AggregateTable& aggregates,
                                int64_t course_id, const ScoreParams& params, PageContext context) const {
  const CourseDimension* course = features_->snapshot().course(course_id);
  if (!course) throw NotFound("unknown course " + std::to_string(course_id));
  const FeatureVector v = features_->build_feature_vector(profile, aggregates, course_id, context);
  const std::span<const double> values(v.values);
  const double epmi = models_.epmi->predict(values);
  const double cpe = params.beta != 0 ? models_.cpe->predict(values) : 0.0;
  const double npe = params.gamma != 0 ? models_.npe->predict(values) : 0.0;
  return combine_score(epmi, course->price, cpe, npe, profile.course_state(course_id), params);
}

double ScoringEngine::score(const std::string& visitor_id, int64_t course_id, Date as_of,
                            const ScoreParams& params, PageContext context) const {
  check_models(params);
  if (!features_->snapshot().course(course_id)) throw NotFound("unknown course " + std::to_string(course_id));
  auto aggregates = features_->compute_trailing_aggregates(as_of);
  return score_one(features_->visitor_profile(visitor_id, as_of), *aggregates, course_id, params, context);
}

std::vector<CourseScore> ScoringEngine::score_on_request(const std::string& visitor_id,
                                                         std::span<const int64_t> courses, Date as_of,
                                                         const ScoreParams& params,
                                                         PageContext context) const {
  check_models(params);
  auto aggregates = features_->compute_trailing_aggregates(as_of);
  const VisitorProfile profile = features_->visitor_profile(visitor_id, as_of);
  std::vector<CourseScore> out;
  out.reserve(courses.size());
  for (int64_t c : courses) out.push_back({c, score_one(profile, *aggregates, c, params, context)});
  return out;
}

BatchResult ScoringEngine::batch_score(std::span<const std::string> visitors,
                                       std::span<const int64_t> courses, Date as_of,
                                       const ScoreParams& params, const BatchOptions& options) const {
  check_models(params);
  if (options.partition_size == 0) throw InvalidArgument("partition_size must be positive");
  auto aggregates = features_->compute_trailing_aggregates(as_of);

  BatchResult result;
  result.partition_count = (visitors.size() + options.partition_size - 1) / options.partition_size;
  std::vector<size_t> todo;
  if (options.only_partitions) {
    todo = *options.only_partitions;
    std::sort(todo.begin(), todo.end());
    todo.erase(std::unique(todo.begin(), todo.end()), todo.end());
    for (size_t p : todo) {
      if (p >= result.partition_count) throw InvalidArgument("no partition " + std::to_string(p));
    }
  } else {
    for (size_t p = 0; p < result.partition_count; ++p) todo.push_back(p);
  }

  struct Outcome {
    std::vector<ScoreCacheEntry> entries;
    std::optional<std::string> error;
  };
  std::vector<Outcome> outcomes(todo.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t k = next++; k < todo.size(); k = next++) {
      const size_t begin = todo[k] * options.partition_size;
      const size_t end = std::min(visitors.size(), begin + options.partition_size);
      try {
        for (size_t i = begin; i < end; ++i) {
          ScoreCacheEntry e{visitors[i], as_of, options.variant_tag, {}};
          const VisitorProfile profile = features_->visitor_profile(visitors[i], as_of);
          e.scores.reserve(courses.size());
          for (int64_t c : courses) {
            e.scores.push_back({c, score_one(profile, *aggregates, c, params, options.context)});
          }
          outcomes[k].entries.push_back(std::move(e));
        }
      } catch (const std::exception& ex) {
        outcomes[k].entries.clear();
        outcomes[k].error = ex.what();
      }
    }
  };
  size_t threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, todo.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (size_t k = 0; k < todo.size(); ++k) {
    if (outcomes[k].error) {
      result.errors.push_back({todo[k], visitors[todo[k] * options.partition_size], *outcomes[k].error});
      continue;
    }
    result.completed_partitions.push_back(todo[k]);
    for (auto& e : outcomes[k].entries) result.entries.push_back(std::move(e));
  }
  return result;
}

// ---- score cache ----

namespace {

static_assert(std::endian::native == std::endian::little, "score cache I/O assumes little-endian");

template <typename T>
void put_raw(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  if (s.size() > 0xFFFF) throw InvalidArgument("score cache string longer than 65535 bytes");
  put_raw<uint16_t>(out, static_cast<uint16_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string string() {
    const auto n = get<uint16_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(size_t n) const {
    if (data_.size() - pos_ < n) throw Error("score cache file is truncated");
  }
  const std::string& data_;
  size_t pos_ = 0;
};

}  // namespace

void ScoreCache::put(ScoreCacheEntry entry) {
  for (const auto& s : entry.scores) {
    if (!std::isfinite(s.score) || s.score < 0) throw InvalidArgument("cached scores must be finite and >= 0");
  }
  auto key = std::make_pair(entry.visitor_id, entry.variant_tag);
  if (entries_.count(key)) {
    throw InvalidArgument("score cache already holds visitor " + entry.visitor_id);
  }
  entries_.emplace(std::move(key), std::move(entry));
}

const ScoreCacheEntry* ScoreCache::get(const std::string& visitor_id, const std::string& variant_tag) const {
  auto it = entries_.find({visitor_id, variant_tag});
  return it == entries_.end() ? nullptr : &it->second;
}

void ScoreCache::write(const std::filesystem::path& path) const {
  std::string out = "ARSC";
  put_raw<uint8_t>(out, kVersion);
  put_raw<uint32_t>(out, static_cast<uint32_t>(entries_.size()));
  for (const auto& [key, e] : entries_) {
    put_string(out, e.visitor_id);
    put_raw<int32_t>(out, e.as_of.days());
    put_string(out, e.variant_tag);
    put_raw<uint32_t>(out, static_cast<uint32_t>(e.scores.size()));
    for (const auto& s : e.scores) {
      put_raw<int64_t>(out, s.course_id);
      put_raw<double>(out, s.score);
    }
  }
  write_file_atomically(path, out);
}

ScoreCache ScoreCache::read(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  if (data.compare(0, 4, "ARSC") != 0) throw Error(path.string() + " is not a score cache file");
  Reader r(data);
  r.get<uint32_t>();
  const auto version = r.get<uint8_t>();
  if (version != kVersion) throw Error("unsupported score cache version " + std::to_string(version));
  ScoreCache cache;
  const auto n = r.get<uint32_t>();
  for (uint32_t i = 0; i < n; ++i) {
    ScoreCacheEntry e;
    e.visitor_id = r.string();
    e.as_of = Date(r.get<int32_t>());
    e.variant_tag = r.string();
    const auto k = r.get<uint32_t>();
    e.scores.reserve(k);
    for (uint32_t j = 0; j < k; ++j) {
      const auto c = r.get<int64_t>();
      e.scores.push_back({c, r.get<double>()});
    }
    cache.put(std::move(e));
  }
  if (!r.done()) throw Error("trailing bytes in score cache file");
  return cache;
}

}  // namespace agilerec
