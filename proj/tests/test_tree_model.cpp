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
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "agilerec/model_repository.hpp"
#include "agilerec/tree_model.hpp"

using namespace agilerec;

namespace {

std::shared_ptr<const FeatureSchema> xy_schema() {
  return std::make_shared<const FeatureSchema>(std::vector<FeatureDef>{
      {"x", FeatureKind::kNumeric, {}},
      {"y", FeatureKind::kNumeric, {}},
      {"color", FeatureKind::kCategorical, {"red", "green", "blue", "black"}}});
}

TrainingSet random_set(std::mt19937_64& rng, size_t n, bool integer_weights, bool with_missing) {
  TrainingSet set{xy_schema(), {}};
  std::uniform_int_distribution<int> xs(0, 9), cs(0, 3), ws(1, 4);
  std::normal_distribution<double> noise(0, 0.3);
  for (size_t i = 0; i < n; ++i) {
    TrainingRow r;
    const double x = xs(rng), y = xs(rng), c = cs(rng);
    r.features = {x, y, c};
    if (with_missing && rng() % 7 == 0) r.features[rng() % 3] = kMissing;
    r.target = (x > 4 ? 2.0 : 0.5) + (c == 2 ? 1.5 : 0.0) + 0.1 * y + noise(rng);
    r.weight = integer_weights ? ws(rng) : std::uniform_real_distribution<double>(0.5, 3)(rng);
    set.rows.push_back(std::move(r));
  }
  return set;
}

TrainingSet expand(const TrainingSet& set) {
  TrainingSet out{set.schema, {}};
  for (const auto& r : set.rows) {
    for (int k = 0; k < static_cast<int>(r.weight); ++k) out.rows.push_back({r.features, r.target, 1.0});
  }
  return out;
}

// x <= 5 ? 1.5 : 4.0 over a single numeric feature.
RegressionTree three_node_tree() {
  auto schema = std::make_shared<const FeatureSchema>(std::vector<FeatureDef>{{"x", FeatureKind::kNumeric, {}}});
  std::vector<TreeNode> nodes(3);
  nodes[0].prediction = 2.5;
  nodes[0].weight = 10;
  nodes[0].split = TreeSplit{0, 5.0, 0, 0};
  nodes[0].left = 1;
  nodes[0].right = 2;
  nodes[0].default_left = false;
  nodes[1].prediction = 1.5;
  nodes[1].weight = 6;
  nodes[2].prediction = 4.0;
  nodes[2].weight = 4;
  return RegressionTree(schema, "target", nodes);
}

FeatureVector vec(const RegressionTree& t, std::vector<double> values) {
  return FeatureVector{t.schema_ptr(), std::move(values)};
}

const char* kMinimalDocument = R"(<?xml version="1.0"?>
<PMML version="4.2" xmlns="http://www.dmg.org/PMML-4_2">
  <Header/>
  <DataDictionary>
    <DataField name="price" optype="continuous" dataType="double"/>
    <DataField name="context" optype="categorical" dataType="string">
      <Value value="featured"/>
      <Value value="search"/>
    </DataField>
    <DataField name="epmi" optype="continuous" dataType="double"/>
  </DataDictionary>
  <TreeModel functionName="regression" missingValueStrategy="defaultChild"
             noTrueChildStrategy="returnLastPrediction">
    <MiningSchema>
      <MiningField name="price"/>
      <MiningField name="context"/>
      <MiningField name="epmi" usageType="target"/>
    </MiningSchema>
    <Node id="root" score="1.25" defaultChild="cheap">
      <True/>
      <Node id="dear" score="0.75">
        <SimplePredicate field="price" operator="greaterThan" value="20"/>
      </Node>
      <Node id="cheap" score="2.5">
        <SimplePredicate field="price" operator="lessOrEqual" value="20"/>
      </Node>
    </Node>
  </TreeModel>
</PMML>
)";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  auto at = s.find(from);
  REQUIRE(at != std::string::npos);
  return s.replace(at, from.size(), to);
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("agilerec_tree_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("indicator target splits at x <= 5") {
  auto schema = std::make_shared<const FeatureSchema>(std::vector<FeatureDef>{{"x", FeatureKind::kNumeric, {}}});
  TrainingSet set{schema, {}};
  for (int x = 0; x <= 10; ++x) set.rows.push_back({{double(x)}, x > 5 ? 1.0 : 0.0, 2000});
  auto tree = train_tree(set);
  REQUIRE(tree.node_count() == 3);
  const auto& root = tree.nodes()[0];
  REQUIRE(root.split);
  CHECK(root.split->feature == 0);
  CHECK(root.split->threshold == 5.0);
  CHECK(tree.nodes()[root.left].prediction == 0.0);
  CHECK(tree.nodes()[root.right].prediction == 1.0);
  CHECK(tree.nodes()[root.left].weight == 12000);
  CHECK(tree.nodes()[root.right].weight == 10000);
}

TEST_CASE("constant target gives a single leaf") {
  std::mt19937_64 rng(1);
  auto set = random_set(rng, 200, true, false);
  for (auto& r : set.rows) r.target = 3.0;
  auto tree = train_tree(set, {6, 1, 1e-6});
  CHECK(tree.node_count() == 1);
  CHECK(tree.predict(vec(tree, {1, 2, 0})) == 3.0);
}

TEST_CASE("trainer input validation") {
  TrainingSet empty{xy_schema(), {}};
  CHECK_THROWS_AS(train_tree(empty), InvalidArgument);
  TrainingSet bad{xy_schema(), {{{1, 2, 0}, 1.0, 0.0}}};
  CHECK_THROWS_AS(train_tree(bad), InvalidArgument);
  TrainingSet bad_cat{xy_schema(), {{{1, 2, 7}, 1.0, 1.0}}};
  CHECK_THROWS_AS(train_tree(bad_cat), InvalidArgument);
}

TEST_CASE("ties go to the lower feature index") {
  auto schema = std::make_shared<const FeatureSchema>(
      std::vector<FeatureDef>{{"a", FeatureKind::kNumeric, {}}, {"b", FeatureKind::kNumeric, {}}});
  TrainingSet set{schema, {}};
  for (int x = 0; x < 8; ++x) set.rows.push_back({{double(x), double(x)}, x >= 4 ? 5.0 : 1.0, 1});
  auto tree = train_tree(set, {1, 1, 0});
  REQUIRE(tree.nodes()[0].split);
  CHECK(tree.nodes()[0].split->feature == 0);
  CHECK(tree.nodes()[0].split->threshold == 3.0);
}

TEST_CASE("categorical subset split") {
  auto schema = xy_schema();
  TrainingSet set{schema, {}};
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 5; ++i) set.rows.push_back({{0, 0, double(c)}, (c == 1 || c == 3) ? 10.0 : 1.0, 1});
  }
  auto tree = train_tree(set, {1, 1, 0});
  REQUIRE(tree.nodes()[0].split);
  const auto& s = *tree.nodes()[0].split;
  CHECK(s.feature == 2);
  CHECK(s.left_categories == 0b0101u);
  CHECK(s.right_categories == 0b1010u);
  CHECK(tree.predict(vec(tree, {0, 0, 1})) == 10.0);
  CHECK(tree.predict(vec(tree, {0, 0, 2})) == 1.0);
}

TEST_CASE("weighted rows and row-expanded rows train identical trees") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    auto set = random_set(rng, 40 + trial * 5, true, trial % 2 == 1);
    const TreeParams params{4, 6, 1e-6};
    auto a = train_tree(set, params);
    auto b = train_tree(expand(set), params);
    CHECK(a.node_count() >= 5);
    CHECK(a.same_structure(b, 0.0));
    for (const auto& r : set.rows) CHECK(a.predict(std::span<const double>(r.features)) ==
                                         b.predict(std::span<const double>(r.features)));
  }
}

TEST_CASE("leaf predictions are weighted means and weights add up") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto set = random_set(rng, 500, false, true);
    auto tree = train_tree(set, {5, 10, 1e-6});
    std::vector<long double> w(tree.node_count()), wy(tree.node_count());
    for (const auto& r : set.rows) {
      const size_t leaf = tree.route(r.features);
      CHECK(tree.nodes()[leaf].is_leaf());
      w[leaf] += r.weight;
      wy[leaf] += r.weight * r.target;
    }
    for (size_t i = 0; i < tree.node_count(); ++i) {
      const auto& n = tree.nodes()[i];
      if (n.is_leaf()) {
        CHECK(n.prediction == doctest::Approx(double(wy[i] / w[i])).epsilon(1e-12));
        CHECK(n.weight == doctest::Approx(double(w[i])).epsilon(1e-12));
        CHECK(n.weight >= 10);
      } else {
        CHECK(n.weight == doctest::Approx(tree.nodes()[n.left].weight + tree.nodes()[n.right].weight)
                              .epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("raising min_leaf_weight never adds nodes") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto set = random_set(rng, 400, false, trial % 3 == 0);
    size_t previous = SIZE_MAX;
    for (double mlw : {0.0, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0}) {
      auto tree = train_tree(set, {8, mlw, 1e-9});
      CHECK(tree.node_count() <= previous);
      previous = tree.node_count();
    }
  }
}

TEST_CASE("max_depth bounds the tree") {
  std::mt19937_64 rng(10);
  auto set = random_set(rng, 500, false, false);
  for (int d = 0; d <= 4; ++d) CHECK(train_tree(set, {d, 1, 0}).depth() <= d);
}

TEST_CASE("hand-built three-node tree") {
  auto t = three_node_tree();
  CHECK(t.predict(vec(t, {7})) == 4.0);
  CHECK(t.predict(vec(t, {5})) == 1.5);
  CHECK(t.predict(vec(t, {kMissing})) == 4.0);  // default child is the right leaf

  auto leaf = RegressionTree(t.schema_ptr(), "target", {TreeNode{0.42, 1, std::nullopt, -1, -1, true}});
  CHECK(leaf.predict(vec(leaf, {123})) == 0.42);

  FeatureVector other{xy_schema(), {1, 2, 0}};
  CHECK_THROWS_AS(t.predict(other), SchemaMismatch);
  CHECK_THROWS_AS(t.predict(std::span<const double>(std::vector<double>{1, 2})), SchemaMismatch);
}

TEST_CASE("unknown category stops at the splitting node") {
  std::vector<TreeNode> nodes(3);
  nodes[0] = {5.0, 3, TreeSplit{2, 0, 0b01, 0b10}, 1, 2, true};
  nodes[1] = {1.0, 1, std::nullopt, -1, -1, true};
  nodes[2] = {2.0, 2, std::nullopt, -1, -1, true};
  RegressionTree t(xy_schema(), "target", nodes);
  CHECK(t.predict(vec(t, {0, 0, 0})) == 1.0);
  CHECK(t.predict(vec(t, {0, 0, 1})) == 2.0);
  CHECK(t.predict(vec(t, {0, 0, 3})) == 5.0);
  CHECK(t.predict(vec(t, {0, 0, kMissing})) == 1.0);
}

TEST_CASE("PMML round trip keeps predictions") {
  auto t = three_node_tree();
  auto back = from_pmml(to_pmml(t));
  CHECK(back.same_structure(t));
  for (int i = 0; i < 100; ++i) {
    const double x = i * 0.1 - 0.05;
    CHECK(back.predict(vec(back, {x})) == t.predict(vec(t, {x})));
  }

  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    auto set = random_set(rng, 300, false, true);
    for (auto& r : set.rows) r.features[0] += 1.0 / 3.0;  // thresholds that need all 17 digits
    auto tree = train_tree(set, {6, 2, 1e-9});
    ModelManifest m{"rt", ModelTarget::kCpe, 3, "2015-01-01T00:00:00Z",
                    {Date::parse("2015-01-01"), Date::parse("2015-02-01")}, ""};
    auto doc = to_pmml(tree, &m);
    auto copy = from_pmml(doc);
    CHECK(copy.same_structure(tree));
    CHECK(copy.target_name() == "target");
    for (const auto& r : set.rows) {
      CHECK(copy.predict(std::span<const double>(r.features)) ==
            tree.predict(std::span<const double>(r.features)));
    }
  }
}

TEST_CASE("hand-written minimal document scores per manual trace") {
  auto t = from_pmml(kMinimalDocument);
  REQUIRE(t.schema().size() == 2);
  CHECK(t.target_name() == "epmi");
  CHECK(t.schema()[1].categories == std::vector<std::string>{"featured", "search"});
  CHECK(t.predict(vec(t, {20, 0})) == 2.5);
  CHECK(t.predict(vec(t, {20.5, 1})) == 0.75);
  CHECK(t.predict(vec(t, {-3, 0})) == 2.5);
  CHECK(t.predict(vec(t, {kMissing, 0})) == 2.5);
}

TEST_CASE("set predicates and True fallthrough") {
  const std::string doc = replace(replace(kMinimalDocument,
      R"(<SimplePredicate field="price" operator="greaterThan" value="20"/>)",
      R"(<SimpleSetPredicate field="context" booleanOperator="isIn"><Array n="1" type="string">"search"</Array></SimpleSetPredicate>)"),
      R"(<SimplePredicate field="price" operator="lessOrEqual" value="20"/>)", "<True/>");
  auto t = from_pmml(doc);
  CHECK(t.predict(vec(t, {0, 1})) == 0.75);
  CHECK(t.predict(vec(t, {0, 0})) == 2.5);
}

TEST_CASE("unsupported constructs are named") {
  auto construct = [](const std::string& doc) -> std::string {
    try {
      from_pmml(doc);
    } catch (const UnsupportedConstruct& e) {
      return e.construct();
    }
    return "<accepted>";
  };
  const std::string base = kMinimalDocument;
  CHECK(construct(replace(base, "<TreeModel functionName=\"regression\"",
                          "<RandomForestModel/><TreeModel functionName=\"regression\"")) ==
        "RandomForestModel");
  CHECK(construct(replace(replace(base, "<TreeModel ", "<MiningModel><Segmentation/></MiningModel><TreeModel "),
                          "", "")) == "MiningModel");
  CHECK(construct(replace(base, "<True/>", "<CompoundPredicate booleanOperator=\"and\"/>")) ==
        "CompoundPredicate");
  CHECK(construct(replace(base, "operator=\"greaterThan\"", "operator=\"lessThan\"")) ==
        "SimplePredicate operator=lessThan");
  CHECK(construct(replace(base, "functionName=\"regression\"", "functionName=\"classification\"")) ==
        "TreeModel functionName=classification");
  CHECK(construct(replace(base, "missingValueStrategy=\"defaultChild\"",
                          "missingValueStrategy=\"weightedConfidence\"")) ==
        "TreeModel missingValueStrategy=weightedConfidence");
  CHECK(construct(replace(base, "<Header/>", "<Header><Extension/></Header>")) == "Extension");
  CHECK(construct(replace(base, "optype=\"continuous\"", "optype=\"ordinal\"")) == "DataField optype=ordinal");
}

TEST_CASE("malformed XML reports a location") {
  try {
    from_pmml("<PMML>\n  <Header>\n</PMML>\n");
    FAIL("accepted");
  } catch (const PmmlParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() == 3);
  }
  try {
    from_pmml("<PMML>\n<Header a=1/></PMML>");
    FAIL("accepted");
  } catch (const PmmlParseError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 11);
  }
  CHECK_THROWS_AS(from_pmml(""), PmmlParseError);
  CHECK_THROWS_AS(from_pmml("<PMML></PMML><PMML/>"), PmmlParseError);
  CHECK_THROWS_AS(from_pmml("<PMML a='&bogus;'/>"), PmmlParseError);
  // Well-formed but inconsistent.
  CHECK_THROWS_AS(from_pmml(replace(kMinimalDocument, "value=\"20\"/>\n      </Node>\n      <Node id=\"cheap\"",
                                    "value=\"21\"/>\n      </Node>\n      <Node id=\"cheap\"")),
                  InvalidModelDocument);
}

TEST_CASE("holdout residual report") {
  auto schema = std::make_shared<const FeatureSchema>(std::vector<FeatureDef>{{"x", FeatureKind::kNumeric, {}}});
  RegressionTree constant(schema, "t", {TreeNode{2.0, 5, std::nullopt, -1, -1, true}});
  TrainingSet holdout{schema, {{{0}, 1, 1}, {{1}, 2, 1}, {{2}, 4, 2}, {{3}, 7, 1}}};
  auto r = evaluate_holdout(constant, holdout);
  CHECK(r.count == 4);
  CHECK(r.total_weight == 5);
  CHECK(r.weighted_mae == doctest::Approx(2.0));   // (1 + 0 + 2*2 + 5) / 5
  CHECK(r.weighted_bias == doctest::Approx(-1.6)); // (1 + 0 - 4 - 5) / 5

  auto t = three_node_tree();
  TrainingSet perfect{t.schema_ptr(), {}};
  for (int i = 0; i < 37; ++i) perfect.rows.push_back({{double(i % 11)}, i % 11 <= 5 ? 1.5 : 4.0, 1.0 + i % 3});
  auto p = evaluate_holdout(t, perfect);
  CHECK(p.weighted_mae == 0);
  CHECK(p.weighted_bias == 0);
  size_t n = 0;
  double w = 0;
  for (const auto& d : p.deciles) {
    n += d.count;
    w += d.weight;
  }
  CHECK(n == 37);
  CHECK(w == p.total_weight);
  CHECK_THROWS_AS(evaluate_holdout(t, TrainingSet{t.schema_ptr(), {}}), InvalidArgument);
}

TEST_CASE("deciles follow weighted prediction quantiles") {
  auto schema = std::make_shared<const FeatureSchema>(std::vector<FeatureDef>{{"x", FeatureKind::kNumeric, {}}});
  // Identity-like tree is overkill; use 100 equal-weight rows over 10 leaves.
  std::vector<TreeNode> nodes;
  TrainingSet set{schema, {}};
  for (int i = 0; i < 100; ++i) set.rows.push_back({{double(i)}, double(i % 10), 1});
  auto tree = train_tree(set, {10, 1, 0});
  auto r = evaluate_holdout(tree, set);
  for (const auto& d : r.deciles) CHECK(d.count == 10);
  for (size_t i = 1; i < 10; ++i) CHECK(r.deciles[i].min_prediction >= r.deciles[i - 1].max_prediction);
}

TEST_CASE("model repository versions, activation and tamper detection") {
  TempDir tmp;
  auto t = three_node_tree();
  ModelManifest m;
  m.model_id = "epmi-tree";
  m.target = ModelTarget::kEpmi;
  m.training_window = {Date::parse("2015-01-01"), Date::parse("2015-03-31")};
  {
    ModelRepository repo(tmp.path);
    CHECK_THROWS_AS(repo.get_active(ModelTarget::kEpmi), NotFound);
    auto v1 = repo.save_model(t, m);
    auto v2 = repo.save_model(to_pmml(t), m);
    CHECK(v1.version == 1);
    CHECK(v2.version == 2);
    CHECK(v1.document_digest.size() == 64);
    CHECK(repo.get_active(ModelTarget::kEpmi).manifest.version == 1);  // first save activates
    repo.activate("epmi-tree", 2);
    CHECK(repo.get_active(ModelTarget::kEpmi).manifest.version == 2);
    repo.activate("epmi-tree", 1);
    auto active = repo.get_active(ModelTarget::kEpmi);
    CHECK(active.manifest.version == 1);
    CHECK(active.tree.predict(vec(active.tree, {7})) == 4.0);
    CHECK_THROWS_AS(repo.activate("epmi-tree", 3), NotFound);
    CHECK_THROWS_AS(repo.save_model("<PMML/>", m), InvalidModelDocument);
    ModelManifest other = m;
    other.target = ModelTarget::kCpe;
    CHECK_THROWS_AS(repo.save_model(t, other), InvalidArgument);
    other.model_id = "../escape";
    CHECK_THROWS_AS(repo.save_model(t, other), InvalidArgument);
  }
  {
    ModelRepository reopened(tmp.path);
    CHECK(reopened.list().size() == 2);
    CHECK(reopened.active_manifest(ModelTarget::kEpmi)->version == 1);
    CHECK(!reopened.active_manifest(ModelTarget::kNpe));
    std::ofstream(tmp.path / "epmi-tree" / "1.pmml", std::ios::app) << "<!-- edited -->";
    CHECK_THROWS_AS(reopened.get_active(ModelTarget::kEpmi), CorruptModel);
    CHECK(reopened.load("epmi-tree", 2).manifest.version == 2);
  }
}

TEST_CASE("sha256 known value") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
