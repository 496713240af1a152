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
#include "agilerec/pmml.hpp"

#include <functional>
#include <set>
#include <sstream>

#include "xml.hpp"

namespace agilerec {

namespace {

const std::set<std::string_view> kAllowedElements{
    "PMML",       "Header",      "DataDictionary", "DataField",       "Value",
    "TreeModel",  "MiningSchema", "MiningField",   "Node",            "True",
    "SimplePredicate", "SimpleSetPredicate",       "Array"};

void indent(std::ostream& out, int depth) {
  for (int i = 0; i < depth; ++i) out << "  ";
}

std::string quote_array_item(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

void write_mask(std::ostream& out, const FeatureDef& def, uint32_t mask, int depth) {
  std::vector<std::string> items;
  for (size_t c = 0; c < def.categories.size(); ++c) {
    if ((mask >> c) & 1u) items.push_back(quote_array_item(def.categories[c]));
  }
  indent(out, depth);
  out << "<SimpleSetPredicate field=\"" << xml::escape(def.name) << "\" booleanOperator=\"isIn\">\n";
  indent(out, depth + 1);
  out << "<Array n=\"" << items.size() << "\" type=\"string\">";
  for (size_t i = 0; i < items.size(); ++i) out << (i ? " " : "") << xml::escape(items[i]);
  out << "</Array>\n";
  indent(out, depth);
  out << "</SimpleSetPredicate>\n";
}

void write_node(std::ostream& out, const RegressionTree& tree, size_t i, int depth,
                const std::function<void(int)>& predicate) {
  const TreeNode& n = tree.nodes()[i];
  indent(out, depth);
  out << "<Node id=\"" << i << "\" score=\"" << format_double(n.prediction) << "\" recordCount=\""
      << format_double(n.weight) << "\"";
  if (!n.is_leaf()) out << " defaultChild=\"" << (n.default_left ? n.left : n.right) << "\"";
  out << ">\n";
  predicate(depth + 1);
  if (!n.is_leaf()) {
    const TreeSplit& s = *n.split;
    const FeatureDef& def = tree.schema()[s.feature];
    if (def.kind == FeatureKind::kNumeric) {
      const std::string field = xml::escape(def.name);
      const std::string value = format_double(s.threshold);
      write_node(out, tree, static_cast<size_t>(n.left), depth + 1, [&](int d) {
        indent(out, d);
        out << "<SimplePredicate field=\"" << field << "\" operator=\"lessOrEqual\" value=\"" << value
            << "\"/>\n";
      });
      write_node(out, tree, static_cast<size_t>(n.right), depth + 1, [&](int d) {
        indent(out, d);
        out << "<SimplePredicate field=\"" << field << "\" operator=\"greaterThan\" value=\"" << value
            << "\"/>\n";
      });
    } else {
      write_node(out, tree, static_cast<size_t>(n.left), depth + 1,
                 [&](int d) { write_mask(out, def, s.left_categories, d); });
      write_node(out, tree, static_cast<size_t>(n.right), depth + 1,
                 [&](int d) { write_mask(out, def, s.right_categories, d); });
    }
  }
  indent(out, depth);
  out << "</Node>\n";
}

// ---- reading ----

void check_elements(const xml::Element& e) {
  if (!kAllowedElements.count(e.name)) throw UnsupportedConstruct(e.name);
  for (const auto& c : e.children) check_elements(c);
}

const std::string& required(const xml::Element& e, std::string_view key) {
  const std::string* v = e.attribute(key);
  if (!v) {
    throw InvalidModelDocument("<" + e.name + "> at line " + std::to_string(e.line) +
                               " is missing attribute " + std::string(key));
  }
  return *v;
}

double number(const xml::Element& e, std::string_view key) {
  const std::string& v = required(e, key);
  try {
    return parse_double(v);
  } catch (const InvalidArgument&) {
    throw InvalidModelDocument("<" + e.name + "> at line " + std::to_string(e.line) + ": " +
                               std::string(key) + "=\"" + v + "\" is not a number");
  }
}

std::vector<const xml::Element*> children_named(const xml::Element& e, std::string_view name) {
  std::vector<const xml::Element*> out;
  for (const auto& c : e.children) {
    if (c.name == name) out.push_back(&c);
  }
  return out;
}

const xml::Element& only_child(const xml::Element& e, std::string_view name) {
  auto v = children_named(e, name);
  if (v.size() != 1) {
    throw InvalidModelDocument("<" + e.name + "> must contain exactly one <" + std::string(name) + ">");
  }
  return *v[0];
}

std::vector<std::string> array_items(const xml::Element& array) {
  if (const auto* type = array.attribute("type"); type && *type != "string" && *type != "int" &&
                                                  *type != "real") {
    throw UnsupportedConstruct("Array type=" + *type);
  }
  std::vector<std::string> items;
  const std::string& s = array.text;
  size_t i = 0;
  while (i < s.size()) {
    if (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r') {
      ++i;
      continue;
    }
    std::string item;
    if (s[i] == '"') {
      ++i;
      for (;; ++i) {
        if (i >= s.size()) throw InvalidModelDocument("unterminated quoted Array item");
        if (s[i] == '\\' && i + 1 < s.size()) {
          item += s[++i];
        } else if (s[i] == '"') {
          ++i;
          break;
        } else {
          item += s[i];
        }
      }
    } else {
      while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\n' && s[i] != '\r') item += s[i++];
    }
    items.push_back(std::move(item));
  }
  if (const auto* n = array.attribute("n"); n && *n != std::to_string(items.size())) {
    throw InvalidModelDocument("Array n=" + *n + " but " + std::to_string(items.size()) + " items");
  }
  return items;
}

struct Predicate {
  enum Kind { kTrue, kLessOrEqual, kGreaterThan, kInSet } kind = kTrue;
  size_t feature = 0;
  double value = 0;
  uint32_t mask = 0;
};

class TreeReader {
 public:
  TreeReader(const FeatureSchema& schema) : schema_(schema) {}

  std::vector<TreeNode> read(const xml::Element& root) {
    const auto& [pred, kids] = split_node(root);
    if (pred.kind != Predicate::kTrue) throw InvalidModelDocument("root Node predicate must be <True/>");
    node(root, kids);
    return std::move(nodes_);
  }

 private:
  size_t feature_index(const xml::Element& e) const {
    const std::string& field = required(e, "field");
    auto i = schema_.index_of(field);
    if (!i) throw InvalidModelDocument("predicate on unknown field '" + field + "'");
    return *i;
  }

  uint32_t category_bit(size_t f, const std::string& value) const {
    auto c = schema_.category_index(f, value);
    if (!c) {
      throw InvalidModelDocument("'" + value + "' is not a category of '" + schema_[f].name + "'");
    }
    if (*c >= kMaxSplitCategories) throw UnsupportedConstruct("split on more than 32 categories");
    return 1u << *c;
  }

  Predicate predicate(const xml::Element& e) const {
    Predicate p;
    if (e.name == "True") return p;
    p.feature = feature_index(e);
    const bool categorical = schema_[p.feature].kind == FeatureKind::kCategorical;
    if (e.name == "SimplePredicate") {
      const std::string& op = required(e, "operator");
      if (op == "equal") {
        if (!categorical) throw UnsupportedConstruct("SimplePredicate operator=equal on a continuous field");
        p.kind = Predicate::kInSet;
        p.mask = category_bit(p.feature, required(e, "value"));
        return p;
      }
      if (op != "lessOrEqual" && op != "greaterThan") throw UnsupportedConstruct("SimplePredicate operator=" + op);
      if (categorical) throw InvalidModelDocument("operator " + op + " on categorical field");
      p.kind = op == "lessOrEqual" ? Predicate::kLessOrEqual : Predicate::kGreaterThan;
      p.value = number(e, "value");
      return p;
    }
    // SimpleSetPredicate
    const std::string& op = required(e, "booleanOperator");
    if (op != "isIn") throw UnsupportedConstruct("SimpleSetPredicate booleanOperator=" + op);
    if (!categorical) throw InvalidModelDocument("set predicate on continuous field");
    p.kind = Predicate::kInSet;
    for (const auto& item : array_items(only_child(e, "Array"))) p.mask |= category_bit(p.feature, item);
    return p;
  }

  std::pair<Predicate, std::vector<const xml::Element*>> split_node(const xml::Element& e) const {
    const xml::Element* pred = nullptr;
    std::vector<const xml::Element*> kids;
    for (const auto& c : e.children) {
      if (c.name == "Node") {
        kids.push_back(&c);
      } else if (c.name == "True" || c.name == "SimplePredicate" || c.name == "SimpleSetPredicate") {
        if (pred || !kids.empty()) throw InvalidModelDocument("Node must start with exactly one predicate");
        pred = &c;
      } else {
        throw InvalidModelDocument("<" + c.name + "> inside <Node>");
      }
    }
    if (!pred) throw InvalidModelDocument("Node at line " + std::to_string(e.line) + " has no predicate");
    return {predicate(*pred), kids};
  }

  int32_t node(const xml::Element& e, const std::vector<const xml::Element*>& kids) {
    const auto id = static_cast<int32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_[id].prediction = number(e, "score");
    nodes_[id].weight = e.attribute("recordCount") ? number(e, "recordCount") : 0.0;
    if (kids.empty()) return id;
    if (kids.size() != 2) {
      throw UnsupportedConstruct("Node with " + std::to_string(kids.size()) + " children");
    }
    auto [p0, k0] = split_node(*kids[0]);
    auto [p1, k1] = split_node(*kids[1]);
    const xml::Element* left = kids[0];
    const xml::Element* right = kids[1];
    auto* left_kids = &k0;
    auto* right_kids = &k1;

    TreeSplit split;
    auto bad = [&] { return InvalidModelDocument("Node at line " + std::to_string(e.line) +
                                                 " has children with non-complementary predicates"); };
    if (p0.kind == Predicate::kGreaterThan) {
      std::swap(p0, p1);
      std::swap(left, right);
      std::swap(left_kids, right_kids);
      if (p0.kind == Predicate::kTrue) {
        // (greaterThan, True): the True child takes x <= v.
        p0 = p1;
        p0.kind = Predicate::kLessOrEqual;
      }
    }
    if (p0.kind == Predicate::kLessOrEqual) {
      const bool complement = p1.kind == Predicate::kTrue ||
                              (p1.kind == Predicate::kGreaterThan && p1.feature == p0.feature &&
                               p1.value == p0.value);
      if (!complement) throw bad();
      split.feature = p0.feature;
      split.threshold = p0.value;
    } else if (p0.kind == Predicate::kInSet) {
      split.feature = p0.feature;
      split.left_categories = p0.mask;
      if (p1.kind == Predicate::kTrue) {
        const size_t k = schema_[p0.feature].categories.size();
        const uint32_t all = k >= 32 ? 0xFFFFFFFFu : ((1u << k) - 1);
        split.right_categories = all & ~p0.mask;
      } else if (p1.kind == Predicate::kInSet && p1.feature == p0.feature && !(p1.mask & p0.mask)) {
        split.right_categories = p1.mask;
      } else {
        throw bad();
      }
    } else {
      throw bad();
    }

    nodes_[id].split = split;
    const std::string* def = e.attribute("defaultChild");
    if (def) {
      const std::string* lid = left->attribute("id");
      const std::string* rid = right->attribute("id");
      if (lid && *lid == *def) {
        nodes_[id].default_left = true;
      } else if (rid && *rid == *def) {
        nodes_[id].default_left = false;
      } else {
        throw InvalidModelDocument("defaultChild=\"" + *def + "\" names no child");
      }
    }
    const int32_t l = node(*left, *left_kids);
    const int32_t r = node(*right, *right_kids);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  const FeatureSchema& schema_;
  std::vector<TreeNode> nodes_;
};

void check_attribute(const xml::Element& e, std::string_view key, std::string_view expected) {
  const std::string* v = e.attribute(key);
  if (v && *v != expected) throw UnsupportedConstruct(e.name + " " + std::string(key) + "=" + *v);
}

}  // namespace

std::string to_pmml(const RegressionTree& tree, const ModelManifest* manifest) {
  std::ostringstream out;
  const auto& schema = tree.schema();
  // The target shares the DataDictionary namespace with the features.
  if (schema.index_of(tree.target_name())) {
    throw InvalidArgument("target name '" + tree.target_name() + "' collides with a feature");
  }
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<PMML xmlns=\"http://www.dmg.org/PMML-4_2\" version=\"4.2\">\n";
  out << "  <Header copyright=\"agilerec\"";
  if (manifest) {
    std::ostringstream d;
    d << "model_id=" << manifest->model_id << "; target=" << to_string(manifest->target)
      << "; version=" << manifest->version << "; created_at=" << manifest->created_at
      << "; training_window=" << manifest->training_window.from.to_string() << ".."
      << manifest->training_window.to.to_string();
    out << " description=\"" << xml::escape(d.str()) << "\"";
  }
  out << "/>\n";
  out << "  <DataDictionary numberOfFields=\"" << schema.size() + 1 << "\">\n";
  for (const auto& f : schema.features()) {
    if (f.kind == FeatureKind::kNumeric) {
      out << "    <DataField name=\"" << xml::escape(f.name)
          << "\" optype=\"continuous\" dataType=\"double\"/>\n";
    } else {
      out << "    <DataField name=\"" << xml::escape(f.name)
          << "\" optype=\"categorical\" dataType=\"string\">\n";
      for (const auto& c : f.categories) out << "      <Value value=\"" << xml::escape(c) << "\"/>\n";
      out << "    </DataField>\n";
    }
  }
  out << "    <DataField name=\"" << xml::escape(tree.target_name())
      << "\" optype=\"continuous\" dataType=\"double\"/>\n";
  out << "  </DataDictionary>\n";
  out << "  <TreeModel";
  if (manifest) out << " modelName=\"" << xml::escape(manifest->model_id) << "\"";
  out << " functionName=\"regression\" splitCharacteristic=\"binarySplit\""
         " missingValueStrategy=\"defaultChild\" noTrueChildStrategy=\"returnLastPrediction\">\n";
  out << "    <MiningSchema>\n";
  for (const auto& f : schema.features()) out << "      <MiningField name=\"" << xml::escape(f.name) << "\"/>\n";
  out << "      <MiningField name=\"" << xml::escape(tree.target_name()) << "\" usageType=\"target\"/>\n";
  out << "    </MiningSchema>\n";
  write_node(out, tree, 0, 2, [&](int d) {
    indent(out, d);
    out << "<True/>\n";
  });
  out << "  </TreeModel>\n";
  out << "</PMML>\n";
  return out.str();
}

RegressionTree from_pmml(std::string_view document) {
  const xml::Element root = xml::parse(document);
  check_elements(root);
  if (root.name != "PMML") throw InvalidModelDocument("root element must be <PMML>");

  const xml::Element& dict = only_child(root, "DataDictionary");
  const xml::Element& model = only_child(root, "TreeModel");
  for (const auto& c : root.children) {
    if (c.name != "Header" && c.name != "DataDictionary" && c.name != "TreeModel") {
      throw InvalidModelDocument("<" + c.name + "> directly inside <PMML>");
    }
  }
  if (required(model, "functionName") != "regression") {
    throw UnsupportedConstruct("TreeModel functionName=" + required(model, "functionName"));
  }
  check_attribute(model, "missingValueStrategy", "defaultChild");
  check_attribute(model, "noTrueChildStrategy", "returnLastPrediction");
  check_attribute(model, "splitCharacteristic", "binarySplit");

  std::string target;
  if (auto ms = children_named(model, "MiningSchema"); !ms.empty()) {
    if (ms.size() > 1) throw InvalidModelDocument("more than one <MiningSchema>");
    for (const auto& f : ms[0]->children) {
      if (f.name != "MiningField") throw InvalidModelDocument("<" + f.name + "> inside <MiningSchema>");
      const std::string* usage = f.attribute("usageType");
      if (!usage || *usage == "active") continue;
      if (*usage != "target" && *usage != "predicted") throw UnsupportedConstruct("MiningField usageType=" + *usage);
      if (!target.empty()) throw InvalidModelDocument("more than one target field");
      target = required(f, "name");
    }
  }

  std::vector<FeatureDef> defs;
  bool target_declared = false;
  for (const auto& c : dict.children) {
    if (c.name != "DataField") throw InvalidModelDocument("<" + c.name + "> inside <DataDictionary>");
    const std::string& name = required(c, "name");
    const std::string& optype = required(c, "optype");
    if (optype != "continuous" && optype != "categorical") throw UnsupportedConstruct("DataField optype=" + optype);
    if (name == target) {
      target_declared = true;
      continue;
    }
    FeatureDef def;
    def.name = name;
    def.kind = optype == "continuous" ? FeatureKind::kNumeric : FeatureKind::kCategorical;
    for (const auto& v : c.children) {
      if (v.name != "Value") throw InvalidModelDocument("<" + v.name + "> inside <DataField>");
      if (def.kind == FeatureKind::kNumeric) throw InvalidModelDocument("continuous field with <Value>");
      check_attribute(v, "property", "valid");
      def.categories.push_back(required(v, "value"));
    }
    defs.push_back(std::move(def));
  }
  if (!target.empty() && !target_declared) {
    throw InvalidModelDocument("target field '" + target + "' is not in the DataDictionary");
  }
  auto schema = std::make_shared<const FeatureSchema>(std::move(defs));

  std::vector<const xml::Element*> top;
  for (const auto& c : model.children) {
    if (c.name == "Node") {
      top.push_back(&c);
    } else if (c.name != "MiningSchema") {
      throw InvalidModelDocument("<" + c.name + "> directly inside <TreeModel>");
    }
  }
  if (top.size() != 1) throw InvalidModelDocument("TreeModel must have exactly one root Node");
  TreeReader reader(*schema);
  auto nodes = reader.read(*top[0]);
  return RegressionTree(schema, target.empty() ? "prediction" : target, std::move(nodes));
}

}  // namespace agilerec
