#pragma once

// Hierarchical blueprint (taxonomy) model, parsing and queries.
//
// A blueprint is an ordered forest of named nodes. Level 1 is the set of
// roots; level k+1 holds the children of level-k nodes. Branches may end at
// different depths.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "blueprint/candidate.hpp"
#include "blueprint/error.hpp"
#include "blueprint/text.hpp"

namespace blueprint {

struct BlueprintNode {
  std::string name;
  std::optional<std::string> definition;
  std::vector<Exemplar> exemplars;
  std::vector<BlueprintNode> children;

  bool is_leaf() const noexcept { return children.empty(); }

  CandidateLabel as_candidate() const { return {name, definition, exemplars}; }

  friend bool operator==(const BlueprintNode&, const BlueprintNode&) = default;
};

/// Ordered node names from a root toward a descendant.
struct CategoryPath {
  std::vector<std::string> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  const std::string& operator[](std::size_t i) const { return labels[i]; }

  /// Prefix holding the first `n` labels.
  CategoryPath prefix(std::size_t n) const {
    return {{labels.begin(), labels.begin() + std::min(n, labels.size())}};
  }

  std::string str() const { return text::join(labels, " > "); }

  friend bool operator==(const CategoryPath&, const CategoryPath&) = default;
};

namespace detail {

inline const BlueprintNode* find_child(std::span<const BlueprintNode> nodes,
                                       std::string_view name) {
  for (const auto& n : nodes)
    if (n.name == name) return &n;
  for (const auto& n : nodes)
    if (text::iequals(n.name, name)) return &n;
  return nullptr;
}

inline std::size_t subtree_depth(const BlueprintNode& n) {
  std::size_t d = 0;
  for (const auto& c : n.children) d = std::max(d, subtree_depth(c));
  return d + 1;
}

inline void validate_siblings(std::span<const BlueprintNode> nodes,
                              const std::string& parent) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& node = nodes[i];
    auto where = parent.empty() ? std::string("top level") : "'" + parent + "'";
    auto trimmed = text::trim(node.name);
    if (trimmed.empty())
      throw ValidationError("empty node name under " + where);
    if (node.name.find_first_of("\r\n") != std::string::npos)
      throw ValidationError("node name '" + node.name + "' under " + where +
                            " contains a newline");
    for (std::size_t j = 0; j < i; ++j)
      if (text::iequals(nodes[j].name, node.name))
        throw ValidationError("duplicate sibling name '" + node.name +
                              "' (conflicts with '" + nodes[j].name +
                              "') under " + where);
    for (const auto& ex : node.exemplars) {
      if (ex.label != node.name)
        throw ValidationError("exemplar label '" + ex.label +
                              "' does not match node '" + node.name + "'");
      if (text::trim(ex.text).empty())
        throw ValidationError("empty exemplar text on node '" + node.name +
                              "'");
    }
    validate_siblings(node.children,
                      parent.empty() ? node.name : parent + " > " + node.name);
  }
}

}  // namespace detail

/// Immutable, validated taxonomy.
class Blueprint {
 public:
  Blueprint(std::string title, std::vector<BlueprintNode> roots,
            std::optional<std::size_t> declared_levels = std::nullopt)
      : title_(std::move(title)),
        roots_(std::move(roots)),
        declared_levels_(declared_levels) {
    if (roots_.empty()) throw ValidationError("blueprint has no root nodes");
    detail::validate_siblings(roots_, "");
    for (const auto& r : roots_) depth_ = std::max(depth_, detail::subtree_depth(r));
    if (declared_levels_) {
      if (*declared_levels_ == 0)
        throw ValidationError("declared levels must be positive");
      if (depth_ > *declared_levels_)
        throw ValidationError("blueprint depth " + std::to_string(depth_) +
                              " exceeds declared levels " +
                              std::to_string(*declared_levels_));
    }
  }

  const std::string& title() const noexcept { return title_; }
  std::span<const BlueprintNode> roots() const noexcept { return roots_; }
  std::optional<std::size_t> declared_levels() const noexcept {
    return declared_levels_;
  }

  /// Length of the longest root-to-leaf path.
  std::size_t depth() const noexcept { return depth_; }

  /// Node addressed by `path`; nullptr for the empty path or an invalid one.
  const BlueprintNode* find(const CategoryPath& path) const {
    std::span<const BlueprintNode> level = roots_;
    const BlueprintNode* node = nullptr;
    for (const auto& label : path.labels) {
      node = detail::find_child(level, label);
      if (!node) return nullptr;
      level = node->children;
    }
    return node;
  }

  bool is_valid(const CategoryPath& path) const {
    return path.empty() || find(path) != nullptr;
  }

  /// Nodes one level below `path` (the roots for the empty path).
  std::span<const BlueprintNode> child_nodes(const CategoryPath& path) const {
    if (path.empty()) return roots_;
    const auto* node = find(path);
    if (!node)
      throw ValidationError("path '" + path.str() + "' is not in the blueprint");
    return node->children;
  }

  /// Same path with every label replaced by the blueprint's spelling.
  CategoryPath canonical(const CategoryPath& path) const {
    CategoryPath out;
    std::span<const BlueprintNode> level = roots_;
    for (const auto& label : path.labels) {
      const auto* node = detail::find_child(level, label);
      if (!node)
        throw ValidationError("path '" + path.str() +
                              "' is not in the blueprint");
      out.labels.push_back(node->name);
      level = node->children;
    }
    return out;
  }

  std::vector<std::string> labels_at_level(std::size_t k) const {
    if (k < 1 || k > depth_)
      throw std::out_of_range("level " + std::to_string(k) +
                              " outside 1.." + std::to_string(depth_));
    std::vector<std::string> out;
    collect(roots_, 1, k, out);
    return out;
  }

  std::vector<CandidateLabel> children_of(const CategoryPath& path) const {
    std::vector<CandidateLabel> out;
    for (const auto& n : child_nodes(path)) out.push_back(n.as_candidate());
    return out;
  }

  friend bool operator==(const Blueprint&, const Blueprint&) = default;

 private:
  static void collect(std::span<const BlueprintNode> nodes, std::size_t level,
                      std::size_t k, std::vector<std::string>& out) {
    for (const auto& n : nodes) {
      if (level == k)
        out.push_back(n.name);
      else
        collect(n.children, level + 1, k, out);
    }
  }

  std::string title_;
  std::vector<BlueprintNode> roots_;
  std::optional<std::size_t> declared_levels_;
  std::size_t depth_ = 0;
};

inline std::size_t depth(const Blueprint& bp) noexcept { return bp.depth(); }

inline std::vector<std::string> labels_at_level(const Blueprint& bp,
                                                std::size_t k) {
  return bp.labels_at_level(k);
}

inline std::vector<CandidateLabel> children_of(const Blueprint& bp,
                                               const CategoryPath& path) {
  return bp.children_of(path);
}

// ---------------------------------------------------------------------------
// Document format
//
// Full form:
//   {"title": "...", "levels": 3, "roots": [node, ...]}
//   node = {"name": "...", "definition": "...",
//           "exemplars": [{"text": "..."}, ...], "children": [node, ...]}
// A bare list of nodes is also accepted. Any other top-level mapping is read
// as the nested-dictionary form: {"Animal": {"Mammal": {"Dog": {}}}}.
// JSON and YAML are both accepted; YAML flow style also admits the
// single-quoted dictionary literal.
// ---------------------------------------------------------------------------

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline ordered_json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return n.Scalar();
    case YAML::NodeType::Sequence: {
      auto arr = ordered_json::array();
      for (const auto& item : n) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      auto obj = ordered_json::object();
      for (const auto& kv : n) {
        auto key = kv.first.as<std::string>();
        if (obj.contains(key))
          throw ParseError("duplicate mapping key '" + key + "'");
        obj[key] = yaml_to_json(kv.second);
      }
      return obj;
    }
  }
  return nullptr;
}

inline std::string require_string(const ordered_json& j, std::string_view what) {
  if (!j.is_string())
    throw ParseError(std::string(what) + " must be a string");
  return j.get<std::string>();
}

inline BlueprintNode node_from_full(const ordered_json& j) {
  if (!j.is_object()) throw ParseError("blueprint node must be a mapping");
  BlueprintNode node;
  if (!j.contains("name")) throw ParseError("blueprint node without 'name'");
  for (const auto& [key, value] : j.items()) {
    if (key == "name") {
      node.name = require_string(value, "node name");
    } else if (key == "definition") {
      if (!value.is_null())
        node.definition = require_string(value, "definition");
    } else if (key == "exemplars") {
      if (value.is_null()) continue;
      if (!value.is_array()) throw ParseError("'exemplars' must be a list");
      for (const auto& ex : value) {
        Exemplar e;
        if (ex.is_string()) {
          e.text = ex.get<std::string>();
        } else if (ex.is_object() && ex.contains("text")) {
          e.text = require_string(ex["text"], "exemplar text");
          if (ex.contains("label"))
            e.label = require_string(ex["label"], "exemplar label");
        } else {
          throw ParseError("exemplar must be a string or {\"text\": ...}");
        }
        node.exemplars.push_back(std::move(e));
      }
    } else if (key == "children") {
      if (value.is_null()) continue;
      if (!value.is_array()) throw ParseError("'children' must be a list");
      for (const auto& c : value) node.children.push_back(node_from_full(c));
    } else {
      throw ParseError("unknown node field '" + key + "'");
    }
  }
  for (auto& e : node.exemplars)
    if (e.label.empty()) e.label = node.name;
  return node;
}

inline std::vector<BlueprintNode> nodes_from_dict(const ordered_json& j) {
  std::vector<BlueprintNode> out;
  if (j.is_null()) return out;
  if (!j.is_object())
    throw ParseError("nested-dictionary blueprint values must be mappings");
  for (const auto& [key, value] : j.items()) {
    BlueprintNode node;
    node.name = key;
    node.children = nodes_from_dict(value);
    out.push_back(std::move(node));
  }
  return out;
}

inline std::optional<std::size_t> parse_levels(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  long long v = 0;
  if (j.is_number_integer()) {
    v = j.get<long long>();
  } else if (j.is_string()) {
    try {
      std::size_t used = 0;
      v = std::stoll(j.get<std::string>(), &used);
      if (used != j.get<std::string>().size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError("'levels' must be a positive integer");
    }
  } else {
    throw ParseError("'levels' must be a positive integer");
  }
  if (v <= 0) throw ParseError("'levels' must be a positive integer");
  return static_cast<std::size_t>(v);
}

inline ordered_json load_tree(std::string_view source) {
  auto first = source.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw ParseError("empty blueprint document");
  std::string json_error;
  if (source[first] == '{' || source[first] == '[') {
    try {
      return ordered_json::parse(source);
    } catch (const nlohmann::json::parse_error& e) {
      json_error = e.what();
    }
  }
  try {
    return yaml_to_json(YAML::Load(std::string(source)));
  } catch (const YAML::Exception& e) {
    throw ParseError("malformed blueprint document: " +
                     (json_error.empty() ? std::string(e.what()) : json_error));
  }
}

}  // namespace detail

/// Parses a blueprint document (JSON or YAML, full or nested-dictionary form).
inline Blueprint parse_blueprint(std::string_view source) {
  auto doc = detail::load_tree(source);
  std::string title;
  std::optional<std::size_t> levels;
  std::vector<BlueprintNode> roots;
  if (doc.is_array()) {
    for (const auto& n : doc) roots.push_back(detail::node_from_full(n));
  } else if (doc.is_object() && doc.contains("roots")) {
    for (const auto& [key, value] : doc.items()) {
      if (key == "title") {
        if (!value.is_null()) title = detail::require_string(value, "title");
      } else if (key == "levels") {
        levels = detail::parse_levels(value);
      } else if (key == "roots") {
        if (!value.is_array()) throw ParseError("'roots' must be a list");
        for (const auto& n : value) roots.push_back(detail::node_from_full(n));
      } else {
        throw ParseError("unknown top-level field '" + key + "'");
      }
    }
  } else if (doc.is_object()) {
    roots = detail::nodes_from_dict(doc);
  } else {
    throw ParseError("blueprint document must be a mapping or a list");
  }
  return Blueprint(std::move(title), std::move(roots), levels);
}

inline Blueprint load_blueprint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ParseError("cannot open blueprint file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_blueprint(ss.str());
}

inline ordered_json to_json(const BlueprintNode& n) {
  ordered_json j;
  j["name"] = n.name;
  if (n.definition) j["definition"] = *n.definition;
  if (!n.exemplars.empty()) {
    auto arr = ordered_json::array();
    for (const auto& e : n.exemplars) arr.push_back({{"text", e.text}});
    j["exemplars"] = std::move(arr);
  }
  if (!n.children.empty()) {
    auto arr = ordered_json::array();
    for (const auto& c : n.children) arr.push_back(to_json(c));
    j["children"] = std::move(arr);
  }
  return j;
}

inline ordered_json to_json(const Blueprint& bp) {
  ordered_json j;
  j["title"] = bp.title();
  if (bp.declared_levels()) j["levels"] = *bp.declared_levels();
  auto roots = ordered_json::array();
  for (const auto& r : bp.roots()) roots.push_back(to_json(r));
  j["roots"] = std::move(roots);
  return j;
}

/// Full-form JSON document; parse_blueprint reads it back unchanged.
inline std::string serialize_blueprint(const Blueprint& bp) {
  return to_json(bp).dump(2) + "\n";
}

}  // namespace blueprint
