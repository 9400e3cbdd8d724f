#include "sxgeo/tree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sxgeo/error.hpp"

namespace sxgeo {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double focal_distance(const GaussianSplit& g) {
  return std::hypot(g.f1[0] - g.f2[0], g.f1[1] - g.f2[1]);
}

}  // namespace

void validate_rule(const SplitRule& rule, Index p, const LocIndex& loc_idx) {
  std::visit(Overloaded{
                 [&](const AxisSplit& a) {
                   if (a.feature >= p) throw ParameterError("axis split feature out of range");
                   if (!std::isfinite(a.threshold)) throw ParameterError("axis split threshold is not finite");
                 },
                 [&](const ObliqueSplit& o) {
                   if (!std::isfinite(o.w1) || !std::isfinite(o.w2) || !std::isfinite(o.threshold)) {
                     throw ParameterError("oblique split parameters must be finite");
                   }
                   if (o.w1 == 0.0 && o.w2 == 0.0) throw ParameterError("oblique split weights are both zero");
                 },
                 [&](const GaussianSplit& g) {
                   for (double v : {g.f1[0], g.f1[1], g.f2[0], g.f2[1], g.c}) {
                     if (!std::isfinite(v)) throw ParameterError("gaussian split parameters must be finite");
                   }
                   if (g.c < focal_distance(g)) throw ParameterError("gaussian split c is below the focal distance");
                 },
             },
             rule);
  if (uses_locations(rule) && (loc_idx[0] >= p || loc_idx[1] >= p)) {
    throw ParameterError("locational split without valid locational columns");
  }
}

bool uses_locations(const SplitRule& rule) { return !std::holds_alternative<AxisSplit>(rule); }

std::string rule_kind(const SplitRule& rule) {
  return std::visit(Overloaded{[](const AxisSplit&) { return std::string("axis"); },
                               [](const ObliqueSplit&) { return std::string("oblique"); },
                               [](const GaussianSplit&) { return std::string("gaussian"); }},
                    rule);
}

bool goes_left_xy(const SplitRule& rule, double x, double y) {
  if (const auto* o = std::get_if<ObliqueSplit>(&rule)) return o->w1 * x + o->w2 * y <= o->threshold;
  if (const auto* g = std::get_if<GaussianSplit>(&rule)) {
    const double d1 = std::hypot(x - g->f1[0], y - g->f1[1]);
    const double d2 = std::hypot(x - g->f2[0], y - g->f2[1]);
    return d1 + d2 <= g->c;
  }
  throw ParameterError("goes_left_xy called with an axis split");
}

bool goes_left(const SplitRule& rule, std::span<const double> row, const LocIndex& loc_idx) {
  if (const auto* a = std::get_if<AxisSplit>(&rule)) return row[a->feature] <= a->threshold;
  return goes_left_xy(rule, row[loc_idx[0]], row[loc_idx[1]]);
}

GeoTree GeoTree::constant(Index p, LocIndex loc_idx, double value, Index count) {
  GeoTree t(p, loc_idx);
  TreeNode leaf;
  leaf.value = value;
  leaf.count = count;
  t.add_node(leaf);
  return t;
}

int GeoTree::add_node(TreeNode node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

std::pair<int, int> GeoTree::split_leaf(int id, const SplitRule& rule, double left_value, Index left_count,
                                        double right_value, Index right_count) {
  if (!is_leaf(id)) throw ParameterError("node " + std::to_string(id) + " is already split");
  validate_rule(rule, p_, loc_idx_);
  const int depth = node(id).depth + 1;
  TreeNode l;
  l.value = left_value;
  l.count = left_count;
  l.depth = depth;
  l.parent = id;
  TreeNode r = l;
  r.value = right_value;
  r.count = right_count;
  const int li = add_node(l);
  const int ri = add_node(r);
  auto& n = nodes_[static_cast<std::size_t>(id)];
  n.rule = rule;
  n.left = li;
  n.right = ri;
  return {li, ri};
}

int GeoTree::leaf_of(std::span<const double> row) const {
  int id = 0;
  while (true) {
    const TreeNode& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.rule) return id;
    id = goes_left(*n.rule, row, loc_idx_) ? n.left : n.right;
  }
}

double GeoTree::predict_row(std::span<const double> row) const {
  return nodes_[static_cast<std::size_t>(leaf_of(row))].value;
}

Vector GeoTree::predict(const RowMatrix& rows) const {
  if (static_cast<Index>(rows.cols()) != p_) {
    throw ShapeError("model expects " + std::to_string(p_) + " features, got " + std::to_string(rows.cols()));
  }
  Vector out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out[i] = predict_row({rows.data() + i * rows.cols(), static_cast<std::size_t>(rows.cols())});
  }
  return out;
}

std::vector<int> GeoTree::leaves() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].rule) out.push_back(static_cast<int>(i));
  }
  return out;
}

int GeoTree::depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

std::vector<std::pair<int, Side>> GeoTree::path_to(int id) const {
  std::vector<std::pair<int, Side>> path;
  int child = id;
  int parent = node(id).parent;
  while (parent >= 0) {
    const TreeNode& pn = node(parent);
    path.emplace_back(parent, pn.left == child ? Side::kLeft : Side::kRight);
    child = parent;
    parent = pn.parent;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

// ---------------------------------------------------------------------------
// Model document

using nlohmann::json;

std::string serialize(const GeoTree& tree) {
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["n_features"] = tree.p();
  doc["loc_idx"] = {tree.loc_idx()[0], tree.loc_idx()[1]};
  doc["feature_names"] = tree.feature_names;
  json cfg = json::object();
  for (const auto& [k, v] : tree.config) cfg[k] = v;
  doc["config"] = cfg;
  json scales = json::array();
  for (const auto& s : tree.standardization) scales.push_back({{"mean", s.mean}, {"std", s.std}});
  doc["standardization"] = scales;
  json nodes = json::array();
  for (const auto& n : tree.nodes()) {
    json jn;
    jn["count"] = n.count;
    if (!n.rule) {
      jn["kind"] = "leaf";
      jn["value"] = n.value;
    } else {
      jn["kind"] = rule_kind(*n.rule);
      std::visit(Overloaded{
                     [&](const AxisSplit& a) {
                       jn["feature"] = a.feature;
                       jn["threshold"] = a.threshold;
                     },
                     [&](const ObliqueSplit& o) {
                       jn["w1"] = o.w1;
                       jn["w2"] = o.w2;
                       jn["threshold"] = o.threshold;
                     },
                     [&](const GaussianSplit& g) {
                       jn["f1"] = {g.f1[0], g.f1[1]};
                       jn["f2"] = {g.f2[0], g.f2[1]};
                       jn["c"] = g.c;
                     },
                 },
                 *n.rule);
      jn["left"] = n.left;
      jn["right"] = n.right;
      jn["value"] = n.value;
    }
    nodes.push_back(jn);
  }
  doc["nodes"] = nodes;
  return doc.dump(2) + "\n";
}

namespace {

const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) throw FormatError(path + "." + key + " is missing");
  return obj.at(key);
}

double number(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number()) throw FormatError(path + "." + key + " must be a number");
  return v.get<double>();
}

Index count(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw FormatError(path + "." + key + " must be a nonnegative integer");
  }
  return v.get<Index>();
}

std::array<double, 2> point(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw FormatError(path + "." + key + " must be a 2-element numeric array");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

GeoTree deserialize(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("$: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("$ must be an object");
  const auto version = count(doc, "format_version", "$");
  if (version != static_cast<Index>(kModelFormatVersion)) {
    throw FormatError("$.format_version " + std::to_string(version) + " is not supported");
  }
  const Index p = count(doc, "n_features", "$");
  const json& loc = field(doc, "loc_idx", "$");
  if (!loc.is_array() || loc.size() != 2 || !loc[0].is_number_unsigned() || !loc[1].is_number_unsigned()) {
    throw FormatError("$.loc_idx must be two nonnegative integers");
  }
  GeoTree tree(p, {loc[0].get<Index>(), loc[1].get<Index>()});
  if (doc.contains("feature_names")) {
    const json& names = doc["feature_names"];
    if (!names.is_array()) throw FormatError("$.feature_names must be an array");
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (!names[k].is_string()) throw FormatError("$.feature_names[" + std::to_string(k) + "] must be a string");
      tree.feature_names.push_back(names[k].get<std::string>());
    }
  }
  if (doc.contains("config")) {
    const json& cfg = doc["config"];
    if (!cfg.is_object()) throw FormatError("$.config must be an object");
    for (const auto& [k, v] : cfg.items()) tree.config[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  if (doc.contains("standardization")) {
    const json& scales = doc["standardization"];
    if (!scales.is_array()) throw FormatError("$.standardization must be an array");
    for (std::size_t k = 0; k < scales.size(); ++k) {
      const std::string path = "$.standardization[" + std::to_string(k) + "]";
      tree.standardization.push_back({number(scales[k], "mean", path), number(scales[k], "std", path)});
    }
    if (!tree.standardization.empty() && tree.standardization.size() != p) {
      throw FormatError("$.standardization must have n_features entries");
    }
  }

  const json& nodes = field(doc, "nodes", "$");
  if (!nodes.is_array() || nodes.empty()) throw FormatError("$.nodes must be a nonempty array");
  const auto n_nodes = static_cast<int>(nodes.size());
  std::vector<TreeNode> parsed(nodes.size());
  for (int i = 0; i < n_nodes; ++i) {
    const std::string path = "$.nodes[" + std::to_string(i) + "]";
    const json& jn = nodes[static_cast<std::size_t>(i)];
    const json& kind_field = field(jn, "kind", path);
    if (!kind_field.is_string()) throw FormatError(path + ".kind must be a string");
    const std::string kind = kind_field.get<std::string>();
    TreeNode& n = parsed[static_cast<std::size_t>(i)];
    n.count = jn.contains("count") ? count(jn, "count", path) : 0;
    if (kind == "leaf") {
      n.value = number(jn, "value", path);
      continue;
    }
    if (kind == "axis") {
      n.rule = AxisSplit{count(jn, "feature", path), number(jn, "threshold", path)};
    } else if (kind == "oblique") {
      n.rule = ObliqueSplit{number(jn, "w1", path), number(jn, "w2", path), number(jn, "threshold", path)};
    } else if (kind == "gaussian") {
      n.rule = GaussianSplit{point(jn, "f1", path), point(jn, "f2", path), number(jn, "c", path)};
    } else {
      throw FormatError(path + ".kind '" + kind + "' is not one of axis|oblique|gaussian|leaf");
    }
    try {
      validate_rule(*n.rule, p, tree.loc_idx());
    } catch (const ParameterError& e) {
      throw FormatError(path + ": " + e.what());
    }
    n.value = jn.contains("value") && jn["value"].is_number() ? jn["value"].get<double>() : 0.0;
    const Index l = count(jn, "left", path);
    const Index r = count(jn, "right", path);
    if (l >= nodes.size() || r >= nodes.size()) throw FormatError(path + " child index out of range");
    n.left = static_cast<int>(l);
    n.right = static_cast<int>(r);
  }
  // Each non-root node must have exactly one parent, and the structure must be reachable from the root.
  for (int i = 0; i < n_nodes; ++i) {
    const TreeNode& n = parsed[static_cast<std::size_t>(i)];
    if (!n.rule) continue;
    for (int c : {n.left, n.right}) {
      if (c == 0 || parsed[static_cast<std::size_t>(c)].parent != -1 || c == i) {
        throw FormatError("$.nodes[" + std::to_string(i) + "] has an invalid child reference " + std::to_string(c));
      }
      parsed[static_cast<std::size_t>(c)].parent = i;
    }
  }
  std::vector<int> stack{0};
  int visited = 0;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    ++visited;
    TreeNode& n = parsed[static_cast<std::size_t>(id)];
    if (n.parent >= 0) n.depth = parsed[static_cast<std::size_t>(n.parent)].depth + 1;
    if (n.rule) {
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
  }
  if (visited != n_nodes) throw FormatError("$.nodes contains nodes unreachable from the root");
  for (auto& n : parsed) tree.add_node(std::move(n));
  return tree;
}

void save_model(const GeoTree& tree, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << serialize(tree);
}

GeoTree load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace sxgeo
