#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sxgeo/dataset.hpp"

namespace sxgeo {

// x_feature <= threshold goes left.
struct AxisSplit {
  Index feature = 0;
  double threshold = 0.0;
};

// w1 * x + w2 * y <= threshold goes left (x, y = the two locational columns).
struct ObliqueSplit {
  double w1 = 1.0;
  double w2 = 0.0;
  double threshold = 0.0;
};

// dist(p, f1) + dist(p, f2) <= c goes left (on or inside the ellipse).
struct GaussianSplit {
  std::array<double, 2> f1{0.0, 0.0};
  std::array<double, 2> f2{0.0, 0.0};
  double c = 0.0;
};

using SplitRule = std::variant<AxisSplit, ObliqueSplit, GaussianSplit>;

enum class Side { kLeft, kRight };

using LocIndex = std::array<Index, 2>;

// Throws ParameterError when a rule violates its invariants.
void validate_rule(const SplitRule& rule, Index p, const LocIndex& loc_idx);

bool uses_locations(const SplitRule& rule);

std::string rule_kind(const SplitRule& rule);

// Locational rules evaluated directly on a coordinate pair.
bool goes_left_xy(const SplitRule& rule, double x, double y);

bool goes_left(const SplitRule& rule, std::span<const double> row, const LocIndex& loc_idx);

inline Side route(const SplitRule& rule, std::span<const double> row, const LocIndex& loc_idx) {
  return goes_left(rule, row, loc_idx) ? Side::kLeft : Side::kRight;
}

struct TreeNode {
  std::optional<SplitRule> rule;  // empty for leaves
  int left = -1;
  int right = -1;
  int parent = -1;
  double value = 0.0;  // mean of routed training targets
  Index count = 0;     // routed training rows
  int depth = 0;
};

// Binary regression tree stored as a flat node array; node 0 is the root.
class GeoTree {
 public:
  GeoTree() = default;
  GeoTree(Index p, LocIndex loc_idx) : p_(p), loc_idx_(loc_idx) {}

  // Single-leaf tree.
  static GeoTree constant(Index p, LocIndex loc_idx, double value, Index count);

  Index p() const { return p_; }
  const LocIndex& loc_idx() const { return loc_idx_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  bool is_leaf(int id) const { return !node(id).rule.has_value(); }

  int add_node(TreeNode node);
  // Turns leaf `id` into an internal node with two fresh leaves; returns {left, right}.
  std::pair<int, int> split_leaf(int id, const SplitRule& rule, double left_value, Index left_count,
                                 double right_value, Index right_count);

  int leaf_of(std::span<const double> row) const;
  double predict_row(std::span<const double> row) const;
  // Throws ShapeError when the column count differs from p().
  Vector predict(const RowMatrix& rows) const;

  std::vector<int> leaves() const;
  int depth() const;
  // Root-to-node list of (ancestor id, side taken).
  std::vector<std::pair<int, Side>> path_to(int id) const;

  // Free-form provenance echoed into the model document.
  std::map<std::string, std::string> config;
  std::vector<std::string> feature_names;
  std::vector<ColumnScale> standardization;

 private:
  Index p_ = 0;
  LocIndex loc_idx_{0, 1};
  std::vector<TreeNode> nodes_;
};

inline constexpr int kModelFormatVersion = 1;

// JSON model document; doubles are written with round-trip precision.
std::string serialize(const GeoTree& tree);
// Throws FormatError naming the offending path on malformed input.
GeoTree deserialize(std::string_view document);

void save_model(const GeoTree& tree, const std::filesystem::path& path);
GeoTree load_model(const std::filesystem::path& path);

}  // namespace sxgeo
