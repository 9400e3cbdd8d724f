#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sxgeo/dataset.hpp"
#include "sxgeo/tree.hpp"

namespace sxgeo {

struct AttributionMatrix {
  RowMatrix phi;  // foreground rows x features, in target units
  double base = 0.0;  // mean background prediction
  std::vector<std::string> foreground_ids;
  std::vector<std::string> background_ids;
};

// Interventional Shapley values of `tree` for every foreground row, averaged
// over the background rows. Exact: each leaf contributes the closed-form
// Shapley value of the indicator game "the hybrid input reaches this leaf".
AttributionMatrix shap_values(const GeoTree& tree, const RowMatrix& foreground, const RowMatrix& background);

// Same quantity by explicit enumeration of all 2^p coalitions. Reference path;
// only usable for small p.
AttributionMatrix shap_values_enumerate(const GeoTree& tree, const RowMatrix& foreground,
                                        const RowMatrix& background);

// Convenience overload carrying row identifiers.
AttributionMatrix shap_values(const GeoTree& tree, const Dataset& foreground, const Dataset& background);

// phi / (sign(x) * max(|x|, epsilon)), with sign(0) = +1.
RowMatrix normalize_attributions(const RowMatrix& phi, const RowMatrix& features, double epsilon);

// Per row |phi_x| + |phi_y| for the two locational columns.
Vector joint_location_attribution(const AttributionMatrix& attr, const LocIndex& loc_idx);

void write_attributions_csv(const AttributionMatrix& attr, std::span<const std::string> feature_names,
                            const std::filesystem::path& path);

// Indicator game for one (foreground, background) pair: which coalitions S
// route the hybrid input (foreground on S, background elsewhere) down a given
// sequence of split decisions. Attributive features carry a 2-bit mask
// (bit 0: background value allowed, bit 1: foreground value allowed); the two
// locational features are tracked jointly with a 4-bit mask over
// (x source, y source) because oblique and Gaussian rules couple them.
class PathGame {
 public:
  static constexpr Index kMaxFeatures = 64;

  PathGame() = default;
  PathGame(Index p, const LocIndex& loc_idx);

  // Restricts the game to hybrids that take `side` at `rule`. Returns false once
  // no coalition can satisfy the accumulated constraints.
  bool restrict(const SplitRule& rule, Side side, std::span<const double> fg, std::span<const double> bg);

  bool feasible() const { return feasible_; }

  // out[j] += scale * (Shapley value of feature j in this indicator game).
  void add_shapley(double scale, std::span<double> out) const;

 private:
  std::array<std::uint8_t, kMaxFeatures> mask_{};
  std::uint8_t loc_mask_ = 0xF;
  Index p_ = 0;
  LocIndex loc_idx_{0, 1};
  bool feasible_ = true;
};

// Shapley values of the game [A subset of S and S disjoint from B]: members
// of A get 1/(a * C(a+b, a)), members of B get -1/(b * C(a+b, a)).
double unanimity_share_required(std::size_t a, std::size_t b);
double unanimity_share_forbidden(std::size_t a, std::size_t b);

}  // namespace sxgeo
