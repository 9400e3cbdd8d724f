#include "sxgeo/treeshap.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "sxgeo/csv.hpp"
#include "sxgeo/error.hpp"

namespace sxgeo {
namespace {

double binomial(std::size_t n, std::size_t k) {
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// Loc combo bit layout: bit 0 = x comes from the foreground, bit 1 = y does.
constexpr bool combo_from_fg(unsigned combo, int coord) { return ((combo >> coord) & 1U) != 0; }

void check_arity(const GeoTree& tree, const RowMatrix& fg, const RowMatrix& bg) {
  if (static_cast<Index>(fg.cols()) != tree.p() || static_cast<Index>(bg.cols()) != tree.p()) {
    throw ShapeError("attribution rows must have " + std::to_string(tree.p()) + " features");
  }
  if (bg.rows() == 0) throw ShapeError("background set is empty");
}

std::span<const double> row_of(const RowMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

void accumulate_pair(const GeoTree& tree, int node, const PathGame& game, std::span<const double> fg,
                     std::span<const double> bg, std::span<double> out) {
  const TreeNode& n = tree.node(node);
  if (!n.rule) {
    game.add_shapley(n.value, out);
    return;
  }
  PathGame left = game;
  if (left.restrict(*n.rule, Side::kLeft, fg, bg)) accumulate_pair(tree, n.left, left, fg, bg, out);
  PathGame right = game;
  if (right.restrict(*n.rule, Side::kRight, fg, bg)) accumulate_pair(tree, n.right, right, fg, bg, out);
}

}  // namespace

double unanimity_share_required(std::size_t a, std::size_t b) {
  return 1.0 / (static_cast<double>(a) * binomial(a + b, a));
}

double unanimity_share_forbidden(std::size_t a, std::size_t b) {
  return -1.0 / (static_cast<double>(b) * binomial(a + b, a));
}

PathGame::PathGame(Index p, const LocIndex& loc_idx) : p_(p), loc_idx_(loc_idx) {
  if (p > kMaxFeatures) throw ShapeError("attribution supports at most 64 features");
  mask_.fill(0x3);
}

bool PathGame::restrict(const SplitRule& rule, Side side, std::span<const double> fg, std::span<const double> bg) {
  if (!feasible_) return false;
  const bool want_left = side == Side::kLeft;
  if (const auto* a = std::get_if<AxisSplit>(&rule)) {
    const Index j = a->feature;
    const bool fg_ok = (fg[j] <= a->threshold) == want_left;
    const bool bg_ok = (bg[j] <= a->threshold) == want_left;
    const int coord = j == loc_idx_[0] ? 0 : (j == loc_idx_[1] ? 1 : -1);
    if (coord >= 0) {
      std::uint8_t keep = 0;
      for (unsigned c = 0; c < 4; ++c) {
        if (combo_from_fg(c, coord) ? fg_ok : bg_ok) keep |= static_cast<std::uint8_t>(1U << c);
      }
      loc_mask_ &= keep;
      feasible_ = loc_mask_ != 0;
    } else {
      mask_[j] &= static_cast<std::uint8_t>((bg_ok ? 1U : 0U) | (fg_ok ? 2U : 0U));
      feasible_ = mask_[j] != 0;
    }
    return feasible_;
  }
  std::uint8_t keep = 0;
  for (unsigned c = 0; c < 4; ++c) {
    const double x = combo_from_fg(c, 0) ? fg[loc_idx_[0]] : bg[loc_idx_[0]];
    const double y = combo_from_fg(c, 1) ? fg[loc_idx_[1]] : bg[loc_idx_[1]];
    if (goes_left_xy(rule, x, y) == want_left) keep |= static_cast<std::uint8_t>(1U << c);
  }
  loc_mask_ &= keep;
  feasible_ = loc_mask_ != 0;
  return feasible_;
}

void PathGame::add_shapley(double scale, std::span<double> out) const {
  if (!feasible_ || scale == 0.0) return;
  std::array<Index, kMaxFeatures> required{};
  std::array<Index, kMaxFeatures> forbidden{};
  std::size_t a = 0;
  std::size_t b = 0;
  for (Index j = 0; j < p_; ++j) {
    if (j == loc_idx_[0] || j == loc_idx_[1]) continue;
    if (mask_[j] == 0x2) required[a++] = j;
    else if (mask_[j] == 0x1) forbidden[b++] = j;
  }

  auto emit = [&](std::size_t na, std::size_t nb) {
    if (na + nb == 0) return;
    if (na > 0) {
      const double s = scale * unanimity_share_required(na, nb);
      for (std::size_t k = 0; k < na; ++k) out[required[k]] += s;
    }
    if (nb > 0) {
      const double s = scale * unanimity_share_forbidden(na, nb);
      for (std::size_t k = 0; k < nb; ++k) out[forbidden[k]] += s;
    }
  };

  // Per-coordinate source sets implied by the joint mask.
  std::uint8_t coord_mask[2] = {0, 0};
  for (unsigned c = 0; c < 4; ++c) {
    if (!((loc_mask_ >> c) & 1U)) continue;
    for (int k = 0; k < 2; ++k) coord_mask[k] |= static_cast<std::uint8_t>(combo_from_fg(c, k) ? 2U : 1U);
  }
  const int product_size = std::popcount(static_cast<unsigned>(coord_mask[0])) *
                           std::popcount(static_cast<unsigned>(coord_mask[1]));
  if (product_size == std::popcount(static_cast<unsigned>(loc_mask_))) {
    // The joint constraint factorizes into independent per-coordinate constraints.
    std::size_t na = a;
    std::size_t nb = b;
    for (int k = 0; k < 2; ++k) {
      if (coord_mask[k] == 0x2) required[na++] = loc_idx_[k];
      else if (coord_mask[k] == 0x1) forbidden[nb++] = loc_idx_[k];
    }
    emit(na, nb);
    return;
  }
  // Otherwise split into mutually exclusive source combinations.
  for (unsigned c = 0; c < 4; ++c) {
    if (!((loc_mask_ >> c) & 1U)) continue;
    std::size_t na = a;
    std::size_t nb = b;
    for (int k = 0; k < 2; ++k) {
      if (combo_from_fg(c, k)) required[na++] = loc_idx_[k];
      else forbidden[nb++] = loc_idx_[k];
    }
    emit(na, nb);
  }
}

AttributionMatrix shap_values(const GeoTree& tree, const RowMatrix& foreground, const RowMatrix& background) {
  check_arity(tree, foreground, background);
  const Index p = tree.p();
  AttributionMatrix out;
  out.phi = RowMatrix::Zero(foreground.rows(), static_cast<Eigen::Index>(p));
  double base = 0.0;
  for (Eigen::Index b = 0; b < background.rows(); ++b) base += tree.predict_row(row_of(background, b));
  out.base = base / static_cast<double>(background.rows());

  const PathGame root(p, tree.loc_idx());
  std::vector<double> acc(p);
  for (Eigen::Index f = 0; f < foreground.rows(); ++f) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const auto fg = row_of(foreground, f);
    for (Eigen::Index b = 0; b < background.rows(); ++b) {
      accumulate_pair(tree, 0, root, fg, row_of(background, b), acc);
    }
    for (Index j = 0; j < p; ++j) {
      out.phi(f, static_cast<Eigen::Index>(j)) = acc[j] / static_cast<double>(background.rows());
    }
  }
  return out;
}

AttributionMatrix shap_values_enumerate(const GeoTree& tree, const RowMatrix& foreground,
                                        const RowMatrix& background) {
  check_arity(tree, foreground, background);
  const Index p = tree.p();
  if (p > 20) throw ShapeError("coalition enumeration is limited to 20 features");
  const std::size_t n_coalitions = std::size_t{1} << p;
  // weight[s] = s! (p - s - 1)! / p!
  std::vector<double> weight(p);
  for (Index s = 0; s < p; ++s) weight[s] = 1.0 / (static_cast<double>(p) * binomial(p - 1, s));

  AttributionMatrix out;
  out.phi = RowMatrix::Zero(foreground.rows(), static_cast<Eigen::Index>(p));
  double base = 0.0;
  for (Eigen::Index b = 0; b < background.rows(); ++b) base += tree.predict_row(row_of(background, b));
  out.base = base / static_cast<double>(background.rows());

  std::vector<double> value(n_coalitions);
  std::vector<double> hybrid(p);
  for (Eigen::Index f = 0; f < foreground.rows(); ++f) {
    for (Eigen::Index b = 0; b < background.rows(); ++b) {
      for (std::size_t s = 0; s < n_coalitions; ++s) {
        for (Index j = 0; j < p; ++j) hybrid[j] = ((s >> j) & 1U) ? foreground(f, static_cast<Eigen::Index>(j)) : background(b, static_cast<Eigen::Index>(j));
        value[s] = tree.predict_row(hybrid);
      }
      for (Index j = 0; j < p; ++j) {
        const std::size_t bit = std::size_t{1} << j;
        double phi = 0.0;
        for (std::size_t s = 0; s < n_coalitions; ++s) {
          if (s & bit) continue;
          phi += weight[static_cast<std::size_t>(std::popcount(s))] * (value[s | bit] - value[s]);
        }
        out.phi(f, static_cast<Eigen::Index>(j)) += phi;
      }
    }
  }
  out.phi /= static_cast<double>(background.rows());
  return out;
}

AttributionMatrix shap_values(const GeoTree& tree, const Dataset& foreground, const Dataset& background) {
  AttributionMatrix out = shap_values(tree, foreground.X, background.X);
  out.foreground_ids = foreground.ids;
  out.background_ids = background.ids;
  return out;
}

RowMatrix normalize_attributions(const RowMatrix& phi, const RowMatrix& features, double epsilon) {
  if (!(epsilon > 0.0)) throw ParameterError("normalization epsilon must be positive");
  if (phi.rows() != features.rows() || phi.cols() != features.cols()) {
    throw ShapeError("attributions and features must have the same shape");
  }
  RowMatrix out(phi.rows(), phi.cols());
  for (Eigen::Index i = 0; i < phi.rows(); ++i) {
    for (Eigen::Index j = 0; j < phi.cols(); ++j) {
      const double x = features(i, j);
      const double denom = (x < 0.0 ? -1.0 : 1.0) * std::max(std::abs(x), epsilon);
      out(i, j) = phi(i, j) / denom;
    }
  }
  return out;
}

Vector joint_location_attribution(const AttributionMatrix& attr, const LocIndex& loc_idx) {
  const auto p = static_cast<Index>(attr.phi.cols());
  if (loc_idx[0] >= p || loc_idx[1] >= p || loc_idx[0] == loc_idx[1]) {
    throw ShapeError("invalid locational indices for attribution matrix");
  }
  const auto x = static_cast<Eigen::Index>(loc_idx[0]);
  const auto y = static_cast<Eigen::Index>(loc_idx[1]);
  return attr.phi.col(x).cwiseAbs() + attr.phi.col(y).cwiseAbs();
}

void write_attributions_csv(const AttributionMatrix& attr, std::span<const std::string> feature_names,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id";
  for (const auto& name : feature_names) out << ",phi_" << csv::quote(name);
  out << ",base\n";
  for (Eigen::Index i = 0; i < attr.phi.rows(); ++i) {
    out << (static_cast<std::size_t>(i) < attr.foreground_ids.size() ? csv::quote(attr.foreground_ids[static_cast<std::size_t>(i)])
                                                                      : std::to_string(i));
    for (Eigen::Index j = 0; j < attr.phi.cols(); ++j) out << ',' << csv::format_double(attr.phi(i, j));
    out << ',' << csv::format_double(attr.base) << '\n';
  }
}

}  // namespace sxgeo
