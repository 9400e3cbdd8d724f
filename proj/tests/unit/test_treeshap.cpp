#include <doctest.h>

#include <cmath>

#include "random_tree.hpp"
#include "sxgeo/error.hpp"
#include "sxgeo/treeshap.hpp"

using namespace sxgeo;

namespace {

double max_abs_diff(const RowMatrix& a, const RowMatrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::vector<std::vector<double>> rows_of(const RowMatrix& m) {
  std::vector<std::vector<double>> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).data(), m.row(i).data() + m.cols());
  return out;
}

}  // namespace

TEST_CASE("exact attributions match subset enumeration on mixed-family trees") {
  for (Index p = 2; p <= 6; ++p) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      const auto pair = testutil::random_tree(p, 4, seed * 31 + p);
      const RowMatrix fg = testutil::random_rows(6, static_cast<Eigen::Index>(p), seed + 7);
      const RowMatrix bg = testutil::random_rows(9, static_cast<Eigen::Index>(p), seed + 8);
      const AttributionMatrix attr = shap_values(pair.tree, fg, bg);
      const auto background = rows_of(bg);
      double worst = 0.0;
      for (Eigen::Index i = 0; i < fg.rows(); ++i) {
        const auto ref = oracle::shapley(pair.mirror, rows_of(fg)[static_cast<std::size_t>(i)], background);
        for (Index j = 0; j < p; ++j) worst = std::max(worst, std::abs(attr.phi(i, j) - ref[j]));
      }
      CHECK(worst < 1e-10);
      CHECK(max_abs_diff(attr.phi, shap_values_enumerate(pair.tree, fg, bg).phi) < 1e-10);
    }
  }
}

TEST_CASE("efficiency: attributions sum to prediction minus background mean") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto pair = testutil::random_tree(5, 5, seed);
    const RowMatrix fg = testutil::random_rows(20, 5, seed + 1);
    const RowMatrix bg = testutil::random_rows(30, 5, seed + 2);
    const AttributionMatrix attr = shap_values(pair.tree, fg, bg);
    CHECK(attr.base == doctest::Approx(pair.tree.predict(bg).mean()).epsilon(1e-12));
    const Vector pred = pair.tree.predict(fg);
    for (Eigen::Index i = 0; i < fg.rows(); ++i) {
      CHECK(std::abs(attr.phi.row(i).sum() - (pred[i] - attr.base)) < 1e-9);
    }
  }
}

TEST_CASE("null players and constant trees") {
  const GeoTree constant = GeoTree::constant(4, {0, 1}, 3.0, 10);
  const AttributionMatrix c = shap_values(constant, testutil::random_rows(5, 4, 1), testutil::random_rows(5, 4, 2));
  CHECK(c.phi.cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.base == 3.0);

  // feature 3 never appears in a rule
  GeoTree t(4, {0, 1});
  t.add_node(TreeNode{});
  const auto [l, r] = t.split_leaf(0, AxisSplit{2, 0.0}, 1.0, 1, 2.0, 1);
  t.split_leaf(l, ObliqueSplit{1, -1, 0}, -5.0, 1, 5.0, 1);
  t.split_leaf(r, GaussianSplit{{0, 0}, {0.5, 0}, 1.0}, 7.0, 1, 0.0, 1);
  const AttributionMatrix a = shap_values(t, testutil::random_rows(10, 4, 3), testutil::random_rows(10, 4, 4));
  CHECK(a.phi.col(3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stump with a single background row") {
  GeoTree t(3, {0, 1});
  t.add_node(TreeNode{});
  t.split_leaf(0, AxisSplit{2, 0.5}, 0.0, 1, 10.0, 1);
  RowMatrix fg(1, 3), bg(1, 3);
  fg << 0, 0, 1.0;
  bg << 0, 0, 0.0;
  const AttributionMatrix a = shap_values(t, fg, bg);
  CHECK(a.phi(0, 2) == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(a.phi(0, 0) == 0.0);
  CHECK(a.phi(0, 1) == 0.0);
  CHECK(a.base == 0.0);
}

TEST_CASE("unanimity shares") {
  CHECK(unanimity_share_required(1, 0) == doctest::Approx(1.0));
  CHECK(unanimity_share_required(2, 0) == doctest::Approx(0.5));
  CHECK(unanimity_share_forbidden(0, 1) == doctest::Approx(-1.0));
  // one required, one forbidden: v = 1 only for S = {a}; phi_a = 1/2, phi_b = -1/2
  CHECK(unanimity_share_required(1, 1) == doctest::Approx(0.5));
  CHECK(unanimity_share_forbidden(1, 1) == doctest::Approx(-0.5));
  // shares of all members sum to v(N) - v(empty) = 0 when both sides are present
  for (std::size_t a = 1; a <= 4; ++a)
    for (std::size_t b = 1; b <= 4; ++b)
      CHECK(static_cast<double>(a) * unanimity_share_required(a, b) +
                static_cast<double>(b) * unanimity_share_forbidden(a, b) ==
            doctest::Approx(0.0));
}

TEST_CASE("normalize_attributions") {
  RowMatrix phi(1, 3), x(1, 3);
  phi << 4.0, 4.0, 4.0;
  x << 2.0, 0.0, -0.001;
  const RowMatrix n = normalize_attributions(phi, x, 0.01);
  CHECK(n(0, 0) == doctest::Approx(2.0));
  CHECK(n(0, 1) == doctest::Approx(400.0));
  CHECK(n(0, 2) == doctest::Approx(-400.0));
  CHECK_THROWS(normalize_attributions(phi, RowMatrix::Zero(2, 3), 0.01));
}

TEST_CASE("joint location attribution") {
  AttributionMatrix attr;
  attr.phi.resize(2, 3);
  attr.phi << 3.0, -1.0, 9.0, 0.0, 0.5, -2.0;
  const Vector j = joint_location_attribution(attr, {0, 1});
  CHECK(j[0] == 4.0);
  CHECK(j[1] == 0.5);
}
