#include "sxgeo/spatial_stats.hpp"

#include <cmath>

#include "sxgeo/error.hpp"

namespace sxgeo {

double morans_i(std::span<const double> values, const SpatialWeights& weights) {
  const std::size_t n = values.size();
  if (n != weights.n()) {
    throw ShapeError("Moran's I: " + std::to_string(n) + " values for " + std::to_string(weights.n()) + " nodes");
  }
  double mean = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("Moran's I: non-finite value");
    mean += v;
  }
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double v : values) denom += (v - mean) * (v - mean);
  // Relative guard: residuals that differ only by rounding are treated as constant.
  double scale = 0.0;
  for (double v : values) scale = std::max(scale, std::abs(v));
  if (!(denom > 0.0) || std::sqrt(denom / static_cast<double>(n)) <= 1e-12 * std::max(scale, 1e-300)) {
    throw ZeroVarianceError("Moran's I is undefined for a constant vector");
  }
  double num = 0.0;
  for (Index i = 0; i < n; ++i) {
    const auto nb = weights.neighbors(i);
    const auto wt = weights.weights(i);
    double row = 0.0;
    for (std::size_t k = 0; k < nb.size(); ++k) row += wt[k] * (values[nb[k]] - mean);
    num += (values[i] - mean) * row;
  }
  return static_cast<double>(n) / weights.total() * num / denom;
}

double residual_morans_i(const GeoTree& tree, const Dataset& dataset, const SpatialWeights& weights) {
  const Vector pred = tree.predict(dataset.X);
  const Vector resid = pred - dataset.y;
  return morans_i(resid, weights);
}

}  // namespace sxgeo
