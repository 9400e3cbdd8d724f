#pragma once

#include <span>

#include "sxgeo/dataset.hpp"
#include "sxgeo/tree.hpp"

namespace sxgeo {

// Global Moran's I: (N / W) * sum_ij w_ij (r_i - rbar)(r_j - rbar) / sum_i (r_i - rbar)^2.
// Not clamped to [-1, 1]. Throws ZeroVarianceError for constant input.
double morans_i(std::span<const double> values, const SpatialWeights& weights);

inline double morans_i(const Vector& values, const SpatialWeights& weights) {
  return morans_i(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())), weights);
}

// Moran's I of prediction-minus-target residuals over all rows of `dataset`.
double residual_morans_i(const GeoTree& tree, const Dataset& dataset, const SpatialWeights& weights);

}  // namespace sxgeo
