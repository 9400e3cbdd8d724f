#pragma once

#include <span>
#include <string>
#include <vector>

#include "sxgeo/dataset.hpp"

namespace sxgeo {

struct GwrCoefficients {
  // n x (p + 1), intercept first.
  RowMatrix B;
  double bandwidth = 0.0;
  std::string kernel = "gaussian";
};

// Fixed-bandwidth Gaussian kernel exp(-d^2 / (2 h^2)) around `anchor`.
Vector kernel_weights(const RowMatrix& locations, Index anchor, double bandwidth);

// Local weighted least squares at every row of `dataset` (regressors are all
// feature columns plus an intercept; kernel distances use original-unit
// coordinates). A ridge term is added only when a local system is singular.
GwrCoefficients fit_gwr(const Dataset& dataset, double bandwidth);

// Median of the nonzero pairwise location distances.
double default_bandwidth(const RowMatrix& locations);

// Largest pairwise location distance.
double location_diameter(const RowMatrix& locations);

// Leave-one-out prediction RMSE at a given bandwidth.
double gwr_loo_rmse(const Dataset& dataset, double bandwidth);

// Grid value with the smallest leave-one-out RMSE; ties go to the smaller bandwidth.
double select_bandwidth(const Dataset& dataset, std::span<const double> grid);

void write_coefficients_csv(const Dataset& dataset, const GwrCoefficients& coef,
                            const std::filesystem::path& path);

}  // namespace sxgeo
