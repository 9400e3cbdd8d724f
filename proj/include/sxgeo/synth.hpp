#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "sxgeo/csv.hpp"
#include "sxgeo/dataset.hpp"

namespace sxgeo {

// Synthetic spatial regression data: points on a jittered square grid, six
// standard-normal attributes a1..a6, coefficients that vary smoothly in space,
// and spatially autocorrelated noise.
//
// field:
//   "regimes"  two regimes across an oblique boundary plus a third elliptical
//              pocket, blended with a logistic ramp of width `transition`
//   "constant" one global coefficient vector (a plain linear model)
struct SynthParams {
  Index n = 400;
  double extent = 10.0;
  std::string field = "regimes";
  double transition = 0.5;
  double noise = 0.5;
  double autocorrelation = 0.7;  // share of noise variance that is spatially smooth
  double range = 1.5;            // kernel length scale of the smooth noise
  std::uint64_t seed = 0;
};

// Columns: id, x, y, a1..a6, target.
csv::Table generate_synthetic(const SynthParams& params);

// Schema matching generate_synthetic().
Schema synthetic_schema();

// The generating coefficients (intercept, a1..a6) at a planar location.
std::array<double, 7> synthetic_coefficients(const SynthParams& params, double x, double y);

void write_table(const csv::Table& table, const std::filesystem::path& path);

}  // namespace sxgeo
