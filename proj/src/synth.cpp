#include "sxgeo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sxgeo/error.hpp"
#include "sxgeo/random.hpp"

namespace sxgeo {

namespace {

constexpr std::array<double, 7> kRegimeA{2.0, 1.5, -1.0, 0.5, 0.0, 0.8, 0.0};
constexpr std::array<double, 7> kRegimeB{-2.0, -1.5, 1.0, 0.5, 1.0, 0.0, 0.0};
constexpr std::array<double, 7> kPocket{4.0, 0.0, 0.0, -1.5, 0.0, 0.8, 1.2};

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace

std::array<double, 7> synthetic_coefficients(const SynthParams& params, double x, double y) {
  if (params.field == "constant") return kRegimeA;
  const double e = params.extent;
  const double w = std::max(params.transition, 1e-9);
  // Oblique boundary x + 0.5 y = 0.75 e.
  const double t = (x + 0.5 * y - 0.75 * e) / (std::sqrt(1.25) * w);
  const double b = logistic(t);
  // Elliptical pocket with foci on the lower-left diagonal.
  const double f = std::hypot(x - 0.15 * e, y - 0.7 * e) + std::hypot(x - 0.35 * e, y - 0.9 * e);
  const double inside = logistic((0.45 * e - f) / w);
  std::array<double, 7> out{};
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double base = (1.0 - b) * kRegimeA[j] + b * kRegimeB[j];
    out[j] = (1.0 - inside) * base + inside * kPocket[j];
  }
  return out;
}

Schema synthetic_schema() { return Schema{"id", "x", "y", "target", {}}; }

csv::Table generate_synthetic(const SynthParams& params) {
  if (params.n < 50) throw ParameterError("synthetic data needs n >= 50");
  if (params.field != "regimes" && params.field != "constant") {
    throw ParameterError("field must be 'regimes' or 'constant'");
  }
  if (!(params.extent > 0.0) || params.noise < 0.0 || params.autocorrelation < 0.0 || params.autocorrelation > 1.0 ||
      !(params.range > 0.0)) {
    throw ParameterError("synthetic parameters out of range");
  }
  Rng rng(params.seed);
  const Index n = params.n;
  const auto side = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(n))));
  const double cell = params.extent / static_cast<double>(side);

  std::vector<Index> cells(side * side);
  for (Index c = 0; c < cells.size(); ++c) cells[c] = c;
  rng.shuffle(std::span<Index>(cells));
  cells.resize(n);
  std::sort(cells.begin(), cells.end());

  std::vector<double> xs(n), ys(n);
  for (Index i = 0; i < n; ++i) {
    const double gx = static_cast<double>(cells[i] % side);
    const double gy = static_cast<double>(cells[i] / side);
    xs[i] = (gx + 0.5 + rng.uniform(-0.4, 0.4)) * cell;
    ys[i] = (gy + 0.5 + rng.uniform(-0.4, 0.4)) * cell;
  }
  std::vector<std::array<double, 6>> attrs(n);
  for (auto& a : attrs) {
    for (double& v : a) v = rng.normal();
  }
  std::vector<double> white(n), smooth(n, 0.0);
  for (double& v : white) v = rng.normal();
  std::vector<double> latent(n);
  for (double& v : latent) v = rng.normal();
  // Kernel-smoothed latent field, rescaled to unit variance.
  const double inv = 1.0 / (2.0 * params.range * params.range);
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index j = 0; j < n; ++j) {
      const double dx = xs[i] - xs[j];
      const double dy = ys[i] - ys[j];
      s += std::exp(-(dx * dx + dy * dy) * inv) * latent[j];
    }
    smooth[i] = s;
  }
  double mean = 0.0;
  for (double v : smooth) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : smooth) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  for (double& v : smooth) v = sd > 0.0 ? (v - mean) / sd : 0.0;

  const double rho = params.autocorrelation;
  csv::Table table;
  table.header = {"id", "x", "y", "a1", "a2", "a3", "a4", "a5", "a6", "target"};
  for (Index i = 0; i < n; ++i) {
    const auto beta = synthetic_coefficients(params, xs[i], ys[i]);
    double target = beta[0];
    for (std::size_t j = 0; j < 6; ++j) target += beta[j + 1] * attrs[i][j];
    target += params.noise * (std::sqrt(rho) * smooth[i] + std::sqrt(1.0 - rho) * white[i]);
    std::vector<std::string> row{std::to_string(i), csv::format_double(xs[i]), csv::format_double(ys[i])};
    for (double a : attrs[i]) row.push_back(csv::format_double(a));
    row.push_back(csv::format_double(target));
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_table(const csv::Table& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (k) out << ',';
      out << csv::quote(fields[k]);
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace sxgeo
