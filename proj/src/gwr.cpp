#include "sxgeo/gwr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "sxgeo/csv.hpp"
#include "sxgeo/error.hpp"

namespace sxgeo {
namespace {

using Eigen::MatrixXd;

MatrixXd design_matrix(const Dataset& ds) {
  MatrixXd Z(ds.X.rows(), ds.X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(ds.X.cols()) = ds.X;
  return Z;
}

// Solves (Z^T W Z) beta = Z^T W y, adding the ridge term only when the system
// is numerically singular. Returns nullopt when even the ridge system fails.
std::optional<Vector> solve_local(const MatrixXd& Z, const Vector& y, const Vector& w) {
  const MatrixXd ZtW = Z.transpose() * w.asDiagonal();
  MatrixXd A = ZtW * Z;
  const Vector rhs = ZtW * y;
  const auto dim = A.rows();

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(A, Eigen::EigenvaluesOnly);
  const double max_ev = eig.eigenvalues().maxCoeff();
  const double min_ev = eig.eigenvalues().minCoeff();
  if (!(max_ev > 0.0)) return std::nullopt;
  if (min_ev <= 1e-12 * max_ev) {
    const double ridge = 1e-8 * A.trace() / static_cast<double>(dim);
    A.diagonal().array() += ridge;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig2(A, Eigen::EigenvaluesOnly);
    if (!(eig2.eigenvalues().minCoeff() > 1e-15 * eig2.eigenvalues().maxCoeff())) return std::nullopt;
  }
  Eigen::LDLT<MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  Vector beta = ldlt.solve(rhs);
  if (!beta.allFinite()) return std::nullopt;
  return beta;
}

void check_bandwidth(double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw ParameterError("GWR bandwidth must be a positive finite length");
  }
}

}  // namespace

Vector kernel_weights(const RowMatrix& locations, Index anchor, double bandwidth) {
  check_bandwidth(bandwidth);
  if (anchor >= static_cast<Index>(locations.rows())) throw ShapeError("kernel anchor out of range");
  const auto a = static_cast<Eigen::Index>(anchor);
  const double denom = 2.0 * bandwidth * bandwidth;
  Vector w(locations.rows());
  for (Eigen::Index j = 0; j < locations.rows(); ++j) {
    const double dx = locations(j, 0) - locations(a, 0);
    const double dy = locations(j, 1) - locations(a, 1);
    w[j] = std::exp(-(dx * dx + dy * dy) / denom);
  }
  return w;
}

GwrCoefficients fit_gwr(const Dataset& dataset, double bandwidth) {
  check_bandwidth(bandwidth);
  const RowMatrix loc = dataset.locations();
  const MatrixXd Z = design_matrix(dataset);
  GwrCoefficients out;
  out.bandwidth = bandwidth;
  out.B.resize(Z.rows(), Z.cols());
  for (Index i = 0; i < dataset.n(); ++i) {
    const Vector w = kernel_weights(loc, i, bandwidth);
    auto beta = solve_local(Z, dataset.y, w);
    if (!beta) {
      throw SingularFitError("local system at anchor " + std::to_string(i) + " (id " + dataset.ids[i] +
                             ") is singular at bandwidth " + csv::format_double(bandwidth));
    }
    out.B.row(static_cast<Eigen::Index>(i)) = beta->transpose();
  }
  return out;
}

double default_bandwidth(const RowMatrix& locations) {
  std::vector<double> d;
  const auto n = locations.rows();
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (locations.row(i) - locations.row(j)).norm();
      if (v > 0.0) d.push_back(v);
    }
  }
  if (d.empty()) throw DegenerateGeometryError("all locations coincide; no default bandwidth");
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(d.begin(), mid);
  return 0.5 * (lower + upper);
}

double location_diameter(const RowMatrix& locations) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < locations.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < locations.rows(); ++j) {
      best = std::max(best, (locations.row(i) - locations.row(j)).norm());
    }
  }
  return best;
}

double gwr_loo_rmse(const Dataset& dataset, double bandwidth) {
  check_bandwidth(bandwidth);
  const RowMatrix loc = dataset.locations();
  const MatrixXd Z = design_matrix(dataset);
  double sse = 0.0;
  for (Index i = 0; i < dataset.n(); ++i) {
    Vector w = kernel_weights(loc, i, bandwidth);
    w[static_cast<Eigen::Index>(i)] = 0.0;
    auto beta = solve_local(Z, dataset.y, w);
    if (!beta) {
      throw SingularFitError("leave-one-out system at anchor " + std::to_string(i) + " is singular at bandwidth " +
                             csv::format_double(bandwidth));
    }
    const double r = dataset.y[static_cast<Eigen::Index>(i)] - Z.row(static_cast<Eigen::Index>(i)).dot(*beta);
    sse += r * r;
  }
  return std::sqrt(sse / static_cast<double>(dataset.n()));
}

double select_bandwidth(const Dataset& dataset, std::span<const double> grid) {
  if (grid.empty()) throw ParameterError("bandwidth grid is empty");
  double best_bw = std::numeric_limits<double>::quiet_NaN();
  double best_rmse = std::numeric_limits<double>::infinity();
  for (double bw : grid) {
    double rmse;
    try {
      rmse = gwr_loo_rmse(dataset, bw);
    } catch (const SingularFitError&) {
      continue;
    }
    if (rmse < best_rmse || (rmse == best_rmse && bw < best_bw)) {
      best_rmse = rmse;
      best_bw = bw;
    }
  }
  if (std::isnan(best_bw)) throw SingularFitError("every candidate bandwidth produced a singular local fit");
  return best_bw;
}

void write_coefficients_csv(const Dataset& dataset, const GwrCoefficients& coef, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id,intercept";
  for (const auto& name : dataset.feature_names) out << ',' << csv::quote(name);
  out << '\n';
  for (Index i = 0; i < dataset.n(); ++i) {
    out << csv::quote(dataset.ids[i]);
    for (Eigen::Index c = 0; c < coef.B.cols(); ++c) out << ',' << csv::format_double(coef.B(static_cast<Eigen::Index>(i), c));
    out << '\n';
  }
}

}  // namespace sxgeo
