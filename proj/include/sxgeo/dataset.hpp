#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sxgeo {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = std::size_t;

// Column roles for CSV ingestion. An empty `attributes` list means "every
// column that is not the id, a coordinate, or the target".
struct Schema {
  std::string id;
  std::string loc_x;
  std::string loc_y;
  std::string target;
  std::vector<std::string> attributes;
};

struct ColumnScale {
  double mean = 0.0;
  double std = 1.0;
};

// Tabular geospatial data. Feature columns keep file order; `loc_idx` points at
// the two planar coordinate columns inside `X`. The target is never scaled.
struct Dataset {
  std::vector<std::string> feature_names;
  std::array<Index, 2> loc_idx{0, 1};
  RowMatrix X;
  Vector y;
  std::string target_name;
  std::vector<std::string> ids;
  // Empty until zscore() or apply_standardization() has been applied.
  std::vector<ColumnScale> standardization;

  Index n() const { return static_cast<Index>(X.rows()); }
  Index p() const { return static_cast<Index>(X.cols()); }
  bool standardized() const { return !standardization.empty(); }

  std::span<const double> row(Index i) const {
    return {X.data() + i * X.cols(), static_cast<std::size_t>(X.cols())};
  }

  // Planar coordinates in original units (n x 2), undoing standardization.
  RowMatrix locations() const;

  Dataset subset(std::span<const Index> rows) const;

  // Throws DataError / SchemaError when an invariant is broken.
  void validate() const;
};

Dataset load_csv(const std::filesystem::path& path, const Schema& schema);

// Z-score every feature column with the population standard deviation.
Dataset zscore(const Dataset& dataset);

// Reuse a previously fitted standardization (e.g. the one stored in a model).
Dataset apply_standardization(const Dataset& raw, std::span<const ColumnScale> scales);

Dataset unstandardize(const Dataset& dataset);

// Symmetric sparse weights in CSR layout (both directions stored).
class SpatialWeights {
 public:
  struct Entry {
    Index i;
    Index j;
    double w;
  };

  SpatialWeights() = default;

  // Validates symmetry, zero diagonal, finiteness and positive total weight.
  static SpatialWeights from_entries(Index n, std::vector<Entry> entries);

  Index n() const { return n_; }
  double total() const { return total_; }
  std::size_t nnz() const { return cols_.size(); }

  std::span<const Index> neighbors(Index i) const {
    return {cols_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  std::span<const double> weights(Index i) const {
    return {vals_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }

  std::vector<Entry> entries() const;

 private:
  Index n_ = 0;
  double total_ = 0.0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<Index> cols_;
  std::vector<double> vals_;
};

// Binary k-nearest-neighbour weights, symmetrized by logical OR.
// Equal distances are resolved in favour of the lower row index.
SpatialWeights knn_weights(const RowMatrix& locations, Index k);

void write_weights_csv(const SpatialWeights& weights, const std::filesystem::path& path);

struct Fold {
  std::vector<Index> train;
  std::vector<Index> test;
};

// Seeded shuffle, then contiguous test blocks; the first n % folds blocks get
// one extra row. Index sets are returned sorted.
std::vector<Fold> kfold_indices(Index n, Index folds, std::uint64_t seed);

// Seeded holdout split; test size is round(n * test_fraction), at least 1.
Fold holdout_split(Index n, double test_fraction, std::uint64_t seed);

// Seeded subsample of min(n, size) distinct indices, returned sorted.
std::vector<Index> subsample_indices(Index n, Index size, std::uint64_t seed);

}  // namespace sxgeo
