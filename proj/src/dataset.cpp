#include "sxgeo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "sxgeo/csv.hpp"
#include "sxgeo/error.hpp"
#include "sxgeo/random.hpp"

namespace sxgeo {

RowMatrix Dataset::locations() const {
  RowMatrix loc(X.rows(), 2);
  for (int c = 0; c < 2; ++c) {
    const Index col = loc_idx[c];
    const double mean = standardized() ? standardization[col].mean : 0.0;
    const double sd = standardized() ? standardization[col].std : 1.0;
    loc.col(c) = X.col(static_cast<Eigen::Index>(col)).array() * sd + mean;
  }
  return loc;
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Dataset out;
  out.feature_names = feature_names;
  out.loc_idx = loc_idx;
  out.target_name = target_name;
  out.standardization = standardization;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.ids.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n()) throw ShapeError("subset row " + std::to_string(rows[r]) + " out of range");
    out.X.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r]));
    out.y[static_cast<Eigen::Index>(r)] = y[static_cast<Eigen::Index>(rows[r])];
    out.ids.push_back(ids[rows[r]]);
  }
  return out;
}

void Dataset::validate() const {
  if (feature_names.size() != p()) throw SchemaError("feature name count does not match X");
  if (static_cast<Index>(y.size()) != n() || ids.size() != n()) {
    throw ShapeError("X, y and ids disagree on the sample count");
  }
  if (loc_idx[0] == loc_idx[1] || loc_idx[0] >= p() || loc_idx[1] >= p()) {
    throw SchemaError("locational indices must be two distinct feature columns");
  }
  if (!X.allFinite() || !y.allFinite()) throw DataError("non-finite value in X or y");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw DataError("duplicate id '" + id + "'");
  }
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  const csv::Table table = csv::read(path);

  auto require = [&](const std::string& name, const char* role) {
    if (name.empty()) throw SchemaError(std::string("schema is missing the ") + role + " column");
    const auto col = table.column(name);
    if (!col) throw SchemaError("column '" + name + "' (" + role + ") not found in " + path.string());
    return *col;
  };
  const std::size_t id_col = require(schema.id, "id");
  const std::size_t x_col = require(schema.loc_x, "x coordinate");
  const std::size_t y_col = require(schema.loc_y, "y coordinate");
  const std::size_t target_col = require(schema.target, "target");

  std::vector<std::size_t> attr_cols;
  if (schema.attributes.empty()) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c != id_col && c != x_col && c != y_col && c != target_col) attr_cols.push_back(c);
    }
  } else {
    for (const auto& name : schema.attributes) attr_cols.push_back(require(name, "attribute"));
  }
  if (attr_cols.empty()) throw SchemaError("schema needs at least one attributive column");

  // Feature columns in file order.
  std::vector<std::size_t> feature_cols = attr_cols;
  feature_cols.push_back(x_col);
  feature_cols.push_back(y_col);
  std::sort(feature_cols.begin(), feature_cols.end());
  feature_cols.erase(std::unique(feature_cols.begin(), feature_cols.end()), feature_cols.end());
  for (std::size_t c : feature_cols) {
    if (c == id_col || c == target_col) throw SchemaError("column '" + table.header[c] + "' has two roles");
  }

  Dataset ds;
  ds.target_name = schema.target;
  for (std::size_t k = 0; k < feature_cols.size(); ++k) {
    ds.feature_names.push_back(table.header[feature_cols[k]]);
    if (feature_cols[k] == x_col) ds.loc_idx[0] = k;
    if (feature_cols[k] == y_col) ds.loc_idx[1] = k;
  }

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  ds.X.resize(n, static_cast<Eigen::Index>(feature_cols.size()));
  ds.y.resize(n);
  ds.ids.reserve(table.rows.size());
  std::unordered_set<std::string> seen;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& fields = table.rows[static_cast<std::size_t>(r)];
    const std::size_t line = static_cast<std::size_t>(r) + 2;
    if (fields.size() != table.header.size()) {
      throw DataError("row " + std::to_string(line) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(table.header.size()));
    }
    auto number = [&](std::size_t c) {
      const auto v = csv::parse_double(fields[c]);
      if (!v) {
        throw DataError("row " + std::to_string(line) + ", column '" + table.header[c] +
                        "': cannot parse '" + fields[c] + "' as a finite number");
      }
      return *v;
    };
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      ds.X(r, static_cast<Eigen::Index>(k)) = number(feature_cols[k]);
    }
    ds.y[r] = number(target_col);
    if (!seen.insert(fields[id_col]).second) {
      throw DataError("row " + std::to_string(line) + ": duplicate id '" + fields[id_col] + "'");
    }
    ds.ids.push_back(fields[id_col]);
  }
  return ds;
}

Dataset zscore(const Dataset& dataset) {
  Dataset out = dataset;
  const auto n = static_cast<double>(dataset.n());
  if (dataset.n() == 0) throw DataError("cannot standardize an empty dataset");
  out.standardization.assign(dataset.p(), ColumnScale{});
  for (Index c = 0; c < dataset.p(); ++c) {
    auto col = out.X.col(static_cast<Eigen::Index>(c));
    const double mean = col.sum() / n;
    const double var = (col.array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (!(sd > 0.0) || sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
      throw DegenerateColumnError("column '" + dataset.feature_names[c] + "' has zero variance");
    }
    col = (col.array() - mean) / sd;
    // Compose with an earlier standardization so unstandardize() stays exact.
    if (dataset.standardized()) {
      const ColumnScale prev = dataset.standardization[c];
      out.standardization[c] = {prev.mean + prev.std * mean, prev.std * sd};
    } else {
      out.standardization[c] = {mean, sd};
    }
  }
  return out;
}

Dataset apply_standardization(const Dataset& raw, std::span<const ColumnScale> scales) {
  if (raw.standardized()) throw DataError("dataset is already standardized");
  if (scales.size() != raw.p()) {
    throw ShapeError("standardization has " + std::to_string(scales.size()) + " columns, data has " +
                     std::to_string(raw.p()));
  }
  Dataset out = raw;
  for (Index c = 0; c < raw.p(); ++c) {
    if (!(scales[c].std > 0.0)) throw DegenerateColumnError("stored scale for '" + raw.feature_names[c] + "' is not positive");
    auto col = out.X.col(static_cast<Eigen::Index>(c));
    col = (col.array() - scales[c].mean) / scales[c].std;
  }
  out.standardization.assign(scales.begin(), scales.end());
  return out;
}

Dataset unstandardize(const Dataset& dataset) {
  Dataset out = dataset;
  if (!dataset.standardized()) return out;
  for (Index c = 0; c < dataset.p(); ++c) {
    auto col = out.X.col(static_cast<Eigen::Index>(c));
    col = col.array() * dataset.standardization[c].std + dataset.standardization[c].mean;
  }
  out.standardization.clear();
  return out;
}

SpatialWeights SpatialWeights::from_entries(Index n, std::vector<Entry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
  SpatialWeights sw;
  sw.n_ = n;
  sw.row_ptr_.assign(n + 1, 0);
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const Entry& en = entries[e];
    if (en.i >= n || en.j >= n) throw ShapeError("weight entry index out of range");
    if (en.i == en.j) throw DataError("spatial weights must have a zero diagonal");
    if (!std::isfinite(en.w) || en.w < 0.0) throw DataError("spatial weights must be finite and nonnegative");
    if (e > 0 && entries[e - 1].i == en.i && entries[e - 1].j == en.j) {
      throw DataError("duplicate spatial weight entry");
    }
    if (en.w == 0.0) continue;
    sw.row_ptr_[en.i + 1]++;
    sw.cols_.push_back(en.j);
    sw.vals_.push_back(en.w);
    sw.total_ += en.w;
  }
  for (Index i = 0; i < n; ++i) sw.row_ptr_[i + 1] += sw.row_ptr_[i];
  // Symmetry check via lookups in sorted rows.
  for (Index i = 0; i < n; ++i) {
    auto nb = sw.neighbors(i);
    auto wt = sw.weights(i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      auto back = sw.neighbors(nb[k]);
      auto it = std::lower_bound(back.begin(), back.end(), i);
      if (it == back.end() || *it != i || sw.weights(nb[k])[static_cast<std::size_t>(it - back.begin())] != wt[k]) {
        throw DataError("spatial weights are not symmetric");
      }
    }
  }
  if (!(sw.total_ > 0.0)) throw DataError("spatial weights have zero total weight");
  return sw;
}

std::vector<SpatialWeights::Entry> SpatialWeights::entries() const {
  std::vector<Entry> out;
  out.reserve(nnz());
  for (Index i = 0; i < n_; ++i) {
    auto nb = neighbors(i);
    auto wt = weights(i);
    for (std::size_t k = 0; k < nb.size(); ++k) out.push_back({i, nb[k], wt[k]});
  }
  return out;
}

SpatialWeights knn_weights(const RowMatrix& locations, Index k) {
  const auto n = static_cast<Index>(locations.rows());
  if (locations.cols() != 2) throw ShapeError("locations must be an n x 2 matrix");
  if (k < 1 || k >= n) {
    throw ParameterError("k-NN needs 1 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  if (!locations.allFinite()) throw DataError("non-finite location");

  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(n * k);
  std::vector<std::pair<double, Index>> cand(n - 1);
  for (Index i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = locations(i, 0) - locations(j, 0);
      const double dy = locations(i, 1) - locations(j, 1);
      cand[m++] = {dx * dx + dy * dy, j};
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (Index r = 0; r < k; ++r) {
      const Index j = cand[r].second;
      edges.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<SpatialWeights::Entry> entries;
  entries.reserve(2 * edges.size());
  for (auto [a, b] : edges) {
    entries.push_back({a, b, 1.0});
    entries.push_back({b, a, 1.0});
  }
  return SpatialWeights::from_entries(n, std::move(entries));
}

void write_weights_csv(const SpatialWeights& weights, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "i,j,w\n";
  for (const auto& e : weights.entries()) out << e.i << ',' << e.j << ',' << csv::format_double(e.w) << '\n';
}

std::vector<Fold> kfold_indices(Index n, Index folds, std::uint64_t seed) {
  if (folds < 2) throw ParameterError("k-fold needs at least 2 folds");
  if (folds > n) throw ParameterError("more folds (" + std::to_string(folds) + ") than samples (" + std::to_string(n) + ")");
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, 0x6b666f6c64ULL));
  rng.shuffle(std::span<Index>(order));

  std::vector<Fold> out(folds);
  const Index base = n / folds;
  const Index extra = n % folds;
  std::vector<int> fold_of(n);
  Index pos = 0;
  for (Index f = 0; f < folds; ++f) {
    const Index size = base + (f < extra ? 1 : 0);
    for (Index r = 0; r < size; ++r) fold_of[order[pos++]] = static_cast<int>(f);
  }
  for (Index i = 0; i < n; ++i) {
    for (Index f = 0; f < folds; ++f) {
      (static_cast<Index>(fold_of[i]) == f ? out[f].test : out[f].train).push_back(i);
    }
  }
  return out;
}

Fold holdout_split(Index n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ParameterError("test_fraction must lie in (0, 1)");
  if (n < 2) throw ParameterError("holdout split needs at least 2 rows");
  auto n_test = static_cast<Index>(std::llround(static_cast<double>(n) * test_fraction));
  n_test = std::clamp<Index>(n_test, 1, n - 1);
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, 0x686f6c646f7574ULL));
  rng.shuffle(std::span<Index>(order));
  Fold fold;
  fold.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  fold.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(fold.test.begin(), fold.test.end());
  std::sort(fold.train.begin(), fold.train.end());
  return fold;
}

std::vector<Index> subsample_indices(Index n, Index size, std::uint64_t seed) {
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  if (size >= n) return order;
  Rng rng(derive_seed(seed, 0x73756273616d70ULL));
  rng.shuffle(std::span<Index>(order));
  order.resize(size);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace sxgeo
