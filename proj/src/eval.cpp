#include "sxgeo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "sxgeo/csv.hpp"
#include "sxgeo/error.hpp"
#include "sxgeo/gwr.hpp"
#include "sxgeo/random.hpp"
#include "sxgeo/spatial_stats.hpp"

namespace sxgeo {

namespace {

constexpr std::uint64_t kHoldoutTag = 0x686f6c64;
constexpr std::uint64_t kAuditTag = 0x61756474;
constexpr std::uint64_t kAuditBackgroundTag = 0x6162676b;

void check_lengths(const Vector& y, const Vector& yhat) {
  if (y.size() != yhat.size()) throw ShapeError("targets and predictions differ in length");
  if (y.size() < 2) throw ShapeError("need at least two targets");
}

RowMatrix gather(const RowMatrix& m, std::span<const Index> rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

SpatialWeights weights_for(const Dataset& ds, Index k) {
  if (ds.n() < 2) throw DataError("need at least two rows for spatial weights");
  return knn_weights(ds.locations(), std::min(k, ds.n() - 1));
}

std::optional<double> safe_moran(const GeoTree& tree, const Dataset& ds, const SpatialWeights& w) {
  try {
    return residual_morans_i(tree, ds, w);
  } catch (const ZeroVarianceError&) {
    return std::nullopt;
  }
}

}  // namespace

double r_squared(const Vector& y, const Vector& yhat) {
  check_lengths(y, yhat);
  const double mean = y.mean();
  const double sst = (y.array() - mean).square().sum();
  if (!(sst > 0.0)) throw ZeroVarianceError("r-squared is undefined for a constant target");
  return 1.0 - (y - yhat).squaredNorm() / sst;
}

double rmse(const Vector& y, const Vector& yhat) {
  check_lengths(y, yhat);
  return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

double quantile_type7(std::vector<double> values, double q) {
  if (values.empty()) throw ShapeError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double attribution_entropy(std::span<const double> a) {
  double total = 0.0;
  for (double v : a) total += v;
  if (!(total > 0.0)) return 0.0;
  double h = 0.0;
  for (double v : a) {
    if (v > 0.0) {
      const double p = v / total;
      h -= p * std::log(p);
    }
  }
  return h;
}

double gini_coefficient(std::span<const double> a) {
  double total = 0.0;
  for (double v : a) total += v;
  if (!(total > 0.0)) return 0.0;
  double diff = 0.0;
  for (double u : a) {
    for (double v : a) diff += std::abs(u - v);
  }
  return diff / (2.0 * static_cast<double>(a.size()) * total);
}

DispersionReport dispersion(const RowMatrix& phi, std::span<const int> labels) {
  if (static_cast<Index>(phi.rows()) != labels.size()) throw ShapeError("partition does not cover the attribution rows");
  if (labels.empty()) throw ShapeError("dispersion of an empty attribution matrix");
  int count = 0;
  for (int l : labels) {
    if (l < 0) throw DataError("negative community label");
    count = std::max(count, l + 1);
  }
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(count));
  for (Index i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);

  const auto p = static_cast<Index>(phi.cols());
  DispersionReport report;
  for (int c = 0; c < count; ++c) {
    const auto& rows = members[static_cast<std::size_t>(c)];
    if (rows.empty()) throw DataError("community " + std::to_string(c) + " is empty");
    CommunityDispersion d;
    d.community = c;
    d.size = rows.size();
    d.degenerate = rows.size() < 2;
    std::vector<double> mean_abs(p, 0.0);
    for (Index j = 0; j < p; ++j) {
      std::vector<double> v;
      v.reserve(rows.size());
      for (Index i : rows) v.push_back(phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      double mean = 0.0;
      double abs_mean = 0.0;
      for (double x : v) {
        mean += x;
        abs_mean += std::abs(x);
      }
      mean /= static_cast<double>(v.size());
      abs_mean /= static_cast<double>(v.size());
      mean_abs[j] = abs_mean;
      if (d.degenerate) continue;
      const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
      d.range += *mx - *mn;
      d.iqr += quantile_type7(v, 0.75) - quantile_type7(v, 0.25);
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double sd = std::sqrt(var / static_cast<double>(v.size()));
      d.cv += abs_mean > 0.0 ? sd / abs_mean : 0.0;
    }
    d.range /= static_cast<double>(p);
    d.iqr /= static_cast<double>(p);
    d.cv /= static_cast<double>(p);
    d.entropy = attribution_entropy(mean_abs);
    d.gini = gini_coefficient(mean_abs);
    report.communities.push_back(d);
  }
  CommunityDispersion& avg = report.average;
  avg.community = -1;
  avg.size = labels.size();
  for (const auto& d : report.communities) {
    avg.range += d.range;
    avg.iqr += d.iqr;
    avg.cv += d.cv;
    avg.entropy += d.entropy;
    avg.gini += d.gini;
  }
  const double k = static_cast<double>(report.communities.size());
  avg.range /= k;
  avg.iqr /= k;
  avg.cv /= k;
  avg.entropy /= k;
  avg.gini /= k;
  return report;
}

void write_dispersion_csv(const DispersionReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "community,size,range,iqr,cv,entropy,gini,degenerate\n";
  auto emit = [&](const CommunityDispersion& d, const std::string& name) {
    out << name << ',' << d.size << ',' << csv::format_double(d.range) << ',' << csv::format_double(d.iqr) << ','
        << csv::format_double(d.cv) << ',' << csv::format_double(d.entropy) << ',' << csv::format_double(d.gini)
        << ',' << (d.degenerate ? 1 : 0) << '\n';
  };
  for (const auto& d : report.communities) emit(d, std::to_string(d.community));
  emit(report.average, "average");
}

std::string to_string(ModelFamily m) {
  switch (m) {
    case ModelFamily::kDT: return "dt";
    case ModelFamily::kGT: return "gt";
    case ModelFamily::kSX: return "sx";
  }
  return "sx";
}

ModelFamily parse_model(const std::string& text) {
  if (text == "dt") return ModelFamily::kDT;
  if (text == "gt") return ModelFamily::kGT;
  if (text == "sx") return ModelFamily::kSX;
  throw ConfigError("model must be 'dt', 'gt' or 'sx', got '" + text + "'");
}

GrowConfig family_config(const ExperimentConfig& config) {
  GrowConfig g = config.grow;
  switch (config.model) {
    case ModelFamily::kDT:
      g.axis_splits = true;
      g.oblique_splits = false;
      g.gaussian_splits = false;
      g.use_moran = false;
      g.use_modularity = false;
      break;
    case ModelFamily::kGT:
      g.axis_splits = g.oblique_splits = g.gaussian_splits = true;
      g.use_moran = false;
      g.use_modularity = false;
      break;
    case ModelFamily::kSX:
      g.axis_splits = g.oblique_splits = g.gaussian_splits = true;
      break;
  }
  return g;
}

GwrCoefficients fit_training_gwr(const Dataset& train, const ExperimentConfig& config) {
  if (config.bandwidth) return fit_gwr(train, *config.bandwidth);
  const RowMatrix locs = train.locations();
  const double median = default_bandwidth(locs);
  std::vector<double> multiples = config.bandwidth_grid;
  if (multiples.empty()) multiples = {0.05, 0.1, 0.2, 0.35, 0.5, 1.0};
  std::vector<double> grid;
  for (double m : multiples) grid.push_back(m * median);
  return fit_gwr(train, select_bandwidth(train, grid));
}

AuditResult audit_tree(const GeoTree& tree, const Dataset& dataset, std::span<const Index> rows,
                       std::span<const Index> background_rows, const RowMatrix* gwr_rows, const GrowConfig& config) {
  AuditResult audit;
  audit.rows.assign(rows.begin(), rows.end());
  const RowMatrix fg = gather(dataset.X, rows);
  const RowMatrix bg = gather(dataset.X, background_rows);
  audit.attributions = shap_values(tree, fg, bg);
  for (Index i : rows) audit.attributions.foreground_ids.push_back(dataset.ids[i]);
  for (Index i : background_rows) audit.attributions.background_ids.push_back(dataset.ids[i]);

  std::optional<SimilarityNetwork> basis;
  try {
    if (config.variant == SimilarityVariant::kGwr) {
      if (gwr_rows == nullptr) throw ParameterError("the gwr variant needs GWR coefficients for the audit");
      basis = distance_to_similarity(pairwise_distances(*gwr_rows));
    } else {
      basis = distance_to_similarity(pairwise_distances(fg));
    }
  } catch (const DegenerateGeometryError&) {
    basis.reset();
  }
  if (basis) audit.network = consensus_network(*basis, audit.attributions.phi, fg, config);
  if (audit.network) audit.partition = consensus_partition(*basis, audit.attributions.phi, fg, config);
  const std::vector<int> labels =
      audit.partition ? audit.partition->labels : std::vector<int>(rows.size(), 0);
  audit.dispersion = dispersion(audit.attributions.phi, labels);
  return audit;
}

ExperimentResult run_experiment(const Dataset& dataset, const ExperimentConfig& config) {
  if (!dataset.standardized()) throw ParameterError("run_experiment expects a standardized dataset");
  if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0)) {
    throw ParameterError("test_fraction must lie in (0, 1)");
  }
  const GrowConfig grow = family_config(config);
  const std::uint64_t seed = grow.seed;

  ExperimentResult result;
  result.split = holdout_split(dataset.n(), config.test_fraction, derive_seed(seed, kHoldoutTag));
  const Dataset train = dataset.subset(result.split.train);
  const Dataset test = dataset.subset(result.split.test);
  const SpatialWeights w_train = weights_for(train, config.knn_k);

  std::optional<GwrCoefficients> gwr;
  if (grow.variant == SimilarityVariant::kGwr) gwr = fit_training_gwr(train, config);

  const GainContext ctx = make_gain_context(train, &w_train, gwr ? &gwr->B : nullptr, grow);
  result.tree = grow_tree(train, ctx, grow, &result.trace);
  result.tree.config["model"] = to_string(config.model);

  const std::vector<Index> audit_rows = subsample_indices(train.n(), config.audit_size, derive_seed(seed, kAuditTag));
  const std::vector<Index> bg_rows =
      subsample_indices(train.n(), grow.background_size, derive_seed(seed, kAuditBackgroundTag));
  std::optional<RowMatrix> gwr_rows;
  if (gwr) gwr_rows = gather(gwr->B, audit_rows);
  result.audit = audit_tree(result.tree, train, audit_rows, bg_rows, gwr_rows ? &*gwr_rows : nullptr, grow);

  MetricsReport& m = result.metrics;
  m.model = to_string(config.model);
  m.variant = to_string(grow.variant);
  const Vector pred_train = result.tree.predict(train.X);
  const Vector pred_test = result.tree.predict(test.X);
  m.rmse_train = rmse(train.y, pred_train);
  m.rmse_test = rmse(test.y, pred_test);
  m.r2_train = r_squared(train.y, pred_train);
  m.r2_test = r_squared(test.y, pred_test);
  m.residual_moran_i = safe_moran(result.tree, train, w_train);
  if (test.n() >= 3) m.residual_moran_i_test = safe_moran(result.tree, test, weights_for(test, config.knn_k));
  m.modularity = result.audit.partition ? result.audit.partition->q : 0.0;
  m.communities = result.audit.partition ? result.audit.partition->count() : 1;
  m.leaves = result.tree.leaves().size();
  m.depth = result.tree.depth();
  if (gwr) m.gwr_bandwidth = gwr->bandwidth;
  m.parameters = result.tree.config;
  m.parameters["knn_k"] = std::to_string(config.knn_k);
  m.parameters["test_fraction"] = csv::format_double(config.test_fraction);
  m.parameters["audit_size"] = std::to_string(config.audit_size);
  return result;
}

void write_metrics_json(const MetricsReport& r, const std::filesystem::path& path) {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  ordered_json j;
  j["model"] = r.model;
  j["variant"] = r.variant;
  j["r2_train"] = r.r2_train;
  j["r2_test"] = r.r2_test;
  j["rmse_train"] = r.rmse_train;
  j["rmse_test"] = r.rmse_test;
  j["residual_moran_i"] = opt(r.residual_moran_i);
  j["residual_moran_i_test"] = opt(r.residual_moran_i_test);
  j["modularity_" + r.variant] = opt(r.modularity);
  j["communities"] = r.communities;
  j["leaves"] = r.leaves;
  j["depth"] = r.depth;
  j["gwr_bandwidth"] = opt(r.gwr_bandwidth);
  j["parameters"] = r.parameters;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_communities_csv(const Dataset& dataset, const AuditResult& audit, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const RowMatrix locs = dataset.locations();
  out << "id,x,y,community\n";
  for (std::size_t r = 0; r < audit.rows.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(audit.rows[r]);
    const int c = audit.partition ? audit.partition->labels[r] : 0;
    out << csv::quote(dataset.ids[audit.rows[r]]) << ',' << csv::format_double(locs(i, 0)) << ','
        << csv::format_double(locs(i, 1)) << ',' << c << '\n';
  }
}

void write_experiment_artifacts(const Dataset& dataset, const ExperimentResult& result,
                                const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Dataset train = dataset.subset(result.split.train);
  write_metrics_json(result.metrics, dir / "metrics.json");
  save_model(result.tree, dir / "model.json");
  write_attributions_csv(result.audit.attributions, train.feature_names, dir / "attributions.csv");
  write_communities_csv(train, result.audit, dir / "communities.csv");
  write_dispersion_csv(result.audit.dispersion, dir / "dispersion.csv");
}

CvResult cross_validate(const Dataset& dataset, const ExperimentConfig& config,
                        std::span<const std::pair<Index, int>> grid, Index folds, std::uint64_t seed) {
  if (grid.empty()) throw ParameterError("cross-validation grid is empty");
  if (folds < 2) throw ParameterError("cross-validation needs at least 2 folds");
  const std::vector<Fold> split = kfold_indices(dataset.n(), folds, seed);
  const GrowConfig base = family_config(config);

  struct FoldData {
    Dataset train;
    Dataset test;
    SpatialWeights weights;
    std::optional<GwrCoefficients> gwr;
  };
  std::vector<FoldData> data;
  data.reserve(split.size());
  for (const Fold& f : split) {
    FoldData d{dataset.subset(f.train), dataset.subset(f.test), {}, std::nullopt};
    d.weights = weights_for(d.train, config.knn_k);
    if (base.variant == SimilarityVariant::kGwr && base.use_modularity) d.gwr = fit_training_gwr(d.train, config);
    data.push_back(std::move(d));
  }

  CvResult result;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [msl, md] : grid) {
    GrowConfig g = base;
    g.msl = msl;
    g.md = md;
    double total = 0.0;
    for (Index k = 0; k < data.size(); ++k) {
      const FoldData& d = data[k];
      const GainContext ctx = make_gain_context(d.train, &d.weights, d.gwr ? &d.gwr->B : nullptr, g);
      const GeoTree tree = grow_tree(d.train, ctx, g);
      CvRow row{msl, md, k, rmse(d.train.y, tree.predict(d.train.X)), rmse(d.test.y, tree.predict(d.test.X))};
      total += row.rmse_test;
      result.rows.push_back(row);
    }
    const double mean = total / static_cast<double>(data.size());
    const bool better = mean < best || (mean == best && (md < result.md || (md == result.md && msl > result.msl)));
    if (better) {
      best = mean;
      result.msl = msl;
      result.md = md;
      result.mean_rmse_test = mean;
    }
  }
  return result;
}

void write_cv_csv(const CvResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "msl,md,fold,rmse_train,rmse_test,selected\n";
  for (const CvRow& r : result.rows) {
    const bool selected = r.msl == result.msl && r.md == result.md;
    out << r.msl << ',' << r.md << ',' << r.fold << ',' << csv::format_double(r.rmse_train) << ','
        << csv::format_double(r.rmse_test) << ',' << (selected ? 1 : 0) << '\n';
  }
}

}  // namespace sxgeo
