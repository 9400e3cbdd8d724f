#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sxgeo/dataset.hpp"
#include "sxgeo/grow.hpp"
#include "sxgeo/gwr.hpp"
#include "sxgeo/simnet.hpp"
#include "sxgeo/tree.hpp"
#include "sxgeo/treeshap.hpp"

namespace sxgeo {

double r_squared(const Vector& y, const Vector& yhat);
double rmse(const Vector& y, const Vector& yhat);

// Linear-interpolation quantile (the "type 7" rule) of unsorted values.
double quantile_type7(std::vector<double> values, double q);

// Shannon entropy (natural log) of `a` normalized to sum 1; 0 when the sum is 0.
double attribution_entropy(std::span<const double> a);

// sum_i sum_j |a_i - a_j| / (2 p sum a); 0 when the sum is 0.
double gini_coefficient(std::span<const double> a);

struct CommunityDispersion {
  int community = -1;  // -1 for the unweighted average row
  Index size = 0;
  double range = 0.0;
  double iqr = 0.0;
  double cv = 0.0;
  double entropy = 0.0;
  double gini = 0.0;
  bool degenerate = false;  // fewer than two members
};

struct DispersionReport {
  std::vector<CommunityDispersion> communities;
  CommunityDispersion average;
};

DispersionReport dispersion(const RowMatrix& phi, std::span<const int> labels);

void write_dispersion_csv(const DispersionReport& report, const std::filesystem::path& path);

enum class ModelFamily { kDT, kGT, kSX };

std::string to_string(ModelFamily m);
ModelFamily parse_model(const std::string& text);

struct ExperimentConfig {
  ModelFamily model = ModelFamily::kSX;
  GrowConfig grow;  // family flags are applied on top, see family_config()
  Index knn_k = 8;
  std::optional<double> bandwidth;  // GWR bandwidth in coordinate units; selected when empty
  std::vector<double> bandwidth_grid;  // multiples of the median pairwise distance
  double test_fraction = 0.2;
  Index audit_size = 2000;
};

// DT: axis splits only, no auxiliary terms. GT: all split families, no
// auxiliary terms. SX: all split families with the configured gain terms.
GrowConfig family_config(const ExperimentConfig& config);

struct MetricsReport {
  std::string model;
  std::string variant;
  double r2_train = 0.0;
  double r2_test = 0.0;
  double rmse_train = 0.0;
  double rmse_test = 0.0;
  std::optional<double> residual_moran_i;       // training rows
  std::optional<double> residual_moran_i_test;  // held-out rows
  std::optional<double> modularity;             // audit consensus network
  int communities = 0;
  Index leaves = 0;
  int depth = 0;
  std::optional<double> gwr_bandwidth;
  std::map<std::string, std::string> parameters;
};

// Post-hoc audit of a fitted tree on `rows` of `dataset`: attributions against
// a background drawn from `background_rows`, the variant's consensus network,
// its modularity-maximizing partition, and dispersion per community.
struct AuditResult {
  std::vector<Index> rows;
  AttributionMatrix attributions;
  std::optional<SimilarityNetwork> network;     // consensus network over `rows`
  std::optional<CommunityPartition> partition;  // empty when the network is degenerate
  DispersionReport dispersion;
};

AuditResult audit_tree(const GeoTree& tree, const Dataset& dataset, std::span<const Index> rows,
                       std::span<const Index> background_rows, const RowMatrix* gwr_rows, const GrowConfig& config);

struct ExperimentResult {
  GeoTree tree;
  MetricsReport metrics;
  Fold split;
  AuditResult audit;
  std::vector<SplitRecord> trace;
};

// Holdout split, optional GWR fit on the training rows, growth, and the full
// metric battery, all driven by config.grow.seed. `dataset` must already be
// standardized.
ExperimentResult run_experiment(const Dataset& dataset, const ExperimentConfig& config);

// Fits GWR on `train` with the configured or selected bandwidth.
GwrCoefficients fit_training_gwr(const Dataset& train, const ExperimentConfig& config);

void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path);
void write_communities_csv(const Dataset& dataset, const AuditResult& audit, const std::filesystem::path& path);

// Writes metrics.json, model.json, attributions.csv, communities.csv and
// dispersion.csv into `dir`.
void write_experiment_artifacts(const Dataset& dataset, const ExperimentResult& result,
                                const std::filesystem::path& dir);

struct CvRow {
  Index msl = 0;
  int md = 0;
  Index fold = 0;
  double rmse_train = 0.0;
  double rmse_test = 0.0;
};

struct CvResult {
  Index msl = 0;
  int md = 0;
  double mean_rmse_test = 0.0;
  std::vector<CvRow> rows;
};

// K-fold search over (msl, md); argmin of mean test RMSE, ties to smaller md,
// then larger msl.
CvResult cross_validate(const Dataset& dataset, const ExperimentConfig& config,
                        std::span<const std::pair<Index, int>> grid, Index folds, std::uint64_t seed);

void write_cv_csv(const CvResult& result, const std::filesystem::path& path);

}  // namespace sxgeo
