#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sxgeo/dataset.hpp"
#include "sxgeo/simnet.hpp"
#include "sxgeo/tree.hpp"
#include "sxgeo/treeshap.hpp"

namespace sxgeo {

// Which input space is paired with the attribution space.
//   kFeature: raw feature distances vs raw SHAP distances
//   kGwr:     GWR-coefficient distances vs per-unit (phi / x) SHAP distances
enum class SimilarityVariant { kFeature, kGwr };

std::string to_string(SimilarityVariant v);
SimilarityVariant parse_variant(const std::string& text);

struct GrowConfig {
  Index msl = 5;
  int md = 5;

  bool axis_splits = true;
  bool oblique_splits = true;
  bool gaussian_splits = true;

  // Auxiliary factors of the tailored gain; disabled factors are 1.
  bool use_moran = true;
  bool use_modularity = true;

  Index shortlist_k = 8;  // 0: evaluate every candidate
  Index n_oblique = 16;
  Index n_gauss = 16;
  Index max_axis_cuts = 64;
  Index max_loc_cuts = 16;

  Index eval_size = 256;
  Index background_size = 256;
  Index sparsify_k = 10;  // 0: dense consensus
  double gamma = 1.0;
  double epsilon = 0.01;
  SimilarityVariant variant = SimilarityVariant::kFeature;

  std::uint64_t seed = 0;

  bool needs_shap() const { return use_modularity; }
};

// Immutable per-run state shared by every gain evaluation.
struct GainContext {
  const Dataset* train = nullptr;
  const SpatialWeights* weights = nullptr;  // over train rows; required when use_moran
  std::vector<Index> eval_rows;              // foreground rows for attribution networks
  std::vector<Index> background_rows;
  RowMatrix eval_X;
  RowMatrix background_X;
  std::optional<SimilarityNetwork> basis;  // input-space network over eval_rows
};

// `gwr_coefficients` (train rows x (p+1)) is required for the GWR variant.
GainContext make_gain_context(const Dataset& train, const SpatialWeights* weights, const RowMatrix* gwr_coefficients,
                              const GrowConfig& config);

struct GainBreakdown {
  double mse_gain = 0.0;
  std::optional<double> moran_i;       // empty when disabled or undefined
  bool moran_undefined = false;        // residual variance was zero
  std::optional<double> modularity_q;  // empty when disabled or degenerate
  bool modularity_degenerate = false;
  double combined = 0.0;
};

// combined = moran factor * modularity factor * mse_gain, where the Moran factor
// is max(0, 1 - |I|) (1 when disabled or undefined) and the modularity factor is
// Q (1 when disabled, 0 when the consensus network is degenerate).
double combine_gain(const GainBreakdown& g, const GrowConfig& config);

// Training rows currently routed to leaf `node`.
std::vector<Index> rows_at(const GeoTree& tree, int node, const Dataset& dataset);

// Candidate rules for the given node rows; only rules leaving >= msl rows on
// both sides are returned. Deterministic for a fixed node_seed.
std::vector<SplitRule> enumerate_candidates(const Dataset& dataset, std::span<const Index> node_rows,
                                            const GrowConfig& config, std::uint64_t node_seed);

// Training-MSE reduction over all n rows when leaf `node` is split by `rule`.
double mse_gain(const GeoTree& tree, int node, const SplitRule& rule, const Dataset& dataset);

// Copy of `tree` with leaf `node` split by `rule` and both child means fitted.
GeoTree tentative_split(const GeoTree& tree, int node, const SplitRule& rule, const Dataset& dataset);

// Full tailored gain, computed directly from the tentative sub-model.
GainBreakdown evaluate_gain(const GeoTree& tree, int node, const SplitRule& rule, const GainContext& context,
                            const GrowConfig& config);

// Consensus of `basis` with the attribution network of `phi`; nullopt when
// either network or their product is degenerate.
std::optional<SimilarityNetwork> consensus_network(const SimilarityNetwork& basis, const RowMatrix& phi,
                                                   const RowMatrix& features, const GrowConfig& config);

// Modularity of the consensus between `basis` and the attribution network of
// `phi` (normalized per unit feature value for the GWR variant). Returns
// nullopt when the consensus network is degenerate.
std::optional<CommunityPartition> consensus_partition(const SimilarityNetwork& basis, const RowMatrix& phi,
                                                      const RowMatrix& features, const GrowConfig& config);

// Per-node trace of the chosen split (for reporting).
struct SplitRecord {
  int node = 0;
  std::string kind;
  Index candidates = 0;
  GainBreakdown gain;
};

GeoTree grow_tree(const Dataset& train, const GainContext& context, const GrowConfig& config,
                  std::vector<SplitRecord>* trace = nullptr);

}  // namespace sxgeo
