#include "sxgeo/grow.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "sxgeo/error.hpp"
#include "sxgeo/random.hpp"
#include "sxgeo/spatial_stats.hpp"

namespace sxgeo {

std::string to_string(SimilarityVariant v) { return v == SimilarityVariant::kGwr ? "gwr" : "feature"; }

SimilarityVariant parse_variant(const std::string& text) {
  if (text == "feature") return SimilarityVariant::kFeature;
  if (text == "gwr") return SimilarityVariant::kGwr;
  throw ConfigError("variant must be 'feature' or 'gwr', got '" + text + "'");
}

namespace {

constexpr std::uint64_t kEvalTag = 0x6576616c;
constexpr std::uint64_t kBackgroundTag = 0x626b6764;
constexpr std::uint64_t kLouvainTag = 0x6c6f7576;

std::span<const double> row_of(const RowMatrix& m, Index i) {
  return {m.data() + i * static_cast<Index>(m.cols()), static_cast<std::size_t>(m.cols())};
}

RowMatrix gather_rows(const RowMatrix& m, std::span<const Index> rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

struct SideStats {
  Index n_left = 0;
  double sum_left = 0.0;
  Index n_right = 0;
  double sum_right = 0.0;

  double mean_left() const { return sum_left / static_cast<double>(n_left); }
  double mean_right() const { return sum_right / static_cast<double>(n_right); }
};

SideStats side_stats(const Dataset& ds, std::span<const Index> rows, const SplitRule& rule) {
  SideStats s;
  for (Index i : rows) {
    const double y = ds.y[static_cast<Eigen::Index>(i)];
    if (goes_left(rule, ds.row(i), ds.loc_idx)) {
      ++s.n_left;
      s.sum_left += y;
    } else {
      ++s.n_right;
      s.sum_right += y;
    }
  }
  return s;
}

// SSE(parent) - SSE(left) - SSE(right) = n_l n_r / (n_l + n_r) * (mean_l - mean_r)^2.
double local_gain_over_n(const SideStats& s, Index n_total) {
  if (s.n_left == 0 || s.n_right == 0) return 0.0;
  const double nl = static_cast<double>(s.n_left);
  const double nr = static_cast<double>(s.n_right);
  const double d = s.mean_left() - s.mean_right();
  return nl * nr / (nl + nr) * d * d / static_cast<double>(n_total);
}

Index count_left(const Dataset& ds, std::span<const Index> rows, const SplitRule& rule) {
  Index n = 0;
  for (Index i : rows) n += goes_left(rule, ds.row(i), ds.loc_idx) ? 1 : 0;
  return n;
}

// Midpoints between consecutive distinct values at up to `cuts` evenly spaced
// rank positions.
std::vector<double> quantile_midpoints(std::vector<double> values, Index cuts) {
  std::sort(values.begin(), values.end());
  const Index n = values.size();
  std::vector<double> out;
  for (Index t = 1; t <= cuts; ++t) {
    Index k = t * n / (cuts + 1);
    if (k == 0 || k >= n) continue;
    // Move to the nearest boundary between distinct values at or after k.
    while (k < n && values[k - 1] == values[k]) ++k;
    if (k >= n) continue;
    out.push_back(0.5 * (values[k - 1] + values[k]));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

double combine_gain(const GainBreakdown& g, const GrowConfig& config) {
  double moran_factor = 1.0;
  if (config.use_moran && g.moran_i) moran_factor = std::max(0.0, 1.0 - std::abs(*g.moran_i));
  double modularity_factor = 1.0;
  if (config.use_modularity) modularity_factor = g.modularity_degenerate || !g.modularity_q ? 0.0 : *g.modularity_q;
  return moran_factor * modularity_factor * g.mse_gain;
}

GainContext make_gain_context(const Dataset& train, const SpatialWeights* weights, const RowMatrix* gwr_coefficients,
                              const GrowConfig& config) {
  GainContext ctx;
  ctx.train = &train;
  ctx.weights = weights;
  if (config.use_moran) {
    if (weights == nullptr) throw ParameterError("the Moran factor needs spatial weights over the training rows");
    if (weights->n() != train.n()) throw ShapeError("spatial weights do not match the training rows");
  }
  if (!config.needs_shap()) return ctx;
  if (config.eval_size == 0 || config.background_size == 0) {
    throw ParameterError("eval_size and background_size must be positive");
  }
  ctx.eval_rows = subsample_indices(train.n(), config.eval_size, derive_seed(config.seed, kEvalTag));
  ctx.background_rows = subsample_indices(train.n(), config.background_size, derive_seed(config.seed, kBackgroundTag));
  ctx.eval_X = gather_rows(train.X, ctx.eval_rows);
  ctx.background_X = gather_rows(train.X, ctx.background_rows);
  RowMatrix basis_rows;
  if (config.variant == SimilarityVariant::kGwr) {
    if (gwr_coefficients == nullptr) throw ParameterError("the gwr variant needs GWR coefficients");
    if (static_cast<Index>(gwr_coefficients->rows()) != train.n()) {
      throw ShapeError("GWR coefficients do not match the training rows");
    }
    basis_rows = gather_rows(*gwr_coefficients, ctx.eval_rows);
  } else {
    basis_rows = ctx.eval_X;
  }
  try {
    ctx.basis = distance_to_similarity(pairwise_distances(basis_rows));
  } catch (const DegenerateGeometryError&) {
    ctx.basis.reset();  // every candidate will be treated as degenerate
  }
  return ctx;
}

std::vector<Index> rows_at(const GeoTree& tree, int node, const Dataset& dataset) {
  std::vector<Index> rows;
  for (Index i = 0; i < dataset.n(); ++i) {
    if (tree.leaf_of(dataset.row(i)) == node) rows.push_back(i);
  }
  return rows;
}

std::vector<SplitRule> enumerate_candidates(const Dataset& dataset, std::span<const Index> node_rows,
                                            const GrowConfig& config, std::uint64_t node_seed) {
  std::vector<SplitRule> out;
  const Index n = node_rows.size();
  if (n < 2 * config.msl) return out;
  auto feasible = [&](const SplitRule& rule) {
    const Index left = count_left(dataset, node_rows, rule);
    return left >= config.msl && n - left >= config.msl;
  };

  if (config.axis_splits) {
    for (Index j = 0; j < dataset.p(); ++j) {
      std::vector<double> values;
      values.reserve(n);
      for (Index i : node_rows) values.push_back(dataset.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      std::sort(values.begin(), values.end());
      std::vector<double> cuts;
      for (Index k = 1; k < n; ++k) {
        if (values[k - 1] == values[k]) continue;
        const Index left = k;  // rows with value <= midpoint
        if (left < config.msl || n - left < config.msl) continue;
        cuts.push_back(0.5 * (values[k - 1] + values[k]));
      }
      if (cuts.size() > config.max_axis_cuts) {
        std::vector<double> picked;
        const Index m = cuts.size();
        for (Index t = 0; t < config.max_axis_cuts; ++t) picked.push_back(cuts[(2 * t + 1) * m / (2 * config.max_axis_cuts)]);
        cuts = std::move(picked);
      }
      for (double c : cuts) {
        SplitRule rule = AxisSplit{j, c};
        if (feasible(rule)) out.push_back(rule);
      }
    }
  }

  const auto lx = static_cast<Eigen::Index>(dataset.loc_idx[0]);
  const auto ly = static_cast<Eigen::Index>(dataset.loc_idx[1]);
  Rng rng(node_seed);
  // Two node rows with distinct locations; nullopt if none found quickly.
  auto draw_pair = [&]() -> std::optional<std::pair<Index, Index>> {
    for (int attempt = 0; attempt < 32; ++attempt) {
      const Index a = node_rows[rng.below(n)];
      const Index b = node_rows[rng.below(n)];
      if (dataset.X(static_cast<Eigen::Index>(a), lx) != dataset.X(static_cast<Eigen::Index>(b), lx) ||
          dataset.X(static_cast<Eigen::Index>(a), ly) != dataset.X(static_cast<Eigen::Index>(b), ly)) {
        return std::make_pair(a, b);
      }
    }
    return std::nullopt;
  };

  if (config.oblique_splits) {
    for (Index r = 0; r < config.n_oblique; ++r) {
      const auto pair = draw_pair();
      if (!pair) break;
      const auto a = static_cast<Eigen::Index>(pair->first);
      const auto b = static_cast<Eigen::Index>(pair->second);
      const double dx = dataset.X(b, lx) - dataset.X(a, lx);
      const double dy = dataset.X(b, ly) - dataset.X(a, ly);
      const double len = std::hypot(dx, dy);
      const double w1 = -dy / len;
      const double w2 = dx / len;
      std::vector<double> proj;
      proj.reserve(n);
      for (Index i : node_rows) {
        proj.push_back(w1 * dataset.X(static_cast<Eigen::Index>(i), lx) + w2 * dataset.X(static_cast<Eigen::Index>(i), ly));
      }
      for (double t : quantile_midpoints(std::move(proj), config.max_loc_cuts)) {
        SplitRule rule = ObliqueSplit{w1, w2, t};
        if (feasible(rule)) out.push_back(rule);
      }
    }
  }

  if (config.gaussian_splits) {
    for (Index r = 0; r < config.n_gauss; ++r) {
      const auto pair = draw_pair();
      if (!pair) break;
      const auto a = static_cast<Eigen::Index>(pair->first);
      const auto b = static_cast<Eigen::Index>(pair->second);
      GaussianSplit g;
      g.f1 = {dataset.X(a, lx), dataset.X(a, ly)};
      g.f2 = {dataset.X(b, lx), dataset.X(b, ly)};
      const double focal = std::hypot(g.f1[0] - g.f2[0], g.f1[1] - g.f2[1]);
      std::vector<double> sums;
      sums.reserve(n);
      for (Index i : node_rows) {
        const double x = dataset.X(static_cast<Eigen::Index>(i), lx);
        const double y = dataset.X(static_cast<Eigen::Index>(i), ly);
        sums.push_back(std::hypot(x - g.f1[0], y - g.f1[1]) + std::hypot(x - g.f2[0], y - g.f2[1]));
      }
      for (double c : quantile_midpoints(std::move(sums), config.max_loc_cuts)) {
        g.c = std::max(c, focal);
        SplitRule rule = g;
        if (feasible(rule)) out.push_back(rule);
      }
    }
  }
  return out;
}

GeoTree tentative_split(const GeoTree& tree, int node, const SplitRule& rule, const Dataset& dataset) {
  const std::vector<Index> rows = rows_at(tree, node, dataset);
  const SideStats s = side_stats(dataset, rows, rule);
  if (s.n_left == 0 || s.n_right == 0) throw ParameterError("split leaves one side empty");
  GeoTree out = tree;
  out.split_leaf(node, rule, s.mean_left(), s.n_left, s.mean_right(), s.n_right);
  return out;
}

double mse_gain(const GeoTree& tree, int node, const SplitRule& rule, const Dataset& dataset) {
  const GeoTree after = tentative_split(tree, node, rule, dataset);
  const Vector before_pred = tree.predict(dataset.X);
  const Vector after_pred = after.predict(dataset.X);
  const double n = static_cast<double>(dataset.n());
  const double mse_before = (dataset.y - before_pred).squaredNorm() / n;
  const double mse_after = (dataset.y - after_pred).squaredNorm() / n;
  return mse_before - mse_after;
}

std::optional<SimilarityNetwork> consensus_network(const SimilarityNetwork& basis, const RowMatrix& phi,
                                                   const RowMatrix& features, const GrowConfig& config) {
  const RowMatrix attr =
      config.variant == SimilarityVariant::kGwr ? normalize_attributions(phi, features, config.epsilon) : phi;
  try {
    const SimilarityNetwork shap_net = distance_to_similarity(pairwise_distances(attr));
    return consensus(basis, shap_net, config.sparsify_k);
  } catch (const DegenerateGeometryError&) {
    return std::nullopt;
  }
}

std::optional<CommunityPartition> consensus_partition(const SimilarityNetwork& basis, const RowMatrix& phi,
                                                      const RowMatrix& features, const GrowConfig& config) {
  const auto joint = consensus_network(basis, phi, features, config);
  if (!joint) return std::nullopt;
  try {
    return maximize_modularity(*joint, config.gamma, derive_seed(config.seed, kLouvainTag));
  } catch (const DegenerateGeometryError&) {
    return std::nullopt;
  }
}

namespace {

void fill_modularity(GainBreakdown& g, const GainContext& ctx, const RowMatrix& phi, const GrowConfig& config) {
  if (!ctx.basis) {
    g.modularity_degenerate = true;
    return;
  }
  const auto part = consensus_partition(*ctx.basis, phi, ctx.eval_X, config);
  if (part) g.modularity_q = part->q;
  else g.modularity_degenerate = true;
}

void fill_moran(GainBreakdown& g, std::span<const double> residuals, const SpatialWeights& weights) {
  try {
    g.moran_i = morans_i(residuals, weights);
  } catch (const ZeroVarianceError&) {
    g.moran_undefined = true;
  }
}

}  // namespace

GainBreakdown evaluate_gain(const GeoTree& tree, int node, const SplitRule& rule, const GainContext& context,
                            const GrowConfig& config) {
  const Dataset& ds = *context.train;
  const GeoTree after = tentative_split(tree, node, rule, ds);
  GainBreakdown g;
  g.mse_gain = std::max(0.0, mse_gain(tree, node, rule, ds));
  if (config.use_moran) {
    const Vector resid = after.predict(ds.X) - ds.y;
    fill_moran(g, {resid.data(), static_cast<std::size_t>(resid.size())}, *context.weights);
  }
  if (config.use_modularity) {
    const AttributionMatrix attr = shap_values(after, context.eval_X, context.background_X);
    fill_modularity(g, context, attr.phi, config);
  }
  g.combined = combine_gain(g, config);
  return g;
}

namespace {

// Evaluates candidates at one leaf while reusing everything that does not
// depend on the candidate: current residuals, current attributions, and the
// per-(foreground, background) path games down to the leaf. Attributions are
// linear in leaf values, so the tentative attributions are
//   phi_cur + (v_l - v_m) * phi(u_left) + (v_r - v_m) * (phi(u_m) - phi(u_left))
// where u_* are the leaf-reaching indicator games.
class NodeEvaluator {
 public:
  NodeEvaluator(const GeoTree& tree, int node, std::span<const Index> node_rows, const Vector& pred,
                const GainContext& ctx, const GrowConfig& config)
      : ctx_(ctx), config_(config), node_rows_(node_rows.begin(), node_rows.end()),
        node_value_(tree.node(node).value) {
    const Dataset& ds = *ctx.train;
    if (config.use_moran) {
      residuals_ = pred - ds.y;
      scratch_ = residuals_;
    }
    if (!config.use_modularity || !ctx.basis) return;

    current_phi_ = shap_values(tree, ctx.eval_X, ctx.background_X).phi;
    const auto path = tree.path_to(node);
    const auto nf = static_cast<Index>(ctx.eval_X.rows());
    const auto nb = static_cast<Index>(ctx.background_X.rows());
    inv_nb_ = 1.0 / static_cast<double>(nb);
    node_phi_ = RowMatrix::Zero(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(ds.p()));
    for (Index f = 0; f < nf; ++f) {
      const auto fg = row_of(ctx.eval_X, f);
      for (Index b = 0; b < nb; ++b) {
        const auto bg = row_of(ctx.background_X, b);
        PathGame game(ds.p(), ds.loc_idx);
        for (const auto& [ancestor, side] : path) {
          if (!game.restrict(*tree.node(ancestor).rule, side, fg, bg)) break;
        }
        if (!game.feasible()) continue;
        game.add_shapley(inv_nb_, {node_phi_.data() + f * ds.p(), ds.p()});
        pairs_.push_back({static_cast<std::uint32_t>(f), static_cast<std::uint32_t>(b), game});
      }
    }
  }

  GainBreakdown evaluate(const SplitRule& rule, const SideStats& s, double mse) {
    GainBreakdown g;
    g.mse_gain = mse;
    const Dataset& ds = *ctx_.train;
    const double vl = s.mean_left();
    const double vr = s.mean_right();
    if (config_.use_moran) {
      for (Index i : node_rows_) {
        const double yhat = goes_left(rule, ds.row(i), ds.loc_idx) ? vl : vr;
        scratch_[static_cast<Eigen::Index>(i)] = yhat - ds.y[static_cast<Eigen::Index>(i)];
      }
      fill_moran(g, {scratch_.data(), static_cast<std::size_t>(scratch_.size())}, *ctx_.weights);
      for (Index i : node_rows_) scratch_[static_cast<Eigen::Index>(i)] = residuals_[static_cast<Eigen::Index>(i)];
    }
    if (config_.use_modularity) {
      if (!ctx_.basis) {
        g.modularity_degenerate = true;
      } else {
        RowMatrix left_phi = RowMatrix::Zero(node_phi_.rows(), node_phi_.cols());
        for (const auto& pair : pairs_) {
          PathGame game = pair.game;
          if (!game.restrict(rule, Side::kLeft, row_of(ctx_.eval_X, pair.f), row_of(ctx_.background_X, pair.b))) continue;
          game.add_shapley(inv_nb_, {left_phi.data() + pair.f * ds.p(), ds.p()});
        }
        const RowMatrix phi =
            current_phi_ + (vl - node_value_) * left_phi + (vr - node_value_) * (node_phi_ - left_phi);
        last_phi_ = phi;
        fill_modularity(g, ctx_, phi, config_);
      }
    }
    g.combined = combine_gain(g, config_);
    return g;
  }

  const RowMatrix& last_phi() const { return last_phi_; }

 private:
  struct Pair {
    std::uint32_t f;
    std::uint32_t b;
    PathGame game;
  };

  const GainContext& ctx_;
  const GrowConfig& config_;
  std::vector<Index> node_rows_;
  double node_value_;
  Vector residuals_;
  Vector scratch_;
  RowMatrix current_phi_;
  RowMatrix node_phi_;
  RowMatrix last_phi_;
  std::vector<Pair> pairs_;
  double inv_nb_ = 1.0;
};

void echo_config(GeoTree& tree, const GrowConfig& c) {
  tree.config["msl"] = std::to_string(c.msl);
  tree.config["md"] = std::to_string(c.md);
  tree.config["variant"] = to_string(c.variant);
  tree.config["seed"] = std::to_string(c.seed);
  tree.config["axis_splits"] = c.axis_splits ? "true" : "false";
  tree.config["oblique_splits"] = c.oblique_splits ? "true" : "false";
  tree.config["gaussian_splits"] = c.gaussian_splits ? "true" : "false";
  tree.config["use_moran"] = c.use_moran ? "true" : "false";
  tree.config["use_modularity"] = c.use_modularity ? "true" : "false";
  tree.config["shortlist_k"] = std::to_string(c.shortlist_k);
  tree.config["n_oblique"] = std::to_string(c.n_oblique);
  tree.config["n_gauss"] = std::to_string(c.n_gauss);
  tree.config["eval_size"] = std::to_string(c.eval_size);
  tree.config["background_size"] = std::to_string(c.background_size);
  tree.config["sparsify_k"] = std::to_string(c.sparsify_k);
}

}  // namespace

GeoTree grow_tree(const Dataset& train, const GainContext& context, const GrowConfig& config,
                  std::vector<SplitRecord>* trace) {
  if (config.msl < 1) throw ParameterError("msl must be at least 1");
  if (config.md < 0) throw ParameterError("md must be nonnegative");
  if (train.n() < 2 * config.msl) {
    throw ParameterError("need at least 2*msl=" + std::to_string(2 * config.msl) + " training rows, got " +
                         std::to_string(train.n()));
  }
  if (!config.axis_splits && !config.oblique_splits && !config.gaussian_splits) {
    throw ParameterError("at least one split family must be enabled");
  }
  if (context.train != &train) throw ParameterError("gain context was built for a different training set");

  const double mean = train.y.mean();
  GeoTree tree = GeoTree::constant(train.p(), train.loc_idx, mean, train.n());
  tree.feature_names = train.feature_names;
  tree.standardization = train.standardization;
  echo_config(tree, config);

  Vector pred = Vector::Constant(train.y.size(), mean);
  std::vector<std::vector<Index>> node_rows(1);
  node_rows[0].resize(train.n());
  std::iota(node_rows[0].begin(), node_rows[0].end(), Index{0});

  std::deque<int> queue{0};
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    const std::vector<Index> rows = node_rows[static_cast<std::size_t>(id)];
    if (tree.node(id).depth >= config.md || rows.size() < 2 * config.msl) continue;

    const auto cands = enumerate_candidates(train, rows, config, derive_seed(config.seed, static_cast<std::uint64_t>(id)));
    if (cands.empty()) continue;

    std::vector<SideStats> stats(cands.size());
    std::vector<double> mse(cands.size());
    for (std::size_t c = 0; c < cands.size(); ++c) {
      stats[c] = side_stats(train, rows, cands[c]);
      mse[c] = local_gain_over_n(stats[c], train.n());
    }
    std::vector<std::size_t> rank(cands.size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return mse[a] > mse[b]; });
    const std::size_t shortlist =
        config.shortlist_k == 0 ? rank.size() : std::min<std::size_t>(config.shortlist_k, rank.size());

    std::optional<NodeEvaluator> evaluator;
    if (config.use_moran || config.use_modularity) evaluator.emplace(tree, id, rows, pred, context, config);

    std::size_t best = rank[0];
    GainBreakdown best_gain;
    best_gain.combined = -1.0;
    bool all_degenerate = config.use_modularity;
    for (std::size_t r = 0; r < shortlist; ++r) {
      const std::size_t c = rank[r];
      GainBreakdown g;
      if (evaluator) {
        g = evaluator->evaluate(cands[c], stats[c], mse[c]);
      } else {
        g.mse_gain = mse[c];
        g.combined = mse[c];
      }
      if (!g.modularity_degenerate) all_degenerate = false;
      if (g.combined > best_gain.combined) {
        best_gain = g;
        best = c;
      }
    }
    if (all_degenerate) {
      // No usable consensus network anywhere: fall back to the impurity ranking.
      best = rank[0];
      best_gain.mse_gain = mse[best];
      best_gain.combined = mse[best];
    }
    if (!(best_gain.combined > 0.0)) continue;

    const SideStats& s = stats[best];
    const auto [left, right] = tree.split_leaf(id, cands[best], s.mean_left(), s.n_left, s.mean_right(), s.n_right);
    node_rows.resize(tree.nodes().size());
    for (Index i : rows) {
      const bool l = goes_left(cands[best], train.row(i), train.loc_idx);
      node_rows[static_cast<std::size_t>(l ? left : right)].push_back(i);
      pred[static_cast<Eigen::Index>(i)] = l ? s.mean_left() : s.mean_right();
    }
    node_rows[static_cast<std::size_t>(id)].clear();
    if (trace) trace->push_back({id, rule_kind(cands[best]), static_cast<Index>(cands.size()), best_gain});
    queue.push_back(left);
    queue.push_back(right);
  }
  return tree;
}

}  // namespace sxgeo
