#include "sxgeo/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "sxgeo/csv.hpp"
#include "sxgeo/error.hpp"
#include "sxgeo/random.hpp"
#include "sxgeo/spatial_stats.hpp"

namespace sxgeo {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kExplainBackgroundTag = 0x65786267;

fs::path prepare_out(const RunConfig& config) {
  const fs::path dir = config.require("out");
  fs::create_directories(dir);
  std::ofstream out(dir / "config.resolved", std::ios::binary);
  if (!out) throw DataError("cannot write into " + dir.string());
  out << config.resolved_text();
  return dir;
}

Dataset load_standardized(const RunConfig& config) {
  return zscore(load_csv(config.require("data"), schema_from(config)));
}

RowMatrix gather(const RowMatrix& m, std::span<const Index> rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

void write_split_csv(const Dataset& ds, const Fold& split, const fs::path& path) {
  std::vector<const char*> role(ds.n(), "train");
  for (Index i : split.test) role[i] = "test";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id,split\n";
  for (Index i = 0; i < ds.n(); ++i) out << csv::quote(ds.ids[i]) << ',' << role[i] << '\n';
}

void write_trace_csv(const std::vector<SplitRecord>& trace, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
  out << "node,kind,candidates,mse_gain,moran_i,modularity_q,combined\n";
  for (const auto& r : trace) {
    out << r.node << ',' << r.kind << ',' << r.candidates << ',' << csv::format_double(r.gain.mse_gain) << ','
        << opt(r.gain.moran_i) << ',' << opt(r.gain.modularity_q) << ',' << csv::format_double(r.gain.combined)
        << '\n';
  }
}

std::uint64_t split_fingerprint(const Fold& split) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (Index i : split.test) h = splitmix64(h ^ i);
  return h;
}

std::unordered_map<std::string, std::vector<double>> read_keyed_rows(const fs::path& path,
                                                                     std::vector<std::string>& value_columns) {
  const csv::Table t = csv::read(path);
  const auto id_col = t.column("id");
  if (!id_col) throw SchemaError(path.string() + ": missing 'id' column");
  value_columns.clear();
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (c != *id_col) value_columns.push_back(t.header[c]);
  }
  std::unordered_map<std::string, std::vector<double>> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size()) {
      throw DataError(path.string() + " row " + std::to_string(r + 2) + ": expected " +
                      std::to_string(t.header.size()) + " fields");
    }
    std::vector<double> values;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == *id_col) continue;
      const auto v = csv::parse_double(row[c]);
      if (!v) throw DataError(path.string() + " row " + std::to_string(r + 2) + ", column '" + t.header[c] +
                              "': not a number");
      values.push_back(*v);
    }
    if (!rows.emplace(row[*id_col], std::move(values)).second) {
      throw DataError(path.string() + ": duplicate id '" + row[*id_col] + "'");
    }
  }
  return rows;
}

}  // namespace

void cmd_synth(const RunConfig& config) {
  const SynthParams params = synth_from(config);
  const fs::path dir = prepare_out(config);
  write_table(generate_synthetic(params), dir / "data.csv");
}

void cmd_train(const RunConfig& config) {
  const ExperimentConfig exp = experiment_from(config);
  const Dataset ds = load_standardized(config);
  const fs::path dir = prepare_out(config);
  const ExperimentResult result = run_experiment(ds, exp);
  write_experiment_artifacts(ds, result, dir);
  write_split_csv(ds, result.split, dir / "split.csv");
  write_trace_csv(result.trace, dir / "trace.csv");
  if (result.audit.network) {
    write_network_csv(*result.audit.network, result.audit.attributions.foreground_ids, dir / "consensus_edges.csv");
  }
}

void cmd_cv(const RunConfig& config) {
  const ExperimentConfig exp = experiment_from(config);
  const auto grid = cv_grid_from(config);
  const Index folds = config.get_count("folds", 5);
  const Dataset ds = load_standardized(config);
  const fs::path dir = prepare_out(config);
  const CvResult result = cross_validate(ds, exp, grid, folds, exp.grow.seed);
  write_cv_csv(result, dir / "cv_table.csv");
  nlohmann::ordered_json j;
  j["msl"] = result.msl;
  j["md"] = result.md;
  j["mean_rmse_test"] = result.mean_rmse_test;
  j["folds"] = folds;
  j["model"] = to_string(exp.model);
  std::ofstream out(dir / "cv_selected.json", std::ios::binary);
  out << j.dump(2) << '\n';
}

void cmd_explain(const RunConfig& config) {
  const GeoTree tree = load_model(config.require("model_file"));
  const Dataset raw = load_csv(config.require("data"), schema_from(config));
  if (raw.p() != tree.p()) {
    throw ShapeError("model expects " + std::to_string(tree.p()) + " features, data has " +
                     std::to_string(raw.p()));
  }
  if (!tree.feature_names.empty() && tree.feature_names != raw.feature_names) {
    throw ShapeError("data feature columns do not match the model's feature names");
  }
  if (raw.loc_idx != tree.loc_idx()) throw ShapeError("data coordinate columns do not match the model");
  const Dataset ds = tree.standardization.empty() ? raw : apply_standardization(raw, tree.standardization);

  ExperimentConfig exp = experiment_from(config);
  if (!config.has("variant") && tree.config.count("variant")) exp.grow.variant = parse_variant(tree.config.at("variant"));
  const fs::path dir = prepare_out(config);

  std::vector<Index> rows(ds.n());
  for (Index i = 0; i < ds.n(); ++i) rows[i] = i;
  const std::vector<Index> bg =
      subsample_indices(ds.n(), exp.grow.background_size, derive_seed(exp.grow.seed, kExplainBackgroundTag));
  std::optional<RowMatrix> gwr_rows;
  if (exp.grow.variant == SimilarityVariant::kGwr) gwr_rows = fit_training_gwr(ds, exp).B;
  const AuditResult audit = audit_tree(tree, ds, rows, bg, gwr_rows ? &*gwr_rows : nullptr, exp.grow);

  write_attributions_csv(audit.attributions, ds.feature_names, dir / "attributions.csv");
  write_communities_csv(ds, audit, dir / "communities.csv");
  write_dispersion_csv(audit.dispersion, dir / "dispersion.csv");
  if (audit.network) write_network_csv(*audit.network, audit.attributions.foreground_ids, dir / "consensus_edges.csv");
  nlohmann::ordered_json j;
  j["variant"] = to_string(exp.grow.variant);
  j["modularity_" + to_string(exp.grow.variant)] = audit.partition ? audit.partition->q : 0.0;
  j["communities"] = audit.partition ? audit.partition->count() : 1;
  j["degenerate"] = !audit.partition.has_value();
  j["base"] = audit.attributions.base;
  std::ofstream out(dir / "explain.json", std::ios::binary);
  out << j.dump(2) << '\n';
}

void cmd_ablate(const RunConfig& config) {
  ExperimentConfig base = experiment_from(config);
  base.model = ModelFamily::kSX;
  const Dataset ds = load_standardized(config);
  const fs::path dir = prepare_out(config);

  struct Column {
    std::string name;
    bool moran;
    bool modularity;
  };
  const std::vector<Column> columns{{"sx", true, true}, {"no_moran", false, true}, {"no_modularity", true, false}};
  std::vector<MetricsReport> reports;
  std::vector<std::uint64_t> fingerprints;
  for (const auto& col : columns) {
    ExperimentConfig exp = base;
    exp.grow.use_moran = col.moran;
    exp.grow.use_modularity = col.modularity;
    const ExperimentResult r = run_experiment(ds, exp);
    fingerprints.push_back(split_fingerprint(r.split));
    std::cerr << "ablate: " << col.name << " split fingerprint " << std::hex << fingerprints.back() << std::dec << '\n';
    if (reports.empty()) write_split_csv(ds, r.split, dir / "split.csv");
    reports.push_back(r.metrics);
  }
  for (std::uint64_t f : fingerprints) {
    if (f != fingerprints.front()) throw DataError("ablation columns do not share the same split");
  }

  std::ofstream out(dir / "ablation.csv", std::ios::binary);
  if (!out) throw DataError("cannot write ablation table");
  out << "metric";
  for (const auto& c : columns) out << ',' << c.name;
  out << '\n';
  auto row = [&](const std::string& name, auto get) {
    out << name;
    for (const auto& r : reports) out << ',' << get(r);
    out << '\n';
  };
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
  row("r2_train", [](const MetricsReport& r) { return csv::format_double(r.r2_train); });
  row("r2_test", [](const MetricsReport& r) { return csv::format_double(r.r2_test); });
  row("rmse_train", [](const MetricsReport& r) { return csv::format_double(r.rmse_train); });
  row("rmse_test", [](const MetricsReport& r) { return csv::format_double(r.rmse_test); });
  row("residual_moran_i", [&](const MetricsReport& r) { return opt(r.residual_moran_i); });
  row("residual_moran_i_test", [&](const MetricsReport& r) { return opt(r.residual_moran_i_test); });
  row("modularity_" + to_string(base.grow.variant), [&](const MetricsReport& r) { return opt(r.modularity); });
  row("leaves", [](const MetricsReport& r) { return std::to_string(r.leaves); });
  row("split_fingerprint", [&](const MetricsReport&) {
    std::ostringstream s;
    s << std::hex << fingerprints.front();
    return s.str();
  });
}

void cmd_audit(const RunConfig& config) {
  const ExperimentConfig exp = experiment_from(config);
  const Dataset ds = load_standardized(config);
  const fs::path dir = prepare_out(config);

  std::vector<std::string> pred_cols;
  const auto preds = read_keyed_rows(config.require("predictions"), pred_cols);
  if (pred_cols.empty()) throw SchemaError("predictions file has no value column");
  std::size_t pred_col = 0;
  for (std::size_t c = 0; c < pred_cols.size(); ++c) {
    if (pred_cols[c] == "prediction") pred_col = c;
  }
  Vector yhat(static_cast<Eigen::Index>(ds.n()));
  for (Index i = 0; i < ds.n(); ++i) {
    const auto it = preds.find(ds.ids[i]);
    if (it == preds.end()) throw DataError("no prediction for id '" + ds.ids[i] + "'");
    yhat[static_cast<Eigen::Index>(i)] = it->second[pred_col];
  }
  const SpatialWeights w = knn_weights(ds.locations(), std::min(exp.knn_k, ds.n() - 1));
  const Vector resid = yhat - ds.y;

  nlohmann::ordered_json j;
  j["n"] = ds.n();
  j["r2"] = r_squared(ds.y, yhat);
  j["rmse"] = rmse(ds.y, yhat);
  try {
    j["residual_moran_i"] = morans_i(resid, w);
  } catch (const ZeroVarianceError&) {
    j["residual_moran_i"] = nullptr;
  }

  const std::string attr_path = config.get("attributions", "");
  if (!attr_path.empty()) {
    std::vector<std::string> cols;
    const auto attrs = read_keyed_rows(attr_path, cols);
    std::vector<std::size_t> map;
    for (const auto& name : ds.feature_names) {
      std::size_t found = cols.size();
      for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c] == "phi_" + name || cols[c] == name) found = c;
      }
      if (found == cols.size()) throw SchemaError("attributions file lacks a column for feature '" + name + "'");
      map.push_back(found);
    }
    std::vector<Index> rows;
    RowMatrix phi(static_cast<Eigen::Index>(attrs.size()), static_cast<Eigen::Index>(ds.p()));
    for (Index i = 0; i < ds.n(); ++i) {
      const auto it = attrs.find(ds.ids[i]);
      if (it == attrs.end()) continue;
      for (Index f = 0; f < ds.p(); ++f) {
        phi(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(f)) = it->second[map[f]];
      }
      rows.push_back(i);
    }
    if (rows.size() < 2) throw DataError("attributions match fewer than two data rows");
    phi.conservativeResize(static_cast<Eigen::Index>(rows.size()), phi.cols());

    AuditResult audit;
    audit.rows = rows;
    audit.attributions.phi = phi;
    for (Index i : rows) audit.attributions.foreground_ids.push_back(ds.ids[i]);
    const RowMatrix fg = gather(ds.X, rows);
    std::optional<SimilarityNetwork> basis;
    try {
      if (exp.grow.variant == SimilarityVariant::kGwr) {
        basis = distance_to_similarity(pairwise_distances(gather(fit_training_gwr(ds, exp).B, rows)));
      } else {
        basis = distance_to_similarity(pairwise_distances(fg));
      }
    } catch (const DegenerateGeometryError&) {
      basis.reset();
    }
    if (basis) {
      audit.network = consensus_network(*basis, phi, fg, exp.grow);
      if (audit.network) audit.partition = consensus_partition(*basis, phi, fg, exp.grow);
    }
    const std::vector<int> labels = audit.partition ? audit.partition->labels : std::vector<int>(rows.size(), 0);
    audit.dispersion = dispersion(phi, labels);
    j["modularity_" + to_string(exp.grow.variant)] = audit.partition ? audit.partition->q : 0.0;
    j["communities"] = audit.partition ? audit.partition->count() : 1;
    j["dispersion_average"] = {{"range", audit.dispersion.average.range},
                               {"iqr", audit.dispersion.average.iqr},
                               {"cv", audit.dispersion.average.cv},
                               {"entropy", audit.dispersion.average.entropy},
                               {"gini", audit.dispersion.average.gini}};
    write_dispersion_csv(audit.dispersion, dir / "dispersion.csv");
    write_communities_csv(ds, audit, dir / "communities.csv");
  }
  std::ofstream out(dir / "audit.json", std::ios::binary);
  out << j.dump(2) << '\n';
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth", "train", "cv", "explain", "ablate", "audit"};
  return names;
}

int report_error(const std::string& kind, const std::string& message, int code) {
  nlohmann::json j{{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << j.dump() << '\n';
  return code;
}

int run_command(const std::string& name, const RunConfig& config) {
  static const std::map<std::string, void (*)(const RunConfig&)> table{
      {"synth", cmd_synth}, {"train", cmd_train},     {"cv", cmd_cv},
      {"explain", cmd_explain}, {"ablate", cmd_ablate}, {"audit", cmd_audit}};
  const auto report = report_error;
  const auto it = table.find(name);
  if (it == table.end()) return report("ConfigError", "unknown command '" + name + "'", 2);
  try {
    it->second(config);
    return 0;
  } catch (const Error& e) {
    return report(e.kind(), e.what(), static_cast<int>(e.exit_code()));
  } catch (const fs::filesystem_error& e) {
    return report("DataError", e.what(), static_cast<int>(ExitCode::kData));
  } catch (const std::exception& e) {
    return report("InternalError", e.what(), static_cast<int>(ExitCode::kInternal));
  }
}

}  // namespace sxgeo
