#include "sxgeo/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "sxgeo/csv.hpp"
#include "sxgeo/error.hpp"

namespace sxgeo {

namespace {

const std::vector<std::pair<std::string, std::string>>& defaults() {
  static const std::vector<std::pair<std::string, std::string>> table{
      {"data", ""},
      {"id_col", "id"},
      {"x_col", "x"},
      {"y_col", "y"},
      {"target_col", "target"},
      {"attributes", ""},
      {"out", "out"},
      {"model", "sx"},
      {"variant", "feature"},
      {"msl", "5"},
      {"md", "5"},
      {"cv_grid", ""},
      {"msl_grid", "3,5,10"},
      {"md_grid", "3,5,8"},
      {"folds", "5"},
      {"knn_k", "8"},
      {"bandwidth", ""},
      {"bandwidth_grid", "0.05,0.1,0.2,0.35,0.5,1"},
      {"gamma", "1"},
      {"shortlist_k", "8"},
      {"background_size", "256"},
      {"eval_size", "256"},
      {"sparsify_k", "10"},
      {"n_oblique", "16"},
      {"n_gauss", "16"},
      {"epsilon", "0.01"},
      {"seed", ""},
      {"no_moran", "false"},
      {"no_modularity", "false"},
      {"test_fraction", "0.2"},
      {"audit_size", "2000"},
      {"model_file", ""},
      {"predictions", ""},
      {"attributions", ""},
      {"n", "400"},
      {"extent", "10"},
      {"field", "regimes"},
      {"transition", "0.5"},
      {"noise", "0.5"},
      {"autocorrelation", "0.7"},
      {"range", "1.5"},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

// 0 (or "inf") selects the exhaustive setting for these two knobs.
Index count_or_unbounded(const RunConfig& c, const std::string& key) {
  const std::string v = c.get(key, "");
  if (v == "inf" || v == "all") return 0;
  const std::int64_t n = parse_int(key, v);
  if (n < 0) throw ConfigError(key + " must be nonnegative");
  return static_cast<Index>(n);
}

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, value] : defaults()) k.push_back(name);
    return k;
  }();
  return keys;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  for (const auto& [name, value] : defaults()) {
    if (name == key && !value.empty()) return value;
  }
  return fallback;
}

std::string RunConfig::require(const std::string& key) const {
  const std::string v = get(key, "");
  if (v.empty()) throw ConfigError("missing required key '" + key + "'");
  return v;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const std::string v = get(key, "");
  if (v.empty()) return fallback;
  const auto d = csv::parse_double(v);
  if (!d) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return *d;
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) const {
  const std::string v = get(key, "");
  if (v.empty()) return fallback;
  return parse_int(key, v);
}

Index RunConfig::get_count(const std::string& key, Index fallback) const {
  const std::int64_t v = get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 1) throw ConfigError(key + " must be a positive count, got " + std::to_string(v));
  return static_cast<Index>(v);
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const std::string v = get(key, "");
  if (v.empty()) return fallback;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::uint64_t RunConfig::seed() const {
  const std::string v = require("seed");
  const auto* end = v.data() + v.size();
  std::uint64_t s = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), end, s);
  if (ec != std::errc() || ptr != end) throw ConfigError("seed: expected a nonnegative integer, got '" + v + "'");
  return s;
}

std::string RunConfig::resolved_text() const {
  std::ostringstream out;
  for (const auto& key : known_keys()) out << key << " = " << get(key, "") << '\n';
  return out.str();
}

Schema schema_from(const RunConfig& c) {
  Schema s;
  s.id = c.require("id_col");
  s.loc_x = c.require("x_col");
  s.loc_y = c.require("y_col");
  s.target = c.require("target_col");
  s.attributes = split_list(c.get("attributes", ""));
  return s;
}

ExperimentConfig experiment_from(const RunConfig& c) {
  ExperimentConfig e;
  e.model = parse_model(c.get("model", "sx"));
  GrowConfig& g = e.grow;
  g.variant = parse_variant(c.get("variant", "feature"));
  g.msl = c.get_count("msl", 5);
  const std::int64_t md = c.get_int("md", 5);
  if (md < 0) throw ConfigError("md must be nonnegative");
  g.md = static_cast<int>(md);
  g.shortlist_k = count_or_unbounded(c, "shortlist_k");
  g.sparsify_k = count_or_unbounded(c, "sparsify_k");
  g.background_size = c.get_count("background_size", 256);
  g.eval_size = c.get_count("eval_size", 256);
  g.n_oblique = c.get_count("n_oblique", 16);
  g.n_gauss = c.get_count("n_gauss", 16);
  g.gamma = c.get_double("gamma", 1.0);
  if (!(g.gamma > 0.0)) throw ConfigError("gamma must be positive");
  g.epsilon = c.get_double("epsilon", 0.01);
  if (!(g.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  g.use_moran = !c.get_bool("no_moran", false);
  g.use_modularity = !c.get_bool("no_modularity", false);
  g.seed = c.seed();
  e.knn_k = c.get_count("knn_k", 8);
  if (c.has("bandwidth") && !c.get("bandwidth", "").empty()) {
    e.bandwidth = c.get_double("bandwidth", 0.0);
    if (!(*e.bandwidth > 0.0)) throw ConfigError("bandwidth must be positive");
  }
  for (const auto& item : split_list(c.get("bandwidth_grid", ""))) {
    const auto v = csv::parse_double(item);
    if (!v || !(*v > 0.0)) throw ConfigError("bandwidth_grid: bad entry '" + item + "'");
    e.bandwidth_grid.push_back(*v);
  }
  e.test_fraction = c.get_double("test_fraction", 0.2);
  if (!(e.test_fraction > 0.0 && e.test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  e.audit_size = c.get_count("audit_size", 2000);
  return e;
}

SynthParams synth_from(const RunConfig& c) {
  SynthParams p;
  p.n = c.get_count("n", 400);
  p.extent = c.get_double("extent", 10.0);
  p.field = c.get("field", "regimes");
  p.transition = c.get_double("transition", 0.5);
  p.noise = c.get_double("noise", 0.5);
  p.autocorrelation = c.get_double("autocorrelation", 0.7);
  p.range = c.get_double("range", 1.5);
  p.seed = c.seed();
  return p;
}

std::vector<std::pair<Index, int>> cv_grid_from(const RunConfig& c) {
  std::vector<std::pair<Index, int>> grid;
  const std::string explicit_grid = c.get("cv_grid", "");
  if (!explicit_grid.empty()) {
    for (const auto& item : split_list(explicit_grid)) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw ConfigError("cv_grid entries must look like msl:md, got '" + item + "'");
      const std::int64_t msl = parse_int("cv_grid", trim(item.substr(0, colon)));
      const std::int64_t md = parse_int("cv_grid", trim(item.substr(colon + 1)));
      if (msl < 1 || md < 0) throw ConfigError("cv_grid entry out of range: '" + item + "'");
      grid.emplace_back(static_cast<Index>(msl), static_cast<int>(md));
    }
    return grid;
  }
  for (const auto& ms : split_list(c.get("msl_grid", ""))) {
    for (const auto& ds : split_list(c.get("md_grid", ""))) {
      const std::int64_t msl = parse_int("msl_grid", ms);
      const std::int64_t md = parse_int("md_grid", ds);
      if (msl < 1 || md < 0) throw ConfigError("grid value out of range");
      grid.emplace_back(static_cast<Index>(msl), static_cast<int>(md));
    }
  }
  if (grid.empty()) throw ConfigError("cross-validation grid is empty");
  return grid;
}

}  // namespace sxgeo
