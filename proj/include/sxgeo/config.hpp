#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sxgeo/dataset.hpp"
#include "sxgeo/eval.hpp"
#include "sxgeo/synth.hpp"

namespace sxgeo {

// Flat `key = value` run manifest. Lines starting with '#' are comments.
// Keys are checked against a fixed vocabulary so typos fail early.
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  // `key=value`; later assignments win.
  void set(const std::string& key, const std::string& value);
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  Index get_count(const std::string& key, Index fallback) const;  // >= 1
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t seed() const;  // required

  // Every known key with its resolved value (defaults filled in), one per line.
  std::string resolved_text() const;

  const std::map<std::string, std::string>& values() const { return values_; }

  static const std::vector<std::string>& known_keys();

 private:
  std::map<std::string, std::string> values_;
};

Schema schema_from(const RunConfig& config);
ExperimentConfig experiment_from(const RunConfig& config);
SynthParams synth_from(const RunConfig& config);

// "msl:md,msl:md,..." or the cross product of msl_grid and md_grid.
std::vector<std::pair<Index, int>> cv_grid_from(const RunConfig& config);

}  // namespace sxgeo
