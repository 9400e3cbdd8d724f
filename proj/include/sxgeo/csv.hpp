#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sxgeo::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Position of `name` in the header, if present.
  std::optional<std::size_t> column(std::string_view name) const;
};

// Comma-separated, header row, optional double-quoted fields.
Table read(const std::filesystem::path& path);

std::vector<std::string> split_line(std::string_view line);

// Locale-independent parse; rejects trailing garbage and non-finite values.
std::optional<double> parse_double(std::string_view text);

// Shortest representation that round-trips exactly.
std::string format_double(double value);

std::string quote(std::string_view field);

}  // namespace sxgeo::csv
