#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evdm {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

double parse_double(std::string_view text, std::string_view what);
long parse_int(std::string_view text, std::string_view what);

std::vector<std::string_view> split_csv_line(std::string_view line);

/// Reads a CSV file, checks the header against `expected_header` (exact
/// column list) and returns data rows as owned strings.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               std::string_view expected_header);

struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary 8-bit PGM (P5), maxval 255.
Gray8 read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Gray8& image);

/// Min-max normalizes to 0..255; a constant image maps to 0.
Gray8 to_gray8(std::span<const double> values, int width, int height);

/// Flat `key = value` text. Blank lines and `#` comments are ignored.
using FlatConfig = std::map<std::string, std::string>;
FlatConfig parse_flat_config(std::istream& is);
FlatConfig read_flat_config(const std::filesystem::path& path);
void write_flat_config(std::ostream& os, const FlatConfig& cfg);

std::ofstream open_for_write(const std::filesystem::path& path);

}  // namespace evdm
