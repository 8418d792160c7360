#include "evdm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "evdm/error.hpp"

namespace evdm {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

double parse_double(std::string_view text, std::string_view what) {
  text = trim(text);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw Error(ErrorKind::Io, "cannot parse " + std::string(what) + " from '" + std::string(text) + "'");
  }
  return v;
}

long parse_int(std::string_view text, std::string_view what) {
  text = trim(text);
  long v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorKind::Io, "cannot parse " + std::string(what) + " from '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               std::string_view expected_header) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != expected_header) {
    throw Error(ErrorKind::Io, path.string() + ": expected header '" + std::string(expected_header) + "'");
  }
  const std::size_t columns = split_csv_line(expected_header).size();
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != columns) {
      throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(columns) + " columns");
    }
    rows.emplace_back(fields.begin(), fields.end());
  }
  return rows;
}

namespace {

// Next whitespace-delimited header token, skipping `#` comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  char c = 0;
  while (in.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

Gray8 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  if (pgm_token(in) != "P5") throw Error(ErrorKind::Io, path.string() + ": not a binary PGM (P5)");
  Gray8 img;
  img.width = static_cast<int>(parse_int(pgm_token(in), "PGM width"));
  img.height = static_cast<int>(parse_int(pgm_token(in), "PGM height"));
  const long maxval = parse_int(pgm_token(in), "PGM maxval");
  if (img.width <= 0 || img.height <= 0 || maxval != 255) {
    throw Error(ErrorKind::Io, path.string() + ": only 8-bit PGM with positive size is supported");
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw Error(ErrorKind::Io, path.string() + ": truncated pixel data");
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Gray8& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

Gray8 to_gray8(std::span<const double> values, int width, int height) {
  Gray8 img{width, height, std::vector<std::uint8_t>(values.size(), 0)};
  if (values.empty()) return img;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return img;
  for (std::size_t i = 0; i < values.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - *lo) / range));
  }
  return img;
}

FlatConfig parse_flat_config(std::istream& is) {
  FlatConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(view.substr(0, eq)));
    const std::string value(trim(view.substr(eq + 1)));
    if (key.empty()) throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(line_no) + ": empty key");
    cfg[key] = value;
  }
  return cfg;
}

FlatConfig read_flat_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return parse_flat_config(in);
}

void write_flat_config(std::ostream& os, const FlatConfig& cfg) {
  for (const auto& [k, v] : cfg) os << k << " = " << v << '\n';
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

}  // namespace evdm
