#include "flair/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace flair::io {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string format_value(double v) {
  char buf[40];
  if (std::isfinite(v) && v == std::rint(v) && std::abs(v) < 1e15)
    std::snprintf(buf, sizeof buf, "%.0f", v);
  else
    std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  return out;
}

// Host-to-little-endian for 8-byte words.
template <class T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }
}

}  // namespace

void write_csv(const fs::path& path, const Matrix& values, const std::vector<std::string>& header) {
  std::ofstream out = open_out(path);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  if (!header.empty()) out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_value(values(i, j));
    out << '\n';
  }
  if (!out) throw FileError("write failed for " + path.string());
}

LabeledMatrix read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  LabeledMatrix out;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line);
    std::vector<double> vals(cells.size());
    bool numeric = true;
    for (std::size_t c = 0; c < cells.size(); ++c) numeric = numeric && parse_double(cells[c], vals[c]);
    if (!numeric) {
      if (rows.empty() && out.header.empty()) {
        out.header = cells;
        width = cells.size();
        continue;
      }
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": non-numeric field");
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(width) + " fields, found " + std::to_string(cells.size()));
    rows.push_back(std::move(vals));
  }
  out.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j)
      out.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return out;
}

void write_binary(const fs::path& path, const Matrix& values) {
  std::ofstream out = open_out(path, std::ios::binary);
  const std::uint64_t shape[2] = {to_le(static_cast<std::uint64_t>(values.rows())),
                                  to_le(static_cast<std::uint64_t>(values.cols()))};
  out.write(reinterpret_cast<const char*>(shape), sizeof shape);
  for (Index i = 0; i < values.rows(); ++i)
    for (Index j = 0; j < values.cols(); ++j) {
      const double v = to_le(values(i, j));
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  if (!out) throw FileError("write failed for " + path.string());
}

Matrix read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::uint64_t shape[2];
  if (!in.read(reinterpret_cast<char*>(shape), sizeof shape))
    throw ParseError(path.string() + ": truncated header");
  const auto rows = static_cast<Index>(to_le(shape[0]));
  const auto cols = static_cast<Index>(to_le(shape[1]));
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      double v;
      if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw ParseError(path.string() + ": truncated payload");
      out(i, j) = to_le(v);
    }
  return out;
}

fs::path write_matrix(const fs::path& dir, const std::string& stem, const Matrix& values,
                      const std::vector<std::string>& header, MatrixFormat format) {
  if (format == MatrixFormat::Binary) {
    const fs::path path = dir / (stem + ".bin");
    write_binary(path, values);
    return path;
  }
  const fs::path path = dir / (stem + ".csv");
  write_csv(path, values, header);
  return path;
}

Matrix read_matrix_file(const fs::path& path) {
  if (!fs::exists(path)) throw FileError("missing file " + path.string());
  if (path.extension() == ".bin") return read_binary(path);
  return read_csv(path).values;
}

Matrix read_matrix(const fs::path& dir, const std::string& stem) {
  const fs::path bin = dir / (stem + ".bin");
  if (fs::exists(bin)) return read_binary(bin);
  return read_matrix_file(dir / (stem + ".csv"));
}

std::vector<std::string> numbered(const std::string& prefix, Index count) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index c = 0; c < count; ++c) out.push_back(prefix + std::to_string(c + 1));
  return out;
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open config " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) {
      return c == '_' ? '-' : static_cast<char>(std::tolower(c));
    });
    if (key.empty())
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": empty key");
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  if (!out) throw FileError("write failed for " + path.string());
}

}  // namespace flair::io
