#ifndef FLAIR_IO_HPP
#define FLAIR_IO_HPP

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "flair/model.hpp"

namespace flair::io {

/// Malformed input file; the message carries path and line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or unwritable file; the message names the path.
class FileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MatrixFormat { Csv, Binary };

struct LabeledMatrix {
  Matrix values;
  std::vector<std::string> header;  // empty when the file had none
};

/// CSV with one header row; values written with 17 significant digits.
/// Integral matrices (e.g. Y, masks) are written without a decimal point.
void write_csv(const std::filesystem::path& path, const Matrix& values,
               const std::vector<std::string>& header);

/// Reads a CSV. The first line is treated as a header when any of its
/// fields is not a number.
LabeledMatrix read_csv(const std::filesystem::path& path);

/// Little-endian container: uint64 rows, uint64 cols, then row-major float64.
void write_binary(const std::filesystem::path& path, const Matrix& values);
Matrix read_binary(const std::filesystem::path& path);

/// Writes `stem` + ".csv" or ".bin" and returns the path used.
std::filesystem::path write_matrix(const std::filesystem::path& dir, const std::string& stem,
                                   const Matrix& values, const std::vector<std::string>& header,
                                   MatrixFormat format);
/// Reads `stem`.csv or `stem`.bin from `dir`, whichever exists.
Matrix read_matrix(const std::filesystem::path& dir, const std::string& stem);
/// Reads by explicit path, choosing the codec from the extension.
Matrix read_matrix_file(const std::filesystem::path& path);

/// Column labels prefix1..prefixN.
std::vector<std::string> numbered(const std::string& prefix, Index count);

/// Flat key=value file. Blank lines and lines starting with '#' are
/// skipped; keys are normalized to lower case with '-' for '_'.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace flair::io

#endif  // FLAIR_IO_HPP
