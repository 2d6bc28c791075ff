#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string_view>

#include "rfr/linalg.hpp"

namespace rfr {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_field(std::string_view field, std::size_t line_no, const char* what) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end)
    throw ParseError(line_no, std::string("invalid ") + what + " '" + std::string(field) + "'");
  return value;
}

}  // namespace

Matrix read_matrix_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };

  if (!next_line()) throw ParseError(0, "empty matrix file");
  const auto header = split_commas(trim(line));
  if (header.size() != 2) throw ParseError(line_no, "header must be 'rows,cols'");
  const auto rows = parse_field<long>(header[0], line_no, "row count");
  const auto cols = parse_field<long>(header[1], line_no, "column count");
  if (rows < 0 || cols < 0) throw ParseError(line_no, "negative dimension");

  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    if (!next_line())
      throw ParseError(line_no, "expected " + std::to_string(rows) + " data rows, found " +
                                    std::to_string(r));
    const auto fields = split_commas(trim(line));
    if (static_cast<long>(fields.size()) != cols)
      throw ParseError(line_no, "expected " + std::to_string(cols) + " values, found " +
                                    std::to_string(fields.size()));
    for (long c = 0; c < cols; ++c) {
      const double v = parse_field<double>(fields[static_cast<std::size_t>(c)], line_no, "value");
      if (!std::isfinite(v)) throw ParseError(line_no, "non-finite value");
      m(r, c) = v;
    }
  }
  if (next_line()) throw ParseError(line_no, "trailing data after " + std::to_string(rows) + " rows");
  return m;
}

Matrix read_matrix_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path);
  return read_matrix_csv(in);
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  std::ostringstream buf;
  buf << std::setprecision(std::numeric_limits<double>::max_digits10);
  buf << m.rows() << ',' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) buf << ',';
      buf << m(r, c);
    }
    buf << '\n';
  }
  out << buf.str();
}

void write_matrix_csv_file(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_matrix_csv(out, m);
}

}  // namespace rfr
