// Minimal CSV reading/writing for datasets and loss traces.
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dlinalg/matrix.hpp"

namespace dla {

// Parse a numeric CSV file into a matrix. Blank lines and lines starting with
// '#' are skipped; every remaining row must have the same number of fields.
template <typename T>
Matrix<T> load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_csv: cannot open '" + path + "'");
  std::vector<std::vector<T>> rows;
  std::string line;
  index_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::vector<T> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(field, &pos);
        while (pos < field.size() &&
               (field[pos] == ' ' || field[pos] == '\t' || field[pos] == '\r'))
          ++pos;
        if (pos != field.size()) throw std::invalid_argument(field);
        row.push_back(static_cast<T>(v));
      } catch (const std::exception&) {
        throw IoError("load_csv: '" + path + "' line " +
                      std::to_string(lineno) + ": bad field '" + field + "'");
      }
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("load_csv: '" + path + "' line " + std::to_string(lineno) +
                    ": expected " + std::to_string(rows.front().size()) +
                    " fields, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("load_csv: '" + path + "' has no data rows");
  Matrix<T> m(static_cast<index_t>(rows.size()),
              static_cast<index_t>(rows.front().size()));
  for (index_t i = 0; i < m.rows(); ++i)
    for (index_t j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

template <typename T>
void save_csv(const std::string& path, ConstMatrixView<T> m,
              const std::string& header = "") {
  std::ofstream out(path);
  if (!out) throw IoError("save_csv: cannot open '" + path + "' for writing");
  out.precision(17);
  if (!header.empty()) out << "# " << header << '\n';
  for (index_t i = 0; i < m.rows; ++i) {
    for (index_t j = 0; j < m.cols; ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
  if (!out) throw IoError("save_csv: write to '" + path + "' failed");
}

// Shift/scale each column to zero mean and unit variance (constant columns are
// left centered only). Returns {means, stds}.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> standardize_columns(MatrixView<T> m) {
  std::vector<T> mean(static_cast<std::size_t>(m.cols), T(0));
  std::vector<T> sd(static_cast<std::size_t>(m.cols), T(0));
  for (index_t j = 0; j < m.cols; ++j) {
    T s = T(0);
    for (index_t i = 0; i < m.rows; ++i) s += m(i, j);
    mean[j] = s / T(m.rows);
    T v = T(0);
    for (index_t i = 0; i < m.rows; ++i) {
      const T d = m(i, j) - mean[j];
      v += d * d;
    }
    sd[j] = std::sqrt(v / T(m.rows));
    const T div = sd[j] > T(0) ? sd[j] : T(1);
    for (index_t i = 0; i < m.rows; ++i) m(i, j) = (m(i, j) - mean[j]) / div;
  }
  return {std::move(mean), std::move(sd)};
}

}  // namespace dla
