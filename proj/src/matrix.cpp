#include "merge/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace merge {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string dims(const Matrix& a) {
  return std::to_string(a.rows) + "x" + std::to_string(a.cols);
}

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  require(data.size() == r * c, "Matrix: " + std::to_string(data.size()) + " values for " +
                                    std::to_string(r) + "x" + std::to_string(c));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_row(std::span<const double> row) {
  return Matrix(1, row.size(), std::vector<double>(row.begin(), row.end()));
}

Matrix Matrix::gaussian(std::size_t r, std::size_t c, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, stddev);
  Matrix m(r, c);
  for (auto& v : m.data) v = nd(rng);
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, "matmul: " + dims(a) + " . " + dims(b));
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows && a.cols == b.cols, "add: " + dims(a) + " + " + dims(b));
  Matrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows && a.cols == b.cols, "sub: " + dims(a) + " - " + dims(b));
  Matrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Matrix scale(const Matrix& a, double k) {
  Matrix out = a;
  for (auto& v : out.data) v *= k;
  return out;
}

Matrix add_row(const Matrix& a, std::span<const double> bias) {
  require(bias.size() == a.cols, "add_row: bias width");
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(i, j) += bias[j];
  return out;
}

Matrix scale_cols(const Matrix& a, std::span<const double> s) {
  require(s.size() == a.cols, "scale_cols: width");
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(i, j) *= s[j];
  return out;
}

Matrix scale_rows(const Matrix& a, std::span<const double> s) {
  require(s.size() == a.rows, "scale_rows: height");
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(i, j) *= s[i];
  return out;
}

Vec vec_matmul(std::span<const double> v, const Matrix& m) {
  require(v.size() == m.rows, "vec_matmul: width");
  Vec out(m.cols, 0.0);
  for (std::size_t k = 0; k < m.rows; ++k)
    for (std::size_t j = 0; j < m.cols; ++j) out[j] += v[k] * m(k, j);
  return out;
}

Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= a.rows, "slice_rows out of range");
  return Matrix(end - begin, a.cols,
                std::vector<double>(a.data.begin() + static_cast<std::ptrdiff_t>(begin * a.cols),
                                    a.data.begin() + static_cast<std::ptrdiff_t>(end * a.cols)));
}

Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= a.cols, "slice_cols out of range");
  Matrix out(a.rows, end - begin);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = a(i, j);
  return out;
}

Matrix concat_rows(const Matrix& top, const Matrix& bottom) {
  if (top.rows == 0) return bottom;
  require(top.cols == bottom.cols, "concat_rows: widths differ");
  Matrix out = top;
  out.rows += bottom.rows;
  out.data.insert(out.data.end(), bottom.data.begin(), bottom.data.end());
  return out;
}

Matrix concat_cols(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(p.rows == parts[0].rows, "concat_cols: heights differ");
    cols += p.cols;
  }
  Matrix out(parts[0].rows, cols);
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows; ++i)
      for (std::size_t j = 0; j < p.cols; ++j) out(i, c0 + j) = p(i, j);
    c0 += p.cols;
  }
  return out;
}

Matrix append_row(const Matrix& a, std::span<const double> row) {
  return concat_rows(a, Matrix::from_row(row));
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows && a.cols == b.cols, "max_abs_diff: " + dims(a) + " vs " + dims(b));
  return max_abs_diff(std::span<const double>(a.data), std::span<const double>(b.data));
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "max_abs_diff: sizes differ");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.data.begin(), a.data.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace merge
