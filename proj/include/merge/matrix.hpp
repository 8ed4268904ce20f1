#pragma once

// Dense row-major double matrix for the plaintext reference paths.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "merge/errors.hpp"

namespace merge {

using Vec = std::vector<double>;

struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix from_row(std::span<const double> row);
  static Matrix gaussian(std::size_t r, std::size_t c, double stddev, std::mt19937_64& rng);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  Vec row_vec(std::size_t i) const { return {row(i).begin(), row(i).end()}; }

  bool operator==(const Matrix&) const = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double k);
// Adds `bias` to every row.
Matrix add_row(const Matrix& a, std::span<const double> bias);
// Multiplies column j by s[j] (right-multiplication by diag(s)).
Matrix scale_cols(const Matrix& a, std::span<const double> s);
// Multiplies row i by s[i] (left-multiplication by diag(s)).
Matrix scale_rows(const Matrix& a, std::span<const double> s);
Vec vec_matmul(std::span<const double> v, const Matrix& m);

Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t end);
Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t end);
Matrix concat_rows(const Matrix& top, const Matrix& bottom);
Matrix concat_cols(std::span<const Matrix> parts);
Matrix append_row(const Matrix& a, std::span<const double> row);

double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
bool all_finite(const Matrix& a);

}  // namespace merge
