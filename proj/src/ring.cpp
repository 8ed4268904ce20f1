#include "merge/ring.hpp"

#include <cmath>
#include <sstream>

namespace merge {

void FixedConfig::validate() const {
  if (frac_bits < 1 || frac_bits > 32) {
    throw ShapeError("frac_bits must lie in [1, 32], got " + std::to_string(frac_bits));
  }
}

double FixedConfig::scale() const { return std::ldexp(1.0, frac_bits); }

RingElement encode(double x, FixedConfig cfg) {
  cfg.validate();
  const double bound = std::ldexp(1.0, 63 - cfg.frac_bits);
  if (!(std::fabs(x) < bound)) {
    throw EncodingRangeError("value out of fixed-point range: " + std::to_string(x));
  }
  // std::round is half-away-from-zero.
  const auto scaled = static_cast<std::int64_t>(std::round(std::ldexp(x, cfg.frac_bits)));
  return static_cast<RingElement>(scaled);
}

double decode(RingElement r, FixedConfig cfg) {
  return std::ldexp(static_cast<double>(static_cast<std::int64_t>(r)), -cfg.frac_bits);
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

FixedTensor::FixedTensor(Shape shape, FixedConfig cfg)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0), cfg_(cfg) {
  cfg_.validate();
}

FixedTensor::FixedTensor(Shape shape, std::vector<RingElement> data, FixedConfig cfg)
    : shape_(std::move(shape)), data_(std::move(data)), cfg_(cfg) {
  cfg_.validate();
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

FixedTensor FixedTensor::encode(Shape shape, std::span<const double> values, FixedConfig cfg) {
  if (values.size() != shape_size(shape)) {
    throw ShapeError("encode: value count does not match shape " + shape_str(shape));
  }
  std::vector<RingElement> data(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) data[i] = merge::encode(values[i], cfg);
  return FixedTensor(std::move(shape), std::move(data), cfg);
}

FixedTensor FixedTensor::scalar(double x, FixedConfig cfg) {
  return FixedTensor({1}, {merge::encode(x, cfg)}, cfg);
}

std::vector<double> FixedTensor::decode() const {
  std::vector<double> out(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) out[i] = merge::decode(data_[i], cfg_);
  return out;
}

namespace ring {

void require_same_shape(const FixedTensor& a, const FixedTensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

FixedTensor add(const FixedTensor& a, const FixedTensor& b) {
  require_same_shape(a, b, "ring add");
  FixedTensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

FixedTensor sub(const FixedTensor& a, const FixedTensor& b) {
  require_same_shape(a, b, "ring sub");
  FixedTensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

FixedTensor neg(const FixedTensor& a) {
  FixedTensor out = a;
  for (auto& v : out.data()) v = ring_neg(v);
  return out;
}

FixedTensor broadcast_to(const FixedTensor& b, const FixedTensor& like) {
  if (b.shape() == like.shape()) return b;
  FixedTensor out(like.shape(), like.config());
  if (b.size() == 1) {
    for (auto& v : out.data()) v = b[0];
    return out;
  }
  if (b.size() == like.cols()) {
    const std::size_t n = like.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = b[i % n];
    return out;
  }
  throw ShapeError("cannot broadcast " + shape_str(b.shape()) + " to " + shape_str(like.shape()));
}

FixedTensor mul(const FixedTensor& a, const FixedTensor& b) {
  const FixedTensor bb = broadcast_to(b, a);
  FixedTensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bb[i];
  return out;
}

FixedTensor matmul(const FixedTensor& a, const FixedTensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
    throw ShapeError("ring matmul: incompatible " + shape_str(a.shape()) + " . " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  FixedTensor out({m, n}, a.config());
  for (std::size_t i = 0; i < m; ++i) {
    RingElement* orow = out.data().data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const RingElement av = a.at(i, p);
      const RingElement* brow = b.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

FixedTensor transpose(const FixedTensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  FixedTensor out({n, m}, a.config());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

FixedTensor truncate(const FixedTensor& a) {
  FixedTensor out = a;
  const int f = a.config().frac_bits;
  for (auto& v : out.data()) v = ring_shift(v, f);
  return out;
}

FixedTensor slice_rows(const FixedTensor& a, std::size_t begin, std::size_t end) {
  return slice_block(a, begin, end - begin, 0, a.cols());
}

FixedTensor slice_cols(const FixedTensor& a, std::size_t begin, std::size_t end) {
  return slice_block(a, 0, a.rows(), begin, end - begin);
}

FixedTensor slice_block(const FixedTensor& a, std::size_t row0, std::size_t rows,
                        std::size_t col0, std::size_t cols) {
  if (row0 + rows > a.rows() || col0 + cols > a.cols()) {
    throw ShapeError("slice out of bounds for " + shape_str(a.shape()));
  }
  FixedTensor out({rows, cols}, a.config());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = a.at(row0 + i, col0 + j);
  return out;
}

FixedTensor concat_rows(const FixedTensor& top, const FixedTensor& bottom) {
  if (top.size() == 0) return bottom;
  if (top.cols() != bottom.cols()) throw ShapeError("concat_rows: column mismatch");
  std::vector<RingElement> data(top.data().begin(), top.data().end());
  data.insert(data.end(), bottom.data().begin(), bottom.data().end());
  return FixedTensor({top.rows() + bottom.rows(), top.cols()}, std::move(data), top.config());
}

FixedTensor concat_cols(std::span<const FixedTensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row mismatch");
    n += p.cols();
  }
  FixedTensor out({m, n}, parts[0].config());
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out.at(i, c0 + j) = p.at(i, j);
    c0 += p.cols();
  }
  return out;
}

FixedTensor reshape(FixedTensor a, Shape shape) {
  if (shape_size(shape) != a.size()) throw ShapeError("reshape: size mismatch");
  std::vector<RingElement> data(a.data().begin(), a.data().end());
  return FixedTensor(std::move(shape), std::move(data), a.config());
}

}  // namespace ring
}  // namespace merge
