#pragma once

// Fixed-point arithmetic over Z_{2^64}. Every ring operation wraps; the
// signed interpretation is two's complement.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "merge/errors.hpp"

namespace merge {

using RingElement = std::uint64_t;

struct FixedConfig {
  int frac_bits = 16;

  constexpr FixedConfig() = default;
  explicit constexpr FixedConfig(int bits) : frac_bits(bits) {}

  void validate() const;
  double scale() const;
  bool operator==(const FixedConfig&) const = default;
};

RingElement encode(double x, FixedConfig cfg = {});
double decode(RingElement r, FixedConfig cfg = {});

inline RingElement ring_add(RingElement a, RingElement b) { return a + b; }
inline RingElement ring_sub(RingElement a, RingElement b) { return a - b; }
inline RingElement ring_neg(RingElement a) { return RingElement{0} - a; }
inline RingElement ring_mul(RingElement a, RingElement b) { return a * b; }

// Arithmetic right shift of the signed reading of `a`.
inline RingElement ring_shift(RingElement a, int bits) {
  return static_cast<RingElement>(static_cast<std::int64_t>(a) >> bits);
}

// Fixed-point product: wrapping 64-bit product, then arithmetic shift.
inline RingElement mul_trunc(RingElement a, RingElement b, FixedConfig cfg = {}) {
  return ring_shift(ring_mul(a, b), cfg.frac_bits);
}

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of ring elements carrying its fixed-point config.
// Rank 1 and rank 2 are the only ranks the protocols use; a rank-1 tensor
// reads as a single row.
class FixedTensor {
 public:
  FixedTensor() = default;
  explicit FixedTensor(Shape shape, FixedConfig cfg = {});
  FixedTensor(Shape shape, std::vector<RingElement> data, FixedConfig cfg = {});

  static FixedTensor encode(Shape shape, std::span<const double> values, FixedConfig cfg = {});
  static FixedTensor scalar(double x, FixedConfig cfg = {});

  std::vector<double> decode() const;

  const Shape& shape() const { return shape_; }
  const FixedConfig& config() const { return cfg_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<RingElement> data() { return data_; }
  std::span<const RingElement> data() const { return data_; }
  RingElement& operator[](std::size_t i) { return data_[i]; }
  RingElement operator[](std::size_t i) const { return data_[i]; }
  RingElement& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  RingElement at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool operator==(const FixedTensor&) const = default;

 private:
  Shape shape_;
  std::vector<RingElement> data_;
  FixedConfig cfg_;
};

// Tensor-level ring kernels. None of these truncate unless named so.
namespace ring {

void require_same_shape(const FixedTensor& a, const FixedTensor& b, const char* what);

FixedTensor add(const FixedTensor& a, const FixedTensor& b);
FixedTensor sub(const FixedTensor& a, const FixedTensor& b);
FixedTensor neg(const FixedTensor& a);
// Elementwise product. `b` may also be a single row broadcast over the rows
// of `a`, or a single element.
FixedTensor mul(const FixedTensor& a, const FixedTensor& b);
// (m x k) . (k x n) over the ring.
FixedTensor matmul(const FixedTensor& a, const FixedTensor& b);
FixedTensor transpose(const FixedTensor& a);
FixedTensor truncate(const FixedTensor& a);
// Expand a broadcastable operand of `mul` to the full shape of `like`.
FixedTensor broadcast_to(const FixedTensor& b, const FixedTensor& like);

FixedTensor slice_rows(const FixedTensor& a, std::size_t begin, std::size_t end);
FixedTensor slice_block(const FixedTensor& a, std::size_t row0, std::size_t rows,
                        std::size_t col0, std::size_t cols);
FixedTensor slice_cols(const FixedTensor& a, std::size_t begin, std::size_t end);
FixedTensor concat_rows(const FixedTensor& top, const FixedTensor& bottom);
FixedTensor concat_cols(std::span<const FixedTensor> parts);
FixedTensor reshape(FixedTensor a, Shape shape);

}  // namespace ring
}  // namespace merge
