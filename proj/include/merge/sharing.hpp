#pragma once

// Two-party additive secret sharing over Z_{2^64} with a trusted dealer.
//
// Multiplication comes in two flavours:
//  * Beaver triples (beaver_mul, matmul_shared): both operands are masked
//    with fresh dealer randomness and the masked values opened in one round.
//  * Persistent masks (MaskedTensor): a value that is multiplied many times
//    (a weight, a cached activation) is masked once; its opened difference is
//    reused, and the dealer supplies a product correlation for each pair of
//    masks that get multiplied. Products of two masked operands need no
//    online communication.
// In both cases the ring product is formed first and each party then
// truncates its own share by frac_bits (probabilistic truncation).

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "merge/channel.hpp"
#include "merge/ledger.hpp"
#include "merge/ring.hpp"

namespace merge {

struct SharedTensor {
  std::array<FixedTensor, 2> shares;  // indexed by Party

  SharedTensor() = default;
  SharedTensor(FixedTensor s0, FixedTensor s1);

  FixedTensor& share(Party p) { return shares[index(p)]; }
  const FixedTensor& share(Party p) const { return shares[index(p)]; }
  const Shape& shape() const { return shares[0].shape(); }
  FixedConfig config() const { return shares[0].config(); }
  std::size_t size() const { return shares[0].size(); }
  std::size_t rows() const { return shares[0].rows(); }
  std::size_t cols() const { return shares[0].cols(); }
};

// Elementwise triple; c = a * b over the ring (not truncated). Single use.
struct BeaverTriple {
  SharedTensor a, b, c;
  bool used = false;

  BeaverTriple() = default;
  BeaverTriple(SharedTensor a_, SharedTensor b_, SharedTensor c_)
      : a(std::move(a_)), b(std::move(b_)), c(std::move(c_)) {}
  BeaverTriple(BeaverTriple&&) = default;
  BeaverTriple& operator=(BeaverTriple&&) = default;
  BeaverTriple(const BeaverTriple&) = delete;
  BeaverTriple& operator=(const BeaverTriple&) = delete;
};

// A (m x k), B (k x n), C = A . B over the ring. Single use.
struct MatrixTriple {
  SharedTensor a, b, c;
  bool used = false;

  MatrixTriple() = default;
  MatrixTriple(SharedTensor a_, SharedTensor b_, SharedTensor c_)
      : a(std::move(a_)), b(std::move(b_)), c(std::move(c_)) {}
  MatrixTriple(MatrixTriple&&) = default;
  MatrixTriple& operator=(MatrixTriple&&) = default;
  MatrixTriple(const MatrixTriple&) = delete;
  MatrixTriple& operator=(const MatrixTriple&) = delete;
};

// A shared value together with a dealer mask and the public difference
// opened = value - mask. Treat as immutable: the opened difference is only
// safe to reuse while the value it hides stays fixed.
struct MaskedTensor {
  SharedTensor value;
  SharedTensor mask;
  FixedTensor opened;

  const Shape& shape() const { return value.shape(); }
  std::size_t rows() const { return value.rows(); }
  std::size_t cols() const { return value.cols(); }
};

// Trusted dealer for the offline phase. Everything it hands out is charged
// to its own offline ledger (8 bytes per element per receiving party), never
// to the online channel.
class Dealer {
 public:
  explicit Dealer(std::uint64_t seed);

  std::vector<BeaverTriple> gen_triples(std::size_t count, FixedConfig cfg = {});
  BeaverTriple triple(const Shape& shape, FixedConfig cfg = {});
  MatrixTriple matrix_triple(std::size_t m, std::size_t k, std::size_t n, FixedConfig cfg = {});

  // Fresh uniform sharing of a uniform random tensor.
  SharedTensor random_mask(const Shape& shape, FixedConfig cfg);
  // Shares of mask_x * broadcast(mask_y) (elementwise) over the ring.
  SharedTensor product_correlation(const SharedTensor& mask_x, const SharedTensor& mask_y);
  // Shares of mask_x . mask_y (matrix product) over the ring.
  SharedTensor matmul_correlation(const SharedTensor& mask_x, const SharedTensor& mask_y);
  // Idealized comparison gadget: given the public masked value opened =
  // x + mask, deal fresh shares of relu(x).
  SharedTensor relu_gadget(const FixedTensor& opened, const SharedTensor& mask);

  const CommLedger& offline_ledger() const { return offline_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  SharedTensor deal(const FixedTensor& plain);

  std::mt19937_64 rng_;
  CommLedger offline_;
};

// ---- sharing, reconstruction, local ops (no communication) ----

SharedTensor share(const FixedTensor& x, std::mt19937_64& rng);
// Deterministic split with party-0 share `r`.
SharedTensor share_with(const FixedTensor& x, const FixedTensor& r);
// `owner` holds x, samples the split and sends the counter-party its share.
SharedTensor share_input(const FixedTensor& x, Party owner, std::mt19937_64& rng, Channel& ch);
FixedTensor reconstruct(const SharedTensor& s);
// Sharing of a public value: party 1 holds it, party 0 holds zeros.
SharedTensor public_shared(const FixedTensor& k);

SharedTensor add_shared(const SharedTensor& x, const SharedTensor& y);
SharedTensor sub_shared(const SharedTensor& x, const SharedTensor& y);
SharedTensor neg_shared(const SharedTensor& x);
SharedTensor add_public(const SharedTensor& x, const FixedTensor& k);
SharedTensor mul_public(const SharedTensor& x, const FixedTensor& k);
SharedTensor mul_public(const SharedTensor& x, double k);
// Local probabilistic division by 2^bits.
SharedTensor truncate_shared(const SharedTensor& x, int bits);
// Multiply by a public integer without rescaling (exact).
SharedTensor mul_int(const SharedTensor& x, std::int64_t k);
// Sum over columns -> (rows x 1).
SharedTensor row_sum(const SharedTensor& x);

SharedTensor transpose(const SharedTensor& x);
SharedTensor slice_rows(const SharedTensor& x, std::size_t begin, std::size_t end);
SharedTensor slice_cols(const SharedTensor& x, std::size_t begin, std::size_t end);
SharedTensor slice_block(const SharedTensor& x, std::size_t row0, std::size_t rows,
                         std::size_t col0, std::size_t cols);
SharedTensor concat_rows(const SharedTensor& top, const SharedTensor& bottom);
SharedTensor concat_cols(const std::vector<SharedTensor>& parts);
// Repeat a (rows x 1) column across `cols` columns.
SharedTensor repeat_cols(const SharedTensor& col, std::size_t cols);

// ---- interactive ops ----

// One round, 2 openings x 2 directions x 8 bytes per element.
SharedTensor beaver_mul(const SharedTensor& x, const SharedTensor& y, BeaverTriple& t, Channel& ch);
// One round, 16 * (m*k + k*n) bytes.
SharedTensor matmul_shared(const SharedTensor& x, const SharedTensor& y, MatrixTriple& t,
                           Channel& ch);
// Counter-party sends its share to `to`: 8 bytes per element, one round.
FixedTensor open(const SharedTensor& x, Channel& ch, Party to);

// Convenience wrappers drawing a fresh triple from the dealer.
SharedTensor beaver_mul(const SharedTensor& x, const SharedTensor& y, Dealer& d, Channel& ch);
SharedTensor matmul_shared(const SharedTensor& x, const SharedTensor& y, Dealer& d, Channel& ch);

// ---- persistent masks ----

// Opens value - mask to both parties: 16 bytes per element, one round.
MaskedTensor mask_operand(const SharedTensor& x, Dealer& d, Channel& ch);
// Elementwise x * broadcast(y); y may be a row vector or a single element.
SharedTensor mul_masked(const MaskedTensor& x, const MaskedTensor& y, Dealer& d);
SharedTensor matmul_masked(const MaskedTensor& x, const MaskedTensor& y, Dealer& d);

MaskedTensor transpose(const MaskedTensor& x);
MaskedTensor slice_block(const MaskedTensor& x, std::size_t row0, std::size_t rows,
                         std::size_t col0, std::size_t cols);
MaskedTensor slice_cols(const MaskedTensor& x, std::size_t begin, std::size_t end);
MaskedTensor slice_rows(const MaskedTensor& x, std::size_t begin, std::size_t end);
MaskedTensor concat_rows(const MaskedTensor& top, const MaskedTensor& bottom);

}  // namespace merge
