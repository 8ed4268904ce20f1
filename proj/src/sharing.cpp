#include "merge/sharing.hpp"

namespace merge {

namespace {

FixedTensor uniform(const Shape& shape, FixedConfig cfg, std::mt19937_64& rng) {
  FixedTensor t(shape, cfg);
  for (auto& v : t.data()) v = rng();
  return t;
}

enum class ProductKind { Elementwise, Matmul };

FixedTensor apply(ProductKind kind, const FixedTensor& a, const FixedTensor& b) {
  return kind == ProductKind::Matmul ? ring::matmul(a, b) : ring::mul(a, b);
}

// z_i = c_i + e*b_i + a_i*d (+ e*d for party 0), then local truncation.
SharedTensor combine(ProductKind kind, const FixedTensor& e, const FixedTensor& d,
                     const SharedTensor& a, const SharedTensor& b, const SharedTensor& c) {
  SharedTensor z;
  for (Party p : {Party::Client, Party::Server}) {
    FixedTensor zi = ring::add(c.share(p), apply(kind, e, b.share(p)));
    zi = ring::add(zi, apply(kind, a.share(p), d));
    if (p == Party::Client) zi = ring::add(zi, apply(kind, e, d));
    z.share(p) = std::move(zi);
  }
  return truncate_shared(z, z.config().frac_bits);
}

void require_same(const SharedTensor& x, const SharedTensor& y, const char* what) {
  ring::require_same_shape(x.shares[0], y.shares[0], what);
}

// Both parties reveal their shares of x - a; returns the opened difference.
FixedTensor exchange_difference(const SharedTensor& x, const SharedTensor& a, Channel& ch) {
  for (Party p : {Party::Client, Party::Server}) {
    const FixedTensor diff = ring::sub(x.share(p), a.share(p));
    ch.send(p, {diff.data().begin(), diff.data().end()});
  }
  FixedTensor opened = ring::sub(x.share(Party::Client), a.share(Party::Client));
  const auto from_server = ch.recv(Party::Client);
  const auto from_client = ch.recv(Party::Server);
  (void)from_client;  // the server's sum is identical; one copy suffices in lockstep
  for (std::size_t i = 0; i < opened.size(); ++i) opened[i] += from_server[i];
  return opened;
}

}  // namespace

SharedTensor::SharedTensor(FixedTensor s0, FixedTensor s1) : shares{std::move(s0), std::move(s1)} {
  if (shares[0].shape() != shares[1].shape() || shares[0].config() != shares[1].config()) {
    throw ShapeError("share shapes/configs disagree");
  }
}

// ---------------------------------------------------------------- Dealer

Dealer::Dealer(std::uint64_t seed) : rng_(seed) {}

SharedTensor Dealer::deal(const FixedTensor& plain) {
  offline_.charge(Category::Other, 16 * plain.size(), 0, 1);
  return share(plain, rng_);
}

SharedTensor Dealer::random_mask(const Shape& shape, FixedConfig cfg) {
  return deal(uniform(shape, cfg, rng_));
}

BeaverTriple Dealer::triple(const Shape& shape, FixedConfig cfg) {
  const FixedTensor a = uniform(shape, cfg, rng_);
  const FixedTensor b = uniform(shape, cfg, rng_);
  const FixedTensor c = ring::mul(a, b);
  return BeaverTriple(deal(a), deal(b), deal(c));
}

std::vector<BeaverTriple> Dealer::gen_triples(std::size_t count, FixedConfig cfg) {
  std::vector<BeaverTriple> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(triple({1}, cfg));
  return out;
}

MatrixTriple Dealer::matrix_triple(std::size_t m, std::size_t k, std::size_t n, FixedConfig cfg) {
  const FixedTensor a = uniform({m, k}, cfg, rng_);
  const FixedTensor b = uniform({k, n}, cfg, rng_);
  const FixedTensor c = ring::matmul(a, b);
  return MatrixTriple(deal(a), deal(b), deal(c));
}

SharedTensor Dealer::product_correlation(const SharedTensor& mask_x, const SharedTensor& mask_y) {
  return deal(ring::mul(reconstruct(mask_x), reconstruct(mask_y)));
}

SharedTensor Dealer::matmul_correlation(const SharedTensor& mask_x, const SharedTensor& mask_y) {
  return deal(ring::matmul(reconstruct(mask_x), reconstruct(mask_y)));
}

SharedTensor Dealer::relu_gadget(const FixedTensor& opened, const SharedTensor& mask) {
  FixedTensor x = ring::sub(opened, reconstruct(mask));
  for (auto& v : x.data())
    if (static_cast<std::int64_t>(v) < 0) v = 0;
  return deal(x);
}

// ---------------------------------------------------------------- local ops

SharedTensor share(const FixedTensor& x, std::mt19937_64& rng) {
  return share_with(x, uniform(x.shape(), x.config(), rng));
}

SharedTensor share_with(const FixedTensor& x, const FixedTensor& r) {
  ring::require_same_shape(x, r, "share_with");
  return SharedTensor(r, ring::sub(x, r));
}

SharedTensor share_input(const FixedTensor& x, Party owner, std::mt19937_64& rng, Channel& ch) {
  SharedTensor s = share(x, rng);
  // The owner keeps share(owner) and ships the other one.
  const FixedTensor& outgoing = s.share(other(owner));
  ch.send(owner, {outgoing.data().begin(), outgoing.data().end()});
  auto received = ch.recv(other(owner));
  s.share(other(owner)) = FixedTensor(x.shape(), std::move(received), x.config());
  ch.end_round();
  ch.count_op();
  return s;
}

FixedTensor reconstruct(const SharedTensor& s) {
  return ring::add(s.shares[0], s.shares[1]);
}

SharedTensor public_shared(const FixedTensor& k) {
  return SharedTensor(FixedTensor(k.shape(), k.config()), k);
}

SharedTensor add_shared(const SharedTensor& x, const SharedTensor& y) {
  require_same(x, y, "add_shared");
  return SharedTensor(ring::add(x.shares[0], y.shares[0]), ring::add(x.shares[1], y.shares[1]));
}

SharedTensor sub_shared(const SharedTensor& x, const SharedTensor& y) {
  require_same(x, y, "sub_shared");
  return SharedTensor(ring::sub(x.shares[0], y.shares[0]), ring::sub(x.shares[1], y.shares[1]));
}

SharedTensor neg_shared(const SharedTensor& x) {
  return SharedTensor(ring::neg(x.shares[0]), ring::neg(x.shares[1]));
}

SharedTensor add_public(const SharedTensor& x, const FixedTensor& k) {
  SharedTensor out = x;
  out.share(Party::Server) = ring::add(x.share(Party::Server), ring::broadcast_to(k, x.shares[1]));
  return out;
}

SharedTensor truncate_shared(const SharedTensor& x, int bits) {
  SharedTensor out = x;
  for (auto& s : out.shares)
    for (auto& v : s.data()) v = ring_shift(v, bits);
  // Each local shift floors; with uniform shares the carry lost between the
  // two halves is one unit with probability 1/2 per share, so party 0 adds
  // one unit back to centre the error.
  for (auto& v : out.share(Party::Client).data()) v += 1;
  return out;
}

SharedTensor mul_public(const SharedTensor& x, const FixedTensor& k) {
  return truncate_shared(SharedTensor(ring::mul(x.shares[0], k), ring::mul(x.shares[1], k)),
                         x.config().frac_bits);
}

SharedTensor mul_public(const SharedTensor& x, double k) {
  return mul_public(x, FixedTensor::scalar(k, x.config()));
}

SharedTensor mul_int(const SharedTensor& x, std::int64_t k) {
  const FixedTensor kk({1}, {static_cast<RingElement>(k)}, x.config());
  return SharedTensor(ring::mul(x.shares[0], kk), ring::mul(x.shares[1], kk));
}

SharedTensor row_sum(const SharedTensor& x) {
  SharedTensor out(FixedTensor({x.rows(), 1}, x.config()), FixedTensor({x.rows(), 1}, x.config()));
  for (int p = 0; p < 2; ++p)
    for (std::size_t i = 0; i < x.rows(); ++i) {
      RingElement acc = 0;
      for (std::size_t j = 0; j < x.cols(); ++j) acc += x.shares[p].at(i, j);
      out.shares[p][i] = acc;
    }
  return out;
}

SharedTensor transpose(const SharedTensor& x) {
  return SharedTensor(ring::transpose(x.shares[0]), ring::transpose(x.shares[1]));
}

SharedTensor slice_rows(const SharedTensor& x, std::size_t begin, std::size_t end) {
  return SharedTensor(ring::slice_rows(x.shares[0], begin, end),
                      ring::slice_rows(x.shares[1], begin, end));
}

SharedTensor slice_cols(const SharedTensor& x, std::size_t begin, std::size_t end) {
  return SharedTensor(ring::slice_cols(x.shares[0], begin, end),
                      ring::slice_cols(x.shares[1], begin, end));
}

SharedTensor slice_block(const SharedTensor& x, std::size_t row0, std::size_t rows,
                         std::size_t col0, std::size_t cols) {
  return SharedTensor(ring::slice_block(x.shares[0], row0, rows, col0, cols),
                      ring::slice_block(x.shares[1], row0, rows, col0, cols));
}

SharedTensor concat_rows(const SharedTensor& top, const SharedTensor& bottom) {
  if (top.size() == 0) return bottom;
  return SharedTensor(ring::concat_rows(top.shares[0], bottom.shares[0]),
                      ring::concat_rows(top.shares[1], bottom.shares[1]));
}

SharedTensor concat_cols(const std::vector<SharedTensor>& parts) {
  std::vector<FixedTensor> p0, p1;
  for (const auto& p : parts) {
    p0.push_back(p.shares[0]);
    p1.push_back(p.shares[1]);
  }
  return SharedTensor(ring::concat_cols(p0), ring::concat_cols(p1));
}

SharedTensor repeat_cols(const SharedTensor& col, std::size_t cols) {
  SharedTensor out(FixedTensor({col.rows(), cols}, col.config()),
                   FixedTensor({col.rows(), cols}, col.config()));
  for (int p = 0; p < 2; ++p)
    for (std::size_t i = 0; i < col.rows(); ++i)
      for (std::size_t j = 0; j < cols; ++j) out.shares[p].at(i, j) = col.shares[p][i];
  return out;
}

// ---------------------------------------------------------------- interactive

SharedTensor beaver_mul(const SharedTensor& x, const SharedTensor& y, BeaverTriple& t, Channel& ch) {
  if (t.used) throw ProtocolError("beaver triple reused");
  require_same(x, y, "beaver_mul");
  require_same(x, t.a, "beaver_mul triple");
  require_same(x, t.c, "beaver_mul triple");
  t.used = true;
  // epsilon and delta travel in the same round.
  const FixedTensor e = exchange_difference(x, t.a, ch);
  const FixedTensor d = exchange_difference(y, t.b, ch);
  ch.end_round();
  ch.count_op();
  return combine(ProductKind::Elementwise, e, d, t.a, t.b, t.c);
}

SharedTensor matmul_shared(const SharedTensor& x, const SharedTensor& y, MatrixTriple& t,
                           Channel& ch) {
  if (t.used) throw ProtocolError("matrix triple reused");
  if (x.shape().size() != 2 || y.shape().size() != 2 || x.cols() != y.rows()) {
    throw ShapeError("matmul_shared: incompatible " + shape_str(x.shape()) + " . " +
                     shape_str(y.shape()));
  }
  require_same(x, t.a, "matmul_shared triple A");
  require_same(y, t.b, "matmul_shared triple B");
  t.used = true;
  const FixedTensor e = exchange_difference(x, t.a, ch);
  const FixedTensor d = exchange_difference(y, t.b, ch);
  ch.end_round();
  ch.count_op();
  return combine(ProductKind::Matmul, e, d, t.a, t.b, t.c);
}

FixedTensor open(const SharedTensor& x, Channel& ch, Party to) {
  const FixedTensor& theirs = x.share(other(to));
  ch.send(other(to), {theirs.data().begin(), theirs.data().end()});
  const auto received = ch.recv(to);
  ch.end_round();
  ch.count_op();
  FixedTensor out = x.share(to);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += received[i];
  return out;
}

SharedTensor beaver_mul(const SharedTensor& x, const SharedTensor& y, Dealer& d, Channel& ch) {
  auto t = d.triple(x.shape(), x.config());
  return beaver_mul(x, y, t, ch);
}

SharedTensor matmul_shared(const SharedTensor& x, const SharedTensor& y, Dealer& d, Channel& ch) {
  if (x.shape().size() != 2 || y.shape().size() != 2 || x.cols() != y.rows()) {
    throw ShapeError("matmul_shared: incompatible " + shape_str(x.shape()) + " . " +
                     shape_str(y.shape()));
  }
  auto t = d.matrix_triple(x.rows(), x.cols(), y.cols(), x.config());
  return matmul_shared(x, y, t, ch);
}

// ---------------------------------------------------------------- masks

MaskedTensor mask_operand(const SharedTensor& x, Dealer& d, Channel& ch) {
  MaskedTensor m;
  m.value = x;
  m.mask = d.random_mask(x.shape(), x.config());
  m.opened = exchange_difference(x, m.mask, ch);
  ch.end_round();
  ch.count_op();
  return m;
}

SharedTensor mul_masked(const MaskedTensor& x, const MaskedTensor& y, Dealer& d) {
  const SharedTensor c = d.product_correlation(x.mask, y.mask);
  return combine(ProductKind::Elementwise, x.opened, y.opened, x.mask, y.mask, c);
}

SharedTensor matmul_masked(const MaskedTensor& x, const MaskedTensor& y, Dealer& d) {
  if (x.cols() != y.rows()) {
    throw ShapeError("matmul_masked: incompatible " + shape_str(x.shape()) + " . " +
                     shape_str(y.shape()));
  }
  const SharedTensor c = d.matmul_correlation(x.mask, y.mask);
  return combine(ProductKind::Matmul, x.opened, y.opened, x.mask, y.mask, c);
}

MaskedTensor transpose(const MaskedTensor& x) {
  return {transpose(x.value), transpose(x.mask), ring::transpose(x.opened)};
}

MaskedTensor slice_block(const MaskedTensor& x, std::size_t row0, std::size_t rows,
                         std::size_t col0, std::size_t cols) {
  return {slice_block(x.value, row0, rows, col0, cols), slice_block(x.mask, row0, rows, col0, cols),
          ring::slice_block(x.opened, row0, rows, col0, cols)};
}

MaskedTensor slice_cols(const MaskedTensor& x, std::size_t begin, std::size_t end) {
  return slice_block(x, 0, x.rows(), begin, end - begin);
}

MaskedTensor slice_rows(const MaskedTensor& x, std::size_t begin, std::size_t end) {
  return slice_block(x, begin, end - begin, 0, x.cols());
}

MaskedTensor concat_rows(const MaskedTensor& top, const MaskedTensor& bottom) {
  if (top.value.size() == 0) return bottom;
  return {concat_rows(top.value, bottom.value), concat_rows(top.mask, bottom.mask),
          ring::concat_rows(top.opened, bottom.opened)};
}

}  // namespace merge
