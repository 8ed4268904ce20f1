#include "merge/nonlinear.hpp"

#include <cmath>

namespace merge {

namespace {

SharedTensor add_const(const SharedTensor& x, double k) {
  return add_public(x, FixedTensor::scalar(k, x.config()));
}

}  // namespace

void NonlinearConfig::validate() const {
  if (exp_iterations < 1 || recip_newton_iterations < 1 || recip_init_exp_iterations < 1 ||
      ln_iterations < 1) {
    throw std::invalid_argument("NonlinearConfig: iteration counts must be >= 1");
  }
  if (!(ln_var_max > 0)) throw std::invalid_argument("NonlinearConfig: ln_var_max must be > 0");
}

SharedTensor repeat_rows(const SharedTensor& row, std::size_t rows) {
  const std::size_t d = row.size();
  SharedTensor out(FixedTensor({rows, d}, row.config()), FixedTensor({rows, d}, row.config()));
  for (int p = 0; p < 2; ++p)
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < d; ++j) out.shares[p].at(i, j) = row.shares[p][j];
  return out;
}

SharedTensor mpc_exp(const SharedTensor& x, int iterations, MpcContext& m) {
  if (iterations < 1) throw std::invalid_argument("mpc_exp: iterations must be >= 1");
  const SharedTensor u = add_const(truncate_shared(x, iterations - 1), 1.0);
  SharedTensor b = add_const(truncate_shared(beaver_mul(u, u, m.dealer, m.ch), 1), 0.5);
  for (int i = 1; i < iterations; ++i) b = beaver_mul(b, b, m.dealer, m.ch);
  return b;
}

SharedTensor mpc_exp(const SharedTensor& x, const NonlinearConfig& cfg, MpcContext& m) {
  return mpc_exp(x, cfg.exp_iterations, m);
}

SharedTensor mpc_reciprocal(const SharedTensor& x, const NonlinearConfig& cfg, MpcContext& m) {
  const SharedTensor arg = add_const(neg_shared(x), cfg.recip_init_offset);
  SharedTensor y = mpc_exp(arg, cfg.recip_init_exp_iterations, m);
  y = add_const(mul_public(y, cfg.recip_init_scale), cfg.recip_init_bias);
  for (int i = 0; i < cfg.recip_newton_iterations; ++i) {
    const SharedTensor xy = beaver_mul(x, y, m.dealer, m.ch);
    y = beaver_mul(y, add_const(neg_shared(xy), 2.0), m.dealer, m.ch);
  }
  return y;
}

SharedTensor mpc_softmax(const SharedTensor& x, const NonlinearConfig& cfg, MpcContext& m,
                         const FixedTensor& keep) {
  CategoryScope scope(m.ch, Category::Softmax);
  SharedTensor e = mpc_exp(add_const(x, -cfg.softmax_shift), cfg, m);
  if (keep.size() != 0) {
    // keep holds raw integers 0/1, so this product needs no rescaling.
    ring::require_same_shape(keep, x.shares[0], "mpc_softmax mask");
    e = SharedTensor(ring::mul(e.shares[0], keep), ring::mul(e.shares[1], keep));
  }
  const SharedTensor r = mpc_reciprocal(row_sum(e), cfg, m);
  return beaver_mul(e, repeat_cols(r, x.cols()), m.dealer, m.ch);
}

SharedTensor mpc_activation(const SharedTensor& x, const NonlinearConfig& cfg, MpcContext& m) {
  CategoryScope scope(m.ch, Category::Linear);
  if (cfg.activation == ActivationKind::Quad) {
    const SharedTensor sq = beaver_mul(x, x, m.dealer, m.ch);
    SharedTensor out = add_shared(mul_public(sq, cfg.quad.a2), mul_public(x, cfg.quad.a1));
    return add_const(out, cfg.quad.a0);
  }
  // Both parties reveal x + r; the dealer turns the opened value into fresh
  // shares of relu(x).
  const SharedTensor r = m.dealer.random_mask(x.shape(), x.config());
  const SharedTensor masked = add_shared(x, r);
  for (Party p : {Party::Client, Party::Server}) {
    const FixedTensor& s = masked.share(p);
    m.ch.send(p, {s.data().begin(), s.data().end()});
  }
  FixedTensor opened = masked.share(Party::Client);
  const auto from_server = m.ch.recv(Party::Client);
  (void)m.ch.recv(Party::Server);
  for (std::size_t i = 0; i < opened.size(); ++i) opened[i] += from_server[i];
  m.ch.end_round();
  m.ch.count_op();
  return m.dealer.relu_gadget(opened, r);
}

SharedTensor mpc_layernorm(const SharedTensor& x, const SharedTensor& gamma,
                           const SharedTensor& beta, const NonlinearConfig& cfg, MpcContext& m) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.size() != d || beta.size() != d) throw ShapeError("mpc_layernorm: gamma/beta width");
  const double inv_d = 1.0 / static_cast<double>(d);
  const SharedTensor mean = mul_public(row_sum(x), inv_d);
  const SharedTensor c = sub_shared(x, repeat_cols(mean, d));
  const SharedTensor var = mul_public(row_sum(beaver_mul(c, c, m.dealer, m.ch)), inv_d);

  // y <- y (3 - v y^2) / 2
  FixedTensor y0({n, 1}, x.config());
  const RingElement init = encode(1.0 / std::sqrt(cfg.ln_var_max), x.config());
  for (auto& v : y0.data()) v = init;
  SharedTensor y = public_shared(y0);
  for (int i = 0; i < cfg.ln_iterations; ++i) {
    const SharedTensor y2 = beaver_mul(y, y, m.dealer, m.ch);
    const SharedTensor vy2 = beaver_mul(var, y2, m.dealer, m.ch);
    y = beaver_mul(y, add_const(mul_public(vy2, -0.5), 1.5), m.dealer, m.ch);
  }
  const SharedTensor normed = beaver_mul(c, repeat_cols(y, d), m.dealer, m.ch);
  const SharedTensor scaled = beaver_mul(normed, repeat_rows(gamma, n), m.dealer, m.ch);
  return add_shared(scaled, repeat_rows(beta, n));
}

int exp_rounds(const NonlinearConfig& cfg) { return cfg.exp_iterations; }

int reciprocal_rounds(const NonlinearConfig& cfg) {
  return cfg.recip_init_exp_iterations + 2 * cfg.recip_newton_iterations;
}

int softmax_rounds(const NonlinearConfig& cfg) {
  return exp_rounds(cfg) + reciprocal_rounds(cfg) + 1;
}

}  // namespace merge
