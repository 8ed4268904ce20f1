#include "merge/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace merge {

namespace {

thread_local std::uint64_t g_lm_head_calls = 0;
thread_local std::uint64_t g_softmax_calls = 0;

constexpr double kInitStd = 0.08;

void check_matrix(const Matrix& m, std::size_t r, std::size_t c, const std::string& name) {
  if (m.rows != r || m.cols != c || m.data.size() != r * c) {
    throw ShapeError(name + ": expected " + std::to_string(r) + "x" + std::to_string(c) + ", got " +
                     std::to_string(m.rows) + "x" + std::to_string(m.cols));
  }
  if (!all_finite(m)) throw DataError(name + ": non-finite value");
}

void check_vec(const Vec& v, std::size_t n, const std::string& name) {
  if (v.size() != n) {
    throw ShapeError(name + ": expected length " + std::to_string(n) + ", got " +
                     std::to_string(v.size()));
  }
  for (double x : v)
    if (!std::isfinite(x)) throw DataError(name + ": non-finite value");
}

Vec gaussian_vec(std::size_t n, double mean, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(mean, kInitStd);
  Vec v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab == 0 || d == 0 || n_heads == 0) throw ShapeError("ModelConfig: zero dimension");
  if (d % n_heads != 0) throw ShapeError("ModelConfig: d not divisible by n_heads");
  if (d_inner < d) throw ShapeError("ModelConfig: d_inner < d");
  if (max_len < 2) throw ShapeError("ModelConfig: max_len < 2");
  if (!(ln_eps >= 0)) throw ShapeError("ModelConfig: negative ln_eps");
}

void ModelWeights::validate() const {
  cfg.validate();
  check_matrix(embed, cfg.vocab, cfg.d, "embed");
  check_matrix(positional, cfg.max_len, cfg.d, "positional");
  if (layers.size() != cfg.n_layers) throw ShapeError("layer count does not match config");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    check_matrix(w.wq, cfg.d, cfg.d, p + "wq");
    check_matrix(w.wk, cfg.d, cfg.d, p + "wk");
    check_matrix(w.wv, cfg.d, cfg.d, p + "wv");
    check_matrix(w.wd, cfg.d, cfg.d, p + "wd");
    check_vec(w.bd, cfg.d, p + "bd");
    check_vec(w.gamma1, cfg.d, p + "gamma1");
    check_vec(w.beta1, cfg.d, p + "beta1");
    check_matrix(w.wi, cfg.d, cfg.d_inner, p + "wi");
    check_vec(w.bi, cfg.d_inner, p + "bi");
    check_matrix(w.wo, cfg.d_inner, cfg.d, p + "wo");
    check_vec(w.bo, cfg.d, p + "bo");
    check_vec(w.gamma2, cfg.d, p + "gamma2");
    check_vec(w.beta2, cfg.d, p + "beta2");
  }
  check_matrix(cls, cfg.d, cfg.vocab, "cls");
}

ModelWeights ModelWeights::random(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelWeights m;
  m.cfg = cfg;
  m.embed = Matrix::gaussian(cfg.vocab, cfg.d, kInitStd, rng);
  m.positional = Matrix::gaussian(cfg.max_len, cfg.d, kInitStd, rng);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    LayerWeights w;
    w.wq = Matrix::gaussian(cfg.d, cfg.d, kInitStd, rng);
    w.wk = Matrix::gaussian(cfg.d, cfg.d, kInitStd, rng);
    w.wv = Matrix::gaussian(cfg.d, cfg.d, kInitStd, rng);
    w.wd = Matrix::gaussian(cfg.d, cfg.d, kInitStd, rng);
    w.bd = gaussian_vec(cfg.d, 0.0, rng);
    w.gamma1 = gaussian_vec(cfg.d, 1.0, rng);
    w.beta1 = gaussian_vec(cfg.d, 0.0, rng);
    w.wi = Matrix::gaussian(cfg.d, cfg.d_inner, kInitStd, rng);
    w.bi = gaussian_vec(cfg.d_inner, 0.0, rng);
    w.wo = Matrix::gaussian(cfg.d_inner, cfg.d, kInitStd, rng);
    w.bo = gaussian_vec(cfg.d, 0.0, rng);
    w.gamma2 = gaussian_vec(cfg.d, 1.0, rng);
    w.beta2 = gaussian_vec(cfg.d, 0.0, rng);
    m.layers.push_back(std::move(w));
  }
  m.cls = Matrix::gaussian(cfg.d, cfg.vocab, kInitStd, rng);
  return m;
}

Matrix one_hot(const std::vector<Token>& tokens, std::size_t vocab) {
  Matrix out(tokens.size(), vocab);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= vocab) throw DataError("token id " + std::to_string(tokens[i]) + " >= vocab");
    out(i, tokens[i]) = 1.0;
  }
  return out;
}

Matrix embed_lookup(const std::vector<Token>& tokens, const Matrix& table) {
  Matrix out(tokens.size(), table.cols);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= table.rows) {
      throw DataError("token id " + std::to_string(tokens[i]) + " >= vocab");
    }
    std::copy_n(table.row(tokens[i]).begin(), table.cols, out.row(i).begin());
  }
  return out;
}

Matrix embed_onehot(const std::vector<Token>& tokens, const Matrix& table) {
  return matmul(one_hot(tokens, table.rows), table);
}

Matrix add_positional(const Matrix& e, const Matrix& p, std::size_t first_position) {
  if (first_position + e.rows > p.rows) {
    throw ShapeError("sequence of " + std::to_string(first_position + e.rows) +
                     " exceeds max_len " + std::to_string(p.rows));
  }
  return add(e, slice_rows(p, first_position, first_position + e.rows));
}

Vec layernorm(std::span<const double> x, std::span<const double> gamma,
              std::span<const double> beta, double eps) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double denom = std::sqrt(var) + eps;
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / denom * gamma[i] + beta[i];
  return out;
}

Matrix layernorm_rows(const Matrix& x, std::span<const double> gamma,
                      std::span<const double> beta, double eps) {
  if (gamma.size() != x.cols || beta.size() != x.cols) throw ShapeError("layernorm: width");
  Matrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const Vec r = layernorm(x.row(i), gamma, beta, eps);
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

std::vector<HeadProjection> attention_projection(const Matrix& h, const LayerWeights& w,
                                                 const ModelConfig& cfg) {
  const Matrix q = matmul(h, w.wq), k = matmul(h, w.wk), v = matmul(h, w.wv);
  const std::size_t dk = cfg.head_dim();
  std::vector<HeadProjection> heads;
  for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
    heads.push_back({slice_cols(q, hd * dk, (hd + 1) * dk), slice_cols(k, hd * dk, (hd + 1) * dk),
                     slice_cols(v, hd * dk, (hd + 1) * dk)});
  }
  return heads;
}

Matrix attention_scores(const Matrix& q, const Matrix& k, bool causal) {
  ++g_softmax_calls;
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols));
  Matrix s = scale(matmul(q, transpose(k)), inv);
  for (std::size_t i = 0; i < s.rows; ++i) {
    const std::size_t visible = causal ? std::min(i + 1, s.cols) : s.cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < visible; ++j) mx = std::max(mx, s(i, j));
    double sum = 0;
    for (std::size_t j = 0; j < s.cols; ++j) {
      s(i, j) = j < visible ? std::exp(s(i, j) - mx) : 0.0;
      sum += s(i, j);
    }
    for (std::size_t j = 0; j < s.cols; ++j) s(i, j) /= sum;
  }
  return s;
}

AttentionResult self_attention(const Matrix& h, const LayerWeights& w, const ModelConfig& cfg,
                               bool causal) {
  AttentionResult r;
  std::vector<Matrix> ctx;
  for (const auto& head : attention_projection(h, w, cfg)) {
    r.probs.push_back(attention_scores(head.q, head.k, causal));
    ctx.push_back(matmul(r.probs.back(), head.v));
  }
  const Matrix mixed = add_row(matmul(concat_cols(ctx), w.wd), w.bd);
  r.x_att = layernorm_rows(add(mixed, h), w.gamma1, w.beta1, cfg.ln_eps);
  return r;
}

Matrix apply_activation(const Matrix& x, const ModelConfig& cfg) {
  Matrix out = x;
  for (auto& v : out.data) v = activate(cfg.activation, cfg.quad, v);
  return out;
}

Matrix feed_forward(const Matrix& x_att, const LayerWeights& w, const ModelConfig& cfg) {
  const Matrix inner = apply_activation(add_row(matmul(x_att, w.wi), w.bi), cfg);
  const Matrix out = add_row(matmul(inner, w.wo), w.bo);
  return layernorm_rows(add(out, x_att), w.gamma2, w.beta2, cfg.ln_eps);
}

Matrix transformer_layer(const Matrix& h, const LayerWeights& w, const ModelConfig& cfg) {
  return feed_forward(self_attention(h, w, cfg).x_att, w, cfg);
}

Matrix transformer_forward(const Matrix& e, const ModelWeights& m) {
  Matrix h = e;
  for (const auto& w : m.layers) h = transformer_layer(h, w, m.cfg);
  return h;
}

Vec lm_head(std::span<const double> h_last, const Matrix& cls) {
  ++g_lm_head_calls;
  return vec_matmul(h_last, cls);
}

std::uint64_t lm_head_calls() { return g_lm_head_calls; }

std::uint64_t attention_softmax_calls() { return g_softmax_calls; }

Token greedy_sample(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("greedy_sample: empty logits");
  // max_element keeps the first of equal maxima.
  return static_cast<Token>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::vector<Token> generate_vanilla(const std::vector<Token>& prefix, std::size_t steps,
                                    const ModelWeights& m) {
  if (prefix.size() + steps > m.cfg.max_len) {
    throw ShapeError("prefix + steps exceeds max_len " + std::to_string(m.cfg.max_len));
  }
  if (steps == 0) return {};
  if (prefix.empty()) throw DataError("generate_vanilla: empty prefix");
  std::vector<Token> seq = prefix, out;
  for (std::size_t s = 0; s < steps; ++s) {
    const Matrix e = add_positional(embed_lookup(seq, m.embed), m.positional);
    const Matrix h = transformer_forward(e, m);
    const Token t = greedy_sample(lm_head(h.row(h.rows - 1), m.cls));
    seq.push_back(t);
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------- fixtures

EchoFixture echo_fixture(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.vocab = 16;
  cfg.d = 32;
  cfg.d_inner = 64;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.max_len = 64;
  cfg.activation = ActivationKind::ReluSignAssisted;

  EchoFixture f;
  ModelWeights& m = f.weights;
  m = ModelWeights::random(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);

  // A permutation with no fixed points and no 2-cycles, so v, perm[v] and
  // perm[perm[v]] are pairwise distinct.
  f.perm.resize(cfg.vocab);
  std::iota(f.perm.begin(), f.perm.end(), Token{0});
  auto ok = [&] {
    for (Token v = 0; v < cfg.vocab; ++v)
      if (f.perm[v] == v || f.perm[f.perm[v]] == v) return false;
    return true;
  };
  do std::shuffle(f.perm.begin(), f.perm.end(), rng);
  while (!ok());

  // Sylvester-Hadamard rows 1..V: +-1 entries, zero mean, mutually orthogonal.
  auto z = [&](std::size_t v, std::size_t j) {
    return (std::popcount((v + 1) & j) % 2) ? -1.0 : 1.0;
  };
  const double tau = static_cast<double>(cfg.d) / 2;
  const double gain = 1.0 / (static_cast<double>(cfg.d) - tau);

  for (std::size_t v = 0; v < cfg.vocab; ++v)
    for (std::size_t j = 0; j < cfg.d; ++j) m.embed(v, j) = z(v, j);
  m.positional = Matrix(cfg.max_len, cfg.d);

  for (auto& w : m.layers) {
    w.wv = Matrix(cfg.d, cfg.d);
    w.bd.assign(cfg.d, 0.0);
    w.gamma1.assign(cfg.d, 1.0);
    w.beta1.assign(cfg.d, 0.0);
    w.wi = Matrix(cfg.d, cfg.d_inner);
    w.bi.assign(cfg.d_inner, -1.0);
    w.wo = Matrix(cfg.d_inner, cfg.d);
    w.bo.assign(cfg.d, 0.0);
    w.gamma2.assign(cfg.d, 1.0);
    w.beta2.assign(cfg.d, 0.0);
    // Unit v fires (value d - tau) only when the input is aligned with z_v
    // and writes 4 z_perm[v] - z_v, cancelling the residual so that the
    // layer output is exactly z_perm[v] up to the layer-norm epsilon.
    for (std::size_t v = 0; v < cfg.vocab; ++v) {
      for (std::size_t j = 0; j < cfg.d; ++j) {
        w.wi(j, v) = z(v, j);
        w.wo(v, j) = gain * (4 * z(f.perm[v], j) - z(v, j));
      }
      w.bi[v] = -tau;
    }
  }
  m.cls = Matrix(cfg.d, cfg.vocab);
  for (std::size_t v = 0; v < cfg.vocab; ++v)
    for (std::size_t j = 0; j < cfg.d; ++j) m.cls(j, v) = z(v, j);
  return f;
}

ModelWeights rigged_fixture(const ModelConfig& cfg, Token token, std::uint64_t seed) {
  if (token >= cfg.vocab) throw DataError("rigged_fixture: token >= vocab");
  ModelWeights m = ModelWeights::random(cfg, seed);
  Vec e(cfg.d, 0.5);
  for (auto& w : m.layers) {
    w.gamma2.assign(cfg.d, 0.0);
    w.beta2 = e;
  }
  m.cls = Matrix(cfg.d, cfg.vocab);
  for (std::size_t j = 0; j < cfg.d; ++j) m.cls(j, token) = e[j];
  return m;
}

}  // namespace merge
