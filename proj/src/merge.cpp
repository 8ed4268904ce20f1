#include "merge/merge.hpp"

#include <cmath>
#include <string>

namespace merge {

std::vector<std::vector<Token>> markov_corpus(std::size_t vocab, std::size_t count,
                                              std::size_t length, std::uint64_t seed) {
  if (vocab == 0) throw DataError("markov_corpus: empty vocabulary");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.5);
  std::vector<std::discrete_distribution<Token>> rows;
  for (std::size_t v = 0; v < vocab; ++v) {
    std::vector<double> w(vocab);
    for (auto& x : w) x = std::exp(nd(rng));
    rows.emplace_back(w.begin(), w.end());
  }
  std::uniform_int_distribution<Token> start(0, static_cast<Token>(vocab - 1));
  std::vector<std::vector<Token>> out(count);
  for (auto& seq : out) {
    if (length == 0) continue;
    seq.push_back(start(rng));
    while (seq.size() < length) seq.push_back(rows[seq.back()](rng));
  }
  return out;
}

std::vector<std::vector<Matrix>> attention_maps(const std::vector<Token>& tokens,
                                                const ModelWeights& m) {
  Matrix h = add_positional(embed_lookup(tokens, m.embed), m.positional);
  std::vector<std::vector<Matrix>> maps;
  for (const auto& w : m.layers) {
    auto att = self_attention(h, w, m.cfg);
    maps.push_back(std::move(att.probs));
    h = feed_forward(att.x_att, w, m.cfg);
  }
  return maps;
}

ConstantAttention calibrate_constant_attention(const ModelWeights& m,
                                               const std::vector<std::vector<Token>>& calib) {
  if (calib.empty()) throw DataError("calibration set is empty");
  const std::size_t n = m.cfg.max_len;
  ConstantAttention ca;
  ca.c.assign(m.cfg.n_layers, std::vector<Matrix>(m.cfg.n_heads, Matrix(n, n)));
  for (const auto& seq : calib) {
    std::vector<Token> fixed(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(
                                                            std::min(seq.size(), n)));
    fixed.resize(n, 0);
    const auto maps = attention_maps(fixed, m);
    for (std::size_t l = 0; l < maps.size(); ++l)
      for (std::size_t h = 0; h < maps[l].size(); ++h) ca.c[l][h] = add(ca.c[l][h], maps[l][h]);
  }
  const double inv = 1.0 / static_cast<double>(calib.size());
  for (auto& layer : ca.c)
    for (auto& c : layer) c = slice_constant_attention(scale(c, inv), n);
  return ca;
}

Matrix slice_constant_attention(const Matrix& c, std::size_t len) {
  if (len > c.rows || len > c.cols) {
    throw ShapeError("constant attention sliced to " + std::to_string(len) + " > " +
                     std::to_string(c.rows));
  }
  Matrix s = slice_cols(slice_rows(c, 0, len), 0, len);
  for (std::size_t i = 0; i < len; ++i) {
    double sum = 0;
    for (double v : s.row(i)) sum += v;
    if (sum > 0)
      for (auto& v : s.row(i)) v /= sum;
  }
  return s;
}

Vec approx_layernorm(std::span<const double> x, std::span<const double> gamma,
                     std::span<const double> beta) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * gamma[i] + beta[i];
  return out;
}

Matrix approx_layernorm_rows(const Matrix& x, std::span<const double> gamma,
                             std::span<const double> beta) {
  return add_row(scale_cols(x, gamma), beta);
}

MergedLayer merge_layer(const LayerWeights& w, const std::vector<Matrix>& c,
                        const ModelConfig& cfg) {
  if (c.size() != cfg.n_heads) throw ShapeError("merge_layer: one C per head required");
  const std::size_t dk = cfg.head_dim();
  MergedLayer ml;
  ml.c = c;
  ml.r = scale_rows(w.wi, w.gamma1);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const Matrix wv_h = slice_cols(w.wv, h * dk, (h + 1) * dk);
    const Matrix wd_h = slice_rows(w.wd, h * dk, (h + 1) * dk);
    Matrix fold = scale_cols(matmul(wv_h, wd_h), w.gamma1);
    ml.mu.push_back(matmul(fold, w.wi));
    ml.att_fold.push_back(std::move(fold));
  }
  ml.gamma1 = w.gamma1;
  ml.att_bias = approx_layernorm(w.bd, w.gamma1, w.beta1);
  const Vec folded = vec_matmul(ml.att_bias, w.wi);
  ml.b_mu.resize(w.bi.size());
  for (std::size_t j = 0; j < w.bi.size(); ++j) ml.b_mu[j] = folded[j] + w.bi[j];
  ml.wo = w.wo;
  ml.bo = w.bo;
  ml.gamma2 = w.gamma2;
  ml.beta2 = w.beta2;
  return ml;
}

MergedModel merge_model(const ModelWeights& m, const ConstantAttention& ca) {
  m.validate();
  if (ca.layers() != m.cfg.n_layers) throw ShapeError("constant attention layer count mismatch");
  MergedModel mm;
  mm.cfg = m.cfg;
  mm.embed = m.embed;
  mm.positional = m.positional;
  mm.cls = m.cls;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    for (const auto& c : ca.c[l])
      if (c.rows != m.cfg.max_len || c.cols != m.cfg.max_len)
        throw ShapeError("constant attention must be max_len x max_len");
    mm.layers.push_back(merge_layer(m.layers[l], ca.c[l], m.cfg));
  }
  return mm;
}

Matrix merged_forward(const Matrix& h, const MergedLayer& ml, const ModelConfig& cfg,
                      bool ffn_residual) {
  const std::size_t len = h.rows;
  Matrix u = add_row(matmul(h, ml.r), ml.b_mu);
  for (std::size_t hd = 0; hd < ml.mu.size(); ++hd) {
    u = add(u, matmul(slice_constant_attention(ml.c[hd], len), matmul(h, ml.mu[hd])));
  }
  Matrix out = add_row(matmul(apply_activation(u, cfg), ml.wo), ml.bo);
  if (ffn_residual) {
    Matrix x_att = add_row(scale_cols(h, ml.gamma1), ml.att_bias);
    for (std::size_t hd = 0; hd < ml.att_fold.size(); ++hd) {
      x_att = add(x_att,
                  matmul(slice_constant_attention(ml.c[hd], len), matmul(h, ml.att_fold[hd])));
    }
    out = add(out, x_att);
  }
  return layernorm_rows(out, ml.gamma2, ml.beta2, cfg.ln_eps);
}

Matrix merged_model_forward(const Matrix& e, const MergedModel& mm) {
  Matrix h = e;
  for (const auto& ml : mm.layers) h = merged_forward(h, ml, mm.cfg, mm.ffn_residual);
  return h;
}

std::vector<Token> generate_vanilla(const std::vector<Token>& prefix, std::size_t steps,
                                    const MergedModel& mm) {
  if (prefix.size() + steps > mm.cfg.max_len) {
    throw ShapeError("prefix + steps exceeds max_len " + std::to_string(mm.cfg.max_len));
  }
  if (steps == 0) return {};
  if (prefix.empty()) throw DataError("generate_vanilla: empty prefix");
  std::vector<Token> seq = prefix, out;
  for (std::size_t s = 0; s < steps; ++s) {
    const Matrix h =
        merged_model_forward(add_positional(embed_lookup(seq, mm.embed), mm.positional), mm);
    const Token t = greedy_sample(lm_head(h.row(h.rows - 1), mm.cls));
    seq.push_back(t);
    out.push_back(t);
  }
  return out;
}

Matrix constant_attention_reference(const Matrix& h, const LayerWeights& w,
                                    const std::vector<Matrix>& c, const ModelConfig& cfg) {
  const auto heads = attention_projection(h, w, cfg);
  std::vector<Matrix> ctx;
  for (std::size_t hd = 0; hd < heads.size(); ++hd) {
    ctx.push_back(matmul(slice_constant_attention(c[hd], h.rows), heads[hd].v));
  }
  const Matrix mixed = add(add_row(matmul(concat_cols(ctx), w.wd), w.bd), h);
  const Matrix x_att = approx_layernorm_rows(mixed, w.gamma1, w.beta1);
  const Matrix inner = apply_activation(add_row(matmul(x_att, w.wi), w.bi), cfg);
  return layernorm_rows(add_row(matmul(inner, w.wo), w.bo), w.gamma2, w.beta2, cfg.ln_eps);
}

double check_commutativity(const Matrix& x, const Matrix& a1, const Matrix& a2, const Matrix& b) {
  if (a1.rows != a1.cols || a2.rows != a2.cols || b.rows != b.cols || a1.cols != x.rows ||
      a2.cols != x.rows || b.rows != x.cols) {
    throw ShapeError("check_commutativity: incompatible shapes");
  }
  const Matrix first = matmul(a1, x);
  const Matrix seq_then_feat = matmul(matmul(a2, first), b);
  const Matrix feat_then_seq = matmul(a2, matmul(first, b));
  return max_abs_diff(seq_then_feat, feat_then_seq);
}

}  // namespace merge
