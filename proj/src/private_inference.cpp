#include "merge/private_inference.hpp"

#include <cmath>

namespace merge {

namespace {

constexpr std::uint64_t kClientStream = 0x5bd1e995c1e47a3dull;
constexpr std::uint64_t kServerStream = 0x2545f4914f6cdd1dull;
constexpr std::uint64_t kDealerStream = 0x9e3779b97f4a7c15ull;

// Raw 0/1 integers, lower triangle.
FixedTensor causal_keep(std::size_t n) {
  FixedTensor k({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) k.at(i, j) = 1;
  return k;
}

void append_rows(SharedTensor& acc, const SharedTensor& rows) {
  acc = acc.size() == 0 ? rows : concat_rows(acc, rows);
}

SharedTensor last_row(const SharedTensor& h) { return slice_rows(h, h.rows() - 1, h.rows()); }

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "Vanilla";
    case Variant::OnlyER: return "OnlyER";
    case Variant::OnlyMM: return "OnlyMM";
    case Variant::ER_MM: return "ER_MM";
  }
  return "?";
}

Variant variant_from_name(std::string_view name) {
  for (Variant v : kVariants)
    if (variant_name(v) == name) return v;
  throw DataError("unknown variant '" + std::string(name) +
                  "' (expected Vanilla, OnlyER, OnlyMM or ER_MM)");
}

SharedTensor mpc_embed(const SharedTensor& one_hot, const SharedTensor& table, MpcContext& m) {
  if (one_hot.cols() != table.rows()) {
    throw ShapeError("mpc_embed: one-hot width " + std::to_string(one_hot.cols()) +
                     " != vocabulary " + std::to_string(table.rows()));
  }
  CategoryScope scope(m.ch, Category::Embed);
  return matmul_shared(one_hot, table, m.dealer, m.ch);
}

// ---------------------------------------------------------------- setup

EncryptedSession::EncryptedSession(const ModelWeights& m, Variant v, std::uint64_t seed,
                                   NonlinearConfig nl)
    : variant_(v),
      cfg_(m.cfg),
      nl_(nl),
      ch_(ledger_),
      dealer_(seed ^ kDealerStream),
      client_rng_(seed ^ kClientStream),
      server_rng_(seed ^ kServerStream),
      ctx_{ch_, dealer_} {
  if (uses_merged(v)) {
    throw DataError(std::string(variant_name(v)) + " needs a merged model");
  }
  m.validate();
  share_common(m.cfg, m.embed, m.positional, m.cls);
  CategoryScope scope(ch_, Category::Other);
  for (const auto& w : m.layers) {
    plain_.push_back({share_masked(w.wq), share_masked(w.wk), share_masked(w.wv),
                      share_masked(w.wd), share_masked(w.wi), share_masked(w.wo), share_row(w.bd),
                      share_row(w.gamma1), share_row(w.beta1), share_row(w.bi), share_row(w.bo),
                      share_row(w.gamma2), share_row(w.beta2)});
  }
  setup_ = ledger_.snapshot();
}

EncryptedSession::EncryptedSession(const MergedModel& mm, Variant v, std::uint64_t seed,
                                   NonlinearConfig nl)
    : variant_(v),
      cfg_(mm.cfg),
      nl_(nl),
      ch_(ledger_),
      dealer_(seed ^ kDealerStream),
      client_rng_(seed ^ kClientStream),
      server_rng_(seed ^ kServerStream),
      ctx_{ch_, dealer_} {
  if (!uses_merged(v)) {
    throw DataError(std::string(variant_name(v)) + " needs the original model");
  }
  if (mm.ffn_residual) throw DataError("the ffn_residual ablation is plaintext only");
  share_common(mm.cfg, mm.embed, mm.positional, mm.cls);
  CategoryScope scope(ch_, Category::Other);
  for (const auto& w : mm.layers) {
    MergedLayerShares s;
    for (std::size_t h = 0; h < w.c.size(); ++h) {
      s.c.push_back(share_masked(slice_constant_attention(w.c[h], cfg_.max_len)));
      s.mu.push_back(share_masked(w.mu[h]));
    }
    s.r = share_masked(w.r);
    s.wo = share_masked(w.wo);
    s.b_mu = share_row(w.b_mu);
    s.bo = share_row(w.bo);
    s.gamma2 = share_row(w.gamma2);
    s.beta2 = share_row(w.beta2);
    merged_.push_back(std::move(s));
  }
  setup_ = ledger_.snapshot();
}

void EncryptedSession::share_common(const ModelConfig& cfg, const Matrix& embed,
                                    const Matrix& positional, const Matrix& cls) {
  cfg.validate();
  nl_.activation = cfg.activation;
  nl_.quad = cfg.quad;
  nl_.validate();
  CategoryScope scope(ch_, Category::Other);
  embed_ = share_weight(embed);
  positional_ = share_weight(positional);
  cls_ = share_masked(cls);
}

SharedTensor EncryptedSession::share_weight(const Matrix& w) {
  return share_input(FixedTensor::encode({w.rows, w.cols}, w.data), Party::Server, server_rng_,
                     ch_);
}

SharedTensor EncryptedSession::share_row(const Vec& v) {
  return share_input(FixedTensor::encode({1, v.size()}, v), Party::Server, server_rng_, ch_);
}

MaskedTensor EncryptedSession::share_masked(const Matrix& w) { return mask(share_weight(w)); }

MaskedTensor EncryptedSession::mask(const SharedTensor& x) { return mask_operand(x, dealer_, ch_); }

SharedTensor EncryptedSession::add_bias(const SharedTensor& x, const SharedTensor& b) const {
  return add_shared(x, repeat_rows(b, x.rows()));
}

// ---------------------------------------------------------------- inputs

SharedTensor EncryptedSession::share_tokens(const std::vector<Token>& tokens) {
  FixedTensor one_hot({tokens.size(), cfg_.vocab});
  const RingElement one = encode(1.0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= cfg_.vocab) {
      throw DataError("token " + std::to_string(tokens[i]) + " outside vocabulary of " +
                      std::to_string(cfg_.vocab));
    }
    one_hot.at(i, tokens[i]) = one;
  }
  CategoryScope scope(ch_, Category::Other);
  return share_input(one_hot, Party::Client, client_rng_, ch_);
}

SharedTensor EncryptedSession::embed(const std::vector<Token>& tokens) {
  return mpc_embed(share_tokens(tokens), embed_, ctx_);
}

SharedTensor EncryptedSession::add_positions(const SharedTensor& e, std::size_t first) const {
  if (first + e.rows() > cfg_.max_len) {
    throw ShapeError("positions up to " + std::to_string(first + e.rows()) + " exceed max_len " +
                     std::to_string(cfg_.max_len));
  }
  return add_shared(e, slice_rows(positional_, first, first + e.rows()));
}

// ---------------------------------------------------------------- layers

SharedTensor EncryptedSession::ffn_tail(const SharedTensor& u, const MaskedTensor& wo,
                                        const SharedTensor& bo, const SharedTensor& gamma2,
                                        const SharedTensor& beta2, const SharedTensor* residual) {
  const SharedTensor a = mpc_activation(u, nl_, ctx_);
  SharedTensor out = add_bias(matmul_masked(mask(a), wo, dealer_), bo);
  if (residual) out = add_shared(out, *residual);
  return mpc_layernorm(out, gamma2, beta2, nl_, ctx_);
}

SharedTensor EncryptedSession::plain_layer(const SharedTensor& h, const PlainLayer& w) {
  CategoryScope scope(ch_, Category::Linear);
  const std::size_t n = h.rows(), dk = cfg_.head_dim();
  const MaskedTensor hm = mask(h);
  const MaskedTensor q = mask(matmul_masked(hm, w.wq, dealer_));
  const MaskedTensor k = mask(matmul_masked(hm, w.wk, dealer_));
  const MaskedTensor v = mask(matmul_masked(hm, w.wv, dealer_));
  const FixedTensor keep = causal_keep(n);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<SharedTensor> ctx;
  for (std::size_t hd = 0; hd < cfg_.n_heads; ++hd) {
    const std::size_t c0 = hd * dk, c1 = c0 + dk;
    const SharedTensor scores = mul_public(
        matmul_masked(slice_cols(q, c0, c1), transpose(slice_cols(k, c0, c1)), dealer_), inv_sqrt);
    const SharedTensor probs = mpc_softmax(scores, nl_, ctx_, keep);
    ctx.push_back(matmul_masked(mask(probs), slice_cols(v, c0, c1), dealer_));
  }
  const SharedTensor mixed =
      add_shared(add_bias(matmul_masked(mask(concat_cols(ctx)), w.wd, dealer_), w.bd), h);
  const SharedTensor x_att = mpc_layernorm(mixed, w.gamma1, w.beta1, nl_, ctx_);
  const SharedTensor u = add_bias(matmul_masked(mask(x_att), w.wi, dealer_), w.bi);
  return ffn_tail(u, w.wo, w.bo, w.gamma2, w.beta2, &x_att);
}

SharedTensor EncryptedSession::merged_layer(const SharedTensor& h, std::size_t first,
                                            const MergedLayerShares& w,
                                            std::vector<MaskedTensor>* cache) {
  CategoryScope scope(ch_, Category::Linear);
  const std::size_t k = h.rows(), n = first + k;
  if (!cache && first != 0) throw ShapeError("merged_layer: offset rows need a cache");
  const MaskedTensor hm = mask(h);
  SharedTensor u = add_bias(matmul_masked(hm, w.r, dealer_), w.b_mu);
  for (std::size_t hd = 0; hd < w.mu.size(); ++hd) {
    const MaskedTensor p = mask(matmul_masked(hm, w.mu[hd], dealer_));
    MaskedTensor values = p;
    if (cache) {
      auto& slot = (*cache)[hd];
      if (slot.rows() != first && slot.value.size() != 0) {
        throw ShapeError("merged_layer: cache holds " + std::to_string(slot.rows()) +
                         " rows, expected " + std::to_string(first));
      }
      slot = concat_rows(slot, p);
      values = slot;
    }
    // The new rows of C only see positions < n, so the cached rows stay valid.
    u = add_shared(u, matmul_masked(slice_block(w.c[hd], first, k, 0, n), values, dealer_));
  }
  return ffn_tail(u, w.wo, w.bo, w.gamma2, w.beta2, nullptr);
}

SharedTensor EncryptedSession::forward(const SharedTensor& inputs) {
  if (inputs.cols() != cfg_.d) throw ShapeError("forward: input width != d");
  if (inputs.rows() == 0 || inputs.rows() > cfg_.max_len) {
    throw ShapeError("forward: " + std::to_string(inputs.rows()) + " rows, max_len " +
                     std::to_string(cfg_.max_len));
  }
  SharedTensor h = inputs;
  if (uses_merged(variant_)) {
    for (const auto& w : merged_) h = merged_layer(h, 0, w, nullptr);
  } else {
    for (const auto& w : plain_) h = plain_layer(h, w);
  }
  return h;
}

SharedTensor EncryptedSession::incremental_forward(const SharedTensor& inputs, std::size_t first,
                                                   ValueCache& cache) {
  SharedTensor h = inputs;
  for (std::size_t l = 0; l < merged_.size(); ++l) h = merged_layer(h, first, merged_[l], &cache[l]);
  return h;
}

std::vector<Token> EncryptedSession::sample(const SharedTensor& hidden) {
  SharedTensor logits;
  {
    CategoryScope scope(ch_, Category::Linear);
    logits = matmul_masked(mask(hidden), cls_, dealer_);
  }
  FixedTensor opened;
  {
    CategoryScope scope(ch_, Category::Sampling);
    opened = open(logits, ch_, Party::Client);
  }
  const Matrix plain(opened.rows(), opened.cols(), opened.decode());
  std::vector<Token> out;
  for (std::size_t i = 0; i < plain.rows; ++i) out.push_back(greedy_sample(plain.row(i)));
  return out;
}

// ---------------------------------------------------------------- generation

GenerationResult EncryptedSession::generate(const std::vector<Token>& prefix,
                                            std::size_t total_len) {
  if (prefix.empty()) throw DataError("generate: empty prefix");
  if (total_len < prefix.size() || total_len > cfg_.max_len) {
    throw ShapeError("generate: total length " + std::to_string(total_len) +
                     " outside [prefix, max_len] = [" + std::to_string(prefix.size()) + ", " +
                     std::to_string(cfg_.max_len) + "]");
  }
  const std::size_t steps = total_len - prefix.size();
  const LedgerSnapshot before = ledger_.snapshot();
  GenerationResult res;
  if (steps == 0) return res;

  if (!uses_er(variant_)) {
    // Token in, token out: the whole sequence is embedded and run again for
    // every step.
    std::vector<Token> seq = prefix;
    for (std::size_t s = 0; s < steps; ++s) {
      const SharedTensor h = forward(add_positions(embed(seq), 0));
      const Token t = sample(last_row(h)).front();
      seq.push_back(t);
      res.tokens.push_back(t);
    }
  } else {
    SharedTensor hidden;
    if (variant_ == Variant::OnlyER) {
      SharedTensor e = embed(prefix);
      for (std::size_t s = 0; s < steps; ++s) {
        const SharedTensor last = last_row(forward(add_positions(e, 0)));
        append_rows(hidden, last);
        if (s + 1 < steps) e = concat_rows(e, last);
      }
    } else {
      ValueCache cache(cfg_.n_layers, std::vector<MaskedTensor>(cfg_.n_heads));
      SharedTensor last = last_row(incremental_forward(add_positions(embed(prefix), 0), 0, cache));
      for (std::size_t s = 0; s < steps; ++s) {
        append_rows(hidden, last);
        const std::size_t pos = prefix.size() + s;
        if (s + 1 < steps) last = incremental_forward(add_positions(last, pos), pos, cache);
      }
    }
    res.tokens = sample(hidden);
    const FixedTensor h = reconstruct(hidden);
    res.hidden = Matrix(h.rows(), h.cols(), h.decode());
  }
  res.ledger = ledger_delta(ledger_.snapshot(), before);
  return res;
}

// ---------------------------------------------------------------- reports

LedgerSnapshot ledger_delta(const LedgerSnapshot& after, const LedgerSnapshot& before) {
  LedgerSnapshot d;
  for (Category c : kCategories) {
    d[c].bytes = after[c].bytes - before[c].bytes;
    d[c].rounds = after[c].rounds - before[c].rounds;
    d[c].op_count = after[c].op_count - before[c].op_count;
    d[c].wall_ns = after[c].wall_ns - before[c].wall_ns;
  }
  return d;
}

Counters online_total(const LedgerSnapshot& s) {
  Counters t;
  for (Category c : {Category::Embed, Category::Linear, Category::Softmax, Category::Sampling})
    t += s[c];
  return t;
}

LedgerReport ledger_report(const LedgerSnapshot& s, const std::optional<LedgerSnapshot>& baseline,
                           SyntheticClock clock) {
  LedgerReport r;
  for (Category c : kCategories)
    r.rows.push_back({std::string(category_name(c)), s[c], clock(s[c])});
  const Counters total = online_total(s);
  r.rows.push_back({"Total", total, clock(total)});
  if (baseline) {
    const auto base = online_total(*baseline).bytes;
    r.fraction = base ? 100.0 * static_cast<double>(total.bytes) / static_cast<double>(base) : 0.0;
  }
  return r;
}

}  // namespace merge
