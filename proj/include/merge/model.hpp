#pragma once

// Plaintext decoder-only transformer: the reference semantics for every
// private and merged variant. Row-vector convention throughout (h . W).

#include <cstdint>
#include <vector>

#include "merge/activation.hpp"
#include "merge/matrix.hpp"

namespace merge {

using Token = std::uint32_t;

struct ModelConfig {
  std::size_t vocab = 256;
  std::size_t d = 32;
  std::size_t d_inner = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t max_len = 64;
  ActivationKind activation = ActivationKind::ReluSignAssisted;
  QuadCoeffs quad;
  double ln_eps = 1e-5;

  std::size_t head_dim() const { return d / n_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Head h of W_Q/W_K/W_V is the column block [h*dk, (h+1)*dk); head h of W_d
// is the matching row block.
struct LayerWeights {
  Matrix wq, wk, wv;  // d x d, no bias
  Matrix wd;          // d x d
  Vec bd;
  Vec gamma1, beta1;
  Matrix wi;  // d x d_inner
  Vec bi;
  Matrix wo;  // d_inner x d
  Vec bo;
  Vec gamma2, beta2;

  bool operator==(const LayerWeights&) const = default;
};

struct ModelWeights {
  ModelConfig cfg;
  Matrix embed;       // V x d
  Matrix positional;  // max_len x d
  std::vector<LayerWeights> layers;
  Matrix cls;  // d x V

  // Throws ShapeError / DataError on inconsistent or non-finite weights.
  void validate() const;
  bool operator==(const ModelWeights&) const = default;

  // Gaussian init with std 0.08; gammas are 1 + N(0, 0.08).
  static ModelWeights random(const ModelConfig& cfg, std::uint64_t seed);
};

Matrix one_hot(const std::vector<Token>& tokens, std::size_t vocab);
Matrix embed_lookup(const std::vector<Token>& tokens, const Matrix& table);
// The same lookup written as one_hot(tokens) . table.
Matrix embed_onehot(const std::vector<Token>& tokens, const Matrix& table);
// Row i gets P[first_position + i].
Matrix add_positional(const Matrix& e, const Matrix& p, std::size_t first_position = 0);

// (x - mean) / (sqrt(var) + eps) * gamma + beta, population variance.
Vec layernorm(std::span<const double> x, std::span<const double> gamma,
              std::span<const double> beta, double eps);
Matrix layernorm_rows(const Matrix& x, std::span<const double> gamma,
                      std::span<const double> beta, double eps);

struct HeadProjection {
  Matrix q, k, v;
};
std::vector<HeadProjection> attention_projection(const Matrix& h, const LayerWeights& w,
                                                 const ModelConfig& cfg);

// softmax(q k^T / sqrt(dk)) with future positions masked out when causal.
Matrix attention_scores(const Matrix& q, const Matrix& k, bool causal);
// Calls of attention_scores on this thread since start-up.
std::uint64_t attention_softmax_calls();

struct AttentionResult {
  std::vector<Matrix> probs;  // one per head
  Matrix x_att;
};
AttentionResult self_attention(const Matrix& h, const LayerWeights& w, const ModelConfig& cfg,
                               bool causal = true);

Matrix apply_activation(const Matrix& x, const ModelConfig& cfg);
Matrix feed_forward(const Matrix& x_att, const LayerWeights& w, const ModelConfig& cfg);
Matrix transformer_layer(const Matrix& h, const LayerWeights& w, const ModelConfig& cfg);
Matrix transformer_forward(const Matrix& e, const ModelWeights& m);

Vec lm_head(std::span<const double> h_last, const Matrix& cls);
// Calls of lm_head on this thread since start-up.
std::uint64_t lm_head_calls();

// Argmax, ties to the lowest index.
Token greedy_sample(std::span<const double> logits);

// Recompute-everything generation: each step embeds the whole sequence so far,
// runs the full stack and samples the last position. `steps` new tokens.
std::vector<Token> generate_vanilla(const std::vector<Token>& prefix, std::size_t steps,
                                    const ModelWeights& m);

// Fixtures.

// Every variant (vanilla, embedding resend, merged) emits perm[perm[v]] after
// token v: Hadamard-row embeddings, no attention value path and an FFN that
// detects the input row and writes the permuted one. In the unmerged model
// the last hidden state equals the next token's embedding up to the
// layer-norm epsilon; merged layers drop the residual, so there it is only
// aligned with it.
struct EchoFixture {
  ModelWeights weights;
  std::vector<Token> perm;
  Token next(Token v) const { return perm[perm[v]]; }
};
EchoFixture echo_fixture(std::uint64_t seed);

// A model whose head emits `token` at every step regardless of input.
ModelWeights rigged_fixture(const ModelConfig& cfg, Token token, std::uint64_t seed);

}  // namespace merge
