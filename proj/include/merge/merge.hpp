#pragma once

// Offline compiler from a transformer to merged-module form: calibrated
// constant attention, element-wise layer-norm approximation and folding of
// W_V, W_d, gamma_1 and W_I into one matrix per head.

#include <cstdint>
#include <vector>

#include "merge/model.hpp"

namespace merge {

// c[layer][head] is max_len x max_len, causal and row-stochastic.
struct ConstantAttention {
  std::vector<std::vector<Matrix>> c;

  std::size_t layers() const { return c.size(); }
  bool operator==(const ConstantAttention&) const = default;
};

// Seeded order-1 Markov chain over the vocabulary; `count` sequences of
// `length` tokens.
std::vector<std::vector<Token>> markov_corpus(std::size_t vocab, std::size_t count,
                                              std::size_t length, std::uint64_t seed);

// Post-softmax attention of every layer and head for one sequence.
std::vector<std::vector<Matrix>> attention_maps(const std::vector<Token>& tokens,
                                                const ModelWeights& m);

// Averages attention maps over the calibration set. Sequences are truncated
// or padded with token 0 to max_len.
ConstantAttention calibrate_constant_attention(const ModelWeights& m,
                                               const std::vector<std::vector<Token>>& calib);

// Leading len x len block with every row renormalized to sum 1.
Matrix slice_constant_attention(const Matrix& c, std::size_t len);

// x * gamma + beta, no statistics.
Vec approx_layernorm(std::span<const double> x, std::span<const double> gamma,
                     std::span<const double> beta);
Matrix approx_layernorm_rows(const Matrix& x, std::span<const double> gamma,
                             std::span<const double> beta);

struct MergedLayer {
  std::vector<Matrix> c;   // per head, max_len x max_len
  std::vector<Matrix> mu;  // per head, d x d_inner: W_V,h W_d,h diag(gamma1) W_I
  Matrix r;                // d x d_inner: diag(gamma1) W_I
  Vec b_mu;                // (gamma1 . b_d + beta1) W_I + b_I
  Matrix wo;
  Vec bo;
  Vec gamma2, beta2;

  // Folded attention output, only needed for the ffn_residual ablation:
  // x_att' = sum_h C_h h att_fold_h + h . gamma1 + att_bias.
  std::vector<Matrix> att_fold;
  Vec gamma1;
  Vec att_bias;

  bool operator==(const MergedLayer&) const = default;
};

struct MergedModel {
  ModelConfig cfg;
  Matrix embed, positional;
  std::vector<MergedLayer> layers;
  Matrix cls;
  // Adds x_att' back before the final layer norm. Plaintext ablation only.
  bool ffn_residual = false;

  bool operator==(const MergedModel&) const = default;
};

MergedLayer merge_layer(const LayerWeights& w, const std::vector<Matrix>& c,
                        const ModelConfig& cfg);
MergedModel merge_model(const ModelWeights& m, const ConstantAttention& ca);

// u = sum_h C_h[:L,:L] h M_u^h + h R + b_Mu; out = LN(Act(u) W_O + b_O).
Matrix merged_forward(const Matrix& h, const MergedLayer& ml, const ModelConfig& cfg,
                      bool ffn_residual = false);
Matrix merged_model_forward(const Matrix& e, const MergedModel& mm);
// Token-by-token generation through the merged stack.
std::vector<Token> generate_vanilla(const std::vector<Token>& prefix, std::size_t steps,
                                    const MergedModel& mm);

// The unfolded computation the merged layer must equal: constant attention
// with the element-wise layer norm, then the FFN without its residual, then
// the true layer norm.
Matrix constant_attention_reference(const Matrix& h, const LayerWeights& w,
                                    const std::vector<Matrix>& c, const ModelConfig& cfg);

// Max-abs difference between (A2 (A1 X)) B and A2 ((A1 X) B).
double check_commutativity(const Matrix& x, const Matrix& a1, const Matrix& a2, const Matrix& b);

}  // namespace merge
