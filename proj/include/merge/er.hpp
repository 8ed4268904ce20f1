#pragma once

// Embedding resending: the last hidden state of each step is fed back as the
// next position's input embedding, so generation needs no embedding-table
// access after the prefix and sampling can be deferred to one batched pass.

#include <optional>
#include <random>
#include <string>

#include "merge/merge.hpp"

namespace merge {

struct ERState {
  Matrix prefix;  // token embeddings of the prefix, without positions
  Matrix hidden;  // one resent hidden state per generated step
  std::size_t max_len = 0;

  std::size_t length() const { return prefix.rows + hidden.rows; }
  // [prefix; hidden] plus absolute positional embeddings.
  Matrix inputs(const Matrix& positional) const;
};

ERState er_start(const std::vector<Token>& prefix, const Matrix& embed_table, std::size_t max_len);
// Appends h_new as the next position's embedding.
ERState resend_embedding(ERState state, std::span<const double> h_new);

// Last-position hidden state of every step; steps x d.
Matrix generate_er(const std::vector<Token>& prefix, std::size_t steps, const ModelWeights& m);
Matrix generate_er(const std::vector<Token>& prefix, std::size_t steps, const MergedModel& mm);

// Logits for all rows in one product, greedy per row, output cut at the first
// `eos` (exclusive).
std::vector<Token> batch_sample(const Matrix& hidden, const Matrix& cls,
                                std::optional<Token> eos = std::nullopt);

struct AugmentConfig {
  double mask_prob = 0.6;
  double noise = 0.75;
  std::uint64_t seed = 0;

  void validate() const;
};

// e~ = m (e + n), m ~ Bernoulli(1 - p), n ~ U(-noise, noise), per element.
Matrix augment_embedding(const Matrix& e, const AugmentConfig& cfg, std::mt19937_64& rng);

// Mean over row pairs of 1 - cos(h_i, e_i).
double cosine_alignment_loss(const Matrix& h, const Matrix& e_next);

// -log softmax(logits)[target].
double cross_entropy(std::span<const double> logits, Token target);

// Next-token cross entropy of the model run on augmented embeddings, averaged
// over all predicted positions of all sequences.
double ce_loss_noised(const ModelWeights& m, const std::vector<std::vector<Token>>& sequences,
                      const AugmentConfig& cfg);

struct LossWeights {
  double lambda = 0.75;
  void validate() const;
};

double combined_loss(double l_c, double l_ce, double lambda);

// Adds Gaussian noise rescaled so that each injected block has exactly the
// target mean squared error.
class NoiseInjector {
 public:
  NoiseInjector(double target_mse, std::uint64_t seed);
  Matrix apply(const Matrix& x);
  double measured_mse() const { return count_ ? sum_sq_ / static_cast<double>(count_) : 0.0; }

 private:
  double target_;
  std::mt19937_64 rng_;
  double sum_sq_ = 0;
  std::size_t count_ = 0;
};

// Generation with noise injected into every input embedding row as it is
// created (prefix rows, new token rows, resent hidden rows).
std::vector<Token> generate_vanilla_noisy(const std::vector<Token>& prefix, std::size_t steps,
                                          const ModelWeights& m, NoiseInjector& noise);
std::vector<Token> generate_er_noisy(const std::vector<Token>& prefix, std::size_t steps,
                                     const ModelWeights& m, NoiseInjector& noise);

struct SweepRow {
  std::string mode;
  double target_mse = 0, measured_mse = 0, agreement_rate = 0;
  std::size_t seq_len = 0;
  std::uint64_t seed = 0;
};

// One row per (mode, level): token agreement with the noiseless run of the
// same mode, pooled over all prefixes.
std::vector<SweepRow> noise_robustness_sweep(const ModelWeights& m,
                                             const std::vector<double>& mse_levels,
                                             const std::vector<std::vector<Token>>& prefixes,
                                             std::size_t steps, std::uint64_t seed);
// "mode,target_mse,measured_mse,agreement_rate,seq_len,seed" plus rows.
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace merge
