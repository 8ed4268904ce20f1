#pragma once

// Encrypted generation: the server's weights and the client's tokens are
// secret-shared between the two parties and the whole generation loop runs
// under the protocol, with every byte attributed to Embed, Linear, Softmax,
// Sampling or Other (setup).

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "merge/merge.hpp"
#include "merge/nonlinear.hpp"

namespace merge {

enum class Variant { Vanilla, OnlyER, OnlyMM, ER_MM };

inline constexpr std::array<Variant, 4> kVariants{Variant::Vanilla, Variant::OnlyER,
                                                  Variant::OnlyMM, Variant::ER_MM};

std::string_view variant_name(Variant v);
Variant variant_from_name(std::string_view name);
inline bool uses_merged(Variant v) { return v == Variant::OnlyMM || v == Variant::ER_MM; }
inline bool uses_er(Variant v) { return v == Variant::OnlyER || v == Variant::ER_MM; }

// One-hot (N x V) . table (V x d) with a matrix triple, charged to Embed.
// Traffic depends only on the shapes, never on which rows are selected.
SharedTensor mpc_embed(const SharedTensor& one_hot, const SharedTensor& table, MpcContext& m);

struct GenerationResult {
  std::vector<Token> tokens;
  // ER variants: the reconstructed hidden state of every step (steps x d).
  Matrix hidden;
  // Traffic of this generation only; setup is excluded.
  LedgerSnapshot ledger;
};

class EncryptedSession {
 public:
  // Vanilla and OnlyER run the original model, OnlyMM and ER_MM the merged
  // one. Weights are shared and masked here, charged to Other.
  EncryptedSession(const ModelWeights& m, Variant v, std::uint64_t seed, NonlinearConfig nl = {});
  EncryptedSession(const MergedModel& mm, Variant v, std::uint64_t seed, NonlinearConfig nl = {});
  EncryptedSession(const EncryptedSession&) = delete;
  EncryptedSession& operator=(const EncryptedSession&) = delete;

  Variant variant() const { return variant_; }
  const ModelConfig& config() const { return cfg_; }

  // Client-side one-hot encoding and sharing of tokens (Other).
  SharedTensor share_tokens(const std::vector<Token>& tokens);
  SharedTensor embed(const std::vector<Token>& tokens);
  // Adds positional rows [first, first + rows).
  SharedTensor add_positions(const SharedTensor& e, std::size_t first) const;
  // Full forward over all rows of `inputs` (positions included).
  SharedTensor forward(const SharedTensor& inputs);
  // Logits of every row opened to the client, greedy per row.
  std::vector<Token> sample(const SharedTensor& hidden);

  // Generates until the sequence holds total_len tokens.
  GenerationResult generate(const std::vector<Token>& prefix, std::size_t total_len);

  LedgerSnapshot snapshot() const { return ledger_.snapshot(); }
  const LedgerSnapshot& setup_cost() const { return setup_; }
  Channel& channel() { return ch_; }
  Dealer& dealer() { return dealer_; }

 private:
  struct PlainLayer {
    MaskedTensor wq, wk, wv, wd, wi, wo;
    SharedTensor bd, gamma1, beta1, bi, bo, gamma2, beta2;
  };
  struct MergedLayerShares {
    std::vector<MaskedTensor> c, mu;
    MaskedTensor r, wo;
    SharedTensor b_mu, bo, gamma2, beta2;
  };
  // ER_MM: h M_u^h of every position processed so far, per layer and head.
  using ValueCache = std::vector<std::vector<MaskedTensor>>;

  void share_common(const ModelConfig& cfg, const Matrix& embed, const Matrix& positional,
                    const Matrix& cls);
  SharedTensor share_weight(const Matrix& w);
  SharedTensor share_row(const Vec& v);
  MaskedTensor share_masked(const Matrix& w);
  MaskedTensor mask(const SharedTensor& x);
  SharedTensor add_bias(const SharedTensor& x, const SharedTensor& b) const;

  SharedTensor plain_layer(const SharedTensor& h, const PlainLayer& w);
  // Rows [first, first + h.rows) of a merged layer. With a cache the earlier
  // positions come from it and the new rows are appended; without one,
  // first must be 0 and h holds the whole sequence.
  SharedTensor merged_layer(const SharedTensor& h, std::size_t first, const MergedLayerShares& w,
                            std::vector<MaskedTensor>* cache);
  SharedTensor ffn_tail(const SharedTensor& u, const MaskedTensor& wo, const SharedTensor& bo,
                        const SharedTensor& gamma2, const SharedTensor& beta2,
                        const SharedTensor* residual);
  SharedTensor incremental_forward(const SharedTensor& inputs, std::size_t first, ValueCache& cache);

  Variant variant_;
  ModelConfig cfg_;
  NonlinearConfig nl_;
  CommLedger ledger_;
  Channel ch_;
  Dealer dealer_;
  std::mt19937_64 client_rng_, server_rng_;
  MpcContext ctx_;

  SharedTensor embed_, positional_;
  MaskedTensor cls_;
  std::vector<PlainLayer> plain_;
  std::vector<MergedLayerShares> merged_;
  LedgerSnapshot setup_;
};

// Per-category counters after `before`.
LedgerSnapshot ledger_delta(const LedgerSnapshot& after, const LedgerSnapshot& before);

// Embed + Linear + Softmax + Sampling; Other (setup) is left out.
Counters online_total(const LedgerSnapshot& s);

struct SyntheticClock {
  double ns_per_byte = 0;
  double ns_per_round = 0;
  double operator()(const Counters& c) const {
    return ns_per_byte * static_cast<double>(c.bytes) + ns_per_round * static_cast<double>(c.rounds);
  }
};

struct ReportRow {
  std::string category;  // a category name or "Total"
  Counters counters;
  double synthetic_ns = 0;
};

struct LedgerReport {
  std::vector<ReportRow> rows;  // the five categories, then Total (online)
  // Online total relative to the baseline's, in percent.
  std::optional<double> fraction;
};

LedgerReport ledger_report(const LedgerSnapshot& s,
                           const std::optional<LedgerSnapshot>& baseline = std::nullopt,
                           SyntheticClock clock = {});

}  // namespace merge
