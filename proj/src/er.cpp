#include "merge/er.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace merge {

namespace {

void check_length(std::size_t prefix, std::size_t steps, std::size_t max_len) {
  if (prefix + steps > max_len) {
    throw ShapeError("prefix + steps = " + std::to_string(prefix + steps) + " exceeds max_len " +
                     std::to_string(max_len));
  }
}

template <class Forward>
Matrix er_loop(const std::vector<Token>& prefix, std::size_t steps, const Matrix& embed,
               const Matrix& positional, std::size_t max_len, Forward forward) {
  check_length(prefix.size(), steps, max_len);
  if (steps == 0) return Matrix(0, embed.cols);
  if (prefix.empty()) throw DataError("generate_er: empty prefix");
  ERState s = er_start(prefix, embed, max_len);
  Matrix out(0, embed.cols);
  for (std::size_t t = 0; t < steps; ++t) {
    const Matrix h = forward(s.inputs(positional));
    const auto last = h.row(h.rows - 1);
    out = append_row(out, last);
    if (t + 1 < steps) s = resend_embedding(std::move(s), last);
  }
  return out;
}

}  // namespace

Matrix ERState::inputs(const Matrix& positional) const {
  return add_positional(concat_rows(prefix, hidden), positional);
}

ERState er_start(const std::vector<Token>& prefix, const Matrix& embed_table,
                 std::size_t max_len) {
  check_length(prefix.size(), 0, max_len);
  ERState s;
  s.prefix = embed_lookup(prefix, embed_table);
  s.hidden = Matrix(0, embed_table.cols);
  s.max_len = max_len;
  return s;
}

ERState resend_embedding(ERState state, std::span<const double> h_new) {
  if (state.length() >= state.max_len) {
    throw ShapeError("resend_embedding: sequence already at max_len " +
                     std::to_string(state.max_len));
  }
  state.hidden = append_row(state.hidden, h_new);
  return state;
}

Matrix generate_er(const std::vector<Token>& prefix, std::size_t steps, const ModelWeights& m) {
  return er_loop(prefix, steps, m.embed, m.positional, m.cfg.max_len,
                 [&](const Matrix& e) { return transformer_forward(e, m); });
}

Matrix generate_er(const std::vector<Token>& prefix, std::size_t steps, const MergedModel& mm) {
  return er_loop(prefix, steps, mm.embed, mm.positional, mm.cfg.max_len,
                 [&](const Matrix& e) { return merged_model_forward(e, mm); });
}

std::vector<Token> batch_sample(const Matrix& hidden, const Matrix& cls,
                                std::optional<Token> eos) {
  const Matrix logits = matmul(hidden, cls);
  std::vector<Token> out;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const Token t = greedy_sample(logits.row(i));
    if (eos && t == *eos) break;
    out.push_back(t);
  }
  return out;
}

void AugmentConfig::validate() const {
  if (!(mask_prob >= 0 && mask_prob <= 1)) throw DataError("mask probability outside [0, 1]");
  if (!(noise >= 0)) throw DataError("noise half-width must be >= 0");
}

Matrix augment_embedding(const Matrix& e, const AugmentConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::bernoulli_distribution keep(1.0 - cfg.mask_prob);
  std::uniform_real_distribution<double> noise(-cfg.noise, cfg.noise);
  Matrix out = e;
  for (auto& v : out.data) {
    const double n = cfg.noise > 0 ? noise(rng) : 0.0;
    v = keep(rng) ? v + n : 0.0;
  }
  return out;
}

double cosine_alignment_loss(const Matrix& h, const Matrix& e_next) {
  if (h.rows != e_next.rows || h.cols != e_next.cols) {
    throw ShapeError("cosine_alignment_loss: shapes differ");
  }
  if (h.rows == 0) throw DataError("cosine_alignment_loss: no rows");
  double total = 0;
  for (std::size_t i = 0; i < h.rows; ++i) {
    double dot = 0, nh = 0, ne = 0;
    for (std::size_t j = 0; j < h.cols; ++j) {
      dot += h(i, j) * e_next(i, j);
      nh += h(i, j) * h(i, j);
      ne += e_next(i, j) * e_next(i, j);
    }
    if (nh == 0 || ne == 0) throw DataError("cosine_alignment_loss: zero-norm row");
    const double cos = std::clamp(dot / (std::sqrt(nh) * std::sqrt(ne)), -1.0, 1.0);
    total += 1.0 - cos;
  }
  return total / static_cast<double>(h.rows);
}

double cross_entropy(std::span<const double> logits, Token target) {
  if (target >= logits.size()) throw DataError("cross_entropy: target out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double l : logits) z += std::exp(l - mx);
  return std::log(z) + mx - logits[target];
}

double ce_loss_noised(const ModelWeights& m, const std::vector<std::vector<Token>>& sequences,
                      const AugmentConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  double total = 0;
  std::size_t count = 0;
  for (const auto& seq : sequences) {
    if (seq.size() < 2) continue;
    const Matrix e = augment_embedding(embed_lookup(seq, m.embed), cfg, rng);
    const Matrix h = transformer_forward(add_positional(e, m.positional), m);
    const Matrix logits = matmul(slice_rows(h, 0, seq.size() - 1), m.cls);
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      total += cross_entropy(logits.row(i), seq[i + 1]);
      ++count;
    }
  }
  if (count == 0) throw DataError("ce_loss_noised: no predicted positions");
  return total / static_cast<double>(count);
}

void LossWeights::validate() const {
  if (!(lambda >= 0 && lambda <= 1)) throw DataError("lambda outside [0, 1]");
}

double combined_loss(double l_c, double l_ce, double lambda) {
  LossWeights{lambda}.validate();
  if (lambda == 1.0) return l_c;
  if (lambda == 0.0) return l_ce;
  return lambda * l_c + (1.0 - lambda) * l_ce;
}

NoiseInjector::NoiseInjector(double target_mse, std::uint64_t seed)
    : target_(target_mse), rng_(seed) {
  if (!(target_mse >= 0)) throw DataError("target MSE must be >= 0");
}

Matrix NoiseInjector::apply(const Matrix& x) {
  Matrix out = x;
  if (x.data.empty()) return out;
  std::normal_distribution<double> nd;
  std::vector<double> n(x.data.size());
  double sq = 0;
  for (auto& v : n) {
    v = nd(rng_);
    sq += v * v;
  }
  const double k = sq > 0 ? std::sqrt(target_ * static_cast<double>(n.size()) / sq) : 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    out.data[i] += k * n[i];
    const double diff = out.data[i] - x.data[i];
    sum_sq_ += diff * diff;
  }
  count_ += n.size();
  return out;
}

std::vector<Token> generate_vanilla_noisy(const std::vector<Token>& prefix, std::size_t steps,
                                          const ModelWeights& m, NoiseInjector& noise) {
  check_length(prefix.size(), steps, m.cfg.max_len);
  if (steps == 0) return {};
  Matrix e = noise.apply(embed_lookup(prefix, m.embed));
  std::vector<Token> out;
  for (std::size_t t = 0; t < steps; ++t) {
    const Matrix h = transformer_forward(add_positional(e, m.positional), m);
    const Token tok = greedy_sample(lm_head(h.row(h.rows - 1), m.cls));
    out.push_back(tok);
    if (t + 1 < steps) e = concat_rows(e, noise.apply(embed_lookup({tok}, m.embed)));
  }
  return out;
}

std::vector<Token> generate_er_noisy(const std::vector<Token>& prefix, std::size_t steps,
                                     const ModelWeights& m, NoiseInjector& noise) {
  check_length(prefix.size(), steps, m.cfg.max_len);
  if (steps == 0) return {};
  Matrix e = noise.apply(embed_lookup(prefix, m.embed));
  Matrix hidden(0, m.cfg.d);
  for (std::size_t t = 0; t < steps; ++t) {
    const Matrix h = transformer_forward(add_positional(e, m.positional), m);
    const Matrix last = slice_rows(h, h.rows - 1, h.rows);
    hidden = concat_rows(hidden, last);
    if (t + 1 < steps) e = concat_rows(e, noise.apply(last));
  }
  return batch_sample(hidden, m.cls);
}

std::vector<SweepRow> noise_robustness_sweep(const ModelWeights& m,
                                             const std::vector<double>& mse_levels,
                                             const std::vector<std::vector<Token>>& prefixes,
                                             std::size_t steps, std::uint64_t seed) {
  if (prefixes.empty()) throw DataError("noise sweep needs at least one prefix");
  std::vector<SweepRow> rows;
  for (const std::string mode : {"vanilla", "er"}) {
    const auto run = [&](const std::vector<Token>& p, NoiseInjector& n) {
      return mode == "vanilla" ? generate_vanilla_noisy(p, steps, m, n)
                               : generate_er_noisy(p, steps, m, n);
    };
    std::vector<std::vector<Token>> clean;
    for (const auto& p : prefixes) {
      NoiseInjector none(0.0, seed);
      clean.push_back(run(p, none));
    }
    for (double level : mse_levels) {
      NoiseInjector noise(level, seed);
      std::size_t agree = 0, total = 0;
      for (std::size_t i = 0; i < prefixes.size(); ++i) {
        const auto noisy = run(prefixes[i], noise);
        for (std::size_t k = 0; k < noisy.size(); ++k) agree += noisy[k] == clean[i][k];
        total += noisy.size();
      }
      rows.push_back({mode, level, noise.measured_mse(),
                      total ? static_cast<double>(agree) / static_cast<double>(total) : 1.0,
                      prefixes[0].size() + steps, seed});
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "mode,target_mse,measured_mse,agreement_rate,seq_len,seed\n";
  for (const auto& r : rows) {
    os << r.mode << ',' << r.target_mse << ',' << r.measured_mse << ',' << r.agreement_rate << ','
       << r.seq_len << ',' << r.seed << '\n';
  }
  return os.str();
}

}  // namespace merge
