#include <cmath>
#include <random>

#include "doctest.h"
#include "merge/er.hpp"

using namespace merge;

namespace {

ModelConfig small() {
  ModelConfig c;
  c.vocab = 12;
  c.d = 8;
  c.d_inner = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.max_len = 12;
  return c;
}

}  // namespace

TEST_CASE("resend_embedding") {
  const auto m = ModelWeights::random(small(), 1);
  ERState s = er_start({1, 2}, m.embed, 4);
  CHECK(s.length() == 2);
  const Vec h0(8, 0.5);
  s = resend_embedding(std::move(s), h0);
  CHECK(s.length() == 3);
  CHECK(s.hidden.row_vec(0) == h0);
  const Matrix in = s.inputs(m.positional);
  CHECK(in.rows == 3);
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(in(2, j) == 0.5 + m.positional(2, j));
    CHECK(in(0, j) == m.embed(1, j) + m.positional(0, j));
  }
  s = resend_embedding(std::move(s), h0);
  CHECK_THROWS_AS(resend_embedding(s, h0), ShapeError);
}

TEST_CASE("generate_er matches vanilla on the echo fixture") {
  const auto f = echo_fixture(3);
  for (Token start = 0; start < 16; ++start) {
    const std::vector<Token> prefix{start, f.perm[start]};
    const auto vanilla = generate_vanilla(prefix, 10, f.weights);
    const auto calls = lm_head_calls();
    const Matrix hidden = generate_er(prefix, 10, f.weights);
    CHECK(lm_head_calls() == calls);
    CHECK(batch_sample(hidden, f.weights.cls) == vanilla);
    // resent hidden states are the next tokens' embeddings
    for (std::size_t t = 0; t < vanilla.size(); ++t)
      CHECK(max_abs_diff(hidden.row(t), f.weights.embed.row(vanilla[t])) <= 1e-4);
  }
}

TEST_CASE("generate_er on merged models") {
  const auto f = echo_fixture(4);
  const auto ca = calibrate_constant_attention(f.weights, markov_corpus(16, 2, 64, 5));
  const auto mm = merge_model(f.weights, ca);
  const std::vector<Token> prefix{3};
  const auto vanilla = generate_vanilla(prefix, 12, f.weights);
  CHECK(generate_vanilla(prefix, 12, mm) == vanilla);
  const auto calls = lm_head_calls();
  CHECK(batch_sample(generate_er(prefix, 12, mm), mm.cls) == vanilla);
  CHECK(lm_head_calls() == calls);
}

TEST_CASE("generate_er edge cases") {
  const auto m = ModelWeights::random(small(), 6);
  CHECK(generate_er({1}, 0, m).rows == 0);
  CHECK_THROWS_AS(generate_er({1, 2, 3}, 10, m), ShapeError);
  const Matrix h = generate_er({1, 2, 3}, 9, m);
  CHECK(h.rows == 9);
  // a random model's ER run differs from vanilla only through the resent rows;
  // the first step is identical
  const auto v = generate_vanilla({1, 2, 3}, 1, m);
  CHECK(batch_sample(slice_rows(h, 0, 1), m.cls) == v);
}

TEST_CASE("batch_sample") {
  const auto m = ModelWeights::random(small(), 7);
  std::mt19937_64 rng(7);
  const Matrix h = Matrix::gaussian(6, 8, 1.0, rng);
  const auto batched = batch_sample(h, m.cls);
  REQUIRE(batched.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(batched[i] == greedy_sample(lm_head(h.row(i), m.cls)));
  CHECK(batch_sample(slice_rows(h, 0, 1), m.cls) ==
        std::vector<Token>{greedy_sample(lm_head(h.row(0), m.cls))});
  CHECK(batch_sample(h, m.cls, batched[3]).size() ==
        static_cast<std::size_t>(std::find(batched.begin(), batched.end(), batched[3]) -
                                 batched.begin()));
  CHECK(batch_sample(h, m.cls, batched[0]).empty());
}

TEST_CASE("augment_embedding") {
  std::mt19937_64 rng(8);
  const Matrix e = Matrix::gaussian(5, 8, 1.0, rng);
  CHECK(augment_embedding(e, {0.0, 0.0, 0}, rng) == e);
  for (double v : augment_embedding(e, {1.0, 0.75, 0}, rng).data) CHECK(v == 0.0);
  std::mt19937_64 a(9), b(9);
  CHECK(augment_embedding(e, {}, a) == augment_embedding(e, {}, b));
  CHECK_THROWS_AS(augment_embedding(e, {1.5, 0.1, 0}, rng), DataError);
  CHECK_THROWS_AS(augment_embedding(e, {0.5, -0.1, 0}, rng), DataError);
}

TEST_CASE("property: augmentation statistics") {
  std::mt19937_64 rng(10);
  const Matrix ones(1000, 100, 1.0);
  const Matrix out = augment_embedding(ones, {0.6, 0.75, 0}, rng);
  std::size_t zeros = 0;
  double max_dev = 0;
  for (double v : out.data) {
    if (v == 0.0)
      ++zeros;
    else
      max_dev = std::max(max_dev, std::fabs(v - 1.0));
  }
  CHECK(std::fabs(double(zeros) / 1e5 - 0.6) <= 0.01);
  CHECK(max_dev <= 0.75);
}

TEST_CASE("cosine alignment loss") {
  const Matrix a(1, 4, std::vector<double>{1, 2, 0, -1});
  CHECK(cosine_alignment_loss(a, a) == 0.0);
  CHECK(cosine_alignment_loss(a, scale(a, 3.0)) == 0.0);
  CHECK(cosine_alignment_loss(a, Matrix(1, 4, std::vector<double>{2, -1, 5, 0})) == 1.0);
  CHECK(cosine_alignment_loss(a, scale(a, -2.0)) == 2.0);
  CHECK_THROWS_AS(cosine_alignment_loss(a, Matrix(1, 4)), DataError);
  CHECK_THROWS_AS(cosine_alignment_loss(a, Matrix(2, 4, 1.0)), ShapeError);

  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const Matrix h = Matrix::gaussian(3, 5, 1.0, rng), e = Matrix::gaussian(3, 5, 1.0, rng);
    const double l = cosine_alignment_loss(h, e);
    CHECK(l >= 0.0);
    CHECK(l <= 2.0);
  }
}

TEST_CASE("cross entropy") {
  for (std::size_t v : {2u, 12u, 256u}) {
    const Vec uniform(v, 0.3);
    CHECK(std::fabs(cross_entropy(uniform, 1) - std::log(double(v))) <= 1e-9);
  }
  const Vec l{1.0, 2.0, 0.5};
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
  CHECK(cross_entropy(l, 1) == doctest::Approx(-std::log(std::exp(2.0) / z)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(l, 3), DataError);
}

TEST_CASE("ce_loss_noised") {
  ModelConfig cfg = small();
  // the rigged model puts logit 0.25 d on token 7 and 0 elsewhere; scale the
  // head so that the prediction is near certain
  ModelWeights rigged = rigged_fixture(cfg, 7, 12);
  rigged.cls = scale(rigged.cls, 40.0);
  const std::vector<std::vector<Token>> sevens{{1, 7, 7, 7}, {3, 7, 7}};
  CHECK(ce_loss_noised(rigged, sevens, {0.0, 0.0, 1}) <= 1e-9);

  // uniform logits through a zero head
  ModelWeights zero = ModelWeights::random(cfg, 13);
  zero.cls = Matrix(cfg.d, cfg.vocab);
  CHECK(std::fabs(ce_loss_noised(zero, {{1, 2, 3}}, {}) - std::log(12.0)) <= 1e-9);

  // direct transcription on a tiny input with augmentation on
  const auto m = ModelWeights::random(cfg, 14);
  const std::vector<std::vector<Token>> seqs{{1, 4, 2}, {5, 5, 0, 9}};
  const AugmentConfig aug{0.3, 0.2, 99};
  std::mt19937_64 rng(aug.seed);
  double total = 0;
  int count = 0;
  for (const auto& s : seqs) {
    const Matrix e = augment_embedding(embed_lookup(s, m.embed), aug, rng);
    const Matrix h = transformer_forward(add_positional(e, m.positional), m);
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      const Vec logits = vec_matmul(h.row(i), m.cls);
      double z = 0;
      for (double v : logits) z += std::exp(v);
      total += -std::log(std::exp(logits[s[i + 1]]) / z);
      ++count;
    }
  }
  CHECK(ce_loss_noised(m, seqs, aug) == doctest::Approx(total / count).epsilon(1e-12));
}

TEST_CASE("combined loss") {
  CHECK(combined_loss(0.3, 1.7, 1.0) == 0.3);
  CHECK(combined_loss(0.3, 1.7, 0.0) == 1.7);
  CHECK(LossWeights{}.lambda == 0.75);
  CHECK(combined_loss(0.4, 2.0, 0.75) == doctest::Approx(0.75 * 0.4 + 0.25 * 2.0));
  CHECK_THROWS_AS(combined_loss(0.3, 1.7, 1.2), DataError);
  CHECK_THROWS_AS(combined_loss(0.3, 1.7, -0.1), DataError);
  // monotone in each argument
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.0, 3.0), lam(0.01, 0.99);
  for (int t = 0; t < 1000; ++t) {
    const double a = u(rng), b = u(rng), l = lam(rng), d = u(rng) + 1e-3;
    CHECK(combined_loss(a + d, b, l) > combined_loss(a, b, l));
    CHECK(combined_loss(a, b + d, l) > combined_loss(a, b, l));
  }
}

TEST_CASE("noise injector hits the target MSE") {
  std::mt19937_64 rng(16);
  const Matrix x = Matrix::gaussian(10, 32, 1.0, rng);
  for (double target : {0.0, 0.01, 0.08, 0.5}) {
    NoiseInjector n(target, 17);
    const Matrix y = n.apply(x);
    double mse = 0;
    for (std::size_t i = 0; i < x.data.size(); ++i) mse += (y.data[i] - x.data[i]) * (y.data[i] - x.data[i]);
    mse /= double(x.data.size());
    CHECK(std::fabs(mse - target) <= 0.05 * target + 1e-15);
    CHECK(std::fabs(n.measured_mse() - target) <= 0.05 * target + 1e-15);
  }
}

TEST_CASE("noise sweep") {
  const auto m = ModelWeights::random(small(), 18);
  const auto rows = noise_robustness_sweep(m, {0.0, 0.05, 1.0}, {{1, 2}, {4, 5}}, 5, 19);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].mode == "vanilla");
  CHECK(rows[3].mode == "er");
  for (const auto& r : rows) {
    if (r.target_mse == 0.0) CHECK(r.agreement_rate == 1.0);
    CHECK(r.seq_len == 7);
    CHECK(std::fabs(r.measured_mse - r.target_mse) <= 0.05 * r.target_mse + 1e-15);
  }
  const std::string csv = sweep_csv(rows);
  CHECK(csv.rfind("mode,target_mse,measured_mse,agreement_rate,seq_len,seed\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
}
