#include <cmath>

#include "doctest.h"
#include "merge/bench.hpp"

using namespace merge;

namespace {

std::vector<BenchRow> synthetic(const std::string& variant, double power, double c) {
  std::vector<BenchRow> rows;
  for (std::size_t n : {8u, 16u, 32u, 64u}) {
    BenchRow r{variant, n, "Linear", {}};
    r.counters.bytes = static_cast<std::uint64_t>(std::llround(c * std::pow(double(n), power)));
    rows.push_back(r);
  }
  return rows;
}

struct Models {
  ModelWeights m;
  MergedModel mm;
};

const Models& models() {
  static const Models s = [] {
    ModelConfig c;
    c.vocab = 16;
    c.d = 32;
    c.d_inner = 64;
    c.n_layers = 2;
    c.n_heads = 2;
    c.max_len = 16;
    Models out{ModelWeights::random(c, 1), {}};
    out.mm = merge_model(out.m, calibrate_constant_attention(out.m, markov_corpus(16, 4, 16, 2)));
    return out;
  }();
  return s;
}

}  // namespace

TEST_CASE("fit_line") {
  const auto f = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
  CHECK_THROWS_AS(fit_line({1, 2}, {1, 2}), DataError);
  CHECK_THROWS_AS(fit_line({1, 1, 1}, {1, 2, 3}), DataError);
}

TEST_CASE("scaling fit on constructed data") {
  auto rows = synthetic("Vanilla", 2.0, 3.5);
  const auto lin = synthetic("ER_MM", 1.0, 700.0);
  rows.insert(rows.end(), lin.begin(), lin.end());
  const auto fits = scaling_fit(rows);
  REQUIRE(fits.size() == 2);
  for (const auto& f : fits) {
    CAPTURE(f.variant);
    CHECK(f.points == 4);
    CHECK(f.ok());
    if (f.variant == "Vanilla") CHECK(std::fabs(f.slope - 2.0) <= 0.01);
    if (f.variant == "ER_MM") CHECK(std::fabs(f.slope - 1.0) <= 0.01);
  }
  const auto bad = scaling_fit(synthetic("ER_MM", 2.0, 1.0));
  CHECK(!bad.front().ok());
  CHECK(scaling_csv(bad).find("VIOLATION") != std::string::npos);
  CHECK_THROWS_AS(scaling_fit({rows[0], rows[1]}), DataError);
}

TEST_CASE("bench spec validation") {
  BenchSpec s;
  CHECK_NOTHROW(s.validate(64));
  CHECK_THROWS_AS(s.validate(32), DataError);
  s.reps = 0;
  CHECK_THROWS_AS(s.validate(64), DataError);
  s = {};
  s.lens = {2};
  CHECK_THROWS_AS(s.validate(64), DataError);
  CHECK(bench_prefix(5, 16, 3) == bench_prefix(5, 16, 3));
}

TEST_CASE("bench runs, CSV round-trip and markdown") {
  BenchSpec spec;
  spec.lens = {4, 8};
  spec.reps = 2;
  spec.seed = 5;
  const auto rec = run_bench(spec, &models().m, &models().mm);
  REQUIRE(rec.size() == 4 * 2 * 2);
  CHECK(rec[0].tokens == rec[1].tokens);
  CHECK(rec[0].ledger.same_traffic(rec[1].ledger));

  const std::string csv = bench_csv(rec);
  const auto rows = parse_bench_csv(csv);
  CHECK(rows.size() == rec.size() * kCategories.size());
  CHECK(rows[1].category == "Linear");
  CHECK(rows[1].counters == rec[0].ledger[Category::Linear]);

  const auto cells = median_by_cell(rows);
  for (std::size_t n : {4u, 8u})
    CHECK(online_total(cells.at({"ER_MM", n})).bytes < online_total(cells.at({"Vanilla", n})).bytes);

  const std::string md = bench_markdown(rows);
  CHECK(md.find("| Variant | Embed | Linear | Softmax | Sampling | Total | Fraction |") !=
        std::string::npos);
  CHECK(md.find("| Vanilla |") != std::string::npos);
  CHECK(md.find("100.00% |") != std::string::npos);
  CHECK(md.find("Synthetic") == std::string::npos);
  CHECK(bench_markdown(rows, {1.0, 0.0}).find("Synthetic time") != std::string::npos);
  // one row per variant per length
  std::size_t count = 0;
  for (std::size_t p = md.find("| ER_MM |"); p != std::string::npos; p = md.find("| ER_MM |", p + 1))
    ++count;
  CHECK(count == 2);
}

TEST_CASE("bench needs the right models") {
  BenchSpec spec;
  spec.lens = {4};
  CHECK_THROWS_AS(run_bench(spec, &models().m, nullptr), DataError);
  spec.variants = {Variant::OnlyER};
  CHECK_THROWS_AS(run_bench(spec, nullptr, &models().mm), DataError);
  CHECK_THROWS_AS(run_bench(spec, nullptr, nullptr), DataError);
}

TEST_CASE("parse_bench_csv rejects malformed input") {
  CHECK_THROWS_AS(parse_bench_csv("variant,len\n"), DataError);
  const std::string h = "variant,seq_len,category,bytes,rounds,op_count,wall_ns\n";
  CHECK_THROWS_AS(parse_bench_csv(h + "Vanilla,8,Linear,1,2\n"), DataError);
  CHECK_THROWS_AS(parse_bench_csv(h + "Vanilla,8,Linear,-1,2,3,4\n"), DataError);
  CHECK_THROWS_AS(parse_bench_csv(h + "Vanilla,8,Nope,1,2,3,4\n"), DataError);
  CHECK(parse_bench_csv(h + "Vanilla,8,Linear,1,2,3,4\n").size() == 1);
}
