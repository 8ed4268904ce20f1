#pragma once

// Benchmark sweeps over (variant, length), their CSV and markdown reports,
// and log-log scaling fits of the byte counters.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "merge/private_inference.hpp"

namespace merge {

struct BenchSpec {
  std::vector<Variant> variants{kVariants.begin(), kVariants.end()};
  std::vector<std::size_t> lens{8, 16, 32, 64};  // total lengths, prefix included
  std::size_t prefix_len = 2;
  std::uint64_t seed = 0;
  std::size_t reps = 1;
  SyntheticClock clock;

  // max_len bounds every length; the prefix must leave room for one step.
  void validate(std::size_t max_len) const;
};

// Prefix tokens drawn uniformly from the vocabulary by seed.
std::vector<Token> bench_prefix(std::size_t len, std::size_t vocab, std::uint64_t seed);

struct BenchRecord {
  Variant variant;
  std::size_t seq_len = 0;
  std::size_t rep = 0;
  std::vector<Token> tokens;
  LedgerSnapshot ledger;
};

// Models are only needed for the variants that use them. One fresh session
// per run, seeded from (seed, rep).
std::vector<BenchRecord> run_bench(const BenchSpec& spec, const ModelWeights* model,
                                   const MergedModel* merged);

// One row per (run, category): variant,seq_len,category,bytes,rounds,op_count,wall_ns.
std::string bench_csv(const std::vector<BenchRecord>& records);

struct BenchRow {
  std::string variant;
  std::size_t seq_len = 0;
  std::string category;
  Counters counters;
};
std::vector<BenchRow> parse_bench_csv(const std::string& text);

// Median over repetitions per (variant, seq_len) and category.
std::map<std::pair<std::string, std::size_t>, LedgerSnapshot> median_by_cell(
    const std::vector<BenchRow>& rows);

// One table per length; one row per variant with Embed/Linear/Softmax/
// Sampling/Total bytes and Fraction of the Vanilla total at that length.
std::string bench_markdown(const std::vector<BenchRow>& rows, SyntheticClock clock = {});

struct FitRow {
  std::string variant, category;
  double slope = 0, intercept = 0, r2 = 0;
  std::size_t points = 0;
  // Expected slope band for Linear bytes; absent for other categories.
  std::optional<std::pair<double, double>> band;
  bool ok() const { return !band || (slope >= band->first && slope <= band->second); }
};

struct LineFit {
  double slope = 0, intercept = 0, r2 = 0;
};
// Least squares y = slope x + intercept; needs >= 3 points.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// log(bytes) against log(seq_len) per (variant, category). Cells with zero
// bytes are left out; a (variant, category) with fewer than three non-zero
// lengths gets no fit. DataError if no variant has three lengths.
std::vector<FitRow> scaling_fit(const std::vector<BenchRow>& rows);
// variant,category,slope,intercept,r2,points,band_min,band_max,status
std::string scaling_csv(const std::vector<FitRow>& fits);

}  // namespace merge
