#include "merge/bench.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

namespace merge {

namespace {

constexpr const char* kBenchHeader = "variant,seq_len,category,bytes,rounds,op_count,wall_ns";

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::uint64_t parse_u64(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || s[0] == '-') {
    throw DataError("bench csv line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

template <class T>
T median(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

std::optional<std::pair<double, double>> linear_band(const std::string& variant) {
  if (variant == variant_name(Variant::ER_MM)) return std::pair{0.7, 1.3};
  if (variant == variant_name(Variant::Vanilla)) return std::pair{1.7, 2.3};
  return std::nullopt;
}

}  // namespace

void BenchSpec::validate(std::size_t max_len) const {
  if (variants.empty()) throw DataError("bench: no variants");
  if (lens.empty()) throw DataError("bench: no sequence lengths");
  if (reps < 1) throw DataError("bench: repetitions must be >= 1");
  if (prefix_len < 1) throw DataError("bench: prefix length must be >= 1");
  for (std::size_t n : lens) {
    if (n <= prefix_len || n > max_len) {
      throw DataError("bench: length " + std::to_string(n) + " outside (prefix_len, max_len] = (" +
                      std::to_string(prefix_len) + ", " + std::to_string(max_len) + "]");
    }
  }
}

std::vector<Token> bench_prefix(std::size_t len, std::size_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Token> pick(0, static_cast<Token>(vocab - 1));
  std::vector<Token> p(len);
  for (auto& t : p) t = pick(rng);
  return p;
}

std::vector<BenchRecord> run_bench(const BenchSpec& spec, const ModelWeights* model,
                                   const MergedModel* merged) {
  const ModelConfig* cfg = model ? &model->cfg : merged ? &merged->cfg : nullptr;
  if (!cfg) throw DataError("bench: no model supplied");
  spec.validate(cfg->max_len);
  const auto prefix = bench_prefix(spec.prefix_len, cfg->vocab, spec.seed);
  std::vector<BenchRecord> out;
  for (Variant v : spec.variants) {
    if (uses_merged(v) ? !merged : !model) {
      throw DataError(std::string("bench: ") + std::string(variant_name(v)) + " needs " +
                      (uses_merged(v) ? "a merged model" : "the original model"));
    }
    for (std::size_t n : spec.lens) {
      for (std::size_t rep = 0; rep < spec.reps; ++rep) {
        const std::uint64_t seed = spec.seed + 1000003 * rep;
        try {
          auto res = uses_merged(v) ? EncryptedSession(*merged, v, seed).generate(prefix, n)
                                    : EncryptedSession(*model, v, seed).generate(prefix, n);
          out.push_back({v, n, rep, std::move(res.tokens), res.ledger});
        } catch (const ProtocolError& e) {
          throw ProtocolError(std::string(variant_name(v)) + " at N=" + std::to_string(n) + ": " +
                              e.what());
        }
      }
    }
  }
  return out;
}

std::string bench_csv(const std::vector<BenchRecord>& records) {
  std::ostringstream os;
  os << kBenchHeader << '\n';
  for (const auto& r : records) {
    for (Category c : kCategories) {
      const Counters& k = r.ledger[c];
      os << variant_name(r.variant) << ',' << r.seq_len << ',' << category_name(c) << ','
         << k.bytes << ',' << k.rounds << ',' << k.op_count << ',' << k.wall_ns << '\n';
    }
  }
  return os.str();
}

std::vector<BenchRow> parse_bench_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kBenchHeader) {
    throw DataError(std::string("bench csv: header must be '") + kBenchHeader + "'");
  }
  std::vector<BenchRow> rows;
  for (std::size_t n = 2; std::getline(is, line); ++n) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) throw DataError("bench csv line " + std::to_string(n) + ": expected 7 fields");
    BenchRow r;
    r.variant = f[0];
    r.seq_len = parse_u64(f[1], n);
    r.category = std::string(category_name(category_from_name(f[2])));
    r.counters = {parse_u64(f[3], n), parse_u64(f[4], n), parse_u64(f[5], n), parse_u64(f[6], n)};
    rows.push_back(std::move(r));
  }
  return rows;
}

std::map<std::pair<std::string, std::size_t>, LedgerSnapshot> median_by_cell(
    const std::vector<BenchRow>& rows) {
  std::map<std::pair<std::string, std::size_t>, std::map<Category, std::vector<Counters>>> runs;
  for (const auto& r : rows) runs[{r.variant, r.seq_len}][category_from_name(r.category)].push_back(r.counters);
  std::map<std::pair<std::string, std::size_t>, LedgerSnapshot> out;
  for (const auto& [key, cats] : runs) {
    LedgerSnapshot s;
    for (const auto& [c, list] : cats) {
      std::vector<std::uint64_t> b, r, o, w;
      for (const auto& k : list) {
        b.push_back(k.bytes);
        r.push_back(k.rounds);
        o.push_back(k.op_count);
        w.push_back(k.wall_ns);
      }
      s[c] = {median(b), median(r), median(o), median(w)};
    }
    out[key] = s;
  }
  return out;
}

std::string bench_markdown(const std::vector<BenchRow>& rows, SyntheticClock clock) {
  const auto cells = median_by_cell(rows);
  std::set<std::size_t> lens;
  for (const auto& [key, s] : cells) lens.insert(key.second);
  const bool timed = clock.ns_per_byte != 0 || clock.ns_per_round != 0;

  std::ostringstream os;
  os << std::fixed;
  for (std::size_t n : lens) {
    os << "### N = " << n << "\n\n"
       << "| Variant | Embed | Linear | Softmax | Sampling | Total | Fraction |"
       << (timed ? " Synthetic time (s) |" : "") << "\n"
       << "|---|---:|---:|---:|---:|---:|---:|" << (timed ? "---:|" : "") << "\n";
    const auto base = cells.find({std::string(variant_name(Variant::Vanilla)), n});
    // Known variants first in their usual order, anything else after.
    std::vector<std::string> names;
    for (Variant v : kVariants) names.emplace_back(variant_name(v));
    for (const auto& [key, s] : cells)
      if (std::find(names.begin(), names.end(), key.first) == names.end()) names.push_back(key.first);
    for (const auto& name : names) {
      const auto it = cells.find({name, n});
      if (it == cells.end()) continue;
      const LedgerSnapshot& s = it->second;
      const Counters total = online_total(s);
      os << "| " << name;
      for (Category c : {Category::Embed, Category::Linear, Category::Softmax, Category::Sampling})
        os << " | " << s[c].bytes;
      os << " | " << total.bytes << " | ";
      if (base != cells.end() && online_total(base->second).bytes > 0) {
        os << std::setprecision(2)
           << 100.0 * static_cast<double>(total.bytes) /
                  static_cast<double>(online_total(base->second).bytes)
           << "%";
      } else {
        os << "n/a";
      }
      os << " |";
      if (timed) os << ' ' << std::setprecision(3) << clock(total) * 1e-9 << " |";
      os << "\n";
    }
    os << "\n";
  }
  if (timed) {
    os << "Synthetic time = " << clock.ns_per_byte << " ns/byte x bytes + " << clock.ns_per_round
       << " ns/round x rounds; not a measurement.\n";
  }
  return os.str();
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("fit_line: x and y differ in length");
  if (x.size() < 3) throw DataError("fit_line: at least three points required");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) throw DataError("fit_line: all x equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0 ? 1.0 : sxy * sxy / (sxx * syy);
  return f;
}

std::vector<FitRow> scaling_fit(const std::vector<BenchRow>& rows) {
  const auto cells = median_by_cell(rows);
  std::map<std::pair<std::string, Category>, std::pair<std::vector<double>, std::vector<double>>> pts;
  for (const auto& [key, s] : cells) {
    for (Category c : kCategories) {
      if (s[c].bytes == 0) continue;
      auto& [x, y] = pts[{key.first, c}];
      x.push_back(std::log(static_cast<double>(key.second)));
      y.push_back(std::log(static_cast<double>(s[c].bytes)));
    }
  }
  std::vector<FitRow> out;
  for (const auto& [key, xy] : pts) {
    if (xy.first.size() < 3) continue;
    const LineFit f = fit_line(xy.first, xy.second);
    FitRow r{key.first, std::string(category_name(key.second)), f.slope, f.intercept, f.r2,
             xy.first.size(), std::nullopt};
    if (key.second == Category::Linear) r.band = linear_band(key.first);
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataError("scaling fit: need at least three lengths per variant");
  return out;
}

std::string scaling_csv(const std::vector<FitRow>& fits) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "variant,category,slope,intercept,r2,points,band_min,band_max,status\n";
  for (const auto& f : fits) {
    os << f.variant << ',' << f.category << ',' << f.slope << ',' << f.intercept << ',' << f.r2
       << ',' << f.points << ',';
    if (f.band)
      os << f.band->first << ',' << f.band->second << ',' << (f.ok() ? "ok" : "VIOLATION");
    else
      os << ",,";
    os << '\n';
  }
  return os.str();
}

}  // namespace merge
