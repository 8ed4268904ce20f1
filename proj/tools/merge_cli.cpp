// merge-cli: fixtures, calibration, merging, encrypted benchmarks, scaling
// fits and noise sweeps.
//
// Exit codes: 0 success, 2 usage, 3 data/shape/I-O, 4 protocol.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "merge/bench.hpp"
#include "merge/er.hpp"
#include "merge/weights_io.hpp"

namespace fs = std::filesystem;
using namespace merge;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t value) {
  if (flag->count() > 0) return value;
  const char* env = std::getenv("MERGE_SEED");
  if (!env || !*env) return 0;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used == std::string(env).size() && env[0] != '-') return v;
  } catch (const std::exception&) {
  }
  throw UsageError(std::string("MERGE_SEED is not an unsigned integer: '") + env + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write to " + path.string() + " failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

WeightFile load(const fs::path& path, WeightFileKind want, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw IoError(path.string() + " does not exist");
  WeightFile f = load_weight_file(path);
  if (f.kind != want) {
    const char* names[] = {"a model", "a merged model", "a calibration"};
    throw UsageError(std::string(flag) + " expects " + names[static_cast<int>(want)] + " file, " +
                     path.string() + " holds " + names[static_cast<int>(f.kind)]);
  }
  return f;
}

// ---------------------------------------------------------------- commands

struct GenFixture {
  std::string fixture = "random";
  std::string out;
  std::uint64_t seed = 0;
  ModelConfig cfg = [] {
    ModelConfig c;
    c.vocab = 16;
    c.d = 32;
    c.d_inner = 64;
    c.n_layers = 2;
    c.n_heads = 2;
    c.max_len = 64;
    return c;
  }();
  std::string activation = "relu";
  CLI::Option* seed_opt = nullptr;

  int run() {
    const std::uint64_t s = resolve_seed(seed_opt, seed);
    ModelWeights m;
    if (fixture == "echo") {
      m = echo_fixture(s).weights;
    } else if (fixture == "random") {
      if (activation == "quad")
        cfg.activation = ActivationKind::Quad;
      else if (activation != "relu")
        throw UsageError("--activation must be relu or quad");
      m = ModelWeights::random(cfg, s);
    } else {
      throw UsageError("--fixture must be random or echo");
    }
    save_model(out, m);
    std::cout << "wrote " << fixture << " model (V=" << m.cfg.vocab << ", d=" << m.cfg.d
              << ", d_inner=" << m.cfg.d_inner << ", layers=" << m.cfg.n_layers
              << ", heads=" << m.cfg.n_heads << ", max_len=" << m.cfg.max_len << ") to " << out
              << "\n";
    return 0;
  }
};

struct Calibrate {
  std::string model, out;
  std::uint64_t seed = 0;
  std::size_t count = 64, length = 0;
  CLI::Option* seed_opt = nullptr;

  int run() {
    const auto f = load(model, WeightFileKind::Model, "--model");
    const ModelWeights& m = *f.weights;
    const std::size_t len = length ? length : m.cfg.max_len;
    const auto corpus = markov_corpus(m.cfg.vocab, count, len, resolve_seed(seed_opt, seed));
    const auto ca = calibrate_constant_attention(m, corpus);
    double worst = 0;
    for (const auto& layer : ca.c)
      for (const auto& c : layer)
        for (std::size_t i = 0; i < c.rows; ++i) {
          double sum = 0;
          for (double v : c.row(i)) sum += v;
          worst = std::max(worst, std::fabs(sum - 1.0));
        }
    save_calibration(out, m.cfg, ca);
    std::cout << "calibrated on " << count << " sequences of length " << len
              << "; max |row sum - 1| = " << worst << "; wrote " << out << "\n";
    return 0;
  }
};

struct Merge {
  std::string model, calib, out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;

  int run() {
    if (!model.empty() && fs::exists(model) &&
        load_weight_file(model).kind == WeightFileKind::Merged) {
      throw UsageError(model + " is already merged");
    }
    const auto f = load(model, WeightFileKind::Model, "--model");
    const auto c = load(calib, WeightFileKind::Calibration, "--calib");
    const ModelWeights& m = *f.weights;
    if (!(c.cfg == m.cfg)) throw ShapeError("calibration was made for a different model shape");
    const MergedModel mm = merge_model(m, *c.calibration);

    // Self-check against the unfolded computation on random probe inputs.
    std::mt19937_64 rng(resolve_seed(seed_opt, seed));
    double worst = 0;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      for (std::size_t len : {std::size_t{1}, m.cfg.max_len / 2, m.cfg.max_len}) {
        if (len == 0) continue;
        const Matrix h = Matrix::gaussian(len, m.cfg.d, 1.0, rng);
        worst = std::max(worst, max_abs_diff(merged_forward(h, mm.layers[l], m.cfg),
                                             constant_attention_reference(
                                                 h, m.layers[l], mm.layers[l].c, m.cfg)));
      }
    }
    save_merged(out, m, mm);
    std::cout << "merge self-check: max deviation " << worst << " over "
              << m.layers.size() * 3 << " probes (" << (worst <= 1e-5 ? "ok" : "ABOVE 1e-5")
              << "); wrote " << out << "\n";
    return worst <= 1e-5 ? 0 : 3;
  }
};

struct Bench {
  std::string model, merged, out;
  std::vector<std::string> variants;
  std::vector<std::size_t> lens;
  std::size_t prefix_len = 2, reps = 1;
  std::uint64_t seed = 0;
  double ns_per_byte = 0, ns_per_round = 0;
  CLI::Option* seed_opt = nullptr;

  int run() {
    BenchSpec spec;
    if (!variants.empty()) {
      spec.variants.clear();
      for (const auto& v : variants) {
        try {
          spec.variants.push_back(variant_from_name(v));
        } catch (const DataError& e) {
          throw UsageError(e.what());
        }
      }
    }
    if (!lens.empty()) spec.lens = lens;
    spec.prefix_len = prefix_len;
    spec.reps = reps;
    spec.seed = resolve_seed(seed_opt, seed);
    spec.clock = {ns_per_byte, ns_per_round};

    bool need_plain = false, need_merged = false;
    for (Variant v : spec.variants) (uses_merged(v) ? need_merged : need_plain) = true;
    std::optional<WeightFile> plain, merged_file;
    if (need_plain) plain = load(model, WeightFileKind::Model, "--model");
    if (need_merged) merged_file = load(merged, WeightFileKind::Merged, "--merged");

    const auto records = run_bench(spec, plain ? &*plain->weights : nullptr,
                                   merged_file ? &*merged_file->merged : nullptr);
    const std::string csv = bench_csv(records);
    const std::string md = bench_markdown(parse_bench_csv(csv), spec.clock);
    if (!out.empty()) {
      write_text(fs::path(out) / "bench.csv", csv);
      write_text(fs::path(out) / "summary.md", md);
    }
    std::cout << md;
    return 0;
  }
};

struct ScalingFit {
  std::string in, out;

  int run() {
    const auto fits = scaling_fit(parse_bench_csv(read_text(in)));
    const std::string csv = scaling_csv(fits);
    if (!out.empty()) write_text(out, csv);
    std::cout << csv;
    bool ok = true;
    for (const auto& f : fits) ok = ok && f.ok();
    if (!ok) std::cerr << "slope outside the expected band\n";
    return 0;
  }
};

struct SweepNoise {
  std::string model, out;
  std::vector<double> mse{0.0, 0.0005, 0.001, 0.002, 0.005, 0.01};
  std::size_t steps = 16, prefix_len = 2, prefixes = 8;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;

  int run() {
    const auto f = load(model, WeightFileKind::Model, "--model");
    const ModelWeights& m = *f.weights;
    const std::uint64_t s = resolve_seed(seed_opt, seed);
    std::vector<std::vector<Token>> ps;
    for (std::size_t i = 0; i < prefixes; ++i) ps.push_back(bench_prefix(prefix_len, m.cfg.vocab, s + i));
    const std::string csv = sweep_csv(noise_robustness_sweep(m, mse, ps, steps, s));
    if (!out.empty()) write_text(out, csv);
    std::cout << csv;
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Encrypted generation with merged modules and embedding resending"};
  app.require_subcommand(1);

  GenFixture gen;
  auto* g = app.add_subcommand("gen-fixture", "write a seeded toy model");
  g->add_option("--fixture", gen.fixture, "random or echo")->capture_default_str();
  g->add_option("--out", gen.out, "output weight file")->required();
  gen.seed_opt = g->add_option("--seed", gen.seed, "seed (falls back to MERGE_SEED)");
  g->add_option("--vocab", gen.cfg.vocab)->capture_default_str();
  g->add_option("--d", gen.cfg.d)->capture_default_str();
  g->add_option("--d-inner", gen.cfg.d_inner)->capture_default_str();
  g->add_option("--layers", gen.cfg.n_layers)->capture_default_str();
  g->add_option("--heads", gen.cfg.n_heads)->capture_default_str();
  g->add_option("--max-len", gen.cfg.max_len)->capture_default_str();
  g->add_option("--activation", gen.activation, "relu or quad")->capture_default_str();

  Calibrate cal;
  auto* c = app.add_subcommand("calibrate", "average attention maps over a synthetic corpus");
  c->add_option("--model", cal.model)->required();
  c->add_option("--out", cal.out)->required();
  cal.seed_opt = c->add_option("--seed", cal.seed, "corpus seed (falls back to MERGE_SEED)");
  c->add_option("--count", cal.count, "corpus sequences")->capture_default_str();
  c->add_option("--length", cal.length, "sequence length (default max_len)");

  Merge mer;
  auto* m = app.add_subcommand("merge", "fold a model and its calibration into merged form");
  m->add_option("--model", mer.model)->required();
  m->add_option("--calib", mer.calib)->required();
  m->add_option("--out", mer.out)->required();
  mer.seed_opt = m->add_option("--seed", mer.seed, "probe seed for the self-check");

  Bench ben;
  auto* b = app.add_subcommand("bench", "run encrypted generation and report traffic");
  b->add_option("--model", ben.model, "original model (Vanilla, OnlyER)");
  b->add_option("--merged", ben.merged, "merged model (OnlyMM, ER_MM)");
  b->add_option("--variant", ben.variants, "comma-separated variants")->delimiter(',');
  b->add_option("--lens", ben.lens, "comma-separated total lengths")->delimiter(',');
  b->add_option("--prefix-len", ben.prefix_len)->capture_default_str();
  b->add_option("--reps", ben.reps)->capture_default_str();
  ben.seed_opt = b->add_option("--seed", ben.seed);
  b->add_option("--out", ben.out, "directory for bench.csv and summary.md");
  b->add_option("--ns-per-byte", ben.ns_per_byte, "synthetic clock");
  b->add_option("--ns-per-round", ben.ns_per_round, "synthetic clock");

  ScalingFit fit;
  auto* s = app.add_subcommand("scaling-fit", "log-log fit of bench bytes against length");
  s->add_option("csv", fit.in, "bench CSV")->required();
  s->add_option("--out", fit.out);

  SweepNoise sw;
  auto* n = app.add_subcommand("sweep-noise", "token agreement under embedding noise");
  n->add_option("--model", sw.model)->required();
  n->add_option("--mse", sw.mse, "comma-separated target MSE levels")->delimiter(',');
  n->add_option("--steps", sw.steps)->capture_default_str();
  n->add_option("--prefix-len", sw.prefix_len)->capture_default_str();
  n->add_option("--prefixes", sw.prefixes)->capture_default_str();
  sw.seed_opt = n->add_option("--seed", sw.seed);
  n->add_option("--out", sw.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (g->parsed()) return gen.run();
    if (c->parsed()) return cal.run();
    if (m->parsed()) return mer.run();
    if (b->parsed()) return ben.run();
    if (s->parsed()) return fit.run();
    if (n->parsed()) return sw.run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    // DataError, ShapeError, EncodingRangeError, I/O
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
