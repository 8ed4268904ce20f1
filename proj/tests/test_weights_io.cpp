#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "merge/weights_io.hpp"

using namespace merge;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "merge_io_test";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<unsigned char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

ModelConfig small() {
  ModelConfig c;
  c.vocab = 9;
  c.d = 6;
  c.d_inner = 12;
  c.n_layers = 2;
  c.n_heads = 3;
  c.max_len = 7;
  c.activation = ActivationKind::Quad;
  c.quad = {0.2, 0.4, -0.1};
  c.ln_eps = 1e-6;
  return c;
}

}  // namespace

TEST_CASE("model round trip is bit exact") {
  const auto m = ModelWeights::random(small(), 3);
  const auto path = temp_file("model.mrgw");
  save_model(path, m);
  const WeightFile f = load_weight_file(path);
  CHECK(f.kind == WeightFileKind::Model);
  REQUIRE(f.weights.has_value());
  CHECK(*f.weights == m);
  CHECK(!f.merged.has_value());

  // header layout
  const auto b = bytes_of(path);
  CHECK(std::string(b.begin(), b.begin() + 4) == "MRGW");
  CHECK(b[4] == kWeightFormatVersion);
  CHECK(b[8] == 0);    // kind
  CHECK(b[12] == 9);   // vocab
  CHECK(b[16] == 6);   // d
  CHECK(b[36] == 1);   // activation = quad
}

TEST_CASE("merged and calibration round trip") {
  const auto m = ModelWeights::random(small(), 4);
  const auto ca = calibrate_constant_attention(m, markov_corpus(9, 3, 7, 5));
  const auto mm = merge_model(m, ca);
  const auto path = temp_file("merged.mrgw");
  save_merged(path, m, mm);
  const WeightFile f = load_weight_file(path);
  CHECK(f.kind == WeightFileKind::Merged);
  CHECK(*f.weights == m);
  CHECK(*f.calibration == ca);
  CHECK(*f.merged == mm);

  const auto cpath = temp_file("calib.mrgw");
  save_calibration(cpath, m.cfg, ca);
  const WeightFile c = load_weight_file(cpath);
  CHECK(c.kind == WeightFileKind::Calibration);
  CHECK(*c.calibration == ca);
  CHECK(!c.weights.has_value());
}

TEST_CASE("malformed files are rejected") {
  const auto m = ModelWeights::random(small(), 6);
  const auto path = temp_file("bad.mrgw");
  save_model(path, m);
  const auto good = bytes_of(path);

  auto b = good;
  b[0] = 'X';
  write_bytes(path, b);
  CHECK_THROWS_AS(load_weight_file(path), DataError);

  b = good;
  b[4] = 99;
  write_bytes(path, b);
  CHECK_THROWS_AS(load_weight_file(path), DataError);

  b = good;
  b.resize(b.size() - 5);
  write_bytes(path, b);
  CHECK_THROWS_AS(load_weight_file(path), DataError);

  b = good;
  b.push_back(0);
  write_bytes(path, b);
  CHECK_THROWS_AS(load_weight_file(path), DataError);

  // header says d = 7 but tensors are 6 wide
  b = good;
  b[16] = 7;
  b[20] = 14;
  write_bytes(path, b);
  CHECK_THROWS(load_weight_file(path));

  CHECK_THROWS_AS(load_weight_file(temp_file("missing.mrgw")), DataError);
}
