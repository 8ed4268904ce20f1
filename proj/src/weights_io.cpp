#include "merge/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

namespace merge {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'G', 'W'};
// Upper bounds that keep a corrupt header from triggering huge allocations.
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxRank = 4;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }

  void tensor(const std::string& name, std::vector<std::uint32_t> dims,
              const std::vector<double>& data) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) u32(d);
    for (double v : data) f64(v);
    ++count_;
  }
  void matrix(const std::string& name, const Matrix& m) {
    tensor(name, {static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)}, m.data);
  }
  void vec(const std::string& name, const Vec& v) {
    tensor(name, {static_cast<std::uint32_t>(v.size())}, v);
  }

  void save(const std::filesystem::path& path, WeightFileKind kind, const ModelConfig& cfg) {
    Writer head;
    head.bytes(kMagic, 4);
    head.u32(kWeightFormatVersion);
    head.u32(static_cast<std::uint32_t>(kind));
    for (std::size_t v : {cfg.vocab, cfg.d, cfg.d_inner, cfg.n_layers, cfg.n_heads, cfg.max_len})
      head.u32(static_cast<std::uint32_t>(v));
    head.u32(static_cast<std::uint32_t>(cfg.activation));
    head.u32(count_);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(head.buf_.data(), static_cast<std::streamsize>(head.buf_.size()));
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw DataError("write failed: " + path.string());
  }

 private:
  std::vector<char> buf_;
  std::uint32_t count_ = 0;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw DataError("weight file truncated");
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

void write_config_tensors(Writer& w, const ModelConfig& cfg) {
  w.vec("config.ln_eps", {cfg.ln_eps});
  w.vec("config.quad", {cfg.quad.a2, cfg.quad.a1, cfg.quad.a0});
}

void write_weights(Writer& w, const ModelWeights& m) {
  write_config_tensors(w, m.cfg);
  w.matrix("embed", m.embed);
  w.matrix("positional", m.positional);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& L = m.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    w.matrix(p + "wq", L.wq);
    w.matrix(p + "wk", L.wk);
    w.matrix(p + "wv", L.wv);
    w.matrix(p + "wd", L.wd);
    w.vec(p + "bd", L.bd);
    w.vec(p + "gamma1", L.gamma1);
    w.vec(p + "beta1", L.beta1);
    w.matrix(p + "wi", L.wi);
    w.vec(p + "bi", L.bi);
    w.matrix(p + "wo", L.wo);
    w.vec(p + "bo", L.bo);
    w.vec(p + "gamma2", L.gamma2);
    w.vec(p + "beta2", L.beta2);
  }
  w.matrix("cls", m.cls);
}

std::string head_name(std::size_t l, std::size_t h, const char* what) {
  return "layer" + std::to_string(l) + ".head" + std::to_string(h) + "." + what;
}

void write_calibration(Writer& w, const ConstantAttention& ca) {
  for (std::size_t l = 0; l < ca.c.size(); ++l)
    for (std::size_t h = 0; h < ca.c[l].size(); ++h) w.matrix(head_name(l, h, "c"), ca.c[l][h]);
}

using TensorMap = std::map<std::string, Tensor>;

const Tensor& find(const TensorMap& t, const std::string& name) {
  auto it = t.find(name);
  if (it == t.end()) throw DataError("weight file is missing tensor " + name);
  return it->second;
}

Matrix get_matrix(const TensorMap& t, const std::string& name, std::size_t rows,
                  std::size_t cols) {
  const Tensor& x = find(t, name);
  if (x.dims.size() != 2 || x.dims[0] != rows || x.dims[1] != cols) {
    throw ShapeError(name + ": expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return Matrix(rows, cols, x.data);
}

Vec get_vec(const TensorMap& t, const std::string& name, std::size_t n) {
  const Tensor& x = find(t, name);
  if (x.dims.size() != 1 || x.dims[0] != n) {
    throw ShapeError(name + ": expected length " + std::to_string(n));
  }
  return x.data;
}

ModelWeights read_weights(const TensorMap& t, const ModelConfig& cfg) {
  ModelWeights m;
  m.cfg = cfg;
  const std::size_t d = cfg.d, di = cfg.d_inner;
  m.embed = get_matrix(t, "embed", cfg.vocab, d);
  m.positional = get_matrix(t, "positional", cfg.max_len, d);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerWeights L;
    L.wq = get_matrix(t, p + "wq", d, d);
    L.wk = get_matrix(t, p + "wk", d, d);
    L.wv = get_matrix(t, p + "wv", d, d);
    L.wd = get_matrix(t, p + "wd", d, d);
    L.bd = get_vec(t, p + "bd", d);
    L.gamma1 = get_vec(t, p + "gamma1", d);
    L.beta1 = get_vec(t, p + "beta1", d);
    L.wi = get_matrix(t, p + "wi", d, di);
    L.bi = get_vec(t, p + "bi", di);
    L.wo = get_matrix(t, p + "wo", di, d);
    L.bo = get_vec(t, p + "bo", d);
    L.gamma2 = get_vec(t, p + "gamma2", d);
    L.beta2 = get_vec(t, p + "beta2", d);
    m.layers.push_back(std::move(L));
  }
  m.cls = get_matrix(t, "cls", d, cfg.vocab);
  m.validate();
  return m;
}

ConstantAttention read_calibration(const TensorMap& t, const ModelConfig& cfg) {
  ConstantAttention ca;
  ca.c.resize(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l)
    for (std::size_t h = 0; h < cfg.n_heads; ++h)
      ca.c[l].push_back(get_matrix(t, head_name(l, h, "c"), cfg.max_len, cfg.max_len));
  return ca;
}

std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_model(const std::filesystem::path& path, const ModelWeights& m) {
  m.validate();
  Writer w;
  write_weights(w, m);
  w.save(path, WeightFileKind::Model, m.cfg);
}

void save_merged(const std::filesystem::path& path, const ModelWeights& m,
                 const MergedModel& mm) {
  m.validate();
  if (!(mm.cfg == m.cfg)) throw ShapeError("merged model config differs from weights");
  Writer w;
  write_weights(w, m);
  ConstantAttention ca;
  for (const auto& ml : mm.layers) ca.c.push_back(ml.c);
  write_calibration(w, ca);
  for (std::size_t l = 0; l < mm.layers.size(); ++l) {
    const auto& ml = mm.layers[l];
    for (std::size_t h = 0; h < ml.mu.size(); ++h) w.matrix(head_name(l, h, "mu"), ml.mu[h]);
    w.matrix("layer" + std::to_string(l) + ".r", ml.r);
    w.vec("layer" + std::to_string(l) + ".b_mu", ml.b_mu);
  }
  w.vec("merge.ffn_residual", {mm.ffn_residual ? 1.0 : 0.0});
  w.save(path, WeightFileKind::Merged, m.cfg);
}

void save_calibration(const std::filesystem::path& path, const ModelConfig& cfg,
                      const ConstantAttention& ca) {
  Writer w;
  write_config_tensors(w, cfg);
  write_calibration(w, ca);
  w.save(path, WeightFileKind::Calibration, cfg);
}

WeightFile load_weight_file(const std::filesystem::path& path) {
  Reader r(read_all(path));
  if (r.str(4) != std::string(kMagic, 4)) throw DataError(path.string() + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) {
    throw DataError(path.string() + ": unsupported version " + std::to_string(version));
  }
  WeightFile f;
  const std::uint32_t kind = r.u32();
  if (kind > 2) throw DataError(path.string() + ": unknown file kind");
  f.kind = static_cast<WeightFileKind>(kind);
  f.cfg.vocab = r.u32();
  f.cfg.d = r.u32();
  f.cfg.d_inner = r.u32();
  f.cfg.n_layers = r.u32();
  f.cfg.n_heads = r.u32();
  f.cfg.max_len = r.u32();
  const std::uint32_t act = r.u32();
  if (act > 1) throw DataError(path.string() + ": unknown activation");
  f.cfg.activation = static_cast<ActivationKind>(act);

  TensorMap tensors;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    if (name_len > kMaxNameLen) throw DataError("tensor name too long");
    std::string name = r.str(name_len);
    Tensor t;
    const std::uint32_t rank = r.u32();
    if (rank > kMaxRank) throw DataError(name + ": rank too large");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.u32());
      n *= t.dims.back();
      if (n > kMaxElements) throw DataError(name + ": tensor too large");
    }
    t.data.reserve(n);
    for (std::uint64_t k = 0; k < n; ++k) t.data.push_back(r.f64());
    if (!tensors.emplace(std::move(name), std::move(t)).second) {
      throw DataError("duplicate tensor in weight file");
    }
  }
  if (!r.done()) throw DataError(path.string() + ": trailing bytes");

  f.cfg.ln_eps = get_vec(tensors, "config.ln_eps", 1)[0];
  const Vec q = get_vec(tensors, "config.quad", 3);
  f.cfg.quad = {q[0], q[1], q[2]};
  f.cfg.validate();

  if (f.kind != WeightFileKind::Calibration) f.weights = read_weights(tensors, f.cfg);
  if (f.kind != WeightFileKind::Model) f.calibration = read_calibration(tensors, f.cfg);
  if (f.kind == WeightFileKind::Merged) {
    MergedModel mm = merge_model(*f.weights, *f.calibration);
    // The stored folded matrices are authoritative.
    for (std::size_t l = 0; l < mm.layers.size(); ++l) {
      auto& ml = mm.layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      for (std::size_t h = 0; h < ml.mu.size(); ++h)
        ml.mu[h] = get_matrix(tensors, head_name(l, h, "mu"), f.cfg.d, f.cfg.d_inner);
      ml.r = get_matrix(tensors, p + "r", f.cfg.d, f.cfg.d_inner);
      ml.b_mu = get_vec(tensors, p + "b_mu", f.cfg.d_inner);
    }
    mm.ffn_residual = get_vec(tensors, "merge.ffn_residual", 1)[0] != 0.0;
    f.merged = std::move(mm);
  }
  return f;
}

}  // namespace merge
