#include "sgcl/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace sgcl {

using json = nlohmann::ordered_json;

Tensor& ParameterStore::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw DataError("parameter store '" + role + "': unknown parameter " + name);
  return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw DataError("parameter store '" + role + "': unknown parameter " + name);
  return it->second;
}

Tensor& ParameterStore::add(const std::string& name, Tensor t) {
  auto [it, inserted] = params.emplace(name, std::move(t));
  if (!inserted) throw DataError("parameter store '" + role + "': duplicate parameter " + name);
  return it->second;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : params) t.zero_grad();
}

void ParameterStore::set_trainable(bool trainable) {
  for (auto& [name, t] : params) t.set_requires_grad(trainable);
}

ParameterStore ParameterStore::clone() const {
  ParameterStore out;
  out.role = role;
  for (const auto& [name, t] : params) {
    Tensor c = Tensor::zeros(t.shape(), t.requires_grad());
    c.values() = t.values();
    out.params.emplace(name, std::move(c));
  }
  return out;
}

void ParameterStore::add_grads_from(const ParameterStore& other) {
  for (auto& [name, t] : params) {
    auto it = other.params.find(name);
    if (it == other.params.end())
      throw DataError("parameter store '" + role + "': merge missing parameter " + name);
    if (!it->second.has_grad()) continue;
    auto& dst = t.grad();
    const auto& src = it->second.node()->grad;
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

size_t ParameterStore::param_count() const {
  size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

bool ParameterStore::all_finite() const {
  for (const auto& [name, t] : params)
    for (double v : t.values())
      if (!std::isfinite(v)) return false;
  return true;
}

uint64_t ParameterStore::content_hash() const {
  std::string buf = role;
  for (const auto& [name, t] : params) {
    buf += '\0' + name + shape_str(t.shape());
    size_t off = buf.size();
    buf.resize(off + t.size() * sizeof(double));
    std::memcpy(buf.data() + off, t.values().data(), t.size() * sizeof(double));
  }
  return fnv1a64(buf);
}

Tensor init_uniform(Rng& rng, std::vector<int> shape, int fan_in) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

LinearWeights make_linear(ParameterStore& store, const std::string& prefix, int in, int out,
                          Rng& rng) {
  LinearWeights lw;
  lw.w = store.add(prefix + ".w", init_uniform(rng, {in, out}, in));
  lw.b = store.add(prefix + ".b", Tensor::zeros({out}, true));
  return lw;
}

LinearWeights linear_weights(ParameterStore& store, const std::string& prefix) {
  return {store.at(prefix + ".w"), store.at(prefix + ".b")};
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() == 1) {
    Tensor row = reshape(x, {1, x.shape()[0]});
    Tensor y = add_rowwise(matmul(row, w), b);
    return reshape(y, {y.cols()});
  }
  return add_rowwise(matmul(x, w), b);
}

Tensor linear(const Tensor& x, const LinearWeights& lw) { return linear(x, lw.w, lw.b); }

LstmWeights make_lstm(ParameterStore& store, const std::string& prefix, int in, int hidden,
                      Rng& rng) {
  LstmWeights w;
  w.wx = store.add(prefix + ".wx", init_uniform(rng, {in, 4 * hidden}, in));
  w.wh = store.add(prefix + ".wh", init_uniform(rng, {hidden, 4 * hidden}, hidden));
  Tensor b = Tensor::zeros({4 * hidden}, true);
  for (int i = hidden; i < 2 * hidden; ++i) b.values()[i] = 1.0;  // forget gate
  w.b = store.add(prefix + ".b", std::move(b));
  return w;
}

LstmWeights lstm_weights(ParameterStore& store, const std::string& prefix) {
  return {store.at(prefix + ".wx"), store.at(prefix + ".wh"), store.at(prefix + ".b")};
}

LstmState lstm_step(const Tensor& x, const Tensor& h, const Tensor& c, const LstmWeights& w) {
  int hidden = w.wh.rows();
  if (h.rank() != 1 || h.shape()[0] != hidden || c.rank() != 1 || c.shape()[0] != hidden)
    throw ShapeError("lstm_step: state shape " + shape_str(h.shape()) + "/" +
                     shape_str(c.shape()) + " vs hidden " + std::to_string(hidden));
  Tensor z = add(linear(x, w.wx, w.b), reshape(matmul(reshape(h, {1, hidden}), w.wh),
                                               {4 * hidden}));
  Tensor gi = sigmoid(slice(z, 0, hidden));
  Tensor gf = sigmoid(slice(z, hidden, hidden));
  Tensor go = sigmoid(slice(z, 2 * hidden, hidden));
  Tensor gc = tanh(slice(z, 3 * hidden, hidden));
  Tensor c_next = add(mul(gf, c), mul(gi, gc));
  Tensor h_next = mul(go, tanh(c_next));
  return {h_next, c_next};
}

void adam_step(ParameterStore& store, AdamState& state) {
  state.step += 1;
  double b1t = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.step));
  double b2t = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, t] : store.params) {
    if (!t.requires_grad()) continue;
    if (!t.has_grad())
      throw DataError("adam_step: parameter " + store.role + "/" + name + " has no gradient");
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != t.size()) m.assign(t.size(), 0.0);
    if (v.size() != t.size()) v.assign(t.size(), 0.0);
    auto& val = t.values();
    auto& g = t.node()->grad;
    for (size_t i = 0; i < val.size(); ++i) {
      m[i] = state.cfg.beta1 * m[i] + (1.0 - state.cfg.beta1) * g[i];
      v[i] = state.cfg.beta2 * v[i] + (1.0 - state.cfg.beta2) * g[i] * g[i];
      double mhat = m[i] / b1t;
      double vhat = v[i] / b2t;
      val[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
      val[i] -= state.cfg.lr * state.cfg.weight_decay * val[i];
    }
    t.zero_grad();
  }
}

const ParameterStore* Checkpoint::find(const std::string& r) const {
  for (const auto& s : stores)
    if (s.role == r) return &s;
  return nullptr;
}

namespace {

constexpr char kMagic[8] = {'S', 'G', 'C', 'L', 'C', 'K', 'P', '1'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64le(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64le(const unsigned char* p) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  for (const auto& s : ckpt.stores)
    if (!s.all_finite())
      throw NumericError("save_checkpoint: non-finite value in store '" + s.role + "'");
  json header;
  header["config_hash"] = ckpt.config_hash;
  header["seed"] = ckpt.seed;
  header["tag"] = ckpt.tag;
  json stores = json::array();
  for (const auto& s : ckpt.stores) {
    json st;
    st["role"] = s.role;
    json plist = json::array();
    for (const auto& [name, t] : s.params)
      plist.push_back(json{{"name", name}, {"shape", t.shape()}});
    st["params"] = std::move(plist);
    stores.push_back(std::move(st));
  }
  header["stores"] = std::move(stores);
  std::string hdr = header.dump();

  std::string buf(kMagic, sizeof(kMagic));
  put_u32(buf, static_cast<uint32_t>(hdr.size()));
  buf += hdr;
  for (const auto& s : ckpt.stores)
    for (const auto& [name, t] : s.params)
      for (double v : t.values()) put_f64le(buf, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 4 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw ParseError("load_checkpoint: " + path + " is not a checkpoint file");
  uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i)
    hlen |= static_cast<uint32_t>(static_cast<unsigned char>(buf[sizeof(kMagic) + i])) << (8 * i);
  size_t off = sizeof(kMagic) + 4;
  if (off + hlen > buf.size()) throw ParseError("load_checkpoint: truncated header in " + path);
  json header;
  try {
    header = json::parse(buf.substr(off, hlen));
  } catch (const json::exception& e) {
    throw ParseError("load_checkpoint: bad header in " + path + ": " + e.what());
  }
  off += hlen;

  Checkpoint ckpt;
  ckpt.config_hash = header.value("config_hash", "");
  ckpt.seed = header.value("seed", uint64_t{0});
  ckpt.tag = header.value("tag", "");
  for (const auto& st : header.at("stores")) {
    ParameterStore store;
    store.role = st.at("role").get<std::string>();
    for (const auto& p : st.at("params")) {
      std::string name = p.at("name").get<std::string>();
      std::vector<int> shape = p.at("shape").get<std::vector<int>>();
      size_t n = 1;
      for (int d : shape) n *= static_cast<size_t>(d);
      if (off + n * 8 > buf.size())
        throw ParseError("load_checkpoint: truncated data in " + path + " at " + name);
      Tensor t = Tensor::zeros(shape, true);
      for (size_t i = 0; i < n; ++i)
        t.values()[i] = get_f64le(reinterpret_cast<const unsigned char*>(buf.data()) + off + 8 * i);
      off += n * 8;
      store.add(name, std::move(t));
    }
    if (!store.all_finite())
      throw DataError("load_checkpoint: non-finite value in store '" + store.role + "'");
    ckpt.stores.push_back(std::move(store));
  }
  return ckpt;
}

}  // namespace sgcl
