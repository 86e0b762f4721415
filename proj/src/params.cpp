#include "dsf/params.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dsf {

namespace {

void init_values(std::vector<double>& v, const InitSpec& init, Rng& rng) {
  switch (init.kind) {
    case InitSpec::Kind::Zero:
      std::fill(v.begin(), v.end(), 0.0);
      break;
    case InitSpec::Kind::Uniform:
      for (double& x : v) x = rng.uniform(init.p0, init.p1);
      break;
    case InitSpec::Kind::Normal:
      for (double& x : v) x = rng.normal(init.p0, init.p1);
      break;
  }
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double d) {
  uint64_t v = std::bit_cast<uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

bool get_u32(std::istream& is, uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
      (static_cast<uint32_t>(b[3]) << 24);
  return true;
}

bool get_f64(std::istream& is, double& d) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  d = std::bit_cast<double>(v);
  return true;
}

}  // namespace

Tensor ParamStore::create(const std::string& name, Shape shape, InitSpec init, Rng& rng) {
  if (has(name)) throw std::invalid_argument("parameter name already registered: " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  init_values(t.mutable_data(), init, rng);
  params_.push_back(Parameter{name, t, init});
  return t;
}

bool ParamStore::has(const std::string& name) const {
  for (const Parameter& p : params_)
    if (p.name == name) return true;
  return false;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const Parameter& p : params_)
    if (p.name == name) return p.value;
  throw std::invalid_argument("no such parameter: " + name);
}

void ParamStore::zero_grads() {
  for (Parameter& p : params_) p.value.zero_grad();
}

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write("DSF1", 4);
  for (const Parameter& p : params_) {
    put_u32(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Shape& s = p.value.shape();
    put_u32(os, static_cast<uint32_t>(s.size()));
    for (int d : s) put_u32(os, static_cast<uint32_t>(d));
    for (double v : p.value.data()) put_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DSF1", 4) != 0) {
    throw std::runtime_error("bad checkpoint magic in " + path);
  }
  std::vector<std::pair<std::string, Tensor>> out;
  uint32_t name_len;
  while (get_u32(is, name_len)) {
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw std::runtime_error("truncated checkpoint: " + path);
    uint32_t rank;
    if (!get_u32(is, rank)) throw std::runtime_error("truncated checkpoint: " + path);
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) {
      uint32_t d;
      if (!get_u32(is, d)) throw std::runtime_error("truncated checkpoint: " + path);
      shape[i] = static_cast<int>(d);
    }
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (double& v : data)
      if (!get_f64(is, v)) throw std::runtime_error("truncated checkpoint: " + path);
    out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  return out;
}

void ParamStore::load(const std::string& path) {
  auto records = read_checkpoint(path);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : records) by_name.emplace(name, t);
  for (Parameter& p : params_) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint " + path + " is missing parameter " + p.name);
    if (it->second.shape() != p.value.shape()) {
      throw std::runtime_error("checkpoint shape mismatch for " + p.name + ": file has " +
                               shape_str(it->second.shape()) + ", model expects " + shape_str(p.value.shape()));
    }
    p.value.mutable_data() = it->second.data();
  }
}

LinearLayer make_linear(ParamStore& store, const std::string& prefix, int in_dim, int out_dim,
                        InitSpec w_init, Rng& rng) {
  LinearLayer l;
  l.w = store.create(prefix + ".w", {in_dim, out_dim}, w_init, rng);
  l.b = store.create(prefix + ".b", {out_dim}, InitSpec::zero(), rng);
  return l;
}

Tensor apply(const LinearLayer& l, const Tensor& x) { return linear(x, l.w, l.b); }

ConvLayer make_conv(ParamStore& store, const std::string& prefix, int in_ch, int out_ch, int stride,
                    InitSpec k_init, Rng& rng) {
  ConvLayer c;
  c.k = store.create(prefix + ".k", {out_ch, in_ch, 3, 3}, k_init, rng);
  c.b = store.create(prefix + ".b", {out_ch}, InitSpec::zero(), rng);
  c.stride = stride;
  return c;
}

Tensor apply(const ConvLayer& c, const Tensor& x) { return bias_channels(conv2d(x, c.k, c.stride), c.b); }

}  // namespace dsf
