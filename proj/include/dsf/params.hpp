#pragma once

#include <map>
#include <string>
#include <vector>

#include "dsf/rng.hpp"
#include "dsf/tensor.hpp"

namespace dsf {

struct InitSpec {
  enum class Kind { Zero, Uniform, Normal };
  Kind kind = Kind::Zero;
  double p0 = 0.0, p1 = 0.0;  // uniform(a, b) / normal(mu, sigma)

  static InitSpec zero() { return {Kind::Zero, 0.0, 0.0}; }
  static InitSpec uniform(double a, double b) { return {Kind::Uniform, a, b}; }
  static InitSpec normal(double mu, double sigma) { return {Kind::Normal, mu, sigma}; }
};

struct Parameter {
  std::string name;
  Tensor value;  // requires_grad = true
  InitSpec init;
};

// Owns every learnable tensor of a model, in registration order, names unique.
class ParamStore {
 public:
  Tensor create(const std::string& name, Shape shape, InitSpec init, Rng& rng);

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  bool has(const std::string& name) const;
  Tensor get(const std::string& name) const;

  void zero_grads();

  // DSF1 checkpoint: magic "DSF1", then per-parameter records
  // (u32 name length, name bytes, u32 rank, u32 dims, float64 payload),
  // all little-endian.
  void save(const std::string& path) const;
  // assigns values into registered parameters; every registered name must be
  // present in the file
  void load(const std::string& path);

 private:
  std::vector<Parameter> params_;
};

// standalone checkpoint readers for structural inspection
std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path);

struct LinearLayer {
  Tensor w;  // [in x out]
  Tensor b;  // [out]
};

LinearLayer make_linear(ParamStore& store, const std::string& prefix, int in_dim, int out_dim,
                        InitSpec w_init, Rng& rng);
Tensor apply(const LinearLayer& l, const Tensor& x);

struct ConvLayer {
  Tensor k;  // [out x in x 3 x 3]
  Tensor b;  // [out]
  int stride = 1;
};

ConvLayer make_conv(ParamStore& store, const std::string& prefix, int in_ch, int out_ch, int stride,
                    InitSpec k_init, Rng& rng);
Tensor apply(const ConvLayer& c, const Tensor& x);

}  // namespace dsf
