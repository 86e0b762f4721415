#include "dsf/instance_fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace dsf {

InstanceFusionParams make_instance_fusion_params(ParamStore& store, const std::string& prefix,
                                                 int d_roi, int embed_width, int d_g, Rng& rng) {
  if (d_g % 6 != 0) throw std::invalid_argument("d_g must be divisible by 6, got " + std::to_string(d_g));
  InstanceFusionParams p;
  p.d_g = d_g;
  p.d_roi = d_roi;
  p.embed_width = embed_width;
  double s = 1.0 / std::sqrt(static_cast<double>(d_roi));
  p.xi = make_linear(store, prefix + ".xi", d_roi, embed_width, InitSpec::normal(0.0, s), rng);
  p.zeta = make_linear(store, prefix + ".zeta", d_roi, embed_width, InitSpec::normal(0.0, s), rng);
  p.gamma = make_linear(store, prefix + ".gamma", d_roi, d_roi, InitSpec::zero(), rng);
  p.geo_psi = make_linear(store, prefix + ".geo_psi", d_g, 1, InitSpec::zero(), rng);
  return p;
}

Tensor appearance_affinity(const RoIFeatureSet& q, const InstanceFusionParams& p) {
  if (q.size() < 1) throw std::invalid_argument("appearance_affinity: empty feature set");
  Tensor a = apply(p.xi, q.q);    // [m x e]
  Tensor b = apply(p.zeta, q.q);  // [m x e]
  return matmul(a, transpose(b));
}

namespace {

void embed_component(double x, int dims, double* out) {
  // dims sin/cos interleaved pairs, wavelength 1000^(2j/dims)
  int pairs = dims / 2;
  for (int j = 0; j < pairs; ++j) {
    double wavelength = std::pow(1000.0, 2.0 * j / static_cast<double>(dims));
    out[2 * j] = std::sin(x / wavelength);
    out[2 * j + 1] = std::cos(x / wavelength);
  }
}

void geometry_vector(double wk, double hk, double wl, double hl, double g[3]) {
  if (wk <= 0 || hk <= 0 || wl <= 0 || hl <= 0) {
    throw std::domain_error("geometric_embed: box dimensions must be positive");
  }
  g[0] = std::log(wk / wl);
  g[1] = std::log(hk / hl);
  g[2] = std::log(std::fabs(wk / hk - wl / hl) + kGeoAspectEps);
}

void embed_pair(double wk, double hk, double wl, double hl, int d_g, double* out) {
  double g[3];
  geometry_vector(wk, hk, wl, hl, g);
  int per = d_g / 3;
  for (int c = 0; c < 3; ++c) embed_component(g[c], per, out + c * per);
}

}  // namespace

Tensor geometric_embed(double wk, double hk, double wl, double hl, int d_g) {
  if (d_g % 6 != 0) throw std::invalid_argument("geometric_embed: d_g must be divisible by 6");
  std::vector<double> out(static_cast<size_t>(d_g));
  embed_pair(wk, hk, wl, hl, d_g, out.data());
  return Tensor::from_data({d_g}, std::move(out));
}

Tensor geometric_affinity(const ProposalSet& b, const InstanceFusionParams& p) {
  int m = b.size();
  if (m < 1) throw std::invalid_argument("geometric_affinity: empty proposal set");
  // scale-only geometry: widths/heights, never x/y positions
  std::vector<double> stacked(static_cast<size_t>(m) * m * p.d_g);
  for (int k = 0; k < m; ++k) {
    const BoxF& bk = b.boxes[k].box;
    for (int l = 0; l < m; ++l) {
      const BoxF& bl = b.boxes[l].box;
      embed_pair(bk.width(), bk.height(), bl.width(), bl.height(), p.d_g,
                 stacked.data() + (static_cast<size_t>(k) * m + l) * p.d_g);
    }
  }
  Tensor embeddings = Tensor::from_data({m * m, p.d_g}, std::move(stacked));
  Tensor r = apply(p.geo_psi, embeddings);  // [m*m x 1], plain linear, no clamp
  return reshape(r, {m, m});
}

InstanceSimilarity instance_similarity(const Tensor& z, const Tensor& r) {
  if (z.shape() != r.shape()) {
    throw std::invalid_argument("instance_similarity: shape mismatch " + shape_str(z.shape()) + " vs " +
                                shape_str(r.shape()));
  }
  InstanceSimilarity sim;
  sim.z = z;
  sim.r = r;
  sim.s = softmax_rows(add(z, r));
  return sim;
}

RoIFeatureSet fuse_instances(const RoIFeatureSet& q, const InstanceSimilarity& sim,
                             const InstanceFusionParams& p) {
  int m = q.size();
  if (sim.s.dim(0) != m || sim.s.dim(1) != m) {
    throw std::invalid_argument("fuse_instances: similarity shape " + shape_str(sim.s.shape()) +
                                " does not align with " + std::to_string(m) + " features");
  }
  Tensor transformed = apply(p.gamma, q.q);
  Tensor mixed = matmul(sim.s, transformed);
  return RoIFeatureSet{add(q.q, mixed)};
}

RoIFeatureSet instance_fusion_block(const RoIFeatureSet& q, const ProposalSet& b,
                                    const InstanceFusionParams& p, InstanceSimilarity* sim_out) {
  if (q.size() != b.size()) {
    throw std::invalid_argument("instance_fusion_block: " + std::to_string(q.size()) + " features vs " +
                                std::to_string(b.size()) + " proposals");
  }
  Tensor z = appearance_affinity(q, p);
  Tensor r = geometric_affinity(b, p);
  InstanceSimilarity sim = instance_similarity(z, r);
  RoIFeatureSet out = fuse_instances(q, sim, p);
  if (sim_out) *sim_out = sim;
  return out;
}

StackedInstanceFusion make_stacked_instance_fusion(ParamStore& store, const std::string& prefix,
                                                   int d_roi, int embed_width, int d_g, Rng& rng) {
  StackedInstanceFusion s;
  s.block1 = make_instance_fusion_params(store, prefix + ".block1", d_roi, embed_width, d_g, rng);
  s.block2 = make_instance_fusion_params(store, prefix + ".block2", d_roi, embed_width, d_g, rng);
  double sc = std::sqrt(2.0 / static_cast<double>(d_roi));
  s.mid = make_linear(store, prefix + ".mid", d_roi, d_roi, InitSpec::normal(0.0, sc), rng);
  return s;
}

RoIFeatureSet stacked_instance_fusion(const RoIFeatureSet& q, const ProposalSet& b,
                                      const StackedInstanceFusion& p, InstanceSimilarity* sim1_out,
                                      InstanceSimilarity* sim2_out) {
  RoIFeatureSet h1 = instance_fusion_block(q, b, p.block1, sim1_out);
  RoIFeatureSet h2{relu(apply(p.mid, h1.q))};
  return instance_fusion_block(h2, b, p.block2, sim2_out);
}

}  // namespace dsf
