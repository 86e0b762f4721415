#pragma once

#include <string>
#include <vector>

#include "dsf/params.hpp"
#include "dsf/tensor.hpp"

namespace dsf {

struct BoxF {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

struct Proposal {
  BoxF box;  // input-image pixels
  int frame_index = 0;
  double score = 0.0;
};

struct ProposalSet {
  std::vector<Proposal> boxes;
  int size() const { return static_cast<int>(boxes.size()); }
};

// pooled-and-projected instance features, index-aligned with a ProposalSet
struct RoIFeatureSet {
  Tensor q;  // [m x d_roi]
  int size() const { return q.defined() ? q.dim(0) : 0; }
};

struct InstanceSimilarity {
  Tensor s;  // [m x m] row-stochastic, softmax_rows(z + r)
  Tensor z;  // appearance affinities
  Tensor r;  // geometric affinities
};

struct InstanceFusionParams {
  LinearLayer xi, zeta;   // d_roi -> embed_width
  LinearLayer gamma;      // d_roi -> d_roi, zero-initialized
  LinearLayer geo_psi;    // d_g -> 1, zero-initialized, no activation
  int d_g = 66;           // must be divisible by 6 (3 components, sin/cos pairs)
  int d_roi = 0;
  int embed_width = 64;
};

// epsilon inside log(|w_k/h_k - w_l/h_l| + eps); bounds the aspect term when
// ratios coincide
inline constexpr double kGeoAspectEps = 1e-3;

InstanceFusionParams make_instance_fusion_params(ParamStore& store, const std::string& prefix,
                                                 int d_roi, int embed_width, int d_g, Rng& rng);

Tensor appearance_affinity(const RoIFeatureSet& q, const InstanceFusionParams& p);

// sinusoidal embedding of the 3-component log-ratio geometry vector
Tensor geometric_embed(double wk, double hk, double wl, double hl, int d_g);

Tensor geometric_affinity(const ProposalSet& b, const InstanceFusionParams& p);

InstanceSimilarity instance_similarity(const Tensor& z, const Tensor& r);

RoIFeatureSet fuse_instances(const RoIFeatureSet& q, const InstanceSimilarity& sim,
                             const InstanceFusionParams& p);

// one full block: affinity -> similarity -> fuse; returns intermediates for
// diagnostics
RoIFeatureSet instance_fusion_block(const RoIFeatureSet& q, const ProposalSet& b,
                                    const InstanceFusionParams& p,
                                    InstanceSimilarity* sim_out = nullptr);

struct StackedInstanceFusion {
  InstanceFusionParams block1, block2;
  LinearLayer mid;  // d_roi -> d_roi projection between the blocks
};

StackedInstanceFusion make_stacked_instance_fusion(ParamStore& store, const std::string& prefix,
                                                   int d_roi, int embed_width, int d_g, Rng& rng);

RoIFeatureSet stacked_instance_fusion(const RoIFeatureSet& q, const ProposalSet& b,
                                      const StackedInstanceFusion& p,
                                      InstanceSimilarity* sim1_out = nullptr,
                                      InstanceSimilarity* sim2_out = nullptr);

}  // namespace dsf
