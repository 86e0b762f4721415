#pragma once

#include <utility>
#include <vector>

#include "dsf/params.hpp"
#include "dsf/tensor.hpp"

namespace dsf {

// n frame-level feature maps (test frame included), d channels each
struct FrameFeatureBatch {
  Tensor features;  // [n x d x H x W]
  int test_index = 0;

  int n() const { return features.dim(0); }
  int d() const { return features.dim(1); }
  int h() const { return features.dim(2); }
  int w() const { return features.dim(3); }
};

// the n*d channel-wise features, one flattened channel map per row,
// frame-major then channel
struct ChannelBank {
  Tensor rows;                                // [(n*d) x (H*W)]
  std::vector<std::pair<int, int>> origin;    // per row: (frame, channel)
  int n = 0, d = 0, h = 0, w = 0;
  int test_index = 0;
};

// row-stochastic appearance similarity over all n*d channel features
struct FrameSimilarity {
  Tensor s;  // [(n*d) x (n*d)]
};

struct FrameFusionParams {
  LinearLayer phi, varphi;  // H*W -> embed_width
  LinearLayer theta;        // H*W -> H*W, zero-initialized (identity residual)
  int embed_width = 64;
  int spatial_dim = 0;  // H*W the layers were built for
};

FrameFusionParams make_frame_fusion_params(ParamStore& store, const std::string& prefix,
                                           int spatial_dim, int embed_width, Rng& rng);

ChannelBank split_channels(const FrameFeatureBatch& batch);
FrameFeatureBatch merge_channels(const ChannelBank& bank, const Tensor& rows);

Tensor channel_affinity(const ChannelBank& bank, const FrameFusionParams& p);
FrameSimilarity frame_similarity(const Tensor& affinity);
FrameFeatureBatch fuse_frames(const ChannelBank& bank, const FrameSimilarity& sim,
                              const FrameFusionParams& p);

// split -> affinity -> similarity -> fuse
FrameFeatureBatch frame_fusion_forward(const FrameFeatureBatch& batch, const FrameFusionParams& p);

}  // namespace dsf
