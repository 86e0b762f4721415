#include "dsf/frame_fusion.hpp"

#include <stdexcept>

namespace dsf {

FrameFusionParams make_frame_fusion_params(ParamStore& store, const std::string& prefix,
                                           int spatial_dim, int embed_width, Rng& rng) {
  FrameFusionParams p;
  p.embed_width = embed_width;
  p.spatial_dim = spatial_dim;
  double s = 1.0 / std::sqrt(static_cast<double>(spatial_dim));
  p.phi = make_linear(store, prefix + ".phi", spatial_dim, embed_width, InitSpec::normal(0.0, s), rng);
  p.varphi = make_linear(store, prefix + ".varphi", spatial_dim, embed_width, InitSpec::normal(0.0, s), rng);
  // zero output layer makes the whole block start as the identity
  p.theta = make_linear(store, prefix + ".theta", spatial_dim, spatial_dim, InitSpec::zero(), rng);
  return p;
}

ChannelBank split_channels(const FrameFeatureBatch& batch) {
  if (batch.features.rank() != 4) {
    throw std::invalid_argument("split_channels: expected [n x d x H x W] features, got " +
                                shape_str(batch.features.shape()));
  }
  ChannelBank bank;
  bank.n = batch.n();
  bank.d = batch.d();
  bank.h = batch.h();
  bank.w = batch.w();
  bank.test_index = batch.test_index;
  // row-major [n, d, H, W] flattens exactly to frame-major-then-channel rows
  bank.rows = reshape(batch.features, {bank.n * bank.d, bank.h * bank.w});
  bank.origin.reserve(static_cast<size_t>(bank.n) * bank.d);
  for (int i = 0; i < bank.n; ++i)
    for (int c = 0; c < bank.d; ++c) bank.origin.emplace_back(i, c);
  return bank;
}

FrameFeatureBatch merge_channels(const ChannelBank& bank, const Tensor& rows) {
  FrameFeatureBatch out;
  out.features = reshape(rows, {bank.n, bank.d, bank.h, bank.w});
  out.test_index = bank.test_index;
  return out;
}

Tensor channel_affinity(const ChannelBank& bank, const FrameFusionParams& p) {
  if (bank.rows.dim(1) != p.spatial_dim) {
    throw std::invalid_argument("channel_affinity: bank spatial dim " + std::to_string(bank.rows.dim(1)) +
                                " does not match parameter set built for " + std::to_string(p.spatial_dim));
  }
  Tensor a = apply(p.phi, bank.rows);      // [(n*d) x e]
  Tensor b = apply(p.varphi, bank.rows);   // [(n*d) x e]
  return matmul(a, transpose(b));          // a[i][j] = <phi(row_i), varphi(row_j)>
}

FrameSimilarity frame_similarity(const Tensor& affinity) {
  if (affinity.rank() != 2 || affinity.dim(0) != affinity.dim(1)) {
    throw std::invalid_argument("frame_similarity: expected square affinity matrix, got " +
                                shape_str(affinity.shape()));
  }
  return FrameSimilarity{softmax_rows(affinity)};
}

FrameFeatureBatch fuse_frames(const ChannelBank& bank, const FrameSimilarity& sim,
                              const FrameFusionParams& p) {
  int rows = bank.rows.dim(0);
  if (sim.s.dim(0) != rows || sim.s.dim(1) != rows) {
    throw std::invalid_argument("fuse_frames: similarity shape " + shape_str(sim.s.shape()) +
                                " does not match bank rows " + std::to_string(rows));
  }
  Tensor transformed = apply(p.theta, bank.rows);     // theta(row_j), all rows
  Tensor mixed = matmul(sim.s, transformed);          // row i: sum_j s[i][j] theta(row_j)
  Tensor enhanced = add(bank.rows, mixed);
  return merge_channels(bank, enhanced);
}

FrameFeatureBatch frame_fusion_forward(const FrameFeatureBatch& batch, const FrameFusionParams& p) {
  ChannelBank bank = split_channels(batch);
  Tensor affinity = channel_affinity(bank, p);
  FrameSimilarity sim = frame_similarity(affinity);
  return fuse_frames(bank, sim, p);
}

}  // namespace dsf
