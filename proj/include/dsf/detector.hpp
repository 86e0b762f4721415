#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dsf/frame_fusion.hpp"
#include "dsf/image.hpp"
#include "dsf/instance_fusion.hpp"
#include "dsf/params.hpp"

#include "json.hpp"

namespace dsf {

struct BackboneConfig {
  std::vector<int> stage_channels = {16, 24, 32};  // one stride-2 conv block per stage
  int resize_target = 128;  // inputs are resized to resize_target x resize_target

  int stride() const { return 1 << static_cast<int>(stage_channels.size()); }
  int feature_dim() const { return stage_channels.back(); }
};

struct DetectorConfig {
  BackboneConfig backbone;
  int num_classes = 3;  // foreground classes; head adds one background slot
  int embed_width = 64;
  int d_roi = 128;
  int d_g = 66;
  int roi_bins = 7;
  int rpn_channels = 32;
  int k_pre = 256;
  int k_post = 64;
  double rpn_nms_iou = 0.7;
  double head_nms_iou = 0.5;
  double score_thresh = 0.05;
  int max_dets_per_frame = 20;
  bool frame_fusion_on = true;
  bool instance_fusion_on = true;
  std::vector<double> anchor_scales = {16.0, 32.0, 64.0};
  std::vector<double> anchor_aspects = {0.5, 1.0, 2.0};
  uint64_t init_seed = 1;

  int anchors_per_cell() const {
    return static_cast<int>(anchor_scales.size() * anchor_aspects.size());
  }
  nlohmann::json to_json() const;
  static DetectorConfig from_json(const nlohmann::json& j);
};

struct Anchor {
  double cx = 0, cy = 0, w = 0, h = 0;
  BoxF box() const { return BoxF{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}; }
};

struct Detection {
  BoxF box;
  int class_id = 0;  // foreground class
  double confidence = 0.0;
  int frame_index = 0;
};

// standard center/size box parameterization
std::array<double, 4> encode_box_delta(const BoxF& gt, const BoxF& ref);
BoxF decode_box_delta(const std::array<double, 4>& delta, const BoxF& ref);

// greedy NMS; ordering key is (score desc, box coords, index) so the surviving
// set does not depend on input order
std::vector<int> nms(const std::vector<BoxF>& boxes, const std::vector<double>& scores,
                     double iou_thresh);

// anchors in input-pixel coordinates for a fh x fw feature map,
// location-major then (scale x aspect)
std::vector<Anchor> make_anchors(int fh, int fw, int stride, const std::vector<double>& scales,
                                 const std::vector<double>& aspects);

// RoIAlign with max over 4 bilinear sample points per bin; box is given in
// feature-map coordinates; output row is [1 x d*bins*bins]
Tensor roi_align_max(const Tensor& fmap, BoxF box_feat, int bins);

struct RpnOutput {
  std::vector<Tensor> logits;  // per frame [A x 2], background/foreground
  std::vector<Tensor> deltas;  // per frame [A x 4]
  std::vector<Anchor> anchors;
};

struct HeadOutput {
  Tensor cls_logits;  // [m x (C+1)], column 0 is background
  Tensor box_deltas;  // [m x 4C]
};

// Two-stage toy detector wiring both fusion modules. Ablation flags drop the
// corresponding parameter groups entirely.
class Detector {
 public:
  explicit Detector(DetectorConfig cfg);

  const DetectorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // [3 x H x W] image -> [d x h x w] backbone features
  Tensor backbone_forward(const Tensor& image) const;
  // frames [n x 3 x H x W] -> FrameFeatureBatch
  FrameFeatureBatch extract_features(const Tensor& frames, int test_index) const;
  // frame-level fusion, or the identity when disabled
  FrameFeatureBatch enhance_features(const FrameFeatureBatch& batch,
                                     FrameSimilarity* sim_out = nullptr) const;

  RpnOutput rpn_forward(const FrameFeatureBatch& features) const;
  // per frame: top k_pre by objectness, NMS, keep k_post; boxes clipped
  ProposalSet propose(const RpnOutput& rpn, int image_h, int image_w, int k_pre, int k_post) const;

  // RoIAlign-style max pooling to roi_bins^2 then linear+relu projection
  RoIFeatureSet roi_pool(const FrameFeatureBatch& features, const ProposalSet& proposals) const;

  // stacked instance fusion, or the identity when disabled
  RoIFeatureSet fuse_rois(const RoIFeatureSet& q, const ProposalSet& proposals,
                          InstanceSimilarity* sim1 = nullptr, InstanceSimilarity* sim2 = nullptr) const;

  HeadOutput head_forward(const RoIFeatureSet& q) const;

  // decode + per-class NMS on test-frame proposals only
  std::vector<Detection> decode_detections(const HeadOutput& head, const ProposalSet& proposals,
                                           int test_index, int image_h, int image_w) const;

  struct InferenceResult {
    std::vector<Detection> detections;  // original image coordinates
    FrameSimilarity frame_sim;          // populated when want_diagnostics
    InstanceSimilarity sim1, sim2;
    ProposalSet proposals;
  };

  // full pipeline from raw images; boxes returned in original pixel coords
  InferenceResult detect(const std::vector<const ImageU8*>& frames, int test_pos,
                         bool want_diagnostics = false) const;
  // same, starting from cached per-frame backbone features
  InferenceResult detect_from_features(const std::vector<Tensor>& frame_features, int test_pos,
                                       double scale_x, double scale_y,
                                       bool want_diagnostics = false) const;

  // preprocessing: resize to the square training resolution
  Tensor preprocess(const ImageU8& img, double* scale_x = nullptr, double* scale_y = nullptr) const;

  const std::optional<FrameFusionParams>& frame_fusion() const { return frame_fusion_; }
  const std::optional<StackedInstanceFusion>& instance_fusion() const { return instance_fusion_; }

 private:
  DetectorConfig cfg_;
  ParamStore params_;
  std::vector<ConvLayer> backbone_;
  ConvLayer rpn_conv_;
  LinearLayer rpn_cls_, rpn_reg_;
  LinearLayer roi_proj_;
  std::optional<FrameFusionParams> frame_fusion_;
  std::optional<StackedInstanceFusion> instance_fusion_;
  LinearLayer head_cls_, head_reg_;
};

}  // namespace dsf
