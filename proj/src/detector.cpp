#include "dsf/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsf/evaluation.hpp"

using nlohmann::json;

namespace dsf {

json DetectorConfig::to_json() const {
  return json{{"stage_channels", backbone.stage_channels},
              {"resize_target", backbone.resize_target},
              {"num_classes", num_classes},
              {"embed_width", embed_width},
              {"d_roi", d_roi},
              {"d_g", d_g},
              {"roi_bins", roi_bins},
              {"rpn_channels", rpn_channels},
              {"k_pre", k_pre},
              {"k_post", k_post},
              {"rpn_nms_iou", rpn_nms_iou},
              {"head_nms_iou", head_nms_iou},
              {"score_thresh", score_thresh},
              {"max_dets_per_frame", max_dets_per_frame},
              {"frame_fusion_on", frame_fusion_on},
              {"instance_fusion_on", instance_fusion_on},
              {"anchor_scales", anchor_scales},
              {"anchor_aspects", anchor_aspects},
              {"init_seed", init_seed}};
}

DetectorConfig DetectorConfig::from_json(const json& j) {
  DetectorConfig c;
  c.backbone.stage_channels = j.at("stage_channels").get<std::vector<int>>();
  c.backbone.resize_target = j.at("resize_target");
  c.num_classes = j.at("num_classes");
  c.embed_width = j.at("embed_width");
  c.d_roi = j.at("d_roi");
  c.d_g = j.at("d_g");
  c.roi_bins = j.at("roi_bins");
  c.rpn_channels = j.at("rpn_channels");
  c.k_pre = j.at("k_pre");
  c.k_post = j.at("k_post");
  c.rpn_nms_iou = j.at("rpn_nms_iou");
  c.head_nms_iou = j.at("head_nms_iou");
  c.score_thresh = j.at("score_thresh");
  c.max_dets_per_frame = j.at("max_dets_per_frame");
  c.frame_fusion_on = j.at("frame_fusion_on");
  c.instance_fusion_on = j.at("instance_fusion_on");
  c.anchor_scales = j.at("anchor_scales").get<std::vector<double>>();
  c.anchor_aspects = j.at("anchor_aspects").get<std::vector<double>>();
  c.init_seed = j.at("init_seed");
  return c;
}

std::array<double, 4> encode_box_delta(const BoxF& gt, const BoxF& ref) {
  double rw = ref.width(), rh = ref.height();
  return {(gt.cx() - ref.cx()) / rw, (gt.cy() - ref.cy()) / rh, std::log(gt.width() / rw),
          std::log(gt.height() / rh)};
}

BoxF decode_box_delta(const std::array<double, 4>& delta, const BoxF& ref) {
  double rw = ref.width(), rh = ref.height();
  // clamp the log-scale terms so early-training deltas cannot explode
  double tw = std::min(delta[2], 4.0), th = std::min(delta[3], 4.0);
  double cx = ref.cx() + delta[0] * rw;
  double cy = ref.cy() + delta[1] * rh;
  double w = rw * std::exp(tw);
  double h = rh * std::exp(th);
  return BoxF{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

std::vector<int> nms(const std::vector<BoxF>& boxes, const std::vector<double>& scores,
                     double iou_thresh) {
  if (boxes.size() != scores.size()) throw std::invalid_argument("nms: box/score count mismatch");
  std::vector<int> order(boxes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    const BoxF &ba = boxes[a], &bb = boxes[b];
    if (ba.x1 != bb.x1) return ba.x1 < bb.x1;
    if (ba.y1 != bb.y1) return ba.y1 < bb.y1;
    if (ba.x2 != bb.x2) return ba.x2 < bb.x2;
    if (ba.y2 != bb.y2) return ba.y2 < bb.y2;
    return a < b;
  });
  std::vector<int> keep;
  std::vector<bool> suppressed(boxes.size(), false);
  for (int idx : order) {
    if (suppressed[idx]) continue;
    keep.push_back(idx);
    for (int other : order) {
      if (suppressed[other] || other == idx) continue;
      if (iou(boxes[idx], boxes[other]) > iou_thresh) suppressed[other] = true;
    }
  }
  return keep;
}

std::vector<Anchor> make_anchors(int fh, int fw, int stride, const std::vector<double>& scales,
                                 const std::vector<double>& aspects) {
  std::vector<Anchor> anchors;
  anchors.reserve(static_cast<size_t>(fh) * fw * scales.size() * aspects.size());
  for (int y = 0; y < fh; ++y) {
    for (int x = 0; x < fw; ++x) {
      double cx = (x + 0.5) * stride, cy = (y + 0.5) * stride;
      for (double s : scales) {
        for (double a : aspects) {
          double w = s * std::sqrt(a), h = s / std::sqrt(a);
          anchors.push_back(Anchor{cx, cy, w, h});
        }
      }
    }
  }
  return anchors;
}

Detector::Detector(DetectorConfig cfg) : cfg_(std::move(cfg)) {
  Rng rng(cfg_.init_seed);
  int in_ch = 3;
  for (size_t i = 0; i < cfg_.backbone.stage_channels.size(); ++i) {
    int out_ch = cfg_.backbone.stage_channels[i];
    double sigma = std::sqrt(2.0 / (in_ch * 9));
    backbone_.push_back(make_conv(params_, "backbone.conv" + std::to_string(i), in_ch, out_ch, 2,
                                  InitSpec::normal(0.0, sigma), rng));
    in_ch = out_ch;
  }
  int d = cfg_.backbone.feature_dim();
  int spatial = (cfg_.backbone.resize_target / cfg_.backbone.stride()) *
                (cfg_.backbone.resize_target / cfg_.backbone.stride());
  if (cfg_.frame_fusion_on) {
    frame_fusion_ = make_frame_fusion_params(params_, "frame_fusion", spatial, cfg_.embed_width, rng);
  }
  double s_rpn = std::sqrt(2.0 / (d * 9));
  rpn_conv_ = make_conv(params_, "rpn.conv", d, cfg_.rpn_channels, 1, InitSpec::normal(0.0, s_rpn), rng);
  int a = cfg_.anchors_per_cell();
  rpn_cls_ = make_linear(params_, "rpn.cls", cfg_.rpn_channels, a * 2, InitSpec::normal(0.0, 0.01), rng);
  rpn_reg_ = make_linear(params_, "rpn.reg", cfg_.rpn_channels, a * 4, InitSpec::normal(0.0, 0.01), rng);
  int pooled = d * cfg_.roi_bins * cfg_.roi_bins;
  roi_proj_ = make_linear(params_, "roi.proj", pooled, cfg_.d_roi,
                          InitSpec::normal(0.0, std::sqrt(2.0 / pooled)), rng);
  if (cfg_.instance_fusion_on) {
    instance_fusion_ =
        make_stacked_instance_fusion(params_, "instance_fusion", cfg_.d_roi, cfg_.embed_width, cfg_.d_g, rng);
  }
  head_cls_ = make_linear(params_, "head.cls", cfg_.d_roi, cfg_.num_classes + 1,
                          InitSpec::normal(0.0, 0.01), rng);
  head_reg_ = make_linear(params_, "head.reg", cfg_.d_roi, cfg_.num_classes * 4,
                          InitSpec::normal(0.0, 0.01), rng);
}

Tensor Detector::backbone_forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("backbone_forward: expected [3 x H x W] image, got " +
                                shape_str(image.shape()));
  }
  int stride = cfg_.backbone.stride();
  if (image.dim(1) % stride != 0 || image.dim(2) % stride != 0) {
    throw std::invalid_argument("backbone_forward: image dims must be divisible by stride " +
                                std::to_string(stride));
  }
  Tensor x = image;
  for (const ConvLayer& layer : backbone_) x = relu(apply(layer, x));
  return x;
}

FrameFeatureBatch Detector::extract_features(const Tensor& frames, int test_index) const {
  if (frames.rank() != 4 || frames.dim(1) != 3) {
    throw std::invalid_argument("extract_features: expected [n x 3 x H x W], got " +
                                shape_str(frames.shape()));
  }
  int n = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
  std::vector<Tensor> feats;
  feats.reserve(n);
  for (int i = 0; i < n; ++i) {
    Tensor img = reshape(slice_rows(frames, i, i + 1), {3, h, w});
    Tensor f = backbone_forward(img);
    feats.push_back(reshape(f, {1, f.dim(0), f.dim(1), f.dim(2)}));
  }
  FrameFeatureBatch batch;
  batch.features = concat_rows(feats);
  batch.test_index = test_index;
  return batch;
}

FrameFeatureBatch Detector::enhance_features(const FrameFeatureBatch& batch,
                                             FrameSimilarity* sim_out) const {
  if (!frame_fusion_) {
    if (sim_out) *sim_out = FrameSimilarity{};
    return batch;
  }
  ChannelBank bank = split_channels(batch);
  Tensor affinity = channel_affinity(bank, *frame_fusion_);
  FrameSimilarity sim = frame_similarity(affinity);
  if (sim_out) *sim_out = sim;
  return fuse_frames(bank, sim, *frame_fusion_);
}

RpnOutput Detector::rpn_forward(const FrameFeatureBatch& features) const {
  int n = features.n(), d = features.d(), fh = features.h(), fw = features.w();
  RpnOutput out;
  out.anchors = make_anchors(fh, fw, cfg_.backbone.stride(), cfg_.anchor_scales, cfg_.anchor_aspects);
  int a = cfg_.anchors_per_cell();
  for (int i = 0; i < n; ++i) {
    Tensor fmap = reshape(slice_rows(features.features, i, i + 1), {d, fh, fw});
    Tensor hid = relu(apply(rpn_conv_, fmap));
    // 1x1 conv as a linear over per-location channel vectors
    Tensor rows = transpose(reshape(hid, {cfg_.rpn_channels, fh * fw}));  // [hw x ch]
    Tensor logits = reshape(apply(rpn_cls_, rows), {fh * fw * a, 2});
    Tensor deltas = reshape(apply(rpn_reg_, rows), {fh * fw * a, 4});
    out.logits.push_back(logits);
    out.deltas.push_back(deltas);
  }
  return out;
}

namespace {

BoxF clip_box(BoxF b, double w, double h) {
  b.x1 = std::clamp(b.x1, 0.0, w);
  b.y1 = std::clamp(b.y1, 0.0, h);
  b.x2 = std::clamp(b.x2, 0.0, w);
  b.y2 = std::clamp(b.y2, 0.0, h);
  return b;
}

}  // namespace

ProposalSet Detector::propose(const RpnOutput& rpn, int image_h, int image_w, int k_pre,
                              int k_post) const {
  ProposalSet result;
  int num_anchors = static_cast<int>(rpn.anchors.size());
  for (size_t f = 0; f < rpn.logits.size(); ++f) {
    const std::vector<double>& logit = rpn.logits[f].data();
    const std::vector<double>& delta = rpn.deltas[f].data();
    // objectness via 2-way softmax on raw values (proposal path carries no tape)
    std::vector<double> scores(num_anchors);
    std::vector<BoxF> boxes(num_anchors);
    for (int i = 0; i < num_anchors; ++i) {
      double l0 = logit[2 * i], l1 = logit[2 * i + 1];
      double mx = std::max(l0, l1);
      double e0 = std::exp(l0 - mx), e1 = std::exp(l1 - mx);
      scores[i] = e1 / (e0 + e1);
      std::array<double, 4> dlt = {delta[4 * i], delta[4 * i + 1], delta[4 * i + 2], delta[4 * i + 3]};
      BoxF b = clip_box(decode_box_delta(dlt, rpn.anchors[i].box()), image_w, image_h);
      if (b.width() < 1e-3) b.x2 = b.x1 + 1e-3;
      if (b.height() < 1e-3) b.y2 = b.y1 + 1e-3;
      boxes[i] = b;
    }
    std::vector<int> order(num_anchors);
    for (int i = 0; i < num_anchors; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
      if (scores[x] != scores[y]) return scores[x] > scores[y];
      return x < y;
    });
    if (static_cast<int>(order.size()) > k_pre) order.resize(k_pre);

    std::vector<BoxF> top_boxes;
    std::vector<double> top_scores;
    for (int idx : order) {
      top_boxes.push_back(boxes[idx]);
      top_scores.push_back(scores[idx]);
    }
    std::vector<int> keep = nms(top_boxes, top_scores, cfg_.rpn_nms_iou);
    if (static_cast<int>(keep.size()) > k_post) keep.resize(k_post);
    for (int idx : keep) {
      result.boxes.push_back(Proposal{top_boxes[idx], static_cast<int>(f), top_scores[idx]});
    }
  }
  return result;
}

// RoIAlign with max over 4 bilinear sample points per bin; the backward pass
// recomputes the argmax from the saved geometry
Tensor roi_align_max(const Tensor& fmap, BoxF box_feat, int bins) {
  int d = fmap.dim(0), fh = fmap.dim(1), fw = fmap.dim(2);
  double bw = (box_feat.x2 - box_feat.x1) / bins;
  double bh = (box_feat.y2 - box_feat.y1) / bins;

  auto bilinear = [fh, fw](const double* plane, double x, double y, int corners[4], double weights[4]) {
    x = std::clamp(x, 0.0, fw - 1.0);
    y = std::clamp(y, 0.0, fh - 1.0);
    int x0 = std::min(static_cast<int>(x), fw - 2 >= 0 ? fw - 2 : 0);
    int y0 = std::min(static_cast<int>(y), fh - 2 >= 0 ? fh - 2 : 0);
    if (fw == 1) x0 = 0;
    if (fh == 1) y0 = 0;
    int x1 = std::min(x0 + 1, fw - 1), y1 = std::min(y0 + 1, fh - 1);
    double fx = x - x0, fy = y - y0;
    corners[0] = y0 * fw + x0;
    corners[1] = y0 * fw + x1;
    corners[2] = y1 * fw + x0;
    corners[3] = y1 * fw + x1;
    weights[0] = (1 - fy) * (1 - fx);
    weights[1] = (1 - fy) * fx;
    weights[2] = fy * (1 - fx);
    weights[3] = fy * fx;
    return plane[corners[0]] * weights[0] + plane[corners[1]] * weights[1] + plane[corners[2]] * weights[2] +
           plane[corners[3]] * weights[3];
  };

  const double offsets[4][2] = {{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}};
  std::vector<double> out(static_cast<size_t>(d) * bins * bins);
  for (int c = 0; c < d; ++c) {
    const double* plane = fmap.data().data() + static_cast<size_t>(c) * fh * fw;
    for (int by = 0; by < bins; ++by) {
      for (int bx = 0; bx < bins; ++bx) {
        double best = -1e300;
        for (const auto& off : offsets) {
          int corners[4];
          double weights[4];
          double v = bilinear(plane, box_feat.x1 + (bx + off[0]) * bw, box_feat.y1 + (by + off[1]) * bh,
                              corners, weights);
          best = std::max(best, v);
        }
        out[(static_cast<size_t>(c) * bins + by) * bins + bx] = best;
      }
    }
  }

  auto fi = fmap.impl();
  return Tensor::make_op(
      {1, d * bins * bins}, std::move(out), {fmap},
      [fi, box_feat, bins, d, fh, fw, bilinear, offsets](detail::TensorImpl& self) {
        if (!fi->requires_grad) return;
        fi->ensure_grad();
        double bw2 = (box_feat.x2 - box_feat.x1) / bins;
        double bh2 = (box_feat.y2 - box_feat.y1) / bins;
        for (int c = 0; c < d; ++c) {
          const double* plane = fi->data.data() + static_cast<size_t>(c) * fh * fw;
          double* gplane = fi->grad.data() + static_cast<size_t>(c) * fh * fw;
          for (int by = 0; by < bins; ++by) {
            for (int bx = 0; bx < bins; ++bx) {
              double g = self.grad[(static_cast<size_t>(c) * bins + by) * bins + bx];
              if (g == 0.0) continue;
              double best = -1e300;
              int best_corners[4] = {0, 0, 0, 0};
              double best_weights[4] = {0, 0, 0, 0};
              for (const auto& off : offsets) {
                int corners[4];
                double weights[4];
                double v = bilinear(plane, box_feat.x1 + (bx + off[0]) * bw2,
                                    box_feat.y1 + (by + off[1]) * bh2, corners, weights);
                if (v > best) {
                  best = v;
                  std::copy(corners, corners + 4, best_corners);
                  std::copy(weights, weights + 4, best_weights);
                }
              }
              for (int t = 0; t < 4; ++t) gplane[best_corners[t]] += g * best_weights[t];
            }
          }
        }
      },
      "roi_align_max");
}

RoIFeatureSet Detector::roi_pool(const FrameFeatureBatch& features, const ProposalSet& proposals) const {
  if (proposals.size() == 0) throw std::invalid_argument("roi_pool: empty proposal set");
  int n = features.n(), d = features.d(), fh = features.h(), fw = features.w();
  double stride = cfg_.backbone.stride();
  std::vector<Tensor> frame_maps;
  frame_maps.reserve(n);
  for (int i = 0; i < n; ++i) {
    frame_maps.push_back(reshape(slice_rows(features.features, i, i + 1), {d, fh, fw}));
  }
  std::vector<Tensor> pooled_rows;
  pooled_rows.reserve(proposals.size());
  for (const Proposal& p : proposals.boxes) {
    if (p.frame_index < 0 || p.frame_index >= n) {
      throw std::invalid_argument("roi_pool: proposal frame index out of range");
    }
    // input pixels -> feature coordinates, clamped to a 1-pixel minimum box
    BoxF bf{p.box.x1 / stride - 0.5, p.box.y1 / stride - 0.5, p.box.x2 / stride - 0.5,
            p.box.y2 / stride - 0.5};
    double min_side = 1.0 / stride;
    if (bf.x2 - bf.x1 < min_side) bf.x2 = bf.x1 + min_side;
    if (bf.y2 - bf.y1 < min_side) bf.y2 = bf.y1 + min_side;
    pooled_rows.push_back(roi_align_max(frame_maps[p.frame_index], bf, cfg_.roi_bins));
  }
  Tensor pooled = concat_rows(pooled_rows);  // [m x d*bins^2]
  return RoIFeatureSet{relu(apply(roi_proj_, pooled))};
}

RoIFeatureSet Detector::fuse_rois(const RoIFeatureSet& q, const ProposalSet& proposals,
                                  InstanceSimilarity* sim1, InstanceSimilarity* sim2) const {
  if (!instance_fusion_) return q;
  return stacked_instance_fusion(q, proposals, *instance_fusion_, sim1, sim2);
}

HeadOutput Detector::head_forward(const RoIFeatureSet& q) const {
  return HeadOutput{apply(head_cls_, q.q), apply(head_reg_, q.q)};
}

std::vector<Detection> Detector::decode_detections(const HeadOutput& head, const ProposalSet& proposals,
                                                   int test_index, int image_h, int image_w) const {
  int m = proposals.size();
  int nc = cfg_.num_classes;
  const std::vector<double>& logits = head.cls_logits.data();
  const std::vector<double>& deltas = head.box_deltas.data();

  struct Candidate {
    BoxF box;
    double score;
    int class_id;
  };
  std::vector<Candidate> cands;
  for (int i = 0; i < m; ++i) {
    if (proposals.boxes[i].frame_index != test_index) continue;
    const double* row = logits.data() + static_cast<size_t>(i) * (nc + 1);
    double mx = row[0];
    for (int c = 1; c <= nc; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c <= nc; ++c) denom += std::exp(row[c] - mx);
    for (int c = 1; c <= nc; ++c) {
      double score = std::exp(row[c] - mx) / denom;
      if (score < cfg_.score_thresh) continue;
      const double* drow = deltas.data() + static_cast<size_t>(i) * (nc * 4) + (c - 1) * 4;
      std::array<double, 4> dlt = {drow[0], drow[1], drow[2], drow[3]};
      BoxF b = clip_box(decode_box_delta(dlt, proposals.boxes[i].box), image_w, image_h);
      if (b.width() <= 0 || b.height() <= 0) continue;
      cands.push_back(Candidate{b, score, c - 1});
    }
  }

  std::vector<Detection> dets;
  for (int c = 0; c < nc; ++c) {
    std::vector<BoxF> boxes;
    std::vector<double> scores;
    for (const Candidate& cd : cands) {
      if (cd.class_id != c) continue;
      boxes.push_back(cd.box);
      scores.push_back(cd.score);
    }
    if (boxes.empty()) continue;
    for (int idx : nms(boxes, scores, cfg_.head_nms_iou)) {
      dets.push_back(Detection{boxes[idx], c, scores[idx], test_index});
    }
  }
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    return a.box.x1 < b.box.x1;
  });
  if (static_cast<int>(dets.size()) > cfg_.max_dets_per_frame) dets.resize(cfg_.max_dets_per_frame);
  return dets;
}

Tensor Detector::preprocess(const ImageU8& img, double* scale_x, double* scale_y) const {
  int target = cfg_.backbone.resize_target;
  if (scale_x) *scale_x = static_cast<double>(target) / img.width;
  if (scale_y) *scale_y = static_cast<double>(target) / img.height;
  if (img.width == target && img.height == target) return image_to_tensor(img);
  return image_to_tensor(resize_bilinear(img, target, target));
}

Detector::InferenceResult Detector::detect(const std::vector<const ImageU8*>& frames, int test_pos,
                                           bool want_diagnostics) const {
  if (frames.empty()) throw std::invalid_argument("detect: no frames");
  double sx = 1.0, sy = 1.0;
  std::vector<Tensor> feats;
  feats.reserve(frames.size());
  for (const ImageU8* img : frames) {
    feats.push_back(backbone_forward(preprocess(*img, &sx, &sy)));
  }
  return detect_from_features(feats, test_pos, sx, sy, want_diagnostics);
}

Detector::InferenceResult Detector::detect_from_features(const std::vector<Tensor>& frame_features,
                                                         int test_pos, double scale_x, double scale_y,
                                                         bool want_diagnostics) const {
  if (frame_features.empty()) throw std::invalid_argument("detect_from_features: no features");
  if (test_pos < 0 || test_pos >= static_cast<int>(frame_features.size())) {
    throw std::invalid_argument("detect_from_features: test position out of range");
  }
  int target = cfg_.backbone.resize_target;
  std::vector<Tensor> rows;
  rows.reserve(frame_features.size());
  for (const Tensor& f : frame_features) {
    rows.push_back(reshape(f, {1, f.dim(0), f.dim(1), f.dim(2)}));
  }
  FrameFeatureBatch batch;
  batch.features = concat_rows(rows);
  batch.test_index = test_pos;

  InferenceResult result;
  FrameFeatureBatch enhanced = enhance_features(batch, want_diagnostics ? &result.frame_sim : nullptr);
  RpnOutput rpn = rpn_forward(enhanced);
  ProposalSet proposals = propose(rpn, target, target, cfg_.k_pre, cfg_.k_post);
  RoIFeatureSet q = roi_pool(enhanced, proposals);
  RoIFeatureSet fused = fuse_rois(q, proposals, want_diagnostics ? &result.sim1 : nullptr,
                                  want_diagnostics ? &result.sim2 : nullptr);
  HeadOutput head = head_forward(fused);
  result.detections = decode_detections(head, proposals, test_pos, target, target);
  for (Detection& det : result.detections) {
    det.box.x1 /= scale_x;
    det.box.x2 /= scale_x;
    det.box.y1 /= scale_y;
    det.box.y2 /= scale_y;
  }
  result.proposals = std::move(proposals);
  return result;
}

}  // namespace dsf
