#include "dsf/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace dsf {

json TrainConfig::to_json() const {
  return json{{"total_iters", total_iters},
              {"lr_drop_iters", lr_drop_iters},
              {"base_lr", base_lr},
              {"momentum", momentum},
              {"weight_decay", weight_decay},
              {"w_rpn_cls", w_rpn_cls},
              {"w_rpn_reg", w_rpn_reg},
              {"w_head_cls", w_head_cls},
              {"w_head_reg", w_head_reg},
              {"seed", seed},
              {"log_every", log_every},
              {"rpn_pos_iou", rpn_pos_iou},
              {"rpn_neg_iou", rpn_neg_iou},
              {"head_pos_iou", head_pos_iou},
              {"rpn_batch", rpn_batch},
              {"rpn_pos_fraction", rpn_pos_fraction},
              {"head_batch", head_batch},
              {"head_pos_fraction", head_pos_fraction},
              {"append_gt_proposals", append_gt_proposals}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.total_iters = j.at("total_iters");
  c.lr_drop_iters = j.at("lr_drop_iters").get<std::vector<int>>();
  c.base_lr = j.at("base_lr");
  c.momentum = j.at("momentum");
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.w_rpn_cls = j.at("w_rpn_cls");
  c.w_rpn_reg = j.at("w_rpn_reg");
  c.w_head_cls = j.at("w_head_cls");
  c.w_head_reg = j.at("w_head_reg");
  c.seed = j.at("seed");
  c.log_every = j.at("log_every");
  c.rpn_pos_iou = j.value("rpn_pos_iou", c.rpn_pos_iou);
  c.rpn_neg_iou = j.value("rpn_neg_iou", c.rpn_neg_iou);
  c.head_pos_iou = j.value("head_pos_iou", c.head_pos_iou);
  c.rpn_batch = j.value("rpn_batch", c.rpn_batch);
  c.rpn_pos_fraction = j.value("rpn_pos_fraction", c.rpn_pos_fraction);
  c.head_batch = j.value("head_batch", c.head_batch);
  c.head_pos_fraction = j.value("head_pos_fraction", c.head_pos_fraction);
  c.append_gt_proposals = j.value("append_gt_proposals", c.append_gt_proposals);
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  for (size_t i = 0; i < lr_drop_iters.size(); ++i) {
    if (lr_drop_iters[i] >= total_iters) {
      throw std::invalid_argument("lr_drop_iters must be < total_iters");
    }
    if (i > 0 && lr_drop_iters[i] <= lr_drop_iters[i - 1]) {
      throw std::invalid_argument("lr_drop_iters must be strictly increasing");
    }
  }
}

double lr_at(const TrainConfig& cfg, int iter) {
  double lr = cfg.base_lr;
  for (int drop : cfg.lr_drop_iters) {
    if (iter >= drop) lr *= 0.1;
  }
  return lr;
}

namespace {

struct FrameGts {
  std::vector<BoxF> boxes;  // resized coordinates
  std::vector<int> classes;
};

FrameGts scaled_gts(const VideoSequence& seq, int frame, double sx, double sy) {
  FrameGts out;
  for (const FrameAnnotation& a : seq.annotations[frame]) {
    out.boxes.push_back(BoxF{a.box.x1 * sx, a.box.y1 * sy, a.box.x2 * sx, a.box.y2 * sy});
    out.classes.push_back(a.class_id);
  }
  return out;
}

// RPN labels: 1 positive, 0 negative, -1 ignore
std::vector<int> rpn_assign(const std::vector<Anchor>& anchors, const FrameGts& gts,
                            const TrainConfig& cfg) {
  int num = static_cast<int>(anchors.size());
  std::vector<int> labels(num, -1);
  if (gts.boxes.empty()) {
    std::fill(labels.begin(), labels.end(), 0);
    return labels;
  }
  std::vector<double> best_iou(num, 0.0);
  std::vector<double> gt_best(gts.boxes.size(), 0.0);
  std::vector<std::vector<double>> ious(gts.boxes.size(), std::vector<double>(num));
  for (size_t g = 0; g < gts.boxes.size(); ++g) {
    for (int i = 0; i < num; ++i) {
      double v = iou(anchors[i].box(), gts.boxes[g]);
      ious[g][i] = v;
      best_iou[i] = std::max(best_iou[i], v);
      gt_best[g] = std::max(gt_best[g], v);
    }
  }
  for (int i = 0; i < num; ++i) {
    if (best_iou[i] >= cfg.rpn_pos_iou) labels[i] = 1;
    else if (best_iou[i] <= cfg.rpn_neg_iou) labels[i] = 0;
  }
  // the best anchor for each gt is positive even below the threshold
  for (size_t g = 0; g < gts.boxes.size(); ++g) {
    if (gt_best[g] <= 0.0) continue;
    for (int i = 0; i < num; ++i) {
      if (ious[g][i] == gt_best[g]) labels[i] = 1;
    }
  }
  return labels;
}

int argmax_gt(const std::vector<BoxF>& gt_boxes, const BoxF& box, double* best_iou) {
  int best = -1;
  double bv = 0.0;
  for (size_t g = 0; g < gt_boxes.size(); ++g) {
    double v = iou(box, gt_boxes[g]);
    if (v > bv) {
      bv = v;
      best = static_cast<int>(g);
    }
  }
  if (best_iou) *best_iou = bv;
  return best;
}

// deterministic subsample keeping at most `want` entries
void subsample(std::vector<int>& idx, int want, Rng& rng) {
  if (static_cast<int>(idx.size()) <= want) return;
  rng.shuffle(idx);
  idx.resize(want);
  std::sort(idx.begin(), idx.end());
}

}  // namespace

LossResult training_loss(const Detector& det, const VideoSequence& seq, const TrainingSample& sample,
                         const TrainConfig& cfg, uint64_t sample_seed, const TrainingBatch* frozen,
                         TrainingBatch* decisions_out) {
  Rng rng(Rng::derive(sample_seed, 0x7261776eULL));
  const DetectorConfig& dcfg = det.config();
  int target = dcfg.backbone.resize_target;
  int nc = dcfg.num_classes;

  std::vector<int> frame_ids = {sample.test_frame, sample.support_a, sample.support_b};
  double sx = 1.0, sy = 1.0;
  std::vector<Tensor> frame_tensors;
  for (int f : frame_ids) {
    Tensor t = det.preprocess(seq.frames[f], &sx, &sy);
    frame_tensors.push_back(reshape(t, {1, 3, target, target}));
  }
  Tensor input = concat_rows(frame_tensors);

  FrameFeatureBatch features = det.extract_features(input, 0);
  FrameFeatureBatch enhanced = det.enhance_features(features);
  RpnOutput rpn = det.rpn_forward(enhanced);

  std::vector<FrameGts> gts;
  for (int f : frame_ids) gts.push_back(scaled_gts(seq, f, sx, sy));

  // ---- discrete decisions: anchor assignment, proposal sampling, targets
  TrainingBatch local;
  const TrainingBatch& batch = frozen ? *frozen : local;
  if (!frozen) {
    local.frame_ids = frame_ids;
    for (size_t f = 0; f < frame_ids.size(); ++f) {
      std::vector<int> labels = rpn_assign(rpn.anchors, gts[f], cfg);
      std::vector<int> pos, neg;
      for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) pos.push_back(static_cast<int>(i));
        else if (labels[i] == 0) neg.push_back(static_cast<int>(i));
      }
      int max_pos = static_cast<int>(cfg.rpn_batch * cfg.rpn_pos_fraction);
      subsample(pos, max_pos, rng);
      subsample(neg, cfg.rpn_batch - static_cast<int>(pos.size()), rng);

      TrainingBatch::RpnFrame rf;
      rf.sampled = pos;
      rf.sampled.insert(rf.sampled.end(), neg.begin(), neg.end());
      for (size_t k = 0; k < pos.size(); ++k) rf.labels.push_back(1);
      for (size_t k = 0; k < neg.size(); ++k) rf.labels.push_back(0);
      local.rpn_sampled_total += static_cast<int>(rf.sampled.size());
      rf.positives = pos;
      rf.pos_deltas.resize(pos.size() * 4);
      for (size_t k = 0; k < pos.size(); ++k) {
        int g = argmax_gt(gts[f].boxes, rpn.anchors[pos[k]].box(), nullptr);
        auto delta = encode_box_delta(gts[f].boxes[g], rpn.anchors[pos[k]].box());
        std::copy(delta.begin(), delta.end(), rf.pos_deltas.begin() + k * 4);
      }
      local.rpn.push_back(std::move(rf));
    }

    // the whole proposal pool participates in instance fusion
    local.proposals = det.propose(rpn, target, target, dcfg.k_pre, dcfg.k_post);
    if (cfg.append_gt_proposals) {
      for (size_t f = 0; f < frame_ids.size(); ++f) {
        for (const BoxF& g : gts[f].boxes) {
          local.proposals.boxes.push_back(Proposal{g, static_cast<int>(f), 1.0});
        }
      }
    }
    int m = local.proposals.size();
    std::vector<int> head_labels(m, 0);
    std::vector<int> head_gt(m, -1);
    for (int i = 0; i < m; ++i) {
      int f = local.proposals.boxes[i].frame_index;
      double biou = 0.0;
      int g = argmax_gt(gts[f].boxes, local.proposals.boxes[i].box, &biou);
      if (g >= 0 && biou >= cfg.head_pos_iou) {
        head_labels[i] = gts[f].classes[g] + 1;
        head_gt[i] = g;
      }
    }
    std::vector<int> pos, neg;
    for (int i = 0; i < m; ++i) (head_labels[i] > 0 ? pos : neg).push_back(i);
    int max_pos = static_cast<int>(cfg.head_batch * cfg.head_pos_fraction);
    subsample(pos, max_pos, rng);
    subsample(neg, cfg.head_batch - static_cast<int>(pos.size()), rng);
    std::vector<int> sampled = pos;
    sampled.insert(sampled.end(), neg.begin(), neg.end());
    std::sort(sampled.begin(), sampled.end());

    int ms = static_cast<int>(sampled.size());
    local.head_rows = sampled;
    local.head_deltas.assign(static_cast<size_t>(ms) * nc * 4, 0.0);
    local.head_mask.assign(static_cast<size_t>(ms) * nc * 4, 0.0);
    for (int k = 0; k < ms; ++k) {
      int orig = sampled[k];
      local.head_labels.push_back(head_labels[orig]);
      if (head_labels[orig] == 0) continue;
      int f = local.proposals.boxes[orig].frame_index;
      auto delta = encode_box_delta(gts[f].boxes[head_gt[orig]], local.proposals.boxes[orig].box);
      for (int t = 0; t < 4; ++t) {
        local.head_deltas[(static_cast<size_t>(k) * nc + (head_labels[orig] - 1)) * 4 + t] = delta[t];
        local.head_mask[(static_cast<size_t>(k) * nc + (head_labels[orig] - 1)) * 4 + t] = 1.0;
      }
      local.any_head_positive = true;
    }
  }

  // ---- differentiable losses on the (possibly frozen) decisions
  std::vector<Tensor> rpn_cls_rows;
  std::vector<int> rpn_cls_labels;
  std::vector<Tensor> rpn_reg_terms;
  for (size_t f = 0; f < batch.rpn.size(); ++f) {
    const TrainingBatch::RpnFrame& rf = batch.rpn[f];
    if (!rf.sampled.empty()) {
      rpn_cls_rows.push_back(take_rows(rpn.logits[f], rf.sampled));
      rpn_cls_labels.insert(rpn_cls_labels.end(), rf.labels.begin(), rf.labels.end());
    }
    if (!rf.positives.empty()) {
      Tensor pred = take_rows(rpn.deltas[f], rf.positives);
      Tensor tgt = Tensor::from_data({static_cast<int>(rf.positives.size()), 4}, rf.pos_deltas);
      rpn_reg_terms.push_back(sum(smooth_l1(pred, tgt)));
    }
  }

  Tensor rpn_cls_loss = Tensor::scalar(0.0);
  if (!rpn_cls_rows.empty()) {
    rpn_cls_loss = cross_entropy_with_logits(concat_rows(rpn_cls_rows), rpn_cls_labels);
  }
  Tensor rpn_reg_loss = Tensor::scalar(0.0);
  if (!rpn_reg_terms.empty()) {
    Tensor acc = rpn_reg_terms[0];
    for (size_t i = 1; i < rpn_reg_terms.size(); ++i) acc = add(acc, rpn_reg_terms[i]);
    rpn_reg_loss = scale(acc, 1.0 / std::max(1, batch.rpn_sampled_total));
  }

  RoIFeatureSet q = det.roi_pool(enhanced, batch.proposals);
  RoIFeatureSet fused = det.fuse_rois(q, batch.proposals);
  HeadOutput head = det.head_forward(RoIFeatureSet{take_rows(fused.q, batch.head_rows)});

  Tensor head_cls_loss = cross_entropy_with_logits(head.cls_logits, batch.head_labels);

  Tensor head_reg_loss = Tensor::scalar(0.0);
  int ms = static_cast<int>(batch.head_rows.size());
  if (batch.any_head_positive) {
    Tensor tgt_t = Tensor::from_data({ms, nc * 4}, batch.head_deltas);
    Tensor mask_t = Tensor::from_data({ms, nc * 4}, batch.head_mask);
    head_reg_loss = scale(sum(mul(smooth_l1(head.box_deltas, tgt_t), mask_t)), 1.0 / std::max(1, ms));
  }

  Tensor total = add(add(scale(rpn_cls_loss, cfg.w_rpn_cls), scale(rpn_reg_loss, cfg.w_rpn_reg)),
                     add(scale(head_cls_loss, cfg.w_head_cls), scale(head_reg_loss, cfg.w_head_reg)));

  if (decisions_out && !frozen) *decisions_out = std::move(local);

  LossResult out;
  out.total = total;
  out.parts.rpn_cls = rpn_cls_loss.item();
  out.parts.rpn_reg = rpn_reg_loss.item();
  out.parts.head_cls = head_cls_loss.item();
  out.parts.head_reg = head_reg_loss.item();
  out.parts.total = total.item();
  return out;
}

namespace {

// (sequence, sample) drawn per iteration; prepared on the prefetch thread
struct Batch {
  int iter = 0;
  const VideoSequence* seq = nullptr;
  TrainingSample sample{0, 0, 0};
  uint64_t sample_seed = 0;
};

Batch make_batch(const Dataset& dataset, const std::vector<const VideoSequence*>& train_seqs,
                 const TrainConfig& cfg, int iter) {
  uint64_t seed = Rng::derive(cfg.seed, static_cast<uint64_t>(iter));
  Rng rng(seed);
  const VideoSequence* seq = train_seqs[rng.uniform_int(static_cast<int>(train_seqs.size()))];
  int t = rng.uniform_int(seq->length());
  Batch b;
  b.iter = iter;
  b.seq = seq;
  b.sample = training_sample(seq->length(), t, Rng::derive(seed, 1));
  b.sample_seed = Rng::derive(seed, 2);
  return b;
}

// bounded FIFO handoff between the sampling thread and the optimizer,
// at most 4 pending batches
class BatchQueue {
 public:
  void push(Batch b) {
    std::unique_lock<std::mutex> lock(mu_);
    cv_space_.wait(lock, [&] { return q_.size() < 4; });
    q_.push(std::move(b));
    cv_item_.notify_one();
  }
  Batch pop() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_item_.wait(lock, [&] { return !q_.empty(); });
    Batch b = q_.front();
    q_.pop();
    cv_space_.notify_one();
    return b;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_space_, cv_item_;
  std::queue<Batch> q_;
};

class Sgd {
 public:
  explicit Sgd(ParamStore& store) {
    for (Parameter& p : store.all()) velocities_.emplace_back(p.value.numel(), 0.0);
  }
  void step(ParamStore& store, double lr, double momentum, double weight_decay) {
    auto& params = store.all();
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor& value = params[i].value;
      if (!value.has_grad()) continue;
      const std::vector<double>& g = value.grad();
      std::vector<double>& v = velocities_[i];
      std::vector<double>& data = value.mutable_data();
      for (size_t j = 0; j < g.size(); ++j) {
        v[j] = momentum * v[j] - lr * (g[j] + weight_decay * data[j]);
        data[j] += v[j];
      }
    }
  }

 private:
  std::vector<std::vector<double>> velocities_;
};

}  // namespace

TrainResult train(Detector& det, const Dataset& dataset, const TrainConfig& cfg,
                  const std::string& out_dir) {
  cfg.validate();
  std::vector<const VideoSequence*> train_seqs = dataset.split("train");
  if (train_seqs.empty()) throw std::invalid_argument("train: dataset has no train split");

  std::ofstream metrics;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    metrics.open(fs::path(out_dir) / "metrics.csv");
    metrics << "iter,loss_total,rpn_cls,rpn_reg,head_cls,head_reg,lr\n" << std::flush;
  }

  BatchQueue queue;
  int total = cfg.total_iters;
  std::thread producer([&] {
    for (int iter = 0; iter < total; ++iter) queue.push(make_batch(dataset, train_seqs, cfg, iter));
  });

  Sgd sgd(det.params());
  TrainResult result;
  LossBreakdown window{};
  int window_count = 0;
  for (int iter = 0; iter < total; ++iter) {
    Batch batch = queue.pop();
    det.params().zero_grads();
    LossResult loss;
    try {
      loss = training_loss(det, *batch.seq, batch.sample, cfg, batch.sample_seed);
    } catch (const std::runtime_error& e) {
      producer.join();
      std::ostringstream os;
      os << "training aborted at iter " << iter << ": " << e.what() << " (sequence "
         << batch.seq->sequence_id << ", frames " << batch.sample.test_frame << "/"
         << batch.sample.support_a << "/" << batch.sample.support_b << ", batch seed "
         << batch.sample_seed << ")";
      std::cerr << os.str() << "\n";
      throw std::runtime_error(os.str());
    }
    loss.total.backward();
    sgd.step(det.params(), lr_at(cfg, iter), cfg.momentum, cfg.weight_decay);

    window.total += loss.parts.total;
    window.rpn_cls += loss.parts.rpn_cls;
    window.rpn_reg += loss.parts.rpn_reg;
    window.head_cls += loss.parts.head_cls;
    window.head_reg += loss.parts.head_reg;
    ++window_count;
    if ((iter + 1) % cfg.log_every == 0 || iter + 1 == total) {
      TrainLogRow row;
      row.iter = iter + 1;
      row.loss.total = window.total / window_count;
      row.loss.rpn_cls = window.rpn_cls / window_count;
      row.loss.rpn_reg = window.rpn_reg / window_count;
      row.loss.head_cls = window.head_cls / window_count;
      row.loss.head_reg = window.head_reg / window_count;
      row.lr = lr_at(cfg, iter);
      result.log.push_back(row);
      if (metrics.is_open()) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", row.iter, row.loss.total,
                      row.loss.rpn_cls, row.loss.rpn_reg, row.loss.head_cls, row.loss.head_reg, row.lr);
        metrics << buf << std::flush;
      }
      window = LossBreakdown{};
      window_count = 0;
    }
  }
  producer.join();

  if (!out_dir.empty()) {
    result.checkpoint_path = (fs::path(out_dir) / "checkpoint.dsf1").string();
    det.params().save(result.checkpoint_path);
  }
  return result;
}

void write_metrics_csv(const std::string& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "iter,loss_total,rpn_cls,rpn_reg,head_cls,head_reg,lr\n";
  char buf[256];
  for (const TrainLogRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.iter, r.loss.total,
                  r.loss.rpn_cls, r.loss.rpn_reg, r.loss.head_cls, r.loss.head_reg, r.lr);
    os << buf;
  }
}

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<DetRecord> run_inference(const Detector& det, const std::vector<const VideoSequence*>& seqs,
                                     const InferenceOptions& opts) {
  std::vector<DetRecord> all;
  for (const VideoSequence* seq : seqs) {
    int T = seq->length();
    double sx = 1.0, sy = 1.0;

    // per-frame backbone features, shared by every test frame
    std::vector<Tensor> cache(T);
    {
      std::vector<std::thread> workers;
      std::atomic_int next{0};
      int nthreads = std::max(1, std::min(opts.threads, T));
      for (int w = 0; w < nthreads; ++w) {
        workers.emplace_back([&] {
          NoGradGuard ng;
          int f;
          while ((f = next.fetch_add(1)) < T) {
            double lsx, lsy;
            cache[f] = det.backbone_forward(det.preprocess(seq->frames[f], &lsx, &lsy));
          }
        });
      }
      for (auto& th : workers) th.join();
      det.preprocess(seq->frames[0], &sx, &sy);  // recover the scale factors
    }

    uint64_t seq_key = fnv1a(seq->sequence_id);
    std::vector<std::vector<Detection>> per_frame(T);
    {
      std::vector<std::thread> workers;
      std::atomic_int next{0};
      int nthreads = std::max(1, std::min(opts.threads, T));
      for (int w = 0; w < nthreads; ++w) {
        workers.emplace_back([&] {
          NoGradGuard ng;
          int t;
          while ((t = next.fetch_add(1)) < T) {
            std::vector<int> support = sample_support(opts.strategy, T, t, seq_key);
            std::vector<Tensor> feats;
            feats.push_back(cache[t]);
            for (int s : support) feats.push_back(cache[s]);
            auto result = det.detect_from_features(feats, 0, sx, sy, false);
            per_frame[t] = std::move(result.detections);
          }
        });
      }
      for (auto& th : workers) th.join();
    }

    for (int t = 0; t < T; ++t) {
      for (const Detection& d : per_frame[t]) {
        all.push_back(DetRecord{seq->sequence_id, t, d.class_id, d.confidence, d.box});
      }
    }
  }
  return all;
}

json AblationResult::to_json() const {
  json j = json::array();
  for (const AblationRun& r : runs) {
    json row;
    row["name"] = r.name;
    row["frame_fusion_on"] = r.frame_fusion_on;
    row["instance_fusion_on"] = r.instance_fusion_on;
    row["report"] = r.report.to_json();
    row["checkpoint"] = r.checkpoint_path;
    j.push_back(row);
  }
  return j;
}

std::string AblationResult::table() const {
  std::ostringstream os;
  os << "variant        ";
  for (const AblationRun& r : runs) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%12s", r.name.c_str());
    os << buf;
  }
  os << "\n";
  auto row = [&](const char* label, std::function<std::optional<double>(const EvalReport&)> get) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-14s ", label);
    os << buf;
    for (const AblationRun& r : runs) {
      auto v = get(r.report);
      if (v)
        std::snprintf(buf, sizeof(buf), "%12.4f", *v);
      else
        std::snprintf(buf, sizeof(buf), "%12s", "-");
      os << buf;
    }
    os << "\n";
  };
  row("mAP", [](const EvalReport& r) { return std::optional<double>(r.map); });
  row("mAP (slow)", [](const EvalReport& r) { return r.map_slow; });
  row("mAP (medium)", [](const EvalReport& r) { return r.map_medium; });
  row("mAP (fast)", [](const EvalReport& r) { return r.map_fast; });
  return os.str();
}

AblationResult ablate(const Dataset& dataset, const DetectorConfig& det_cfg, const TrainConfig& train_cfg,
                      const InferenceOptions& eval_opts, const std::string& out_dir, int parallel_runs) {
  struct VariantSpec {
    const char* name;
    bool frame_on, instance_on;
  };
  const VariantSpec variants[4] = {{"baseline", false, false},
                                   {"frame", true, false},
                                   {"instance", false, true},
                                   {"dual", true, true}};

  AblationResult result;
  result.runs.resize(4);

  auto run_variant = [&](int vi) {
    const VariantSpec& v = variants[vi];
    DetectorConfig cfg = det_cfg;
    cfg.frame_fusion_on = v.frame_on;
    cfg.instance_fusion_on = v.instance_on;
    Detector det(cfg);
    std::string dir;
    if (!out_dir.empty()) dir = (fs::path(out_dir) / v.name).string();
    TrainResult tr = train(det, dataset, train_cfg, dir);
    std::vector<DetRecord> dets = run_inference(det, dataset.split("val"), eval_opts);
    AblationRun run;
    run.name = v.name;
    run.frame_fusion_on = v.frame_on;
    run.instance_fusion_on = v.instance_on;
    run.report = evaluate(dets, dataset.split("val"));
    run.report.config_echo = json{{"detector", cfg.to_json()},
                                  {"train", train_cfg.to_json()},
                                  {"sampling", eval_opts.strategy.describe()}};
    run.checkpoint_path = tr.checkpoint_path;
    result.runs[vi] = std::move(run);
  };

  if (parallel_runs <= 1) {
    for (int vi = 0; vi < 4; ++vi) run_variant(vi);
  } else {
    // distinct replicas on distinct threads, no shared mutable state
    std::atomic_int next{0};
    std::vector<std::thread> workers;
    int nthreads = std::min(parallel_runs, 4);
    for (int w = 0; w < nthreads; ++w) {
      workers.emplace_back([&] {
        int vi;
        while ((vi = next.fetch_add(1)) < 4) run_variant(vi);
      });
    }
    for (auto& th : workers) th.join();
  }

  if (!out_dir.empty()) {
    std::ofstream js(fs::path(out_dir) / "ablation.json");
    js << result.to_json().dump(2) << "\n";
    std::ofstream ts(fs::path(out_dir) / "ablation.txt");
    ts << result.table();
  }
  return result;
}

}  // namespace dsf
