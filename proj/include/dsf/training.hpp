#pragma once

#include <string>
#include <vector>

#include "dsf/detector.hpp"
#include "dsf/evaluation.hpp"
#include "dsf/sampling.hpp"
#include "dsf/synth_video.hpp"

#include "json.hpp"

namespace dsf {

struct TrainConfig {
  int total_iters = 8000;
  std::vector<int> lr_drop_iters = {5000, 7000};  // x0.1 each
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double w_rpn_cls = 1.0, w_rpn_reg = 1.0, w_head_cls = 1.0, w_head_reg = 1.0;
  uint64_t seed = 0;
  int log_every = 100;

  // standard two-stage assignment thresholds
  double rpn_pos_iou = 0.7, rpn_neg_iou = 0.3;
  double head_pos_iou = 0.5;
  int rpn_batch = 64;
  double rpn_pos_fraction = 0.5;
  int head_batch = 96;
  double head_pos_fraction = 0.3334;
  // adding gt boxes to the proposal pool guarantees early head positives but
  // lets instance fusion attend to pristine features that never exist at
  // inference; off keeps train and eval pools distribution-matched
  bool append_gt_proposals = false;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  void validate() const;  // lr_drop_iters strictly increasing, < total_iters
};

struct LossBreakdown {
  double total = 0, rpn_cls = 0, rpn_reg = 0, head_cls = 0, head_reg = 0;
};

struct LossResult {
  Tensor total;
  LossBreakdown parts;
};

// The discrete side of one training step: sampled anchors with labels and
// regression targets, the sampled proposal set, head labels and targets.
// Proposal boxes and assignments are constants w.r.t. the loss (standard
// two-stage detachment), so a frozen batch makes the loss a pure
// differentiable function of the parameters.
struct TrainingBatch {
  std::vector<int> frame_ids;  // [test, support, support]
  struct RpnFrame {
    std::vector<int> sampled;        // anchor indices fed to the cls loss
    std::vector<int> labels;         // 0/1 aligned with sampled
    std::vector<int> positives;      // anchor indices with box targets
    std::vector<double> pos_deltas;  // [positives x 4]
  };
  std::vector<RpnFrame> rpn;
  int rpn_sampled_total = 0;
  // instance fusion runs over the full pool (every frame's proposals plus
  // appended ground truth); only the sampled rows feed the head losses
  ProposalSet proposals;
  std::vector<int> head_rows;         // sampled indices into proposals
  std::vector<int> head_labels;       // 0 background, 1..C class+1, aligned with head_rows
  std::vector<double> head_deltas;    // [sampled x 4C] dense targets
  std::vector<double> head_mask;      // 1 on the positive class slice
  bool any_head_positive = false;
};

// full three-frame training loss for one sample; gts are in original image
// coordinates of the sequence. A frozen batch re-uses previously made
// discrete decisions (for optimizer steps the two calls are equivalent).
LossResult training_loss(const Detector& det, const VideoSequence& seq, const TrainingSample& sample,
                         const TrainConfig& cfg, uint64_t sample_seed,
                         const TrainingBatch* frozen = nullptr, TrainingBatch* decisions_out = nullptr);

double lr_at(const TrainConfig& cfg, int iter);

struct TrainLogRow {
  int iter = 0;
  LossBreakdown loss;
  double lr = 0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::string checkpoint_path;  // empty when out_dir was empty
};

// SGD with momentum over every registered parameter; writes checkpoint.dsf1
// and metrics.csv under out_dir when it is non-empty
TrainResult train(Detector& det, const Dataset& dataset, const TrainConfig& cfg,
                  const std::string& out_dir);

void write_metrics_csv(const std::string& path, const std::vector<TrainLogRow>& rows);

struct InferenceOptions {
  SamplingStrategy strategy = SamplingStrategy::stochastic(9, 0);
  int threads = 1;
};

// detections over the chosen sequences (original pixel coordinates); backbone
// features are computed once per frame and shared across test frames
std::vector<DetRecord> run_inference(const Detector& det, const std::vector<const VideoSequence*>& seqs,
                                     const InferenceOptions& opts);

struct AblationRun {
  std::string name;  // baseline | frame | instance | dual
  bool frame_fusion_on = false, instance_fusion_on = false;
  EvalReport report;
  std::string checkpoint_path;
};

struct AblationResult {
  std::vector<AblationRun> runs;  // (a) baseline, (b) frame, (c) instance, (d) dual
  nlohmann::json to_json() const;
  std::string table() const;  // Table-1 style rows: overall / slow / medium / fast
};

// trains and evaluates the four wiring variants with identical seeds and
// schedules; runs can execute on parallel replicas
AblationResult ablate(const Dataset& dataset, const DetectorConfig& det_cfg, const TrainConfig& train_cfg,
                      const InferenceOptions& eval_opts, const std::string& out_dir, int parallel_runs = 1);

}  // namespace dsf
