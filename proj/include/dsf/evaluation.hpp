#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsf/instance_fusion.hpp"
#include "dsf/synth_video.hpp"

#include "json.hpp"

namespace dsf {

double iou(const BoxF& a, const BoxF& b);

// one detection record as written to detections.jsonl
struct DetRecord {
  std::string sequence_id;
  int frame = 0;
  int class_id = 0;
  double score = 0.0;
  BoxF box;
};

// ground truth prepared for matching; ignored entries can absorb detections
// without counting toward precision or recall (motion-group protocol)
struct GtEntry {
  std::string sequence_id;
  int frame = 0;
  int class_id = 0;
  BoxF box;
  bool ignore = false;
};

struct PrCurve {
  std::vector<double> recall, precision;  // after the monotone envelope
  double ap = 0.0;
};

// greedy score-descending match, continuous (all-point) interpolation
PrCurve pr_curve(std::vector<DetRecord> dets, const std::vector<GtEntry>& gts, double iou_thresh = 0.5);
double average_precision(std::vector<DetRecord> dets, const std::vector<GtEntry>& gts,
                         double iou_thresh = 0.5);

// all ground-truth boxes of the sequences, ignore flags unset
std::vector<GtEntry> collect_gts(const std::vector<const VideoSequence*>& sequences);

struct EvalReport {
  std::map<std::string, double> per_class_ap;  // class name -> AP
  double map = 0.0;
  std::optional<double> map_slow, map_medium, map_fast;
  int num_detections = 0;
  int num_gt = 0;
  nlohmann::json config_echo;

  nlohmann::json to_json() const;
  std::string table() const;  // human-readable
};

// overall mAP@0.5 plus the slow/medium/fast breakdown; detections are scored
// against the val annotations of `sequences`
EvalReport evaluate(const std::vector<DetRecord>& dets,
                    const std::vector<const VideoSequence*>& sequences, int motion_window = 10,
                    double iou_thresh = 0.5);

void write_detections_jsonl(const std::string& path, const std::vector<DetRecord>& dets);
std::vector<DetRecord> read_detections_jsonl(const std::string& path);

}  // namespace dsf
