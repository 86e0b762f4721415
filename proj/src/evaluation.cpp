#include "dsf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

using nlohmann::json;

namespace dsf {

double iou(const BoxF& a, const BoxF& b) {
  double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
  double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
  double iw = ix2 - ix1, ih = iy2 - iy1;
  if (iw <= 0 || ih <= 0) return 0.0;
  double inter = iw * ih;
  double uni = a.area() + b.area() - inter;
  return inter / uni;
}

PrCurve pr_curve(std::vector<DetRecord> dets, const std::vector<GtEntry>& gts, double iou_thresh) {
  int npos = 0;
  for (const GtEntry& g : gts)
    if (!g.ignore) ++npos;
  if (npos == 0) throw std::invalid_argument("average_precision: no non-ignored ground truth");
  if (dets.empty()) return {};

  // stable sort keeps the lower original index first on score ties
  std::stable_sort(dets.begin(), dets.end(),
                   [](const DetRecord& a, const DetRecord& b) { return a.score > b.score; });

  // per-image gt index
  std::map<std::pair<std::string, int>, std::vector<int>> by_image;
  for (int i = 0; i < static_cast<int>(gts.size()); ++i) {
    by_image[{gts[i].sequence_id, gts[i].frame}].push_back(i);
  }
  std::vector<bool> matched(gts.size(), false);

  std::vector<int> tp_flags;  // 1 = TP, 0 = FP, skipped dets omitted
  tp_flags.reserve(dets.size());
  for (const DetRecord& d : dets) {
    auto it = by_image.find({d.sequence_id, d.frame});
    int best = -1;
    double best_iou = 0.0;
    if (it != by_image.end()) {
      for (int gi : it->second) {
        double v = iou(d.box, gts[gi].box);
        if (v > best_iou) {
          best_iou = v;
          best = gi;
        }
      }
    }
    if (best >= 0 && best_iou >= iou_thresh) {
      if (gts[best].ignore) continue;  // absorbed by out-of-group gt: not counted
      if (!matched[best]) {
        matched[best] = true;
        tp_flags.push_back(1);
      } else {
        tp_flags.push_back(0);  // duplicate on an already-matched gt
      }
    } else {
      tp_flags.push_back(0);
    }
  }

  // PR curve with monotone non-increasing precision (all-point interpolation)
  int n = static_cast<int>(tp_flags.size());
  if (n == 0) return {};
  PrCurve curve;
  curve.recall.resize(n);
  curve.precision.resize(n);
  int tp = 0;
  for (int i = 0; i < n; ++i) {
    tp += tp_flags[i];
    curve.recall[i] = static_cast<double>(tp) / npos;
    curve.precision[i] = static_cast<double>(tp) / (i + 1);
  }
  for (int i = n - 2; i >= 0; --i) curve.precision[i] = std::max(curve.precision[i], curve.precision[i + 1]);
  double prev_recall = 0.0;
  for (int i = 0; i < n; ++i) {
    if (curve.recall[i] > prev_recall) {
      curve.ap += (curve.recall[i] - prev_recall) * curve.precision[i];
      prev_recall = curve.recall[i];
    }
  }
  return curve;
}

double average_precision(std::vector<DetRecord> dets, const std::vector<GtEntry>& gts, double iou_thresh) {
  return pr_curve(std::move(dets), gts, iou_thresh).ap;
}

std::vector<GtEntry> collect_gts(const std::vector<const VideoSequence*>& sequences) {
  std::vector<GtEntry> out;
  for (const VideoSequence* seq : sequences) {
    for (int f = 0; f < seq->length(); ++f) {
      for (const FrameAnnotation& a : seq->annotations[f]) {
        out.push_back(GtEntry{seq->sequence_id, f, a.class_id, a.box, false});
      }
    }
  }
  return out;
}

namespace {

struct GroupedGt {
  std::vector<GtEntry> all;                       // per class: built lazily
  std::map<std::pair<std::string, int>, MotionGroup> track_group;  // (sequence, track) -> group
};

}  // namespace

json EvalReport::to_json() const {
  json j;
  j["per_class_ap"] = per_class_ap;
  j["mAP"] = map;
  if (map_slow) j["mAP_slow"] = *map_slow;
  if (map_medium) j["mAP_medium"] = *map_medium;
  if (map_fast) j["mAP_fast"] = *map_fast;
  j["num_detections"] = num_detections;
  j["num_gt"] = num_gt;
  if (!config_echo.is_null()) j["config"] = config_echo;
  return j;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << "class            AP\n";
  os << "-------------------\n";
  char buf[80];
  for (const auto& [name, ap] : per_class_ap) {
    std::snprintf(buf, sizeof(buf), "%-12s %7.4f\n", name.c_str(), ap);
    os << buf;
  }
  os << "-------------------\n";
  std::snprintf(buf, sizeof(buf), "%-12s %7.4f\n", "mAP", map);
  os << buf;
  auto put = [&](const char* label, const std::optional<double>& v) {
    if (v)
      std::snprintf(buf, sizeof(buf), "%-12s %7.4f\n", label, *v);
    else
      std::snprintf(buf, sizeof(buf), "%-12s %7s\n", label, "-");
    os << buf;
  };
  put("mAP (slow)", map_slow);
  put("mAP (medium)", map_medium);
  put("mAP (fast)", map_fast);
  os << "detections: " << num_detections << "  gt boxes: " << num_gt << "\n";
  return os.str();
}

EvalReport evaluate(const std::vector<DetRecord>& dets, const std::vector<const VideoSequence*>& sequences,
                    int motion_window, double iou_thresh) {
  // motion group per (sequence, track)
  std::map<std::pair<std::string, int>, MotionGroup> track_group;
  std::vector<GtEntry> all_gts;
  for (const VideoSequence* seq : sequences) {
    for (const TrackMeta& t : seq->tracks) {
      double sp = motion_speed(*seq, t.track_id, motion_window);
      track_group[{seq->sequence_id, t.track_id}] = motion_group_of(sp);
    }
    for (int f = 0; f < seq->length(); ++f) {
      for (const FrameAnnotation& a : seq->annotations[f]) {
        GtEntry e;
        e.sequence_id = seq->sequence_id;
        e.frame = f;
        e.class_id = a.class_id;
        e.box = a.box;
        all_gts.push_back(e);
      }
    }
  }
  // remember each gt's track for group restriction
  std::vector<int> gt_track;
  gt_track.reserve(all_gts.size());
  for (const VideoSequence* seq : sequences)
    for (int f = 0; f < seq->length(); ++f)
      for (const FrameAnnotation& a : seq->annotations[f]) gt_track.push_back(a.track_id);

  auto map_for = [&](std::optional<MotionGroup> group, std::map<std::string, double>* per_class)
      -> std::optional<double> {
    double sum = 0.0;
    int classes = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      std::vector<GtEntry> gts;
      for (size_t i = 0; i < all_gts.size(); ++i) {
        if (all_gts[i].class_id != c) continue;
        GtEntry e = all_gts[i];
        if (group) {
          MotionGroup g = track_group.at({e.sequence_id, gt_track[i]});
          e.ignore = g != *group;
        }
        gts.push_back(e);
      }
      int npos = 0;
      for (const GtEntry& g : gts)
        if (!g.ignore) ++npos;
      if (npos == 0) continue;  // class absent from this group: excluded
      std::vector<DetRecord> class_dets;
      for (const DetRecord& d : dets)
        if (d.class_id == c) class_dets.push_back(d);
      double ap = average_precision(std::move(class_dets), gts, iou_thresh);
      if (per_class) (*per_class)[class_names()[c]] = ap;
      sum += ap;
      ++classes;
    }
    if (classes == 0) return std::nullopt;
    return sum / classes;
  };

  EvalReport report;
  report.num_detections = static_cast<int>(dets.size());
  report.num_gt = static_cast<int>(all_gts.size());
  report.map = map_for(std::nullopt, &report.per_class_ap).value_or(0.0);
  report.map_slow = map_for(MotionGroup::Slow, nullptr);
  report.map_medium = map_for(MotionGroup::Medium, nullptr);
  report.map_fast = map_for(MotionGroup::Fast, nullptr);
  return report;
}

void write_detections_jsonl(const std::string& path, const std::vector<DetRecord>& dets) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  for (const DetRecord& d : dets) {
    json j{{"sequence_id", d.sequence_id},
           {"frame", d.frame},
           {"class", class_names().at(static_cast<size_t>(d.class_id))},
           {"score", d.score},
           {"box", json::array({d.box.x1, d.box.y1, d.box.x2, d.box.y2})}};
    os << j.dump() << "\n";
  }
}

std::vector<DetRecord> read_detections_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<DetRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    DetRecord d;
    d.sequence_id = j.at("sequence_id");
    d.frame = j.at("frame");
    std::string cname = j.at("class");
    auto it = std::find(class_names().begin(), class_names().end(), cname);
    if (it == class_names().end()) throw std::runtime_error("unknown class in detections: " + cname);
    d.class_id = static_cast<int>(it - class_names().begin());
    d.score = j.at("score");
    d.box = BoxF{j.at("box").at(0), j.at("box").at(1), j.at("box").at(2), j.at("box").at(3)};
    out.push_back(d);
  }
  return out;
}

}  // namespace dsf
