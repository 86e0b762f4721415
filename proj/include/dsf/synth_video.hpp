#pragma once

#include <string>
#include <vector>

#include "dsf/image.hpp"
#include "dsf/instance_fusion.hpp"
#include "dsf/rng.hpp"

#include "json.hpp"

namespace dsf {

// shape classes double as object categories
enum class ShapeClass : int { Disc = 0, Square = 1, Triangle = 2 };
const std::vector<std::string>& class_names();
inline constexpr int kNumClasses = 3;

struct DegradationSpec {
  // whole-frame 1-D box blur along the dominant object velocity
  double p_motion_blur = 0.0;
  double blur_len_scale = 0.0;  // kernel length ~ scale * max object speed
  int blur_len_max = 15;

  double p_defocus = 0.0;
  double defocus_sigma_min = 0.0, defocus_sigma_max = 0.0;

  double p_occlusion = 0.0;  // per object per frame
  int occlusion_count_max = 1;
  double occlusion_size_min = 0.0, occlusion_size_max = 0.0;  // fraction of object box

  double p_pose = 0.0;  // probability the pose drift advances this frame
  double pose_rot_drift = 0.0;    // radians per applied frame
  double pose_scale_drift = 0.0;  // log-scale sigma per applied frame

  static DegradationSpec none();
  static DegradationSpec standard();
  nlohmann::json to_json() const;
  static DegradationSpec from_json(const nlohmann::json& j);
};

struct FrameAnnotation {
  BoxF box;
  int class_id = 0;
  int track_id = 0;
};

struct TrackMeta {
  int track_id = 0;
  int class_id = 0;
  double speed = 0.0;  // px/frame at launch
  double vx0 = 0.0, vy0 = 0.0;
};

struct VideoSequence {
  std::string sequence_id;
  int height = 0, width = 0;
  std::vector<ImageU8> frames;
  std::vector<std::vector<FrameAnnotation>> annotations;  // per frame
  std::vector<TrackMeta> tracks;
  std::vector<std::vector<std::string>> degradation_tags;  // per frame

  int length() const { return static_cast<int>(frames.size()); }
};

struct GenSpec {
  int frames = 40;
  int height = 128, width = 128;
  int min_objects = 2, max_objects = 3;
  double min_radius = 10.0, max_radius = 22.0;
  // speed categories in px/frame, drawn uniformly within a category; tuned
  // so the mean-IoU motion groups (slow > 0.9, medium 0.7..0.9, fast < 0.7)
  // are all populated at the default object sizes
  double slow_max = 0.15;
  double medium_min = 0.25, medium_max = 0.45;
  double fast_min = 2.0, fast_max = 6.0;
  double jitter_sigma = 0.25;
  DegradationSpec degrade = DegradationSpec::standard();

  nlohmann::json to_json() const;
  static GenSpec from_json(const nlohmann::json& j);
};

VideoSequence generate_sequence(uint64_t seed, const std::string& sequence_id, const GenSpec& spec);

// mean IoU of a track's box against its boxes in a +/- window, averaged over
// frames; 1.0 for single-frame tracks
double motion_speed(const VideoSequence& seq, int track_id, int window = 10);

// slow > 0.9, medium in [0.7, 0.9], fast < 0.7
enum class MotionGroup : int { Slow = 0, Medium = 1, Fast = 2 };
MotionGroup motion_group_of(double speed_iou);
const char* motion_group_name(MotionGroup g);

struct Dataset {
  uint64_t seed = 0;
  GenSpec spec;
  std::vector<VideoSequence> sequences;
  std::vector<std::string> train_split, val_split;

  const VideoSequence* find(const std::string& sequence_id) const;
  std::vector<const VideoSequence*> split(const std::string& name) const;  // "train" | "val"
};

Dataset generate_dataset(uint64_t seed, int train_sequences, int val_sequences, const GenSpec& spec);

void save_dataset(const Dataset& ds, const std::string& root);
Dataset load_dataset(const std::string& root);

}  // namespace dsf
