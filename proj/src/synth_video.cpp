#include "dsf/synth_video.hpp"

#include "dsf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace dsf {

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {"disc", "square", "triangle"};
  return names;
}

DegradationSpec DegradationSpec::none() { return DegradationSpec{}; }

DegradationSpec DegradationSpec::standard() {
  DegradationSpec d;
  d.p_motion_blur = 0.55;
  d.blur_len_scale = 2.2;
  d.blur_len_max = 15;
  d.p_defocus = 0.25;
  d.defocus_sigma_min = 1.0;
  d.defocus_sigma_max = 2.2;
  d.p_occlusion = 0.30;
  d.occlusion_count_max = 2;
  d.occlusion_size_min = 0.35;
  d.occlusion_size_max = 0.75;
  d.p_pose = 0.6;
  d.pose_rot_drift = 0.12;
  d.pose_scale_drift = 0.05;
  return d;
}

json DegradationSpec::to_json() const {
  return json{{"p_motion_blur", p_motion_blur},
              {"blur_len_scale", blur_len_scale},
              {"blur_len_max", blur_len_max},
              {"p_defocus", p_defocus},
              {"defocus_sigma_min", defocus_sigma_min},
              {"defocus_sigma_max", defocus_sigma_max},
              {"p_occlusion", p_occlusion},
              {"occlusion_count_max", occlusion_count_max},
              {"occlusion_size_min", occlusion_size_min},
              {"occlusion_size_max", occlusion_size_max},
              {"p_pose", p_pose},
              {"pose_rot_drift", pose_rot_drift},
              {"pose_scale_drift", pose_scale_drift}};
}

DegradationSpec DegradationSpec::from_json(const json& j) {
  DegradationSpec d;
  d.p_motion_blur = j.at("p_motion_blur");
  d.blur_len_scale = j.at("blur_len_scale");
  d.blur_len_max = j.at("blur_len_max");
  d.p_defocus = j.at("p_defocus");
  d.defocus_sigma_min = j.at("defocus_sigma_min");
  d.defocus_sigma_max = j.at("defocus_sigma_max");
  d.p_occlusion = j.at("p_occlusion");
  d.occlusion_count_max = j.at("occlusion_count_max");
  d.occlusion_size_min = j.at("occlusion_size_min");
  d.occlusion_size_max = j.at("occlusion_size_max");
  d.p_pose = j.at("p_pose");
  d.pose_rot_drift = j.at("pose_rot_drift");
  d.pose_scale_drift = j.at("pose_scale_drift");
  return d;
}

json GenSpec::to_json() const {
  return json{{"frames", frames},
              {"height", height},
              {"width", width},
              {"min_objects", min_objects},
              {"max_objects", max_objects},
              {"min_radius", min_radius},
              {"max_radius", max_radius},
              {"slow_max", slow_max},
              {"medium_min", medium_min},
              {"medium_max", medium_max},
              {"fast_min", fast_min},
              {"fast_max", fast_max},
              {"jitter_sigma", jitter_sigma},
              {"degrade", degrade.to_json()}};
}

GenSpec GenSpec::from_json(const json& j) {
  GenSpec s;
  s.frames = j.at("frames");
  s.height = j.at("height");
  s.width = j.at("width");
  s.min_objects = j.at("min_objects");
  s.max_objects = j.at("max_objects");
  s.min_radius = j.at("min_radius");
  s.max_radius = j.at("max_radius");
  s.slow_max = j.at("slow_max");
  s.medium_min = j.at("medium_min");
  s.medium_max = j.at("medium_max");
  s.fast_min = j.at("fast_min");
  s.fast_max = j.at("fast_max");
  s.jitter_sigma = j.at("jitter_sigma");
  s.degrade = DegradationSpec::from_json(j.at("degrade"));
  return s;
}

namespace {

struct TrackState {
  int track_id;
  ShapeClass cls;
  double radius;
  uint8_t color[3];
  double x, y;    // center
  double vx, vy;  // px/frame
  double speed;
  double pose_angle = 0.0;
  double pose_scale = 1.0;
};

// tight box of the canonical (unrotated, unit-scale) shape
BoxF canonical_box(const TrackState& t) {
  double r = t.radius;
  switch (t.cls) {
    case ShapeClass::Disc:
    case ShapeClass::Square:
      return {t.x - r, t.y - r, t.x + r, t.y + r};
    case ShapeClass::Triangle: {
      double cos30 = 0.86602540378443864676;
      return {t.x - r * cos30, t.y - r, t.x + r * cos30, t.y + r * 0.5};
    }
  }
  return {};
}

bool inside_shape(const TrackState& t, double px, double py) {
  // into shape-local frame: un-rotate, un-scale
  double dx = px - t.x, dy = py - t.y;
  double ca = std::cos(-t.pose_angle), sa = std::sin(-t.pose_angle);
  double lx = (dx * ca - dy * sa) / t.pose_scale;
  double ly = (dx * sa + dy * ca) / t.pose_scale;
  double r = t.radius;
  switch (t.cls) {
    case ShapeClass::Disc:
      return lx * lx + ly * ly <= r * r;
    case ShapeClass::Square:
      return std::fabs(lx) <= r && std::fabs(ly) <= r;
    case ShapeClass::Triangle: {
      // vertices at angles -90, 30, 150 degrees (apex up, y grows downward)
      double ax = 0, ay = -r;
      double bx = r * 0.86602540378443864676, by = r * 0.5;
      double cx = -bx, cy = by;
      auto side = [&](double x0, double y0, double x1, double y1) {
        return (x1 - x0) * (ly - y0) - (y1 - y0) * (lx - x0);
      };
      double s1 = side(ax, ay, bx, by), s2 = side(bx, by, cx, cy), s3 = side(cx, cy, ax, ay);
      bool has_neg = (s1 < 0) || (s2 < 0) || (s3 < 0);
      bool has_pos = (s1 > 0) || (s2 > 0) || (s3 > 0);
      return !(has_neg && has_pos);
    }
  }
  return false;
}

void render_track(ImageU8& img, const TrackState& t) {
  double extent = t.radius * t.pose_scale * 1.5 + 2.0;
  int x0 = std::max(0, static_cast<int>(std::floor(t.x - extent)));
  int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(t.x + extent)));
  int y0 = std::max(0, static_cast<int>(std::floor(t.y - extent)));
  int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(t.y + extent)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      // 2x2 supersampled coverage
      int hits = 0;
      for (double oy : {0.25, 0.75})
        for (double ox : {0.25, 0.75})
          if (inside_shape(t, x + ox, y + oy)) ++hits;
      if (hits == 0) continue;
      double alpha = hits / 4.0;
      uint8_t* p = img.px(y, x);
      for (int c = 0; c < 3; ++c) {
        p[c] = static_cast<uint8_t>(std::lround(p[c] * (1.0 - alpha) + t.color[c] * alpha));
      }
    }
  }
}

ImageU8 make_background(int h, int w, Rng& rng) {
  ImageU8 img;
  img.height = h;
  img.width = w;
  img.rgb.resize(static_cast<size_t>(h) * w * 3);
  double top[3] = {rng.uniform(0.10, 0.30), rng.uniform(0.10, 0.30), rng.uniform(0.10, 0.30)};
  double bot[3] = {rng.uniform(0.20, 0.45), rng.uniform(0.20, 0.45), rng.uniform(0.20, 0.45)};
  for (int y = 0; y < h; ++y) {
    double ty = static_cast<double>(y) / (h - 1);
    for (int x = 0; x < w; ++x) {
      uint8_t* p = img.px(y, x);
      for (int c = 0; c < 3; ++c) {
        double v = top[c] * (1 - ty) + bot[c] * ty + rng.uniform(-0.04, 0.04);
        p[c] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  }
  return img;
}

void box_blur_directional(ImageU8& img, double ux, double uy, int len) {
  // 1-D box kernel along (ux, uy), bilinear taps
  ImageU8 src = img;
  int half = len / 2;
  auto sample = [&](double x, double y, int c) -> double {
    int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    double fx = x - x0, fy = y - y0;
    int x0c = std::clamp(x0, 0, src.width - 1), x1c = std::clamp(x0 + 1, 0, src.width - 1);
    int y0c = std::clamp(y0, 0, src.height - 1), y1c = std::clamp(y0 + 1, 0, src.height - 1);
    return (1 - fy) * ((1 - fx) * src.px(y0c, x0c)[c] + fx * src.px(y0c, x1c)[c]) +
           fy * ((1 - fx) * src.px(y1c, x0c)[c] + fx * src.px(y1c, x1c)[c]);
  };
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc[3] = {0, 0, 0};
      for (int i = -half; i <= half; ++i) {
        for (int c = 0; c < 3; ++c) acc[c] += sample(x + i * ux, y + i * uy, c);
      }
      uint8_t* p = img.px(y, x);
      for (int c = 0; c < 3; ++c)
        p[c] = static_cast<uint8_t>(std::lround(std::clamp(acc[c] / (2 * half + 1), 0.0, 255.0)));
    }
  }
}

void gaussian_blur(ImageU8& img, double sigma) {
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  ImageU8 tmp = img;
  // horizontal then vertical
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc[3] = {0, 0, 0};
      for (int i = -radius; i <= radius; ++i) {
        int xs = std::clamp(x + i, 0, img.width - 1);
        for (int c = 0; c < 3; ++c) acc[c] += kernel[i + radius] * img.px(y, xs)[c];
      }
      for (int c = 0; c < 3; ++c)
        tmp.px(y, x)[c] = static_cast<uint8_t>(std::lround(std::clamp(acc[c], 0.0, 255.0)));
    }
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc[3] = {0, 0, 0};
      for (int i = -radius; i <= radius; ++i) {
        int ys = std::clamp(y + i, 0, img.height - 1);
        for (int c = 0; c < 3; ++c) acc[c] += kernel[i + radius] * tmp.px(ys, x)[c];
      }
      for (int c = 0; c < 3; ++c)
        img.px(y, x)[c] = static_cast<uint8_t>(std::lround(std::clamp(acc[c], 0.0, 255.0)));
    }
  }
}

}  // namespace

VideoSequence generate_sequence(uint64_t seed, const std::string& sequence_id, const GenSpec& spec) {
  if (spec.frames < 1) throw std::invalid_argument("generate_sequence: frames must be >= 1");
  double margin = 2.0;
  if (2.0 * spec.max_radius + 2.0 * margin >= std::min(spec.height, spec.width)) {
    throw std::invalid_argument("generate_sequence: object larger than frame");
  }

  // separate streams so toggling degradations can never perturb the motion
  // path or the layout, keeping annotations degradation-independent
  Rng layout_rng(Rng::derive(seed, 0));
  Rng motion_rng(Rng::derive(seed, 1));
  Rng degrade_rng(Rng::derive(seed, 2));

  VideoSequence seq;
  seq.sequence_id = sequence_id;
  seq.height = spec.height;
  seq.width = spec.width;

  ImageU8 background = make_background(spec.height, spec.width, layout_rng);

  int num_objects = spec.min_objects + layout_rng.uniform_int(spec.max_objects - spec.min_objects + 1);
  // stratified speed categories so small splits still cover slow/medium/fast
  int category_offset = layout_rng.uniform_int(3);
  std::vector<TrackState> tracks;
  for (int i = 0; i < num_objects; ++i) {
    TrackState t;
    t.track_id = i;
    t.cls = static_cast<ShapeClass>(layout_rng.uniform_int(kNumClasses));
    t.radius = layout_rng.uniform(spec.min_radius, spec.max_radius);
    // saturated color, away from the dim background
    int bright = layout_rng.uniform_int(3);
    for (int c = 0; c < 3; ++c) {
      double v = c == bright ? layout_rng.uniform(0.75, 1.0) : layout_rng.uniform(0.0, 0.55);
      t.color[c] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    double r = t.radius;
    t.x = layout_rng.uniform(r + margin, spec.width - r - margin);
    t.y = layout_rng.uniform(r + margin, spec.height - r - margin);
    int cat = (category_offset + i) % 3;
    double speed = cat == 0   ? layout_rng.uniform(0.0, spec.slow_max)
                   : cat == 1 ? layout_rng.uniform(spec.medium_min, spec.medium_max)
                              : layout_rng.uniform(spec.fast_min, spec.fast_max);
    double angle = layout_rng.uniform(0.0, 6.283185307179586);
    t.vx = speed * std::cos(angle);
    t.vy = speed * std::sin(angle);
    t.speed = speed;
    tracks.push_back(t);
    seq.tracks.push_back(TrackMeta{t.track_id, static_cast<int>(t.cls), speed, t.vx, t.vy});
  }

  const DegradationSpec& deg = spec.degrade;
  for (int f = 0; f < spec.frames; ++f) {
    // advance motion (frame 0 uses launch positions)
    if (f > 0) {
      for (TrackState& t : tracks) {
        t.x += t.vx + (spec.jitter_sigma > 0 ? motion_rng.normal(0, spec.jitter_sigma) : 0.0);
        t.y += t.vy + (spec.jitter_sigma > 0 ? motion_rng.normal(0, spec.jitter_sigma) : 0.0);
        double r = t.radius;
        if (t.x < r + margin) {
          t.x = 2 * (r + margin) - t.x;
          t.vx = -t.vx;
        }
        if (t.x > spec.width - r - margin) {
          t.x = 2 * (spec.width - r - margin) - t.x;
          t.vx = -t.vx;
        }
        if (t.y < r + margin) {
          t.y = 2 * (r + margin) - t.y;
          t.vy = -t.vy;
        }
        if (t.y > spec.height - r - margin) {
          t.y = 2 * (spec.height - r - margin) - t.y;
          t.vy = -t.vy;
        }
      }
    }

    // annotations first: exact ground truth, independent of pixel degradations
    std::vector<FrameAnnotation> anns;
    for (const TrackState& t : tracks) {
      anns.push_back(FrameAnnotation{canonical_box(t), static_cast<int>(t.cls), t.track_id});
    }
    seq.annotations.push_back(std::move(anns));

    std::vector<std::string> tags;

    // pose drift advances before rendering (pixels only)
    for (TrackState& t : tracks) {
      if (deg.p_pose > 0 && degrade_rng.uniform() < deg.p_pose) {
        t.pose_angle += degrade_rng.normal(0, deg.pose_rot_drift);
        t.pose_scale =
            std::clamp(t.pose_scale * std::exp(degrade_rng.normal(0, deg.pose_scale_drift)), 0.8, 1.25);
        if (tags.empty() || tags.back() != "pose") tags.push_back("pose");
      }
    }

    ImageU8 frame = background;
    for (const TrackState& t : tracks) render_track(frame, t);

    if (deg.p_motion_blur > 0 && degrade_rng.uniform() < deg.p_motion_blur) {
      const TrackState* fastest = nullptr;
      for (const TrackState& t : tracks)
        if (!fastest || t.speed > fastest->speed) fastest = &t;
      double sp = std::hypot(fastest->vx, fastest->vy);
      int len = static_cast<int>(std::lround(deg.blur_len_scale * sp));
      len = std::clamp(len | 1, 3, deg.blur_len_max | 1);  // odd
      if (sp > 1e-9) {
        box_blur_directional(frame, fastest->vx / sp, fastest->vy / sp, len);
        tags.push_back("motion_blur");
      }
    }
    if (deg.p_defocus > 0 && degrade_rng.uniform() < deg.p_defocus) {
      gaussian_blur(frame, degrade_rng.uniform(deg.defocus_sigma_min, deg.defocus_sigma_max));
      tags.push_back("defocus");
    }
    if (deg.p_occlusion > 0) {
      for (const TrackState& t : tracks) {
        if (degrade_rng.uniform() >= deg.p_occlusion) continue;
        int count = 1 + degrade_rng.uniform_int(deg.occlusion_count_max);
        for (int k = 0; k < count; ++k) {
          double frac = degrade_rng.uniform(deg.occlusion_size_min, deg.occlusion_size_max);
          double ow = 2 * t.radius * frac, oh = 2 * t.radius * frac;
          double ox = t.x + degrade_rng.uniform(-t.radius, t.radius) - ow / 2;
          double oy = t.y + degrade_rng.uniform(-t.radius, t.radius) - oh / 2;
          uint8_t g = static_cast<uint8_t>(std::lround(degrade_rng.uniform(0.35, 0.65) * 255));
          int x0 = std::clamp(static_cast<int>(ox), 0, spec.width - 1);
          int x1 = std::clamp(static_cast<int>(ox + ow), 0, spec.width - 1);
          int y0 = std::clamp(static_cast<int>(oy), 0, spec.height - 1);
          int y1 = std::clamp(static_cast<int>(oy + oh), 0, spec.height - 1);
          for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
              uint8_t* p = frame.px(y, x);
              p[0] = p[1] = p[2] = g;
            }
        }
        if (tags.empty() || tags.back() != "occlusion") tags.push_back("occlusion");
      }
    }

    seq.frames.push_back(std::move(frame));
    seq.degradation_tags.push_back(std::move(tags));
  }
  return seq;
}

double motion_speed(const VideoSequence& seq, int track_id, int window) {
  // per-frame box lookup for the track
  int T = seq.length();
  std::vector<const BoxF*> boxes(T, nullptr);
  bool found = false;
  for (int f = 0; f < T; ++f) {
    for (const FrameAnnotation& a : seq.annotations[f]) {
      if (a.track_id == track_id) {
        boxes[f] = &a.box;
        found = true;
      }
    }
  }
  if (!found) throw std::invalid_argument("motion_speed: no such track " + std::to_string(track_id));

  double total = 0.0;
  int frames_counted = 0;
  for (int f = 0; f < T; ++f) {
    if (!boxes[f]) continue;
    double acc = 0.0;
    int cnt = 0;
    for (int off = -window; off <= window; ++off) {
      int g = f + off;
      if (off == 0 || g < 0 || g >= T || !boxes[g]) continue;
      acc += iou(*boxes[f], *boxes[g]);
      ++cnt;
    }
    if (cnt > 0) {
      total += acc / cnt;
      ++frames_counted;
    }
  }
  if (frames_counted == 0) return 1.0;  // single-frame track
  return total / frames_counted;
}

MotionGroup motion_group_of(double speed_iou) {
  if (speed_iou > 0.9) return MotionGroup::Slow;
  if (speed_iou >= 0.7) return MotionGroup::Medium;
  return MotionGroup::Fast;
}

const char* motion_group_name(MotionGroup g) {
  switch (g) {
    case MotionGroup::Slow: return "slow";
    case MotionGroup::Medium: return "medium";
    case MotionGroup::Fast: return "fast";
  }
  return "?";
}

const VideoSequence* Dataset::find(const std::string& sequence_id) const {
  for (const VideoSequence& s : sequences)
    if (s.sequence_id == sequence_id) return &s;
  return nullptr;
}

std::vector<const VideoSequence*> Dataset::split(const std::string& name) const {
  const std::vector<std::string>& ids = name == "train" ? train_split : val_split;
  std::vector<const VideoSequence*> out;
  for (const std::string& id : ids) {
    const VideoSequence* s = find(id);
    if (!s) throw std::runtime_error("dataset split references missing sequence " + id);
    out.push_back(s);
  }
  return out;
}

Dataset generate_dataset(uint64_t seed, int train_sequences, int val_sequences, const GenSpec& spec) {
  Dataset ds;
  ds.seed = seed;
  ds.spec = spec;
  int total = train_sequences + val_sequences;
  for (int i = 0; i < total; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "seq_%04d", i);
    std::string id(buf);
    ds.sequences.push_back(generate_sequence(Rng::derive(seed, static_cast<uint64_t>(i)), id, spec));
    if (i < train_sequences)
      ds.train_split.push_back(id);
    else
      ds.val_split.push_back(id);
  }
  return ds;
}

namespace {

json box_to_json(const BoxF& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }
BoxF box_from_json(const json& j) { return BoxF{j.at(0), j.at(1), j.at(2), j.at(3)}; }

}  // namespace

void save_dataset(const Dataset& ds, const std::string& root) {
  fs::create_directories(root);
  json manifest;
  manifest["seed"] = ds.seed;
  manifest["spec"] = ds.spec.to_json();
  manifest["classes"] = class_names();
  manifest["splits"] = json{{"train", ds.train_split}, {"val", ds.val_split}};
  json ids = json::array();
  for (const VideoSequence& s : ds.sequences) ids.push_back(s.sequence_id);
  manifest["sequences"] = ids;
  std::ofstream mf(fs::path(root) / "manifest.json");
  mf << manifest.dump(2) << "\n";
  if (!mf) throw std::runtime_error("save_dataset: cannot write manifest under " + root);

  for (const VideoSequence& s : ds.sequences) {
    fs::path dir = fs::path(root) / s.sequence_id;
    fs::create_directories(dir);
    for (int f = 0; f < s.length(); ++f) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "frame_%05d.png", f);
      write_png((dir / buf).string(), s.frames[f]);
    }
    json ann;
    ann["sequence_id"] = s.sequence_id;
    ann["height"] = s.height;
    ann["width"] = s.width;
    json tracks = json::array();
    for (const TrackMeta& t : s.tracks) {
      tracks.push_back(json{{"track_id", t.track_id},
                            {"class_id", t.class_id},
                            {"speed", t.speed},
                            {"vx0", t.vx0},
                            {"vy0", t.vy0}});
    }
    ann["tracks"] = tracks;
    json frames = json::array();
    for (const auto& fr : s.annotations) {
      json row = json::array();
      for (const FrameAnnotation& a : fr) {
        row.push_back(json{{"box", box_to_json(a.box)}, {"class_id", a.class_id}, {"track_id", a.track_id}});
      }
      frames.push_back(row);
    }
    ann["frames"] = frames;
    ann["degradation_tags"] = s.degradation_tags;
    std::ofstream af(dir / "annotations.json");
    af << ann.dump(2) << "\n";
    if (!af) throw std::runtime_error("save_dataset: cannot write annotations for " + s.sequence_id);
  }
}

Dataset load_dataset(const std::string& root) {
  std::ifstream mf(fs::path(root) / "manifest.json");
  if (!mf) throw std::runtime_error("load_dataset: missing manifest.json under " + root);
  json manifest = json::parse(mf);

  Dataset ds;
  ds.seed = manifest.at("seed");
  ds.spec = GenSpec::from_json(manifest.at("spec"));
  ds.train_split = manifest.at("splits").at("train").get<std::vector<std::string>>();
  ds.val_split = manifest.at("splits").at("val").get<std::vector<std::string>>();

  for (const auto& idj : manifest.at("sequences")) {
    std::string id = idj;
    fs::path dir = fs::path(root) / id;
    std::ifstream af(dir / "annotations.json");
    if (!af) throw std::runtime_error("load_dataset: missing annotations for " + id);
    json ann = json::parse(af);

    VideoSequence s;
    s.sequence_id = id;
    s.height = ann.at("height");
    s.width = ann.at("width");
    for (const auto& tj : ann.at("tracks")) {
      s.tracks.push_back(TrackMeta{tj.at("track_id"), tj.at("class_id"), tj.at("speed"), tj.at("vx0"),
                                   tj.at("vy0")});
    }
    for (const auto& fj : ann.at("frames")) {
      std::vector<FrameAnnotation> row;
      for (const auto& aj : fj) {
        row.push_back(FrameAnnotation{box_from_json(aj.at("box")), aj.at("class_id"), aj.at("track_id")});
      }
      s.annotations.push_back(std::move(row));
    }
    s.degradation_tags = ann.at("degradation_tags").get<std::vector<std::vector<std::string>>>();
    for (size_t f = 0; f < s.annotations.size(); ++f) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "frame_%05d.png", static_cast<int>(f));
      s.frames.push_back(read_png((dir / buf).string()));
    }
    ds.sequences.push_back(std::move(s));
  }
  return ds;
}

}  // namespace dsf
