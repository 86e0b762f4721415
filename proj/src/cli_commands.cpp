#include "dsf/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "dsf/evaluation.hpp"
#include "dsf/svg.hpp"
#include "dsf/synth_video.hpp"
#include "dsf/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dsf::cli {

json merge_config(json base, const json& override_with) {
  if (!override_with.is_object()) return override_with;
  if (!base.is_object()) base = json::object();
  for (auto it = override_with.begin(); it != override_with.end(); ++it) {
    if (it->is_object() && base.contains(it.key())) {
      base[it.key()] = merge_config(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
  return base;
}

int resolve_threads(int requested) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  int threads = requested > 0 ? requested : hw;
  if (const char* env = std::getenv("DSF_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0) threads = std::min(threads, cap);
  }
  return std::max(1, threads);
}

namespace {

void echo_config(const std::string& out_dir, const json& cfg) {
  fs::create_directories(out_dir);
  std::ofstream os(fs::path(out_dir) / "config.json");
  os << cfg.dump(2) << "\n";
  if (!os) throw std::runtime_error("cannot write config echo under " + out_dir);
}

DetectorConfig detector_config_from(const json& cfg) {
  json merged = merge_config(DetectorConfig{}.to_json(), cfg.value("detector", json::object()));
  DetectorConfig det = DetectorConfig::from_json(merged);
  if (cfg.contains("frame_fusion_on")) det.frame_fusion_on = cfg.at("frame_fusion_on");
  if (cfg.contains("instance_fusion_on")) det.instance_fusion_on = cfg.at("instance_fusion_on");
  if (cfg.contains("seed")) det.init_seed = cfg.at("seed").get<uint64_t>();
  return det;
}

TrainConfig train_config_from(const json& cfg) {
  json tj = cfg.value("train", json::object());
  if (cfg.contains("iters") && !tj.contains("total_iters")) {
    int iters = cfg.at("iters");
    tj["total_iters"] = iters;
    if (!tj.contains("lr_drop_iters")) {
      // keep the 5/8 and 7/8 shape of the default schedule
      tj["lr_drop_iters"] = std::vector<int>{iters * 5 / 8, iters * 7 / 8};
    }
  }
  if (cfg.contains("lr") && !tj.contains("base_lr")) tj["base_lr"] = cfg.at("lr");
  json merged = merge_config(TrainConfig{}.to_json(), tj);
  TrainConfig tc = TrainConfig::from_json(merged);
  if (cfg.contains("seed")) tc.seed = cfg.at("seed").get<uint64_t>();
  return tc;
}

InferenceOptions inference_options_from(const json& cfg) {
  InferenceOptions opts;
  int n = cfg.value("num_frames", 9);
  uint64_t seed = cfg.value("eval_seed", cfg.value("seed", 0));
  opts.strategy = SamplingStrategy::parse(cfg.value("sampling", std::string("stochastic")), n, seed);
  opts.threads = resolve_threads(cfg.value("threads", 0));
  return opts;
}

void require_field(const json& cfg, const char* field, const char* cmd) {
  if (!cfg.contains(field)) {
    throw std::invalid_argument(std::string(cmd) + ": missing required option --" + field);
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path);
}

}  // namespace

std::unique_ptr<Detector> load_detector(const std::string& checkpoint) {
  fs::path ckpt(checkpoint), cfg_path;
  if (fs::is_directory(ckpt)) {
    cfg_path = ckpt / "config.json";
    ckpt = ckpt / "checkpoint.dsf1";
  } else {
    cfg_path = ckpt.parent_path() / "config.json";
  }
  if (!fs::exists(ckpt)) throw std::runtime_error("checkpoint not found: " + ckpt.string());
  if (!fs::exists(cfg_path)) throw std::runtime_error("config.json not found beside " + ckpt.string());
  std::ifstream is(cfg_path);
  json cfg = json::parse(is);
  DetectorConfig det_cfg = DetectorConfig::from_json(cfg.at("detector"));
  auto det = std::make_unique<Detector>(det_cfg);
  det->params().load(ckpt.string());
  return det;
}

int cmd_gen(const json& cfg) {
  require_field(cfg, "out", "gen");
  std::string out = cfg.at("out");
  bool force = cfg.value("force", false);
  if (fs::exists(out) && !fs::is_empty(out) && !force) {
    throw std::invalid_argument("gen: output directory " + out + " is not empty (use --force)");
  }

  GenSpec spec;
  spec.frames = cfg.value("frames", spec.frames);
  spec.height = spec.width = cfg.value("size", spec.height);
  spec.min_objects = cfg.value("min_objects", spec.min_objects);
  spec.max_objects = cfg.value("max_objects", spec.max_objects);
  std::string degrade = cfg.value("degrade", std::string("standard"));
  if (degrade == "none") {
    spec.degrade = DegradationSpec::none();
  } else if (degrade == "standard") {
    spec.degrade = DegradationSpec::standard();
  } else {
    throw std::invalid_argument("gen: unknown --degrade '" + degrade + "' (none|standard)");
  }
  uint64_t seed = cfg.value("seed", 7);
  int train_sequences = cfg.value("sequences", 20);
  int val_sequences = cfg.value("val", 5);

  json resolved = cfg;
  resolved["resolved_spec"] = spec.to_json();
  echo_config(out, resolved);

  Dataset ds = generate_dataset(seed, train_sequences, val_sequences, spec);
  save_dataset(ds, out);
  std::cout << "wrote " << ds.sequences.size() << " sequences (" << train_sequences << " train, "
            << val_sequences << " val) under " << out << "\n";
  return 0;
}

int cmd_train(const json& cfg) {
  require_field(cfg, "data", "train");
  require_field(cfg, "out", "train");
  std::string data = cfg.at("data"), out = cfg.at("out");
  if (!fs::exists(fs::path(data) / "manifest.json")) {
    throw std::invalid_argument("train: no dataset manifest under " + data);
  }
  DetectorConfig det_cfg = detector_config_from(cfg);
  TrainConfig train_cfg = train_config_from(cfg);

  json resolved = cfg;
  resolved["detector"] = det_cfg.to_json();
  resolved["train"] = train_cfg.to_json();
  echo_config(out, resolved);

  Dataset ds = load_dataset(data);
  Detector det(det_cfg);
  TrainResult result = train(det, ds, train_cfg, out);
  std::cout << "trained " << train_cfg.total_iters << " iters; checkpoint at " << result.checkpoint_path
            << "\n";
  if (!result.log.empty()) {
    std::cout << "final loss " << result.log.back().loss.total << "\n";
  }
  return 0;
}

int cmd_eval(const json& cfg) {
  require_field(cfg, "data", "eval");
  require_field(cfg, "checkpoint", "eval");
  require_field(cfg, "out", "eval");
  std::string data = cfg.at("data"), out = cfg.at("out");
  std::string split = cfg.value("split", std::string("val"));

  auto det = load_detector(cfg.at("checkpoint"));
  InferenceOptions opts = inference_options_from(cfg);

  json resolved = cfg;
  resolved["detector"] = det->config().to_json();
  resolved["sampling_resolved"] = opts.strategy.describe();
  echo_config(out, resolved);

  Dataset ds = load_dataset(data);
  auto seqs = ds.split(split);
  if (seqs.empty()) throw std::invalid_argument("eval: split '" + split + "' is empty");

  std::vector<DetRecord> dets = run_inference(*det, seqs, opts);
  write_detections_jsonl((fs::path(out) / "detections.jsonl").string(), dets);

  EvalReport report = evaluate(dets, seqs, cfg.value("motion_window", 10));
  report.config_echo = resolved;
  std::ofstream js(fs::path(out) / "report.json");
  js << report.to_json().dump(2) << "\n";
  write_text((fs::path(out) / "report.txt").string(), report.table());
  std::cout << report.table();

  if (cfg.value("plot", false)) {
    auto gts = collect_gts(seqs);
    for (int c = 0; c < kNumClasses; ++c) {
      std::vector<DetRecord> cd;
      for (const DetRecord& d : dets)
        if (d.class_id == c) cd.push_back(d);
      std::vector<GtEntry> cg;
      for (const GtEntry& g : gts)
        if (g.class_id == c) cg.push_back(g);
      if (cg.empty()) continue;
      PrCurve curve = pr_curve(std::move(cd), cg);
      SvgSeries series{class_names()[c], {}};
      series.points.emplace_back(0.0, curve.precision.empty() ? 1.0 : curve.precision.front());
      for (size_t i = 0; i < curve.recall.size(); ++i) {
        series.points.emplace_back(curve.recall[i], curve.precision[i]);
      }
      write_line_chart_svg((fs::path(out) / ("pr_" + class_names()[c] + ".svg")).string(),
                           "precision-recall: " + class_names()[c], "recall", "precision", {series});
    }
  }
  return 0;
}

int cmd_ablate(const json& cfg) {
  require_field(cfg, "data", "ablate");
  require_field(cfg, "out", "ablate");
  std::string data = cfg.at("data"), out = cfg.at("out");

  std::vector<uint64_t> seeds = cfg.value("seeds", std::vector<uint64_t>{11, 12, 13});
  DetectorConfig det_cfg = detector_config_from(cfg);
  TrainConfig train_cfg = train_config_from(cfg);
  InferenceOptions eval_opts = inference_options_from(cfg);

  json resolved = cfg;
  resolved["detector"] = det_cfg.to_json();
  resolved["train"] = train_cfg.to_json();
  resolved["seeds"] = seeds;
  echo_config(out, resolved);

  Dataset ds = load_dataset(data);
  int parallel = resolve_threads(cfg.value("threads", 0));

  json per_seed = json::array();
  // name -> [overall, slow, medium, fast] accumulators
  std::map<std::string, std::array<double, 4>> sums;
  std::map<std::string, std::array<int, 4>> counts;
  for (uint64_t seed : seeds) {
    DetectorConfig dc = det_cfg;
    dc.init_seed = seed;
    TrainConfig tc = train_cfg;
    tc.seed = seed;
    std::string seed_dir = (fs::path(out) / ("seed_" + std::to_string(seed))).string();
    AblationResult res = ablate(ds, dc, tc, eval_opts, seed_dir, parallel);
    per_seed.push_back(json{{"seed", seed}, {"runs", res.to_json()}});
    std::cout << "seed " << seed << "\n" << res.table() << "\n";
    for (const AblationRun& run : res.runs) {
      auto& s = sums[run.name];
      auto& c = counts[run.name];
      auto acc = [&](int slot, const std::optional<double>& v) {
        if (v) {
          s[slot] += *v;
          c[slot] += 1;
        }
      };
      acc(0, run.report.map);
      acc(1, run.report.map_slow);
      acc(2, run.report.map_medium);
      acc(3, run.report.map_fast);
    }
  }

  json mean;
  for (const auto& [name, s] : sums) {
    json row;
    const auto& c = counts[name];
    const char* slots[4] = {"mAP", "mAP_slow", "mAP_medium", "mAP_fast"};
    for (int i = 0; i < 4; ++i)
      if (c[i] > 0) row[slots[i]] = s[i] / c[i];
    mean[name] = row;
  }
  json summary{{"per_seed", per_seed}, {"mean", mean}};
  std::ofstream js(fs::path(out) / "summary.json");
  js << summary.dump(2) << "\n";

  std::ostringstream table;
  table << "mean over " << seeds.size() << " seeds\n";
  table << "variant        ";
  const char* names[4] = {"baseline", "frame", "instance", "dual"};
  for (const char* n : names) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%12s", n);
    table << buf;
  }
  table << "\n";
  const char* slots[4] = {"mAP", "mAP_slow", "mAP_medium", "mAP_fast"};
  for (const char* slot : slots) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-14s ", slot);
    table << buf;
    for (const char* n : names) {
      if (mean.contains(n) && mean[n].contains(slot))
        std::snprintf(buf, sizeof(buf), "%12.4f", mean[n][slot].get<double>());
      else
        std::snprintf(buf, sizeof(buf), "%12s", "-");
      table << buf;
    }
    table << "\n";
  }
  write_text((fs::path(out) / "summary.txt").string(), table.str());
  std::cout << table.str();
  return 0;
}

int cmd_sweep(const json& cfg) {
  require_field(cfg, "data", "sweep");
  require_field(cfg, "checkpoint", "sweep");
  require_field(cfg, "out", "sweep");
  std::string data = cfg.at("data"), out = cfg.at("out");

  std::vector<int> frames_list = cfg.value("frames_list", std::vector<int>{5, 9, 13, 17, 21});
  std::vector<int> strides = cfg.value("strides", std::vector<int>{1, 5, 10, 20});
  uint64_t seed = cfg.value("seed", 0);
  int threads = resolve_threads(cfg.value("threads", 0));

  auto det = load_detector(cfg.at("checkpoint"));
  json resolved = cfg;
  resolved["detector"] = det->config().to_json();
  echo_config(out, resolved);

  Dataset ds = load_dataset(data);
  auto seqs = ds.split("val");
  if (seqs.empty()) throw std::invalid_argument("sweep: val split is empty");

  json rows = json::array();
  auto run_one = [&](const SamplingStrategy& strategy, int n, int s) {
    InferenceOptions opts;
    opts.strategy = strategy;
    opts.threads = threads;
    std::vector<DetRecord> dets = run_inference(*det, seqs, opts);
    EvalReport report = evaluate(dets, seqs);
    rows.push_back(json{{"strategy", strategy.kind == SamplingStrategy::Kind::FixedInterval ? "fixed"
                                                                                            : "stochastic"},
                        {"n", n},
                        {"s", s},
                        {"mAP", report.map}});
    std::cout << strategy.describe() << " -> mAP " << report.map << "\n";
    return report.map;
  };

  SvgSeries fixed_n{"fixed s=1", {}}, stoch_n{"stochastic", {}}, stride_curve{"n=21", {}};
  for (int n : frames_list) {
    fixed_n.points.emplace_back(n, run_one(SamplingStrategy::fixed_interval(n, 1), n, 1));
  }
  int n_max = *std::max_element(frames_list.begin(), frames_list.end());
  for (int s : strides) {
    stride_curve.points.emplace_back(s, run_one(SamplingStrategy::fixed_interval(n_max, s), n_max, s));
  }
  for (int n : frames_list) {
    stoch_n.points.emplace_back(n, run_one(SamplingStrategy::stochastic(n, seed), n, 0));
  }

  std::ofstream js(fs::path(out) / "sweep.json");
  js << json{{"rows", rows}}.dump(2) << "\n";
  write_line_chart_svg((fs::path(out) / "map_vs_n_fixed.svg").string(), "mAP vs number of test frames",
                       "n", "mAP", {fixed_n});
  write_line_chart_svg((fs::path(out) / "map_vs_stride.svg").string(), "mAP vs sampling stride", "stride",
                       "mAP", {stride_curve});
  write_line_chart_svg((fs::path(out) / "map_vs_n_stochastic.svg").string(),
                       "mAP vs number of shuffled test frames", "n", "mAP", {stoch_n});
  return 0;
}

namespace {

void dump_matrix_csv(const std::string& path, const Tensor& m, const std::vector<std::string>& row_meta,
                     const std::string& meta_header) {
  if (!m.defined()) return;
  std::ofstream os(path);
  os << meta_header;
  for (int j = 0; j < m.dim(1); ++j) os << ",v" << j;
  os << "\n";
  for (int i = 0; i < m.dim(0); ++i) {
    os << row_meta[i];
    char buf[32];
    for (int j = 0; j < m.dim(1); ++j) {
      std::snprintf(buf, sizeof(buf), ",%.12g", m.data()[static_cast<size_t>(i) * m.dim(1) + j]);
      os << buf;
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("cannot write " + path);
}

}  // namespace

int cmd_inspect(const json& cfg) {
  require_field(cfg, "data", "inspect");
  require_field(cfg, "checkpoint", "inspect");
  require_field(cfg, "out", "inspect");
  std::string data = cfg.at("data"), out = cfg.at("out");

  auto det = load_detector(cfg.at("checkpoint"));
  Dataset ds = load_dataset(data);

  std::string seq_id = cfg.value("sequence", std::string());
  if (seq_id.empty()) {
    if (ds.val_split.empty()) throw std::invalid_argument("inspect: dataset has no val split");
    seq_id = ds.val_split.front();
  }
  const VideoSequence* seq = ds.find(seq_id);
  if (!seq) throw std::invalid_argument("inspect: no sequence " + seq_id);
  int frame = cfg.value("frame", seq->length() / 2);
  if (frame < 0 || frame >= seq->length()) throw std::invalid_argument("inspect: frame out of range");

  int n = cfg.value("num_frames", 9);
  uint64_t seed = cfg.value("seed", 0);
  SamplingStrategy strategy =
      SamplingStrategy::parse(cfg.value("sampling", std::string("stochastic")), n, seed);

  json resolved = cfg;
  resolved["sequence"] = seq_id;
  resolved["frame"] = frame;
  resolved["detector"] = det->config().to_json();
  echo_config(out, resolved);

  std::vector<int> support = sample_support(strategy, seq->length(), frame, 0);
  std::vector<const ImageU8*> frames;
  frames.push_back(&seq->frames[frame]);
  for (int s : support) frames.push_back(&seq->frames[s]);

  NoGradGuard ng;
  auto result = det->detect(frames, 0, true);

  // frame similarity rows carry (frame, channel) origins
  if (result.frame_sim.s.defined()) {
    int d = det->config().backbone.feature_dim();
    std::vector<std::string> meta;
    for (int i = 0; i < result.frame_sim.s.dim(0); ++i) {
      meta.push_back(std::to_string(i) + "," + std::to_string(i / d) + "," + std::to_string(i % d));
    }
    dump_matrix_csv((fs::path(out) / "frame_similarity.csv").string(), result.frame_sim.s, meta,
                    "row,frame,channel");
  }
  std::vector<std::string> prop_meta;
  for (int i = 0; i < result.proposals.size(); ++i) {
    prop_meta.push_back(std::to_string(i) + "," + std::to_string(result.proposals.boxes[i].frame_index));
  }
  auto dump_block = [&](const InstanceSimilarity& sim, const std::string& suffix) {
    dump_matrix_csv((fs::path(out) / ("instance_z" + suffix + ".csv")).string(), sim.z, prop_meta,
                    "proposal,frame");
    dump_matrix_csv((fs::path(out) / ("instance_r" + suffix + ".csv")).string(), sim.r, prop_meta,
                    "proposal,frame");
    dump_matrix_csv((fs::path(out) / ("instance_s" + suffix + ".csv")).string(), sim.s, prop_meta,
                    "proposal,frame");
  };
  dump_block(result.sim1, "1");
  dump_block(result.sim2, "2");

  std::vector<DetRecord> dets;
  for (const Detection& d : result.detections) {
    dets.push_back(DetRecord{seq_id, frame, d.class_id, d.confidence, d.box});
  }
  write_detections_jsonl((fs::path(out) / "detections.jsonl").string(), dets);
  std::cout << "inspect wrote matrices and " << dets.size() << " detections under " << out << "\n";
  return 0;
}

}  // namespace dsf::cli
