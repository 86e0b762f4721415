// Acceptance runner: executes every acceptance criterion end to end and
// prints one PASS/FAIL line per criterion. Heavy trend criteria train the
// four ablation variants on the standard seeded synthetic benchmark.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dsf/cli.hpp"
#include "dsf/evaluation.hpp"
#include "dsf/frame_fusion.hpp"
#include "dsf/instance_fusion.hpp"
#include "dsf/synth_video.hpp"
#include "dsf/training.hpp"

#include "support/grad_suite.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace dsf;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " | " << name << " | " << detail << "\n" << std::flush;
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------- gradients

void criterion_gradient_suite() {
  auto start = Clock::now();
  auto reports = test::run_gradient_suite(20);
  double elapsed = seconds_since(start);
  bool ok = elapsed < 120.0;
  double worst = 0.0;
  std::string broken;
  for (const auto& rep : reports) {
    worst = std::max(worst, rep.max_rel_err);
    if (!rep.ok) {
      ok = false;
      broken += rep.op + " (" + rep.detail + "); ";
    }
  }
  std::ostringstream os;
  os << reports.size() << " ops x 20 seeded cases, max rel err " << worst << ", " << elapsed << " s";
  if (!broken.empty()) os << "; failed: " << broken;
  report("gradient-suite", ok, os.str());
}

// ---------------------------------------------------------- fusion invariants

void criterion_fusion_invariants() {
  bool ok = true;
  std::ostringstream why;

  for (uint64_t seed = 1; seed <= 10 && ok; ++seed) {
    Rng rng(seed);
    // frame level
    int n = 2 + rng.uniform_int(2), d = 1 + rng.uniform_int(2), h = 2, w = 2;
    ParamStore store;
    FrameFusionParams fp = make_frame_fusion_params(store, "ff", h * w, 3, rng);
    for (double& v : fp.theta.w.mutable_data()) v = rng.uniform(-0.5, 0.5);
    Tensor f = test::rand_tensor({n, d, h, w}, rng, -1, 1, false);
    ChannelBank bank = split_channels(FrameFeatureBatch{f, 0});
    FrameSimilarity sim = frame_similarity(channel_affinity(bank, fp));
    for (int i = 0; i < n * d && ok; ++i) {
      double row = 0;
      for (int j = 0; j < n * d; ++j) {
        double v = sim.s.at({i, j});
        if (v <= 0.0) {
          ok = false;
          why << "non-positive S^F entry; ";
        }
        row += v;
      }
      if (std::fabs(row - 1.0) > 1e-8) {
        ok = false;
        why << "S^F row sum off by " << std::fabs(row - 1.0) << "; ";
      }
    }
    // support-frame permutation: test frame fixed within 1e-10
    FrameFeatureBatch fused = fuse_frames(bank, sim, fp);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    if (n > 2) std::swap(perm[1], perm[n - 1]);
    size_t frame_len = static_cast<size_t>(d) * h * w;
    std::vector<double> permuted(f.data().size());
    for (int i = 0; i < n; ++i) {
      std::copy_n(f.data().begin() + perm[i] * frame_len, frame_len, permuted.begin() + i * frame_len);
    }
    ChannelBank bank2 = split_channels(FrameFeatureBatch{Tensor::from_data({n, d, h, w}, permuted), 0});
    FrameFeatureBatch fused2 = fuse_frames(bank2, frame_similarity(channel_affinity(bank2, fp)), fp);
    for (size_t t = 0; t < frame_len && ok; ++t) {
      if (std::fabs(fused.features.data()[t] - fused2.features.data()[t]) > 1e-10) {
        ok = false;
        why << "support permutation moved the test frame; ";
      }
    }
    // zero-theta bitwise identity
    ParamStore store_zero;
    FrameFusionParams fz = make_frame_fusion_params(store_zero, "fz", h * w, 3, rng);
    ChannelBank bank3 = split_channels(FrameFeatureBatch{f, 0});
    FrameFeatureBatch fused3 = fuse_frames(bank3, frame_similarity(channel_affinity(bank3, fz)), fz);
    if (fused3.features.data() != f.data()) {
      ok = false;
      why << "zero-theta not bit-exact; ";
    }

    // instance level
    int m = 3 + rng.uniform_int(4);
    ParamStore istore;
    InstanceFusionParams ip = make_instance_fusion_params(istore, "if", 5, 3, 66, rng);
    for (double& v : ip.gamma.w.mutable_data()) v = rng.uniform(-0.4, 0.4);
    for (double& v : ip.geo_psi.w.mutable_data()) v = rng.uniform(-0.3, 0.3);
    ProposalSet props;
    for (int i = 0; i < m; ++i) {
      double x1 = rng.uniform_int(200) * 0.25, y1 = rng.uniform_int(200) * 0.25;
      double bw = (16 + rng.uniform_int(120)) * 0.25, bh = (16 + rng.uniform_int(120)) * 0.25;
      props.boxes.push_back(Proposal{BoxF{x1, y1, x1 + bw, y1 + bh}, 0, 1.0});
    }
    Tensor q = test::rand_tensor({m, 5}, rng, -1, 1, false);
    InstanceSimilarity isim;
    RoIFeatureSet fused_q = instance_fusion_block(RoIFeatureSet{q}, props, ip, &isim);
    for (int k = 0; k < m && ok; ++k) {
      double row = 0;
      for (int l = 0; l < m; ++l) {
        double v = isim.s.at({k, l});
        if (v <= 0.0) {
          ok = false;
          why << "non-positive S^I entry; ";
        }
        row += v;
      }
      if (std::fabs(row - 1.0) > 1e-8) {
        ok = false;
        why << "S^I row sum off; ";
      }
    }
    // proposal permutation invariance within 1e-10
    std::vector<int> pperm(m);
    for (int i = 0; i < m; ++i) pperm[i] = (i + 1) % m;
    ProposalSet props2;
    std::vector<double> q2(q.data().size());
    for (int i = 0; i < m; ++i) {
      props2.boxes.push_back(props.boxes[pperm[i]]);
      std::copy_n(q.data().begin() + pperm[i] * 5, 5, q2.begin() + i * 5);
    }
    RoIFeatureSet fused_q2 =
        instance_fusion_block(RoIFeatureSet{Tensor::from_data({m, 5}, q2)}, props2, ip);
    for (int i = 0; i < m && ok; ++i) {
      for (int t = 0; t < 5; ++t) {
        if (std::fabs(fused_q2.q.at({i, t}) - fused_q.q.at({pperm[i], t})) > 1e-10) {
          ok = false;
          why << "proposal permutation not invariant; ";
          break;
        }
      }
    }
    // zero-gamma bitwise identity
    ParamStore zstore;
    InstanceFusionParams iz = make_instance_fusion_params(zstore, "iz", 5, 3, 66, rng);
    for (double& v : iz.geo_psi.w.mutable_data()) v = rng.uniform(-0.3, 0.3);
    RoIFeatureSet fused_zero = instance_fusion_block(RoIFeatureSet{q}, props, iz);
    if (fused_zero.q.data() != q.data()) {
      ok = false;
      why << "zero-gamma not bit-exact; ";
    }
    // geometric translation bit-exact, uniform scale within 1e-10
    Tensor r1 = geometric_affinity(props, ip);
    ProposalSet shifted = props;
    for (Proposal& b : shifted.boxes) {
      b.box.x1 += 100;
      b.box.x2 += 100;
      b.box.y1 += 37;
      b.box.y2 += 37;
    }
    if (geometric_affinity(shifted, ip).impl()->data != r1.impl()->data) {
      ok = false;
      why << "translation not bit-exact; ";
    }
    ProposalSet scaled = props;
    for (Proposal& b : scaled.boxes) {
      b.box.x1 *= 3;
      b.box.x2 *= 3;
      b.box.y1 *= 3;
      b.box.y2 *= 3;
    }
    Tensor r3 = geometric_affinity(scaled, ip);
    for (size_t i = 0; i < r1.data().size(); ++i) {
      if (std::fabs(r1.data()[i] - r3.data()[i]) > 1e-10) {
        ok = false;
        why << "uniform scale drift " << std::fabs(r1.data()[i] - r3.data()[i]) << "; ";
        break;
      }
    }
  }
  report("fusion-invariants", ok, ok ? "10 seeded instances, all invariants hold" : why.str());
}

// --------------------------------------------------------- oracle equivalence

void criterion_oracle_equivalence() {
  int cases = 0;
  double worst = 0.0;
  bool ok = true;
  std::ostringstream why;

  for (uint64_t seed = 100; seed < 160; ++seed) {
    Rng rng(seed);
    int n = 1 + rng.uniform_int(4), d = 1 + rng.uniform_int(2);
    if (n * d > 8) n = std::max(1, 8 / d);
    int h = 1 + rng.uniform_int(2), w = 2;
    ParamStore store;
    FrameFusionParams p = make_frame_fusion_params(store, "ff", h * w, 3, rng);
    for (double& v : p.theta.w.mutable_data()) v = rng.uniform(-0.5, 0.5);
    Tensor f = test::rand_tensor({n, d, h, w}, rng, -1.5, 1.5, false);
    ChannelBank bank = split_channels(FrameFeatureBatch{f, 0});
    Tensor a = channel_affinity(bank, p);
    FrameSimilarity sim = frame_similarity(a);
    FrameFeatureBatch fused = fuse_frames(bank, sim, p);

    test::Mat rows(n * d, std::vector<double>(h * w));
    for (int i = 0; i < n * d; ++i)
      for (int t = 0; t < h * w; ++t) rows[i][t] = bank.rows.at({i, t});
    auto oracle = test::naive_frame_fusion(rows, test::naive_linear_of(p.phi),
                                           test::naive_linear_of(p.varphi), test::naive_linear_of(p.theta));
    ChannelBank out_bank = split_channels(fused);
    for (int i = 0; i < n * d; ++i) {
      for (int j = 0; j < n * d; ++j) {
        worst = std::max(worst, std::fabs(a.at({i, j}) - oracle.affinity[i][j]));
        worst = std::max(worst, std::fabs(sim.s.at({i, j}) - oracle.similarity[i][j]));
      }
      for (int t = 0; t < h * w; ++t) {
        worst = std::max(worst, std::fabs(out_bank.rows.at({i, t}) - oracle.enhanced[i][t]));
      }
    }
    ++cases;
  }

  for (uint64_t seed = 200; seed < 260; ++seed) {
    Rng rng(seed);
    int m = 1 + rng.uniform_int(8);
    int d_roi = 3 + rng.uniform_int(3);
    ParamStore store;
    InstanceFusionParams p = make_instance_fusion_params(store, "if", d_roi, 3, 6, rng);
    for (double& v : p.gamma.w.mutable_data()) v = rng.uniform(-0.4, 0.4);
    for (double& v : p.geo_psi.w.mutable_data()) v = rng.uniform(-0.3, 0.3);
    ProposalSet props;
    std::vector<BoxF> boxes;
    for (int i = 0; i < m; ++i) {
      double x1 = rng.uniform(0, 50), y1 = rng.uniform(0, 50);
      BoxF b{x1, y1, x1 + rng.uniform(3, 30), y1 + rng.uniform(3, 30)};
      props.boxes.push_back(Proposal{b, 0, 1.0});
      boxes.push_back(b);
    }
    Tensor q = test::rand_tensor({m, d_roi}, rng, -1, 1, false);
    InstanceSimilarity sim;
    RoIFeatureSet fused = instance_fusion_block(RoIFeatureSet{q}, props, p, &sim);

    test::Mat qm(m, std::vector<double>(d_roi));
    for (int k = 0; k < m; ++k)
      for (int t = 0; t < d_roi; ++t) qm[k][t] = q.at({k, t});
    auto oracle =
        test::naive_instance_fusion(qm, boxes, test::naive_linear_of(p.xi), test::naive_linear_of(p.zeta),
                                    test::naive_linear_of(p.gamma), test::naive_linear_of(p.geo_psi), p.d_g);
    for (int k = 0; k < m; ++k) {
      for (int l = 0; l < m; ++l) {
        worst = std::max(worst, std::fabs(sim.z.at({k, l}) - oracle.z[k][l]));
        worst = std::max(worst, std::fabs(sim.r.at({k, l}) - oracle.r[k][l]));
        worst = std::max(worst, std::fabs(sim.s.at({k, l}) - oracle.s[k][l]));
      }
      for (int t = 0; t < d_roi; ++t) {
        worst = std::max(worst, std::fabs(fused.q.at({k, t}) - oracle.fused[k][t]));
      }
    }
    ++cases;
  }
  if (worst > 1e-12) {
    ok = false;
    why << "max abs deviation " << worst;
  }
  std::ostringstream os;
  os << cases << " seeded cases (n*d <= 8, m <= 8), max abs deviation " << worst;
  report("oracle-equivalence", ok, ok ? os.str() : why.str());
}

// ---------------------------------------------------------- evaluator fixture

void criterion_evaluator_fixture() {
  bool ok = true;
  std::ostringstream why;

  if (std::fabs(iou(BoxF{0, 0, 2, 2}, BoxF{1, 1, 3, 3}) - 1.0 / 7) > 1e-12) {
    ok = false;
    why << "iou 1/7 case failed; ";
  }

  // hand-enumerated PR curve
  std::vector<GtEntry> gts = {{"s", 0, 0, {0, 0, 10, 10}, false}, {"s", 0, 0, {20, 20, 30, 30}, false}};
  std::vector<DetRecord> dets = {{"s", 0, 0, 0.9, {0, 0, 10, 10}},
                                 {"s", 0, 0, 0.8, {40, 40, 50, 50}},
                                 {"s", 0, 0, 0.7, {20, 20, 30, 30}}};
  if (std::fabs(average_precision(dets, gts) - 5.0 / 6) > 1e-9) {
    ok = false;
    why << "hand-enumerated PR fixture failed; ";
  }
  std::vector<DetRecord> perfect = {{"s", 0, 0, 0.9, {0, 0, 10, 10}},
                                    {"s", 0, 0, 0.8, {20, 20, 30, 30}}};
  if (std::fabs(average_precision(perfect, gts) - 1.0) > 1e-9) {
    ok = false;
    why << "perfect-detections fixture failed; ";
  }

  // 5-sequence fixture vs the independently written reference evaluator
  GenSpec spec;
  spec.frames = 12;
  spec.degrade = DegradationSpec::none();
  Dataset ds = generate_dataset(4242, 0, 5, spec);
  auto seqs = ds.split("val");
  Rng rng(31337);
  std::vector<DetRecord> sim_dets;
  for (const VideoSequence* seq : seqs) {
    for (int f = 0; f < seq->length(); ++f) {
      for (const FrameAnnotation& a : seq->annotations[f]) {
        // jittered true positives with varying quality
        if (rng.uniform() < 0.8) {
          double jx = rng.uniform(-6, 6), jy = rng.uniform(-6, 6);
          sim_dets.push_back(DetRecord{seq->sequence_id, f, a.class_id, rng.uniform(0.3, 1.0),
                                       BoxF{a.box.x1 + jx, a.box.y1 + jy, a.box.x2 + jx, a.box.y2 + jy}});
        }
        // the occasional wrong-class duplicate
        if (rng.uniform() < 0.15) {
          sim_dets.push_back(DetRecord{seq->sequence_id, f, rng.uniform_int(kNumClasses),
                                       rng.uniform(0.1, 0.9), a.box});
        }
      }
      // random false positives
      if (rng.uniform() < 0.4) {
        double x = rng.uniform(0, 100), y = rng.uniform(0, 100);
        sim_dets.push_back(DetRecord{seq->sequence_id, f, rng.uniform_int(kNumClasses),
                                     rng.uniform(0.05, 0.8),
                                     BoxF{x, y, x + rng.uniform(8, 30), y + rng.uniform(8, 30)}});
      }
    }
  }
  EvalReport mine = evaluate(sim_dets, seqs);
  double ref = test::reference_map(sim_dets, collect_gts(seqs), kNumClasses);
  if (std::fabs(mine.map - ref) > 1e-6) {
    ok = false;
    why << "evaluator disagrees with the reference script: " << mine.map << " vs " << ref << "; ";
  }
  std::ostringstream os;
  os << "hand-enumerated fixtures exact; 5-sequence fixture mAP " << mine.map << " vs reference " << ref;
  report("evaluator-fixture", ok, ok ? os.str() : why.str());
}

// ------------------------------------------------------------- trend criteria

struct TrendConfig {
  uint64_t bench_seed = 7;
  int train_sequences = 20, val_sequences = 5, frames = 40;
  std::vector<uint64_t> seeds = {11, 12, 13};
  int iters = 6000;
  double lr = 0.01;
  int eval_frames = 9;
  std::vector<int> sweep_frames = {5, 9, 13, 17, 21};
};

struct TrendOutcome {
  std::map<std::string, double> mean_map;       // variant -> mean mAP
  std::map<std::string, double> mean_slow, mean_fast;
  std::string reference_checkpoint;             // dual run of the first seed
  std::vector<TrainLogRow> reference_log;
  double hours = 0.0;
};

TrendOutcome run_trend_block(const fs::path& work, int threads) {
  auto start = Clock::now();
  TrendConfig tc;

  Dataset bench = generate_dataset(tc.bench_seed, tc.train_sequences, tc.val_sequences, GenSpec{});
  TrendOutcome out;

  std::map<std::string, std::vector<double>> maps, slows, fasts;
  for (uint64_t seed : tc.seeds) {
    DetectorConfig dcfg;
    dcfg.init_seed = seed;
    TrainConfig train_cfg;
    train_cfg.total_iters = tc.iters;
    train_cfg.lr_drop_iters = {tc.iters * 5 / 8, tc.iters * 7 / 8};
    train_cfg.base_lr = tc.lr;
    train_cfg.seed = seed;
    InferenceOptions eval_opts;
    eval_opts.strategy = SamplingStrategy::stochastic(tc.eval_frames, 0);
    eval_opts.threads = threads;

    fs::path seed_dir = work / ("seed_" + std::to_string(seed));
    AblationResult res = ablate(bench, dcfg, train_cfg, eval_opts, seed_dir.string(), threads);
    for (const AblationRun& run : res.runs) {
      maps[run.name].push_back(run.report.map);
      if (run.report.map_slow) slows[run.name].push_back(*run.report.map_slow);
      if (run.report.map_fast) fasts[run.name].push_back(*run.report.map_fast);
      if (run.name == "dual" && seed == tc.seeds[0]) {
        out.reference_checkpoint = run.checkpoint_path;
      }
    }
    std::cout << "  [trend] seed " << seed << "\n" << res.table() << std::flush;
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / v.size();
  };
  for (auto& [name, v] : maps) out.mean_map[name] = mean(v);
  for (auto& [name, v] : slows) out.mean_slow[name] = mean(v);
  for (auto& [name, v] : fasts) out.mean_fast[name] = mean(v);

  // reference loss log for the halving check
  {
    std::ifstream is(fs::path(out.reference_checkpoint).parent_path() / "metrics.csv");
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
      TrainLogRow row;
      std::sscanf(line.c_str(), "%d,%lf", &row.iter, &row.loss.total);
      out.reference_log.push_back(row);
    }
  }
  out.hours = seconds_since(start) / 3600.0;
  return out;
}

void criterion_trends(const fs::path& work, int threads) {
  TrendOutcome t = run_trend_block(work, threads);

  {
    double dual = t.mean_map["dual"], base = t.mean_map["baseline"];
    double frame = t.mean_map["frame"], inst = t.mean_map["instance"];
    bool ok = dual > base && dual >= std::max(frame, inst) - 0.01 && t.hours < 2.0;
    std::ostringstream os;
    os << "mean over 3 seeds: baseline " << base << ", frame " << frame << ", instance " << inst
       << ", dual " << dual << "; " << t.hours << " h";
    report("ablation-trend", ok, os.str());
  }
  {
    double gain_fast = t.mean_fast["dual"] - t.mean_fast["baseline"];
    double gain_slow = t.mean_slow["dual"] - t.mean_slow["baseline"];
    bool ok = gain_fast >= gain_slow;
    std::ostringstream os;
    os << "dual-baseline gain: fast " << gain_fast << " vs slow " << gain_slow;
    report("motion-group-trend", ok, os.str());
  }
  {
    // reference-run loss halving over the first 2000 iterations
    double first = 0.0, at2000 = 0.0;
    for (const TrainLogRow& row : t.reference_log) {
      if (row.iter == 100) first = row.loss.total;
      if (row.iter == 2000) at2000 = row.loss.total;
    }
    bool ok = first > 0 && at2000 > 0 && at2000 <= 0.5 * first;
    std::ostringstream os;
    os << "dual reference run: loss " << first << " at iter 100 vs " << at2000 << " at iter 2000";
    report("train-loss-halving", ok, os.str());
  }
  {
    // sampling trend on the reference checkpoint
    TrendConfig tc;
    Dataset bench = generate_dataset(tc.bench_seed, tc.train_sequences, tc.val_sequences, GenSpec{});
    auto det = cli::load_detector(t.reference_checkpoint);
    std::vector<double> curve;
    std::ostringstream os;
    os << "reference-checkpoint mAP:";
    for (int n : tc.sweep_frames) {
      InferenceOptions opts;
      opts.strategy = SamplingStrategy::stochastic(n, 0);
      opts.threads = threads;
      auto dets = run_inference(*det, bench.split("val"), opts);
      EvalReport rep = evaluate(dets, bench.split("val"));
      curve.push_back(rep.map);
      os << " n=" << n << ":" << rep.map;
    }
    bool ok = true;
    for (size_t i = 1; i < curve.size(); ++i) {
      if (curve[i] < curve[i - 1] - 0.01) ok = false;
    }
    report("sampling-trend", ok, os.str());
  }
}

// ---------------------------------------------------------------- determinism

std::map<std::string, std::vector<char>> read_tree(const fs::path& root) {
  std::map<std::string, std::vector<char>> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream is(entry.path(), std::ios::binary);
    files[fs::relative(entry.path(), root).string()] =
        std::vector<char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  }
  return files;
}

void criterion_determinism(const fs::path& work) {
  bool ok = true;
  std::ostringstream why;

  // gen: identical seed -> byte-identical trees
  GenSpec spec;
  spec.frames = 6;
  fs::path g = work / "det_gen";
  Dataset a = generate_dataset(99, 2, 1, spec);
  save_dataset(a, (g / "a").string());
  Dataset b = generate_dataset(99, 2, 1, spec);
  save_dataset(b, (g / "b").string());
  auto ta = read_tree(g / "a"), tb = read_tree(g / "b");
  if (ta != tb) {
    ok = false;
    why << "gen trees differ; ";
  }

  // train: identical seed -> identical loss log, byte for byte
  DetectorConfig dcfg;
  dcfg.backbone.stage_channels = {4, 6, 8};
  dcfg.backbone.resize_target = 64;
  dcfg.embed_width = 8;
  dcfg.d_roi = 16;
  dcfg.d_g = 6;
  dcfg.rpn_channels = 8;
  dcfg.k_pre = 24;
  dcfg.k_post = 6;
  dcfg.anchor_scales = {14, 24};
  dcfg.anchor_aspects = {1.0};
  dcfg.init_seed = 9;
  TrainConfig tcfg;
  tcfg.total_iters = 30;
  tcfg.lr_drop_iters = {20, 25};
  tcfg.base_lr = 0.003;
  tcfg.seed = 9;
  tcfg.log_every = 5;
  tcfg.rpn_batch = 16;
  tcfg.head_batch = 16;
  GenSpec tiny;
  tiny.frames = 6;
  tiny.height = tiny.width = 64;
  tiny.min_radius = 7;
  tiny.max_radius = 13;
  Dataset ds = generate_dataset(55, 2, 1, tiny);
  Detector d1(dcfg), d2(dcfg);
  train(d1, ds, tcfg, (work / "det_train_a").string());
  train(d2, ds, tcfg, (work / "det_train_b").string());
  std::ifstream m1(work / "det_train_a" / "metrics.csv"), m2(work / "det_train_b" / "metrics.csv");
  std::string s1((std::istreambuf_iterator<char>(m1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(m2)), std::istreambuf_iterator<char>());
  if (s1 != s2 || s1.empty()) {
    ok = false;
    why << "train loss logs differ; ";
  }
  // checkpoints too
  {
    std::ifstream c1(work / "det_train_a" / "checkpoint.dsf1", std::ios::binary);
    std::ifstream c2(work / "det_train_b" / "checkpoint.dsf1", std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(c1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(c2)), std::istreambuf_iterator<char>());
    if (b1 != b2 || b1.empty()) {
      ok = false;
      why << "checkpoints differ; ";
    }
  }

  // eval: identical seeds -> identical detections and reports
  InferenceOptions opts;
  opts.strategy = SamplingStrategy::stochastic(3, 4);
  opts.threads = 2;
  auto det_a = run_inference(d1, ds.split("val"), opts);
  auto det_b = run_inference(d1, ds.split("val"), opts);
  write_detections_jsonl((work / "dets_a.jsonl").string(), det_a);
  write_detections_jsonl((work / "dets_b.jsonl").string(), det_b);
  std::ifstream da(work / "dets_a.jsonl"), db(work / "dets_b.jsonl");
  std::string ja((std::istreambuf_iterator<char>(da)), std::istreambuf_iterator<char>());
  std::string jb((std::istreambuf_iterator<char>(db)), std::istreambuf_iterator<char>());
  if (ja != jb) {
    ok = false;
    why << "detections differ across reruns; ";
  }
  EvalReport ra = evaluate(det_a, ds.split("val"));
  EvalReport rb = evaluate(det_b, ds.split("val"));
  if (ra.to_json().dump() != rb.to_json().dump()) {
    ok = false;
    why << "reports differ; ";
  }

  report("determinism", ok, ok ? "gen trees, train logs, checkpoints, and eval reports byte-identical" : why.str());
}

}  // namespace

int main(int argc, char** argv) {
  std::string out_dir;
  for (int i = 1; i < argc - 1; ++i) {
    if (std::string(argv[i]) == "--out") out_dir = argv[i + 1];
  }
  fs::path work = out_dir.empty() ? fs::temp_directory_path() / "dsf_acceptance" : fs::path(out_dir);
  fs::remove_all(work);
  fs::create_directories(work);
  int threads = cli::resolve_threads(0);

  std::cout << "note: paper-scale mAP values are out of scope at desk scale; the suite below\n"
               "checks the property and trend criteria instead.\n";

  auto start = Clock::now();
  criterion_gradient_suite();
  criterion_fusion_invariants();
  criterion_oracle_equivalence();
  criterion_evaluator_fixture();
  criterion_determinism(work);
  criterion_trends(work, threads);

  std::cout << (g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED") << " ("
            << seconds_since(start) / 60.0 << " min total)\n";
  return g_failures == 0 ? 0 : 1;
}
