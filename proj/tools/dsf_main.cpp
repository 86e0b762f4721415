#include <fstream>
#include <iostream>
#include <string>

#include "dsf/cli.hpp"

#include "CLI11.hpp"
#include "json.hpp"

using nlohmann::json;

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config file " + path);
  return json::parse(is);
}

// collects only the flags the user actually passed, so file values survive
// unless overridden
struct FlagSet {
  json values = json::object();
  CLI::App* cmd;

  explicit FlagSet(CLI::App* app) : cmd(app) {}

  template <typename T>
  void add(const std::string& flag, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<T>();
    cmd->add_option_function<T>(
           flag, [this, key, holder](const T& v) { values[key] = v; }, help)
        ->expected(1);
  }
  void add_flag(const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_flag_callback(
        flag, [this, key] { values[key] = true; }, help);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dsf: dual semantic fusion video object detection toolkit"};
  app.require_subcommand(1);

  std::string config_path;

  auto* gen = app.add_subcommand("gen", "generate a synthetic deteriorated-video dataset");
  FlagSet gen_flags(gen);
  gen->add_option("--config", config_path, "json config file (flags win)");
  gen_flags.add<std::string>("--out", "out", "output dataset directory");
  gen_flags.add<uint64_t>("--seed", "seed", "master seed");
  gen_flags.add<int>("--sequences", "sequences", "number of training sequences");
  gen_flags.add<int>("--val", "val", "number of validation sequences");
  gen_flags.add<int>("--frames", "frames", "frames per sequence");
  gen_flags.add<int>("--size", "size", "frame height and width");
  gen_flags.add<std::string>("--degrade", "degrade", "degradation preset: none|standard");
  gen_flags.add<int>("--min-objects", "min_objects", "minimum objects per sequence");
  gen_flags.add<int>("--max-objects", "max_objects", "maximum objects per sequence");
  gen_flags.add_flag("--force", "force", "overwrite a non-empty output directory");

  auto* tr = app.add_subcommand("train", "train the detector");
  FlagSet tr_flags(tr);
  tr->add_option("--config", config_path, "json config file (flags win)");
  tr_flags.add<std::string>("--data", "data", "dataset directory");
  tr_flags.add<std::string>("--out", "out", "output directory (checkpoint + metrics)");
  tr_flags.add<int>("--iters", "iters", "total iterations");
  tr_flags.add<double>("--lr", "lr", "base learning rate");
  tr_flags.add<uint64_t>("--seed", "seed", "training + init seed");
  tr_flags.add<bool>("--frame-fusion", "frame_fusion_on", "enable frame-level fusion (0|1)");
  tr_flags.add<bool>("--instance-fusion", "instance_fusion_on", "enable instance-level fusion (0|1)");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint (mAP@0.5 + motion groups)");
  FlagSet ev_flags(ev);
  ev->add_option("--config", config_path, "json config file (flags win)");
  ev_flags.add<std::string>("--data", "data", "dataset directory");
  ev_flags.add<std::string>("--checkpoint", "checkpoint", "train output dir or checkpoint.dsf1");
  ev_flags.add<std::string>("--out", "out", "output directory");
  ev_flags.add<int>("--num-frames", "num_frames", "test frames n (evaluated frame included)");
  ev_flags.add<std::string>("--sampling", "sampling", "fixed:s=K | stochastic");
  ev_flags.add<uint64_t>("--seed", "seed", "sampling seed");
  ev_flags.add<std::string>("--split", "split", "dataset split (train|val)");
  ev_flags.add<int>("--threads", "threads", "eval worker threads (DSF_THREADS caps)");
  ev_flags.add_flag("--plot", "plot", "write PR curve SVGs");

  auto* ab = app.add_subcommand("ablate", "train + evaluate the four fusion variants");
  FlagSet ab_flags(ab);
  ab->add_option("--config", config_path, "json config file (flags win)");
  ab_flags.add<std::string>("--data", "data", "dataset directory");
  ab_flags.add<std::string>("--out", "out", "output directory");
  ab_flags.add<std::vector<uint64_t>>("--seeds", "seeds", "comma-separated seeds");
  ab_flags.add<int>("--iters", "iters", "total iterations per run");
  ab_flags.add<double>("--lr", "lr", "base learning rate");
  ab_flags.add<int>("--num-frames", "num_frames", "eval test frames n");
  ab_flags.add<std::string>("--sampling", "sampling", "eval sampling strategy");
  ab_flags.add<int>("--threads", "threads", "parallel replicas / eval workers");

  auto* sw = app.add_subcommand("sweep", "mAP vs n and vs stride curves for a checkpoint");
  FlagSet sw_flags(sw);
  sw->add_option("--config", config_path, "json config file (flags win)");
  sw_flags.add<std::string>("--data", "data", "dataset directory");
  sw_flags.add<std::string>("--checkpoint", "checkpoint", "train output dir or checkpoint.dsf1");
  sw_flags.add<std::string>("--out", "out", "output directory");
  sw_flags.add<std::vector<int>>("--frames-list", "frames_list", "n values, comma-separated");
  sw_flags.add<std::vector<int>>("--strides", "strides", "stride values, comma-separated");
  sw_flags.add<uint64_t>("--seed", "seed", "stochastic sampling seed");
  sw_flags.add<int>("--threads", "threads", "eval worker threads");

  auto* in = app.add_subcommand("inspect", "dump similarity matrices and detections for one frame");
  FlagSet in_flags(in);
  in->add_option("--config", config_path, "json config file (flags win)");
  in_flags.add<std::string>("--data", "data", "dataset directory");
  in_flags.add<std::string>("--checkpoint", "checkpoint", "train output dir or checkpoint.dsf1");
  in_flags.add<std::string>("--out", "out", "output directory");
  in_flags.add<std::string>("--sequence", "sequence", "sequence id (default: first val sequence)");
  in_flags.add<int>("--frame", "frame", "frame index (default: middle)");
  in_flags.add<int>("--num-frames", "num_frames", "test frames n");
  in_flags.add<std::string>("--sampling", "sampling", "sampling strategy");
  in_flags.add<uint64_t>("--seed", "seed", "sampling seed");

  CLI11_PARSE(app, argc, argv);

  try {
    auto dispatch = [&](CLI::App* cmd, FlagSet& flags, int (*fn)(const json&)) -> int {
      if (!cmd->parsed()) return -1;
      json cfg = dsf::cli::merge_config(load_config_file(config_path), flags.values);
      return fn(cfg);
    };
    int rc;
    if ((rc = dispatch(gen, gen_flags, dsf::cli::cmd_gen)) >= 0) return rc;
    if ((rc = dispatch(tr, tr_flags, dsf::cli::cmd_train)) >= 0) return rc;
    if ((rc = dispatch(ev, ev_flags, dsf::cli::cmd_eval)) >= 0) return rc;
    if ((rc = dispatch(ab, ab_flags, dsf::cli::cmd_ablate)) >= 0) return rc;
    if ((rc = dispatch(sw, sw_flags, dsf::cli::cmd_sweep)) >= 0) return rc;
    if ((rc = dispatch(in, in_flags, dsf::cli::cmd_inspect)) >= 0) return rc;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
