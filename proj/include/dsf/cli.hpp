#pragma once

#include <memory>
#include <string>

#include "dsf/detector.hpp"

#include "json.hpp"

namespace dsf::cli {

// file config overlaid by flag overrides; flags win, recursively for objects
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& override_with);

// eval worker cap: min(requested, DSF_THREADS when set)
int resolve_threads(int requested);

// checkpoint path is either a train output directory (checkpoint.dsf1 +
// config.json) or the .dsf1 file with config.json beside it
std::unique_ptr<Detector> load_detector(const std::string& checkpoint);

// every command resolves its full configuration first, echoes it into the
// output directory, then writes artifacts; nonzero exit on missing inputs
int cmd_gen(const nlohmann::json& cfg);
int cmd_train(const nlohmann::json& cfg);
int cmd_eval(const nlohmann::json& cfg);
int cmd_ablate(const nlohmann::json& cfg);
int cmd_sweep(const nlohmann::json& cfg);
int cmd_inspect(const nlohmann::json& cfg);

}  // namespace dsf::cli
