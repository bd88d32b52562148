#pragma once

// Schema-strict JSON run configuration for the command-line runner. The
// document mirrors the library defaults section by section; unknown keys are
// rejected with their full path, and dotted-path assignments ("meta.epochs=10")
// patch the document before validation so runs stay diffable.

#include <string>

#include <json.hpp>

#include "mgait/evalharness.hpp"

namespace mgait {

struct RunConfig {
  BenchmarkConfig benchmark;
  HarnessConfig harness;              // model/weights/meta/pretrain + evaluation
  std::string train_method = "maml";  // train subcommand: "maml" | "supervised"
  std::string data_dir = "data";      // generate writes here; train/evaluate read
  std::string out_dir = "out";        // checkpoints, logs, reports
};

// The full document for a config (defaults: run_config_json(RunConfig{})).
nlohmann::json run_config_json(const RunConfig& rc);

// Strict parse: every key must exist in the default document with the same
// kind (object/array/string/bool/number); missing keys keep their defaults.
// Throws std::invalid_argument with the offending path.
RunConfig run_config_from_json(const nlohmann::json& doc);

RunConfig load_run_config(const std::string& path);

// "section.key=value" assignment onto an existing document. The path must
// already exist. Values parse as JSON when possible ("10", "true", "[1,2]");
// otherwise they are taken as strings, and a comma-separated scalar assigned
// to an array key becomes a list.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace mgait
