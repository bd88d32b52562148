// mgait: generate the synthetic benchmark, train an estimator, or run a
// leave-one-subject-out evaluation scenario.  All behaviour is driven by one
// JSON config; --set patches individual keys by dotted path.

#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <omp.h>

#include "mgait/evalharness.hpp"
#include "mgait/runconfig.hpp"

namespace fs = std::filesystem;
using namespace mgait;

namespace {

void cmd_generate(const RunConfig& rc) {
  Dataset ds = build_benchmark(rc.benchmark);
  std::string manifest = write_dataset(ds, rc.data_dir);
  long frames = 0;
  for (const Session& s : ds.sessions) frames += s.frames;
  std::printf("generate: %d subjects, %zu sessions, %ld frames\n", rc.benchmark.subjects,
              ds.sessions.size(), frames);
  std::printf("generate: wrote %s\n", manifest.c_str());
}

void cmd_train(const RunConfig& rc) {
  Dataset ds = read_dataset(rc.data_dir);
  fs::create_directories(rc.out_dir);
  const ModelConfig& model = rc.harness.model;
  const std::string log_path = rc.out_dir + "/train_log.csv";
  const std::string params_path = rc.out_dir + "/params.bin";

  if (rc.train_method == "maml") {
    MetaConfig mc = rc.harness.meta;
    mc.log_path = log_path;
    if (mc.checkpoint_every > 0) {
      mc.checkpoint_dir = rc.out_dir + "/checkpoints";
      fs::create_directories(mc.checkpoint_dir);
    }
    // One episode sampler per walking condition (subject x mode x incline x speed).
    auto pools = condition_pools(ds, model.window_len, rc.harness.window_stride);
    std::vector<EpisodeSampler> samplers;
    samplers.reserve(pools.size());
    for (auto& pool : pools)
      samplers.push_back(ref_sampler(ds, pool, model.window_len, mc.n_support, mc.m_query));
    ParameterSet params = init_params(model, mc.seed);
    auto logs = meta_train(params, samplers, mc, model, rc.harness.weights);
    save_params(params, params_path);
    std::printf("train: maml, %zu condition tasks, %zu epochs\n", samplers.size(), logs.size());
  } else {  // "supervised": pooled pretraining, the starting point for DE/TL/SFT
    PretrainConfig pc = rc.harness.pretrain;
    pc.log_path = log_path;
    std::vector<WindowRef> refs;
    for (int s = 0; s < ds.config.subjects; ++s) {
      auto sw = subject_windows(ds, s, model.window_len, rc.harness.window_stride);
      refs.insert(refs.end(), sw.begin(), sw.end());
    }
    PoolSource src = pool_source(gather_windows(ds, refs, model.window_len));
    ParameterSet params = init_params(model, pc.seed);
    auto logs = pretrain(params, src, pc, model, rc.harness.weights);
    save_params(params, params_path);
    std::printf("train: supervised, %ld pooled windows, %zu epochs\n", src.size, logs.size());
  }
  std::printf("train: wrote %s\n", params_path.c_str());
  std::printf("train: wrote %s\n", log_path.c_str());
}

void cmd_evaluate(const RunConfig& rc) {
  Dataset ds = read_dataset(rc.data_dir);
  for (int fold : rc.harness.folds)
    if (fold >= ds.config.subjects)
      throw std::runtime_error("evaluate: fold " + std::to_string(fold) +
                               " out of range for dataset with " +
                               std::to_string(ds.config.subjects) + " subjects");
  if (ds.config.subjects < 2)
    throw std::runtime_error("evaluate: leave-one-subject-out needs at least 2 subjects");
  HarnessResult hr = run_loso(ds, rc.harness);
  emit_report(hr, rc.harness, rc.out_dir);
  std::printf("evaluate: scenario %s, %zu result rows, %.1f s\n", hr.scenario.name.c_str(),
              hr.rows.size(), hr.wall_s);
  for (const char* f : {"results.csv", "confusion.csv", "summary.json"})
    std::printf("evaluate: wrote %s/%s\n", rc.out_dir.c_str(), f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic gait benchmark: data generation, training, LOSO evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  long long seed = 0;
  int threads = 0;

  app.add_option("--config", config_path, "JSON run config (partial; unknown keys rejected)");
  app.add_option("--out", out_dir, "output directory (data dir for generate)");
  auto* seed_opt = app.add_option("--seed", seed, "seed override for the chosen command");
  app.add_option("--threads", threads, "OpenMP thread count; 1 gives bit-reproducible runs");
  app.add_option("--set", overrides, "config override as dotted.path=value (repeatable)");

  auto* gen = app.add_subcommand("generate", "synthesise the benchmark dataset and manifest");
  auto* train = app.add_subcommand("train", "train one estimator on the whole dataset");
  auto* eval = app.add_subcommand("evaluate", "run a leave-one-subject-out scenario");
  for (auto* sub : {gen, train, eval}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (!overrides.empty()) {
      nlohmann::json doc = run_config_json(rc);
      for (const std::string& kv : overrides) apply_override(doc, kv);
      rc = run_config_from_json(doc);
    }
    if (threads > 0) omp_set_num_threads(threads);
    if (!out_dir.empty()) {
      if (gen->parsed())
        rc.data_dir = out_dir;
      else
        rc.out_dir = out_dir;
    }
    if (seed_opt->count() > 0) {
      auto u = static_cast<uint64_t>(seed);
      if (gen->parsed()) rc.benchmark.seed = u;
      if (train->parsed()) {
        rc.harness.meta.seed = u;
        rc.harness.pretrain.seed = u;
      }
      if (eval->parsed()) rc.harness.seed = u;
    }

    if (gen->parsed()) cmd_generate(rc);
    if (train->parsed()) cmd_train(rc);
    if (eval->parsed()) cmd_evaluate(rc);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "mgait: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mgait: %s\n", e.what());
    return 1;
  }
  return 0;
}
