#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mgait/runconfig.hpp"

namespace fs = std::filesystem;
using namespace mgait;

namespace {

const fs::path& tmp_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "mgait_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the real binary, returns its exit code; stdout+stderr land in *out.
int run_cli(const std::string& args, std::string* out = nullptr) {
  static int counter = 0;
  fs::path log = tmp_root() / ("cli_out_" + std::to_string(counter++) + ".txt");
  std::string cmd = std::string(MGAIT_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  int st = std::system(cmd.c_str());
  REQUIRE(st != -1);
  if (out) *out = slurp(log);
  return WIFEXITED(st) ? WEXITSTATUS(st) : -2;
}

// Micro sizing shared by every training/evaluation case: small model, short
// sessions (stair bouts need session_scale >= 0.2 to fill a 6+6 episode).
const std::string kMicroModel =
    " --set model.conv_channels=4 --set model.conv_kernel=5"
    " --set model.encoder_width=8 --set model.head_width=6";
const std::string kMicroMeta =
    " --set meta.n_support=6 --set meta.m_query=6 --set meta.first_order=true"
    " --set evaluate.window_stride=50";

// One shared 2-subject dataset, generated by the binary itself.
const fs::path& dataset_dir() {
  static const fs::path dir = [] {
    fs::path d = tmp_root() / "data";
    int rc = run_cli("generate --out " + d.string() +
                     " --seed 7 --set benchmark.subjects=2 --set benchmark.session_scale=0.2");
    REQUIRE(rc == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit 2, help exits 0") {
  std::string out;
  CHECK(run_cli("frobnicate", &out) == 2);
  CHECK(run_cli("generate --bogus 1", &out) == 2);
  CHECK(run_cli("generate --set nope.key=1 --out " + (tmp_root() / "x").string(), &out) == 2);
  CHECK(out.find("unknown key") != std::string::npos);
  CHECK(run_cli("generate --set benchmark.subjects=0 --out " + (tmp_root() / "x").string(),
                &out) == 2);
  CHECK(out.find("at least 1") != std::string::npos);
  CHECK(run_cli("--help", &out) == 0);
  CHECK(out.find("generate") != std::string::npos);
  CHECK(run_cli("", &out) == 2);  // a subcommand is required
}

TEST_CASE("bad or unknown config files are rejected") {
  fs::path good = tmp_root() / "cfg_typo.json";
  std::ofstream(good) << R"({"benchmark": {"subjects": 1}, "typo_key": 1})";
  std::string out;
  CHECK(run_cli("generate --config " + good.string(), &out) == 2);
  CHECK(out.find("typo_key") != std::string::npos);

  fs::path mistyped = tmp_root() / "cfg_type.json";
  std::ofstream(mistyped) << R"({"benchmark": {"subjects": "three"}})";
  CHECK(run_cli("generate --config " + mistyped.string(), &out) == 2);

  // A config file that cannot be opened is an I/O failure, not a usage error.
  CHECK(run_cli("generate --config " + (tmp_root() / "absent.json").string(), &out) == 1);
}

TEST_CASE("generate is deterministic and honours --set") {
  fs::path d1 = tmp_root() / "gen1";
  fs::path d2 = tmp_root() / "gen2";
  std::string flags = " --seed 3 --set benchmark.subjects=1 --set benchmark.session_scale=0.1";
  REQUIRE(run_cli("generate --out " + d1.string() + flags) == 0);
  REQUIRE(run_cli("generate --out " + d2.string() + flags) == 0);
  // Manifest checksums cover every CSV, so identical manifests mean identical data.
  CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
  CHECK(slurp(d1 / "subject0" / "session000.csv") == slurp(d2 / "subject0" / "session000.csv"));

  auto doc = nlohmann::json::parse(slurp(d1 / "manifest.json"));
  CHECK(doc["subjects"].get<int>() == 1);
  CHECK(doc["seed"].get<uint64_t>() == 3);

  Dataset ds = read_dataset(d1.string());
  CHECK(ds.config.subjects == 1);
  CHECK(ds.sessions.size() == 40);  // 17 conditions -> 40 sessions per subject
}

TEST_CASE("train writes params and a per-epoch log") {
  fs::path run = tmp_root() / "run_maml";
  int rc = run_cli("train --out " + run.string() + " --seed 11 --set data_dir=" +
                   dataset_dir().string() + kMicroModel + kMicroMeta + " --set meta.epochs=2");
  REQUIRE(rc == 0);
  CHECK(fs::exists(run / "params.bin"));
  std::istringstream log(slurp(run / "train_log.csv"));
  std::string line;
  std::getline(log, line);
  CHECK(line == "epoch,support_loss,query_loss,wall_s");
  int rows = 0;
  while (std::getline(log, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("train with zero epochs leaves the initialisation untouched") {
  fs::path run = tmp_root() / "run_zero";
  int rc = run_cli("train --out " + run.string() + " --seed 11 --set data_dir=" +
                   dataset_dir().string() + kMicroModel + kMicroMeta + " --set meta.epochs=0");
  REQUIRE(rc == 0);

  ModelConfig model;
  model.conv_channels = 4;
  model.conv_kernel = 5;
  model.encoder_width = 8;
  model.head_width = 6;
  fs::path ref = tmp_root() / "ref_init.bin";
  save_params(init_params(model, 11), ref.string());
  CHECK(slurp(run / "params.bin") == slurp(ref));
}

TEST_CASE("supervised training pools every subject") {
  fs::path run = tmp_root() / "run_sup";
  std::string out;
  int rc = run_cli("train --out " + run.string() + " --set train.method=supervised" +
                       " --set data_dir=" + dataset_dir().string() + kMicroModel + kMicroMeta +
                       " --set pretrain.epochs=2 --set pretrain.batch=32"
                       " --set pretrain.max_batches_per_epoch=2",
                   &out);
  REQUIRE(rc == 0);
  CHECK(out.find("supervised") != std::string::npos);
  CHECK(fs::exists(run / "params.bin"));
  std::istringstream log(slurp(run / "train_log.csv"));
  std::string header;
  std::getline(log, header);
  CHECK(header == "epoch,mean_loss,batches,wall_s");
}

TEST_CASE("evaluate produces the three report files") {
  fs::path rep = tmp_root() / "report";
  int rc = run_cli("evaluate --out " + rep.string() + " --seed 5 --threads 2" +
                   " --set data_dir=" + dataset_dir().string() + kMicroModel + kMicroMeta +
                   " --set meta.epochs=1 --set pretrain.epochs=1 --set pretrain.batch=32"
                   " --set pretrain.max_batches_per_epoch=2"
                   " --set evaluate.scenario=S3 --set evaluate.folds=0,1"
                   " --set evaluate.eval_stride_mult=4 --set evaluate.repeat_seeds=2"
                   " --set evaluate.methods=MAML,DE");
  REQUIRE(rc == 0);

  std::istringstream results(slurp(rep / "results.csv"));
  std::string header;
  std::getline(results, header);
  CHECK(header == "method,subject,mode,metric,value,ci,duration_s,steps,seed");
  int rows = 0;
  std::string line;
  while (std::getline(results, line))
    if (!line.empty()) ++rows;
  // 2 methods x (2 subjects x 2 seeds raw + 2 per-subject + 1 overall) x 7 mode
  // groups x 3 metrics, with every group populated at this stride.
  CHECK(rows == 2 * (2 * 2 + 2 + 1) * 7 * 3);

  auto summary = nlohmann::json::parse(slurp(rep / "summary.json"));
  CHECK(summary["scenario"].get<std::string>() == "S3");
  CHECK(summary["headline"]["steps"].get<int>() == 4);
  CHECK(summary["methods"].contains("MAML"));
  CHECK(summary["methods"]["MAML"]["overall"].contains("gait_acc"));
  CHECK(fs::exists(rep / "confusion.csv"));
}

TEST_CASE("evaluate fails cleanly without a dataset") {
  std::string out;
  CHECK(run_cli("evaluate --set data_dir=" + (tmp_root() / "absent").string(), &out) == 1);
  CHECK(out.find("manifest") != std::string::npos);
}

TEST_CASE("run config JSON round-trips and rejects drift") {
  RunConfig rc;
  rc.harness.meta.alpha = 0.125;
  rc.harness.scenario = "S1";
  rc.train_method = "supervised";
  RunConfig back = run_config_from_json(run_config_json(rc));
  CHECK(back.harness.meta.alpha == 0.125);
  CHECK(back.harness.scenario == "S1");
  CHECK(back.train_method == "supervised");
  CHECK(back.benchmark.subjects == rc.benchmark.subjects);

  nlohmann::json doc = run_config_json(RunConfig{});
  doc["meta"]["typo"] = 1;
  CHECK_THROWS_AS((void)run_config_from_json(doc), std::invalid_argument);

  nlohmann::json partial = {{"meta", {{"alpha", 0.5}}}};
  RunConfig merged = run_config_from_json(partial);
  CHECK(merged.harness.meta.alpha == 0.5);
  CHECK(merged.harness.meta.beta == RunConfig{}.harness.meta.beta);
}

TEST_CASE("dotted-path overrides parse typed values") {
  nlohmann::json doc = run_config_json(RunConfig{});
  apply_override(doc, "meta.epochs=7");
  apply_override(doc, "meta.first_order=true");
  apply_override(doc, "train.method=supervised");
  apply_override(doc, "evaluate.methods=MAML,DE");
  apply_override(doc, "evaluate.folds=0,2");
  RunConfig rc = run_config_from_json(doc);
  CHECK(rc.harness.meta.epochs == 7);
  CHECK(rc.harness.meta.first_order);
  CHECK(rc.train_method == "supervised");
  CHECK(rc.harness.methods == std::vector<std::string>{"MAML", "DE"});
  CHECK(rc.harness.folds == std::vector<int>{0, 2});
  CHECK_THROWS_AS(apply_override(doc, "nope.key=1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), std::invalid_argument);
}
