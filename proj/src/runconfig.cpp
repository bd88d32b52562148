#include "mgait/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace mgait {

nlohmann::json run_config_json(const RunConfig& rc) {
  nlohmann::json doc;
  doc["schema"] = 1;
  doc["data_dir"] = rc.data_dir;
  doc["out_dir"] = rc.out_dir;
  doc["benchmark"] = {
      {"subjects", rc.benchmark.subjects},
      {"seed", rc.benchmark.seed},
      {"dt", rc.benchmark.dt},
      {"noise", rc.benchmark.opts.noise},
      {"drift", rc.benchmark.opts.drift},
      {"session_scale", rc.benchmark.opts.session_scale},
  };
  const ModelConfig& m = rc.harness.model;
  doc["model"] = {
      {"in_channels", m.in_channels},     {"window_len", m.window_len},
      {"conv_channels", m.conv_channels}, {"conv_kernel", m.conv_kernel},
      {"encoder_width", m.encoder_width}, {"head_width", m.head_width},
      {"n_modes", m.n_modes},             {"n_phases", m.n_phases},
      {"bn_eps", m.bn_eps},               {"bn_momentum", m.bn_momentum},
  };
  doc["weights"] = {
      {"gait", rc.harness.weights.gait},
      {"incline", rc.harness.weights.incline},
      {"loc", rc.harness.weights.loc},
  };
  const MetaConfig& mc = rc.harness.meta;
  doc["meta"] = {
      {"alpha", mc.alpha},
      {"beta", mc.beta},
      {"inner_steps", mc.inner_steps},
      {"epochs", mc.epochs},
      {"n_support", mc.n_support},
      {"m_query", mc.m_query},
      {"first_order", mc.first_order},
      {"seed", mc.seed},
      {"checkpoint_every", mc.checkpoint_every},
  };
  const PretrainConfig& pc = rc.harness.pretrain;
  doc["pretrain"] = {
      {"lr", pc.adam.lr},
      {"beta1", pc.adam.beta1},
      {"beta2", pc.adam.beta2},
      {"eps", pc.adam.eps},
      {"batch", pc.batch},
      {"epochs", pc.epochs},
      {"seed", pc.seed},
      {"max_batches_per_epoch", pc.max_batches_per_epoch},
  };
  doc["train"] = {{"method", rc.train_method}};
  const HarnessConfig& hc = rc.harness;
  doc["evaluate"] = {
      {"scenario", hc.scenario},
      {"methods", hc.methods},
      {"maml_ft_lr", hc.maml_ft_lr},
      {"ri_ft_lr", hc.ri_ft_lr},
      {"tl_ft_lr", hc.tl_ft_lr},
      {"sft_ft_lr", hc.sft_ft_lr},
      {"window_stride", hc.window_stride},
      {"eval_stride_mult", hc.eval_stride_mult},
      {"repeat_seeds", hc.repeat_seeds},
      {"seed", hc.seed},
      {"folds", hc.folds},
      {"durations_s", hc.s1_durations},
      {"steps", hc.s2_steps},
  };
  return doc;
}

namespace {

const char* kind_name(const nlohmann::json& v) {
  if (v.is_object()) return "object";
  if (v.is_array()) return "array";
  if (v.is_string()) return "string";
  if (v.is_boolean()) return "bool";
  if (v.is_number()) return "number";
  return "null";
}

void check_strict(const nlohmann::json& input, const nlohmann::json& defaults,
                  const std::string& path) {
  if (!input.is_object())
    throw std::invalid_argument("config: expected an object at '" +
                                (path.empty() ? "<root>" : path) + "'");
  for (const auto& [key, value] : input.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key))
      throw std::invalid_argument("config: unknown key '" + full + "'");
    const nlohmann::json& d = defaults.at(key);
    if (d.is_object()) {
      check_strict(value, d, full);
    } else if (kind_name(d) != std::string(kind_name(value))) {
      throw std::invalid_argument("config: '" + full + "' must be a " + kind_name(d) +
                                  ", got " + kind_name(value));
    }
  }
}

template <typename T>
std::vector<T> typed_list(const nlohmann::json& arr, const std::string& path) {
  std::vector<T> out;
  for (const auto& v : arr) {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string())
        throw std::invalid_argument("config: '" + path + "' entries must be strings");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer())
        throw std::invalid_argument("config: '" + path + "' entries must be integers");
    } else {
      if (!v.is_number())
        throw std::invalid_argument("config: '" + path + "' entries must be numbers");
    }
    out.push_back(v.get<T>());
  }
  return out;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("config: " + msg);
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& doc) {
  RunConfig rc;
  const nlohmann::json defaults = run_config_json(rc);
  check_strict(doc, defaults, "");
  nlohmann::json d = defaults;
  d.merge_patch(doc);

  require(d.at("schema").get<int>() == 1, "unsupported schema version");
  rc.data_dir = d.at("data_dir").get<std::string>();
  rc.out_dir = d.at("out_dir").get<std::string>();

  const auto& b = d.at("benchmark");
  rc.benchmark.subjects = b.at("subjects").get<int>();
  rc.benchmark.seed = b.at("seed").get<uint64_t>();
  rc.benchmark.dt = b.at("dt").get<double>();
  rc.benchmark.opts.noise = b.at("noise").get<bool>();
  rc.benchmark.opts.drift = b.at("drift").get<bool>();
  rc.benchmark.opts.session_scale = b.at("session_scale").get<double>();
  require(rc.benchmark.subjects >= 1, "benchmark.subjects must be at least 1");
  require(rc.benchmark.dt > 0.0, "benchmark.dt must be positive");
  require(rc.benchmark.opts.session_scale > 0.0, "benchmark.session_scale must be positive");

  const auto& m = d.at("model");
  ModelConfig& mc = rc.harness.model;
  mc.in_channels = m.at("in_channels").get<long>();
  mc.window_len = m.at("window_len").get<long>();
  mc.conv_channels = m.at("conv_channels").get<long>();
  mc.conv_kernel = m.at("conv_kernel").get<long>();
  mc.encoder_width = m.at("encoder_width").get<long>();
  mc.head_width = m.at("head_width").get<long>();
  mc.n_modes = m.at("n_modes").get<long>();
  mc.n_phases = m.at("n_phases").get<long>();
  mc.bn_eps = m.at("bn_eps").get<double>();
  mc.bn_momentum = m.at("bn_momentum").get<double>();
  mc.validate();

  const auto& w = d.at("weights");
  rc.harness.weights.gait = w.at("gait").get<double>();
  rc.harness.weights.incline = w.at("incline").get<double>();
  rc.harness.weights.loc = w.at("loc").get<double>();
  require(rc.harness.weights.gait >= 0.0 && rc.harness.weights.incline >= 0.0 &&
              rc.harness.weights.loc >= 0.0,
          "weights must be non-negative");

  const auto& mt = d.at("meta");
  MetaConfig& meta = rc.harness.meta;
  meta.alpha = mt.at("alpha").get<double>();
  meta.beta = mt.at("beta").get<double>();
  meta.inner_steps = mt.at("inner_steps").get<int>();
  meta.epochs = mt.at("epochs").get<int>();
  meta.n_support = mt.at("n_support").get<long>();
  meta.m_query = mt.at("m_query").get<long>();
  meta.first_order = mt.at("first_order").get<bool>();
  meta.seed = mt.at("seed").get<uint64_t>();
  meta.checkpoint_every = mt.at("checkpoint_every").get<int>();
  require(meta.alpha > 0.0 && meta.beta > 0.0, "meta.alpha and meta.beta must be positive");
  require(meta.inner_steps >= 1, "meta.inner_steps must be at least 1");
  require(meta.epochs >= 0, "meta.epochs must be non-negative");
  require(meta.n_support >= 1 && meta.m_query >= 1, "meta episode sizes must be positive");
  require(meta.checkpoint_every >= 0, "meta.checkpoint_every must be non-negative");

  const auto& pt = d.at("pretrain");
  PretrainConfig& pre = rc.harness.pretrain;
  pre.adam.lr = pt.at("lr").get<double>();
  pre.adam.beta1 = pt.at("beta1").get<double>();
  pre.adam.beta2 = pt.at("beta2").get<double>();
  pre.adam.eps = pt.at("eps").get<double>();
  pre.batch = pt.at("batch").get<long>();
  pre.epochs = pt.at("epochs").get<int>();
  pre.seed = pt.at("seed").get<uint64_t>();
  pre.max_batches_per_epoch = pt.at("max_batches_per_epoch").get<int>();
  require(pre.adam.lr > 0.0, "pretrain.lr must be positive");
  require(pre.batch >= 1, "pretrain.batch must be at least 1");
  require(pre.epochs >= 0, "pretrain.epochs must be non-negative");
  require(pre.max_batches_per_epoch >= 0, "pretrain.max_batches_per_epoch must be >= 0");

  rc.train_method = d.at("train").at("method").get<std::string>();
  require(rc.train_method == "maml" || rc.train_method == "supervised",
          "train.method must be 'maml' or 'supervised'");

  const auto& e = d.at("evaluate");
  HarnessConfig& hc = rc.harness;
  hc.scenario = e.at("scenario").get<std::string>();
  scenario_spec(hc.scenario);  // validates the name
  hc.methods = typed_list<std::string>(e.at("methods"), "evaluate.methods");
  require(!hc.methods.empty(), "evaluate.methods must not be empty");
  for (const std::string& name : hc.methods)
    require(name == "MAML" || name == "RI" || name == "DE" || name == "TL" || name == "SFT",
            "evaluate.methods: unknown method '" + name + "'");
  hc.maml_ft_lr = e.at("maml_ft_lr").get<double>();
  hc.ri_ft_lr = e.at("ri_ft_lr").get<double>();
  hc.tl_ft_lr = e.at("tl_ft_lr").get<double>();
  hc.sft_ft_lr = e.at("sft_ft_lr").get<double>();
  require(hc.maml_ft_lr >= 0.0 && hc.ri_ft_lr >= 0.0 && hc.tl_ft_lr >= 0.0 &&
              hc.sft_ft_lr >= 0.0,
          "fine-tune learning rates must be non-negative");
  hc.window_stride = e.at("window_stride").get<long>();
  hc.eval_stride_mult = e.at("eval_stride_mult").get<long>();
  hc.repeat_seeds = e.at("repeat_seeds").get<int>();
  hc.seed = e.at("seed").get<uint64_t>();
  require(hc.window_stride >= 1, "evaluate.window_stride must be at least 1");
  require(hc.eval_stride_mult >= 1, "evaluate.eval_stride_mult must be at least 1");
  require(hc.repeat_seeds >= 1, "evaluate.repeat_seeds must be at least 1");
  hc.folds = typed_list<int>(e.at("folds"), "evaluate.folds");
  for (int f : hc.folds)
    require(f >= 0 && f < rc.benchmark.subjects, "evaluate.folds: subject out of range");
  hc.s1_durations = typed_list<double>(e.at("durations_s"), "evaluate.durations_s");
  hc.s2_steps = typed_list<int>(e.at("steps"), "evaluate.steps");
  require(hc.s1_durations.empty() || hc.scenario == "S1",
          "evaluate.durations_s is only free in scenario S1");
  require(hc.s2_steps.empty() || hc.scenario == "S2",
          "evaluate.steps is only free in scenario S2");

  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(doc);
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override '" + assignment + "' is not KEY=VALUE");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  nlohmann::json* node = &doc;
  size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    const size_t dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i]))
      throw std::invalid_argument("override: unknown key '" + key + "'");
    node = &(*node)[parts[i]];
  }
  if (!node->is_object() || !node->contains(parts.back()))
    throw std::invalid_argument("override: unknown key '" + key + "'");
  nlohmann::json& slot = (*node)[parts.back()];

  auto parse_scalar = [](const std::string& s) -> nlohmann::json {
    nlohmann::json v = nlohmann::json::parse(s, nullptr, /*allow_exceptions=*/false);
    if (v.is_discarded()) return nlohmann::json(s);  // bare word -> string
    return v;
  };

  nlohmann::json parsed = parse_scalar(value);
  if (slot.is_array() && !parsed.is_array()) {
    nlohmann::json list = nlohmann::json::array();
    if (!value.empty()) {
      size_t pos = 0;
      while (true) {
        const size_t comma = value.find(',', pos);
        list.push_back(parse_scalar(value.substr(pos, comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
    parsed = std::move(list);
  }
  slot = std::move(parsed);
}

}  // namespace mgait
