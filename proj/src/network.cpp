#include "mgait/network.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mgait/rng.hpp"

namespace mgait {

void ModelConfig::validate() const {
  if (in_channels < 1 || window_len < 1 || conv_channels < 1 || encoder_width < 1 ||
      head_width < 1 || n_modes < 2 || n_phases < 2)
    throw std::invalid_argument("ModelConfig: non-positive dimension");
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    throw std::invalid_argument("ModelConfig: conv kernel must be odd for same-padding");
  if (conv_kernel > window_len)
    throw std::invalid_argument("ModelConfig: conv kernel wider than window");
  if (bn_eps <= 0.0) throw std::invalid_argument("ModelConfig: bn_eps must be positive");
}

void ParameterSet::add(std::string name, Tensor t, bool trainable) {
  if (has(name)) throw std::invalid_argument("ParameterSet: duplicate name " + name);
  entries_.push_back(Entry{std::move(name), std::move(t), trainable});
}

long ParameterSet::index_of(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<long>(i);
  return -1;
}

bool ParameterSet::has(const std::string& name) const { return index_of(name) >= 0; }

const Tensor& ParameterSet::get(const std::string& name) const {
  const long i = index_of(name);
  if (i < 0) throw std::invalid_argument("ParameterSet: unknown name " + name);
  return entries_[static_cast<size_t>(i)].tensor;
}

void ParameterSet::set(const std::string& name, Tensor t) {
  const long i = index_of(name);
  if (i < 0) throw std::invalid_argument("ParameterSet: unknown name " + name);
  Entry& e = entries_[static_cast<size_t>(i)];
  if (e.tensor.shape() != t.shape())
    throw std::invalid_argument("ParameterSet: shape change for " + name);
  e.tensor = std::move(t);
}

long ParameterSet::total_values() const {
  long n = 0;
  for (const Entry& e : entries_) n += e.tensor.size();
  return n;
}

bool bits_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), static_cast<size_t>(a.size()) * sizeof(double)) == 0;
}

bool bits_equal(const ParameterSet& a, const ParameterSet& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (size_t i = 0; i < a.entries().size(); ++i) {
    const auto& ea = a.entries()[i];
    const auto& eb = b.entries()[i];
    if (ea.name != eb.name || ea.trainable != eb.trainable) return false;
    if (!bits_equal(ea.tensor, eb.tensor)) return false;
  }
  return true;
}

namespace {

Tensor uniform_init(Rng& rng, std::vector<long> shape, long fan_in) {
  Tensor t = Tensor::zeros(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (long i = 0; i < t.size(); ++i) t.mutable_data()[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

ParameterSet init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed_mix(seed, 0x6d676169ULL));  // independent of downstream consumers
  ParameterSet p;
  const long C = cfg.conv_channels, K = cfg.conv_kernel, E = cfg.encoder_width;
  const long H = cfg.head_width, F = 2 * C, Z = E + cfg.n_modes;

  p.add("conv.weight", uniform_init(rng, {C, cfg.in_channels, K}, cfg.in_channels * K));
  p.add("conv.bias", Tensor::zeros({1, C}));
  p.add("bn.gamma", Tensor::full({1, C}, 1.0));
  p.add("bn.beta", Tensor::zeros({1, C}));
  p.add("bn.running_mean", Tensor::zeros({1, C}), /*trainable=*/false);
  p.add("bn.running_var", Tensor::full({1, C}, 1.0), /*trainable=*/false);
  p.add("encoder.weight", uniform_init(rng, {E, F}, F));
  p.add("encoder.bias", Tensor::zeros({1, E}));

  const struct {
    const char* prefix;
    long in, out;
  } heads[] = {
      {"head_loc", E, cfg.n_modes},
      {"head_gait", Z, cfg.n_phases},
      {"head_inc", Z, 1},
  };
  for (const auto& h : heads) {
    p.add(std::string(h.prefix) + ".fc1.weight", uniform_init(rng, {H, h.in}, h.in));
    p.add(std::string(h.prefix) + ".fc1.bias", Tensor::zeros({1, H}));
    p.add(std::string(h.prefix) + ".fc2.weight", uniform_init(rng, {h.out, H}, H));
    p.add(std::string(h.prefix) + ".fc2.bias", Tensor::zeros({1, h.out}));
  }
  return p;
}

long count_params(const ModelConfig& cfg) {
  ParameterSet p = init_params(cfg, 0);
  long n = 0;
  for (const auto& e : p.entries())
    if (e.trainable) n += e.tensor.size();
  return n;
}

Var ParamVars::get(const std::string& name) const {
  for (const auto& [n, v] : vars)
    if (n == name) return v;
  throw std::invalid_argument("ParamVars: unknown name " + name);
}

bool ParamVars::has(const std::string& name) const {
  for (const auto& [n, v] : vars)
    if (n == name) return true;
  return false;
}

ParamVars make_param_vars(Trace& t, const ParameterSet& params, bool trainable_only) {
  ParamVars pv;
  for (const auto& e : params.entries()) {
    if (trainable_only && !e.trainable) continue;
    pv.vars.emplace_back(e.name, t.leaf(e.tensor));
  }
  return pv;
}

namespace {

// h [B,in] -> relu(h W1^T + b1) W2^T + b2
Var mlp_head(Trace&, const ParamVars& p, const std::string& prefix, Var h) {
  const long B = h.value().dim(0);
  Var a = add(matmul(h, transpose(p.get(prefix + ".fc1.weight"))),
              bcast_row(p.get(prefix + ".fc1.bias"), B));
  Var z = relu(a);
  return add(matmul(z, transpose(p.get(prefix + ".fc2.weight"))),
             bcast_row(p.get(prefix + ".fc2.bias"), B));
}

}  // namespace

ForwardOut forward(Trace& t, const ParamVars& p, const ParameterSet& state,
                   const Tensor& batch, RunMode mode, const ModelConfig& cfg) {
  if (batch.rank() != 3 || batch.dim(1) != cfg.in_channels || batch.dim(2) != cfg.window_len)
    throw std::invalid_argument(
        "forward: batch must be [B," + std::to_string(cfg.in_channels) + "," +
        std::to_string(cfg.window_len) + "], got " + shape_str(batch.shape()));
  const long B = batch.dim(0), k = cfg.window_len;
  const long C = cfg.conv_channels, K = cfg.conv_kernel, P = (K - 1) / 2;

  Var x = t.leaf(batch);
  // conv as im2col + matmul; rows are (batch, time) pairs.
  Var cols = im2col(x, K, P);                                             // [B*k, Cin*K]
  Var wm = transpose(reshape(p.get("conv.weight"), {C, cfg.in_channels * K}));
  Var h = add(matmul(cols, wm), bcast_row(p.get("conv.bias"), B * k));    // [B*k, C]

  ForwardOut out;
  Var hn;
  if (mode == RunMode::kTrain) {
    hn = batchnorm_train(h, p.get("bn.gamma"), p.get("bn.beta"), cfg.bn_eps, &out.bn_mean,
                         &out.bn_var);
  } else {
    hn = batchnorm_eval(h, p.get("bn.gamma"), p.get("bn.beta"), state.get("bn.running_mean"),
                        state.get("bn.running_var"), cfg.bn_eps);
  }

  // Temporal aggregation: per-channel mean over the window plus the
  // activations at the final frame (the frame the labels refer to).
  Var by_ch = reshape(permute021(reshape(hn, {B, k, C})), {B * C, k});
  Var avg = reshape(mul_scalar(row_sum(by_ch), 1.0 / static_cast<double>(k)), {B, C});
  Var last = reshape(slice_cols(by_ch, k - 1, k), {B, C});
  Var feat = concat_cols(avg, last);                                      // [B, 2C]

  Var z = relu(add(matmul(feat, transpose(p.get("encoder.weight"))),
                   bcast_row(p.get("encoder.bias"), B)));                 // [B, E]

  out.loc_logits = mlp_head(t, p, "head_loc", z);
  Var mode_post = softmax_rows(out.loc_logits);
  Var zf = concat_cols(z, mode_post);                                     // [B, E+modes]
  out.gait_logits = mlp_head(t, p, "head_gait", zf);
  out.incline = mlp_head(t, p, "head_inc", zf);
  return out;
}

int argmax_row(const Tensor& logits, long row) {
  const long c = logits.dim(1);
  const double* d = logits.data() + row * c;
  int best = 0;
  for (long j = 1; j < c; ++j)
    if (d[j] > d[best]) best = static_cast<int>(j);
  return best;
}

Predictions predict(const Tensor& gait_logits, const Tensor& loc_logits, const Tensor& incline) {
  const long B = gait_logits.dim(0);
  if (loc_logits.dim(0) != B || incline.dim(0) != B)
    throw std::invalid_argument("predict: batch size mismatch across heads");
  Predictions out;
  out.gait.reserve(static_cast<size_t>(B));
  out.loc.reserve(static_cast<size_t>(B));
  out.incline.reserve(static_cast<size_t>(B));
  for (long i = 0; i < B; ++i) {
    out.gait.push_back(argmax_row(gait_logits, i));
    out.loc.push_back(argmax_row(loc_logits, i));
    out.incline.push_back(incline[i]);
  }
  return out;
}

// ------------------------------------------------------------ serialization

namespace {
constexpr char kMagic[6] = {'M', 'G', 'A', 'I', 'T', '1'};
}

void save_params(const ParameterSet& params, const std::string& path) {
  nlohmann::json header;
  header["format"] = 1;
  auto& list = header["tensors"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& e : params.entries()) {
    nlohmann::json t;
    t["name"] = e.name;
    t["shape"] = e.tensor.shape();
    t["offset"] = offset;
    t["trainable"] = e.trainable;
    list.push_back(std::move(t));
    offset += static_cast<uint64_t>(e.tensor.size()) * sizeof(double);
  }
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_params: cannot open " + path);
  f.write(kMagic, sizeof(kMagic));
  const uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& e : params.entries())
    f.write(reinterpret_cast<const char*>(e.tensor.data()),
            static_cast<std::streamsize>(e.tensor.size() * sizeof(double)));
  if (!f) throw std::runtime_error("save_params: write failed for " + path);
}

ParameterSet load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_params: cannot open " + path);
  char magic[6];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_params: bad magic in " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f || hlen == 0 || hlen > (1u << 20))
    throw std::runtime_error("load_params: corrupt header length");
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw std::runtime_error("load_params: truncated header");
  nlohmann::json header = nlohmann::json::parse(hs);
  if (header.at("format").get<int>() != 1)
    throw std::runtime_error("load_params: unsupported format version");

  ParameterSet p;
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const std::vector<long> shape = t.at("shape").get<std::vector<long>>();
    const bool trainable = t.at("trainable").get<bool>();
    Tensor tensor = Tensor::zeros(shape);
    f.read(reinterpret_cast<char*>(tensor.mutable_data()),
           static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    if (!f) throw std::runtime_error("load_params: truncated payload for " + name);
    p.add(name, std::move(tensor), trainable);
  }
  return p;
}

}  // namespace mgait
