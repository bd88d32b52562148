#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mgait/meta.hpp"
#include "mgait/rng.hpp"
#include "oracles.hpp"

using namespace mgait;

namespace {

// single scalar parameter set
ParameterSet one_param(double v) {
  ParameterSet p;
  p.add("theta", Tensor::scalar(v));
  return p;
}

// loss = theta^2 (support and query alike unless overridden)
EpisodeLoss quadratic() {
  return [](Trace&, const ParamVars& pv) {
    Var th = pv.get("theta");
    return sum_all(mul(th, th));
  };
}

// loss = c * theta
EpisodeLoss linear(double c) {
  return [c](Trace&, const ParamVars& pv) { return sum_all(mul_scalar(pv.get("theta"), c)); };
}

// loss = theta (identity readout)
EpisodeLoss identity_loss() {
  return [](Trace&, const ParamVars& pv) { return sum_all(pv.get("theta")); };
}

TaskData constant_task(Rng& rng, const ModelConfig& cfg, long n_windows, int gait, int loc,
                       double incline) {
  TaskData task;
  task.windows = Tensor::zeros({n_windows, cfg.in_channels, cfg.window_len});
  for (long i = 0; i < task.windows.size(); ++i)
    task.windows.mutable_data()[i] = rng.uniform(-1, 1);
  task.labels.gait.assign(static_cast<size_t>(n_windows), gait);
  task.labels.loc.assign(static_cast<size_t>(n_windows), loc);
  task.labels.incline.assign(static_cast<size_t>(n_windows), incline);
  return task;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.conv_channels = 4;
  cfg.conv_kernel = 3;
  cfg.window_len = 12;
  cfg.encoder_width = 8;
  cfg.head_width = 6;
  return cfg;
}

}  // namespace

TEST_CASE("episode sampling: sizes, disjointness, determinism") {
  ModelConfig cfg = tiny_config();
  Rng rng(3);
  TaskData task = constant_task(rng, cfg, 30, 1, 2, 5.0);
  // tag each window's first value with its index so provenance is recoverable
  const long stride = cfg.in_channels * cfg.window_len;
  for (long i = 0; i < 30; ++i) task.windows.mutable_data()[i * stride] = 1000.0 + i;

  Episode ep = sample_episode(task, 8, 12, 42);
  CHECK(ep.support_x.dim(0) == 8);
  CHECK(ep.query_x.dim(0) == 12);
  CHECK(ep.support_y.gait.size() == 8);
  CHECK(ep.query_y.incline.size() == 12);

  std::vector<long> seen;
  for (long i = 0; i < 8; ++i)
    seen.push_back(static_cast<long>(ep.support_x[i * stride]) - 1000);
  for (long i = 0; i < 12; ++i)
    seen.push_back(static_cast<long>(ep.query_x[i * stride]) - 1000);
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());  // all distinct
  for (long v : seen) CHECK((v >= 0 && v < 30));

  Episode ep2 = sample_episode(task, 8, 12, 42);
  CHECK(bits_equal(ep.support_x, ep2.support_x));
  CHECK(bits_equal(ep.query_x, ep2.query_x));
  Episode ep3 = sample_episode(task, 8, 12, 43);
  CHECK(!bits_equal(ep.support_x, ep3.support_x));

  CHECK_THROWS_AS(sample_episode(task, 20, 11, 0), std::invalid_argument);
  CHECK_THROWS_AS(sample_episode(task, 0, 5, 0), std::invalid_argument);
}

TEST_CASE("inner adaptation: linear support loss moves theta by -alpha*c") {
  // support L = -2*theta  =>  theta' = theta + 2*alpha = 2.2 for alpha 0.1
  // query L = theta'      =>  dLq/dtheta = 1, so theta <- theta - beta
  ParameterSet p = one_param(2.0);
  std::vector<TaskClosures> tasks = {{linear(-2.0), identity_loss()}};
  MetaStepStats s = meta_update(p, tasks, 0.1, 0.5, 1, false);
  CHECK(s.support_loss == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(s.query_loss == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(p.get("theta")[0] == doctest::Approx(2.0 - 0.5 * 1.0).epsilon(1e-12));
}

TEST_CASE("meta-gradient differentiates through the inner step exactly") {
  // support L = theta^2: theta' = theta(1-2a); query L = theta'^2.
  // dLq/dtheta = 2*theta*(1-2a)^s after s inner steps.
  const double theta0 = 1.7, a = 0.05, b = 0.01;
  for (int steps : {1, 2, 3}) {
    ParameterSet p = one_param(theta0);
    std::vector<TaskClosures> tasks = {{quadratic(), quadratic()}};
    meta_update(p, tasks, a, b, steps, false);
    const double factor = std::pow(1.0 - 2.0 * a, steps);
    const double want = theta0 - b * 2.0 * theta0 * factor * factor;
    CHECK(oracle::rel_err(p.get("theta")[0], want, 1e-12) < 1e-12);
  }
}

TEST_CASE("half-step quadratic: full vs first-order meta-gradient") {
  // support L = theta^2/2 with alpha 0.5: theta' = theta/2; query L = theta'.
  // Full second-order meta-gradient is 0.5; first-order drops the curvature
  // term and yields 1.0.
  auto half_quadratic = [](Trace&, const ParamVars& pv) {
    Var th = pv.get("theta");
    return mul_scalar(sum_all(mul(th, th)), 0.5);
  };
  for (bool fo : {false, true}) {
    ParameterSet p = one_param(3.0);
    std::vector<TaskClosures> tasks = {{half_quadratic, identity_loss()}};
    meta_update(p, tasks, 0.5, 1.0, 1, fo);
    const double grad = fo ? 1.0 : 0.5;
    CHECK(oracle::rel_err(p.get("theta")[0], 3.0 - grad, 1e-12) < 1e-12);
  }
}

TEST_CASE("first-order equals full on curvature-free support losses") {
  // linear support loss has zero Hessian, so the approximation is exact
  for (bool fo : {false, true}) {
    ParameterSet p = one_param(1.25);
    std::vector<TaskClosures> tasks = {{linear(3.0), quadratic()}};
    meta_update(p, tasks, 0.2, 0.1, 1, fo);
    // theta' = theta - 0.2*3 = 0.65; dLq/dtheta = 2*theta' for both variants
    CHECK(oracle::rel_err(p.get("theta")[0], 1.25 - 0.1 * 2.0 * 0.65, 1e-12) < 1e-12);
  }
}

TEST_CASE("meta-gradients sum over tasks in task order") {
  // two tasks with linear query losses c1, c2 and no adaptation effect
  ParameterSet p = one_param(0.0);
  std::vector<TaskClosures> tasks = {{linear(0.0), linear(2.0)}, {linear(0.0), linear(-5.0)}};
  meta_update(p, tasks, 0.1, 1.0, 1, false);
  CHECK(p.get("theta")[0] == doctest::Approx(-(2.0 - 5.0)).epsilon(1e-12));
}

TEST_CASE("alpha 0 reduces the meta-gradient to the pooled query gradient") {
  const double theta0 = 0.8;
  ParameterSet p = one_param(theta0);
  std::vector<TaskClosures> tasks = {{quadratic(), quadratic()}, {quadratic(), quadratic()}};
  meta_update(p, tasks, 0.0, 0.25, 1, false);
  // each task's query gradient is 2*theta; two tasks sum to 4*theta
  CHECK(oracle::rel_err(p.get("theta")[0], theta0 - 0.25 * 4.0 * theta0, 1e-12) < 1e-12);
}

TEST_CASE("meta-gradient matches central finite differences") {
  // support L = theta^2 + theta, query L = sin-free polynomial (theta')^3
  auto support = [](Trace&, const ParamVars& pv) {
    Var th = pv.get("theta");
    return sum_all(add(mul(th, th), th));
  };
  auto query = [](Trace&, const ParamVars& pv) {
    Var th = pv.get("theta");
    return sum_all(mul(mul(th, th), th));
  };
  const double a = 0.07, theta0 = 0.9;

  auto adapted_query = [&](double th) {
    const double adapted = th - a * (2.0 * th + 1.0);
    return adapted * adapted * adapted;
  };
  const double h = 1e-6;
  const double fd = (adapted_query(theta0 + h) - adapted_query(theta0 - h)) / (2.0 * h);

  ParameterSet p = one_param(theta0);
  std::vector<TaskClosures> tasks = {{support, query}};
  meta_update(p, tasks, a, 1.0, 1, false);
  const double applied_grad = theta0 - p.get("theta")[0];
  CHECK(oracle::rel_err(applied_grad, fd, 1e-8) < 1e-8);
}

TEST_CASE("zero epochs leaves parameters bit-identical") {
  ModelConfig cfg = tiny_config();
  ParameterSet p = init_params(cfg, 5);
  ParameterSet before = p;
  Rng rng(1);
  std::vector<TaskData> tasks = {constant_task(rng, cfg, 20, 0, 0, 0.0)};
  MetaConfig mc;
  mc.epochs = 0;
  mc.n_support = 4;
  mc.m_query = 4;
  LossWeights w;
  auto log = meta_train(p, tasks, mc, cfg, w);
  CHECK(log.empty());
  CHECK(bits_equal(p, before));
}

TEST_CASE("meta-training is bit-deterministic in the seed") {
  ModelConfig cfg = tiny_config();
  Rng rng(7);
  std::vector<TaskData> tasks = {constant_task(rng, cfg, 24, 1, 2, 5.0),
                                 constant_task(rng, cfg, 24, 3, 0, -5.0)};
  MetaConfig mc;
  mc.epochs = 3;
  mc.n_support = 6;
  mc.m_query = 8;
  mc.beta = 1e-3;
  mc.seed = 99;
  LossWeights w;

  ParameterSet a = init_params(cfg, 11);
  ParameterSet b = init_params(cfg, 11);
  meta_train(a, tasks, mc, cfg, w);
  meta_train(b, tasks, mc, cfg, w);
  CHECK(bits_equal(a, b));

  ParameterSet c = init_params(cfg, 11);
  MetaConfig mc2 = mc;
  mc2.seed = 100;
  meta_train(c, tasks, mc2, cfg, w);
  CHECK(!bits_equal(a, c));
}

TEST_CASE("meta-training fits constant-label tasks") {
  ModelConfig cfg = tiny_config();
  Rng rng(21);
  std::vector<TaskData> tasks;
  tasks.push_back(constant_task(rng, cfg, 30, 1, 2, 4.0));
  tasks.push_back(constant_task(rng, cfg, 30, 1, 2, 4.0));
  MetaConfig mc;
  mc.epochs = 40;
  mc.n_support = 8;
  mc.m_query = 10;
  mc.alpha = 0.01;
  mc.beta = 5e-2;
  mc.seed = 5;
  LossWeights w;

  ParameterSet p = init_params(cfg, 2);
  auto log = meta_train(p, tasks, mc, cfg, w);
  REQUIRE(log.size() == 40);
  // averaged over a few epochs to smooth episode resampling noise
  auto avg_query = [&](size_t lo, size_t hi) {
    double s = 0.0;
    for (size_t i = lo; i < hi; ++i) s += log[i].query_loss;
    return s / static_cast<double>(hi - lo);
  };
  CHECK(avg_query(35, 40) < 0.6 * avg_query(0, 5));

  // running statistics were updated away from their (0,1) initialization
  CHECK(!bits_equal(p.get("bn.running_mean"), Tensor::zeros({1, cfg.conv_channels})));
  CHECK(!bits_equal(p.get("bn.running_var"), Tensor::full({1, cfg.conv_channels}, 1.0)));
}

TEST_CASE("epoch log file is written") {
  ModelConfig cfg = tiny_config();
  Rng rng(4);
  std::vector<TaskData> tasks = {constant_task(rng, cfg, 20, 0, 1, 0.0)};
  MetaConfig mc;
  mc.epochs = 2;
  mc.n_support = 4;
  mc.m_query = 4;
  mc.log_path = "meta_log_test.csv";
  LossWeights w;
  ParameterSet p = init_params(cfg, 1);
  meta_train(p, tasks, mc, cfg, w);

  std::ifstream f(mc.log_path);
  REQUIRE(f.good());
  std::string line;
  std::getline(f, line);
  CHECK(line == "epoch,support_loss,query_loss,wall_s");
  int rows = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
  f.close();
  std::remove(mc.log_path.c_str());
}

TEST_CASE("fine-tune: descent, freezing, and stat preservation") {
  ModelConfig cfg = tiny_config();
  Rng rng(31);
  TaskData task = constant_task(rng, cfg, 16, 2, 3, 8.0);
  ParameterSet p = init_params(cfg, 9);
  Tensor rm_before = p.get("bn.running_mean").clone();
  Tensor rv_before = p.get("bn.running_var").clone();
  Tensor conv_before = p.get("conv.weight").clone();

  LossWeights w;
  FineTuneConfig ft;
  ft.lr = 0.05;
  ft.steps = 80;
  auto losses = fine_tune(p, task.windows, task.labels, ft, cfg, w, {"conv.", "bn."});
  REQUIRE(losses.size() == 81);
  CHECK(losses.back() < 0.7 * losses.front());

  // frozen prefixes and running statistics are bit-identical
  CHECK(bits_equal(p.get("conv.weight"), conv_before));
  CHECK(bits_equal(p.get("bn.running_mean"), rm_before));
  CHECK(bits_equal(p.get("bn.running_var"), rv_before));

  // unfrozen layers moved
  ParameterSet q = init_params(cfg, 9);
  CHECK(!bits_equal(p.get("encoder.weight"), q.get("encoder.weight")));
}

TEST_CASE("fine-tune with zero learning rate changes nothing") {
  ModelConfig cfg = tiny_config();
  Rng rng(8);
  TaskData task = constant_task(rng, cfg, 10, 0, 0, 0.0);
  ParameterSet p = init_params(cfg, 3);
  ParameterSet before = p;
  FineTuneConfig ft;
  ft.lr = 0.0;
  ft.steps = 5;
  LossWeights w;
  auto losses = fine_tune(p, task.windows, task.labels, ft, cfg, w);
  CHECK(bits_equal(p, before));
  for (double l : losses) CHECK(l == losses.front());
}

TEST_CASE("one meta-epoch on the full network matches a hand-rolled update") {
  // Cross-check meta_epoch against an explicit re-implementation of the same
  // sequence (sample, adapt, score, sum, step) written directly in test code.
  ModelConfig cfg = tiny_config();
  Rng rng(12);
  std::vector<TaskData> tasks = {constant_task(rng, cfg, 20, 1, 2, 5.0),
                                 constant_task(rng, cfg, 20, 0, 4, -5.0)};
  MetaConfig mc;
  mc.alpha = 0.05;
  mc.beta = 0.02;
  mc.n_support = 5;
  mc.m_query = 6;
  mc.seed = 77;
  LossWeights w;

  ParameterSet got = init_params(cfg, 40);
  meta_epoch(got, tasks, /*epoch=*/0, mc, cfg, w);

  ParameterSet want = init_params(cfg, 40);
  {
    std::vector<std::string> names;
    for (const auto& e : want.entries())
      if (e.trainable) names.push_back(e.name);
    std::vector<Tensor> acc;
    for (const auto& n : names) acc.push_back(Tensor::zeros(want.get(n).shape()));

    for (size_t ti = 0; ti < tasks.size(); ++ti) {
      Episode ep = sample_episode(tasks[ti], mc.n_support, mc.m_query,
                                  episode_seed(mc.seed, 0, ti));
      Trace t;
      ParamVars theta = make_param_vars(t, want, true);
      std::vector<Var> leaves;
      for (const auto& [n, v] : theta.vars) leaves.push_back(v);

      ForwardOut so = forward(t, theta, want, ep.support_x, RunMode::kTrain, cfg);
      update_running_stats(want, so.bn_mean, so.bn_var, cfg.bn_momentum);
      Var ls = weighted_loss(so, ep.support_y, w).total;
      GradientMap g = backward(ls, leaves);
      ParamVars adapted;
      for (const auto& [n, v] : theta.vars)
        adapted.vars.emplace_back(n, sub(v, mul_scalar(g.get_var(v), mc.alpha)));

      ForwardOut qo = forward(t, adapted, want, ep.query_x, RunMode::kTrain, cfg);
      Var lq = weighted_loss(qo, ep.query_y, w).total;
      GradientMap gq = backward(lq, leaves);
      for (size_t j = 0; j < names.size(); ++j) {
        Tensor gt = gq.get(leaves[j]);
        for (long i = 0; i < gt.size(); ++i) acc[j].mutable_data()[i] += gt[i];
      }
    }
    for (size_t j = 0; j < names.size(); ++j) {
      Tensor next = want.get(names[j]).clone();
      for (long i = 0; i < next.size(); ++i)
        next.mutable_data()[i] -= mc.beta * acc[j][i];
      want.set(names[j], std::move(next));
    }
  }
  CHECK(bits_equal(got, want));
}
