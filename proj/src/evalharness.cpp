#include "mgait/evalharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "mgait/rng.hpp"

namespace mgait {

// ------------------------------------------------------------------- metrics

CI confidence_interval(const std::vector<double>& values) {
  const long n = static_cast<long>(values.size());
  if (n < 2)
    throw std::invalid_argument("confidence_interval: need at least 2 values, got " +
                                std::to_string(n));
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(n)), n};
}

EvalOutputs predict_windows(const ParameterSet& params, const ModelConfig& cfg,
                            const Dataset& ds, const std::vector<WindowRef>& refs,
                            long batch_cap) {
  if (batch_cap < 1) throw std::invalid_argument("predict_windows: bad batch cap");
  EvalOutputs out;
  out.gait.reserve(refs.size());
  out.loc.reserve(refs.size());
  out.incline.reserve(refs.size());
  const long n = static_cast<long>(refs.size());
  for (long lo = 0; lo < n; lo += batch_cap) {
    const long hi = std::min(n, lo + batch_cap);
    TaskData batch = gather_windows(
        ds, std::vector<WindowRef>(refs.begin() + lo, refs.begin() + hi), cfg.window_len);
    Trace t;
    ParamVars pv = make_param_vars(t, params, /*trainable_only=*/true);
    ForwardOut fo = forward(t, pv, params, batch.windows, RunMode::kEval, cfg);
    Predictions pr = predict(fo.gait_logits.value(), fo.loc_logits.value(), fo.incline.value());
    out.gait.insert(out.gait.end(), pr.gait.begin(), pr.gait.end());
    out.loc.insert(out.loc.end(), pr.loc.begin(), pr.loc.end());
    out.incline.insert(out.incline.end(), pr.incline.begin(), pr.incline.end());
  }
  return out;
}

Metrics score_predictions(const EvalOutputs& pred, const Dataset& ds,
                          const std::vector<WindowRef>& refs, int mode_filter) {
  if (pred.gait.size() != refs.size())
    throw std::invalid_argument("score_predictions: prediction/reference size mismatch");
  Metrics m;
  m.confusion.assign(kNumPhases * kNumPhases, 0);
  long gait_hits = 0, loc_hits = 0;
  double se = 0.0;
  for (size_t i = 0; i < refs.size(); ++i) {
    const Session& s = ds.sessions.at(static_cast<size_t>(refs[i].session));
    const bool keep = mode_filter == kAllModes ||
                      (mode_filter == kStairModes &&
                       (s.mode == kStairAscent || s.mode == kStairDescent)) ||
                      s.mode == mode_filter;
    if (!keep) continue;
    ++m.n;
    const int true_gait = s.gait.at(static_cast<size_t>(refs[i].end));
    if (pred.gait[i] == true_gait) ++gait_hits;
    if (pred.loc[i] == s.mode) ++loc_hits;
    const double d = pred.incline[i] - s.incline;
    se += d * d;
    m.confusion[static_cast<size_t>(true_gait * kNumPhases + pred.gait[i])] += 1;
  }
  if (m.n > 0) {
    m.gait_acc = static_cast<double>(gait_hits) / static_cast<double>(m.n);
    m.loc_acc = static_cast<double>(loc_hits) / static_cast<double>(m.n);
    m.incline_rmse = std::sqrt(se / static_cast<double>(m.n));
  }
  return m;
}

// ----------------------------------------------------------------- scenarios

ScenarioSpec scenario_spec(const std::string& name) {
  if (name == "S1") return {"S1", {1.5, 2.0, 2.5, 3.0, 3.5}, {4}};
  if (name == "S2") return {"S2", {3.5}, {0, 1, 2, 3, 4}};
  if (name == "S3") return {"S3", {3.5}, {4}};
  throw std::invalid_argument("scenario_spec: unknown scenario " + name);
}

// -------------------------------------------------------- window selection

namespace {

// Calibration sessions for one subject: per (mode, speed) condition the
// session with the smallest incline magnitude, first repeat.
std::vector<int> calibration_sessions(const Dataset& ds, int subject) {
  std::map<std::pair<int, double>, std::pair<double, int>> best;  // key -> (|incline|, idx)
  for (size_t si = 0; si < ds.sessions.size(); ++si) {
    const Session& s = ds.sessions[si];
    if (s.subject != subject) continue;
    const auto key = std::make_pair(s.mode, s.speed);
    const double mag = std::abs(s.incline);
    auto it = best.find(key);
    if (it == best.end() || mag < it->second.first)
      best[key] = {mag, static_cast<int>(si)};
  }
  std::vector<int> out;
  out.reserve(best.size());
  for (const auto& [key, val] : best) out.push_back(val.second);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<WindowRef> calibration_refs(const Dataset& ds, int subject, double duration_s,
                                        long k, long stride) {
  std::vector<WindowRef> out;
  for (int si : calibration_sessions(ds, subject)) {
    const Session& s = ds.sessions[static_cast<size_t>(si)];
    const long cal_frames = std::min(s.frames, std::lround(duration_s / s.dt));
    for (long end = k - 1; end < cal_frames; end += stride) out.push_back({si, end});
  }
  return out;
}

std::vector<WindowRef> query_refs(const Dataset& ds, int subject, double max_duration_s,
                                  long k, long stride) {
  const std::vector<int> cal = calibration_sessions(ds, subject);
  std::vector<WindowRef> out;
  for (const WindowRef& w : subject_windows(ds, subject, k, stride)) {
    const Session& s = ds.sessions[static_cast<size_t>(w.session)];
    if (std::find(cal.begin(), cal.end(), w.session) != cal.end()) {
      const long reserved = std::min(s.frames, std::lround(max_duration_s / s.dt));
      if (w.end - k + 1 < reserved) continue;  // shares frames with calibration
    }
    out.push_back(w);
  }
  return out;
}

// ------------------------------------------------------------------- harness

namespace {

struct RawRec {
  std::string method, mode, metric;
  double duration;
  int steps, subject, seed;
  double value;
};

const std::pair<const char*, int> kModeGroups[] = {
    {"ALL", kAllModes},      {"LW", kLevelWalk},     {"RA", kRampAscent},
    {"RD", kRampDescent},    {"SA", kStairAscent},   {"SD", kStairDescent},
    {"STAIRS", kStairModes},
};

double method_lr(const HarnessConfig& hc, const std::string& method) {
  if (method == "MAML") return hc.maml_ft_lr;
  if (method == "RI") return hc.ri_ft_lr;
  if (method == "TL") return hc.tl_ft_lr;
  if (method == "SFT") return hc.sft_ft_lr;
  if (method == "DE") return 0.0;
  throw std::invalid_argument("run_loso: unknown method " + method);
}

std::vector<std::string> method_frozen(const std::string& method) {
  if (method == "TL") return frozen_prefixes(BaselineKind::kTL);
  return {};
}

}  // namespace

std::vector<std::vector<WindowRef>> condition_pools(const Dataset& ds, long k, long stride,
                                                    int exclude_subject) {
  std::map<std::tuple<int, int, double, double>, std::vector<WindowRef>> by_condition;
  for (size_t si = 0; si < ds.sessions.size(); ++si) {
    const Session& s = ds.sessions[si];
    if (s.subject == exclude_subject) continue;
    std::vector<WindowRef> refs = session_windows(s, k, stride);
    for (WindowRef& w : refs) w.session = static_cast<int>(si);
    auto& pool = by_condition[{s.subject, s.mode, s.speed, s.incline}];
    pool.insert(pool.end(), refs.begin(), refs.end());
  }
  std::vector<std::vector<WindowRef>> out;
  out.reserve(by_condition.size());
  for (auto& [key, pool] : by_condition) out.push_back(std::move(pool));
  return out;
}

HarnessResult run_loso(const Dataset& ds, const HarnessConfig& hc) {
  const auto t0 = std::chrono::steady_clock::now();
  HarnessResult hr;
  hr.scenario = scenario_spec(hc.scenario);
  if (!hc.s1_durations.empty()) {
    if (hc.scenario != "S1")
      throw std::invalid_argument("run_loso: duration grid is only free in scenario S1");
    if (!std::is_sorted(hc.s1_durations.begin(), hc.s1_durations.end()) ||
        hc.s1_durations.front() <= 0.0)
      throw std::invalid_argument("run_loso: durations must be positive and ascending");
    hr.scenario.durations_s = hc.s1_durations;
  }
  if (!hc.s2_steps.empty()) {
    if (hc.scenario != "S2")
      throw std::invalid_argument("run_loso: step grid is only free in scenario S2");
    if (!std::is_sorted(hc.s2_steps.begin(), hc.s2_steps.end()) || hc.s2_steps.front() < 0)
      throw std::invalid_argument("run_loso: steps must be non-negative and ascending");
    hr.scenario.steps = hc.s2_steps;
  }
  if (hc.repeat_seeds < 1) throw std::invalid_argument("run_loso: need at least one repeat");
  for (const std::string& m : hc.methods) method_lr(hc, m);  // validate names

  const long k = hc.model.window_len;
  const double max_dur =
      *std::max_element(hr.scenario.durations_s.begin(), hr.scenario.durations_s.end());
  hr.headline_duration = max_dur;
  hr.headline_steps = std::find(hr.scenario.steps.begin(), hr.scenario.steps.end(), 2) !=
                              hr.scenario.steps.end()
                          ? 2
                          : *std::max_element(hr.scenario.steps.begin(), hr.scenario.steps.end());

  std::vector<int> folds = hc.folds;
  if (folds.empty())
    for (int s = 0; s < ds.config.subjects; ++s) folds.push_back(s);

  const bool wants_maml =
      std::find(hc.methods.begin(), hc.methods.end(), "MAML") != hc.methods.end();
  bool wants_pretrained = false;
  for (const std::string& m : hc.methods)
    if (m == "DE" || m == "TL" || m == "SFT") wants_pretrained = true;

  std::vector<RawRec> raw;
  for (const std::string& method : hc.methods) hr.confusion[method].assign(kNumPhases * kNumPhases, 0);

  for (int fold : folds) {
    // query pool: identical across the scenario's durations
    const std::vector<WindowRef> qrefs =
        query_refs(ds, fold, max_dur, k, hc.window_stride * hc.eval_stride_mult);
    if (qrefs.empty()) throw std::runtime_error("run_loso: empty query pool for fold");
    for (const WindowRef& w : qrefs)
      if (ds.sessions[static_cast<size_t>(w.session)].subject != fold)
        throw std::logic_error("run_loso: query window leaked from another subject");

    // training pools exclude the held-out subject entirely; one meta-learning
    // task per walking condition (subject x mode x speed x incline)
    const std::vector<std::vector<WindowRef>> train_pools =
        condition_pools(ds, k, hc.window_stride, fold);
    if (train_pools.empty()) throw std::runtime_error("run_loso: no training subjects");
    std::vector<WindowRef> pretrain_pool;
    for (const auto& pool : train_pools)
      pretrain_pool.insert(pretrain_pool.end(), pool.begin(), pool.end());

    for (int rep = 0; rep < hc.repeat_seeds; ++rep) {
      ParameterSet maml_params;
      if (wants_maml) {
        maml_params = init_params(hc.model, seed_mix(hc.seed, fold, rep, 1));
        MetaConfig mc = hc.meta;
        mc.seed = seed_mix(hc.seed, fold, rep, 2);
        std::vector<EpisodeSampler> samplers;
        for (const auto& pool : train_pools)
          samplers.push_back(ref_sampler(ds, pool, k, mc.n_support, mc.m_query));
        meta_train(maml_params, samplers, mc, hc.model, hc.weights);
      }
      ParameterSet pre_params;
      if (wants_pretrained) {
        pre_params = init_params(hc.model, seed_mix(hc.seed, fold, rep, 3));
        PretrainConfig pc = hc.pretrain;
        pc.seed = seed_mix(hc.seed, fold, rep, 4);
        PoolSource src;
        src.size = static_cast<long>(pretrain_pool.size());
        src.fetch = [&ds, &pretrain_pool, k](const std::vector<long>& idx) {
          std::vector<WindowRef> refs;
          refs.reserve(idx.size());
          for (long i : idx) refs.push_back(pretrain_pool[static_cast<size_t>(i)]);
          return gather_windows(ds, refs, k);
        };
        pretrain(pre_params, src, pc, hc.model, hc.weights);
      }

      for (double dur : hr.scenario.durations_s) {
        const std::vector<WindowRef> crefs =
            calibration_refs(ds, fold, dur, k, hc.window_stride);
        if (crefs.empty()) throw std::runtime_error("run_loso: empty calibration pool");
        for (const WindowRef& w : crefs)
          if (ds.sessions[static_cast<size_t>(w.session)].subject != fold)
            throw std::logic_error("run_loso: calibration window leaked from another subject");
        const TaskData cal = gather_windows(ds, crefs, k);

        for (const std::string& method : hc.methods) {
          ParameterSet deployed;
          if (method == "MAML") deployed = maml_params;
          else if (method == "RI") deployed = init_params(hc.model, seed_mix(hc.seed, fold, rep, 5));
          else deployed = pre_params;

          // direct eval has exactly one valid cell per duration: zero steps
          std::vector<int> step_grid = method == "DE" ? std::vector<int>{0} : hr.scenario.steps;
          std::sort(step_grid.begin(), step_grid.end());

          const double lr = method_lr(hc, method);
          const std::vector<std::string> frozen = method_frozen(method);
          int done = 0;
          for (int target : step_grid) {
            if (target > done) {
              FineTuneConfig ft;
              ft.lr = lr;
              ft.steps = target - done;
              fine_tune(deployed, cal.windows, cal.labels, ft, hc.model, hc.weights, frozen);
              done = target;
            }
            EvalOutputs pred = predict_windows(deployed, hc.model, ds, qrefs);
            for (const auto& [gname, gfilter] : kModeGroups) {
              Metrics m = score_predictions(pred, ds, qrefs, gfilter);
              if (m.n == 0) continue;
              raw.push_back({method, gname, "gait_acc", dur, target, fold, rep, m.gait_acc});
              raw.push_back({method, gname, "loc_acc", dur, target, fold, rep, m.loc_acc});
              raw.push_back({method, gname, "incline_rmse", dur, target, fold, rep, m.incline_rmse});
              if (gfilter == kAllModes && dur == hr.headline_duration &&
                  (target == hr.headline_steps || (method == "DE" && target == 0))) {
                auto& pool = hr.confusion[method];
                for (size_t i = 0; i < pool.size(); ++i) pool[i] += m.confusion[i];
              }
            }
          }
        }
      }
    }
  }

  // raw rows, then per-subject means over repeats, then means over subjects
  for (const RawRec& r : raw)
    hr.rows.push_back({r.method, r.subject, r.mode, r.metric, r.value, 0.0, r.duration,
                       r.steps, r.seed});

  std::map<std::tuple<std::string, std::string, std::string, double, int>,
           std::map<int, std::vector<double>>>
      cells;
  for (const RawRec& r : raw)
    cells[{r.method, r.mode, r.metric, r.duration, r.steps}][r.subject].push_back(r.value);

  for (const auto& [key, by_subject] : cells) {
    const auto& [method, mode, metric, dur, steps] = key;
    std::vector<double> subject_means;
    for (const auto& [subject, vals] : by_subject) {
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      const double half = vals.size() >= 2 ? confidence_interval(vals).half : 0.0;
      hr.rows.push_back({method, subject, mode, metric, mean, half, dur, steps, -1});
      subject_means.push_back(mean);
    }
    double mean = 0.0;
    for (double v : subject_means) mean += v;
    mean /= static_cast<double>(subject_means.size());
    const double half =
        subject_means.size() >= 2 ? confidence_interval(subject_means).half : 0.0;
    hr.rows.push_back({method, -1, mode, metric, mean, half, dur, steps, -1});
  }

  hr.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return hr;
}

// -------------------------------------------------------------------- report

void emit_report(const HarnessResult& hr, const HarnessConfig& hc, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    std::FILE* f = std::fopen((fs::path(out_dir) / "results.csv").string().c_str(), "wb");
    if (!f) throw std::runtime_error("emit_report: cannot open results.csv");
    std::fputs("method,subject,mode,metric,value,ci,duration_s,steps,seed\n", f);
    for (const ResultRow& r : hr.rows)
      std::fprintf(f, "%s,%d,%s,%s,%.9g,%.9g,%.9g,%d,%d\n", r.method.c_str(), r.subject,
                   r.mode.c_str(), r.metric.c_str(), r.value, r.ci, r.duration_s, r.steps,
                   r.seed);
    std::fclose(f);
  }

  {
    std::FILE* f = std::fopen((fs::path(out_dir) / "confusion.csv").string().c_str(), "wb");
    if (!f) throw std::runtime_error("emit_report: cannot open confusion.csv");
    std::fputs("method,true_phase,pred_phase,count\n", f);
    for (const auto& [method, pool] : hr.confusion)
      for (int i = 0; i < kNumPhases; ++i)
        for (int j = 0; j < kNumPhases; ++j)
          std::fprintf(f, "%s,%d,%d,%ld\n", method.c_str(), i, j,
                       pool[static_cast<size_t>(i * kNumPhases + j)]);
    std::fclose(f);
  }

  nlohmann::json summary;
  summary["scenario"] = hr.scenario.name;
  summary["durations_s"] = hr.scenario.durations_s;
  summary["steps"] = hr.scenario.steps;
  summary["headline"] = {{"duration_s", hr.headline_duration}, {"steps", hr.headline_steps}};
  summary["wall_s"] = hr.wall_s;
  summary["config"] = {
      {"methods", hc.methods},
      {"repeat_seeds", hc.repeat_seeds},
      {"window_stride", hc.window_stride},
      {"eval_stride_mult", hc.eval_stride_mult},
      {"meta", {{"alpha", hc.meta.alpha}, {"beta", hc.meta.beta},
                {"inner_steps", hc.meta.inner_steps}, {"epochs", hc.meta.epochs},
                {"n_support", hc.meta.n_support}, {"m_query", hc.meta.m_query},
                {"first_order", hc.meta.first_order}}},
      {"pretrain", {{"lr", hc.pretrain.adam.lr}, {"batch", hc.pretrain.batch},
                    {"epochs", hc.pretrain.epochs},
                    {"max_batches_per_epoch", hc.pretrain.max_batches_per_epoch}}},
      {"fine_tune_lr", {{"MAML", hc.maml_ft_lr}, {"RI", hc.ri_ft_lr},
                        {"TL", hc.tl_ft_lr}, {"SFT", hc.sft_ft_lr}}},
  };

  // headline aggregates: per-method ALL-mode rows, with the CI basis labeled
  auto& methods = summary["methods"] = nlohmann::json::object();
  for (const ResultRow& r : hr.rows) {
    if (r.duration_s != hr.headline_duration || r.mode != "ALL") continue;
    const bool headline_cell = r.steps == hr.headline_steps || (r.method == "DE" && r.steps == 0);
    if (!headline_cell) continue;
    if (r.subject == -1) {
      methods[r.method]["overall"][r.metric] = {{"mean", r.value}, {"ci_half", r.ci},
                                                {"ci_basis", "subjects"}};
    } else if (r.seed == -1) {
      methods[r.method]["per_subject"][std::to_string(r.subject)][r.metric] = {
          {"mean", r.value}, {"ci_half", r.ci}, {"ci_basis", "repeat_seeds"}};
    }
  }

  std::ofstream sf(fs::path(out_dir) / "summary.json");
  if (!sf) throw std::runtime_error("emit_report: cannot open summary.json");
  sf << summary.dump(2) << '\n';
}

}  // namespace mgait
