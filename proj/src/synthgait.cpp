#include "mgait/synthgait.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "mgait/rng.hpp"

namespace mgait {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kStrainScale = 1.0 / 50.0;  // degrees -> strain-like units

double frac(double x) { return x - std::floor(x); }
}  // namespace

// --------------------------------------------------------------------- modes

const char* mode_name(int mode) {
  switch (mode) {
    case kLevelWalk: return "LW";
    case kRampAscent: return "RA";
    case kRampDescent: return "RD";
    case kStairAscent: return "SA";
    case kStairDescent: return "SD";
  }
  throw std::invalid_argument("mode_name: unknown mode " + std::to_string(mode));
}

int mode_from_name(const std::string& name) {
  for (int m = 0; m < kNumModes; ++m)
    if (name == mode_name(m)) return m;
  throw std::invalid_argument("mode_from_name: unknown mode " + name);
}

const ModeCoeffs& mode_coeffs(int mode) {
  //                         h0    h1   hp1   h2  hp2    k0    k1    kp1   k2  kp2    ref   dh0    dh1   dk0    dk1
  static const ModeCoeffs table[kNumModes] = {
      /* LW */ {8.0, 22.0, 0.25, 4.0, 1.30, 28.0, 24.0, -1.95, 14.0, 0.90, 0.00, 0.55, 0.012, 0.35, 0.020},
      /* RA */ {14.0, 24.0, 0.35, 5.0, 1.50, 34.0, 27.0, -1.80, 15.0, 1.00, 7.50, 0.80, 0.015, 0.90, 0.020},
      /* RD */ {5.0, 18.0, 0.15, 6.0, 1.10, 30.0, 22.0, -2.10, 17.0, 0.70, -7.50, 0.70, 0.012, -0.80, 0.018},
      // Stair strikes land at a different point in the cycle than treadmill
      // gait, so the harmonic timing is rotated relative to the level/ramp
      // modes; the amplitudes stay in the same range.
      /* SA */ {30.0, 30.0, 1.40, 7.0, 2.60, 48.0, 36.0, -0.70, 18.0, 2.10, 33.0, 0.50, 0.010, 0.50, 0.010},
      /* SD */ {10.0, 15.0, -0.85, 5.0, 0.00, 44.0, 40.0, -1.40, 20.0, -0.40, -33.0, 0.50, 0.010, 0.50, 0.010},
  };
  if (mode < 0 || mode >= kNumModes)
    throw std::invalid_argument("mode_coeffs: unknown mode " + std::to_string(mode));
  return table[mode];
}

int phase_label(double p) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("phase_label: p outside [0,1)");
  if (p < kPhaseFractions[0]) return 0;
  if (p < kPhaseFractions[0] + kPhaseFractions[1]) return 1;
  if (p < kPhaseFractions[0] + kPhaseFractions[1] + kPhaseFractions[2]) return 2;
  return 3;
}

double stride_period(double speed, double cadence_scale) {
  if (speed <= 0.0) throw std::invalid_argument("stride_period: speed must be positive");
  return 1.1 * std::sqrt(1.0 / speed) * cadence_scale;
}

const ChannelMix& channel_mix(int channel) {
  static const ChannelMix table[kNumChannels] = {
      {1.0, 0.0},    // anterior hip
      {-0.8, 0.15},  // posterior hip
      {0.2, 1.0},    // anterior knee
      {0.0, -0.9},   // posterior knee
  };
  if (channel < 0 || channel >= kNumChannels)
    throw std::invalid_argument("channel_mix: unknown channel " + std::to_string(channel));
  return table[channel];
}

double speed_amplitude(double speed) { return 0.8 + speed / 3.0; }

// ------------------------------------------------------------------ subjects

SubjectProfile draw_profile(uint64_t cohort_seed, int subject) {
  Rng rng(seed_mix(cohort_seed, 0x7375626aULL, static_cast<uint64_t>(subject)));
  SubjectProfile s;
  s.id = subject;
  for (int c = 0; c < kNumChannels; ++c) s.gain[c] = rng.uniform(0.7, 1.3);
  for (int c = 0; c < kNumChannels; ++c) s.offset[c] = rng.uniform(-0.05, 0.05);
  for (int c = 0; c < kNumChannels; ++c) s.lag_s[c] = rng.uniform(0.0, 0.040);
  s.hysteresis_s = rng.uniform(0.01, 0.05);
  s.noise_sigma = rng.uniform(0.008, 0.02);
  s.drift_amp = rng.uniform(0.005, 0.02);
  s.drift_freq_hz = rng.uniform(0.05, 0.2);
  s.cadence_scale = rng.uniform(0.9, 1.1);
  s.excursion_scale = rng.uniform(0.85, 1.15);
  for (int c = 0; c < kNumChannels; ++c) s.placement_shift[c] = rng.uniform(-0.20, 0.20);
  s.stair_shift = rng.uniform(-0.15, 0.15);
  return s;
}

// ------------------------------------------------------------------ sessions

double clean_channel_value(const SubjectProfile& subj, int mode, double speed, double incline,
                           int channel, double t, double p0, double drift_phase, bool drift) {
  const ModeCoeffs& mc = mode_coeffs(mode);
  const ChannelMix& mix = channel_mix(channel);
  const double T = stride_period(speed, subj.cadence_scale);
  const bool stair = (mode == kStairAscent || mode == kStairDescent);
  const double p = frac(p0 + (t - subj.lag_s[channel]) / T + subj.placement_shift[channel] +
                        (stair ? subj.stair_shift : 0.0));
  const double amp = speed_amplitude(speed) * subj.excursion_scale;
  const double d = incline - mc.ref_incline;

  const double h0 = mc.h0 + mc.dh0 * d;
  const double h1 = mc.h1 * (1.0 + mc.dh1 * d) * amp;
  const double h2 = mc.h2 * amp;
  const double k0 = mc.k0 + mc.dk0 * d;
  const double k1 = mc.k1 * (1.0 + mc.dk1 * d) * amp;
  const double k2 = mc.k2 * amp;

  const double hip = h0 + h1 * std::cos(kTwoPi * p + mc.hp1) + h2 * std::cos(2 * kTwoPi * p + mc.hp2);
  const double knee = k0 + k1 * std::cos(kTwoPi * p + mc.kp1) + k2 * std::cos(2 * kTwoPi * p + mc.kp2);
  const double base = (mix.w_hip * hip + mix.w_knee * knee) * kStrainScale;

  // rate-dependent hysteresis: analytic time derivative of the clean signal
  const double dhip = -(kTwoPi * h1 * std::sin(kTwoPi * p + mc.hp1) +
                        2 * kTwoPi * h2 * std::sin(2 * kTwoPi * p + mc.hp2)) / T;
  const double dknee = -(kTwoPi * k1 * std::sin(kTwoPi * p + mc.kp1) +
                         2 * kTwoPi * k2 * std::sin(2 * kTwoPi * p + mc.kp2)) / T;
  const double dbase = (mix.w_hip * dhip + mix.w_knee * dknee) * kStrainScale;

  double v = subj.gain[channel] * (base - subj.hysteresis_s * dbase) + subj.offset[channel];
  if (drift) v += subj.drift_amp * std::sin(kTwoPi * subj.drift_freq_hz * t + drift_phase);
  return v;
}

namespace {

// The supported terrain grid: level ground, 5/10-degree ramps, 33-degree
// stairs (signed by direction).
bool supported_incline(int mode, double incline) {
  switch (mode) {
    case kLevelWalk: return incline == 0.0;
    case kRampAscent: return incline == 5.0 || incline == 10.0;
    case kRampDescent: return incline == -5.0 || incline == -10.0;
    case kStairAscent: return incline == kStairIncline;
    case kStairDescent: return incline == -kStairIncline;
    default: return false;
  }
}

}  // namespace

Session generate_session(const SubjectProfile& subj, int mode, double speed, double incline,
                         double duration_s, double dt, uint64_t session_seed,
                         const GenOptions& opts) {
  if (dt <= 0.0) throw std::invalid_argument("generate_session: dt must be positive");
  if (duration_s <= 0.0 || opts.session_scale <= 0.0)
    throw std::invalid_argument("generate_session: duration must be positive");
  if (!supported_incline(mode, incline))
    throw std::invalid_argument("generate_session: unsupported incline " +
                                std::to_string(incline) + " for mode " + mode_name(mode));

  Session s;
  s.subject = subj.id;
  s.mode = mode;
  s.speed = speed;
  s.incline = incline;
  s.dt = dt;
  s.frames = std::lround(duration_s * opts.session_scale / dt);
  if (s.frames < 1) throw std::invalid_argument("generate_session: zero frames");

  Rng rng(session_seed);
  const double p0 = rng.uniform(0.0, 1.0);
  const double drift_phase = rng.uniform(0.0, kTwoPi);
  const double T = stride_period(speed, subj.cadence_scale);

  s.signals.resize(static_cast<size_t>(s.frames) * kNumChannels);
  s.phase.resize(static_cast<size_t>(s.frames));
  s.gait.resize(static_cast<size_t>(s.frames));
  for (long i = 0; i < s.frames; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double p = frac(p0 + t / T);
    s.phase[static_cast<size_t>(i)] = p;
    s.gait[static_cast<size_t>(i)] = phase_label(p);
    for (int c = 0; c < kNumChannels; ++c) {
      double v = clean_channel_value(subj, mode, speed, incline, c, t, p0, drift_phase,
                                     opts.drift);
      if (opts.noise) v += subj.noise_sigma * rng.normal();
      s.signals[static_cast<size_t>(i) * kNumChannels + c] = v;
    }
  }
  return s;
}

// ----------------------------------------------------------------- benchmark

std::vector<ProtocolEntry> protocol() {
  std::vector<ProtocolEntry> out;
  for (double v : {0.9, 1.1, 1.3}) out.push_back({kLevelWalk, v, 0.0, 120.0, 2});
  const double ramp_speeds[3] = {0.7, 0.9, 1.1};
  for (double inc : {5.0, 10.0})
    for (double v : ramp_speeds) out.push_back({kRampAscent, v, inc, 120.0, 2});
  for (double inc : {-5.0, -10.0})
    for (double v : ramp_speeds) out.push_back({kRampDescent, v, inc, 120.0, 2});
  out.push_back({kStairAscent, 0.9, kStairIncline, 10.0, 5});
  out.push_back({kStairDescent, 0.9, -kStairIncline, 10.0, 5});
  return out;
}

Dataset build_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.subjects < 1) throw std::invalid_argument("build_benchmark: need subjects");
  Dataset ds;
  ds.config = cfg;
  const std::vector<ProtocolEntry> tasks = protocol();
  for (int s = 0; s < cfg.subjects; ++s) {
    const SubjectProfile prof = draw_profile(cfg.seed, s);
    for (size_t ti = 0; ti < tasks.size(); ++ti) {
      const ProtocolEntry& e = tasks[ti];
      for (int rep = 0; rep < e.repeats; ++rep) {
        const uint64_t seed = seed_mix(cfg.seed, static_cast<uint64_t>(s),
                                       static_cast<uint64_t>(ti), static_cast<uint64_t>(rep));
        ds.sessions.push_back(generate_session(prof, e.mode, e.speed, e.incline, e.duration_s,
                                               cfg.dt, seed, cfg.opts));
      }
    }
  }
  return ds;
}

// ------------------------------------------------------------------- windows

std::vector<WindowRef> session_windows(const Session& s, long k, long stride) {
  if (k < 1 || stride < 1) throw std::invalid_argument("session_windows: bad k or stride");
  std::vector<WindowRef> out;
  for (long end = k - 1; end < s.frames; end += stride) out.push_back({0, end});
  return out;
}

std::vector<WindowRef> subject_windows(const Dataset& ds, int subject, long k, long stride) {
  std::vector<WindowRef> out;
  for (size_t si = 0; si < ds.sessions.size(); ++si) {
    if (ds.sessions[si].subject != subject) continue;
    for (WindowRef w : session_windows(ds.sessions[si], k, stride)) {
      w.session = static_cast<int>(si);
      out.push_back(w);
    }
  }
  return out;
}

TaskData gather_windows(const Dataset& ds, const std::vector<WindowRef>& refs, long k) {
  const long n = static_cast<long>(refs.size());
  if (n < 1) throw std::invalid_argument("gather_windows: empty reference list");
  TaskData task;
  task.windows = Tensor::zeros({n, kNumChannels, k});
  task.labels.gait.reserve(refs.size());
  task.labels.loc.reserve(refs.size());
  task.labels.incline.reserve(refs.size());
  double* dst = task.windows.mutable_data();
  for (long w = 0; w < n; ++w) {
    const WindowRef& r = refs[static_cast<size_t>(w)];
    const Session& s = ds.sessions.at(static_cast<size_t>(r.session));
    if (r.end < k - 1 || r.end >= s.frames)
      throw std::invalid_argument("gather_windows: window reference out of range");
    const long first = r.end - k + 1;
    for (int c = 0; c < kNumChannels; ++c)
      for (long i = 0; i < k; ++i)
        dst[(w * kNumChannels + c) * k + i] =
            s.signals[static_cast<size_t>((first + i) * kNumChannels + c)];
    task.labels.gait.push_back(s.gait[static_cast<size_t>(r.end)]);
    task.labels.loc.push_back(s.mode);
    task.labels.incline.push_back(s.incline);
  }
  return task;
}

EpisodeSampler ref_sampler(const Dataset& ds, std::vector<WindowRef> pool, long k, long n,
                           long m) {
  if (n < 1 || m < 1) throw std::invalid_argument("ref_sampler: support and query must be non-empty");
  if (n + m > static_cast<long>(pool.size()))
    throw std::invalid_argument("ref_sampler: pool of " + std::to_string(pool.size()) +
                                " windows cannot fill " + std::to_string(n + m));
  const Dataset* dsp = &ds;  // caller keeps the dataset alive
  return [dsp, pool = std::move(pool), k, n, m](uint64_t seed) {
    std::vector<long> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0L);
    Rng rng(seed);
    rng.shuffle(idx);
    std::vector<WindowRef> spt, qry;
    spt.reserve(static_cast<size_t>(n));
    qry.reserve(static_cast<size_t>(m));
    for (long i = 0; i < n; ++i) spt.push_back(pool[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
    for (long i = n; i < n + m; ++i) qry.push_back(pool[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
    TaskData s = gather_windows(*dsp, spt, k);
    TaskData q = gather_windows(*dsp, qry, k);
    Episode ep;
    ep.support_x = std::move(s.windows);
    ep.support_y = std::move(s.labels);
    ep.query_x = std::move(q.windows);
    ep.query_y = std::move(q.labels);
    return ep;
  };
}

// ----------------------------------------------------------------------- csv

uint64_t fnv1a_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("fnv1a_file: cannot open " + path);
  uint64_t h = 14695981039346656037ULL;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    const std::streamsize got = f.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

namespace {

void write_session_csv(const Session& s, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_session_csv: cannot open " + path);
  std::fputs("t,ch0,ch1,ch2,ch3,mode,phase,incline\n", f);
  for (long i = 0; i < s.frames; ++i) {
    const double* row = s.signals.data() + static_cast<size_t>(i) * kNumChannels;
    std::fprintf(f, "%.6f,%.9f,%.9f,%.9f,%.9f,%s,G%d,%.6f\n", static_cast<double>(i) * s.dt,
                 row[0], row[1], row[2], row[3], mode_name(s.mode),
                 s.gait[static_cast<size_t>(i)] + 1, s.incline);
  }
  if (std::fclose(f) != 0) throw std::runtime_error("write_session_csv: close failed: " + path);
}

}  // namespace

std::string write_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["subjects"] = ds.config.subjects;
  manifest["seed"] = ds.config.seed;
  manifest["dt"] = ds.config.dt;
  manifest["session_scale"] = ds.config.opts.session_scale;
  manifest["noise"] = ds.config.opts.noise;
  manifest["drift"] = ds.config.opts.drift;
  auto& files = manifest["sessions"] = nlohmann::json::array();

  long total_frames = 0;
  std::vector<int> per_subject_count(static_cast<size_t>(ds.config.subjects), 0);
  for (const Session& s : ds.sessions) {
    const int idx = per_subject_count.at(static_cast<size_t>(s.subject))++;
    char rel[64];
    std::snprintf(rel, sizeof(rel), "subject%d/session%03d.csv", s.subject, idx);
    const fs::path full = fs::path(dir) / rel;
    fs::create_directories(full.parent_path());
    write_session_csv(s, full.string());

    char sum[32];
    std::snprintf(sum, sizeof(sum), "0x%016llx",
                  static_cast<unsigned long long>(fnv1a_file(full.string())));
    nlohmann::json e;
    e["file"] = rel;
    e["subject"] = s.subject;
    e["mode"] = mode_name(s.mode);
    e["speed"] = s.speed;
    e["incline"] = s.incline;
    e["frames"] = s.frames;
    e["fnv1a"] = sum;
    files.push_back(std::move(e));
    total_frames += s.frames;
  }
  manifest["totals"] = {{"sessions", ds.sessions.size()}, {"frames", total_frames}};

  const std::string mpath = (fs::path(dir) / "manifest.json").string();
  std::ofstream mf(mpath);
  if (!mf) throw std::runtime_error("write_dataset: cannot open " + mpath);
  mf << manifest.dump(2) << '\n';
  return mpath;
}

Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string mpath = (fs::path(dir) / "manifest.json").string();
  std::ifstream mf(mpath);
  if (!mf) throw std::runtime_error("read_dataset: cannot open " + mpath);
  nlohmann::json manifest = nlohmann::json::parse(mf);
  if (manifest.at("version").get<int>() != 1)
    throw std::runtime_error("read_dataset: unsupported manifest version in " + mpath);

  Dataset ds;
  ds.config.subjects = manifest.at("subjects").get<int>();
  ds.config.seed = manifest.at("seed").get<uint64_t>();
  ds.config.dt = manifest.at("dt").get<double>();
  ds.config.opts.session_scale = manifest.at("session_scale").get<double>();
  ds.config.opts.noise = manifest.at("noise").get<bool>();
  ds.config.opts.drift = manifest.at("drift").get<bool>();

  for (const auto& e : manifest.at("sessions")) {
    const std::string full = (fs::path(dir) / e.at("file").get<std::string>()).string();
    char sum[32];
    std::snprintf(sum, sizeof(sum), "0x%016llx",
                  static_cast<unsigned long long>(fnv1a_file(full)));
    if (e.at("fnv1a").get<std::string>() != sum)
      throw std::runtime_error("read_dataset: checksum mismatch for " + full);

    Session s = read_session_csv(full);
    s.subject = e.at("subject").get<int>();
    s.speed = e.at("speed").get<double>();
    s.dt = ds.config.dt;
    if (s.mode != mode_from_name(e.at("mode").get<std::string>()) ||
        s.frames != e.at("frames").get<long>())
      throw std::runtime_error("read_dataset: manifest disagrees with " + full);
    ds.sessions.push_back(std::move(s));
  }
  return ds;
}

Session read_session_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_session_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "t,ch0,ch1,ch2,ch3,mode,phase,incline")
    throw std::runtime_error("read_session_csv: bad header in " + path);

  Session s;
  double prev_t = 0.0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    double t, ch[4], incline;
    char mode_tag[8], phase_tag[8];
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%7[^,],%7[^,],%lf", &t, &ch[0], &ch[1],
                    &ch[2], &ch[3], mode_tag, phase_tag, &incline) != 8)
      throw std::runtime_error("read_session_csv: bad row in " + path);
    int gait;
    if (std::sscanf(phase_tag, "G%d", &gait) != 1 || gait < 1 || gait > kNumPhases)
      throw std::runtime_error("read_session_csv: bad phase label in " + path);
    if (s.frames == 1) s.dt = t - prev_t;
    prev_t = t;
    for (int c = 0; c < kNumChannels; ++c) s.signals.push_back(ch[c]);
    s.gait.push_back(gait - 1);
    s.mode = mode_from_name(mode_tag);
    s.incline = incline;
    ++s.frames;
  }
  if (s.frames == 0) throw std::runtime_error("read_session_csv: no rows in " + path);
  return s;
}

}  // namespace mgait
