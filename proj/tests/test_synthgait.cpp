#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mgait/rng.hpp"
#include "mgait/synthgait.hpp"

using namespace mgait;

namespace {

// Independent re-implementation of the documented closed form, written from
// the header contract: two-harmonic hip/knee with linear incline response,
// fixed channel mixtures over 50, subject gain/offset, derivative hysteresis,
// sinusoidal drift.
double oracle_channel(const SubjectProfile& s, int mode, double speed, double incline, int c,
                      double t, double p0, double drift_phase, bool drift) {
  const ModeCoeffs& mc = mode_coeffs(mode);
  const ChannelMix& mix = channel_mix(c);
  const double pi2 = 2.0 * std::acos(-1.0);
  const double T = 1.1 * std::sqrt(1.0 / speed) * s.cadence_scale;
  double x = p0 + (t - s.lag_s[c]) / T + s.placement_shift[c];
  if (mode == kStairAscent || mode == kStairDescent) x += s.stair_shift;
  x -= std::floor(x);
  const double amp = (0.8 + speed / 3.0) * s.excursion_scale;
  const double d = incline - mc.ref_incline;
  const double h0 = mc.h0 + mc.dh0 * d, h1 = mc.h1 * (1 + mc.dh1 * d) * amp, h2 = mc.h2 * amp;
  const double k0 = mc.k0 + mc.dk0 * d, k1 = mc.k1 * (1 + mc.dk1 * d) * amp, k2 = mc.k2 * amp;

  const double hip = h0 + h1 * std::cos(pi2 * x + mc.hp1) + h2 * std::cos(2 * pi2 * x + mc.hp2);
  const double knee = k0 + k1 * std::cos(pi2 * x + mc.kp1) + k2 * std::cos(2 * pi2 * x + mc.kp2);
  const double dhip =
      -(pi2 * h1 * std::sin(pi2 * x + mc.hp1) + 2 * pi2 * h2 * std::sin(2 * pi2 * x + mc.hp2)) / T;
  const double dknee =
      -(pi2 * k1 * std::sin(pi2 * x + mc.kp1) + 2 * pi2 * k2 * std::sin(2 * pi2 * x + mc.kp2)) / T;

  const double base = (mix.w_hip * hip + mix.w_knee * knee) / 50.0;
  const double dbase = (mix.w_hip * dhip + mix.w_knee * dknee) / 50.0;
  double v = s.gain[c] * (base - s.hysteresis_s * dbase) + s.offset[c];
  if (drift) v += s.drift_amp * std::sin(pi2 * s.drift_freq_hz * t + drift_phase);
  return v;
}

BenchmarkConfig tiny_benchmark_config() {
  BenchmarkConfig bc;
  bc.subjects = 2;
  bc.seed = 5;
  bc.opts.session_scale = 0.02;  // treadmill 2.4 s, stairs 0.2 s
  return bc;
}

}  // namespace

TEST_CASE("subject profiles: determinism and documented ranges") {
  SubjectProfile a = draw_profile(7, 3);
  SubjectProfile b = draw_profile(7, 3);
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  SubjectProfile c = draw_profile(7, 4);
  CHECK(std::memcmp(&a, &c, sizeof a) != 0);

  for (int subj = 0; subj < 30; ++subj) {
    SubjectProfile p = draw_profile(123, subj);
    for (int ch = 0; ch < kNumChannels; ++ch) {
      CHECK(p.gain[ch] >= 0.7);
      CHECK(p.gain[ch] <= 1.3);
      CHECK(std::abs(p.offset[ch]) <= 0.05);
      CHECK(p.lag_s[ch] >= 0.0);
      CHECK(p.lag_s[ch] <= 0.040);
      CHECK(std::abs(p.placement_shift[ch]) <= 0.20);
    }
    CHECK(std::abs(p.stair_shift) <= 0.15);
    CHECK(p.hysteresis_s >= 0.01);
    CHECK(p.hysteresis_s <= 0.05);
    CHECK(p.noise_sigma >= 0.008);
    CHECK(p.noise_sigma <= 0.02);
    CHECK(p.cadence_scale >= 0.9);
    CHECK(p.cadence_scale <= 1.1);
    CHECK(p.excursion_scale >= 0.85);
    CHECK(p.excursion_scale <= 1.15);
  }
}

TEST_CASE("stride period and the hundred-frame cycle") {
  CHECK(stride_period(1.21, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(stride_period(1.0, 1.0) == doctest::Approx(1.1).epsilon(1e-15));
  // slower gait, longer stride period
  CHECK(stride_period(0.85, 1.0) > stride_period(1.25, 1.0));
  CHECK_THROWS_AS(stride_period(0.0, 1.0), std::invalid_argument);

  SubjectProfile p = draw_profile(1, 0);
  p.cadence_scale = 1.0;
  GenOptions opts;
  opts.noise = false;
  Session s = generate_session(p, kLevelWalk, 1.21, 0.0, 5.0, 0.01, 9, opts);
  REQUIRE(s.frames == 500);
  for (long i = 0; i + 100 < s.frames; i += 17) {
    CHECK(s.phase[static_cast<size_t>(i)] ==
          doctest::Approx(s.phase[static_cast<size_t>(i + 100)]).epsilon(1e-9));
    CHECK(s.gait[static_cast<size_t>(i)] == s.gait[static_cast<size_t>(i + 100)]);
  }
}

TEST_CASE("phase labels follow the documented fractions") {
  CHECK(phase_label(0.0) == 0);
  CHECK(phase_label(0.119) == 0);
  CHECK(phase_label(0.12) == 1);
  CHECK(phase_label(0.499) == 1);
  CHECK(phase_label(0.50) == 2);
  CHECK(phase_label(0.619) == 2);
  CHECK(phase_label(0.62) == 3);
  CHECK(phase_label(0.999) == 3);
  CHECK_THROWS_AS(phase_label(1.0), std::invalid_argument);
  CHECK_THROWS_AS(phase_label(-0.1), std::invalid_argument);

  // with a one-second cycle at 100 Hz, label counts over ten cycles land
  // within one frame of the nominal fractions
  SubjectProfile p = draw_profile(2, 1);
  p.cadence_scale = 1.0;
  GenOptions opts;
  opts.noise = false;
  Session s = generate_session(p, kLevelWalk, 1.21, 0.0, 10.0, 0.01, 3, opts);
  REQUIRE(s.frames == 1000);
  long counts[kNumPhases] = {0, 0, 0, 0};
  for (int g : s.gait) ++counts[g];
  CHECK(std::abs(counts[0] - 120) <= 10);
  CHECK(std::abs(counts[1] - 380) <= 10);
  CHECK(std::abs(counts[2] - 120) <= 10);
  CHECK(std::abs(counts[3] - 380) <= 10);
  CHECK(counts[0] + counts[1] + counts[2] + counts[3] == 1000);
}

TEST_CASE("noise-free sessions match an independent closed-form oracle") {
  SubjectProfile p = draw_profile(11, 4);
  GenOptions opts;
  opts.noise = false;
  for (int mode : {kLevelWalk, kRampAscent, kStairDescent}) {
    const double incline = mode == kLevelWalk ? 0.0 : (mode == kRampAscent ? 10.0 : -33.0);
    const double speed = mode == kStairDescent ? 0.9 : 1.05;
    const uint64_t seed = 1000 + mode;
    Session s = generate_session(p, mode, speed, incline, 2.0, 0.01, seed, opts);

    // recover the session's seeded phase offsets exactly as the generator does
    Rng rng(seed);
    const double p0 = rng.uniform(0.0, 1.0);
    const double drift_phase = rng.uniform(0.0, 2.0 * std::acos(-1.0));

    for (long i = 0; i < s.frames; i += 7) {
      const double t = i * 0.01;
      for (int c = 0; c < kNumChannels; ++c) {
        const double want = oracle_channel(p, mode, speed, incline, c, t, p0, drift_phase, true);
        const double got = s.signals[static_cast<size_t>(i) * kNumChannels + c];
        CHECK(std::abs(got - want) <= 1e-9);
      }
    }
  }
}

TEST_CASE("generation is bit-deterministic in the session seed") {
  SubjectProfile p = draw_profile(3, 0);
  GenOptions opts;  // noise on
  Session a = generate_session(p, kRampAscent, 1.05, 5.0, 1.5, 0.01, 77, opts);
  Session b = generate_session(p, kRampAscent, 1.05, 5.0, 1.5, 0.01, 77, opts);
  CHECK(a.signals == b.signals);
  CHECK(a.gait == b.gait);
  Session c = generate_session(p, kRampAscent, 1.05, 5.0, 1.5, 0.01, 78, opts);
  CHECK(a.signals != c.signals);
}

TEST_CASE("channel means respond to incline and mode") {
  SubjectProfile p = draw_profile(4, 2);
  for (int c = 0; c < kNumChannels; ++c) {
    p.lag_s[c] = 0.0;
    p.offset[c] = 0.0;
    p.gain[c] = 1.0;
  }
  p.cadence_scale = 1.0;
  GenOptions opts;
  opts.noise = false;
  opts.drift = false;

  auto mean_ch0 = [&](int mode, double incline) {
    Session s = generate_session(p, mode, 1.21, incline, 4.0, 0.01, 5, opts);
    double sum = 0.0;
    // average over complete cycles only (400 frames = 4 cycles at T = 1)
    for (long i = 0; i < 400; ++i) sum += s.signals[static_cast<size_t>(i) * kNumChannels];
    return sum / 400.0;
  };

  // steeper ascent lifts the anterior-hip channel mean (dh0 > 0)
  const double ra_low = mean_ch0(kRampAscent, 5.0);
  const double ra_high = mean_ch0(kRampAscent, 10.0);
  CHECK(ra_high > ra_low + 0.01);

  // stair ascent carries a much larger hip mean than level walking
  CHECK(mean_ch0(kStairAscent, kStairIncline) > mean_ch0(kLevelWalk, 0.0) + 0.1);
}

TEST_CASE("protocol structure and the stair scarcity") {
  const auto tasks = protocol();
  CHECK(tasks.size() == 17);
  int by_mode[kNumModes] = {0, 0, 0, 0, 0};
  int sessions = 0;
  for (const auto& e : tasks) {
    ++by_mode[e.mode];
    sessions += e.repeats;
  }
  CHECK(by_mode[kLevelWalk] == 3);
  CHECK(by_mode[kRampAscent] == 6);
  CHECK(by_mode[kRampDescent] == 6);
  CHECK(by_mode[kStairAscent] == 1);
  CHECK(by_mode[kStairDescent] == 1);
  CHECK(sessions == 40);

  std::set<double> lw_speeds, ramp_speeds, ra_inclines, rd_inclines;
  for (const auto& e : tasks) {
    if (e.mode == kStairAscent) {
      CHECK(e.incline == kStairIncline);
      CHECK(e.duration_s == 10.0);
      CHECK(e.repeats == 5);
      CHECK(e.speed == 0.9);
    }
    if (e.mode == kStairDescent) CHECK(e.incline == -kStairIncline);
    if (e.mode == kLevelWalk) {
      CHECK(e.incline == 0.0);
      lw_speeds.insert(e.speed);
    }
    if (e.mode == kRampAscent) {
      ramp_speeds.insert(e.speed);
      ra_inclines.insert(e.incline);
    }
    if (e.mode == kRampDescent) rd_inclines.insert(e.incline);
  }
  CHECK(lw_speeds == std::set<double>{0.9, 1.1, 1.3});
  CHECK(ramp_speeds == std::set<double>{0.7, 0.9, 1.1});
  CHECK(ra_inclines == std::set<double>{5.0, 10.0});
  CHECK(rd_inclines == std::set<double>{-10.0, -5.0});
}

TEST_CASE("off-grid terrain pairings are rejected") {
  SubjectProfile p = draw_profile(1, 0);
  GenOptions opts;
  CHECK_THROWS_AS(generate_session(p, kLevelWalk, 1.1, 2.0, 1.5, 0.01, 1, opts),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate_session(p, kRampAscent, 0.9, -5.0, 1.5, 0.01, 1, opts),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate_session(p, kRampDescent, 0.9, 5.0, 1.5, 0.01, 1, opts),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate_session(p, kStairAscent, 0.9, 30.0, 1.5, 0.01, 1, opts),
                  std::invalid_argument);
  CHECK_NOTHROW(generate_session(p, kStairDescent, 0.9, -kStairIncline, 1.5, 0.01, 1, opts));
}

TEST_CASE("benchmark cohort: counts, determinism, imbalance") {
  BenchmarkConfig bc = tiny_benchmark_config();
  Dataset ds = build_benchmark(bc);
  CHECK(ds.sessions.size() == 80);  // 40 per subject

  long treadmill_frames = 0, stair_frames = 0;
  for (const Session& s : ds.sessions) {
    CHECK((s.subject == 0 || s.subject == 1));
    if (s.mode == kStairAscent || s.mode == kStairDescent)
      stair_frames += s.frames;
    else
      treadmill_frames += s.frames;
  }
  CHECK(treadmill_frames > 10 * stair_frames);

  Dataset ds2 = build_benchmark(bc);
  REQUIRE(ds2.sessions.size() == ds.sessions.size());
  for (size_t i = 0; i < ds.sessions.size(); ++i)
    CHECK(ds.sessions[i].signals == ds2.sessions[i].signals);

  BenchmarkConfig other = bc;
  other.seed = 6;
  Dataset ds3 = build_benchmark(other);
  CHECK(ds.sessions[0].signals != ds3.sessions[0].signals);
}

TEST_CASE("window arithmetic and materialization") {
  SubjectProfile p = draw_profile(8, 0);
  GenOptions opts;
  opts.noise = false;
  Dataset ds;
  ds.config.subjects = 1;
  ds.sessions.push_back(generate_session(p, kLevelWalk, 1.0, 0.0, 0.25, 0.01, 2, opts));
  REQUIRE(ds.sessions[0].frames == 25);

  auto wins = session_windows(ds.sessions[0], 10, 5);
  REQUIRE(wins.size() == 4);  // ends 9, 14, 19, 24
  CHECK(wins[0].end == 9);
  CHECK(wins[3].end == 24);

  TaskData task = gather_windows(ds, wins, 10);
  CHECK(task.windows.shape() == std::vector<long>{4, kNumChannels, 10});
  // window values are the session frames, channel-major per window
  const Session& s = ds.sessions[0];
  for (long w = 0; w < 4; ++w)
    for (int c = 0; c < kNumChannels; ++c)
      for (long i = 0; i < 10; ++i) {
        const long frame = wins[static_cast<size_t>(w)].end - 9 + i;
        CHECK(task.windows[(w * kNumChannels + c) * 10 + i] ==
              s.signals[static_cast<size_t>(frame) * kNumChannels + c]);
      }
  // labels come from the final frame
  for (long w = 0; w < 4; ++w) {
    CHECK(task.labels.gait[static_cast<size_t>(w)] ==
          s.gait[static_cast<size_t>(wins[static_cast<size_t>(w)].end)]);
    CHECK(task.labels.loc[static_cast<size_t>(w)] == kLevelWalk);
    CHECK(task.labels.incline[static_cast<size_t>(w)] == 0.0);
  }

  CHECK_THROWS_AS(gather_windows(ds, {{0, 5}}, 10), std::invalid_argument);   // end < k-1
  CHECK_THROWS_AS(gather_windows(ds, {{0, 25}}, 10), std::invalid_argument);  // past end
  CHECK(session_windows(ds.sessions[0], 26, 5).empty());                      // window > session
}

TEST_CASE("subject pools and the reference-based episode sampler") {
  BenchmarkConfig bc = tiny_benchmark_config();
  Dataset ds = build_benchmark(bc);
  auto pool0 = subject_windows(ds, 0, 20, 10);
  auto pool1 = subject_windows(ds, 1, 20, 10);
  CHECK(!pool0.empty());
  CHECK(pool0.size() == pool1.size());  // same protocol per subject
  for (const WindowRef& w : pool0) CHECK(ds.sessions[static_cast<size_t>(w.session)].subject == 0);

  EpisodeSampler sampler = ref_sampler(ds, pool0, 20, 6, 9);
  Episode a = sampler(41);
  CHECK(a.support_x.shape() == std::vector<long>{6, kNumChannels, 20});
  CHECK(a.query_x.shape() == std::vector<long>{9, kNumChannels, 20});
  for (int mode : a.support_y.loc) CHECK((mode >= 0 && mode < kNumModes));

  Episode b = sampler(41);
  CHECK(bits_equal(a.support_x, b.support_x));
  CHECK(bits_equal(a.query_x, b.query_x));
  Episode c = sampler(42);
  CHECK(!bits_equal(a.support_x, c.support_x));

  CHECK_THROWS_AS(ref_sampler(ds, pool0, 20, static_cast<long>(pool0.size()), 1),
                  std::invalid_argument);
}

TEST_CASE("csv round-trip and manifest integrity") {
  namespace fs = std::filesystem;
  BenchmarkConfig bc = tiny_benchmark_config();
  bc.subjects = 1;
  bc.opts.session_scale = 0.01;  // treadmill 1.2 s, stairs 0.1 s
  Dataset ds = build_benchmark(bc);

  const std::string dir = (fs::temp_directory_path() / "mgait_csv_test").string();
  fs::remove_all(dir);
  const std::string manifest_path = write_dataset(ds, dir);

  std::ifstream mf(manifest_path);
  REQUIRE(mf.good());
  nlohmann::json manifest = nlohmann::json::parse(mf);
  CHECK(manifest.at("version") == 1);
  CHECK(manifest.at("subjects") == 1);
  REQUIRE(manifest.at("sessions").size() == ds.sessions.size());
  CHECK(manifest.at("totals").at("sessions") == ds.sessions.size());

  // checksums in the manifest match a recompute, and a round-trip preserves
  // the data to printed precision
  const auto& entry = manifest.at("sessions").at(0);
  const std::string file = (fs::path(dir) / entry.at("file").get<std::string>()).string();
  char sum[32];
  std::snprintf(sum, sizeof(sum), "0x%016llx",
                static_cast<unsigned long long>(fnv1a_file(file)));
  CHECK(entry.at("fnv1a").get<std::string>() == sum);

  Session back = read_session_csv(file);
  const Session& orig = ds.sessions[0];
  REQUIRE(back.frames == orig.frames);
  CHECK(back.mode == orig.mode);
  CHECK(back.gait == orig.gait);
  CHECK(back.incline == doctest::Approx(orig.incline).epsilon(1e-12));
  for (size_t i = 0; i < orig.signals.size(); ++i)
    CHECK(std::abs(back.signals[i] - orig.signals[i]) <= 5e-10);

  // a second export of the same dataset is byte-identical
  const std::string dir2 = (fs::temp_directory_path() / "mgait_csv_test2").string();
  fs::remove_all(dir2);
  const std::string manifest_path2 = write_dataset(ds, dir2);
  std::ifstream f1(manifest_path, std::ios::binary), f2(manifest_path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  // the whole-dataset loader restores config and per-session metadata
  Dataset loaded = read_dataset(dir);
  CHECK(loaded.config.subjects == ds.config.subjects);
  CHECK(loaded.config.seed == ds.config.seed);
  CHECK(loaded.config.dt == ds.config.dt);
  CHECK(loaded.config.opts.session_scale == ds.config.opts.session_scale);
  REQUIRE(loaded.sessions.size() == ds.sessions.size());
  for (size_t i = 0; i < ds.sessions.size(); ++i) {
    CHECK(loaded.sessions[i].subject == ds.sessions[i].subject);
    CHECK(loaded.sessions[i].mode == ds.sessions[i].mode);
    CHECK(loaded.sessions[i].speed == ds.sessions[i].speed);
    CHECK(loaded.sessions[i].frames == ds.sessions[i].frames);
    CHECK(loaded.sessions[i].gait == ds.sessions[i].gait);
  }

  // any corrupted byte fails the checksum audit
  {
    std::fstream cf(file, std::ios::in | std::ios::out | std::ios::binary);
    cf.seekp(60);
    cf.put('7');
  }
  CHECK_THROWS_AS(read_dataset(dir), std::runtime_error);

  fs::remove_all(dir);
  fs::remove_all(dir2);
}
