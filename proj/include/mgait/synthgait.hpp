#pragma once

// Deterministic synthetic gait-sensor generator.
//
// Each subject is a draw of physiological and sensor parameters (gains,
// offsets, channel lags, rate-dependent hysteresis, noise level, drift,
// cadence and excursion scaling). Hip and knee joint angles follow a
// two-harmonic closed form over the gait cycle, with per-mode coefficient
// tables and a linear incline response; four strain channels are fixed linear
// mixtures of the two joint angles plus the subject's sensor imperfections.
// Everything except the additive noise is an analytic function of time, so
// tests can check generated sessions against an independent re-implementation
// of the closed form.

#include <cstdint>
#include <string>
#include <vector>

#include "mgait/meta.hpp"
#include "mgait/tensor.hpp"

namespace mgait {

// --------------------------------------------------------------------- modes

inline constexpr int kNumModes = 5;
inline constexpr int kNumPhases = 4;
inline constexpr int kNumChannels = 4;

enum Mode : int { kLevelWalk = 0, kRampAscent, kRampDescent, kStairAscent, kStairDescent };

const char* mode_name(int mode);          // "LW","RA","RD","SA","SD"
int mode_from_name(const std::string&);   // inverse; throws on unknown names

// Joint-angle coefficients for one mode (degrees):
//   hip(p)  = h0 + h1 cos(2 pi p + hp1) + h2 cos(4 pi p + hp2)
//   knee(p) = k0 + k1 cos(2 pi p + kp1) + k2 cos(4 pi p + kp2)
// evaluated after the linear incline response around the mode's reference:
//   h0 += dh0 * (incline - ref), h1 *= 1 + dh1 * (incline - ref), knee alike.
struct ModeCoeffs {
  double h0, h1, hp1, h2, hp2;
  double k0, k1, kp1, k2, kp2;
  double ref_incline;
  double dh0, dh1, dk0, dk1;
};
const ModeCoeffs& mode_coeffs(int mode);

// Stair tasks carry a fixed nominal incline label of +/- 33 degrees.
inline constexpr double kStairIncline = 33.0;

// Gait-cycle fractions of the four phase labels, in label order.
inline constexpr double kPhaseFractions[kNumPhases] = {0.12, 0.38, 0.12, 0.38};

// Phase label for a cycle position p in [0,1).
int phase_label(double p);

// Stride period in seconds: 1.1 * (1/speed)^0.5 * cadence_scale.
double stride_period(double speed, double cadence_scale);

// Fixed channel mixture: channel c reads (w_hip * hip + w_knee * knee) / 50.
struct ChannelMix {
  double w_hip, w_knee;
};
const ChannelMix& channel_mix(int channel);

// Amplitude grows with walking speed: 0.8 + speed / 3.
double speed_amplitude(double speed);

// ------------------------------------------------------------------ subjects

struct SubjectProfile {
  int id = 0;
  double gain[kNumChannels];    // [0.7, 1.3]
  double offset[kNumChannels];  // [-0.05, 0.05]
  double lag_s[kNumChannels];   // [0, 0.040] s
  // Donning/placement error: where on the limb the sensor sits shifts which
  // part of the cycle its strain peak tracks. Expressed in cycle fractions so
  // it is speed-invariant, unlike the hysteresis lag above.
  double placement_shift[kNumChannels];  // [-0.20, 0.20] cycles
  // Stair technique: where in the cycle a subject strikes on stairs relative
  // to their treadmill gait. Applies to stair modes only, all channels alike.
  double stair_shift = 0.0;     // [-0.15, 0.15] cycles
  double hysteresis_s = 0.0;    // [0.01, 0.05] s derivative coupling
  double noise_sigma = 0.0;     // [0.008, 0.02]
  double drift_amp = 0.0;       // [0.005, 0.02]
  double drift_freq_hz = 0.0;   // [0.05, 0.2]
  double cadence_scale = 1.0;   // [0.9, 1.1]
  double excursion_scale = 1.0; // [0.85, 1.15]
};

// Deterministic in (cohort_seed, subject).
SubjectProfile draw_profile(uint64_t cohort_seed, int subject);

// ------------------------------------------------------------------ sessions

struct GenOptions {
  bool noise = true;
  bool drift = true;
  double session_scale = 1.0;  // scales every session duration
};

struct Session {
  int subject = 0;
  int mode = kLevelWalk;
  double speed = 0.0;    // m/s
  double incline = 0.0;  // degrees (label)
  double dt = 0.01;      // s per frame
  long frames = 0;
  std::vector<double> signals;  // frames x 4, frame-major
  std::vector<double> phase;    // cycle position in [0,1) per frame
  std::vector<int> gait;        // phase label per frame
};

// One continuous bout. The session seed fixes the starting cycle position,
// the drift phase, and the noise stream.
Session generate_session(const SubjectProfile& subj, int mode, double speed, double incline,
                         double duration_s, double dt, uint64_t session_seed,
                         const GenOptions& opts);

// Noise-free closed form for one channel at time t (the deterministic part of
// generate_session, exposed for oracle checks). p0 is the starting cycle
// position and drift_phase the session's drift phase offset.
double clean_channel_value(const SubjectProfile& subj, int mode, double speed, double incline,
                           int channel, double t, double p0, double drift_phase, bool drift);

// ----------------------------------------------------------------- benchmark

struct BenchmarkConfig {
  int subjects = 9;
  uint64_t seed = 0;
  double dt = 0.01;
  GenOptions opts;
};

struct Dataset {
  BenchmarkConfig config;
  std::vector<Session> sessions;
};

// The full cohort protocol. Per subject: level walking at three treadmill
// speeds, ramp ascent/descent at two inclines per direction and three
// (slower) speeds (all treadmill bouts of 120 s, twice each), and five short
// 10 s bouts per stair direction at 0.9 m/s — stair data is deliberately
// scarcer than treadmill data.
Dataset build_benchmark(const BenchmarkConfig& cfg);

// Session descriptors of the protocol, exposed for tests.
struct ProtocolEntry {
  int mode;
  double speed, incline, duration_s;
  int repeats;
};
std::vector<ProtocolEntry> protocol();

// ------------------------------------------------------------------- windows

struct WindowRef {
  int session = 0;
  long end = 0;  // window covers frames [end - k + 1, end]
};

// Windows of length k ending at k-1, k-1+stride, ... within one session.
std::vector<WindowRef> session_windows(const Session& s, long k, long stride);

// All windows of one subject across the dataset.
std::vector<WindowRef> subject_windows(const Dataset& ds, int subject, long k, long stride);

// Materialize windows into a [n, channels, k] tensor with last-frame labels.
TaskData gather_windows(const Dataset& ds, const std::vector<WindowRef>& refs, long k);

// Episode sampler over a fixed pool of window references.
EpisodeSampler ref_sampler(const Dataset& ds, std::vector<WindowRef> pool, long k, long n,
                           long m);

// ----------------------------------------------------------------------- csv

// Layout: <dir>/subject<S>/session<NNN>.csv plus <dir>/manifest.json with
// per-file 64-bit FNV-1a checksums. Returns the manifest path.
std::string write_dataset(const Dataset& ds, const std::string& dir);

// Parse one session CSV (continuous phase is not stored; Session::phase stays
// empty).
Session read_session_csv(const std::string& path);

// Load a dataset written by write_dataset: verifies every file's checksum,
// and restores the per-session metadata (subject, speed) that the CSV rows
// do not carry.
Dataset read_dataset(const std::string& dir);

uint64_t fnv1a_file(const std::string& path);

}  // namespace mgait
