#include "ecog/synth.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <mutex>
#include <numbers>
#include <random>

namespace ecog {

void SynthConfig::validate() const {
  if (n_days < 1) throw ConfigError("n_days must be >= 1");
  if (trials_per_day < 1) throw ConfigError("trials_per_day must be >= 1");
  if (!(artifact_rate >= 0 && artifact_rate <= 1)) throw ConfigError("artifact_rate must lie in [0, 1]");
  if (!(snr >= 0)) throw ConfigError("snr must be >= 0");
  if (!(fs_hz > 0)) throw ConfigError("fs_hz must be > 0");
  samples_per_second(fs_hz);
  if (fs_hz / 2 <= 150.0) throw ConfigError("fs_hz must exceed 300 Hz to hold the 50-150 Hz response");
  if (n_channels < 2) throw ConfigError("n_channels must be >= 2");
  if (!(phase_locked_share >= 0 && phase_locked_share <= 1)) throw ConfigError("phase_locked_share must lie in [0, 1]");
  if (!(gain_floor >= 0 && gain_floor <= 1) || !(gain_sigma > 0)) throw ConfigError("invalid spatial gain profile");
}

std::string day_dir_name(int day_id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "day%02d", day_id);
  return buf;
}

std::uint64_t day_seed(std::uint64_t seed, int day_id) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(day_id + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> spatial_gains(const SynthConfig& cfg) {
  const int cols = 4;
  std::vector<double> g(static_cast<std::size_t>(cfg.n_channels));
  for (int i = 0; i < cfg.n_channels; ++i) {
    const double r = i / cols - 1.0, c = i % cols - 1.5;
    g[static_cast<std::size_t>(i)] =
        cfg.gain_floor + (1.0 - cfg.gain_floor) * std::exp(-(r * r + c * c) / (2.0 * cfg.gain_sigma * cfg.gain_sigma));
  }
  return g;
}

std::vector<double> aep_waveform(double fs_hz) {
  const auto n = static_cast<std::size_t>(std::llround(0.200 * fs_hz)) + 1;
  const auto start = static_cast<std::size_t>(std::llround(0.020 * fs_hz));
  std::vector<double> w(n, 0.0);
  double peak = 0;
  for (std::size_t i = start; i < n; ++i) {
    const double t = static_cast<double>(i - start) / fs_hz;
    w[i] = std::exp(-t / 0.045) * std::sin(2 * std::numbers::pi * 8.0 * t) +
           0.6 * std::exp(-t / 0.025) * std::sin(2 * std::numbers::pi * 25.0 * t);
    peak = std::max(peak, std::abs(w[i]));
  }
  for (auto& v : w) v /= peak;
  return w;
}

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Gaussian white noise shaped in the frequency domain by `gain(f)` and
// rescaled to unit RMS.
std::vector<double> shaped_noise(std::mt19937_64& rng, std::size_t n, double fs_hz,
                                 const std::function<double(double)>& gain) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t nc = n / 2 + 1;
  double* buf = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(nc);
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), buf, spec, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, buf, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) buf[i] = normal(rng);
  fftw_execute(fwd);
  for (std::size_t k = 0; k < nc; ++k) {
    const double g = gain(static_cast<double>(k) * fs_hz / static_cast<double>(n));
    spec[k][0] *= g;
    spec[k][1] *= g;
  }
  fftw_execute(inv);
  std::vector<double> out(buf, buf + n);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  fftw_free(spec);

  double ss = 0;
  for (double v : out) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(n));
  if (rms > 0)
    for (auto& v : out) v /= rms;
  return out;
}

double pink_amplitude(double f) { return 1.0 / std::max(f, 1.0); }

// 1/f amplitude restricted to [lo, hi] with 2 Hz raised-cosine skirts.
std::function<double(double)> band_profile(double lo, double hi) {
  return [lo, hi](double f) {
    constexpr double skirt = 2.0;
    double w = 0;
    if (f >= lo && f <= hi) w = 1;
    else if (f > lo - skirt && f < lo) w = 0.5 - 0.5 * std::cos(std::numbers::pi * (f - lo + skirt) / skirt);
    else if (f > hi && f < hi + skirt) w = 0.5 + 0.5 * std::cos(std::numbers::pi * (f - hi) / skirt);
    return w * pink_amplitude(f);
  };
}

// Fraction of the background's power that falls inside [lo, hi] (continuous
// approximation of the 1/f^2 power law with the 1 Hz plateau).
double background_band_fraction(double lo, double hi, double nyquist) {
  auto cumulative = [](double f) { return f <= 1.0 ? f : 1.0 + (1.0 - 1.0 / f); };
  return (cumulative(hi) - cumulative(lo)) / cumulative(nyquist);
}

// Raised-cosine ramps of `ramp` samples at both ends.
double ramp_envelope(std::size_t i, std::size_t n, std::size_t ramp) {
  if (i < ramp) return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(ramp));
  if (i + ramp >= n)
    return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(n - 1 - i) / static_cast<double>(ramp));
  return 1.0;
}

}  // namespace

Recording generate_day(const SynthConfig& cfg, int day_id) {
  cfg.validate();
  if (day_id < 1 || day_id > cfg.n_days)
    throw ConfigError("day_id " + std::to_string(day_id) + " outside 1.." + std::to_string(cfg.n_days));

  std::mt19937_64 rng(day_seed(cfg.seed, day_id));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const auto fs = samples_per_second(cfg.fs_hz);
  const auto n_ch = static_cast<std::size_t>(cfg.n_channels);
  const std::int64_t lead = 2 * fs, tail = fs;
  const std::int64_t n = lead + static_cast<std::int64_t>(cfg.trials_per_day) * 5 * fs + tail;

  Recording rec;
  rec.fs_hz = cfg.fs_hz;
  rec.channels = default_grid(cfg.n_channels);
  rec.day_id = day_id;
  rec.condition = cfg.anesthesia_days.contains(day_id) ? Condition::Anesthesia : Condition::Awake;
  rec.samples.resize(static_cast<Eigen::Index>(n_ch), n);
  for (int k = 0; k < cfg.trials_per_day; ++k) rec.triggers.push_back(lead + fs + static_cast<std::int64_t>(k) * 5 * fs);

  const double nyq = cfg.fs_hz / 2;
  for (std::size_t c = 0; c < n_ch; ++c) {
    const auto bg = shaped_noise(rng, static_cast<std::size_t>(n), cfg.fs_hz, [](double f) {
      return f == 0.0 ? 0.0 : pink_amplitude(f);
    });
    for (std::int64_t t = 0; t < n; ++t) rec.samples(static_cast<Eigen::Index>(c), t) = cfg.background_rms_uv * bg[static_cast<std::size_t>(t)];
  }

  const auto gains = spatial_gains(cfg);
  const auto aep = aep_waveform(cfg.fs_hz);
  const double evoked = cfg.snr * (rec.condition == Condition::Anesthesia ? cfg.anesthesia_gain : 1.0);
  const double stim_amp = evoked * cfg.stim_band_gain * cfg.background_rms_uv *
                          std::sqrt(background_band_fraction(5.0, 40.0, nyq));
  const double post_amp = evoked * cfg.offset_band_gain * cfg.background_rms_uv *
                          std::sqrt(background_band_fraction(50.0, 150.0, nyq));
  const auto stim_len = static_cast<std::size_t>(3 * fs);
  const auto post_len = static_cast<std::size_t>(fs);
  const auto ramp = static_cast<std::size_t>(std::llround(0.05 * cfg.fs_hz));
  const auto stim_profile = band_profile(5.0, 40.0);
  const auto post_profile = band_profile(50.0, 150.0);

  // Onset-locked part of the 5-40 Hz response: a one-second waveform, fixed for
  // the day, repeating through the stimulus. The circular synthesis makes the
  // repetition seamless.
  const auto locked_period = static_cast<std::size_t>(fs);
  const auto locked = shaped_noise(rng, locked_period, cfg.fs_hz, stim_profile);
  const double locked_w = std::sqrt(cfg.phase_locked_share);
  const double free_w = std::sqrt(1.0 - cfg.phase_locked_share);

  for (const auto onset : rec.triggers) {
    const double jitter = 1.0 + 0.1 * normal(rng);
    for (std::size_t c = 0; c < n_ch; ++c) {
      const double a = evoked * cfg.aep_peak * cfg.background_rms_uv * gains[c] * jitter;
      for (std::size_t i = 0; i < aep.size(); ++i)
        rec.samples(static_cast<Eigen::Index>(c), onset + static_cast<std::int64_t>(i)) += a * aep[i];
    }

    // Shared source plus per-channel independent parts, half the power each.
    const auto shared = shaped_noise(rng, stim_len, cfg.fs_hz, stim_profile);
    const auto shared_post = shaped_noise(rng, post_len, cfg.fs_hz, post_profile);
    for (std::size_t c = 0; c < n_ch; ++c) {
      const auto own = shaped_noise(rng, stim_len, cfg.fs_hz, stim_profile);
      const auto own_post = shaped_noise(rng, post_len, cfg.fs_hz, post_profile);
      for (std::size_t i = 0; i < stim_len; ++i) {
        const double progress = static_cast<double>(i) / static_cast<double>(stim_len);
        const double env = ramp_envelope(i, stim_len, ramp) * (1.0 - (1.0 - cfg.stim_adaptation) * progress);
        const double src = locked_w * locked[i % locked_period] + free_w * shared[i];
        const double v = stim_amp * gains[c] * env * (std::sqrt(0.5) * src + std::sqrt(0.5) * own[i]);
        rec.samples(static_cast<Eigen::Index>(c), onset + static_cast<std::int64_t>(i)) += v;
      }
      const auto post_onset = onset + static_cast<std::int64_t>(stim_len);
      for (std::size_t i = 0; i < post_len; ++i) {
        const double env = ramp_envelope(i, post_len, ramp);
        const double v = post_amp * gains[c] * env * (std::sqrt(0.5) * shared_post[i] + std::sqrt(0.5) * own_post[i]);
        rec.samples(static_cast<Eigen::Index>(c), post_onset + static_cast<std::int64_t>(i)) += v;
      }
    }

    if (uniform(rng) < cfg.artifact_rate) {
      const auto len = static_cast<std::int64_t>(std::llround(0.06 * cfg.fs_hz));
      const auto start = onset - fs + static_cast<std::int64_t>(uniform(rng) * static_cast<double>(5 * fs - len));
      const auto ch = static_cast<Eigen::Index>(uniform(rng) * static_cast<double>(n_ch)) % static_cast<Eigen::Index>(n_ch);
      const double amp = (1200.0 + 1300.0 * uniform(rng)) * (uniform(rng) < 0.5 ? -1.0 : 1.0);
      for (std::int64_t i = 0; i < len; ++i)
        rec.samples(ch, start + i) += amp * std::sin(std::numbers::pi * static_cast<double>(i) / static_cast<double>(len - 1));
    }
  }

  // Quantize to the on-disk precision so a write/read round trip is exact.
  rec.samples = rec.samples.cast<float>().cast<double>();
  validate(rec);
  return rec;
}

void generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out) {
  cfg.validate();
  for (int d = 1; d <= cfg.n_days; ++d) write_dataset(generate_day(cfg, d), out / day_dir_name(d));
}

}  // namespace ecog
