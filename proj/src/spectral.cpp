#include "ecog/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

namespace ecog {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  std::complex<double> bin(int k) const { return {out_[k][0], out_[k][1]}; }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

std::vector<double> make_window(WindowFunction w, int n) {
  std::vector<double> out(static_cast<std::size_t>(n), 1.0);
  if (w == WindowFunction::Hann && n > 1)
    for (int i = 0; i < n; ++i) out[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  return out;
}

}  // namespace

int SpectralConfig::window_samples(double fs_hz) const {
  const double w = window_ms * fs_hz / 1000.0;
  if (std::abs(w - std::round(w)) > 1e-9 || w < 2)
    throw ConfigError("window of " + std::to_string(window_ms) + " ms is not a whole number of samples");
  return static_cast<int>(std::round(w));
}

int SpectralConfig::step_samples(double fs_hz) const {
  const double s = step_ms * fs_hz / 1000.0;
  if (std::abs(s - std::round(s)) > 1e-9 || s < 1)
    throw ConfigError("step of " + std::to_string(step_ms) + " ms is not a whole number of samples");
  return static_cast<int>(std::round(s));
}

Signal prewhiten(const Signal& x, Prewhitening method) {
  if (method == Prewhitening::None) return x;
  Signal y = Signal::Zero(x.rows(), x.cols());
  if (x.cols() > 1) y.rightCols(x.cols() - 1) = x.rightCols(x.cols() - 1) - x.leftCols(x.cols() - 1);
  return y;
}

StimulusTrial prewhiten(const StimulusTrial& trial, const SpectralConfig& cfg) {
  StimulusTrial out = trial;
  out.samples = prewhiten(trial.samples, cfg.prewhiten);
  return out;
}

SpectralMap stft_power(const StimulusTrial& trial, double fs_hz, const SpectralConfig& cfg) {
  const int w = cfg.window_samples(fs_hz);
  const int step = cfg.step_samples(fs_hz);
  const auto n = static_cast<std::int64_t>(trial.samples.cols());
  if (n < w) throw DataError("trial of " + std::to_string(n) + " samples is shorter than one window");
  const auto frames = frame_count(n, w, step);
  const int bins = w / 2 + 1;

  SpectralMap map;
  map.kind = PowerKind::Absolute;
  map.window_samples = w;
  map.onset_sample = trial.trigger_offset;
  for (int k = 0; k < bins; ++k) map.freq_axis_hz.push_back(k * fs_hz / w);
  for (std::int64_t f = 0; f < frames; ++f) {
    map.frame_starts.push_back(f * step);
    map.time_axis_s.push_back((static_cast<double>(f * step) + (w - 1) / 2.0) / fs_hz);
  }

  const auto win = make_window(cfg.window, w);
  RealFft fft(w);
  // One-sided power normalized so that the bins sum to the frame energy.
  const double scale = 1.0 / w;
  for (Eigen::Index c = 0; c < trial.samples.rows(); ++c) {
    Eigen::MatrixXd p(bins, frames);
    for (std::int64_t f = 0; f < frames; ++f) {
      const auto start = f * step;
      for (int i = 0; i < w; ++i) fft.input()[i] = trial.samples(c, start + i) * win[static_cast<std::size_t>(i)];
      fft.execute();
      for (int k = 0; k < bins; ++k) {
        const bool paired = k != 0 && !(w % 2 == 0 && k == w / 2);
        p(k, f) = (paired ? 2.0 : 1.0) * std::norm(fft.bin(k)) * scale;
      }
    }
    map.values.push_back(std::move(p));
  }
  return map;
}

SpectralMap average_maps(const std::vector<SpectralMap>& maps) {
  if (maps.empty()) throw DataError("no spectral maps to average");
  SpectralMap out = maps.front();
  for (std::size_t i = 1; i < maps.size(); ++i) {
    if (maps[i].n_channels() != out.n_channels() || maps[i].n_frames() != out.n_frames() ||
        maps[i].n_freqs() != out.n_freqs())
      throw DataError("spectral maps with different layouts cannot be averaged");
    for (std::size_t c = 0; c < out.n_channels(); ++c) out.values[c] += maps[i].values[c];
  }
  for (auto& v : out.values) v /= static_cast<double>(maps.size());
  return out;
}

SpectralMap relative_spectral_power(const SpectralMap& map, const SpectralConfig& cfg) {
  std::vector<Eigen::Index> baseline;
  for (std::size_t f = 0; f < map.frame_starts.size(); ++f)
    if (map.frame_starts[f] + map.window_samples <= map.onset_sample && static_cast<int>(baseline.size()) < cfg.baseline_bins)
      baseline.push_back(static_cast<Eigen::Index>(f));
  if (static_cast<int>(baseline.size()) < cfg.baseline_bins)
    throw DataError("only " + std::to_string(baseline.size()) + " time bins precede stimulus onset, need " +
                    std::to_string(cfg.baseline_bins));

  SpectralMap out = map;
  out.kind = PowerKind::Relative;
  out.guarded_bins = 0;
  for (std::size_t c = 0; c < map.n_channels(); ++c) {
    const auto& v = map.values[c];
    for (Eigen::Index k = 0; k < v.rows(); ++k) {
      double base = 0;
      for (auto f : baseline) base += v(k, f);
      base /= static_cast<double>(baseline.size());
      if (base < kBaselineFloor) {
        base = kBaselineFloor;
        ++out.guarded_bins;
      }
      out.values[c].row(k) = v.row(k) / base;
    }
  }
  return out;
}

Signal average_aep(const std::vector<StimulusTrial>& trials) {
  if (trials.empty()) throw DataError("cannot average an empty trial list");
  Signal acc = Signal::Zero(trials.front().samples.rows(), trials.front().samples.cols());
  for (const auto& t : trials) {
    if (t.samples.rows() != acc.rows() || t.samples.cols() != acc.cols())
      throw DataError("trials of different shapes cannot be averaged");
    acc += t.samples;
  }
  return acc / static_cast<double>(trials.size());
}

TopoGrid topographic_map(const Signal& aep, const std::vector<ChannelMeta>& channels, double fs_hz,
                         std::int64_t onset_sample, double t0_ms, double t1_ms) {
  TopoGrid grid;
  for (const auto& ch : channels) {
    grid.rows = std::max(grid.rows, ch.grid_row + 1);
    grid.cols = std::max(grid.cols, ch.grid_col + 1);
  }
  grid.cells.assign(static_cast<std::size_t>(grid.rows * grid.cols), std::nullopt);
  const auto lo = std::max<std::int64_t>(0, onset_sample + std::llround(t0_ms * fs_hz / 1000.0));
  const auto hi = std::min<std::int64_t>(aep.cols() - 1, onset_sample + std::llround(t1_ms * fs_hz / 1000.0));
  for (std::size_t i = 0; i < channels.size() && static_cast<Eigen::Index>(i) < aep.rows(); ++i) {
    const auto& ch = channels[i];
    if (ch.excluded) continue;
    double peak = 0;
    for (auto t = lo; t <= hi; ++t) {
      const double v = aep(static_cast<Eigen::Index>(i), t);
      if (std::abs(v) > std::abs(peak)) peak = v;
    }
    grid.cells[static_cast<std::size_t>(ch.grid_row * grid.cols + ch.grid_col)] = peak;
  }
  return grid;
}

}  // namespace ecog
