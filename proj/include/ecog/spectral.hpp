#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "ecog/dataset.hpp"

namespace ecog {

enum class WindowFunction { Hann, Rectangular };
enum class Prewhitening { FirstDifference, None };

struct SpectralConfig {
  double window_ms{250.0};
  double step_ms{80.0};
  int baseline_bins{10};
  WindowFunction window{WindowFunction::Hann};
  Prewhitening prewhiten{Prewhitening::FirstDifference};

  int window_samples(double fs_hz) const;
  int step_samples(double fs_hz) const;
};

enum class PowerKind { Absolute, Relative };

struct SpectralMap {
  std::vector<Eigen::MatrixXd> values;  // per channel: [freq_bin][time_bin]
  std::vector<double> freq_axis_hz;
  std::vector<double> time_axis_s;  // window centres relative to trial start
  std::vector<std::int64_t> frame_starts;
  int window_samples{0};
  std::int64_t onset_sample{0};
  PowerKind kind{PowerKind::Absolute};
  int guarded_bins{0};  // baseline bins raised to the 1e-12 floor

  std::size_t n_channels() const { return values.size(); }
  Eigen::Index n_freqs() const { return values.empty() ? 0 : values[0].rows(); }
  Eigen::Index n_frames() const { return values.empty() ? 0 : values[0].cols(); }
};

constexpr double kBaselineFloor = 1e-12;

inline std::int64_t frame_count(std::int64_t n, std::int64_t window, std::int64_t step) {
  return n < window ? 0 : (n - window) / step + 1;
}

Signal prewhiten(const Signal& x, Prewhitening method);
StimulusTrial prewhiten(const StimulusTrial& trial, const SpectralConfig& cfg);

SpectralMap stft_power(const StimulusTrial& trial, double fs_hz, const SpectralConfig& cfg);

// Element-wise mean of absolute maps that share an axis layout.
SpectralMap average_maps(const std::vector<SpectralMap>& maps);

SpectralMap relative_spectral_power(const SpectralMap& map, const SpectralConfig& cfg);

Signal average_aep(const std::vector<StimulusTrial>& trials);

struct TopoGrid {
  int rows{0}, cols{0};
  std::vector<std::optional<double>> cells;  // row-major; nullopt for excluded/absent contacts

  const std::optional<double>& at(int r, int c) const { return cells[static_cast<std::size_t>(r * cols + c)]; }
};

// Signed peak (value with the largest magnitude) per contact inside
// [onset + t0, onset + t1].
TopoGrid topographic_map(const Signal& aep, const std::vector<ChannelMeta>& channels, double fs_hz,
                         std::int64_t onset_sample, double t0_ms = 20.0, double t1_ms = 200.0);

}  // namespace ecog
