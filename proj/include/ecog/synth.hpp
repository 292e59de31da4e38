#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <vector>

#include "ecog/dataset.hpp"

namespace ecog {

struct SynthConfig {
  int n_days{15};
  int trials_per_day{261};
  std::set<int> anesthesia_days{14, 15};
  std::uint64_t seed{42};
  double snr{1.0};            // evoked-to-background amplitude ratio
  double artifact_rate{0.02};  // per-trial probability of a >800 uV burst
  double fs_hz{900.0};
  int n_channels{16};

  // Generator shape constants. Not exposed on the CLI.
  double background_rms_uv{50.0};
  double anesthesia_gain{0.3};
  double aep_peak{4.0};          // AEP peak, in background RMS units, at unit gain and snr
  double stim_band_gain{1.8};    // 5-40 Hz amplitude relative to the background band amplitude
  double offset_band_gain{1.5};  // 50-150 Hz, likewise
  double phase_locked_share{0.5};   // fraction of the 5-40 Hz response power locked to stimulus onset
  double stim_adaptation{0.6};    // envelope at the end of the 3 s stimulus relative to its start
  double gain_floor{0.1};         // spatial gain far from the hotspot
  double gain_sigma{1.0};         // hotspot width in contact spacings

  void validate() const;  // throws ConfigError
};

// Smooth 4x4 gain profile (row-major by channel) shared by all evoked components.
std::vector<double> spatial_gains(const SynthConfig& cfg);

// Unit-peak AEP waveform sampled at fs, starting at stimulus onset (zero
// before 20 ms, zero after 200 ms).
std::vector<double> aep_waveform(double fs_hz);

// Per-day seed derived from (seed, day_id).
std::uint64_t day_seed(std::uint64_t seed, int day_id);

Recording generate_day(const SynthConfig& cfg, int day_id);
void generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out);

std::string day_dir_name(int day_id);

}  // namespace ecog
