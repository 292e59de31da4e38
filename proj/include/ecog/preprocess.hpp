#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "ecog/dataset.hpp"

namespace ecog {

struct PreprocessConfig {
  double noisy_fraction{0.20};
  double amplitude_threshold_uv{800.0};
  double hp_cutoff_hz{0.5};
  double lp_cutoff_hz{120.0};
  int filter_order{2};

  // Throws ConfigError.
  void validate(double fs_hz) const;
};

// y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct Biquad {
  double b0{1}, b1{0}, b2{0}, a1{0}, a2{0};

  bool is_stable() const;
  std::complex<double> response(std::complex<double> z) const;
};

enum class FilterKind { Highpass, Lowpass };

struct BiquadCascade {
  std::vector<Biquad> sections;
  double fs_hz{0};

  bool is_stable() const;
  // |H(e^{j 2 pi f / fs})| in dB.
  double magnitude_db(double freq_hz) const;

  // Transposed direct form II state, two registers per section.
  class State {
   public:
    explicit State(std::size_t n_sections) : z_(n_sections, {0.0, 0.0}) {}
    double step(const BiquadCascade& filt, double x);

   private:
    std::vector<std::array<double, 2>> z_;
  };

  // Causal filtering from zero initial state.
  void filter(std::span<double> x) const;
};

BiquadCascade design_butterworth(FilterKind kind, double cutoff_hz, int order, double fs_hz);

// Band-pass as highpass(low) followed by lowpass(high).
BiquadCascade design_bandpass(double low_hz, double high_hz, int order, double fs_hz);

Recording common_average_reference(const Recording& rec);
std::vector<bool> detect_noisy_channels(const Recording& rec, const PreprocessConfig& cfg);
Recording apply_filter(const Recording& rec, const BiquadCascade& filt);
std::vector<ClassTrial> flag_bad_trials(std::vector<ClassTrial> trials, double threshold_uv);
bool exceeds(const Signal& x, double threshold_uv);

// Copy with the excluded channels removed.
Recording drop_excluded(const Recording& rec);

// CAR -> noisy-channel exclusion -> CAR over the remaining raw channels ->
// highpass, plus the lowpass when `decoding_path` is set. Excluded channels
// stay in the output with their flag set.
Recording preprocess(const Recording& raw, const PreprocessConfig& cfg, bool decoding_path);

}  // namespace ecog
