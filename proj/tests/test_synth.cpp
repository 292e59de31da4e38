#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <numeric>

#include "ecog/epoching.hpp"
#include "ecog/preprocess.hpp"
#include "ecog/spectral.hpp"
#include "ecog/synth.hpp"

namespace fs = std::filesystem;
using namespace ecog;

namespace {

SynthConfig quick(int trials = 40) {
  SynthConfig s;
  s.trials_per_day = trials;
  return s;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(ra.size());
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(rb.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("same config and day give identical recordings") {
  const auto a = generate_day(quick(), 3);
  const auto b = generate_day(quick(), 3);
  CHECK(a.samples == b.samples);
  CHECK(a.triggers == b.triggers);
  const auto c = generate_day(quick(), 4);
  CHECK(a.samples != c.samples);
  auto other = quick();
  other.seed = 43;
  CHECK(generate_day(other, 3).samples != a.samples);
}

TEST_CASE("generated recordings satisfy the recording invariants") {
  const auto r = generate_day(quick(), 1);
  CHECK_NOTHROW(validate(r));
  CHECK(r.n_channels() == 16);
  CHECK(r.fs_hz == 900.0);
  CHECK(r.triggers.size() == 40);
  for (std::size_t k = 1; k < r.triggers.size(); ++k) CHECK(r.triggers[k] - r.triggers[k - 1] == 4500);
  CHECK(r.condition == Condition::Awake);
  CHECK(generate_day(quick(), 14).condition == Condition::Anesthesia);
}

TEST_CASE("without artifacts no sample exceeds 800 uV") {
  auto s = SynthConfig{};
  s.artifact_rate = 0.0;
  s.snr = 1.0;
  const auto r = generate_day(s, 1);
  CHECK(r.samples.cwiseAbs().maxCoeff() < 800.0);
}

TEST_CASE("evoked components are zero before each onset and scaled by 0.3 under anesthesia") {
  auto s = quick(20);
  s.artifact_rate = 0.0;
  auto silent = s;
  silent.snr = 0.0;
  auto anesth = s;
  anesth.anesthesia_days = {2};
  const auto with = generate_day(s, 2);
  const auto bg = generate_day(silent, 2);
  const auto low = generate_day(anesth, 2);
  for (const auto onset : with.triggers) {
    const auto pre = with.samples.middleCols(onset - 900, 900) - bg.samples.middleCols(onset - 900, 900);
    CHECK(pre.cwiseAbs().maxCoeff() == 0.0);
  }
  const Signal full = with.samples - bg.samples;
  const Signal reduced = low.samples - bg.samples;
  CHECK(full.cwiseAbs().maxCoeff() > 10.0);
  // Samples are stored at float precision, so allow one float ulp of the summed signal.
  CHECK((reduced - 0.3 * full).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("relative power rises in 5-40 Hz during the stimulus and in 50-150 Hz after it") {
  const auto raw = generate_day(SynthConfig{}, 1);
  const auto clean = preprocess(raw, PreprocessConfig{}, false);
  const SpectralConfig cfg;
  std::vector<SpectralMap> maps;
  for (const auto& t : segment_trials(clean)) maps.push_back(stft_power(prewhiten(t, cfg), clean.fs_hz, cfg));
  const auto rel = relative_spectral_power(average_maps(maps), cfg);
  auto band_mean = [&](double f0, double f1, double t0, double t1) {
    double sum = 0;
    int n = 0;
    for (std::size_t c = 0; c < rel.n_channels(); ++c)
      for (Eigen::Index k = 0; k < rel.n_freqs(); ++k) {
        const double f = rel.freq_axis_hz[static_cast<std::size_t>(k)];
        if (f < f0 || f > f1) continue;
        for (Eigen::Index j = 0; j < rel.n_frames(); ++j) {
          const auto s = rel.frame_starts[static_cast<std::size_t>(j)];
          if (s >= t0 * 900 && s + rel.window_samples <= t1 * 900) {
            sum += rel.values[c](k, j);
            ++n;
          }
        }
      }
    return sum / n;
  };
  const double stim = band_mean(5, 40, 1, 4), post = band_mean(50, 150, 4, 5);
  INFO("stim " << stim << " post " << post);
  CHECK(stim > 1.2);
  CHECK(post > 1.2);
}

TEST_CASE("AEP topography recovers the spatial gain profile") {
  const SynthConfig s;
  const auto clean = preprocess(generate_day(s, 1), PreprocessConfig{}, false);
  const auto trials = segment_trials(clean);
  const auto topo = topographic_map(average_aep(trials), clean.channels, clean.fs_hz, trials.front().trigger_offset);
  // Re-referencing shifts every contact by the common mean, which flips the
  // polarity of low-gain contacts; signed peaks keep the ordering.
  const auto w = aep_waveform(clean.fs_hz);
  const double polarity = *std::max_element(w.begin(), w.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) > 0 ? 1.0 : -1.0;
  std::vector<double> amp;
  for (const auto& c : clean.channels) amp.push_back(polarity * topo.at(c.grid_row, c.grid_col).value());
  CHECK(spearman(amp, spatial_gains(s)) > 0.8);
}

TEST_CASE("AEP waveform is confined to 20-200 ms") {
  const auto w = aep_waveform(900.0);
  double total = 0, inside = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    total += w[i] * w[i];
    const double t = static_cast<double>(i) / 900.0;
    if (t >= 0.02 && t <= 0.2) inside += w[i] * w[i];
    if (t < 0.02 || t > 0.2) CHECK(w[i] == 0.0);
  }
  CHECK(inside / total > 0.95);
  CHECK(*std::max_element(w.begin(), w.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) != 0.0);
}

TEST_CASE("dataset generation writes one directory per day") {
  auto s = quick(3);
  const auto out = fs::temp_directory_path() / "ecog_test_synth_days";
  fs::remove_all(out);
  generate_dataset(s, out);
  int dirs = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    CHECK(e.is_directory());
    CHECK(fs::exists(e.path() / "manifest.json"));
    CHECK(fs::exists(e.path() / "samples.f32"));
    ++dirs;
  }
  CHECK(dirs == 15);
  CHECK(fs::exists(out / day_dir_name(15)));
  CHECK(read_dataset(out / day_dir_name(7)).samples == generate_day(s, 7).samples);
  fs::remove_all(out);
}

TEST_CASE("generator config validation") {
  SynthConfig s;
  s.n_days = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.trials_per_day = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.artifact_rate = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.snr = -1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(generate_day(SynthConfig{}, 16), ConfigError);
}
