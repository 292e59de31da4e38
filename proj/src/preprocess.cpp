#include "ecog/preprocess.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace ecog {

void PreprocessConfig::validate(double fs_hz) const {
  if (!(noisy_fraction > 0 && noisy_fraction < 1))
    throw ConfigError("noisy fraction must lie in (0, 1), got " + std::to_string(noisy_fraction));
  if (!(amplitude_threshold_uv > 0)) throw ConfigError("amplitude threshold must be > 0");
  if (!(hp_cutoff_hz > 0 && hp_cutoff_hz < lp_cutoff_hz && lp_cutoff_hz < fs_hz / 2))
    throw ConfigError("need 0 < hp (" + std::to_string(hp_cutoff_hz) + ") < lp (" + std::to_string(lp_cutoff_hz) +
                      ") < fs/2");
  if (filter_order < 1) throw ConfigError("filter order must be >= 1");
}

bool Biquad::is_stable() const {
  // Jury conditions for z^2 + a1 z + a2.
  return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

std::complex<double> Biquad::response(std::complex<double> z) const {
  const auto zi = 1.0 / z;
  return (b0 + b1 * zi + b2 * zi * zi) / (1.0 + a1 * zi + a2 * zi * zi);
}

bool BiquadCascade::is_stable() const {
  for (const auto& s : sections)
    if (!s.is_stable()) return false;
  return true;
}

double BiquadCascade::magnitude_db(double freq_hz) const {
  const auto z = std::polar(1.0, 2.0 * std::numbers::pi * freq_hz / fs_hz);
  std::complex<double> h{1.0, 0.0};
  for (const auto& s : sections) h *= s.response(z);
  return 20.0 * std::log10(std::abs(h));
}

double BiquadCascade::State::step(const BiquadCascade& filt, double x) {
  for (std::size_t i = 0; i < filt.sections.size(); ++i) {
    const auto& s = filt.sections[i];
    auto& z = z_[i];
    const double y = s.b0 * x + z[0];
    z[0] = s.b1 * x - s.a1 * y + z[1];
    z[1] = s.b2 * x - s.a2 * y;
    x = y;
  }
  return x;
}

void BiquadCascade::filter(std::span<double> x) const {
  State st(sections.size());
  for (auto& v : x) v = st.step(*this, v);
}

BiquadCascade design_butterworth(FilterKind kind, double cutoff_hz, int order, double fs_hz) {
  if (!(fs_hz > 0)) throw ConfigError("sampling rate must be > 0");
  if (!(cutoff_hz > 0 && cutoff_hz < fs_hz / 2))
    throw ConfigError("cutoff " + std::to_string(cutoff_hz) + " Hz outside (0, fs/2)");
  if (order < 1) throw ConfigError("filter order must be >= 1");

  // Bilinear transform with pre-warping folded into k = tan(pi fc / fs).
  const double k = std::tan(std::numbers::pi * cutoff_hz / fs_hz);
  const double k2 = k * k;
  BiquadCascade out;
  out.fs_hz = fs_hz;
  for (int i = 0; i < order / 2; ++i) {
    // Conjugate pole pair of the normalized prototype: s^2 + a s + 1.
    const double a = 2.0 * std::sin(std::numbers::pi * (2 * i + 1) / (2.0 * order));
    const double norm = 1.0 / (1.0 + a * k + k2);
    Biquad s;
    if (kind == FilterKind::Lowpass) {
      s.b0 = k2 * norm;
      s.b1 = 2.0 * s.b0;
      s.b2 = s.b0;
    } else {
      s.b0 = norm;
      s.b1 = -2.0 * norm;
      s.b2 = norm;
    }
    s.a1 = 2.0 * (k2 - 1.0) * norm;
    s.a2 = (1.0 - a * k + k2) * norm;
    out.sections.push_back(s);
  }
  if (order % 2 == 1) {
    Biquad s;
    const double norm = 1.0 / (1.0 + k);
    if (kind == FilterKind::Lowpass) {
      s.b0 = k * norm;
      s.b1 = s.b0;
    } else {
      s.b0 = norm;
      s.b1 = -norm;
    }
    s.a1 = (k - 1.0) * norm;
    out.sections.push_back(s);
  }
  if (!out.is_stable()) throw NumericError("designed Butterworth cascade is unstable");
  return out;
}

BiquadCascade design_bandpass(double low_hz, double high_hz, int order, double fs_hz) {
  if (!(low_hz < high_hz)) throw ConfigError("band edges must satisfy low < high");
  auto hp = design_butterworth(FilterKind::Highpass, low_hz, order, fs_hz);
  const auto lp = design_butterworth(FilterKind::Lowpass, high_hz, order, fs_hz);
  hp.sections.insert(hp.sections.end(), lp.sections.begin(), lp.sections.end());
  return hp;
}

Recording common_average_reference(const Recording& rec) {
  const auto rows = rec.included_rows();
  if (rows.size() < 2) throw DataError("common average reference needs at least 2 usable channels");
  Recording out = rec;
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (Eigen::Index t = 0; t < rec.samples.cols(); ++t) {
    double mean = 0;
    for (int r : rows) mean += rec.samples(r, t);
    mean *= inv;
    for (int r : rows) out.samples(r, t) = rec.samples(r, t) - mean;
  }
  return out;
}

std::vector<bool> detect_noisy_channels(const Recording& rec, const PreprocessConfig& cfg) {
  std::vector<bool> mask(rec.n_channels(), false);
  const auto n = static_cast<double>(rec.n_samples());
  if (n == 0) return mask;
  for (Eigen::Index c = 0; c < rec.samples.rows(); ++c) {
    const auto above = (rec.samples.row(c).array().abs() > cfg.amplitude_threshold_uv).count();
    mask[static_cast<std::size_t>(c)] = static_cast<double>(above) / n > cfg.noisy_fraction;
  }
  return mask;
}

Recording apply_filter(const Recording& rec, const BiquadCascade& filt) {
  if (std::abs(rec.fs_hz - filt.fs_hz) > 1e-9)
    throw ConfigError("filter designed for " + std::to_string(filt.fs_hz) + " Hz applied to " +
                      std::to_string(rec.fs_hz) + " Hz data");
  Recording out = rec;
  for (int r : rec.included_rows()) {
    auto row = out.samples.row(r);
    filt.filter(std::span<double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return out;
}

bool exceeds(const Signal& x, double threshold_uv) {
  return x.size() > 0 && (x.array().abs() > threshold_uv).any();
}

std::vector<ClassTrial> flag_bad_trials(std::vector<ClassTrial> trials, double threshold_uv) {
  for (auto& t : trials) t.bad = exceeds(t.samples, threshold_uv);
  return trials;
}

Recording drop_excluded(const Recording& rec) {
  const auto rows = rec.included_rows();
  Recording out;
  out.fs_hz = rec.fs_hz;
  out.triggers = rec.triggers;
  out.condition = rec.condition;
  out.day_id = rec.day_id;
  out.samples.resize(static_cast<Eigen::Index>(rows.size()), rec.samples.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.samples.row(static_cast<Eigen::Index>(i)) = rec.samples.row(rows[i]);
    out.channels.push_back(rec.channels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

Recording preprocess(const Recording& raw, const PreprocessConfig& cfg, bool decoding_path) {
  cfg.validate(raw.fs_hz);
  Recording first = raw;
  for (auto& ch : first.channels) ch.excluded = false;
  first = common_average_reference(first);
  const auto noisy = detect_noisy_channels(first, cfg);

  Recording rec = raw;
  for (std::size_t i = 0; i < rec.channels.size(); ++i) rec.channels[i].excluded = noisy[i];
  rec = common_average_reference(rec);
  rec = apply_filter(rec, design_butterworth(FilterKind::Highpass, cfg.hp_cutoff_hz, cfg.filter_order, rec.fs_hz));
  if (decoding_path)
    rec = apply_filter(rec, design_butterworth(FilterKind::Lowpass, cfg.lp_cutoff_hz, cfg.filter_order, rec.fs_hz));
  return rec;
}

}  // namespace ecog
