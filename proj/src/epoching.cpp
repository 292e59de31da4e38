#include "ecog/epoching.hpp"

#include <algorithm>

namespace ecog {

ClassScheme ClassScheme::two_class() {
  ClassScheme s;
  s.n_classes = 2;
  s.epoch_to_label = {1, 2, 2, 2, 1};
  s.class_names = {"no-stimulus", "stimulus"};
  return s;
}

ClassScheme ClassScheme::three_class() {
  ClassScheme s;
  s.n_classes = 3;
  s.epoch_to_label = {std::nullopt, 1, 2, 3, std::nullopt};
  s.class_names = {"Response 1", "Response 2", "Response 3"};
  return s;
}

ClassScheme ClassScheme::for_classes(int n) {
  if (n == 2) return two_class();
  if (n == 3) return three_class();
  throw ConfigError("class scheme must be 2 or 3, got " + std::to_string(n));
}

void ClassScheme::validate() const {
  bool any = false;
  for (const auto& l : epoch_to_label) {
    if (!l) continue;
    any = true;
    if (*l < 1 || *l > n_classes) throw ConfigError("epoch label " + std::to_string(*l) + " outside 1..n_classes");
  }
  if (!any) return;  // all-unused scheme is allowed and yields nothing
  for (int c = 1; c <= n_classes; ++c)
    if (std::none_of(epoch_to_label.begin(), epoch_to_label.end(), [c](const auto& l) { return l && *l == c; }))
      throw ConfigError("class " + std::to_string(c) + " is produced by no epoch");
}

std::vector<StimulusTrial> segment_trials(const Recording& rec) {
  validate(rec);
  const auto fs = samples_per_second(rec.fs_hz);
  std::vector<StimulusTrial> out;
  out.reserve(rec.triggers.size());
  for (std::size_t i = 0; i < rec.triggers.size(); ++i) {
    StimulusTrial t;
    t.trigger_offset = fs;
    t.source_index = i;
    t.samples = rec.samples.middleCols(rec.triggers[i] - fs, kEpochsPerTrial * fs);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<ClassTrial> make_class_trials(const std::vector<StimulusTrial>& trials, const ClassScheme& scheme,
                                          double fs_hz) {
  scheme.validate();
  const auto fs = samples_per_second(fs_hz);
  std::vector<ClassTrial> out;
  for (const auto& st : trials) {
    if (st.samples.cols() != kEpochsPerTrial * fs)
      throw DataError("stimulus trial has " + std::to_string(st.samples.cols()) + " samples, expected " +
                      std::to_string(kEpochsPerTrial * fs));
    for (int e = 0; e < kEpochsPerTrial; ++e) {
      const auto& label = scheme.epoch_to_label[static_cast<std::size_t>(e)];
      if (!label) continue;
      ClassTrial ct;
      ct.samples = st.samples.middleCols(e * fs, fs);
      ct.label = *label;
      ct.epoch_index = e + 1;
      ct.source_trial = st.source_index;
      out.push_back(std::move(ct));
    }
  }
  return out;
}

}  // namespace ecog
