#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ecog/dataset.hpp"

namespace ecog {

constexpr int kEpochsPerTrial = 5;

// Maps each of the five 1 s epochs (1 = pre-stimulus, 2..4 = stimulus,
// 5 = post-offset) to a class label or to nothing.
struct ClassScheme {
  int n_classes{2};
  std::array<std::optional<int>, kEpochsPerTrial> epoch_to_label{};
  std::vector<std::string> class_names;

  // stimulus vs no stimulus: epochs {1,5} -> 1, {2,3,4} -> 2.
  static ClassScheme two_class();
  // Response 1..3 from the three stimulus seconds; epochs 1 and 5 unused.
  static ClassScheme three_class();
  static ClassScheme for_classes(int n);

  void validate() const;
};

std::vector<StimulusTrial> segment_trials(const Recording& rec);
std::vector<ClassTrial> make_class_trials(const std::vector<StimulusTrial>& trials, const ClassScheme& scheme,
                                          double fs_hz);

}  // namespace ecog
