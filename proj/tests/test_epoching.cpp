#include <doctest.h>

#include <map>

#include "ecog/epoching.hpp"

using namespace ecog;

namespace {

Recording ramp_recording(int n_trials) {
  Recording r;
  r.fs_hz = 900.0;
  r.channels = default_grid();
  const std::int64_t n = 900 + static_cast<std::int64_t>(n_trials) * 4500 + 900;
  r.samples.resize(16, n);
  for (Eigen::Index c = 0; c < 16; ++c)
    for (Eigen::Index t = 0; t < n; ++t) r.samples(c, t) = static_cast<double>(t) + 0.001 * static_cast<double>(c);
  for (int k = 0; k < n_trials; ++k) r.triggers.push_back(1800 + static_cast<std::int64_t>(k) * 4500);
  return r;
}

}  // namespace

TEST_CASE("one 4500-sample trial per trigger") {
  const auto rec = ramp_recording(7);
  const auto trials = segment_trials(rec);
  REQUIRE(trials.size() == 7);
  for (std::size_t k = 0; k < trials.size(); ++k) {
    CHECK(trials[k].samples.cols() == 4500);
    CHECK(trials[k].samples.rows() == 16);
    CHECK(trials[k].trigger_offset == 900);
    CHECK(trials[k].source_index == k);
    const auto start = rec.triggers[k] - 900;
    CHECK(trials[k].samples.leftCols(900) == rec.samples.block(0, start, 16, 900));
  }
}

TEST_CASE("261 triggers give 261 trials") {
  CHECK(segment_trials(ramp_recording(261)).size() == 261);
}

TEST_CASE("two-class scheme: 100 trials give 200 no-stimulus and 300 stimulus class-trials") {
  const auto trials = segment_trials(ramp_recording(100));
  const auto ct = make_class_trials(trials, ClassScheme::two_class(), 900.0);
  REQUIRE(ct.size() == 500);
  std::map<int, int> counts;
  for (const auto& t : ct) ++counts[t.label];
  CHECK(counts[1] == 200);
  CHECK(counts[2] == 300);
  // Chronological: trial order first, then epoch order.
  CHECK(ct[0].epoch_index == 1);
  CHECK(ct[0].label == 1);
  CHECK(ct[1].epoch_index == 2);
  CHECK(ct[4].epoch_index == 5);
  CHECK(ct[4].label == 1);
  CHECK(ct[5].source_trial == 1);
  for (const auto& t : ct) {
    CHECK(t.samples.cols() == 900);
    // Provenance resolves to the matching slice of the stimulus trial.
    const auto& src = trials[t.source_trial];
    CHECK(t.samples(3, 0) == src.samples(3, (t.epoch_index - 1) * 900));
  }
}

TEST_CASE("three-class scheme keeps the stimulus seconds only") {
  const auto ct = make_class_trials(segment_trials(ramp_recording(100)), ClassScheme::three_class(), 900.0);
  REQUIRE(ct.size() == 300);
  std::map<int, int> counts;
  for (const auto& t : ct) {
    ++counts[t.label];
    CHECK(t.label == t.epoch_index - 1);
  }
  CHECK(counts[1] == 100);
  CHECK(counts[2] == 100);
  CHECK(counts[3] == 100);
}

TEST_CASE("scheme with no labelled epochs yields nothing") {
  ClassScheme empty;
  empty.n_classes = 2;
  CHECK(make_class_trials(segment_trials(ramp_recording(3)), empty, 900.0).empty());
}

TEST_CASE("scheme validation") {
  CHECK_NOTHROW(ClassScheme::two_class().validate());
  CHECK_NOTHROW(ClassScheme::three_class().validate());
  CHECK(ClassScheme::for_classes(3).n_classes == 3);
  CHECK_THROWS_AS(ClassScheme::for_classes(4), ConfigError);
  ClassScheme bad = ClassScheme::three_class();
  bad.epoch_to_label[3] = std::nullopt;  // label 3 no longer produced
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
