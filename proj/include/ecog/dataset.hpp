#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecog/errors.hpp"

namespace ecog {

// [channel][time], rows contiguous so a channel can be handed out as a span.
using Signal = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Condition { Awake, Anesthesia };

std::string to_string(Condition c);
Condition condition_from_string(const std::string& s);

struct ChannelMeta {
  int index{0};
  int grid_row{0};
  int grid_col{0};
  bool excluded{false};  // set by noisy-channel detection, not persisted
};

struct Recording {
  double fs_hz{900.0};
  std::vector<ChannelMeta> channels;
  Signal samples;                    // microvolts
  std::vector<std::int64_t> triggers;  // stimulus-onset sample indices
  Condition condition{Condition::Awake};
  int day_id{1};

  std::size_t n_channels() const { return static_cast<std::size_t>(samples.rows()); }
  std::size_t n_samples() const { return static_cast<std::size_t>(samples.cols()); }
  std::size_t n_included() const;
  std::vector<int> included_rows() const;
};

// 5 s stimulus window: 1 s pre, 3 s stimulus, 1 s post.
struct StimulusTrial {
  Signal samples;
  std::int64_t trigger_offset{0};
  std::size_t source_index{0};  // position of the trigger in Recording::triggers
};

struct ClassTrial {
  Signal samples;  // [channel][fs] (one second)
  int label{0};    // 1..n_classes
  int epoch_index{0};  // 1..5 within the stimulus trial
  std::size_t source_trial{0};
  bool bad{false};
};

// Default 4x4 row-major layout of the auditory array.
std::vector<ChannelMeta> default_grid(int n_channels = 16, int n_cols = 4);

// Integer samples-per-second; throws DataError when fs is not integral.
std::int64_t samples_per_second(double fs_hz);

// Throws DataError describing the first violated invariant.
void validate(const Recording& rec);

constexpr int kManifestVersion = 1;

void write_dataset(const Recording& rec, const std::filesystem::path& dir);
Recording read_dataset(const std::filesystem::path& dir);

}  // namespace ecog
