#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecog/convnet.hpp"
#include "ecog/dataset.hpp"
#include "ecog/evaluation.hpp"
#include "ecog/fbcsp.hpp"
#include "ecog/preprocess.hpp"
#include "ecog/rlda.hpp"
#include "ecog/spectral.hpp"

namespace ecog {

const std::vector<std::string>& known_methods();

struct ExperimentConfig {
  std::filesystem::path dataset;
  int n_classes{2};
  std::vector<std::string> methods{"rlda", "fbcsp", "convnet"};
  PreprocessConfig preprocess;
  RldaFeatureConfig rlda;
  std::vector<double> rlda_lambda_grid = default_lambda_grid();
  FbcspConfig fbcsp;
  ConvNetArchitecture convnet;
  TrainConfig train;
  std::filesystem::path out{"results"};
  std::uint64_t seed{42};
  int jobs{1};  // days decoded concurrently

  // Throws ConfigError naming the first bad field or token.
  void validate() const;
};

// Overlays the fields present in `j` onto `base`.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Preprocessed, epoched and bad-flagged class-trials of one recording.
struct PreparedDay {
  int day_id{1};
  double fs_hz{900.0};
  std::vector<ClassTrial> trials;
  Split split;
  std::vector<int> excluded_channels;  // 0-based indices
};

PreparedDay prepare_day(const Recording& raw, const ExperimentConfig& cfg);

struct DecodeOutcome {
  std::string method;
  int day_id{1};
  ConfusionReport report;
  std::vector<int> predicted;  // test-set labels, in test order
  nlohmann::json model;
  std::vector<EpochLog> log;   // ConvNet only
};

// Seed for (global seed, day, method).
std::uint64_t method_seed(std::uint64_t seed, int day_id, const std::string& method);

DecodeOutcome decode_prepared(const PreparedDay& day, const std::string& method, const ExperimentConfig& cfg);
DecodeOutcome decode_recording(const Recording& raw, const std::string& method, const ExperimentConfig& cfg);

// Writes confusion.csv, model.json and (ConvNet) training_log.csv into `dir`.
void write_outcome(const DecodeOutcome& o, const std::filesystem::path& dir);

int exit_code_for(const std::exception& e);

struct ExperimentResult {
  std::vector<MethodDays> methods;
  nlohmann::json summary;
  int exit_code{0};
};

// In-memory run over already loaded recordings; per-day failures are recorded
// in the result and do not stop other days.
ExperimentResult run_on_recordings(const std::vector<Recording>& days, const ExperimentConfig& cfg,
                                   const std::filesystem::path* out_dir = nullptr);

// Day directories (dayNN with a manifest) under `root`, sorted by day id.
std::vector<std::filesystem::path> list_day_dirs(const std::filesystem::path& root);

// Full run from disk: per-day outputs under cfg.out plus summary.json.
// Returns the process exit status.
int run_experiment(const ExperimentConfig& cfg);

// Rebuilds summary.json from existing per-day confusion CSVs. Throws
// DataError when nothing is found.
nlohmann::json report_from_directory(const std::filesystem::path& results);

// Writes relSP (one CSV per channel), AEP and topography CSVs.
void write_spectra(const Recording& raw, const PreprocessConfig& pre, const SpectralConfig& spec,
                   const std::filesystem::path& out);

void write_text(const std::filesystem::path& p, const std::string& text);
std::string read_text(const std::filesystem::path& p);

}  // namespace ecog
