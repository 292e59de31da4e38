// ecogdec: synthetic uECoG decoding workbench.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "ecog/epoching.hpp"
#include "ecog/experiment.hpp"
#include "ecog/synth.hpp"

namespace fs = std::filesystem;
using namespace ecog;

namespace {

struct PreprocFlags {
  std::optional<double> hp, lp, amp, noisy;
  void add(CLI::App* app) {
    app->add_option("--hp", hp, "Highpass cutoff in Hz (default 0.5)");
    app->add_option("--lp", lp, "Lowpass cutoff in Hz (default 120)");
    app->add_option("--amp-threshold", amp, "Bad-trial / noisy-channel amplitude threshold in uV (default 800)");
    app->add_option("--noisy-fraction", noisy, "Fraction of over-threshold samples that marks a channel noisy (default 0.2)");
  }
  void apply(PreprocessConfig& p) const {
    if (hp) p.hp_cutoff_hz = *hp;
    if (lp) p.lp_cutoff_hz = *lp;
    if (amp) p.amplitude_threshold_uv = *amp;
    if (noisy) p.noisy_fraction = *noisy;
  }
};

std::vector<std::string> split_methods(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& r : raw) {
    std::stringstream ss(r);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ecogdec: uECoG auditory decoding workbench (synthetic data, rLDA / FBCSP / ConvNet)"};
  app.set_version_flag("--version", std::string("ecogdec ") + ECOG_VERSION);
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-day dataset");
  SynthConfig scfg;
  std::string synth_out = "data";
  synth->add_option("--days", scfg.n_days, "Number of recording days")->check(CLI::PositiveNumber);
  synth->add_option("--trials", scfg.trials_per_day, "Stimulus trials per day")->check(CLI::PositiveNumber);
  synth->add_option("--seed", scfg.seed, "Generator seed");
  synth->add_option("--snr", scfg.snr, "Evoked-to-background amplitude ratio");
  synth->add_option("--artifact-rate", scfg.artifact_rate, "Per-trial artifact probability");
  synth->add_option("--out", synth_out, "Output directory");

  // spectra
  auto* spectra = app.add_subcommand("spectra", "Write relSP, AEP and topography CSVs for one day");
  std::string spectra_in, spectra_out = "spectra";
  bool rectangular = false, no_prewhiten = false;
  PreprocFlags spectra_pre;
  spectra->add_option("--dataset", spectra_in, "Day directory")->required();
  spectra->add_option("--out", spectra_out, "Output directory");
  spectra->add_flag("--rectangular", rectangular, "Use a rectangular window instead of Hann");
  spectra->add_flag("--no-prewhiten", no_prewhiten, "Skip first-difference prewhitening");
  spectra_pre.add(spectra);

  // decode
  auto* decode = app.add_subcommand("decode", "Decode one day with one method");
  std::string decode_in, decode_out = "decode_out", decode_method, decode_cfg;
  std::optional<int> decode_classes;
  std::optional<std::uint64_t> decode_seed;
  PreprocFlags decode_pre;
  decode->add_option("--dataset", decode_in, "Day directory")->required();
  decode->add_option("--method", decode_method, "rlda, fbcsp or convnet")->required();
  decode->add_option("--classes", decode_classes, "Class scheme: 2 or 3");
  decode->add_option("--out", decode_out, "Output directory");
  decode->add_option("--seed", decode_seed, "Global seed");
  decode->add_option("--config", decode_cfg, "JSON experiment config");
  decode_pre.add(decode);

  // run
  auto* run = app.add_subcommand("run", "Full experiment over every day of a dataset");
  std::string run_in, run_cfg;
  std::optional<std::string> run_out;
  std::vector<std::string> run_methods;
  std::optional<int> run_classes, run_jobs, run_epochs, run_patience;
  std::optional<std::uint64_t> run_seed;
  PreprocFlags run_pre;
  run->add_option("--dataset", run_in, "Dataset root (day directories) or a single day directory");
  run->add_option("--methods,--method", run_methods, "Comma-separated subset of rlda,fbcsp,convnet");
  run->add_option("--classes", run_classes, "Class scheme: 2 or 3");
  run->add_option("--out", run_out, "Results directory");
  run->add_option("--seed", run_seed, "Global seed");
  run->add_option("--jobs", run_jobs, "Days decoded concurrently");
  run->add_option("--max-epochs", run_epochs, "ConvNet epoch cap per training phase");
  run->add_option("--patience", run_patience, "ConvNet early-stopping patience");
  run->add_option("--config", run_cfg, "JSON experiment config; flags override it");
  run_pre.add(run);

  // report
  auto* report = app.add_subcommand("report", "Aggregate existing per-day results");
  std::string report_in, report_out = "summary.json";
  report->add_option("--in", report_in, "Results directory")->required();
  report->add_option("--out", report_out, "Summary JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      scfg.validate();
      generate_dataset(scfg, synth_out);
      std::cout << "wrote " << scfg.n_days << " day(s) to " << synth_out << "\n";
    } else if (*spectra) {
      PreprocessConfig pre;
      spectra_pre.apply(pre);
      SpectralConfig sc;
      if (rectangular) sc.window = WindowFunction::Rectangular;
      if (no_prewhiten) sc.prewhiten = Prewhitening::None;
      write_spectra(read_dataset(spectra_in), pre, sc, spectra_out);
      std::cout << "wrote spectra to " << spectra_out << "\n";
    } else if (*decode) {
      auto cfg = load_config(decode_cfg);
      cfg.dataset = decode_in;
      cfg.methods = {decode_method};
      if (decode_classes) cfg.n_classes = *decode_classes;
      if (decode_seed) cfg.seed = *decode_seed;
      decode_pre.apply(cfg.preprocess);
      cfg.validate();
      const auto o = decode_recording(read_dataset(decode_in), decode_method, cfg);
      write_outcome(o, decode_out);
      std::cout << decode_method << " " << day_dir_name(o.day_id) << " DA " << o.report.da << "\n";
    } else if (*run) {
      auto cfg = load_config(run_cfg);
      if (!run_in.empty()) cfg.dataset = run_in;
      if (cfg.dataset.empty()) throw ConfigError("--dataset is required (flag or config)");
      if (!run_methods.empty()) cfg.methods = split_methods(run_methods);
      if (run_classes) cfg.n_classes = *run_classes;
      if (run_out) cfg.out = *run_out;
      if (run_seed) cfg.seed = *run_seed;
      if (run_jobs) cfg.jobs = *run_jobs;
      if (run_epochs) cfg.train.max_epochs = *run_epochs;
      if (run_patience) cfg.train.patience = *run_patience;
      run_pre.apply(cfg.preprocess);
      const int code = run_experiment(cfg);
      std::cout << "wrote results to " << cfg.out.string() << "\n";
      if (code != 0) std::cerr << "ecogdec: some days failed; see summary.json errors\n";
      return code;
    } else if (*report) {
      const auto j = report_from_directory(report_in);
      write_text(report_out, j.dump(2) + "\n");
      std::cout << "wrote " << report_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "ecogdec: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
