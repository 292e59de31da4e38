#include "ecog/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include "ecog/epoching.hpp"
#include "ecog/synth.hpp"

namespace ecog {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"rlda", "fbcsp", "convnet"};
  return m;
}

void ExperimentConfig::validate() const {
  if (n_classes != 2 && n_classes != 3) throw ConfigError("classes must be 2 or 3, got " + std::to_string(n_classes));
  if (methods.empty()) throw ConfigError("at least one method is required");
  for (const auto& m : methods)
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
      throw ConfigError("unknown method '" + m + "' (expected rlda, fbcsp or convnet)");
  for (std::size_t i = 0; i < methods.size(); ++i)
    for (std::size_t j = i + 1; j < methods.size(); ++j)
      if (methods[i] == methods[j]) throw ConfigError("method '" + methods[i] + "' listed twice");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (rlda_lambda_grid.empty()) throw ConfigError("rLDA lambda grid is empty");
  if (fbcsp.m_grid.empty() || fbcsp.lambda_grid.empty()) throw ConfigError("FBCSP grids must be non-empty");
  train.validate();
}

namespace {

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig config_from_json(const json& j, ExperimentConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    take(j, "classes", c.n_classes);
    take(j, "methods", c.methods);
    take(j, "seed", c.seed);
    take(j, "jobs", c.jobs);
    if (j.contains("preprocess")) {
      const auto& p = j.at("preprocess");
      take(p, "hp", c.preprocess.hp_cutoff_hz);
      take(p, "lp", c.preprocess.lp_cutoff_hz);
      take(p, "order", c.preprocess.filter_order);
      take(p, "amp_threshold", c.preprocess.amplitude_threshold_uv);
      take(p, "noisy_fraction", c.preprocess.noisy_fraction);
    }
    if (j.contains("rlda")) {
      const auto& r = j.at("rlda");
      take(r, "bin_ms", c.rlda.bin_ms);
      take(r, "lambda_grid", c.rlda_lambda_grid);
    }
    if (j.contains("fbcsp")) {
      const auto& f = j.at("fbcsp");
      take(f, "m_grid", c.fbcsp.m_grid);
      take(f, "lambda_grid", c.fbcsp.lambda_grid);
      take(f, "order", c.fbcsp.bank.order);
      take(f, "bands", c.fbcsp.bank.bands);
    }
    if (j.contains("convnet")) {
      const auto& n = j.at("convnet");
      take(n, "filters", c.convnet.filters);
      take(n, "kernel", c.convnet.kernel);
      take(n, "pool", c.convnet.pool);
      take(n, "pool_stride", c.convnet.pool_stride);
      take(n, "dropout", c.convnet.dropout);
      take(n, "learning_rate", c.train.learning_rate);
      take(n, "batch_size", c.train.batch_size);
      take(n, "max_epochs", c.train.max_epochs);
      take(n, "patience", c.train.patience);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  return {{"dataset", c.dataset.generic_string()},
          {"out", c.out.generic_string()},
          {"classes", c.n_classes},
          {"methods", c.methods},
          {"seed", c.seed},
          {"preprocess",
           {{"hp", c.preprocess.hp_cutoff_hz},
            {"lp", c.preprocess.lp_cutoff_hz},
            {"order", c.preprocess.filter_order},
            {"amp_threshold", c.preprocess.amplitude_threshold_uv},
            {"noisy_fraction", c.preprocess.noisy_fraction}}},
          {"rlda", {{"bin_ms", c.rlda.bin_ms}, {"lambda_grid", c.rlda_lambda_grid}}},
          {"fbcsp",
           {{"m_grid", c.fbcsp.m_grid},
            {"lambda_grid", c.fbcsp.lambda_grid},
            {"order", c.fbcsp.bank.order},
            {"bands", c.fbcsp.bank.bands}}},
          {"convnet",
           {{"filters", c.convnet.filters},
            {"kernel", c.convnet.kernel},
            {"pool", c.convnet.pool},
            {"pool_stride", c.convnet.pool_stride},
            {"dropout", c.convnet.dropout},
            {"learning_rate", c.train.learning_rate},
            {"batch_size", c.train.batch_size},
            {"max_epochs", c.train.max_epochs},
            {"patience", c.train.patience}}}};
}

PreparedDay prepare_day(const Recording& raw, const ExperimentConfig& cfg) {
  const auto scheme = ClassScheme::for_classes(cfg.n_classes);
  const Recording clean = preprocess(raw, cfg.preprocess, true);
  PreparedDay d;
  d.day_id = raw.day_id;
  d.fs_hz = raw.fs_hz;
  for (const auto& ch : clean.channels)
    if (ch.excluded) d.excluded_channels.push_back(ch.index);
  const Recording kept = drop_excluded(clean);
  d.trials = flag_bad_trials(make_class_trials(segment_trials(kept), scheme, kept.fs_hz),
                             cfg.preprocess.amplitude_threshold_uv);
  d.split = chronological_split(d.trials);
  return d;
}

std::uint64_t method_seed(std::uint64_t seed, int day_id, const std::string& method) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char ch : method) h = (h ^ ch) * 1099511628211ULL;
  return day_seed(seed ^ h, day_id);
}

DecodeOutcome decode_prepared(const PreparedDay& day, const std::string& method, const ExperimentConfig& cfg) {
  const auto train = gather(day.trials, day.split.train);
  const auto val = gather(day.trials, day.split.validation);
  const auto test = gather(day.trials, day.split.test);
  DecodeOutcome o;
  o.method = method;
  o.day_id = day.day_id;
  if (method == "rlda") {
    const auto dec = train_rlda(train, val, cfg.n_classes, day.fs_hz, cfg.rlda, cfg.rlda_lambda_grid);
    for (const auto& t : test) o.predicted.push_back(dec.predict(t).label);
    o.model = dec;
  } else if (method == "fbcsp") {
    const auto model = fit_fbcsp(train, val, cfg.n_classes, day.fs_hz, cfg.fbcsp);
    for (const auto& t : test) o.predicted.push_back(model.predict(t).label);
    o.model = model;
  } else if (method == "convnet") {
    auto arch = cfg.convnet;
    arch.n_classes = cfg.n_classes;
    auto tc = cfg.train;
    tc.seed = method_seed(cfg.seed, day.day_id, method);
    auto dec = train_convnet(train, val, arch, tc);
    for (const auto& p : dec.predict(test)) o.predicted.push_back(p.label);
    o.model = dec.net.to_json();
    o.log = std::move(dec.log);
  } else {
    throw ConfigError("unknown method '" + method + "'");
  }
  o.report = confusion_matrix(labels_of(test), o.predicted, cfg.n_classes);
  return o;
}

DecodeOutcome decode_recording(const Recording& raw, const std::string& method, const ExperimentConfig& cfg) {
  return decode_prepared(prepare_day(raw, cfg), method, cfg);
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
  if (!f) throw DataError("write failed for " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot read " + p.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_outcome(const DecodeOutcome& o, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "confusion.csv", confusion_csv(o.report));
  write_text(dir / "model.json", o.model.dump() + "\n");
  if (!o.log.empty()) write_text(dir / "training_log.csv", training_log_csv(o.log));
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const json::exception*>(&e)) return 2;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return 2;
  return 3;
}

namespace {

struct DayTask {
  int day_id{0};
  std::vector<DecodeOutcome> outcomes;
  std::vector<std::pair<std::string, std::string>> errors;  // method, message
  int exit_code{0};
};

template <class Load>
std::vector<DayTask> run_days(std::size_t n, const Load& load, const ExperimentConfig& cfg, const fs::path* out_dir) {
  std::vector<DayTask> tasks(n);
  auto work = [&](std::size_t i) {
    auto& t = tasks[i];
    Recording raw;
    try {
      raw = load(i);
      t.day_id = raw.day_id;
    } catch (const std::exception& e) {
      t.day_id = static_cast<int>(i) + 1;
      for (const auto& m : cfg.methods) t.errors.emplace_back(m, e.what());
      t.exit_code = exit_code_for(e);
      return;
    }
    PreparedDay day;
    try {
      day = prepare_day(raw, cfg);
    } catch (const std::exception& e) {
      for (const auto& m : cfg.methods) t.errors.emplace_back(m, e.what());
      t.exit_code = exit_code_for(e);
      return;
    }
    for (const auto& m : cfg.methods) {
      try {
        auto o = decode_prepared(day, m, cfg);
        if (out_dir) write_outcome(o, *out_dir / day_dir_name(t.day_id) / m);
        o.model = json();  // not needed for aggregation
        t.outcomes.push_back(std::move(o));
      } catch (const std::exception& e) {
        t.errors.emplace_back(m, e.what());
        t.exit_code = std::max(t.exit_code, exit_code_for(e));
      }
    }
  };
  const auto jobs = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next >= n) return;
            i = next++;
          }
          work(i);
        }
      });
    for (auto& th : pool) th.join();
  }
  return tasks;
}

ExperimentResult collect(const std::vector<DayTask>& tasks, const ExperimentConfig& cfg) {
  ExperimentResult r;
  for (const auto& m : cfg.methods) r.methods.push_back({m, {}, {}});
  auto slot = [&](const std::string& m) -> MethodDays& {
    return *std::find_if(r.methods.begin(), r.methods.end(), [&](const auto& x) { return x.method == m; });
  };
  for (const auto& t : tasks) {
    for (const auto& o : t.outcomes) slot(o.method).days[t.day_id] = o.report;
    for (const auto& [m, e] : t.errors) slot(m).errors[t.day_id] = e;
    r.exit_code = std::max(r.exit_code, t.exit_code);
  }
  r.summary = aggregate_report(r.methods, cfg.n_classes);
  r.summary["config"] = config_to_json(cfg);
  r.summary["config"].erase("out");
  r.summary["version"] = ECOG_VERSION;
  return r;
}

}  // namespace

ExperimentResult run_on_recordings(const std::vector<Recording>& days, const ExperimentConfig& cfg,
                                   const fs::path* out_dir) {
  cfg.validate();
  return collect(run_days(days.size(), [&](std::size_t i) { return days[i]; }, cfg, out_dir), cfg);
}

std::vector<fs::path> list_day_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root.string());
  static const std::regex pat("day([0-9]+)");
  std::vector<std::pair<int, fs::path>> found;
  for (const auto& e : fs::directory_iterator(root)) {
    std::smatch m;
    const auto name = e.path().filename().string();
    if (e.is_directory() && std::regex_match(name, m, pat)) found.emplace_back(std::stoi(m[1].str()), e.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& [id, p] : found) out.push_back(p);
  return out;
}

int run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<fs::path> dirs;
  if (fs::exists(cfg.dataset / "manifest.json")) {
    dirs.push_back(cfg.dataset);
  } else {
    dirs = list_day_dirs(cfg.dataset);
    dirs.erase(std::remove_if(dirs.begin(), dirs.end(), [](const auto& d) { return !fs::exists(d / "manifest.json"); }),
               dirs.end());
  }
  if (dirs.empty()) throw DataError("no day directories with a manifest under " + cfg.dataset.string());
  fs::create_directories(cfg.out);
  const auto tasks = run_days(dirs.size(), [&](std::size_t i) { return read_dataset(dirs[i]); }, cfg, &cfg.out);
  auto r = collect(tasks, cfg);
  write_text(cfg.out / "summary.json", r.summary.dump(2) + "\n");
  return r.exit_code;
}

json report_from_directory(const fs::path& results) {
  if (!fs::is_directory(results)) throw DataError("not a directory: " + results.string());
  std::map<std::string, MethodDays> by_method;
  int n_classes = 0;
  for (const auto& d : list_day_dirs(results)) {
    const int day = std::stoi(d.filename().string().substr(3));
    for (const auto& e : fs::directory_iterator(d)) {
      const auto csv = e.path() / "confusion.csv";
      if (!e.is_directory() || !fs::exists(csv)) continue;
      const auto method = e.path().filename().string();
      auto rep = parse_confusion_csv(read_text(csv));
      if (n_classes == 0) n_classes = rep.n_classes;
      if (rep.n_classes != n_classes) throw DataError("mixed class counts under " + results.string());
      auto& md = by_method[method];
      md.method = method;
      md.days[day] = std::move(rep);
    }
  }
  if (by_method.empty()) throw DataError("no confusion.csv files under " + results.string());
  std::vector<MethodDays> methods;
  for (const auto& m : known_methods())
    if (by_method.count(m)) methods.push_back(by_method.at(m));
  for (const auto& [name, md] : by_method)
    if (std::find(known_methods().begin(), known_methods().end(), name) == known_methods().end()) methods.push_back(md);
  auto j = aggregate_report(methods, n_classes);
  j["version"] = ECOG_VERSION;
  return j;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_spectra(const Recording& raw, const PreprocessConfig& pre, const SpectralConfig& spec, const fs::path& out) {
  const Recording clean = preprocess(raw, pre, false);
  const auto trials = segment_trials(clean);
  if (trials.empty()) throw DataError("recording has no stimulus trials");
  std::vector<SpectralMap> maps;
  maps.reserve(trials.size());
  for (const auto& t : trials) maps.push_back(stft_power(prewhiten(t, spec), clean.fs_hz, spec));
  const auto rel = relative_spectral_power(average_maps(maps), spec);
  fs::create_directories(out);
  for (std::size_t c = 0; c < rel.n_channels(); ++c) {
    if (clean.channels[c].excluded) continue;
    std::ostringstream os;
    os << "freq_hz";
    for (double t : rel.time_axis_s) os << ',' << num(t - static_cast<double>(rel.onset_sample) / clean.fs_hz);
    os << '\n';
    for (Eigen::Index f = 0; f < rel.n_freqs(); ++f) {
      os << num(rel.freq_axis_hz[static_cast<std::size_t>(f)]);
      for (Eigen::Index k = 0; k < rel.n_frames(); ++k) os << ',' << num(rel.values[c](f, k));
      os << '\n';
    }
    char name[32];
    std::snprintf(name, sizeof name, "relsp_ch%02zu.csv", c + 1);
    write_text(out / name, os.str());
  }

  const Signal aep = average_aep(trials);
  const auto onset = trials.front().trigger_offset;
  std::ostringstream as;
  as << "time_s";
  for (std::size_t c = 0; c < clean.n_channels(); ++c)
    if (!clean.channels[c].excluded) as << ",ch" << (c < 9 ? "0" : "") << c + 1;
  as << '\n';
  for (Eigen::Index i = 0; i < aep.cols(); ++i) {
    as << num(static_cast<double>(i - onset) / clean.fs_hz);
    for (std::size_t c = 0; c < clean.n_channels(); ++c)
      if (!clean.channels[c].excluded) as << ',' << num(aep(static_cast<Eigen::Index>(c), i));
    as << '\n';
  }
  write_text(out / "aep.csv", as.str());

  const auto topo = topographic_map(aep, clean.channels, clean.fs_hz, onset);
  std::ostringstream ts;
  for (int r = 0; r < topo.rows; ++r) {
    for (int c = 0; c < topo.cols; ++c) {
      if (c) ts << ',';
      const auto& v = topo.at(r, c);
      ts << (v ? num(*v) : std::string("NA"));
    }
    ts << '\n';
  }
  write_text(out / "topography.csv", ts.str());
}

}  // namespace ecog
