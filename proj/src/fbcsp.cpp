#include "ecog/fbcsp.hpp"

#include <algorithm>
#include <cmath>
#include <span>

namespace ecog {

using nlohmann::json;

void FilterBank::validate(double fs_hz) const {
  if (bands.empty()) throw ConfigError("filter bank has no bands");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    const auto [lo, hi] = bands[i];
    if (!(lo > 0 && lo < hi && hi < fs_hz / 2))
      throw ConfigError("filter bank band " + std::to_string(i) + " outside (0, fs/2) or inverted");
    if (i > 0 && lo < bands[i - 1].second) throw ConfigError("filter bank bands overlap");
  }
}

std::vector<BiquadCascade> FilterBank::design(double fs_hz) const {
  validate(fs_hz);
  std::vector<BiquadCascade> out;
  for (const auto& [lo, hi] : bands) out.push_back(design_bandpass(lo, hi, order, fs_hz));
  return out;
}

namespace {

Signal bandpass(const Signal& x, const BiquadCascade& f) {
  Signal y = x;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    f.filter(std::span<double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return y;
}

// Sample covariance of the rows (mean removed, n - 1 normalization).
Eigen::MatrixXd sample_covariance(const Signal& x) {
  const Eigen::MatrixXd centered = x.colwise() - x.rowwise().mean();
  return centered * centered.transpose() / static_cast<double>(std::max<Eigen::Index>(1, x.cols() - 1));
}

Eigen::MatrixXd trace_normalized(const Eigen::MatrixXd& s) {
  const double tr = s.trace();
  return tr > 0 ? Eigen::MatrixXd(s / tr) : Eigen::MatrixXd::Zero(s.rows(), s.cols());
}

Eigen::VectorXd logvar_from_covariance(const Eigen::MatrixXd& w, const Eigen::MatrixXd& cov) {
  Eigen::VectorXd v = (w * cov * w.transpose()).diagonal();
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = std::log(std::max(v(i), kVarianceFloor));
  return v;
}

}  // namespace

Eigen::MatrixXd normalized_covariance(const Signal& x) { return trace_normalized(sample_covariance(x)); }

CspFilters fit_csp_from_covariances(const Eigen::MatrixXd& cov_a, const Eigen::MatrixXd& cov_b, int m) {
  const auto n = cov_a.rows();
  if (m < 1 || 2 * m > n) throw ConfigError("CSP needs 1 <= m <= n_channels / 2");
  Eigen::MatrixXd a = cov_a, b = cov_b;
  Eigen::MatrixXd composite = a + b;
  CspFilters out;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> comp(composite, Eigen::EigenvaluesOnly);
  const double max_ev = comp.eigenvalues().maxCoeff();
  if (!(max_ev > 0)) throw NumericError("CSP composite covariance is zero");
  if (comp.eigenvalues().minCoeff() <= 1e-10 * max_ev) {
    // Rank deficient (e.g. after common-average referencing): split a
    // 1e-9 tr(composite) ridge across both classes.
    const double eps = 1e-9 * composite.trace();
    a.diagonal().array() += 0.5 * eps;
    b.diagonal().array() += 0.5 * eps;
    composite = a + b;
    out.regularized = true;
  }

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(a, composite);
  if (ges.info() != Eigen::Success) throw NumericError("CSP generalized eigenproblem failed");
  // Ascending eigenvalues; eigenvectors are composite-orthonormal.
  const auto& vals = ges.eigenvalues();
  const auto& vecs = ges.eigenvectors();
  out.eigenvalues = vals.reverse();
  out.w.resize(2 * m, n);
  for (int i = 0; i < m; ++i) {
    out.w.row(i) = vecs.col(n - 1 - i).transpose();
    out.w.row(m + i) = vecs.col(i).transpose();
  }
  return out;
}

CspFilters fit_csp(const std::vector<Signal>& trials_a, const std::vector<Signal>& trials_b, int m) {
  if (trials_a.size() < 2 || trials_b.size() < 2) throw DataError("CSP needs at least 2 trials per class");
  auto mean_cov = [](const std::vector<Signal>& ts) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(ts.front().rows(), ts.front().rows());
    for (const auto& t : ts) acc += normalized_covariance(t);
    return Eigen::MatrixXd(acc / static_cast<double>(ts.size()));
  };
  return fit_csp_from_covariances(mean_cov(trials_a), mean_cov(trials_b), m);
}

Eigen::VectorXd logvar_features(const Signal& trial, const std::vector<Eigen::MatrixXd>& w_per_band,
                                const std::vector<BiquadCascade>& bank_filters) {
  if (w_per_band.size() != bank_filters.size()) throw ConfigError("one CSP filter set per band required");
  std::vector<Eigen::VectorXd> parts;
  Eigen::Index total = 0;
  for (std::size_t b = 0; b < bank_filters.size(); ++b) {
    const Signal projected = w_per_band[b] * bandpass(trial, bank_filters[b]);
    Eigen::VectorXd v(projected.rows());
    const double denom = static_cast<double>(std::max<Eigen::Index>(1, projected.cols() - 1));
    for (Eigen::Index r = 0; r < projected.rows(); ++r) {
      const double var = (projected.row(r).array() - projected.row(r).mean()).square().sum() / denom;
      v(r) = std::log(std::max(var, kVarianceFloor));
    }
    total += v.size();
    parts.push_back(std::move(v));
  }
  Eigen::VectorXd out(total);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.segment(off, p.size()) = p;
    off += p.size();
  }
  return out;
}

Eigen::VectorXd FbcspModel::features(const Signal& trial, std::size_t pair) const {
  if (designed_.size() != bank.bands.size()) designed_ = bank.design(fs_hz);
  return logvar_features(trial, filters.at(pair), designed_);
}

Prediction FbcspModel::predict(const ClassTrial& trial) const {
  Prediction p;
  if (n_classes == 2) {
    p.scores = classifiers.at(0).posteriors(features(trial.samples, 0));
  } else {
    p.scores.resize(n_classes);
    for (int k = 0; k < n_classes; ++k)
      p.scores(k) = classifiers.at(static_cast<std::size_t>(k)).posteriors(features(trial.samples, static_cast<std::size_t>(k)))(0);
  }
  p.label = argmax_label(p.scores);
  return p;
}

namespace {

// Per-trial, per-band sample covariances of the band-passed trial.
using CovCache = std::vector<std::vector<Eigen::MatrixXd>>;  // [trial][band]

CovCache band_covariances(const std::vector<ClassTrial>& trials, const std::vector<BiquadCascade>& filters) {
  CovCache out(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i)
    for (const auto& f : filters) out[i].push_back(sample_covariance(bandpass(trials[i].samples, f)));
  return out;
}

// Binary relabeling for pair p: two-class keeps labels, one-vs-rest maps k -> 1, rest -> 2.
std::vector<int> pair_labels(const std::vector<int>& y, int n_classes, std::size_t pair) {
  if (n_classes == 2) return y;
  std::vector<int> out;
  out.reserve(y.size());
  for (int v : y) out.push_back(v == static_cast<int>(pair) + 1 ? 1 : 2);
  return out;
}

// Full eigen-decomposition per band for one class pair; W for any m is a row subset.
std::vector<CspFilters> pair_csp(const CovCache& covs, const std::vector<int>& binary, std::size_t n_bands, int max_m) {
  std::vector<CspFilters> out;
  for (std::size_t b = 0; b < n_bands; ++b) {
    const auto n = covs.front()[b].rows();
    Eigen::MatrixXd ca = Eigen::MatrixXd::Zero(n, n), cb = Eigen::MatrixXd::Zero(n, n);
    int na = 0, nb = 0;
    for (std::size_t i = 0; i < covs.size(); ++i) {
      if (binary[i] == 1) {
        ca += trace_normalized(covs[i][b]);
        ++na;
      } else {
        cb += trace_normalized(covs[i][b]);
        ++nb;
      }
    }
    if (na < 2 || nb < 2) throw DataError("CSP needs at least 2 trials per class");
    out.push_back(fit_csp_from_covariances(ca / na, cb / nb, max_m));
  }
  return out;
}

std::vector<Eigen::MatrixXd> select_rows(const std::vector<CspFilters>& full, int m, int max_m) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& f : full) {
    Eigen::MatrixXd w(2 * m, f.w.cols());
    w.topRows(m) = f.w.topRows(m);
    w.bottomRows(m) = f.w.middleRows(max_m, m);
    out.push_back(std::move(w));
  }
  return out;
}

Eigen::MatrixXd cached_features(const CovCache& covs, const std::vector<Eigen::MatrixXd>& w) {
  const Eigen::Index per_band = w.front().rows();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(covs.size()), per_band * static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < covs.size(); ++i)
    for (std::size_t b = 0; b < w.size(); ++b)
      x.row(static_cast<Eigen::Index>(i)).segment(static_cast<Eigen::Index>(b) * per_band, per_band) =
          logvar_from_covariance(w[b], covs[i][b]).transpose();
  return x;
}

std::vector<int> predict_cached(const std::vector<RldaModel>& clf, const std::vector<Eigen::MatrixXd>& x, int n_classes) {
  const auto n = x.front().rows();
  std::vector<int> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (n_classes == 2) {
      out[static_cast<std::size_t>(i)] = clf[0].predict(x[0].row(i).transpose()).label;
    } else {
      Eigen::VectorXd s(n_classes);
      for (int k = 0; k < n_classes; ++k)
        s(k) = clf[static_cast<std::size_t>(k)].posteriors(x[static_cast<std::size_t>(k)].row(i).transpose())(0);
      out[static_cast<std::size_t>(i)] = argmax_label(s);
    }
  }
  return out;
}

}  // namespace

FbcspModel fit_fbcsp(const std::vector<ClassTrial>& train, const std::vector<ClassTrial>& validation, int n_classes,
                     double fs_hz, const FbcspConfig& cfg) {
  if (n_classes < 2) throw ConfigError("FBCSP needs at least 2 classes");
  if (cfg.m_grid.empty() || cfg.lambda_grid.empty()) throw ConfigError("empty FBCSP hyperparameter grid");
  if (train.empty() || validation.empty()) throw DataError("FBCSP needs non-empty train and validation sets");
  const auto filters = cfg.bank.design(fs_hz);
  const std::size_t n_bands = filters.size();
  const std::size_t n_pairs = n_classes == 2 ? 1 : static_cast<std::size_t>(n_classes);
  auto m_grid = cfg.m_grid;
  std::sort(m_grid.begin(), m_grid.end());
  // Candidates needing more filter pairs than the remaining channels allow are skipped.
  const auto n_channels = static_cast<int>(train.front().samples.rows());
  std::erase_if(m_grid, [&](int m) { return m < 1 || 2 * m > n_channels; });
  if (m_grid.empty())
    throw ConfigError("no FBCSP m candidate fits " + std::to_string(n_channels) + " channels");
  auto lambdas = cfg.lambda_grid;
  std::sort(lambdas.begin(), lambdas.end());
  const int max_m = m_grid.back();

  const auto train_cov = band_covariances(train, filters);
  const auto val_cov = band_covariances(validation, filters);
  const auto ty = labels_of(train);
  const auto vy = labels_of(validation);

  int regularized = 0;
  std::vector<std::vector<CspFilters>> full(n_pairs);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    full[p] = pair_csp(train_cov, pair_labels(ty, n_classes, p), n_bands, max_m);
    for (const auto& f : full[p]) regularized += f.regularized ? 1 : 0;
  }

  int best_m = m_grid.front();
  double best_lambda = lambdas.front();
  double best_da = -1;
  for (int m : m_grid) {
    std::vector<Eigen::MatrixXd> tx, vx;
    for (std::size_t p = 0; p < n_pairs; ++p) {
      const auto w = select_rows(full[p], m, max_m);
      tx.push_back(cached_features(train_cov, w));
      vx.push_back(cached_features(val_cov, w));
    }
    for (double lambda : lambdas) {
      double da = -1;
      try {
        std::vector<RldaModel> clf;
        for (std::size_t p = 0; p < n_pairs; ++p)
          clf.push_back(fit_rlda(tx[p], pair_labels(ty, n_classes, p), 2, lambda));
        const auto pred = predict_cached(clf, vx, n_classes);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == vy[i] ? 1 : 0;
        da = static_cast<double>(hits) / static_cast<double>(pred.size());
      } catch (const NumericError&) {
      }
      if (da > best_da) {
        best_da = da;
        best_m = m;
        best_lambda = lambda;
      }
    }
  }

  // Refit on the first 80% (train + validation) with the selected setting.
  CovCache all_cov = train_cov;
  all_cov.insert(all_cov.end(), val_cov.begin(), val_cov.end());
  auto all_y = ty;
  all_y.insert(all_y.end(), vy.begin(), vy.end());

  FbcspModel model;
  model.fs_hz = fs_hz;
  model.bank = cfg.bank;
  model.n_classes = n_classes;
  model.m = best_m;
  model.lambda = best_lambda;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const auto binary = pair_labels(all_y, n_classes, p);
    const auto csp = pair_csp(all_cov, binary, n_bands, best_m);
    for (const auto& f : csp) regularized += f.regularized ? 1 : 0;
    auto w = select_rows(csp, best_m, best_m);
    model.classifiers.push_back(fit_rlda(cached_features(all_cov, w), binary, 2, best_lambda));
    model.filters.push_back(std::move(w));
  }
  model.regularized_fits = regularized;
  return model;
}

void to_json(json& j, const FbcspModel& m) {
  json bands = json::array();
  for (const auto& [lo, hi] : m.bank.bands) bands.push_back({lo, hi});
  json filters = json::array();
  for (const auto& pair : m.filters) {
    json per_band = json::array();
    for (const auto& w : pair) per_band.push_back(matrix_to_json(w));
    filters.push_back(std::move(per_band));
  }
  j = {{"method", "fbcsp"}, {"fs_hz", m.fs_hz}, {"bands", bands},        {"order", m.bank.order},
       {"n_classes", m.n_classes}, {"m", m.m},   {"lambda", m.lambda},     {"filters", filters},
       {"classifiers", m.classifiers}};
}

void from_json(const json& j, FbcspModel& m) {
  m.fs_hz = j.at("fs_hz").get<double>();
  m.bank.bands.clear();
  for (const auto& b : j.at("bands")) m.bank.bands.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
  m.bank.order = j.at("order").get<int>();
  m.n_classes = j.at("n_classes").get<int>();
  m.m = j.at("m").get<int>();
  m.lambda = j.at("lambda").get<double>();
  m.filters.clear();
  for (const auto& pair : j.at("filters")) {
    std::vector<Eigen::MatrixXd> per_band;
    for (const auto& w : pair) per_band.push_back(matrix_from_json(w));
    m.filters.push_back(std::move(per_band));
  }
  m.classifiers = j.at("classifiers").get<std::vector<RldaModel>>();
}

}  // namespace ecog
