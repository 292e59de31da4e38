#include "ecog/rlda.hpp"

#include <algorithm>
#include <cmath>

namespace ecog {

using nlohmann::json;

int RldaFeatureConfig::bin_samples(double fs_hz) const {
  const auto fs = samples_per_second(fs_hz);
  const double b = bin_ms * fs_hz / 1000.0;
  const auto bi = std::llround(b);
  if (bi < 1 || std::abs(b - static_cast<double>(bi)) > 1e-9 || fs % bi != 0)
    throw ConfigError("bin width of " + std::to_string(bin_ms) + " ms does not tile one second at " +
                      std::to_string(fs_hz) + " Hz");
  return static_cast<int>(bi);
}

Eigen::VectorXd extract_features(const Signal& trial, double fs_hz, const RldaFeatureConfig& cfg) {
  const int b = cfg.bin_samples(fs_hz);
  const Eigen::Index n_bins = trial.cols() / b;
  Eigen::VectorXd f(trial.rows() * n_bins);
  for (Eigen::Index c = 0; c < trial.rows(); ++c)
    for (Eigen::Index k = 0; k < n_bins; ++k) f(c * n_bins + k) = trial.row(c).segment(k * b, b).mean();
  return f;
}

Eigen::MatrixXd feature_matrix(const std::vector<ClassTrial>& trials, double fs_hz, const RldaFeatureConfig& cfg) {
  if (trials.empty()) return {};
  const auto first = extract_features(trials.front().samples, fs_hz, cfg);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(trials.size()), first.size());
  x.row(0) = first.transpose();
  for (std::size_t i = 1; i < trials.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = extract_features(trials[i].samples, fs_hz, cfg).transpose();
  return x;
}

std::vector<int> labels_of(const std::vector<ClassTrial>& trials) {
  std::vector<int> y;
  y.reserve(trials.size());
  for (const auto& t : trials) y.push_back(t.label);
  return y;
}

int argmax_label(const Eigen::VectorXd& scores) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < scores.size(); ++k)
    if (scores(k) > scores(best)) best = k;
  return static_cast<int>(best) + 1;
}

Eigen::MatrixXd RldaModel::shrunk_covariance() const {
  const auto d = pooled_covariance.rows();
  const double nu = pooled_covariance.trace() / static_cast<double>(d);
  Eigen::MatrixXd s = (1.0 - shrinkage_lambda) * pooled_covariance;
  s.diagonal().array() += shrinkage_lambda * nu;
  return s;
}

void RldaModel::finalize() {
  const Eigen::MatrixXd s = shrunk_covariance();
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-12))
    throw NumericError("shrunk covariance is singular (lambda = " + std::to_string(shrinkage_lambda) + ")");
  coef = llt.solve(class_means.transpose()).transpose();
  intercept.resize(class_means.rows());
  for (Eigen::Index k = 0; k < class_means.rows(); ++k)
    intercept(k) = -0.5 * coef.row(k).dot(class_means.row(k)) + std::log(class_priors(k));
}

Eigen::VectorXd RldaModel::scores(const Eigen::VectorXd& x) const { return coef * x + intercept; }

Prediction RldaModel::predict(const Eigen::VectorXd& x) const {
  Prediction p;
  p.scores = scores(x);
  p.label = argmax_label(p.scores);
  return p;
}

Eigen::VectorXd RldaModel::posteriors(const Eigen::VectorXd& x) const {
  Eigen::VectorXd s = scores(x);
  s.array() -= s.maxCoeff();
  s = s.array().exp();
  return s / s.sum();
}

RldaModel fit_rlda(const Eigen::MatrixXd& x, const std::vector<int>& labels, int n_classes, double lambda) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw DataError("feature/label count mismatch");
  if (!(lambda >= 0 && lambda <= 1)) throw ConfigError("shrinkage must lie in [0, 1]");
  if (!x.allFinite()) throw DataError("non-finite features");
  const auto d = x.cols();
  RldaModel m;
  m.shrinkage_lambda = lambda;
  m.class_means = Eigen::MatrixXd::Zero(n_classes, d);
  m.class_priors = Eigen::VectorXd::Zero(n_classes);
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int k = labels[static_cast<std::size_t>(i)];
    if (k < 1 || k > n_classes) throw DataError("label " + std::to_string(k) + " outside 1.." + std::to_string(n_classes));
    m.class_means.row(k - 1) += x.row(i);
    ++counts[static_cast<std::size_t>(k - 1)];
  }
  for (int k = 0; k < n_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] < 2)
      throw DataError("class " + std::to_string(k + 1) + " has fewer than 2 training trials");
    m.class_means.row(k) /= counts[static_cast<std::size_t>(k)];
    m.class_priors(k) = static_cast<double>(counts[static_cast<std::size_t>(k)]) / static_cast<double>(x.rows());
  }
  Eigen::MatrixXd centered = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) centered.row(i) -= m.class_means.row(labels[static_cast<std::size_t>(i)] - 1);
  m.pooled_covariance = (centered.transpose() * centered) / static_cast<double>(x.rows());
  m.pooled_covariance = 0.5 * (m.pooled_covariance + m.pooled_covariance.transpose()).eval();
  m.finalize();
  return m;
}

double accuracy(const RldaModel& model, const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    hits += model.predict(x.row(i).transpose()).label == labels[static_cast<std::size_t>(i)] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<double> default_lambda_grid() { return {0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0}; }

double select_lambda(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y, const Eigen::MatrixXd& val_x,
                     const std::vector<int>& val_y, int n_classes, std::vector<double> grid) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  std::sort(grid.begin(), grid.end());
  double best_lambda = grid.front();
  double best_da = -1.0;
  for (double lambda : grid) {
    double da = -1.0;
    try {
      da = accuracy(fit_rlda(train_x, train_y, n_classes, lambda), val_x, val_y);
    } catch (const NumericError&) {
      // singular covariance scores as a failed candidate
    }
    if (da > best_da) {
      best_da = da;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

Prediction RldaDecoder::predict(const ClassTrial& trial) const {
  return model.predict(extract_features(trial.samples, fs_hz, features));
}

RldaDecoder train_rlda(const std::vector<ClassTrial>& train, const std::vector<ClassTrial>& validation, int n_classes,
                       double fs_hz, const RldaFeatureConfig& cfg, std::vector<double> grid) {
  const auto tx = feature_matrix(train, fs_hz, cfg);
  const auto ty = labels_of(train);
  const auto vx = feature_matrix(validation, fs_hz, cfg);
  const auto vy = labels_of(validation);
  const double lambda = select_lambda(tx, ty, vx, vy, n_classes, std::move(grid));

  Eigen::MatrixXd all(tx.rows() + vx.rows(), tx.cols());
  all << tx, vx;
  auto ally = ty;
  ally.insert(ally.end(), vy.begin(), vy.end());
  return RldaDecoder{fs_hz, cfg, fit_rlda(all, ally, n_classes, lambda)};
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw DataError("ragged matrix in model file");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void to_json(json& j, const RldaModel& m) {
  j = {{"class_means", matrix_to_json(m.class_means)},
       {"pooled_covariance", matrix_to_json(m.pooled_covariance)},
       {"shrinkage_lambda", m.shrinkage_lambda},
       {"class_priors", vector_to_json(m.class_priors)}};
}

void from_json(const json& j, RldaModel& m) {
  m.class_means = matrix_from_json(j.at("class_means"));
  m.pooled_covariance = matrix_from_json(j.at("pooled_covariance"));
  m.shrinkage_lambda = j.at("shrinkage_lambda").get<double>();
  m.class_priors = vector_from_json(j.at("class_priors"));
  m.finalize();
}

void to_json(json& j, const RldaDecoder& d) {
  j = {{"method", "rlda"}, {"fs_hz", d.fs_hz}, {"bin_ms", d.features.bin_ms}, {"model", d.model}};
}

void from_json(const json& j, RldaDecoder& d) {
  d.fs_hz = j.at("fs_hz").get<double>();
  d.features.bin_ms = j.at("bin_ms").get<double>();
  d.model = j.at("model").get<RldaModel>();
}

}  // namespace ecog
