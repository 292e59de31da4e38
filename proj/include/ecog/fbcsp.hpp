#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

#include <json.hpp>

#include "ecog/preprocess.hpp"
#include "ecog/rlda.hpp"

namespace ecog {

struct FilterBank {
  std::vector<std::pair<double, double>> bands{{0.5, 4},  {4, 8},   {8, 13},  {13, 30},
                                               {30, 50}, {50, 70}, {70, 90}, {90, 120}};
  int order{2};

  void validate(double fs_hz) const;
  std::vector<BiquadCascade> design(double fs_hz) const;
};

struct CspFilters {
  Eigen::MatrixXd w;             // [2m][n_channels]: m most class-A rows, then m most class-B rows
  Eigen::VectorXd eigenvalues;   // all generalized eigenvalues, descending
  bool regularized{false};
};

// Trace-normalized spatial covariance of one (already band-passed) trial.
Eigen::MatrixXd normalized_covariance(const Signal& x);

// Solves S_a w = l (S_a + S_b) w on class-averaged normalized covariances.
CspFilters fit_csp(const std::vector<Signal>& trials_a, const std::vector<Signal>& trials_b, int m);
CspFilters fit_csp_from_covariances(const Eigen::MatrixXd& cov_a, const Eigen::MatrixXd& cov_b, int m);

constexpr double kVarianceFloor = 1e-12;

// Band-pass per band, project through that band's filters, log of per-row variance.
Eigen::VectorXd logvar_features(const Signal& trial, const std::vector<Eigen::MatrixXd>& w_per_band,
                                const std::vector<BiquadCascade>& bank_filters);

struct FbcspConfig {
  FilterBank bank;
  std::vector<int> m_grid{2, 3, 4};
  std::vector<double> lambda_grid = default_lambda_grid();
};

struct FbcspModel {
  double fs_hz{900.0};
  FilterBank bank;
  int n_classes{2};
  int m{3};
  double lambda{0.0};
  // [pair][band]; a single pair for two classes, one per class (k vs rest) otherwise.
  std::vector<std::vector<Eigen::MatrixXd>> filters;
  std::vector<RldaModel> classifiers;
  int regularized_fits{0};

  Eigen::VectorXd features(const Signal& trial, std::size_t pair) const;
  Prediction predict(const ClassTrial& trial) const;

 private:
  mutable std::vector<BiquadCascade> designed_;
};

// Hyperparameters (m, lambda) selected on validation accuracy; the final
// model is refit on train + validation.
FbcspModel fit_fbcsp(const std::vector<ClassTrial>& train, const std::vector<ClassTrial>& validation, int n_classes,
                     double fs_hz, const FbcspConfig& cfg = {});

void to_json(nlohmann::json& j, const FbcspModel& m);
void from_json(const nlohmann::json& j, FbcspModel& m);

}  // namespace ecog
