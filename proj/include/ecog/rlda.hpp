#pragma once

#include <Eigen/Dense>

#include <vector>

#include <json.hpp>

#include "ecog/dataset.hpp"

namespace ecog {

struct RldaFeatureConfig {
  double bin_ms{40.0};

  int bin_samples(double fs_hz) const;  // throws ConfigError unless bins tile 1 s exactly
};

// Per channel, the mean amplitude of consecutive non-overlapping bins,
// concatenated channel-major.
Eigen::VectorXd extract_features(const Signal& trial, double fs_hz, const RldaFeatureConfig& cfg);
Eigen::MatrixXd feature_matrix(const std::vector<ClassTrial>& trials, double fs_hz, const RldaFeatureConfig& cfg);
std::vector<int> labels_of(const std::vector<ClassTrial>& trials);

struct Prediction {
  int label{0};
  Eigen::VectorXd scores;  // one per class, class 1 first
};

// Shared-covariance Gaussian classifier with the covariance shrunk toward a
// scaled identity: (1 - lambda) S + lambda tr(S)/d I.
struct RldaModel {
  Eigen::MatrixXd class_means;        // [n_classes][d]
  Eigen::MatrixXd pooled_covariance;  // unshrunk, ML estimate
  double shrinkage_lambda{0.0};
  Eigen::VectorXd class_priors;

  // Derived by finalize(): score_k(x) = coef.row(k) x + intercept(k).
  Eigen::MatrixXd coef;
  Eigen::VectorXd intercept;

  int n_classes() const { return static_cast<int>(class_means.rows()); }
  Eigen::Index dim() const { return class_means.cols(); }

  Eigen::MatrixXd shrunk_covariance() const;
  // Throws NumericError when the shrunk covariance is numerically singular.
  void finalize();

  Eigen::VectorXd scores(const Eigen::VectorXd& x) const;
  Prediction predict(const Eigen::VectorXd& x) const;
  // Softmax of the discriminant scores.
  Eigen::VectorXd posteriors(const Eigen::VectorXd& x) const;
};

// Rows of `x` are observations; labels are 1..n_classes.
RldaModel fit_rlda(const Eigen::MatrixXd& x, const std::vector<int>& labels, int n_classes, double lambda);

// Lowest index wins ties.
int argmax_label(const Eigen::VectorXd& scores);

double accuracy(const RldaModel& model, const Eigen::MatrixXd& x, const std::vector<int>& labels);

std::vector<double> default_lambda_grid();

// Validation-accuracy maximizer over `grid`; singular candidates count as
// total failures and ties resolve to the smallest lambda.
double select_lambda(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y, const Eigen::MatrixXd& val_x,
                     const std::vector<int>& val_y, int n_classes, std::vector<double> grid);

struct RldaDecoder {
  double fs_hz{900.0};
  RldaFeatureConfig features;
  RldaModel model;

  Prediction predict(const ClassTrial& trial) const;
};

// Selects lambda on the validation split, then refits on train + validation.
RldaDecoder train_rlda(const std::vector<ClassTrial>& train, const std::vector<ClassTrial>& validation, int n_classes,
                       double fs_hz, const RldaFeatureConfig& cfg = {}, std::vector<double> grid = default_lambda_grid());

void to_json(nlohmann::json& j, const RldaModel& m);
void from_json(const nlohmann::json& j, RldaModel& m);
void to_json(nlohmann::json& j, const RldaDecoder& d);
void from_json(const nlohmann::json& j, RldaDecoder& d);

// Eigen <-> nested JSON arrays.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

}  // namespace ecog
