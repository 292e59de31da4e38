#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecog/dataset.hpp"

namespace ecog {

struct Split {
  std::vector<std::size_t> train, validation, test;
};

constexpr double kTrainFraction = 0.64;
constexpr double kTrainValFraction = 0.80;

// Chronological 64/16/20 split; bad trials leave train and validation only.
Split chronological_split(const std::vector<bool>& bad);
Split chronological_split(const std::vector<ClassTrial>& trials);

template <class T>
std::vector<T> gather(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

// Rows are actual classes, columns predicted ones. Undefined ratios are NaN.
struct ConfusionReport {
  int n_classes{0};
  Eigen::MatrixXi counts;
  Eigen::VectorXd per_class_da;  // D_ii / total
  double da{0};                  // trace / total
  Eigen::VectorXd precision;     // D_rr / row sum
  Eigen::VectorXd sensitivity;   // D_cc / column sum

  long total() const { return counts.sum(); }
};

ConfusionReport confusion_from_counts(const Eigen::MatrixXi& counts);
ConfusionReport confusion_matrix(const std::vector<int>& actual, const std::vector<int>& predicted, int n_classes);

std::string confusion_csv(const ConfusionReport& r);
ConfusionReport parse_confusion_csv(const std::string& text);

struct RankSum {
  double u{0};  // Mann-Whitney U of the first sample
  double p{1};  // two-sided
  bool exact{false};
};

constexpr int kExactRankSumLimit = 12;

// Exact enumeration for small tie-free samples, otherwise the normal approximation.
RankSum wilcoxon_ranksum(const std::vector<double>& a, const std::vector<double>& b);
// Normal approximation with tie and continuity correction, always.
RankSum wilcoxon_ranksum_normal(const std::vector<double>& a, const std::vector<double>& b);
// Exact enumeration; throws ConfigError on ties or oversized samples.
RankSum wilcoxon_ranksum_exact(const std::vector<double>& a, const std::vector<double>& b);

// "***", "**", "*" or `none` for p >= 0.05.
std::string significance_stars(double p, const std::string& none = "n.s.");

// NaN when either sample has zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

struct DayComparison {
  double p{1};
  std::string stars;
  double pearson_r{0};
};

DayComparison per_day_comparison(const std::vector<double>& a, const std::vector<double>& b);

// P(X >= k) for X ~ Binomial(n, p0).
double binomial_greater_p(long k, long n, double p0);

struct MethodDays {
  std::string method;
  std::map<int, ConfusionReport> days;       // by day id
  std::map<int, std::string> errors;         // day id -> diagnostic
};

double chance_level(int n_classes);

// Pooled reports, per-day DAs, cross-method Wilcoxon tests per cell.
nlohmann::json aggregate_report(const std::vector<MethodDays>& methods, int n_classes);

nlohmann::json report_to_json(const ConfusionReport& r);

}  // namespace ecog
