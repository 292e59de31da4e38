#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ecog/rlda.hpp"

using namespace ecog;

namespace {

struct Sample {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Sample gaussian_classes(const std::vector<Eigen::Vector2d>& means, const Eigen::Matrix2d& cov, int per_class,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  const Eigen::Matrix2d l = cov.llt().matrixL();
  Sample s;
  s.x.resize(static_cast<Eigen::Index>(means.size()) * per_class, 2);
  Eigen::Index row = 0;
  for (int i = 0; i < per_class; ++i)
    for (std::size_t k = 0; k < means.size(); ++k) {
      const Eigen::Vector2d z(n(rng), n(rng));
      s.x.row(row++) = (means[k] + l * z).transpose();
      s.y.push_back(static_cast<int>(k) + 1);
    }
  return s;
}

// log N(x; mu, S) + log prior, evaluated from the density formula.
double log_joint(const Eigen::Vector2d& x, const Eigen::Vector2d& mu, const Eigen::Matrix2d& s, double prior) {
  const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
  Eigen::Matrix2d inv;
  inv << s(1, 1), -s(0, 1), -s(1, 0), s(0, 0);
  inv /= det;
  const Eigen::Vector2d d = x - mu;
  return -0.5 * d.dot(inv * d) - 0.5 * std::log(4 * std::numbers::pi * std::numbers::pi * det) + std::log(prior);
}

ClassTrial constant_trial(int channels, double v, int label = 1) {
  ClassTrial t;
  t.samples = Signal::Constant(channels, 900, v);
  t.label = label;
  return t;
}

}  // namespace

TEST_CASE("feature extraction bins channel-major") {
  const auto f = extract_features(constant_trial(16, 5.0).samples, 900.0, RldaFeatureConfig{});
  CHECK(f.size() == 400);
  CHECK((f.array() == 5.0).all());

  Signal ramp(2, 900);
  for (Eigen::Index c = 0; c < 2; ++c)
    for (Eigen::Index i = 0; i < 900; ++i) ramp(c, i) = static_cast<double>(i) + 1000.0 * static_cast<double>(c);
  const auto g = extract_features(ramp, 900.0, RldaFeatureConfig{});
  CHECK(g(0) == doctest::Approx(17.5));   // mean of 0..35
  CHECK(g(25) == doctest::Approx(1017.5));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  Signal a(3, 900), b(3, 900);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = n(rng);
    b.data()[i] = n(rng);
  }
  const RldaFeatureConfig cfg;
  CHECK((extract_features(a + b, 900.0, cfg) - extract_features(a, 900.0, cfg) - extract_features(b, 900.0, cfg))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  RldaFeatureConfig odd;
  odd.bin_ms = 37.0;
  CHECK_THROWS_AS(odd.bin_samples(900.0), ConfigError);
}

TEST_CASE("3-class predictions match a Bayes density oracle") {
  Eigen::Matrix2d cov;
  cov << 2.0, 0.6, 0.6, 1.0;
  const std::vector<Eigen::Vector2d> means{{0, 0}, {2, 1}, {-1, 2}};
  const auto train = gaussian_classes(means, cov, 60, 1);
  const auto test = gaussian_classes(means, cov, 34, 2);
  for (double lambda : {0.0, 0.3}) {
    const auto m = fit_rlda(train.x, train.y, 3, lambda);
    const Eigen::Matrix2d s = m.shrunk_covariance();
    int agree = 0;
    for (Eigen::Index i = 0; i < 100; ++i) {
      const Eigen::Vector2d x = test.x.row(i).transpose();
      int best = 1;
      double best_v = -1e300;
      for (int k = 0; k < 3; ++k) {
        const double v = log_joint(x, m.class_means.row(k).transpose(), s, m.class_priors(k));
        if (v > best_v) {
          best_v = v;
          best = k + 1;
        }
      }
      agree += m.predict(x).label == best ? 1 : 0;
    }
    CHECK(agree == 100);
  }
}

TEST_CASE("lambda = 1 is a nearest-mean classifier") {
  Eigen::Matrix2d cov;
  cov << 3.0, 1.0, 1.0, 0.5;
  const auto train = gaussian_classes({{0, 0}, {1.5, -1.0}}, cov, 40, 5);
  const auto test = gaussian_classes({{0, 0}, {1.5, -1.0}}, cov, 25, 6);
  const auto m = fit_rlda(train.x, train.y, 2, 1.0);
  const double sigma2 = m.pooled_covariance.trace() / 2.0;
  CHECK((m.shrunk_covariance() - sigma2 * Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  for (Eigen::Index i = 0; i < 50; ++i) {
    const Eigen::Vector2d x = test.x.row(i).transpose();
    // Equal priors by construction, so the nearest Euclidean mean wins.
    const double d1 = (x - m.class_means.row(0).transpose()).squaredNorm();
    const double d2 = (x - m.class_means.row(1).transpose()).squaredNorm();
    CHECK(m.predict(x).label == (d1 <= d2 ? 1 : 2));
  }
}

TEST_CASE("well separated Gaussians are classified almost perfectly") {
  const auto train = gaussian_classes({{-5, 0}, {5, 0}}, Eigen::Matrix2d::Identity(), 200, 7);
  const auto test = gaussian_classes({{-5, 0}, {5, 0}}, Eigen::Matrix2d::Identity(), 200, 8);
  const auto m = fit_rlda(train.x, train.y, 2, 0.0);
  CHECK(accuracy(m, test.x, test.y) >= 0.99);
}

TEST_CASE("lambda = 0 matches classical LDA by direct solve") {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.4, 0.4, 2.0;
  const auto s = gaussian_classes({{0, 0}, {1, 2}}, cov, 100, 9);
  const auto m = fit_rlda(s.x, s.y, 2, 0.0);
  Eigen::Vector2d mu[2] = {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  int count[2] = {0, 0};
  for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
    mu[s.y[static_cast<std::size_t>(i)] - 1] += s.x.row(i).transpose();
    ++count[s.y[static_cast<std::size_t>(i)] - 1];
  }
  for (int k = 0; k < 2; ++k) mu[k] /= count[k];
  Eigen::Matrix2d pooled = Eigen::Matrix2d::Zero();
  for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
    const Eigen::Vector2d d = s.x.row(i).transpose() - mu[s.y[static_cast<std::size_t>(i)] - 1];
    pooled += d * d.transpose();
  }
  pooled /= static_cast<double>(s.x.rows());
  const Eigen::Vector2d w = pooled.fullPivLu().solve(mu[1] - mu[0]);
  const Eigen::Vector2d coef_diff = (m.coef.row(1) - m.coef.row(0)).transpose();
  CHECK((coef_diff - w).norm() < 1e-9 * w.norm());
  const double b = -0.5 * (mu[1] + mu[0]).dot(w);  // equal priors
  CHECK(m.intercept(1) - m.intercept(0) == doctest::Approx(b).epsilon(1e-9));
}

TEST_CASE("duplicating the training set leaves the model unchanged") {
  const auto s = gaussian_classes({{0, 0}, {1, 1}, {2, 0}}, Eigen::Matrix2d::Identity(), 20, 10);
  Eigen::MatrixXd x2(s.x.rows() * 2, 2);
  x2 << s.x, s.x;
  auto y2 = s.y;
  y2.insert(y2.end(), s.y.begin(), s.y.end());
  const auto a = fit_rlda(s.x, s.y, 3, 0.1), b = fit_rlda(x2, y2, 3, 0.1);
  CHECK((a.class_means - b.class_means).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.pooled_covariance - b.pooled_covariance).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.class_priors - b.class_priors).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a.class_priors.sum() == doctest::Approx(1.0));
}

TEST_CASE("prediction at a class mean and tie-breaking") {
  Eigen::MatrixXd x(4, 2);
  x << -1, 0, -1, 1, 1, 0, 1, 1;
  const auto m = fit_rlda(x, {1, 1, 2, 2}, 2, 0.5);
  CHECK(m.predict(m.class_means.row(1).transpose()).label == 2);
  CHECK(m.predict(m.class_means.row(0).transpose()).label == 1);
  // Midpoint is equidistant from both means.
  CHECK(m.predict(Eigen::Vector2d(0.0, 0.5)).label == 1);
  CHECK(argmax_label(Eigen::Vector3d(1, 3, 3)) == 2);
  const Eigen::VectorXd sc = m.scores(Eigen::Vector2d(0.3, 0.1));
  CHECK(argmax_label(sc) == argmax_label((sc.array() + 123.0).matrix()));
  CHECK(m.posteriors(Eigen::Vector2d(0.3, 0.1)).sum() == doctest::Approx(1.0));
}

TEST_CASE("affine feature transforms do not change refit predictions") {
  const auto s = gaussian_classes({{0, 0}, {1, 1}, {2, -1}}, Eigen::Matrix2d::Identity(), 30, 12);
  const auto t = gaussian_classes({{0, 0}, {1, 1}, {2, -1}}, Eigen::Matrix2d::Identity(), 10, 13);
  auto affine = [](const Eigen::MatrixXd& m) { return ((m.array() * -3.5) + 7.0).matrix().eval(); };
  const auto a = fit_rlda(s.x, s.y, 3, 0.2), b = fit_rlda(affine(s.x), s.y, 3, 0.2);
  const auto tx = affine(t.x);
  for (Eigen::Index i = 0; i < t.x.rows(); ++i)
    CHECK(a.predict(t.x.row(i).transpose()).label == b.predict(tx.row(i).transpose()).label);
}

TEST_CASE("fit errors") {
  Eigen::MatrixXd x(3, 2);
  x << 0, 0, 1, 1, 2, 2;
  CHECK_THROWS_AS(fit_rlda(x, {1, 1, 2}, 2, 0.1), DataError);
  x(0, 0) = std::nan("");
  CHECK_THROWS_AS(fit_rlda(x, {1, 2, 2}, 2, 0.1), DataError);
  Eigen::MatrixXd y(4, 2);
  y << 0, 0, 1, 1, 2, 2, 3, 3;
  CHECK_THROWS_AS(fit_rlda(y, {1, 1, 2, 2}, 2, 1.5), ConfigError);
}

TEST_CASE("lambda selection") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0, 1);
  // d > n_train leaves the unshrunk covariance singular.
  const int d = 20;
  Eigen::MatrixXd tx(10, d), vx(10, d);
  std::vector<int> ty, vy;
  for (int i = 0; i < 10; ++i) {
    const int label = 1 + i % 2;
    for (int j = 0; j < d; ++j) {
      tx(i, j) = n(rng) + (label == 2 ? 3.0 : 0.0);
      vx(i, j) = n(rng) + (label == 2 ? 3.0 : 0.0);
    }
    ty.push_back(label);
    vy.push_back(label);
  }
  CHECK_THROWS_AS(fit_rlda(tx, ty, 2, 0.0), NumericError);
  CHECK(select_lambda(tx, ty, vx, vy, 2, default_lambda_grid()) > 0.0);
  CHECK(select_lambda(tx, ty, vx, vy, 2, {0.25}) == 0.25);
  // Perfectly separable, every non-singular lambda scores 100 %: the smallest wins.
  CHECK(select_lambda(tx, ty, vx, vy, 2, {0.75, 0.05, 0.5}) == 0.05);
  CHECK(default_lambda_grid() == std::vector<double>{0, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1});
}

TEST_CASE("decoder round-trips through JSON") {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n(0, 1);
  std::vector<ClassTrial> tr, va;
  for (int i = 0; i < 40; ++i) {
    ClassTrial t = constant_trial(4, 0.0, 1 + i % 2);
    for (Eigen::Index k = 0; k < t.samples.size(); ++k) t.samples.data()[k] = n(rng) + (t.label == 2 ? 0.5 : 0.0);
    (i < 30 ? tr : va).push_back(t);
  }
  const auto dec = train_rlda(tr, va, 2, 900.0);
  nlohmann::json j = dec;
  const auto back = j.get<RldaDecoder>();
  for (const auto& t : va) {
    const auto p = dec.predict(t), q = back.predict(t);
    CHECK(p.label == q.label);
    CHECK((p.scores - q.scores).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + p.scores.cwiseAbs().maxCoeff()));
  }
}
