#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ecog/evaluation.hpp"

using namespace ecog;

namespace {

double mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
  double u = 0;
  for (double x : a)
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  return u;
}

// Two-sided p by enumerating every assignment of the pooled values to group a.
double enumerated_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pool = a;
  pool.insert(pool.end(), b.begin(), b.end());
  const std::size_t n = pool.size(), na = a.size();
  const double centre = static_cast<double>(a.size() * b.size()) / 2.0;
  const double observed = std::abs(mann_whitney_u(a, b) - centre);
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(na), true);
  long extreme = 0, total = 0;
  do {
    std::vector<double> xa, xb;
    for (std::size_t i = 0; i < n; ++i) (pick[i] ? xa : xb).push_back(pool[i]);
    if (std::abs(mann_whitney_u(xa, xb) - centre) >= observed - 1e-12) ++extreme;
    ++total;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

std::vector<double> sample(std::mt19937_64& rng, int n, double shift) {
  std::normal_distribution<double> nd(shift, 1.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = nd(rng);
  return v;
}

}  // namespace

TEST_CASE("chronological split boundaries") {
  auto s = chronological_split(std::vector<bool>(100, false));
  CHECK(s.train.size() == 64);
  CHECK(s.validation.size() == 16);
  CHECK(s.test.size() == 20);
  CHECK(s.train.front() == 0);
  CHECK(s.validation.front() == 64);
  CHECK(s.test.front() == 80);
  CHECK(s.test.back() == 99);

  s = chronological_split(std::vector<bool>(10, false));
  CHECK(s.train.size() == 6);
  CHECK(s.validation.size() == 2);
  CHECK(s.test.size() == 2);

  s = chronological_split(std::vector<bool>(261, false));
  CHECK(s.train.size() == 167);  // floor(0.64 * 261)
  CHECK(s.train.size() + s.validation.size() == 208);  // floor(0.80 * 261)
  CHECK(s.test.size() == 53);
}

TEST_CASE("bad trials leave train and validation only") {
  std::vector<bool> bad(100, false);
  bad[3] = bad[10] = bad[50] = true;
  auto s = chronological_split(bad);
  CHECK(s.train.size() == 61);
  CHECK(s.validation.size() == 16);
  CHECK(s.test.size() == 20);
  bad[70] = bad[90] = true;
  s = chronological_split(bad);
  CHECK(s.validation.size() == 15);
  CHECK(s.test.size() == 20);
  CHECK(std::find(s.test.begin(), s.test.end(), std::size_t{90}) != s.test.end());

  std::vector<bool> all_bad_val(10, false);
  all_bad_val[6] = all_bad_val[7] = true;
  CHECK_THROWS_AS(chronological_split(all_bad_val), DataError);
  CHECK_THROWS_AS(chronological_split(std::vector<bool>(4, false)), DataError);
}

TEST_CASE("partitions are disjoint and cover every trial") {
  std::vector<bool> bad(57, false);
  const auto s = chronological_split(bad);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.validation.begin(), s.validation.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(57);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);
}

TEST_CASE("hand-counted two-class confusion matrix") {
  const auto r = confusion_matrix({1, 1, 2, 2}, {1, 2, 2, 2}, 2);
  CHECK(r.counts(0, 0) == 1);
  CHECK(r.counts(0, 1) == 1);
  CHECK(r.counts(1, 0) == 0);
  CHECK(r.counts(1, 1) == 2);
  CHECK(r.da == 0.75);
  CHECK(r.precision(0) == 0.5);
  CHECK(r.sensitivity(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.per_class_da(0) == 0.25);
  CHECK(r.per_class_da(1) == 0.5);

  const auto perfect = confusion_matrix({1, 2, 3, 3}, {1, 2, 3, 3}, 3);
  CHECK(perfect.da == 1.0);
  CHECK((perfect.precision.array() == 1.0).all());
  CHECK((perfect.sensitivity.array() == 1.0).all());

  const auto empty_row = confusion_matrix({1, 1}, {1, 2}, 2);
  CHECK(std::isnan(empty_row.precision(1)));
  CHECK(empty_row.sensitivity(1) == 0.0);

  CHECK_THROWS_AS(confusion_matrix({1, 3}, {1, 1}, 2), DataError);
  CHECK_THROWS_AS(confusion_matrix({1, 2}, {1}, 2), DataError);
}

TEST_CASE("confusion identities on 1000 random pairs") {
  std::mt19937_64 rng(1);
  for (int n : {2, 3}) {
    std::uniform_int_distribution<int> lab(1, n);
    std::vector<int> a(1000), p(1000);
    for (int i = 0; i < 1000; ++i) {
      a[static_cast<std::size_t>(i)] = lab(rng);
      p[static_cast<std::size_t>(i)] = lab(rng);
    }
    const auto r = confusion_matrix(a, p, n);
    CHECK(r.counts.sum() == 1000);
    long hits = 0;
    for (int i = 0; i < 1000; ++i) hits += a[static_cast<std::size_t>(i)] == p[static_cast<std::size_t>(i)] ? 1 : 0;
    CHECK(r.da == static_cast<double>(hits) / 1000.0);
    CHECK(r.per_class_da.sum() == doctest::Approx(r.da).epsilon(1e-12));
  }
}

TEST_CASE("confusion CSV layout and round trip") {
  const auto r = confusion_matrix({1, 1, 2, 2}, {1, 2, 2, 2}, 2);
  const auto csv = confusion_csv(r);
  CHECK(csv.rfind("actual\\predicted,class_1,class_2,precision\n", 0) == 0);
  CHECK(csv.find("\nsensitivity,") != std::string::npos);
  CHECK(csv.find("\noverall_DA,0.75") != std::string::npos);
  const auto back = parse_confusion_csv(csv);
  CHECK(back.counts == r.counts);
  CHECK(back.da == r.da);
  const auto nan_csv = confusion_csv(confusion_matrix({1, 1}, {1, 2}, 2));
  CHECK(nan_csv.find("NA") != std::string::npos);
  CHECK_THROWS_AS(parse_confusion_csv("garbage"), DataError);
}

TEST_CASE("exact rank-sum p for [1,2,3] vs [4,5,6] is 0.10") {
  const auto r = wilcoxon_ranksum({1, 2, 3}, {4, 5, 6});
  CHECK(r.exact);
  CHECK(r.u == 0.0);
  CHECK(r.p == doctest::Approx(0.10).epsilon(1e-12));
  CHECK(enumerated_p({1, 2, 3}, {4, 5, 6}) == doctest::Approx(0.10).epsilon(1e-12));
}

TEST_CASE("exact path agrees with brute-force enumeration") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int na = 2 + trial % 5, nb = 12 - na - trial % 3;
    const auto a = sample(rng, na, 0.5 * (trial % 4)), b = sample(rng, nb, 0.0);
    const auto r = wilcoxon_ranksum_exact(a, b);
    CHECK(r.u == mann_whitney_u(a, b));
    CHECK(r.p == doctest::Approx(enumerated_p(a, b)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(wilcoxon_ranksum_exact({1, 2}, {2, 3}), ConfigError);
  CHECK_THROWS_AS(wilcoxon_ranksum_exact(std::vector<double>(7, 0.0), {1, 2, 3, 4, 5, 6}), ConfigError);
}

TEST_CASE("normal approximation is within 0.02 of exact on 6 + 6") {
  std::mt19937_64 rng(3);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = sample(rng, 6, 0.8 * (trial % 4)), b = sample(rng, 6, 0.0);
    worst = std::max(worst, std::abs(wilcoxon_ranksum_exact(a, b).p - wilcoxon_ranksum_normal(a, b).p));
  }
  INFO("worst difference " << worst);
  CHECK(worst <= 0.02);
}

TEST_CASE("normal approximation against a closed-form evaluation") {
  // Ties present: 15 vs 15 with shared values.
  std::vector<double> a, b;
  for (int i = 0; i < 15; ++i) {
    a.push_back(std::floor(i / 2.0));
    b.push_back(std::floor(i / 2.0) + 2);
  }
  const auto r = wilcoxon_ranksum_normal(a, b);
  // Oracle: tie-corrected variance and continuity-corrected z.
  std::vector<double> pool = a;
  pool.insert(pool.end(), b.begin(), b.end());
  std::sort(pool.begin(), pool.end());
  double tie_term = 0;
  for (std::size_t i = 0; i < pool.size();) {
    std::size_t j = i;
    while (j < pool.size() && pool[j] == pool[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double n1 = 15, n2 = 15, n = 30;
  const double var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)));
  const double u = mann_whitney_u(a, b);
  const double z = (std::abs(u - n1 * n2 / 2) - 0.5) / std::sqrt(var);
  CHECK(r.u == u);
  CHECK(r.p == doctest::Approx(std::erfc(z / std::sqrt(2.0))).epsilon(1e-12));
  CHECK_FALSE(r.exact);

  const auto same = wilcoxon_ranksum({0.5, 0.6, 0.6, 0.7}, {0.5, 0.6, 0.6, 0.7});
  CHECK(same.p == 1.0);
}

TEST_CASE("significance stars") {
  CHECK(significance_stars(0.0009) == "***");
  CHECK(significance_stars(0.009) == "**");
  CHECK(significance_stars(0.049) == "*");
  CHECK(significance_stars(0.05) == "n.s.");
  CHECK(significance_stars(0.01) == "*");
  CHECK(significance_stars(0.2, "") == "");
}

TEST_CASE("per-day comparisons") {
  std::vector<double> x{0.6, 0.7, 0.65, 0.8, 0.75, 0.55, 0.62, 0.71, 0.68, 0.77, 0.59, 0.66, 0.73, 0.64, 0.7};
  auto same = per_day_comparison(x, x);
  CHECK(same.pearson_r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(same.p == 1.0);
  std::vector<double> up = x;
  for (auto& v : up) v += 0.2;
  CHECK(per_day_comparison(up, x).p < 0.01);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / 15.0;
  std::vector<double> c = x, neg = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    c[i] = x[i] - mean;
    neg[i] = -c[i];
  }
  CHECK(per_day_comparison(c, neg).pearson_r == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
  CHECK_THROWS_AS(per_day_comparison({0.5}, {0.6}), DataError);
  CHECK_THROWS_AS(per_day_comparison({0.5, 0.6}, {0.6}), DataError);
}

TEST_CASE("binomial tail") {
  CHECK(binomial_greater_p(0, 10, 0.5) == doctest::Approx(1.0));
  CHECK(binomial_greater_p(10, 10, 0.5) == doctest::Approx(std::pow(0.5, 10)).epsilon(1e-12));
  // P(X >= 7), n = 10: (120 + 45 + 10 + 1) / 1024.
  CHECK(binomial_greater_p(7, 10, 0.5) == doctest::Approx(176.0 / 1024.0).epsilon(1e-12));
  CHECK(binomial_greater_p(2, 3, 1.0 / 3.0) == doctest::Approx(7.0 / 27.0).epsilon(1e-12));
  CHECK(chance_level(2) == 0.5);
  CHECK(chance_level(3) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("aggregate report") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> cnt(0, 20);
  MethodDays a{"rlda", {}, {}}, b{"convnet", {}, {}};
  Eigen::MatrixXi sum = Eigen::MatrixXi::Zero(2, 2);
  for (int d = 1; d <= 5; ++d) {
    Eigen::MatrixXi m(2, 2);
    m << cnt(rng) + 20, cnt(rng), cnt(rng), cnt(rng) + 20;
    a.days[d] = confusion_from_counts(m);
    sum += m;
  }
  b = a;
  b.method = "convnet";
  b.errors[6] = "numeric failure";

  const auto j = aggregate_report({a, b}, 2);
  CHECK(j.at("chance_level").get<double>() == 0.5);
  const auto& pooled = j.at("methods").at("rlda").at("pooled").at("counts");
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) CHECK(pooled.at(r).at(c).get<int>() == sum(r, c));
  CHECK(j.at("methods").at("convnet").at("errors").at("day06").get<std::string>() == "numeric failure");
  CHECK(j.at("methods").at("rlda").at("n_days").get<int>() == 5);
  const auto& cmp = j.at("comparisons").at(0);
  CHECK(cmp.at("da").at("p").get<double>() == 1.0);
  for (const auto& row : cmp.at("cells"))
    for (const auto& cell : row) {
      CHECK(cell.at("p").get<double>() == 1.0);
      CHECK(cell.at("stars").get<std::string>() == "n.s.");
    }

  MethodDays single{"fbcsp", {{3, a.days.at(3)}}, {}};
  const auto one = aggregate_report({single}, 2);
  CHECK(one.at("methods").at("fbcsp").at("pooled").at("counts") ==
        one.at("methods").at("fbcsp").at("days").at("day03").at("counts"));
  CHECK(one.at("methods").at("fbcsp").at("pooled").at("da") == one.at("methods").at("fbcsp").at("days").at("day03").at("da"));
  CHECK_THROWS_AS(aggregate_report({}, 2), DataError);
}
