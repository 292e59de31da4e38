#include "ecog/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace ecog {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

json counts_json(const Eigen::MatrixXi& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string day_key(int d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "day%02d", d);
  return buf;
}

}  // namespace

Split chronological_split(const std::vector<bool>& bad) {
  const std::size_t n = bad.size();
  if (n < 5) throw DataError("chronological split needs at least 5 class-trials, got " + std::to_string(n));
  const auto b1 = static_cast<std::size_t>(std::floor(kTrainFraction * static_cast<double>(n)));
  const auto b2 = static_cast<std::size_t>(std::floor(kTrainValFraction * static_cast<double>(n)));
  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= b2)
      s.test.push_back(i);
    else if (!bad[i])
      (i < b1 ? s.train : s.validation).push_back(i);
  }
  if (s.train.empty() || s.validation.empty() || s.test.empty())
    throw DataError("empty partition after bad-trial removal (train " + std::to_string(s.train.size()) + ", validation " +
                    std::to_string(s.validation.size()) + ", test " + std::to_string(s.test.size()) + ")");
  return s;
}

Split chronological_split(const std::vector<ClassTrial>& trials) {
  std::vector<bool> bad;
  bad.reserve(trials.size());
  for (const auto& t : trials) bad.push_back(t.bad);
  return chronological_split(bad);
}

ConfusionReport confusion_from_counts(const Eigen::MatrixXi& counts) {
  if (counts.rows() != counts.cols() || counts.rows() < 1) throw DataError("confusion counts must be square");
  if ((counts.array() < 0).any()) throw DataError("negative confusion count");
  ConfusionReport r;
  r.n_classes = static_cast<int>(counts.rows());
  r.counts = counts;
  const double total = static_cast<double>(counts.sum());
  const int n = r.n_classes;
  r.per_class_da.resize(n);
  r.precision.resize(n);
  r.sensitivity.resize(n);
  for (int i = 0; i < n; ++i) {
    const double d = counts(i, i);
    const double row = counts.row(i).sum(), col = counts.col(i).sum();
    r.per_class_da(i) = total > 0 ? d / total : kNaN;
    r.precision(i) = row > 0 ? d / row : kNaN;
    r.sensitivity(i) = col > 0 ? d / col : kNaN;
  }
  r.da = total > 0 ? static_cast<double>(counts.trace()) / total : kNaN;
  return r;
}

ConfusionReport confusion_matrix(const std::vector<int>& actual, const std::vector<int>& predicted, int n_classes) {
  if (actual.size() != predicted.size()) throw DataError("actual and predicted label lists differ in length");
  if (n_classes < 1) throw ConfigError("n_classes must be >= 1");
  Eigen::MatrixXi d = Eigen::MatrixXi::Zero(n_classes, n_classes);
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const int a = actual[i], p = predicted[i];
    if (a < 1 || a > n_classes || p < 1 || p > n_classes)
      throw DataError("label outside 1.." + std::to_string(n_classes) + " at position " + std::to_string(i));
    ++d(a - 1, p - 1);
  }
  return confusion_from_counts(d);
}

std::string confusion_csv(const ConfusionReport& r) {
  std::ostringstream os;
  const int n = r.n_classes;
  os << "actual\\predicted";
  for (int c = 1; c <= n; ++c) os << ",class_" << c;
  os << ",precision\n";
  for (int i = 0; i < n; ++i) {
    os << "class_" << i + 1;
    for (int c = 0; c < n; ++c) os << ',' << r.counts(i, c);
    os << ',' << fmt(r.precision(i)) << '\n';
  }
  os << "class_DA";
  for (int c = 0; c < n; ++c) os << ',' << fmt(r.per_class_da(c));
  os << ",\n";
  os << "sensitivity";
  for (int c = 0; c < n; ++c) os << ',' << fmt(r.sensitivity(c));
  os << ",\n";
  os << "overall_DA," << fmt(r.da);
  for (int c = 0; c < n; ++c) os << ',';
  os << '\n';
  return os.str();
}

ConfusionReport parse_confusion_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("actual\\predicted", 0) != 0) throw DataError("not a confusion CSV");
  const int n = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 1;
  if (n < 1) throw DataError("confusion CSV has no class columns");
  Eigen::MatrixXi d(n, n);
  for (int r = 0; r < n; ++r) {
    if (!std::getline(is, line)) throw DataError("confusion CSV truncated");
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    for (int c = 0; c < n; ++c) {
      if (!std::getline(ls, cell, ',')) throw DataError("confusion CSV row too short");
      try {
        d(r, c) = std::stoi(cell);
      } catch (const std::exception&) {
        throw DataError("bad count '" + cell + "' in confusion CSV");
      }
    }
  }
  return confusion_from_counts(d);
}

namespace {

// Midranks of the pooled sample and the tie-group sizes.
std::vector<double> pooled_ranks(const std::vector<double>& all, std::vector<std::size_t>& tie_sizes) {
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return all[x] < all[y]; });
  std::vector<double> ranks(all.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && all[idx[j + 1]] == all[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = mid;
    tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }
  return ranks;
}

double u_statistic(const std::vector<double>& a, const std::vector<double>& b, std::vector<std::size_t>& ties) {
  if (a.empty() || b.empty()) throw DataError("rank-sum test needs two non-empty samples");
  std::vector<double> all = a;
  all.insert(all.end(), b.begin(), b.end());
  const auto ranks = pooled_ranks(all, ties);
  double ra = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ra += ranks[i];
  const double na = static_cast<double>(a.size());
  return ra - na * (na + 1) / 2;
}

}  // namespace

RankSum wilcoxon_ranksum_normal(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<std::size_t> ties;
  RankSum r;
  r.u = u_statistic(a, b, ties);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size()), n = na + nb;
  double tie_term = 0;
  for (auto t : ties) tie_term += std::pow(static_cast<double>(t), 3) - static_cast<double>(t);
  const double var = na * nb / 12.0 * ((n + 1) - tie_term / (n * (n - 1)));
  if (!(var > 0)) {
    r.p = 1.0;
    return r;
  }
  const double dev = std::max(std::abs(r.u - na * nb / 2) - 0.5, 0.0);
  r.p = std::min(1.0, std::erfc(dev / std::sqrt(var) / std::sqrt(2.0)));
  return r;
}

RankSum wilcoxon_ranksum_exact(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<std::size_t> ties;
  RankSum r;
  r.u = u_statistic(a, b, ties);
  r.exact = true;
  const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size()), n = na + nb;
  if (n > kExactRankSumLimit) throw ConfigError("exact rank-sum enumeration limited to 12 observations");
  if (std::any_of(ties.begin(), ties.end(), [](auto t) { return t > 1; }))
    throw ConfigError("exact rank-sum enumeration requires tie-free samples");
  // ways[k][u]: subsets of size k of {0..m-1} whose U-contribution is u.
  const int umax = na * nb;
  std::vector<std::vector<double>> ways(static_cast<std::size_t>(na + 1), std::vector<double>(static_cast<std::size_t>(umax + 1), 0));
  ways[0][0] = 1;
  for (int item = 0; item < n; ++item)
    for (int k = std::min(item + 1, na); k >= 1; --k)
      for (int u = umax; u >= 0; --u) {
        // Choosing the item with 0-based rank `item` as the k-th element adds item - (k - 1) smaller b's.
        const int add = item - (k - 1);
        if (add < 0 || add > nb || u - add < 0) continue;
        ways[static_cast<std::size_t>(k)][static_cast<std::size_t>(u)] += ways[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(u - add)];
      }
  const auto& dist = ways[static_cast<std::size_t>(na)];
  const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
  const int u = static_cast<int>(std::llround(r.u));
  double lo = 0, hi = 0;
  for (int v = 0; v <= umax; ++v) {
    if (v <= u) lo += dist[static_cast<std::size_t>(v)];
    if (v >= u) hi += dist[static_cast<std::size_t>(v)];
  }
  r.p = std::min(1.0, 2.0 * std::min(lo, hi) / total);
  return r;
}

RankSum wilcoxon_ranksum(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> all = a;
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  const bool tie_free = std::adjacent_find(all.begin(), all.end()) == all.end();
  if (!a.empty() && !b.empty() && tie_free && static_cast<int>(all.size()) <= kExactRankSumLimit)
    return wilcoxon_ranksum_exact(a, b);
  return wilcoxon_ranksum_normal(a, b);
}

std::string significance_stars(double p, const std::string& none) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return none;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DataError("correlation needs two equal-length samples of size >= 2");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0) || !(sbb > 0)) return kNaN;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

DayComparison per_day_comparison(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DataError("per-day comparison needs equal day counts");
  if (a.size() < 2) throw DataError("per-day comparison needs at least 2 days");
  DayComparison c;
  c.p = wilcoxon_ranksum(a, b).p;
  c.stars = significance_stars(c.p);
  c.pearson_r = pearson(a, b);
  return c;
}

double binomial_greater_p(long k, long n, double p0) {
  if (n < 0 || !(p0 >= 0 && p0 <= 1)) throw ConfigError("invalid binomial parameters");
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  if (p0 <= 0) return 0.0;
  if (p0 >= 1) return 1.0;
  const double lp = std::log(p0), lq = std::log1p(-p0);
  const double ln = std::lgamma(static_cast<double>(n) + 1);
  double sum = 0;
  for (long i = k; i <= n; ++i) {
    const double di = static_cast<double>(i);
    sum += std::exp(ln - std::lgamma(di + 1) - std::lgamma(static_cast<double>(n - i) + 1) + di * lp +
                    static_cast<double>(n - i) * lq);
  }
  return std::min(1.0, sum);
}

double chance_level(int n_classes) { return 1.0 / static_cast<double>(n_classes); }

json report_to_json(const ConfusionReport& r) {
  return {{"counts", counts_json(r.counts)},
          {"da", num(r.da)},
          {"per_class_da", vec(r.per_class_da)},
          {"precision", vec(r.precision)},
          {"sensitivity", vec(r.sensitivity)},
          {"n_test", r.total()}};
}

json aggregate_report(const std::vector<MethodDays>& methods, int n_classes) {
  if (methods.empty()) throw DataError("no method results to aggregate");
  const double chance = chance_level(n_classes);
  json out;
  out["n_classes"] = n_classes;
  out["chance_level"] = chance;
  json per_method = json::object();
  for (const auto& m : methods) {
    json jm;
    json days = json::object();
    Eigen::MatrixXi pooled = Eigen::MatrixXi::Zero(n_classes, n_classes);
    double sum_da = 0;
    int above = 0;
    for (const auto& [day, r] : m.days) {
      if (r.n_classes != n_classes) throw DataError(m.method + " " + day_key(day) + " has the wrong class count");
      pooled += r.counts;
      sum_da += r.da;
      const long k = r.counts.trace();
      const double p = binomial_greater_p(k, r.total(), chance);
      above += p < 0.01 ? 1 : 0;
      json jd = report_to_json(r);
      jd["binomial_p"] = num(p);
      days[day_key(day)] = std::move(jd);
    }
    jm["days"] = std::move(days);
    json errs = json::object();
    for (const auto& [day, e] : m.errors) errs[day_key(day)] = e;
    jm["errors"] = std::move(errs);
    jm["n_days"] = m.days.size();
    jm["mean_da"] = m.days.empty() ? json(nullptr) : num(sum_da / static_cast<double>(m.days.size()));
    jm["days_above_chance_p01"] = above;
    jm["pooled"] = m.days.empty() ? json(nullptr) : report_to_json(confusion_from_counts(pooled));
    per_method[m.method] = std::move(jm);
  }
  out["methods"] = std::move(per_method);

  json comparisons = json::array();
  for (std::size_t i = 0; i < methods.size(); ++i)
    for (std::size_t j = i + 1; j < methods.size(); ++j) {
      const auto& a = methods[i];
      const auto& b = methods[j];
      std::vector<int> common;
      for (const auto& [day, r] : a.days)
        if (b.days.count(day)) common.push_back(day);
      json jc{{"a", a.method}, {"b", b.method}, {"days", common}};
      if (common.size() < 2) {
        jc["note"] = "fewer than 2 common days";
        comparisons.push_back(std::move(jc));
        continue;
      }
      std::vector<double> da_a, da_b;
      for (int d : common) {
        da_a.push_back(a.days.at(d).da);
        da_b.push_back(b.days.at(d).da);
      }
      const auto c = per_day_comparison(da_a, da_b);
      jc["da"] = {{"p", num(c.p)}, {"stars", c.stars}, {"pearson_r", num(c.pearson_r)}};
      // Per-cell tests on the day-normalized matrices (D_rc / day total).
      json cells = json::array();
      for (int r = 0; r < n_classes; ++r) {
        json row = json::array();
        for (int cc = 0; cc < n_classes; ++cc) {
          std::vector<double> xa, xb;
          for (int d : common) {
            const auto& ra = a.days.at(d);
            const auto& rb = b.days.at(d);
            xa.push_back(static_cast<double>(ra.counts(r, cc)) / static_cast<double>(std::max(1L, ra.total())));
            xb.push_back(static_cast<double>(rb.counts(r, cc)) / static_cast<double>(std::max(1L, rb.total())));
          }
          const auto t = wilcoxon_ranksum(xa, xb);
          row.push_back({{"p", num(t.p)}, {"stars", significance_stars(t.p)}});
        }
        cells.push_back(std::move(row));
      }
      jc["cells"] = std::move(cells);
      comparisons.push_back(std::move(jc));
    }
  out["comparisons"] = std::move(comparisons);
  return out;
}

}  // namespace ecog
