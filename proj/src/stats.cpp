#include "eic/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "eic/error.hpp"

namespace eic {

namespace {

constexpr double kEps = 1e-15;
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 10000;

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_fraction(double a, double b, double x) {
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

double gamma_series(double a, double x) {
  double ap = a, sum = 1.0 / a, del = sum;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kEps) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw NumericError("incomplete gamma series did not converge");
}

// Lentz evaluation of the continued fraction for Q(a, x).
double gamma_fraction(double a, double x) {
  double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
  }
  throw NumericError("incomplete gamma continued fraction did not converge");
}

void require_finite(std::span<const double> xs, const char* what) {
  for (double x : xs) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + " contains a non-finite value");
  }
}

double mean(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs, double m) {
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

double t_p_value(double t, double df, Alternative alt) {
  switch (alt) {
    case Alternative::greater: return 1.0 - student_t_cdf(t, df);
    case Alternative::less: return student_t_cdf(t, df);
    case Alternative::two_sided: return std::min(1.0, 2.0 * (1.0 - student_t_cdf(std::abs(t), df)));
  }
  return 1.0;
}

std::vector<double> differences(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw NumericError("paired samples differ in length");
  if (xs.size() < 2) throw NumericError("paired test needs at least two pairs");
  require_finite(xs, "sample");
  require_finite(ys, "sample");
  std::vector<double> d(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) d[i] = xs[i] - ys[i];
  return d;
}

}  // namespace

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw NumericError("incomplete beta needs positive parameters");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
  return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double regularized_gamma_p(double a, double x) {
  if (a <= 0.0) throw NumericError("incomplete gamma needs a positive shape");
  if (x <= 0.0) return 0.0;
  return x < a + 1.0 ? gamma_series(a, x) : 1.0 - gamma_fraction(a, x);
}

double regularized_gamma_q(double a, double x) {
  if (a <= 0.0) throw NumericError("incomplete gamma needs a positive shape");
  if (x <= 0.0) return 1.0;
  return x < a + 1.0 ? 1.0 - gamma_series(a, x) : gamma_fraction(a, x);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double student_t_cdf(double t, double df) {
  if (df <= 0.0) throw NumericError("t distribution needs positive degrees of freedom");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

double chi_squared_sf(double x, double df) { return regularized_gamma_q(df / 2.0, x / 2.0); }

TestResult paired_t_one_sided(std::span<const double> xs, std::span<const double> ys) {
  const auto d = differences(xs, ys);
  const double m = mean(d);
  const double var = sample_variance(d, m);
  const double df = static_cast<double>(d.size() - 1);
  if (var == 0.0) {
    if (m == 0.0) return {0.0, 0.5, df};
    throw NumericError("paired differences are constant and non-zero; t statistic is unbounded");
  }
  const double t = m / std::sqrt(var / static_cast<double>(d.size()));
  return {t, t_p_value(t, df, Alternative::greater), df};
}

TestResult wilcoxon_signed_rank_one_sided(std::span<const double> xs, std::span<const double> ys) {
  std::vector<double> d;
  for (double v : differences(xs, ys)) {
    if (v != 0.0) d.push_back(v);
  }
  if (d.empty()) throw NumericError("all paired differences are zero; Wilcoxon test is undefined");
  const std::size_t n = d.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(d[a]) < std::abs(d[b]); });
  // Doubled mid-ranks stay integral.
  std::vector<long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const long r2 = static_cast<long>(i + j + 2);  // 2 * mean of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0) w2 += rank2[i];
  }
  const double w = 0.5 * static_cast<double>(w2);

  if (n <= 25) {
    // Count sign assignments whose doubled positive-rank sum reaches w2.
    const long total = std::accumulate(rank2.begin(), rank2.end(), 0L);
    std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
    ways[0] = 1.0;
    long reach = 0;
    for (long r : rank2) {
      for (long s = reach; s >= 0; --s) {
        if (ways[static_cast<std::size_t>(s)] != 0.0) ways[static_cast<std::size_t>(s + r)] += ways[static_cast<std::size_t>(s)];
      }
      reach += r;
    }
    double upper = 0.0;
    for (long s = w2; s <= total; ++s) upper += ways[static_cast<std::size_t>(s)];
    return {w, std::ldexp(upper, -static_cast<int>(n)), std::nullopt};
  }

  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  const double z = (w - mu - 0.5) / std::sqrt(var);
  return {w, 1.0 - normal_cdf(z), std::nullopt};
}

TestResult one_sample_t(std::span<const double> xs, double mu0, Alternative alt) {
  if (xs.size() < 2) throw NumericError("one-sample t test needs at least two values");
  require_finite(xs, "sample");
  const double m = mean(xs);
  const double var = sample_variance(xs, m);
  const double df = static_cast<double>(xs.size() - 1);
  if (var == 0.0) {
    if (m == mu0) return {0.0, alt == Alternative::two_sided ? 1.0 : 0.5, df};
    throw NumericError("sample is constant and differs from mu0; t statistic is unbounded");
  }
  const double t = (m - mu0) / std::sqrt(var / static_cast<double>(xs.size()));
  return {t, t_p_value(t, df, alt), df};
}

TestResult welch_t(std::span<const double> xs, std::span<const double> ys, Alternative alt) {
  if (xs.size() < 2 || ys.size() < 2) throw NumericError("Welch t test needs at least two values per group");
  require_finite(xs, "sample");
  require_finite(ys, "sample");
  const double mx = mean(xs), my = mean(ys);
  const double vx = sample_variance(xs, mx) / static_cast<double>(xs.size());
  const double vy = sample_variance(ys, my) / static_cast<double>(ys.size());
  const double se2 = vx + vy;
  if (se2 == 0.0) {
    if (mx == my) return {0.0, alt == Alternative::two_sided ? 1.0 : 0.5, std::nullopt};
    throw NumericError("both groups are constant with different means; t statistic is unbounded");
  }
  const double t = (mx - my) / std::sqrt(se2);
  const double df = se2 * se2 / (vx * vx / static_cast<double>(xs.size() - 1) +
                                 vy * vy / static_cast<double>(ys.size() - 1));
  return {t, t_p_value(t, df, alt), df};
}

}  // namespace eic
