#pragma once

#include <optional>
#include <span>

namespace eic {

// Special functions. Continued fractions converge to about 1e-12 relative accuracy.
double log_beta(double a, double b);
/// I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);
/// P(a, x) and Q(a, x) = 1 - P(a, x).
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

double normal_cdf(double z);
double student_t_cdf(double t, double df);
double chi_squared_sf(double x, double df);

enum class Alternative { greater, less, two_sided };

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::optional<double> df;
};

/// H1: mean(xs - ys) > 0. Throws NumericError when n < 2 or the differences are constant
/// and non-zero (the statistic is unbounded).
TestResult paired_t_one_sided(std::span<const double> xs, std::span<const double> ys);

/// H1: differences xs - ys tend to be positive. Zero differences are dropped and ties get
/// mid-ranks. Exact null distribution for n <= 25, normal approximation with tie and
/// continuity correction beyond. Throws NumericError when every difference is zero.
TestResult wilcoxon_signed_rank_one_sided(std::span<const double> xs, std::span<const double> ys);

/// One-sample t test of mean(xs) against mu0.
TestResult one_sample_t(std::span<const double> xs, double mu0, Alternative alt = Alternative::greater);

/// Welch's unequal-variance two-sample t test.
TestResult welch_t(std::span<const double> xs, std::span<const double> ys,
                   Alternative alt = Alternative::two_sided);

}  // namespace eic
