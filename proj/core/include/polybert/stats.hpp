#pragma once

#include <cstdint>
#include <vector>

namespace polybert::stats {

/// Regularized incomplete beta function I_x(a, b), continued-fraction
/// evaluation (modified Lentz).
double regularized_incomplete_beta(double x, double a, double b);

/// CDF of Student's t distribution with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::int64_t df = 0;
  double mean_a = 0.0;
  double mean_b = 0.0;
};

/// Two-sample pooled-variance Student's t-test (a minus b), two-tailed p via
/// the regularized incomplete beta. Degenerate zero-variance groups follow
/// the convention: equal means -> t=0, p=1; unequal -> p=0 with t = +-inf.
TTestResult students_t_test(const std::vector<double>& group_a,
                            const std::vector<double>& group_b);

/// Sample Pearson correlation. Throws when either input has zero variance or
/// fewer than two points.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

double mean(const std::vector<double>& v);
double sample_variance(const std::vector<double>& v);  // n-1 denominator

/// (all - each) / each. Throws when each <= 0.
double relative_improvement(double each_avg, double all_avg);

}  // namespace polybert::stats
