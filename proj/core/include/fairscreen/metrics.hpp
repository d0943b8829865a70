#pragma once

#include <cstdint>
#include <span>

namespace fairscreen {

struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t positives() const { return tp + fn; }
  std::int64_t negatives() const { return fp + tn; }
  std::int64_t total() const { return tp + fp + tn + fn; }
};

/// Pooled-variance two-proportion z-test result. `alpha_effective` is the
/// significance level the verdict was judged against; it is filled in by the
/// caller that applies one (see fairness::audit).
struct ProportionTest {
  std::int64_t k1 = 0;
  std::int64_t n1 = 0;
  std::int64_t k2 = 0;
  std::int64_t n2 = 0;
  double z = 0.0;
  double p_value = 1.0;  // two-sided
  double alpha_effective = 0.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
};

/// Standard normal CDF, accurate to ~1e-15 via erfc.
double normal_cdf(double z);

/// Inverse standard normal CDF for p in (0, 1). Rational approximation
/// polished with two Halley steps; normal_quantile(0.975) = 1.959964...
double normal_quantile(double p);

/// Area under the ROC curve as the Mann-Whitney statistic
/// P(score+ > score-) + 0.5 * P(tie), computed exactly with average ranks.
/// Throws std::invalid_argument unless both classes are present.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Counts at a decision threshold; prediction is positive iff score >= t.
ConfusionMatrix confusion(std::span<const double> scores,
                          std::span<const std::uint8_t> labels, double threshold);

/// tp / (tp + fn). Throws std::invalid_argument when there are no positives;
/// audits must catch that case upstream and report "untestable".
double sensitivity(const ConfusionMatrix& cm);

/// Two-sided two-proportion z-test with pooled variance. A degenerate pool
/// (all successes or all failures) yields z = 0, p = 1.
ProportionTest two_proportion_ztest(std::int64_t k1, std::int64_t n1,
                                    std::int64_t k2, std::int64_t n2);

/// alpha / m.
double bonferroni(double alpha, std::size_t m);

/// Wald interval for p1 - p2 with unpooled variance:
/// (p1 - p2) +/- z * sqrt(p1(1-p1)/n1 + p2(1-p2)/n2).
Interval recall_diff_ci(std::int64_t k1, std::int64_t n1, std::int64_t k2,
                        std::int64_t n2, double level);

}  // namespace fairscreen
