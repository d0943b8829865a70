#include "fairscreen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairscreen {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

// Acklam's rational approximation to the inverse normal CDF, good to ~1e-9
// before refinement.
double normal_quantile_approx(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
  }
  double x = normal_quantile_approx(p);
  // Two Halley iterations against the erfc-based CDF give full precision.
  // Beyond |x| ~ 38 the correction factor exp(x^2/2) overflows and the
  // rational approximation is already as good as the CDF can resolve.
  for (int i = 0; i < 2 && std::abs(x) < 38.0; ++i) {
    const double err = normal_cdf(x) - p;
    const double u = err * std::sqrt(2.0 * 3.14159265358979323846) *
                     std::exp(x * x / 2.0);
    x -= u / (1.0 + x * u / 2.0);
  }
  return x;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auc: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::int64_t positives = 0;
  for (auto y : labels) positives += y ? 1 : 0;
  const std::int64_t negatives = static_cast<std::int64_t>(n) - positives;
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("auc: both classes must be present");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of average ranks over positives; ties share the mean rank of their
  // block, which keeps the numerator exact in doubles (halves only).
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) positive_rank_sum += avg_rank;
    }
    i = j;
  }

  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) /
         (p * static_cast<double>(negatives));
}

ConfusionMatrix confusion(std::span<const double> scores,
                          std::span<const std::uint8_t> labels, double threshold) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("confusion: scores and labels differ in length");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i]) {
      (predicted ? cm.tp : cm.fn) += 1;
    } else {
      (predicted ? cm.fp : cm.tn) += 1;
    }
  }
  return cm;
}

double sensitivity(const ConfusionMatrix& cm) {
  const std::int64_t positives = cm.positives();
  if (positives <= 0) {
    throw std::invalid_argument("sensitivity: no positive labels");
  }
  return static_cast<double>(cm.tp) / static_cast<double>(positives);
}

ProportionTest two_proportion_ztest(std::int64_t k1, std::int64_t n1,
                                    std::int64_t k2, std::int64_t n2) {
  if (n1 <= 0 || n2 <= 0) {
    throw std::invalid_argument("two_proportion_ztest: group sizes must be positive");
  }
  if (k1 < 0 || k1 > n1 || k2 < 0 || k2 > n2) {
    throw std::invalid_argument("two_proportion_ztest: k out of [0, n]");
  }
  ProportionTest t;
  t.k1 = k1;
  t.n1 = n1;
  t.k2 = k2;
  t.n2 = n2;
  const double pooled = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
  if (pooled <= 0.0 || pooled >= 1.0) {
    t.z = 0.0;
    t.p_value = 1.0;
    return t;
  }
  const double p1 = static_cast<double>(k1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(k2) / static_cast<double>(n2);
  const double se = std::sqrt(pooled * (1.0 - pooled) *
                              (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  t.z = (p1 - p2) / se;
  t.p_value = std::erfc(std::abs(t.z) / std::sqrt(2.0));  // = 2 * Phi(-|z|)
  return t;
}

double bonferroni(double alpha, std::size_t m) {
  if (m == 0) throw std::invalid_argument("bonferroni: m must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("bonferroni: alpha must lie in (0, 1)");
  }
  return alpha / static_cast<double>(m);
}

Interval recall_diff_ci(std::int64_t k1, std::int64_t n1, std::int64_t k2,
                        std::int64_t n2, double level) {
  if (n1 <= 0 || n2 <= 0) {
    throw std::invalid_argument("recall_diff_ci: group sizes must be positive");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("recall_diff_ci: level must lie in (0, 1)");
  }
  const double p1 = static_cast<double>(k1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(k2) / static_cast<double>(n2);
  const double z = normal_quantile(0.5 + level / 2.0);
  const double se = std::sqrt(p1 * (1.0 - p1) / static_cast<double>(n1) +
                              p2 * (1.0 - p2) / static_cast<double>(n2));
  Interval ci;
  ci.level = level;
  ci.lo = (p1 - p2) - z * se;
  ci.hi = (p1 - p2) + z * se;
  return ci;
}

}  // namespace fairscreen
