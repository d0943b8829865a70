#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "fairscreen/cohort.hpp"
#include "fairscreen/metrics.hpp"

namespace fairscreen {

/// How the naive (single global) threshold is picked.
struct ThresholdRule {
  enum class Kind : std::uint8_t { youden, fixed, target_sensitivity };
  Kind kind = Kind::youden;
  double value = 0.5;  // tau for fixed, target s for target_sensitivity

  /// Accepts "youden", "fixed:<tau>" or "sens:<s>".
  static ThresholdRule parse(std::string_view text);
  std::string to_string() const;
};

/// One global threshold, or one threshold per subgroup of the partition the
/// policy was calibrated against. min_sensitivity is the floor in force when
/// the policy came out of calibration (0 for naive policies).
struct ThresholdPolicy {
  enum class Kind : std::uint8_t { global, per_group };
  Kind kind = Kind::global;
  double global_threshold = 0.5;
  ProtectedFeature feature = ProtectedFeature::sex;  // per_group only
  std::array<std::string, 2> group_names{};
  std::array<double, 2> group_thresholds{};
  double min_sensitivity = 0.0;

  double threshold_for(std::size_t group_index) const {
    return kind == Kind::global ? global_threshold : group_thresholds[group_index];
  }
};

/// Equal-opportunity audit of one protected feature at one policy.
struct BiasAudit {
  ProtectedFeature feature = ProtectedFeature::sex;
  std::array<std::string, 2> group_names{};
  std::array<std::int64_t, 2> group_positives{};
  std::array<std::int64_t, 2> group_true_positives{};
  std::array<double, 2> group_recalls{};
  ProportionTest test;
  Interval ci;  // 95% CI of recall difference, group0 - group1
  bool biased = false;
  double alpha_effective = 0.05;

  double recall_gap() const {
    return group_recalls[0] > group_recalls[1]
               ? group_recalls[0] - group_recalls[1]
               : group_recalls[1] - group_recalls[0];
  }
};

/// Picks a global threshold. youden maximizes TPR - FPR over the observed
/// score values (smallest maximizer on ties); fixed passes tau through;
/// target_sensitivity picks the largest tau whose overall sensitivity is
/// still >= s.
ThresholdPolicy choose_naive_threshold(std::span<const double> scores,
                                       std::span<const std::uint8_t> labels,
                                       const ThresholdRule& rule);

/// Per-group recalls at the policy, the two-proportion z-test on the true
/// positive counts, the 95% CI of the recall difference, and the verdict
/// biased <=> p < alpha_effective. Throws UntestableError when a group has
/// no positives.
BiasAudit audit(std::span<const double> scores, std::span<const std::uint8_t> labels,
                const SubgroupPartition& partition, const ThresholdPolicy& policy,
                double alpha_effective);

/// Equal-opportunity calibration. The target is
///   t* = max(min_sensitivity, highest per-group recall under `incoming`),
/// and each group's threshold is the largest observed positive score at
/// which that group's sensitivity reaches t*. Every calibrated group
/// sensitivity is >= t* by construction. Throws UntestableError when a group
/// has no positives.
ThresholdPolicy calibrate_equal_opportunity(std::span<const double> scores,
                                            std::span<const std::uint8_t> labels,
                                            const SubgroupPartition& partition,
                                            double min_sensitivity,
                                            const ThresholdPolicy& incoming);

/// prediction_i = score_i >= threshold(group of i).
std::vector<std::uint8_t> apply_policy(std::span<const double> scores,
                                       const SubgroupPartition& partition,
                                       const ThresholdPolicy& policy);

/// Per-group confusion counts at the policy.
std::array<ConfusionMatrix, 2> group_confusions(std::span<const double> scores,
                                                std::span<const std::uint8_t> labels,
                                                const SubgroupPartition& partition,
                                                const ThresholdPolicy& policy);

void save_policy(const ThresholdPolicy& policy, const std::string& path);
ThresholdPolicy load_policy(const std::string& path);

}  // namespace fairscreen
