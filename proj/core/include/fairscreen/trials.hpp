#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fairscreen/cohort.hpp"
#include "fairscreen/fairness.hpp"
#include "fairscreen/logit.hpp"

namespace fairscreen {

/// Score-level metrics of one evaluation stage (a split at a policy).
/// auc is NaN when the stage's labels are single-class.
struct StageMetrics {
  double auc = std::numeric_limits<double>::quiet_NaN();
  double overall_sensitivity = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 2> group_recalls{std::numeric_limits<double>::quiet_NaN(),
                                      std::numeric_limits<double>::quiet_NaN()};
};

enum class TrialStatus : std::uint8_t { ok, untestable_validation, untestable_test };
std::string_view to_string(TrialStatus s);
TrialStatus trial_status_from_string(std::string_view name);

/// One bootstrap trial of one (outcome, feature) analysis.
/// Calibration runs iff the validation audit flags bias (or the force flag
/// is set); test_audit_post exists iff calibration ran.
struct TrialOutcome {
  std::size_t trial_index = 0;
  Outcome outcome = Outcome::mortality;
  ProtectedFeature feature = ProtectedFeature::sex;
  std::uint64_t seed = 0;
  TrialStatus status = TrialStatus::ok;

  ThresholdPolicy naive_policy;
  std::optional<BiasAudit> val_audit_pre;
  bool calibrated = false;
  std::optional<ThresholdPolicy> policy;
  std::optional<BiasAudit> val_audit_post;
  std::optional<BiasAudit> test_audit_pre;
  std::optional<BiasAudit> test_audit_post;

  StageMetrics val_pre;
  StageMetrics val_post;
  StageMetrics test_pre;
  StageMetrics test_post;
};

struct CampaignConfig {
  std::vector<Outcome> outcomes{Outcome::mortality, Outcome::ventilator,
                                Outcome::inpatient};
  std::vector<ProtectedFeature> features{
      ProtectedFeature::sex, ProtectedFeature::race, ProtectedFeature::senior};
  std::size_t n_trials = 100;
  std::uint64_t seed = 20200101;
  double alpha = 0.05;
  /// Bonferroni divisor; defaults to |outcomes| * |features|.
  std::optional<std::size_t> bonferroni_m;
  double min_sensitivity = 0.85;
  ThresholdRule threshold_rule{};
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  /// Stratify each split on the outcome under study.
  bool stratify = true;
  /// Per-trial seed is derived, so train.seed is ignored here. When
  /// train.penalty is set, each audited feature gets its own penalized model
  /// (lambda/temperature from the config, feature from the cell).
  TrainConfig train;
  bool force_calibration = false;
  std::size_t workers = 1;

  void validate() const;
  std::size_t effective_m() const {
    return bonferroni_m ? *bonferroni_m : outcomes.size() * features.size();
  }
  double alpha_effective() const;
  std::uint64_t digest() const;
};

/// Table-shaped counts for one (outcome, feature) cell. Denominators chain:
/// biased_val out of testable trials, successfully_calibrated out of
/// biased_val, and the test columns out of successfully calibrated trials
/// that were evaluable on the test split.
struct CellReport {
  Outcome outcome = Outcome::mortality;
  ProtectedFeature feature = ProtectedFeature::sex;
  std::int64_t trials = 0;
  std::int64_t untestable_val = 0;
  std::int64_t untestable_test = 0;
  std::int64_t testable = 0;
  std::int64_t biased_val = 0;
  std::int64_t calibration_ran = 0;
  std::int64_t successfully_calibrated = 0;
  std::int64_t test_evaluable = 0;
  std::int64_t precal_biased_test = 0;
  std::int64_t postcal_biased_test = 0;
};

/// Campaign-level means. Validation aggregates run over trials where
/// calibration ran (the only set where pre and post both exist); test gap
/// aggregates additionally require the trial to be test-evaluable.
struct CampaignAggregates {
  std::int64_t calibrated_trials = 0;
  double mean_val_auc_pre = std::numeric_limits<double>::quiet_NaN();
  double mean_val_auc_post = std::numeric_limits<double>::quiet_NaN();
  double mean_val_sensitivity_pre = std::numeric_limits<double>::quiet_NaN();
  double mean_val_sensitivity_post = std::numeric_limits<double>::quiet_NaN();
  double mean_val_recall_gap_pre = std::numeric_limits<double>::quiet_NaN();
  double mean_val_recall_gap_post = std::numeric_limits<double>::quiet_NaN();
  double mean_test_recall_gap_pre = std::numeric_limits<double>::quiet_NaN();
  double mean_test_recall_gap_post = std::numeric_limits<double>::quiet_NaN();
  std::int64_t total_precal_biased_test = 0;
  std::int64_t total_postcal_biased_test = 0;
};

struct CampaignReport {
  std::uint64_t campaign_seed = 0;
  double alpha = 0.05;
  std::size_t bonferroni_m = 9;
  double alpha_effective = 0.05 / 9;
  std::size_t n_trials = 0;
  std::uint64_t config_digest = 0;
  std::uint64_t cohort_digest = 0;
  std::vector<std::string> outcome_names;
  std::vector<std::string> feature_names;
  std::vector<CellReport> cells;
  CampaignAggregates aggregates;
};

struct CampaignResult {
  CampaignReport report;
  std::vector<TrialOutcome> trials;  // (outcome, feature, trial) order
};

/// One full trial: resample(seed) -> split -> train naive -> naive threshold
/// on validation -> audit validation -> calibrate + re-audit when biased ->
/// audit test at the naive and (when calibrated) calibrated policies.
/// Sub-seeds are mix64(seed, 1..3) for resample, split and training.
TrialOutcome run_trial(const Cohort& cohort, Outcome outcome, ProtectedFeature feature,
                       std::uint64_t seed, const CampaignConfig& config);

/// n_trials trials per (outcome, feature) cell. The trial seed is
/// mix64(mix64(campaign_seed, fnv1a64(outcome name)), trial_index), shared
/// across features, so one trained model serves all of an outcome's audits
/// and adding cells never perturbs existing ones. Trials run in parallel up
/// to config.workers; results are identical at any worker count.
CampaignResult run_campaign(const Cohort& cohort, const CampaignConfig& config);

/// Tallies trial outcomes into Table-shaped cells plus campaign aggregates.
/// Checks the per-trial invariant that calibration left the AUC bit-identical.
CampaignReport summarize(const std::vector<TrialOutcome>& trials);

/// Campaign config file: the campaign settings plus the cohort source.
struct CampaignFileConfig {
  enum class Source : std::uint8_t { csv, synthetic };
  Source source = Source::synthetic;
  std::string csv_path;
  SynthConfig synth;
  CampaignConfig campaign;
};

CampaignFileConfig load_campaign_config(const std::string& path);
void save_campaign_config(const CampaignFileConfig& config, const std::string& path);
Cohort realize_cohort(const CampaignFileConfig& config);

}  // namespace fairscreen
