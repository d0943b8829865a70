#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairscreen/cohort.hpp"
#include "fairscreen/fairness.hpp"
#include "fairscreen/trials.hpp"

namespace fairscreen {

enum class RenderFormat : std::uint8_t { plain, csv, json };
RenderFormat render_format_from_string(std::string_view name);
std::string_view to_string(RenderFormat format);

/// Journal-table count cell: "k/N (pct)" with the percentage truncated to an
/// integer; an empty denominator renders as "0/0 (-)".
std::string format_count_cell(std::int64_t k, std::int64_t n);

/// The campaign grid (one row per outcome x feature, four chained count
/// columns) in the requested format. Renderers only format the report; every
/// number is re-derivable from the trial log.
std::string render_campaign_table(const CampaignReport& report, RenderFormat format);

/// The campaign aggregate line(s): mean AUC, sensitivity and recall gap
/// pre/post calibration plus the summed test-bias counts.
std::string render_campaign_aggregates(const CampaignReport& report, RenderFormat format);

std::string campaign_report_to_json(const CampaignReport& report);
CampaignReport campaign_report_from_json(const std::string& text);
void write_campaign_report(const CampaignReport& report, const std::string& path);
CampaignReport read_campaign_report(const std::string& path);

/// Per-trial outcome log, one JSON object per line.
std::string trial_to_json_line(const TrialOutcome& trial);
TrialOutcome trial_from_json_line(const std::string& line);
void write_trial_log(const std::vector<TrialOutcome>& trials, const std::string& path);
std::vector<TrialOutcome> read_trial_log(const std::string& path);

// ---------------------------------------------------------------------------
// Single-analysis audit (the audit/calibrate subcommands)
// ---------------------------------------------------------------------------

struct AuditOptions {
  std::uint64_t seed = 20200101;
  double alpha = 0.05;
  std::size_t bonferroni_m = 1;
  double min_sensitivity = 0.85;
  ThresholdRule threshold_rule{};
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  bool stratify = true;
  TrainConfig train;
  bool force_calibration = false;
};

struct GroupStageStats {
  std::string name;
  double auc = 0.0;  // NaN when the group is single-class
  double recall = 0.0;
  std::int64_t positives = 0;
};

struct AuditStageReport {
  double overall_auc = 0.0;
  double overall_recall = 0.0;
  std::array<GroupStageStats, 2> groups;
  BiasAudit audit;
};

/// One train-and-audit pass over a cohort (no bootstrap): split, train a
/// model, pick the naive threshold on validation, audit, and calibrate plus
/// re-audit when the audit flags bias (or force_calibration is set).
struct AuditReport {
  Outcome outcome = Outcome::mortality;
  ProtectedFeature feature = ProtectedFeature::sex;
  std::uint64_t seed = 0;
  double alpha_effective = 0.05;
  std::uint64_t cohort_digest = 0;
  TrialStatus status = TrialStatus::ok;
  std::string status_note;
  ThresholdPolicy naive_policy;
  AuditStageReport pre;
  bool calibrated = false;
  std::optional<ThresholdPolicy> policy;
  std::optional<AuditStageReport> post;
};

AuditReport run_audit_analysis(const Cohort& cohort, Outcome outcome,
                               ProtectedFeature feature, const AuditOptions& options);

/// Calibration-statistics block: AUC, recall, p-value and recall-difference
/// CI per group, pre- and (when calibrated) post-calibration.
std::string render_audit_report(const AuditReport& report, RenderFormat format);

// ---------------------------------------------------------------------------
// Decision distributions (score histograms + confusion proportions)
// ---------------------------------------------------------------------------

struct GroupDistribution {
  std::string name;
  std::size_t size = 0;
  std::vector<std::int64_t> bin_counts;
  double naive_threshold = 0.5;
  double calibrated_threshold = 0.5;
  ConfusionMatrix pre_confusion;
  ConfusionMatrix post_confusion;
};

struct DecisionDistribution {
  std::size_t bins = 50;
  std::vector<GroupDistribution> groups;  // empty groups are omitted
  std::vector<std::string> notes;
};

/// Per-group score histograms over [0, 1] with both thresholds annotated,
/// plus per-group confusion counts under the naive and calibrated policies.
/// Groups with no records are omitted with a note.
DecisionDistribution decision_distribution(std::span<const double> scores,
                                           std::span<const std::uint8_t> labels,
                                           const SubgroupPartition& partition,
                                           const ThresholdPolicy& naive_policy,
                                           const ThresholdPolicy& calibrated_policy,
                                           std::size_t bins = 50);

std::string decision_distribution_to_json(const DecisionDistribution& dist);

/// Static SVG rendering: one histogram panel per group, naive threshold
/// dashed, calibrated threshold solid.
std::string decision_distribution_svg(const DecisionDistribution& dist);

}  // namespace fairscreen
