#include "fairscreen/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fairscreen/digest.hpp"
#include "fairscreen/error.hpp"
#include "fairscreen/metrics.hpp"
#include "fairscreen/rng.hpp"

namespace fairscreen {

using json = nlohmann::json;

RenderFormat render_format_from_string(std::string_view name) {
  if (name == "plain") return RenderFormat::plain;
  if (name == "csv") return RenderFormat::csv;
  if (name == "json") return RenderFormat::json;
  throw ConfigError("unknown format '" + std::string(name) +
                    "' (expected plain, csv or json)");
}

std::string_view to_string(RenderFormat format) {
  switch (format) {
    case RenderFormat::plain: return "plain";
    case RenderFormat::csv: return "csv";
    case RenderFormat::json: return "json";
  }
  return "?";
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fixed(double v, int precision) {
  if (!std::isfinite(v)) return "-";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::fixed, precision);
  return std::string(buf, res.ptr);
}

std::string shortest(double v) {
  if (!std::isfinite(v)) return "-";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Journal convention: values below 0.001 print as "<0.001".
std::string p_value_text(double p) {
  if (!std::isfinite(p)) return "-";
  if (p < 0.001) return "<0.001";
  return fixed(p, 3);
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string join_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) {
      widths[c] = std::max(widths[c], row[c].size());
    }
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      line += c + 1 == row.size() ? row[c] : pad(row[c], widths[c] + 2);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace

std::string format_count_cell(std::int64_t k, std::int64_t n) {
  if (n <= 0) return "0/0 (-)";
  const std::int64_t pct = (100 * k) / n;
  return std::to_string(k) + "/" + std::to_string(n) + " (" + std::to_string(pct) + ")";
}

// ---------------------------------------------------------------------------
// Campaign table + aggregates
// ---------------------------------------------------------------------------

std::string render_campaign_table(const CampaignReport& report, RenderFormat format) {
  if (format == RenderFormat::json) return campaign_report_to_json(report);

  if (format == RenderFormat::csv) {
    std::string out =
        "outcome,feature,trials,untestable_val,untestable_test,testable,"
        "biased_val,calibration_ran,successfully_calibrated,test_evaluable,"
        "precal_biased_test,postcal_biased_test\n";
    for (const auto& cell : report.cells) {
      std::ostringstream row;
      row << to_string(cell.outcome) << ',' << to_string(cell.feature) << ','
          << cell.trials << ',' << cell.untestable_val << ',' << cell.untestable_test
          << ',' << cell.testable << ',' << cell.biased_val << ','
          << cell.calibration_ran << ',' << cell.successfully_calibrated << ','
          << cell.test_evaluable << ',' << cell.precal_biased_test << ','
          << cell.postcal_biased_test << '\n';
      out += row.str();
    }
    return out;
  }

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"outcome", "feature", "biased(val)", "calibrated",
                  "biased-test(pre)", "biased-test(post)", "untestable(v/t)"});
  for (const auto& cell : report.cells) {
    rows.push_back({
        std::string(to_string(cell.outcome)),
        std::string(to_string(cell.feature)),
        format_count_cell(cell.biased_val, cell.testable),
        format_count_cell(cell.successfully_calibrated, cell.biased_val),
        format_count_cell(cell.precal_biased_test, cell.test_evaluable),
        format_count_cell(cell.postcal_biased_test, cell.test_evaluable),
        std::to_string(cell.untestable_val) + "/" + std::to_string(cell.untestable_test),
    });
  }
  std::string out = "bootstrap bias-correction campaign (alpha " +
                    fixed(report.alpha, 3) + ", bonferroni m=" +
                    std::to_string(report.bonferroni_m) + ", alpha_effective " +
                    fixed(report.alpha_effective, 6) + ")\n";
  out += "seed " + std::to_string(report.campaign_seed) + " | config " +
         Digest::hex(report.config_digest) + " | cohort " +
         Digest::hex(report.cohort_digest) + "\n";
  out += join_table(rows);
  return out;
}

std::string render_campaign_aggregates(const CampaignReport& report,
                                       RenderFormat format) {
  const auto& agg = report.aggregates;
  if (format == RenderFormat::json) {
    json j;
    j["calibrated_trials"] = agg.calibrated_trials;
    j["mean_val_auc_pre"] = agg.mean_val_auc_pre;
    j["mean_val_auc_post"] = agg.mean_val_auc_post;
    j["mean_val_sensitivity_pre"] = agg.mean_val_sensitivity_pre;
    j["mean_val_sensitivity_post"] = agg.mean_val_sensitivity_post;
    j["mean_val_recall_gap_pre"] = agg.mean_val_recall_gap_pre;
    j["mean_val_recall_gap_post"] = agg.mean_val_recall_gap_post;
    j["mean_test_recall_gap_pre"] = agg.mean_test_recall_gap_pre;
    j["mean_test_recall_gap_post"] = agg.mean_test_recall_gap_post;
    j["total_precal_biased_test"] = agg.total_precal_biased_test;
    j["total_postcal_biased_test"] = agg.total_postcal_biased_test;
    return j.dump(2) + "\n";
  }
  if (format == RenderFormat::csv) {
    std::string out = "metric,pre,post\n";
    out += "mean_val_auc," + shortest(agg.mean_val_auc_pre) + "," +
           shortest(agg.mean_val_auc_post) + "\n";
    out += "mean_val_sensitivity," + shortest(agg.mean_val_sensitivity_pre) + "," +
           shortest(agg.mean_val_sensitivity_post) + "\n";
    out += "mean_val_recall_gap," + shortest(agg.mean_val_recall_gap_pre) + "," +
           shortest(agg.mean_val_recall_gap_post) + "\n";
    out += "mean_test_recall_gap," + shortest(agg.mean_test_recall_gap_pre) + "," +
           shortest(agg.mean_test_recall_gap_post) + "\n";
    out += "total_biased_test," + std::to_string(agg.total_precal_biased_test) + "," +
           std::to_string(agg.total_postcal_biased_test) + "\n";
    out += "calibrated_trials," + std::to_string(agg.calibrated_trials) + ",\n";
    return out;
  }
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"aggregate", "pre", "post"});
  rows.push_back({"mean validation auc", fixed(agg.mean_val_auc_pre, 4),
                  fixed(agg.mean_val_auc_post, 4)});
  rows.push_back({"mean validation sensitivity", fixed(agg.mean_val_sensitivity_pre, 4),
                  fixed(agg.mean_val_sensitivity_post, 4)});
  rows.push_back({"mean validation recall gap", fixed(agg.mean_val_recall_gap_pre, 4),
                  fixed(agg.mean_val_recall_gap_post, 4)});
  rows.push_back({"mean test recall gap", fixed(agg.mean_test_recall_gap_pre, 4),
                  fixed(agg.mean_test_recall_gap_post, 4)});
  rows.push_back({"biased test trials (total)",
                  std::to_string(agg.total_precal_biased_test),
                  std::to_string(agg.total_postcal_biased_test)});
  return "aggregates over " + std::to_string(agg.calibrated_trials) +
         " calibrated trials\n" + join_table(rows);
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace {

double num_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json audit_to_json(const BiasAudit& audit) {
  json groups = json::array();
  for (std::size_t g = 0; g < 2; ++g) {
    groups.push_back(json{{"name", audit.group_names[g]},
                          {"positives", audit.group_positives[g]},
                          {"true_positives", audit.group_true_positives[g]},
                          {"recall", audit.group_recalls[g]}});
  }
  return json{{"feature", std::string(to_string(audit.feature))},
              {"groups", groups},
              {"z", audit.test.z},
              {"p_value", audit.test.p_value},
              {"ci", json{{"lo", audit.ci.lo}, {"hi", audit.ci.hi}, {"level", audit.ci.level}}},
              {"biased", audit.biased},
              {"alpha_effective", audit.alpha_effective}};
}

BiasAudit audit_from_json(const json& j) {
  BiasAudit audit;
  audit.feature = protected_feature_from_string(j.at("feature").get<std::string>());
  const auto& groups = j.at("groups");
  for (std::size_t g = 0; g < 2; ++g) {
    audit.group_names[g] = groups.at(g).at("name").get<std::string>();
    audit.group_positives[g] = groups.at(g).at("positives").get<std::int64_t>();
    audit.group_true_positives[g] = groups.at(g).at("true_positives").get<std::int64_t>();
    audit.group_recalls[g] = groups.at(g).at("recall").get<double>();
  }
  audit.test = two_proportion_ztest(audit.group_true_positives[0], audit.group_positives[0],
                                    audit.group_true_positives[1], audit.group_positives[1]);
  audit.test.z = j.at("z").get<double>();
  audit.test.p_value = j.at("p_value").get<double>();
  audit.ci.lo = j.at("ci").at("lo").get<double>();
  audit.ci.hi = j.at("ci").at("hi").get<double>();
  audit.ci.level = j.at("ci").at("level").get<double>();
  audit.biased = j.at("biased").get<bool>();
  audit.alpha_effective = j.at("alpha_effective").get<double>();
  audit.test.alpha_effective = audit.alpha_effective;
  return audit;
}

json policy_to_json(const ThresholdPolicy& policy) {
  json j;
  j["min_sensitivity"] = policy.min_sensitivity;
  if (policy.kind == ThresholdPolicy::Kind::global) {
    j["kind"] = "global";
    j["threshold"] = policy.global_threshold;
  } else {
    j["kind"] = "per_group";
    j["feature"] = std::string(to_string(policy.feature));
    json thresholds;
    for (std::size_t g = 0; g < 2; ++g) {
      thresholds[policy.group_names[g]] = policy.group_thresholds[g];
    }
    j["thresholds"] = thresholds;
  }
  return j;
}

ThresholdPolicy policy_from_json(const json& j) {
  ThresholdPolicy policy;
  policy.min_sensitivity = j.at("min_sensitivity").get<double>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "global") {
    policy.kind = ThresholdPolicy::Kind::global;
    policy.global_threshold = j.at("threshold").get<double>();
  } else {
    policy.kind = ThresholdPolicy::Kind::per_group;
    policy.feature = protected_feature_from_string(j.at("feature").get<std::string>());
    policy.group_names = group_names_for(policy.feature);
    for (std::size_t g = 0; g < 2; ++g) {
      policy.group_thresholds[g] =
          j.at("thresholds").at(policy.group_names[g]).get<double>();
    }
  }
  return policy;
}

json metrics_to_json(const StageMetrics& m) {
  return json{{"auc", m.auc},
              {"sensitivity", m.overall_sensitivity},
              {"recalls", json::array({m.group_recalls[0], m.group_recalls[1]})}};
}

StageMetrics metrics_from_json(const json& j) {
  StageMetrics m;
  m.auc = num_or_nan(j.at("auc"));
  m.overall_sensitivity = num_or_nan(j.at("sensitivity"));
  m.group_recalls[0] = num_or_nan(j.at("recalls").at(0));
  m.group_recalls[1] = num_or_nan(j.at("recalls").at(1));
  return m;
}

json cell_to_json(const CellReport& cell) {
  return json{{"outcome", std::string(to_string(cell.outcome))},
              {"feature", std::string(to_string(cell.feature))},
              {"trials", cell.trials},
              {"untestable_val", cell.untestable_val},
              {"untestable_test", cell.untestable_test},
              {"testable", cell.testable},
              {"biased_val", cell.biased_val},
              {"calibration_ran", cell.calibration_ran},
              {"successfully_calibrated", cell.successfully_calibrated},
              {"test_evaluable", cell.test_evaluable},
              {"precal_biased_test", cell.precal_biased_test},
              {"postcal_biased_test", cell.postcal_biased_test}};
}

CellReport cell_from_json(const json& j) {
  CellReport cell;
  cell.outcome = outcome_from_string(j.at("outcome").get<std::string>());
  cell.feature = protected_feature_from_string(j.at("feature").get<std::string>());
  cell.trials = j.at("trials").get<std::int64_t>();
  cell.untestable_val = j.at("untestable_val").get<std::int64_t>();
  cell.untestable_test = j.at("untestable_test").get<std::int64_t>();
  cell.testable = j.at("testable").get<std::int64_t>();
  cell.biased_val = j.at("biased_val").get<std::int64_t>();
  cell.calibration_ran = j.at("calibration_ran").get<std::int64_t>();
  cell.successfully_calibrated = j.at("successfully_calibrated").get<std::int64_t>();
  cell.test_evaluable = j.at("test_evaluable").get<std::int64_t>();
  cell.precal_biased_test = j.at("precal_biased_test").get<std::int64_t>();
  cell.postcal_biased_test = j.at("postcal_biased_test").get<std::int64_t>();
  return cell;
}

}  // namespace

std::string campaign_report_to_json(const CampaignReport& report) {
  json j;
  j["campaign"] = json{{"seed", report.campaign_seed},
                       {"alpha", report.alpha},
                       {"bonferroni_m", report.bonferroni_m},
                       {"alpha_effective", report.alpha_effective},
                       {"n_trials", report.n_trials},
                       {"config_digest", Digest::hex(report.config_digest)},
                       {"cohort_digest", Digest::hex(report.cohort_digest)},
                       {"outcomes", report.outcome_names},
                       {"features", report.feature_names}};
  json cells = json::array();
  for (const auto& cell : report.cells) cells.push_back(cell_to_json(cell));
  j["cells"] = cells;
  const auto& agg = report.aggregates;
  j["aggregates"] = json{{"calibrated_trials", agg.calibrated_trials},
                         {"mean_val_auc_pre", agg.mean_val_auc_pre},
                         {"mean_val_auc_post", agg.mean_val_auc_post},
                         {"mean_val_sensitivity_pre", agg.mean_val_sensitivity_pre},
                         {"mean_val_sensitivity_post", agg.mean_val_sensitivity_post},
                         {"mean_val_recall_gap_pre", agg.mean_val_recall_gap_pre},
                         {"mean_val_recall_gap_post", agg.mean_val_recall_gap_post},
                         {"mean_test_recall_gap_pre", agg.mean_test_recall_gap_pre},
                         {"mean_test_recall_gap_post", agg.mean_test_recall_gap_post},
                         {"total_precal_biased_test", agg.total_precal_biased_test},
                         {"total_postcal_biased_test", agg.total_postcal_biased_test}};
  return j.dump(2) + "\n";
}

namespace {

std::uint64_t hex_to_u64(const std::string& hex) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(hex.data(), hex.data() + hex.size(), v, 16);
  if (res.ec != std::errc{} || res.ptr != hex.data() + hex.size()) {
    throw ParseError("invalid digest '" + hex + "'");
  }
  return v;
}

}  // namespace

CampaignReport campaign_report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("campaign report: invalid JSON: ") + e.what());
  }
  CampaignReport report;
  try {
    const auto& campaign = j.at("campaign");
    report.campaign_seed = campaign.at("seed").get<std::uint64_t>();
    report.alpha = campaign.at("alpha").get<double>();
    report.bonferroni_m = campaign.at("bonferroni_m").get<std::size_t>();
    report.alpha_effective = campaign.at("alpha_effective").get<double>();
    report.n_trials = campaign.at("n_trials").get<std::size_t>();
    report.config_digest = hex_to_u64(campaign.at("config_digest").get<std::string>());
    report.cohort_digest = hex_to_u64(campaign.at("cohort_digest").get<std::string>());
    report.outcome_names = campaign.at("outcomes").get<std::vector<std::string>>();
    report.feature_names = campaign.at("features").get<std::vector<std::string>>();
    for (const auto& cell : j.at("cells")) report.cells.push_back(cell_from_json(cell));
    const auto& agg = j.at("aggregates");
    report.aggregates.calibrated_trials = agg.at("calibrated_trials").get<std::int64_t>();
    report.aggregates.mean_val_auc_pre = num_or_nan(agg.at("mean_val_auc_pre"));
    report.aggregates.mean_val_auc_post = num_or_nan(agg.at("mean_val_auc_post"));
    report.aggregates.mean_val_sensitivity_pre = num_or_nan(agg.at("mean_val_sensitivity_pre"));
    report.aggregates.mean_val_sensitivity_post = num_or_nan(agg.at("mean_val_sensitivity_post"));
    report.aggregates.mean_val_recall_gap_pre = num_or_nan(agg.at("mean_val_recall_gap_pre"));
    report.aggregates.mean_val_recall_gap_post = num_or_nan(agg.at("mean_val_recall_gap_post"));
    report.aggregates.mean_test_recall_gap_pre = num_or_nan(agg.at("mean_test_recall_gap_pre"));
    report.aggregates.mean_test_recall_gap_post = num_or_nan(agg.at("mean_test_recall_gap_post"));
    report.aggregates.total_precal_biased_test = agg.at("total_precal_biased_test").get<std::int64_t>();
    report.aggregates.total_postcal_biased_test = agg.at("total_postcal_biased_test").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("campaign report: ") + e.what());
  }
  return report;
}

void write_campaign_report(const CampaignReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");
  out << campaign_report_to_json(report);
}

CampaignReport read_campaign_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::ostringstream text;
  text << in.rdbuf();
  return campaign_report_from_json(text.str());
}

std::string trial_to_json_line(const TrialOutcome& trial) {
  json j;
  j["trial"] = trial.trial_index;
  j["outcome"] = std::string(to_string(trial.outcome));
  j["feature"] = std::string(to_string(trial.feature));
  j["seed"] = trial.seed;
  j["status"] = std::string(to_string(trial.status));
  if (trial.status == TrialStatus::untestable_validation) {
    return j.dump();
  }
  j["naive_policy"] = policy_to_json(trial.naive_policy);
  j["val_audit_pre"] = trial.val_audit_pre ? audit_to_json(*trial.val_audit_pre) : json{};
  j["calibrated"] = trial.calibrated;
  j["policy"] = trial.policy ? policy_to_json(*trial.policy) : json{};
  j["val_audit_post"] = trial.val_audit_post ? audit_to_json(*trial.val_audit_post) : json{};
  j["test_audit_pre"] = trial.test_audit_pre ? audit_to_json(*trial.test_audit_pre) : json{};
  j["test_audit_post"] = trial.test_audit_post ? audit_to_json(*trial.test_audit_post) : json{};
  j["metrics"] = json{{"val_pre", metrics_to_json(trial.val_pre)},
                      {"val_post", metrics_to_json(trial.val_post)},
                      {"test_pre", metrics_to_json(trial.test_pre)},
                      {"test_post", metrics_to_json(trial.test_post)}};
  return j.dump();
}

TrialOutcome trial_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("trial log: invalid JSON: ") + e.what());
  }
  TrialOutcome trial;
  try {
    trial.trial_index = j.at("trial").get<std::size_t>();
    trial.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    trial.feature = protected_feature_from_string(j.at("feature").get<std::string>());
    trial.seed = j.at("seed").get<std::uint64_t>();
    trial.status = trial_status_from_string(j.at("status").get<std::string>());
    if (trial.status == TrialStatus::untestable_validation) return trial;
    trial.naive_policy = policy_from_json(j.at("naive_policy"));
    if (!j.at("val_audit_pre").is_null()) {
      trial.val_audit_pre = audit_from_json(j.at("val_audit_pre"));
    }
    trial.calibrated = j.at("calibrated").get<bool>();
    if (!j.at("policy").is_null()) trial.policy = policy_from_json(j.at("policy"));
    if (!j.at("val_audit_post").is_null()) {
      trial.val_audit_post = audit_from_json(j.at("val_audit_post"));
    }
    if (!j.at("test_audit_pre").is_null()) {
      trial.test_audit_pre = audit_from_json(j.at("test_audit_pre"));
    }
    if (!j.at("test_audit_post").is_null()) {
      trial.test_audit_post = audit_from_json(j.at("test_audit_post"));
    }
    const auto& metrics = j.at("metrics");
    trial.val_pre = metrics_from_json(metrics.at("val_pre"));
    trial.val_post = metrics_from_json(metrics.at("val_post"));
    trial.test_pre = metrics_from_json(metrics.at("test_pre"));
    trial.test_post = metrics_from_json(metrics.at("test_post"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("trial log: ") + e.what());
  }
  return trial;
}

void write_trial_log(const std::vector<TrialOutcome>& trials, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");
  for (const auto& trial : trials) out << trial_to_json_line(trial) << '\n';
}

std::vector<TrialOutcome> read_trial_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::vector<TrialOutcome> trials;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    trials.push_back(trial_from_json_line(line));
  }
  return trials;
}

// ---------------------------------------------------------------------------
// Single-analysis audit
// ---------------------------------------------------------------------------

namespace {

AuditStageReport build_stage_report(std::span<const double> scores,
                                    std::span<const std::uint8_t> labels,
                                    const SubgroupPartition& partition,
                                    const BiasAudit& stage_audit) {
  AuditStageReport stage;
  stage.audit = stage_audit;
  stage.overall_auc = kNaN;
  try {
    stage.overall_auc = auc(scores, labels);
  } catch (const std::invalid_argument&) {
  }
  const std::int64_t tp = stage_audit.group_true_positives[0] + stage_audit.group_true_positives[1];
  const std::int64_t positives = stage_audit.group_positives[0] + stage_audit.group_positives[1];
  stage.overall_recall = static_cast<double>(tp) / static_cast<double>(positives);
  for (std::size_t g = 0; g < 2; ++g) {
    auto& group = stage.groups[g];
    group.name = partition.group_names[g];
    group.recall = stage_audit.group_recalls[g];
    group.positives = stage_audit.group_positives[g];
    std::vector<double> group_scores;
    std::vector<std::uint8_t> group_labels;
    group_scores.reserve(partition.groups[g].size());
    group_labels.reserve(partition.groups[g].size());
    for (std::size_t i : partition.groups[g]) {
      group_scores.push_back(scores[i]);
      group_labels.push_back(labels[i]);
    }
    group.auc = kNaN;
    try {
      group.auc = auc(group_scores, group_labels);
    } catch (const std::invalid_argument&) {
    }
  }
  return stage;
}

}  // namespace

AuditReport run_audit_analysis(const Cohort& cohort, Outcome outcome,
                               ProtectedFeature feature, const AuditOptions& options) {
  options.train.validate();
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
    throw ConfigError("audit: alpha must lie in (0, 1)");
  }
  if (!(options.min_sensitivity > 0.0 && options.min_sensitivity <= 1.0)) {
    throw ConfigError("audit: min_sensitivity must lie in (0, 1]");
  }

  AuditReport report;
  report.outcome = outcome;
  report.feature = feature;
  report.seed = options.seed;
  report.alpha_effective = bonferroni(options.alpha, options.bonferroni_m);
  report.cohort_digest = cohort.digest();

  SplitSpec spec;
  spec.train_fraction = options.train_fraction;
  spec.val_fraction = options.val_fraction;
  spec.test_fraction = options.test_fraction;
  spec.seed = mix64(options.seed, 2);
  if (options.stratify) spec.stratify_on = outcome;
  SplitResult parts = split(cohort, spec);

  const std::int64_t train_positives = parts.train.positives(outcome);
  if (train_positives == 0 ||
      train_positives == static_cast<std::int64_t>(parts.train.size())) {
    report.status = TrialStatus::untestable_validation;
    report.status_note = "training labels are all one class";
    return report;
  }

  TrainConfig train_config = options.train;
  train_config.seed = mix64(options.seed, 3);
  std::optional<SubgroupPartition> groups;
  if (train_config.penalty) {
    train_config.penalty->feature = feature;
    groups = subgroup_partition(parts.train, feature);
  }
  const LogitModel model = train(parts.train, outcome, groups, train_config);

  const auto val_scores = predict_scores(model, parts.val);
  const auto val_labels = parts.val.label_vector(outcome);
  const std::int64_t val_positives = parts.val.positives(outcome);
  const bool val_has_both =
      val_positives > 0 && val_positives < static_cast<std::int64_t>(parts.val.size());
  if ((options.threshold_rule.kind == ThresholdRule::Kind::youden && !val_has_both) ||
      (options.threshold_rule.kind == ThresholdRule::Kind::target_sensitivity &&
       val_positives == 0)) {
    report.status = TrialStatus::untestable_validation;
    report.status_note = "validation labels cannot support the threshold rule";
    return report;
  }
  report.naive_policy =
      choose_naive_threshold(val_scores, val_labels, options.threshold_rule);

  const auto partition = subgroup_partition(parts.val, feature);
  BiasAudit pre_audit;
  try {
    pre_audit = audit(val_scores, val_labels, partition, report.naive_policy,
                      report.alpha_effective);
  } catch (const UntestableError& e) {
    report.status = TrialStatus::untestable_validation;
    report.status_note = e.what();
    return report;
  }
  report.pre = build_stage_report(val_scores, val_labels, partition, pre_audit);

  if (pre_audit.biased || options.force_calibration) {
    report.calibrated = true;
    report.policy = calibrate_equal_opportunity(val_scores, val_labels, partition,
                                                options.min_sensitivity,
                                                report.naive_policy);
    const BiasAudit post_audit = audit(val_scores, val_labels, partition,
                                       *report.policy, report.alpha_effective);
    report.post = build_stage_report(val_scores, val_labels, partition, post_audit);
  }
  return report;
}

namespace {

void render_stage_plain(std::string& out, const AuditStageReport& stage) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"group", "auc", "recall", "positives"});
  const std::int64_t total_positives =
      stage.audit.group_positives[0] + stage.audit.group_positives[1];
  rows.push_back({"overall", fixed(stage.overall_auc, 4), fixed(stage.overall_recall, 4),
                  std::to_string(total_positives)});
  for (const auto& group : stage.groups) {
    rows.push_back({group.name, fixed(group.auc, 4), fixed(group.recall, 4),
                    std::to_string(group.positives)});
  }
  out += join_table(rows);
  const auto& audit = stage.audit;
  out += "  recall difference (" + audit.group_names[0] + " - " + audit.group_names[1] +
         "): " + fixed(audit.group_recalls[0] - audit.group_recalls[1], 4) + " (" +
         fixed(100 * audit.ci.level, 0) + "% CI " + fixed(audit.ci.lo, 4) + ", " +
         fixed(audit.ci.hi, 4) + ")\n";
  out += "  p-value (recall): " + p_value_text(audit.test.p_value) + " | z " +
         fixed(audit.test.z, 4) + " | " +
         (audit.biased ? "biased" : "not biased") + " at alpha " +
         fixed(audit.alpha_effective, 6) + "\n";
}

std::string policy_text(const ThresholdPolicy& policy) {
  if (policy.kind == ThresholdPolicy::Kind::global) {
    return "global threshold " + fixed(policy.global_threshold, 6);
  }
  std::string out = "per-group thresholds ";
  for (std::size_t g = 0; g < 2; ++g) {
    out += policy.group_names[g] + " " + fixed(policy.group_thresholds[g], 6);
    if (g == 0) out += ", ";
  }
  out += " (target sensitivity " + fixed(policy.min_sensitivity, 4) + ")";
  return out;
}

json stage_to_json(const AuditStageReport& stage) {
  json groups = json::array();
  for (const auto& group : stage.groups) {
    groups.push_back(json{{"name", group.name},
                          {"auc", group.auc},
                          {"recall", group.recall},
                          {"positives", group.positives}});
  }
  return json{{"overall_auc", stage.overall_auc},
              {"overall_recall", stage.overall_recall},
              {"groups", groups},
              {"audit", audit_to_json(stage.audit)}};
}

void render_stage_csv(std::string& out, const char* stage_name,
                      const AuditStageReport& stage) {
  const auto& audit = stage.audit;
  const std::int64_t total_positives =
      audit.group_positives[0] + audit.group_positives[1];
  out += std::string(stage_name) + ",overall," + shortest(stage.overall_auc) + "," +
         shortest(stage.overall_recall) + "," + std::to_string(total_positives) + "," +
         shortest(audit.test.p_value) + ",,,\n";
  for (std::size_t g = 0; g < 2; ++g) {
    const double diff = (g == 0 ? 1.0 : -1.0) *
                        (audit.group_recalls[0] - audit.group_recalls[1]);
    const double lo = g == 0 ? audit.ci.lo : -audit.ci.hi;
    const double hi = g == 0 ? audit.ci.hi : -audit.ci.lo;
    out += std::string(stage_name) + "," + stage.groups[g].name + "," +
           shortest(stage.groups[g].auc) + "," + shortest(stage.groups[g].recall) + "," +
           std::to_string(stage.groups[g].positives) + ",," + shortest(diff) + "," +
           shortest(lo) + "," + shortest(hi) + "\n";
  }
}

}  // namespace

std::string render_audit_report(const AuditReport& report, RenderFormat format) {
  if (format == RenderFormat::json) {
    json j;
    j["outcome"] = std::string(to_string(report.outcome));
    j["feature"] = std::string(to_string(report.feature));
    j["seed"] = report.seed;
    j["alpha_effective"] = report.alpha_effective;
    j["cohort_digest"] = Digest::hex(report.cohort_digest);
    j["status"] = std::string(to_string(report.status));
    if (report.status == TrialStatus::ok) {
      j["naive_policy"] = policy_to_json(report.naive_policy);
      j["pre"] = stage_to_json(report.pre);
      j["calibrated"] = report.calibrated;
      j["policy"] = report.policy ? policy_to_json(*report.policy) : json{};
      j["post"] = report.post ? stage_to_json(*report.post) : json{};
    } else {
      j["note"] = report.status_note;
    }
    return j.dump(2) + "\n";
  }

  if (format == RenderFormat::csv) {
    std::string out = "stage,group,auc,recall,positives,p_value,recall_diff,ci_lo,ci_hi\n";
    if (report.status != TrialStatus::ok) return out;
    render_stage_csv(out, "pre", report.pre);
    if (report.post) render_stage_csv(out, "post", *report.post);
    return out;
  }

  std::string out = "equal-opportunity audit: " + std::string(to_string(report.outcome)) +
                    " by " + std::string(to_string(report.feature)) + "\n";
  out += "seed " + std::to_string(report.seed) + " | alpha_effective " +
         fixed(report.alpha_effective, 6) + " | cohort " +
         Digest::hex(report.cohort_digest) + "\n";
  if (report.status != TrialStatus::ok) {
    out += "untestable: " + report.status_note + "\n";
    return out;
  }
  out += "\npre-calibration (validation, naive " + policy_text(report.naive_policy) + ")\n";
  render_stage_plain(out, report.pre);
  if (!report.calibrated) {
    out += "\nnot calibrated (recalls did not significantly differ)\n";
    return out;
  }
  out += "\ncalibrated: " + policy_text(*report.policy) + "\n";
  out += "\npost-calibration (validation)\n";
  render_stage_plain(out, *report.post);
  return out;
}

// ---------------------------------------------------------------------------
// Decision distributions
// ---------------------------------------------------------------------------

DecisionDistribution decision_distribution(std::span<const double> scores,
                                           std::span<const std::uint8_t> labels,
                                           const SubgroupPartition& partition,
                                           const ThresholdPolicy& naive_policy,
                                           const ThresholdPolicy& calibrated_policy,
                                           std::size_t bins) {
  if (scores.empty()) throw std::invalid_argument("decision_distribution: no scores");
  if (scores.size() != labels.size() || scores.size() != partition.group_of.size()) {
    throw std::invalid_argument("decision_distribution: input lengths differ");
  }
  if (bins == 0) throw std::invalid_argument("decision_distribution: bins must be >= 1");

  DecisionDistribution dist;
  dist.bins = bins;
  for (std::size_t g = 0; g < 2; ++g) {
    const auto& indices = partition.groups[g];
    if (indices.empty()) {
      dist.notes.push_back("group '" + partition.group_names[g] +
                           "' omitted: no records");
      continue;
    }
    GroupDistribution group;
    group.name = partition.group_names[g];
    group.size = indices.size();
    group.bin_counts.assign(bins, 0);
    group.naive_threshold = naive_policy.threshold_for(g);
    group.calibrated_threshold = calibrated_policy.threshold_for(g);
    for (std::size_t i : indices) {
      const double s = std::clamp(scores[i], 0.0, 1.0);
      std::size_t bin = static_cast<std::size_t>(s * static_cast<double>(bins));
      if (bin >= bins) bin = bins - 1;
      group.bin_counts[bin] += 1;

      const bool actual = labels[i] != 0;
      const bool pre = scores[i] >= group.naive_threshold;
      const bool post = scores[i] >= group.calibrated_threshold;
      if (actual) {
        (pre ? group.pre_confusion.tp : group.pre_confusion.fn) += 1;
        (post ? group.post_confusion.tp : group.post_confusion.fn) += 1;
      } else {
        (pre ? group.pre_confusion.fp : group.pre_confusion.tn) += 1;
        (post ? group.post_confusion.fp : group.post_confusion.tn) += 1;
      }
    }
    dist.groups.push_back(std::move(group));
  }
  return dist;
}

namespace {

json confusion_to_json(const ConfusionMatrix& cm, std::size_t total) {
  const double n = static_cast<double>(total);
  return json{{"tp", cm.tp},
              {"fp", cm.fp},
              {"tn", cm.tn},
              {"fn", cm.fn},
              {"tp_fraction", static_cast<double>(cm.tp) / n},
              {"fp_fraction", static_cast<double>(cm.fp) / n},
              {"tn_fraction", static_cast<double>(cm.tn) / n},
              {"fn_fraction", static_cast<double>(cm.fn) / n}};
}

}  // namespace

std::string decision_distribution_to_json(const DecisionDistribution& dist) {
  json groups = json::array();
  for (const auto& group : dist.groups) {
    groups.push_back(json{{"name", group.name},
                          {"size", group.size},
                          {"bin_counts", group.bin_counts},
                          {"naive_threshold", group.naive_threshold},
                          {"calibrated_threshold", group.calibrated_threshold},
                          {"pre_confusion", confusion_to_json(group.pre_confusion, group.size)},
                          {"post_confusion", confusion_to_json(group.post_confusion, group.size)}});
  }
  json j;
  j["bins"] = dist.bins;
  j["range"] = json::array({0.0, 1.0});
  j["groups"] = groups;
  j["notes"] = dist.notes;
  return j.dump(2) + "\n";
}

std::string decision_distribution_svg(const DecisionDistribution& dist) {
  const int panel_width = 720;
  const int panel_height = 150;
  const int margin_left = 56;
  const int margin_right = 16;
  const int title_height = 22;
  const int axis_height = 26;
  const int plot_width = panel_width - margin_left - margin_right;
  const int plot_height = panel_height - title_height - axis_height;
  const int total_height =
      static_cast<int>(dist.groups.size()) * panel_height + 10;

  auto fx = [&](double unit) { return margin_left + unit * plot_width; };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << panel_width
      << "\" height=\"" << total_height << "\" viewBox=\"0 0 " << panel_width << " "
      << total_height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  int panel_top = 5;
  for (const auto& group : dist.groups) {
    const int plot_top = panel_top + title_height;
    const int plot_bottom = plot_top + plot_height;
    std::int64_t max_count = 1;
    for (auto c : group.bin_counts) max_count = std::max(max_count, c);

    svg << "<text x=\"" << margin_left << "\" y=\"" << panel_top + 14
        << "\" font-family=\"sans-serif\" font-size=\"13\">" << group.name
        << " (n=" << group.size << ")</text>\n";
    svg << "<line x1=\"" << margin_left << "\" y1=\"" << plot_bottom << "\" x2=\""
        << margin_left + plot_width << "\" y2=\"" << plot_bottom
        << "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
    for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      svg << "<text x=\"" << num(fx(tick)) << "\" y=\"" << plot_bottom + 16
          << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">"
          << num(tick) << "</text>\n";
    }

    const double bin_width = static_cast<double>(plot_width) / dist.bins;
    for (std::size_t b = 0; b < group.bin_counts.size(); ++b) {
      const std::int64_t count = group.bin_counts[b];
      if (count == 0) continue;
      const double height =
          static_cast<double>(count) / static_cast<double>(max_count) * plot_height;
      svg << "<rect x=\"" << num(margin_left + b * bin_width) << "\" y=\""
          << num(plot_bottom - height) << "\" width=\"" << num(bin_width)
          << "\" height=\"" << num(height) << "\" fill=\"#8ab6d6\"/>\n";
    }

    svg << "<line x1=\"" << num(fx(group.naive_threshold)) << "\" y1=\"" << plot_top
        << "\" x2=\"" << num(fx(group.naive_threshold)) << "\" y2=\"" << plot_bottom
        << "\" stroke=\"#1f77b4\" stroke-width=\"1.5\" stroke-dasharray=\"5,3\"/>\n";
    svg << "<line x1=\"" << num(fx(group.calibrated_threshold)) << "\" y1=\""
        << plot_top << "\" x2=\"" << num(fx(group.calibrated_threshold)) << "\" y2=\""
        << plot_bottom << "\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
    panel_top += panel_height;
  }
  svg << "<text x=\"" << margin_left << "\" y=\"" << total_height - 4
      << "\" font-family=\"sans-serif\" font-size=\"10\">dashed: naive threshold, "
         "solid: calibrated threshold</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace fairscreen
