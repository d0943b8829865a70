#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "fairscreen/cohort.hpp"
#include "fairscreen/digest.hpp"
#include "fairscreen/error.hpp"
#include "fairscreen/fairness.hpp"
#include "fairscreen/logit.hpp"
#include "fairscreen/report.hpp"
#include "fairscreen/rng.hpp"
#include "fairscreen/trials.hpp"

namespace fs = std::filesystem;
using namespace fairscreen;

namespace {

// Documented exit contract (see README): 0 ok / unbiased / successfully
// calibrated, 2 biased and not successfully calibrated, 3 untestable,
// 4 invalid configuration or arguments, 5 I/O failure.
constexpr int kExitOk = 0;
constexpr int kExitBiased = 2;
constexpr int kExitUntestable = 3;
constexpr int kExitConfig = 4;
constexpr int kExitIo = 5;

struct CommonOpts {
  std::uint64_t seed = 20200101;
  std::string format = "plain";
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  double alpha = 0.05;
  double min_sensitivity = 0.85;
  std::string threshold_rule = "youden";
};

void add_common_options(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--seed", opts.seed, "Base seed")->capture_default_str();
  cmd->add_option("--format", opts.format, "Output format: plain, csv or json")
      ->capture_default_str();
  cmd->add_option("--workers", opts.workers, "Parallel trial workers")
      ->capture_default_str();
  cmd->add_option("--alpha", opts.alpha, "Significance level before adjustment")
      ->capture_default_str();
  cmd->add_option("--min-sensitivity", opts.min_sensitivity,
                  "Per-group sensitivity floor for calibration")
      ->capture_default_str();
  cmd->add_option("--threshold-rule", opts.threshold_rule,
                  "Naive threshold rule: youden, fixed:<tau> or sens:<s>")
      ->capture_default_str();
}

void require_readable(const std::string& path) {
  if (!fs::exists(path)) throw Error(path + ": no such file");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");
  out << text;
  if (!out) throw Error(path + ": write failed");
}

std::string percent(std::size_t part, std::size_t whole) {
  if (whole == 0) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f",
                100.0 * static_cast<double>(part) / static_cast<double>(whole));
  return buf;
}

void print_marginals(const Cohort& cohort) {
  const MarginalSummary s = summarize_marginals(cohort);
  std::printf("realized marginals (n=%zu, median age %d)\n", s.n, s.median_age);
  std::printf("%-12s %-16s", "row", "total");
  for (std::size_t f = 0; f < 3; ++f) {
    const auto names = group_names_for(kAllProtectedFeatures[f]);
    std::printf(" %-16s %-16s", names[0].c_str(), names[1].c_str());
  }
  std::printf("\n");

  std::printf("%-12s %-16s", "all", std::to_string(s.n).c_str());
  for (std::size_t f = 0; f < 3; ++f) {
    for (std::size_t g = 0; g < 2; ++g) {
      const std::string cell = std::to_string(s.group_sizes[f][g]) + " (" +
                               percent(s.group_sizes[f][g], s.n) + ")";
      std::printf(" %-16s", cell.c_str());
    }
  }
  std::printf("\n");

  for (std::size_t o = 0; o < 3; ++o) {
    const std::string total = std::to_string(s.outcome_positives[o]) + " (" +
                              percent(s.outcome_positives[o], s.n) + ")";
    std::printf("%-12s %-16s", std::string(to_string(kAllOutcomes[o])).c_str(),
                total.c_str());
    for (std::size_t f = 0; f < 3; ++f) {
      for (std::size_t g = 0; g < 2; ++g) {
        // Composition style: share of this outcome's positives per group.
        const std::string cell =
            std::to_string(s.subgroup_positives[o][f][g]) + " (" +
            percent(s.subgroup_positives[o][f][g], s.outcome_positives[o]) + ")";
        std::printf(" %-16s", cell.c_str());
      }
    }
    std::printf("\n");
  }
}

AuditOptions audit_options_from(const CommonOpts& common, const TrainConfig& train,
                                bool force) {
  AuditOptions options;
  options.seed = common.seed;
  options.alpha = common.alpha;
  options.bonferroni_m = 1;
  options.min_sensitivity = common.min_sensitivity;
  options.threshold_rule = ThresholdRule::parse(common.threshold_rule);
  options.train = train;
  options.force_calibration = force;
  return options;
}

int run_generate(const std::string& config_path, const std::string& out_path,
                 const CommonOpts& common, bool seed_given) {
  SynthConfig config;
  if (!config_path.empty()) {
    require_readable(config_path);
    config = load_synth_config(config_path);
  }
  if (seed_given) config.seed = common.seed;
  const Cohort cohort = generate_synthetic(config);
  save_csv(cohort, out_path);
  print_marginals(cohort);
  std::printf("wrote %zu records to %s (config digest %s)\n", cohort.size(),
              out_path.c_str(), Digest::hex(config.digest()).c_str());
  return kExitOk;
}

int run_audit(const std::string& cohort_path, const std::string& outcome_name,
              const std::string& feature_name, const std::string& out_path,
              const CommonOpts& common, const TrainConfig& train, bool force) {
  require_readable(cohort_path);
  const Cohort cohort = load_csv(cohort_path);
  const Outcome outcome = outcome_from_string(outcome_name);
  const ProtectedFeature feature = protected_feature_from_string(feature_name);

  const AuditReport report = run_audit_analysis(
      cohort, outcome, feature, audit_options_from(common, train, force));
  const std::string rendered =
      render_audit_report(report, render_format_from_string(common.format));
  std::fputs(rendered.c_str(), stdout);
  if (!out_path.empty()) write_text(out_path, rendered);

  if (report.status != TrialStatus::ok) return kExitUntestable;
  if (!report.pre.audit.biased) return kExitOk;
  if (report.post && !report.post->audit.biased) return kExitOk;
  return kExitBiased;
}

int run_calibrate(const std::string& cohort_path, const std::string& outcome_name,
                  const std::string& feature_name, const std::string& out_path,
                  const CommonOpts& common, const TrainConfig& train) {
  require_readable(cohort_path);
  const Cohort cohort = load_csv(cohort_path);
  const Outcome outcome = outcome_from_string(outcome_name);
  const ProtectedFeature feature = protected_feature_from_string(feature_name);

  const AuditReport report = run_audit_analysis(
      cohort, outcome, feature, audit_options_from(common, train, /*force=*/true));
  if (report.status != TrialStatus::ok || !report.policy) {
    std::fprintf(stderr, "calibrate: %s\n",
                 report.status_note.empty() ? "untestable cohort"
                                            : report.status_note.c_str());
    return kExitUntestable;
  }
  save_policy(*report.policy, out_path);
  std::printf("wrote threshold policy to %s\n", out_path.c_str());
  std::fputs(render_audit_report(report, render_format_from_string(common.format)).c_str(),
             stdout);
  return kExitOk;
}

int run_campaign_cmd(const std::string& config_path, const std::string& out_dir,
                     const CommonOpts& common, bool workers_given, bool alpha_given,
                     bool min_sens_given, bool rule_given, bool seed_given) {
  require_readable(config_path);
  CampaignFileConfig file_config = load_campaign_config(config_path);
  auto& campaign = file_config.campaign;
  (void)workers_given;  // workers always come from the command line
  campaign.workers = common.workers;
  if (alpha_given) campaign.alpha = common.alpha;
  if (min_sens_given) campaign.min_sensitivity = common.min_sensitivity;
  if (rule_given) campaign.threshold_rule = ThresholdRule::parse(common.threshold_rule);
  if (seed_given) campaign.seed = common.seed;
  campaign.validate();

  if (file_config.source == CampaignFileConfig::Source::csv) {
    require_readable(file_config.csv_path);
  }
  const Cohort cohort = realize_cohort(file_config);
  const CampaignResult result = run_campaign(cohort, campaign);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_campaign_report(result.report, (dir / "report.json").string());
  write_trial_log(result.trials, (dir / "trials.jsonl").string());

  const RenderFormat format = render_format_from_string(common.format);
  const std::string table = render_campaign_table(result.report, format);
  const std::string aggregates = render_campaign_aggregates(result.report, format);
  if (format == RenderFormat::plain) {
    write_text((dir / "table1.txt").string(), table);
    write_text((dir / "aggregates.txt").string(), aggregates);
  } else if (format == RenderFormat::csv) {
    write_text((dir / "table1.csv").string(), table);
    write_text((dir / "aggregates.csv").string(), aggregates);
  }
  std::fputs(table.c_str(), stdout);
  std::fputs(aggregates.c_str(), stdout);
  return kExitOk;
}

int run_render(const std::string& report_path, const std::string& cohort_path,
               const std::string& outcome_name, const std::string& feature_name,
               const std::string& out_dir, std::size_t bins, const CommonOpts& common,
               const TrainConfig& train) {
  const RenderFormat format = render_format_from_string(common.format);

  if (!report_path.empty()) {
    require_readable(report_path);
    const CampaignReport report = read_campaign_report(report_path);
    const std::string table = render_campaign_table(report, format);
    const std::string aggregates = render_campaign_aggregates(report, format);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      const fs::path dir(out_dir);
      const char* ext = format == RenderFormat::csv ? "csv" : format == RenderFormat::json ? "json" : "txt";
      write_text((dir / (std::string("table1.") + ext)).string(), table);
      write_text((dir / (std::string("aggregates.") + ext)).string(), aggregates);
    }
    std::fputs(table.c_str(), stdout);
    std::fputs(aggregates.c_str(), stdout);
    return kExitOk;
  }

  // Decision-distribution mode: train on the cohort, calibrate on validation,
  // then histogram the whole cohort's scores per subgroup.
  require_readable(cohort_path);
  const Cohort cohort = load_csv(cohort_path);
  const Outcome outcome = outcome_from_string(outcome_name);
  const ProtectedFeature feature = protected_feature_from_string(feature_name);

  const AuditReport audit_report = run_audit_analysis(
      cohort, outcome, feature, audit_options_from(common, train, /*force=*/true));
  if (audit_report.status != TrialStatus::ok || !audit_report.policy) {
    std::fprintf(stderr, "render: %s\n", audit_report.status_note.c_str());
    return kExitUntestable;
  }

  SplitSpec spec;
  spec.seed = mix64(common.seed, 2);
  spec.stratify_on = outcome;
  const SplitResult parts = split(cohort, spec);
  TrainConfig train_config = train;
  train_config.seed = mix64(common.seed, 3);
  const LogitModel model =
      fairscreen::train(parts.train, outcome, std::nullopt, train_config);

  const auto scores = predict_scores(model, cohort);
  const auto labels = cohort.label_vector(outcome);
  const auto partition = subgroup_partition(cohort, feature);
  const DecisionDistribution dist =
      decision_distribution(scores, labels, partition, audit_report.naive_policy,
                            *audit_report.policy, bins);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_text((dir / "decision_distribution.json").string(),
             decision_distribution_to_json(dist));
  write_text((dir / "decision_distribution.svg").string(),
             decision_distribution_svg(dist));
  std::printf("wrote decision distribution artifacts to %s\n", out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subgroup bias screening and equal-opportunity threshold calibration "
               "for clinical risk classifiers"};
  app.require_subcommand(1);

  CommonOpts common;
  TrainConfig train;

  auto add_train_options = [&](CLI::App* cmd) {
    cmd->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--batch-size", train.batch_size, "SGD batch size")
        ->capture_default_str();
    cmd->add_option("--learning-rate", train.learning_rate, "SGD learning rate")
        ->capture_default_str();
    cmd->add_option("--l2", train.l2, "L2 regularization strength")
        ->capture_default_str();
  };

  std::string config_path, out_path, out_dir, cohort_path, report_path;
  std::string outcome_name = "mortality";
  std::string feature_name = "sex";
  std::size_t bins = 50;
  bool force = false;
  double penalty_lambda = 0.0;
  double penalty_temperature = 0.1;

  auto* generate = app.add_subcommand(
      "generate", "Generate a synthetic cohort CSV and print realized marginals");
  generate->add_option("--config", config_path, "Synthetic config JSON (defaults used if omitted)");
  generate->add_option("--out", out_path, "Output cohort CSV")->required();
  add_common_options(generate, common);

  auto* audit = app.add_subcommand(
      "audit", "Train one model, audit a protected feature, calibrate when biased");
  audit->add_option("--cohort", cohort_path, "Cohort CSV")->required();
  audit->add_option("--outcome", outcome_name, "mortality, ventilator or inpatient")
      ->required();
  audit->add_option("--feature", feature_name, "sex, race or senior")->required();
  audit->add_option("--out", out_path, "Also write the rendered report here");
  audit->add_flag("--force", force, "Calibrate even when the audit is not biased");
  audit->add_option("--lambda", penalty_lambda, "Fairness penalty weight (penalized training)")
      ->capture_default_str();
  audit->add_option("--temperature", penalty_temperature,
                    "Fairness penalty temperature")
      ->capture_default_str();
  add_common_options(audit, common);
  add_train_options(audit);

  auto* calibrate = app.add_subcommand(
      "calibrate", "Emit a per-group threshold policy file from a cohort");
  calibrate->add_option("--cohort", cohort_path, "Cohort CSV")->required();
  calibrate->add_option("--outcome", outcome_name, "mortality, ventilator or inpatient")
      ->required();
  calibrate->add_option("--feature", feature_name, "sex, race or senior")->required();
  calibrate->add_option("--out", out_path, "Output policy JSON")->required();
  add_common_options(calibrate, common);
  add_train_options(calibrate);

  auto* campaign = app.add_subcommand(
      "campaign", "Run the bootstrap bias campaign from a campaign config");
  campaign->add_option("--config", config_path, "Campaign config JSON")->required();
  campaign->add_option("--out-dir", out_dir, "Output directory")->required();
  add_common_options(campaign, common);

  auto* render = app.add_subcommand(
      "render", "Re-render a campaign report, or emit decision-distribution artifacts");
  render->add_option("--report", report_path, "Campaign report.json to re-render");
  render->add_option("--cohort", cohort_path, "Cohort CSV (decision-distribution mode)");
  render->add_option("--outcome", outcome_name, "Outcome for decision distributions");
  render->add_option("--feature", feature_name, "Protected feature for decision distributions");
  render->add_option("--out-dir", out_dir, "Output directory");
  render->add_option("--bins", bins, "Histogram bin count")->capture_default_str();
  add_common_options(render, common);
  add_train_options(render);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (generate->parsed()) {
      return run_generate(config_path, out_path, common,
                          generate->count("--seed") > 0);
    }
    if (audit->parsed()) {
      if (penalty_lambda > 0.0) {
        train.penalty = FairnessPenalty{ProtectedFeature::sex, penalty_lambda,
                                        penalty_temperature};
      }
      return run_audit(cohort_path, outcome_name, feature_name, out_path, common,
                       train, force);
    }
    if (calibrate->parsed()) {
      return run_calibrate(cohort_path, outcome_name, feature_name, out_path, common,
                           train);
    }
    if (campaign->parsed()) {
      return run_campaign_cmd(config_path, out_dir, common,
                              campaign->count("--workers") > 0,
                              campaign->count("--alpha") > 0,
                              campaign->count("--min-sensitivity") > 0,
                              campaign->count("--threshold-rule") > 0,
                              campaign->count("--seed") > 0);
    }
    if (render->parsed()) {
      if (report_path.empty() && cohort_path.empty()) {
        std::fprintf(stderr, "render: pass --report or --cohort\n");
        return kExitConfig;
      }
      return run_render(report_path, cohort_path, outcome_name, feature_name,
                        out_dir.empty() ? "." : out_dir, bins, common, train);
    }
  } catch (const UntestableError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUntestable;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  }
  return kExitConfig;
}
