#include "fairscreen/trials.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "fairscreen/digest.hpp"
#include "fairscreen/error.hpp"
#include "fairscreen/metrics.hpp"
#include "fairscreen/rng.hpp"

namespace fairscreen {

using json = nlohmann::json;

std::string_view to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::ok: return "ok";
    case TrialStatus::untestable_validation: return "untestable_validation";
    case TrialStatus::untestable_test: return "untestable_test";
  }
  return "?";
}

TrialStatus trial_status_from_string(std::string_view name) {
  if (name == "ok") return TrialStatus::ok;
  if (name == "untestable_validation") return TrialStatus::untestable_validation;
  if (name == "untestable_test") return TrialStatus::untestable_test;
  throw ConfigError("unknown trial status '" + std::string(name) + "'");
}

void CampaignConfig::validate() const {
  if (outcomes.empty()) throw ConfigError("campaign config: outcomes must be non-empty");
  if (features.empty()) throw ConfigError("campaign config: features must be non-empty");
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    for (std::size_t j = i + 1; j < outcomes.size(); ++j) {
      if (outcomes[i] == outcomes[j]) {
        throw ConfigError("campaign config: duplicate outcome");
      }
    }
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t j = i + 1; j < features.size(); ++j) {
      if (features[i] == features[j]) {
        throw ConfigError("campaign config: duplicate protected feature");
      }
    }
  }
  if (n_trials < 1) throw ConfigError("campaign config: n_trials must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("campaign config: alpha must lie in (0, 1)");
  }
  if (bonferroni_m && *bonferroni_m == 0) {
    throw ConfigError("campaign config: bonferroni_m must be >= 1");
  }
  if (!(min_sensitivity > 0.0 && min_sensitivity <= 1.0)) {
    throw ConfigError("campaign config: min_sensitivity must lie in (0, 1]");
  }
  SplitSpec spec;
  spec.train_fraction = train_fraction;
  spec.val_fraction = val_fraction;
  spec.test_fraction = test_fraction;
  spec.validate();
  train.validate();
  if (workers < 1) throw ConfigError("campaign config: workers must be >= 1");
}

double CampaignConfig::alpha_effective() const {
  return bonferroni(alpha, effective_m());
}

std::uint64_t CampaignConfig::digest() const {
  Digest d;
  for (Outcome o : outcomes) d.str(to_string(o));
  for (ProtectedFeature f : features) d.str(to_string(f));
  d.u64(n_trials).u64(seed).f64(alpha);
  d.u64(bonferroni_m ? *bonferroni_m + 1 : 0);
  d.f64(min_sensitivity);
  d.u64(static_cast<std::uint64_t>(threshold_rule.kind)).f64(threshold_rule.value);
  d.f64(train_fraction).f64(val_fraction).f64(test_fraction);
  d.u64(stratify ? 1 : 0);
  d.u64(train.digest());
  d.u64(force_calibration ? 1 : 0);
  return d.value();
}

namespace {

StageMetrics stage_metrics(std::span<const double> scores,
                           std::span<const std::uint8_t> labels,
                           const SubgroupPartition& partition,
                           const ThresholdPolicy& policy) {
  StageMetrics m;
  try {
    m.auc = auc(scores, labels);
  } catch (const std::invalid_argument&) {
    // single-class stage; auc stays NaN
  }
  const auto cms = group_confusions(scores, labels, partition, policy);
  ConfusionMatrix total;
  for (const auto& cm : cms) {
    total.tp += cm.tp;
    total.fp += cm.fp;
    total.tn += cm.tn;
    total.fn += cm.fn;
  }
  if (total.positives() > 0) m.overall_sensitivity = sensitivity(total);
  for (std::size_t g = 0; g < 2; ++g) {
    if (cms[g].positives() > 0) m.group_recalls[g] = sensitivity(cms[g]);
  }
  return m;
}

// Everything of a trial that does not depend on the audited feature: the
// resample, the split, the naive model and its validation threshold. With a
// penalized train config the model does depend on the feature, so sharing is
// disabled by the caller.
struct TrialArtifacts {
  bool ok = false;
  Cohort val;
  Cohort test;
  std::vector<double> val_scores;
  std::vector<double> test_scores;
  std::vector<std::uint8_t> val_labels;
  std::vector<std::uint8_t> test_labels;
  ThresholdPolicy naive_policy;
};

TrialArtifacts build_artifacts(const Cohort& cohort, Outcome outcome,
                               std::uint64_t seed, const CampaignConfig& config,
                               std::optional<ProtectedFeature> penalty_feature) {
  TrialArtifacts artifacts;

  const Cohort resample = bootstrap_resample(cohort, mix64(seed, 1));
  SplitSpec spec;
  spec.train_fraction = config.train_fraction;
  spec.val_fraction = config.val_fraction;
  spec.test_fraction = config.test_fraction;
  spec.seed = mix64(seed, 2);
  if (config.stratify) spec.stratify_on = outcome;
  SplitResult parts = split(resample, spec);

  const std::int64_t train_positives = parts.train.positives(outcome);
  if (train_positives == 0 ||
      train_positives == static_cast<std::int64_t>(parts.train.size())) {
    return artifacts;  // single-class training resample; trial is untestable
  }

  TrainConfig train_config = config.train;
  train_config.seed = mix64(seed, 3);
  std::optional<SubgroupPartition> groups;
  if (train_config.penalty && penalty_feature) {
    train_config.penalty->feature = *penalty_feature;
    groups = subgroup_partition(parts.train, *penalty_feature);
  }
  const LogitModel model = train(parts.train, outcome, groups, train_config);

  artifacts.val_scores = predict_scores(model, parts.val);
  artifacts.test_scores = predict_scores(model, parts.test);
  artifacts.val_labels = parts.val.label_vector(outcome);
  artifacts.test_labels = parts.test.label_vector(outcome);

  const std::int64_t val_positives = parts.val.positives(outcome);
  const bool val_has_both =
      val_positives > 0 && val_positives < static_cast<std::int64_t>(parts.val.size());
  switch (config.threshold_rule.kind) {
    case ThresholdRule::Kind::youden:
      if (!val_has_both) return artifacts;
      break;
    case ThresholdRule::Kind::target_sensitivity:
      if (val_positives == 0) return artifacts;
      break;
    case ThresholdRule::Kind::fixed:
      break;
  }
  artifacts.naive_policy =
      choose_naive_threshold(artifacts.val_scores, artifacts.val_labels,
                             config.threshold_rule);

  artifacts.val = std::move(parts.val);
  artifacts.test = std::move(parts.test);
  artifacts.ok = true;
  return artifacts;
}

TrialOutcome finish_trial(const TrialArtifacts& artifacts, Outcome outcome,
                          ProtectedFeature feature, std::size_t trial_index,
                          std::uint64_t seed, const CampaignConfig& config,
                          double alpha_effective) {
  TrialOutcome trial;
  trial.trial_index = trial_index;
  trial.outcome = outcome;
  trial.feature = feature;
  trial.seed = seed;

  if (!artifacts.ok) {
    trial.status = TrialStatus::untestable_validation;
    return trial;
  }
  trial.naive_policy = artifacts.naive_policy;

  const auto val_partition = subgroup_partition(artifacts.val, feature);
  try {
    trial.val_audit_pre = audit(artifacts.val_scores, artifacts.val_labels,
                                val_partition, artifacts.naive_policy, alpha_effective);
  } catch (const UntestableError&) {
    trial.status = TrialStatus::untestable_validation;
    return trial;
  }
  trial.val_pre = stage_metrics(artifacts.val_scores, artifacts.val_labels,
                                val_partition, artifacts.naive_policy);

  if (trial.val_audit_pre->biased || config.force_calibration) {
    trial.calibrated = true;
    trial.policy = calibrate_equal_opportunity(
        artifacts.val_scores, artifacts.val_labels, val_partition,
        config.min_sensitivity, artifacts.naive_policy);
    trial.val_audit_post = audit(artifacts.val_scores, artifacts.val_labels,
                                 val_partition, *trial.policy, alpha_effective);
    trial.val_post = stage_metrics(artifacts.val_scores, artifacts.val_labels,
                                   val_partition, *trial.policy);
  }

  const auto test_partition = subgroup_partition(artifacts.test, feature);
  try {
    trial.test_audit_pre = audit(artifacts.test_scores, artifacts.test_labels,
                                 test_partition, artifacts.naive_policy, alpha_effective);
    trial.test_pre = stage_metrics(artifacts.test_scores, artifacts.test_labels,
                                   test_partition, artifacts.naive_policy);
    if (trial.calibrated) {
      trial.test_audit_post = audit(artifacts.test_scores, artifacts.test_labels,
                                    test_partition, *trial.policy, alpha_effective);
      trial.test_post = stage_metrics(artifacts.test_scores, artifacts.test_labels,
                                      test_partition, *trial.policy);
    }
  } catch (const UntestableError&) {
    trial.status = TrialStatus::untestable_test;
    trial.test_audit_pre.reset();
    trial.test_audit_post.reset();
    trial.test_pre = StageMetrics{};
    trial.test_post = StageMetrics{};
  }
  return trial;
}

std::uint64_t trial_seed(std::uint64_t campaign_seed, Outcome outcome,
                         std::size_t trial_index) {
  return mix64(mix64(campaign_seed, fnv1a64(to_string(outcome))), trial_index);
}

bool bitwise_equal(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

}  // namespace

TrialOutcome run_trial(const Cohort& cohort, Outcome outcome, ProtectedFeature feature,
                       std::uint64_t seed, const CampaignConfig& config) {
  config.validate();
  std::optional<ProtectedFeature> penalty_feature;
  if (config.train.penalty) penalty_feature = feature;
  const auto artifacts = build_artifacts(cohort, outcome, seed, config, penalty_feature);
  return finish_trial(artifacts, outcome, feature, 0, seed, config,
                      config.alpha_effective());
}

CampaignResult run_campaign(const Cohort& cohort, const CampaignConfig& config) {
  config.validate();
  const double alpha_effective = config.alpha_effective();

  const std::size_t n_outcomes = config.outcomes.size();
  const std::size_t n_features = config.features.size();
  const std::size_t n_trials = config.n_trials;
  const bool penalized = config.train.penalty.has_value();

  std::vector<TrialOutcome> trials(n_outcomes * n_features * n_trials);
  const auto slot = [&](std::size_t oi, std::size_t fi, std::size_t t) {
    return (oi * n_features + fi) * n_trials + t;
  };

  // With a shared naive model, one task covers every feature of an
  // (outcome, trial) pair; penalized models are per feature.
  const std::size_t task_count =
      penalized ? n_outcomes * n_features * n_trials : n_outcomes * n_trials;
  std::atomic<std::size_t> next_task{0};
  std::mutex error_mutex;
  std::string first_error;

  const auto worker = [&]() {
    while (true) {
      const std::size_t task = next_task.fetch_add(1);
      if (task >= task_count) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error.empty()) return;
      }
      try {
        if (penalized) {
          const std::size_t oi = task / (n_features * n_trials);
          const std::size_t fi = (task / n_trials) % n_features;
          const std::size_t t = task % n_trials;
          const Outcome outcome = config.outcomes[oi];
          const ProtectedFeature feature = config.features[fi];
          const std::uint64_t seed = trial_seed(config.seed, outcome, t);
          const auto artifacts =
              build_artifacts(cohort, outcome, seed, config, feature);
          trials[slot(oi, fi, t)] = finish_trial(artifacts, outcome, feature, t,
                                                 seed, config, alpha_effective);
        } else {
          const std::size_t oi = task / n_trials;
          const std::size_t t = task % n_trials;
          const Outcome outcome = config.outcomes[oi];
          const std::uint64_t seed = trial_seed(config.seed, outcome, t);
          const auto artifacts =
              build_artifacts(cohort, outcome, seed, config, std::nullopt);
          for (std::size_t fi = 0; fi < n_features; ++fi) {
            trials[slot(oi, fi, t)] =
                finish_trial(artifacts, outcome, config.features[fi], t, seed,
                             config, alpha_effective);
          }
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty()) first_error = e.what();
        return;
      }
    }
  };

  const std::size_t worker_count = std::min(config.workers, task_count);
  if (worker_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(worker_count);
    for (std::size_t i = 0; i < worker_count; ++i) pool.emplace_back(worker);
    for (auto& thread : pool) thread.join();
  }
  if (!first_error.empty()) {
    throw Error("campaign trial failed: " + first_error);
  }

  CampaignResult result;
  result.report = summarize(trials);
  result.report.campaign_seed = config.seed;
  result.report.alpha = config.alpha;
  result.report.bonferroni_m = config.effective_m();
  result.report.alpha_effective = alpha_effective;
  result.report.n_trials = n_trials;
  result.report.config_digest = config.digest();
  result.report.cohort_digest = cohort.digest();
  for (Outcome o : config.outcomes) result.report.outcome_names.emplace_back(to_string(o));
  for (ProtectedFeature f : config.features) {
    result.report.feature_names.emplace_back(to_string(f));
  }
  result.trials = std::move(trials);
  return result;
}

CampaignReport summarize(const std::vector<TrialOutcome>& trials) {
  if (trials.empty()) throw std::invalid_argument("summarize: no trials");

  CampaignReport report;
  const auto cell_for = [&](Outcome o, ProtectedFeature f) -> CellReport& {
    for (auto& cell : report.cells) {
      if (cell.outcome == o && cell.feature == f) return cell;
    }
    CellReport cell;
    cell.outcome = o;
    cell.feature = f;
    report.cells.push_back(cell);
    return report.cells.back();
  };

  auto& agg = report.aggregates;
  double sum_val_auc_pre = 0.0, sum_val_auc_post = 0.0;
  double sum_val_sens_pre = 0.0, sum_val_sens_post = 0.0;
  double sum_val_gap_pre = 0.0, sum_val_gap_post = 0.0;
  double sum_test_gap_pre = 0.0, sum_test_gap_post = 0.0;
  std::int64_t val_pairs = 0;
  std::int64_t test_pairs = 0;

  for (const auto& trial : trials) {
    auto& cell = cell_for(trial.outcome, trial.feature);
    cell.trials += 1;
    if (trial.status == TrialStatus::untestable_validation) {
      cell.untestable_val += 1;
      continue;
    }
    cell.testable += 1;
    if (trial.status == TrialStatus::untestable_test) cell.untestable_test += 1;

    const bool biased = trial.val_audit_pre->biased;
    if (biased) cell.biased_val += 1;

    if (trial.calibrated) {
      cell.calibration_ran += 1;
      // Thresholds cannot move the AUC; a mismatch means scores changed.
      if (!bitwise_equal(trial.val_pre.auc, trial.val_post.auc)) {
        throw Error("summarize: calibration changed the validation AUC in trial " +
                    std::to_string(trial.trial_index));
      }
      agg.calibrated_trials += 1;
      if (std::isfinite(trial.val_pre.auc)) {
        sum_val_auc_pre += trial.val_pre.auc;
        sum_val_auc_post += trial.val_post.auc;
        sum_val_sens_pre += trial.val_pre.overall_sensitivity;
        sum_val_sens_post += trial.val_post.overall_sensitivity;
        sum_val_gap_pre += trial.val_audit_pre->recall_gap();
        sum_val_gap_post += trial.val_audit_post->recall_gap();
        val_pairs += 1;
      }
      if (trial.status == TrialStatus::ok && trial.test_audit_pre &&
          trial.test_audit_post) {
        sum_test_gap_pre += trial.test_audit_pre->recall_gap();
        sum_test_gap_post += trial.test_audit_post->recall_gap();
        test_pairs += 1;
      }
    }

    // Table chain: test columns cover successfully calibrated trials that
    // were evaluable on the test split.
    const bool success = biased && trial.calibrated && trial.val_audit_post &&
                         !trial.val_audit_post->biased;
    if (success) {
      cell.successfully_calibrated += 1;
      if (trial.status == TrialStatus::ok) {
        cell.test_evaluable += 1;
        if (trial.test_audit_pre->biased) cell.precal_biased_test += 1;
        if (trial.test_audit_post->biased) cell.postcal_biased_test += 1;
      }
    }
  }

  for (const auto& cell : report.cells) {
    agg.total_precal_biased_test += cell.precal_biased_test;
    agg.total_postcal_biased_test += cell.postcal_biased_test;
  }
  if (val_pairs > 0) {
    const double n = static_cast<double>(val_pairs);
    agg.mean_val_auc_pre = sum_val_auc_pre / n;
    agg.mean_val_auc_post = sum_val_auc_post / n;
    agg.mean_val_sensitivity_pre = sum_val_sens_pre / n;
    agg.mean_val_sensitivity_post = sum_val_sens_post / n;
    agg.mean_val_recall_gap_pre = sum_val_gap_pre / n;
    agg.mean_val_recall_gap_post = sum_val_gap_post / n;
  }
  if (test_pairs > 0) {
    const double n = static_cast<double>(test_pairs);
    agg.mean_test_recall_gap_pre = sum_test_gap_pre / n;
    agg.mean_test_recall_gap_post = sum_test_gap_post / n;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Campaign config file
// ---------------------------------------------------------------------------

CampaignFileConfig load_campaign_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }

  CampaignFileConfig config;
  try {
    if (!j.contains("cohort")) {
      throw ConfigError(path + ": missing 'cohort' section");
    }
    const auto& cohort = j.at("cohort");
    if (cohort.contains("csv")) {
      config.source = CampaignFileConfig::Source::csv;
      config.csv_path = cohort.at("csv").get<std::string>();
    } else if (cohort.contains("synthetic")) {
      config.source = CampaignFileConfig::Source::synthetic;
      const auto& synth = cohort.at("synthetic");
      // Reuse the synth config reader by bouncing through its JSON form.
      SynthConfig sc;
      if (synth.contains("n")) sc.n = synth.at("n").get<std::size_t>();
      if (synth.contains("seed")) sc.seed = synth.at("seed").get<std::uint64_t>();
      if (synth.contains("male_fraction")) sc.male_fraction = synth.at("male_fraction").get<double>();
      if (synth.contains("senior_fraction")) sc.senior_fraction = synth.at("senior_fraction").get<double>();
      if (synth.contains("non_white_fraction")) sc.non_white_fraction = synth.at("non_white_fraction").get<double>();
      if (synth.contains("adult_age_min")) sc.adult_age_min = synth.at("adult_age_min").get<int>();
      if (synth.contains("adult_age_max")) sc.adult_age_max = synth.at("adult_age_max").get<int>();
      if (synth.contains("senior_age_min")) sc.senior_age_min = synth.at("senior_age_min").get<int>();
      if (synth.contains("senior_age_max")) sc.senior_age_max = synth.at("senior_age_max").get<int>();
      if (synth.contains("n_features")) sc.n_features = synth.at("n_features").get<std::size_t>();
      if (synth.contains("signal_strength")) sc.signal_strength = synth.at("signal_strength").get<double>();
      if (synth.contains("proxy_strength")) sc.proxy_strength = synth.at("proxy_strength").get<double>();
      if (synth.contains("proxy_noise")) sc.proxy_noise = synth.at("proxy_noise").get<double>();
      if (synth.contains("outcome_rates")) {
        const auto& rates = synth.at("outcome_rates");
        for (std::size_t o = 0; o < 3; ++o) {
          const std::string key(to_string(kAllOutcomes[o]));
          if (!rates.contains(key)) continue;
          for (std::size_t f = 0; f < 3; ++f) {
            const std::string fkey(to_string(kAllProtectedFeatures[f]));
            if (!rates.at(key).contains(fkey)) continue;
            const auto& arr = rates.at(key).at(fkey);
            sc.outcome_rates[o][f][0] = arr.at(0).get<double>();
            sc.outcome_rates[o][f][1] = arr.at(1).get<double>();
          }
        }
      }
      sc.validate();
      config.synth = sc;
    } else {
      throw ConfigError(path + ": cohort section needs 'csv' or 'synthetic'");
    }

    auto& campaign = config.campaign;
    if (j.contains("outcomes")) {
      campaign.outcomes.clear();
      for (const auto& name : j.at("outcomes")) {
        campaign.outcomes.push_back(outcome_from_string(name.get<std::string>()));
      }
    }
    if (j.contains("features")) {
      campaign.features.clear();
      for (const auto& name : j.at("features")) {
        campaign.features.push_back(
            protected_feature_from_string(name.get<std::string>()));
      }
    }
    if (j.contains("n_trials")) campaign.n_trials = j.at("n_trials").get<std::size_t>();
    if (j.contains("seed")) campaign.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("alpha")) campaign.alpha = j.at("alpha").get<double>();
    if (j.contains("bonferroni_m") && !j.at("bonferroni_m").is_null()) {
      campaign.bonferroni_m = j.at("bonferroni_m").get<std::size_t>();
    }
    if (j.contains("min_sensitivity")) {
      campaign.min_sensitivity = j.at("min_sensitivity").get<double>();
    }
    if (j.contains("threshold_rule")) {
      campaign.threshold_rule =
          ThresholdRule::parse(j.at("threshold_rule").get<std::string>());
    }
    if (j.contains("split")) {
      const auto& split = j.at("split");
      if (split.contains("train")) campaign.train_fraction = split.at("train").get<double>();
      if (split.contains("val")) campaign.val_fraction = split.at("val").get<double>();
      if (split.contains("test")) campaign.test_fraction = split.at("test").get<double>();
      if (split.contains("stratify")) campaign.stratify = split.at("stratify").get<bool>();
    }
    if (j.contains("train")) {
      const auto& train = j.at("train");
      if (train.contains("learning_rate")) campaign.train.learning_rate = train.at("learning_rate").get<double>();
      if (train.contains("epochs")) campaign.train.epochs = train.at("epochs").get<std::size_t>();
      if (train.contains("batch_size")) campaign.train.batch_size = train.at("batch_size").get<std::size_t>();
      if (train.contains("l2")) campaign.train.l2 = train.at("l2").get<double>();
      if (train.contains("penalty") && !train.at("penalty").is_null()) {
        FairnessPenalty penalty;
        const auto& p = train.at("penalty");
        if (p.contains("lambda")) penalty.lambda = p.at("lambda").get<double>();
        if (p.contains("temperature")) penalty.temperature = p.at("temperature").get<double>();
        campaign.train.penalty = penalty;
      }
    }
    if (j.contains("force_calibration")) {
      campaign.force_calibration = j.at("force_calibration").get<bool>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  config.campaign.validate();
  return config;
}

void save_campaign_config(const CampaignFileConfig& config, const std::string& path) {
  json j;
  if (config.source == CampaignFileConfig::Source::csv) {
    j["cohort"] = json{{"csv", config.csv_path}};
  } else {
    json synth;
    synth["n"] = config.synth.n;
    synth["seed"] = config.synth.seed;
    synth["male_fraction"] = config.synth.male_fraction;
    synth["senior_fraction"] = config.synth.senior_fraction;
    synth["non_white_fraction"] = config.synth.non_white_fraction;
    synth["adult_age_min"] = config.synth.adult_age_min;
    synth["adult_age_max"] = config.synth.adult_age_max;
    synth["senior_age_min"] = config.synth.senior_age_min;
    synth["senior_age_max"] = config.synth.senior_age_max;
    synth["n_features"] = config.synth.n_features;
    synth["signal_strength"] = config.synth.signal_strength;
    synth["proxy_strength"] = config.synth.proxy_strength;
    synth["proxy_noise"] = config.synth.proxy_noise;
    json rates;
    for (std::size_t o = 0; o < 3; ++o) {
      json per_outcome;
      for (std::size_t f = 0; f < 3; ++f) {
        per_outcome[std::string(to_string(kAllProtectedFeatures[f]))] =
            config.synth.outcome_rates[o][f];
      }
      rates[std::string(to_string(kAllOutcomes[o]))] = per_outcome;
    }
    synth["outcome_rates"] = rates;
    j["cohort"] = json{{"synthetic", synth}};
  }

  json outcomes = json::array();
  for (Outcome o : config.campaign.outcomes) outcomes.push_back(std::string(to_string(o)));
  j["outcomes"] = outcomes;
  json features = json::array();
  for (ProtectedFeature f : config.campaign.features) {
    features.push_back(std::string(to_string(f)));
  }
  j["features"] = features;
  j["n_trials"] = config.campaign.n_trials;
  j["seed"] = config.campaign.seed;
  j["alpha"] = config.campaign.alpha;
  if (config.campaign.bonferroni_m) {
    j["bonferroni_m"] = *config.campaign.bonferroni_m;
  } else {
    j["bonferroni_m"] = nullptr;
  }
  j["min_sensitivity"] = config.campaign.min_sensitivity;
  j["threshold_rule"] = config.campaign.threshold_rule.to_string();
  j["split"] = json{{"train", config.campaign.train_fraction},
                    {"val", config.campaign.val_fraction},
                    {"test", config.campaign.test_fraction},
                    {"stratify", config.campaign.stratify}};
  json train;
  train["learning_rate"] = config.campaign.train.learning_rate;
  train["epochs"] = config.campaign.train.epochs;
  train["batch_size"] = config.campaign.train.batch_size;
  train["l2"] = config.campaign.train.l2;
  if (config.campaign.train.penalty) {
    train["penalty"] = json{{"lambda", config.campaign.train.penalty->lambda},
                            {"temperature", config.campaign.train.penalty->temperature}};
  } else {
    train["penalty"] = nullptr;
  }
  j["train"] = train;
  j["force_calibration"] = config.campaign.force_calibration;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");
  out << j.dump(2) << '\n';
}

Cohort realize_cohort(const CampaignFileConfig& config) {
  if (config.source == CampaignFileConfig::Source::csv) {
    return load_csv(config.csv_path);
  }
  return generate_synthetic(config.synth);
}

}  // namespace fairscreen
