#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "fairscreen/cohort.hpp"
#include "fairscreen/error.hpp"
#include "fairscreen/fairness.hpp"
#include "fairscreen/metrics.hpp"
#include "fairscreen/rng.hpp"

using namespace fairscreen;

namespace {

// Two-group partition assembled directly from a group-id vector.
SubgroupPartition make_partition(const std::vector<std::uint8_t>& group_of) {
  SubgroupPartition partition;
  partition.feature = ProtectedFeature::sex;
  partition.group_names = group_names_for(ProtectedFeature::sex);
  partition.group_of = group_of;
  for (std::size_t i = 0; i < group_of.size(); ++i) {
    partition.groups[group_of[i]].push_back(i);
  }
  return partition;
}

// Exhaustive Youden sweep over observed scores, smallest threshold on ties.
double youden_oracle(const std::vector<double>& scores,
                     const std::vector<std::uint8_t>& labels) {
  std::vector<double> candidates = scores;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best_j = -2.0;
  double best_tau = candidates.front();
  for (double tau : candidates) {
    const auto cm = confusion(scores, labels, tau);
    const double j = sensitivity(cm) - static_cast<double>(cm.fp) /
                                           static_cast<double>(cm.negatives());
    if (j > best_j || (j == best_j && tau < best_tau)) {
      best_j = j;
      best_tau = tau;
    }
  }
  return best_tau;
}

// Largest observed positive score whose group sensitivity reaches the target.
double calibrate_oracle(const std::vector<double>& positive_scores, double target) {
  std::vector<double> sorted = positive_scores;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double best = sorted.back();
  for (double tau : sorted) {
    std::int64_t hits = 0;
    for (double s : positive_scores) hits += s >= tau ? 1 : 0;
    if (static_cast<double>(hits) / static_cast<double>(positive_scores.size()) >= target) {
      return tau;  // first (largest) sufficient threshold
    }
  }
  return best;
}

}  // namespace

TEST_CASE("threshold rule parsing") {
  CHECK(ThresholdRule::parse("youden").kind == ThresholdRule::Kind::youden);
  const auto fixed = ThresholdRule::parse("fixed:0.5");
  CHECK(fixed.kind == ThresholdRule::Kind::fixed);
  CHECK(fixed.value == 0.5);
  const auto sens = ThresholdRule::parse("sens:0.9");
  CHECK(sens.kind == ThresholdRule::Kind::target_sensitivity);
  CHECK(sens.value == 0.9);
  CHECK_THROWS_AS(ThresholdRule::parse("argmax"), ConfigError);
  CHECK_THROWS_AS(ThresholdRule::parse("fixed:1.5"), ConfigError);
  CHECK_THROWS_AS(ThresholdRule::parse("sens:0"), ConfigError);
}

TEST_CASE("youden threshold separates a separable set") {
  const std::vector<double> scores = {0.9, 0.8, 0.2, 0.1};
  const std::vector<std::uint8_t> labels = {1, 1, 0, 0};
  const auto policy = choose_naive_threshold(scores, labels, ThresholdRule{});
  CHECK(policy.kind == ThresholdPolicy::Kind::global);
  CHECK(policy.global_threshold > 0.2);
  CHECK(policy.global_threshold <= 0.8);
  const auto cm = confusion(scores, labels, policy.global_threshold);
  CHECK(sensitivity(cm) == 1.0);
  CHECK(cm.fp == 0);
}

TEST_CASE("fixed rule passes the threshold through") {
  const std::vector<double> scores = {0.9, 0.1};
  const std::vector<std::uint8_t> labels = {1, 0};
  const auto policy = choose_naive_threshold(
      scores, labels, ThresholdRule::parse("fixed:0.5"));
  CHECK(policy.kind == ThresholdPolicy::Kind::global);
  CHECK(policy.global_threshold == 0.5);
  CHECK(policy.min_sensitivity == 0.0);
}

TEST_CASE("youden matches the exhaustive sweep oracle") {
  const std::vector<double> toy_scores = {0.9, 0.7, 0.6, 0.4, 0.3, 0.1};
  const std::vector<std::uint8_t> toy_labels = {1, 0, 1, 1, 0, 0};
  CHECK(choose_naive_threshold(toy_scores, toy_labels, ThresholdRule{}).global_threshold ==
        youden_oracle(toy_scores, toy_labels));

  Rng rng(21);
  for (int round = 0; round < 50; ++round) {
    const std::size_t n = 5 + rng.next_below(80);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.next_below(12)) / 11.0;
      labels[i] = rng.next_bernoulli(0.5) ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    CHECK(choose_naive_threshold(scores, labels, ThresholdRule{}).global_threshold ==
          youden_oracle(scores, labels));
  }
}

TEST_CASE("target-sensitivity rule picks the largest sufficient threshold") {
  const std::vector<double> scores = {0.9, 0.8, 0.7, 0.6, 0.5, 0.3, 0.2};
  const std::vector<std::uint8_t> labels = {1, 1, 1, 1, 1, 0, 0};
  const auto policy = choose_naive_threshold(
      scores, labels, ThresholdRule::parse("sens:0.8"));
  CHECK(policy.global_threshold == 0.6);  // 4/5 = 0.8 exactly
  const auto strict = choose_naive_threshold(
      scores, labels, ThresholdRule::parse("sens:0.85"));
  CHECK(strict.global_threshold == 0.5);  // must step to 5/5

  ThresholdRule invalid;
  invalid.kind = ThresholdRule::Kind::target_sensitivity;
  invalid.value = 1.5;
  CHECK_THROWS_AS(choose_naive_threshold(scores, labels, invalid),
                  std::invalid_argument);
  const std::vector<std::uint8_t> no_positives(scores.size(), 0);
  CHECK_THROWS_AS(choose_naive_threshold(scores, no_positives,
                                         ThresholdRule::parse("sens:0.8")),
                  std::invalid_argument);
}

TEST_CASE("audit flags a significant recall difference") {
  // 50 positives per group scoring above/below a 0.5 threshold: recalls
  // 40/50 vs 30/50 reproduce the z-test example (p ~ 0.029).
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> group_of;
  for (int g = 0; g < 2; ++g) {
    const int hits = g == 0 ? 40 : 30;
    for (int i = 0; i < 50; ++i) {
      scores.push_back(i < hits ? 0.9 : 0.1);
      labels.push_back(1);
      group_of.push_back(static_cast<std::uint8_t>(g));
    }
    // some negatives so the stage is two-class
    scores.push_back(0.05);
    labels.push_back(0);
    group_of.push_back(static_cast<std::uint8_t>(g));
  }
  const auto partition = make_partition(group_of);
  ThresholdPolicy policy;
  policy.global_threshold = 0.5;

  const auto flagged = audit(scores, labels, partition, policy, 0.05);
  CHECK(flagged.biased);
  CHECK(flagged.group_recalls[0] == doctest::Approx(0.8));
  CHECK(flagged.group_recalls[1] == doctest::Approx(0.6));
  CHECK(flagged.test.p_value == doctest::Approx(0.029096).epsilon(1e-3));
  CHECK(flagged.ci.lo == doctest::Approx(0.0246899).epsilon(1e-4));
  CHECK(flagged.alpha_effective == 0.05);

  const auto strict = audit(scores, labels, partition, policy, 0.005);
  CHECK_FALSE(strict.biased);
}

TEST_CASE("audit reports no bias for identical recalls") {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> group_of;
  for (int g = 0; g < 2; ++g) {
    for (int i = 0; i < 20; ++i) {
      scores.push_back(i < 15 ? 0.8 : 0.2);
      labels.push_back(1);
      group_of.push_back(static_cast<std::uint8_t>(g));
    }
  }
  const auto partition = make_partition(group_of);
  ThresholdPolicy policy;
  policy.global_threshold = 0.5;
  const auto result = audit(scores, labels, partition, policy, 0.05);
  CHECK_FALSE(result.biased);
  CHECK(result.test.z == 0.0);
  CHECK(result.test.p_value == 1.0);
}

TEST_CASE("audit refuses groups with no positives") {
  const std::vector<double> scores = {0.9, 0.8, 0.3, 0.2};
  const std::vector<std::uint8_t> labels = {1, 1, 0, 0};
  const auto partition = make_partition({0, 0, 1, 1});
  ThresholdPolicy policy;
  policy.global_threshold = 0.5;
  CHECK_THROWS_AS(audit(scores, labels, partition, policy, 0.05), UntestableError);
}

TEST_CASE("calibration reproduces the worked two-group example") {
  // Group A positives score {0.9, 0.8, 0.7, 0.6, 0.5}, group B positives
  // {0.4, 0.35, 0.3, 0.25, 0.2}. With five positives each, the achievable
  // sensitivities are multiples of 0.2, so a 0.85 target forces 5/5.
  std::vector<double> scores = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.35, 0.3, 0.25, 0.2};
  std::vector<std::uint8_t> labels(10, 1);
  std::vector<std::uint8_t> group_of = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  // a negative per group keeps the stage two-class
  scores.insert(scores.end(), {0.01, 0.02});
  labels.insert(labels.end(), {0, 0});
  group_of.insert(group_of.end(), {0, 1});
  const auto partition = make_partition(group_of);

  ThresholdPolicy incoming;  // recalls 0 at threshold 0.95, so t* = 0.85
  incoming.global_threshold = 0.95;
  const auto policy =
      calibrate_equal_opportunity(scores, labels, partition, 0.85, incoming);
  CHECK(policy.kind == ThresholdPolicy::Kind::per_group);
  CHECK(policy.group_thresholds[0] == 0.5);
  CHECK(policy.group_thresholds[1] == 0.2);
  CHECK(policy.min_sensitivity == 0.85);

  const auto audit_post = audit(scores, labels, partition, policy, 0.05);
  CHECK(audit_post.group_recalls[0] >= 0.85);
  CHECK(audit_post.group_recalls[1] >= 0.85);
}

TEST_CASE("a target of 1 forces each group's minimum positive score") {
  std::vector<double> scores = {0.9, 0.6, 0.45, 0.4, 0.3, 0.05};
  std::vector<std::uint8_t> labels = {1, 1, 0, 1, 1, 0};
  std::vector<std::uint8_t> group_of = {0, 0, 0, 1, 1, 1};
  const auto partition = make_partition(group_of);
  ThresholdPolicy incoming;
  incoming.global_threshold = 0.5;
  const auto policy =
      calibrate_equal_opportunity(scores, labels, partition, 1.0, incoming);
  CHECK(policy.group_thresholds[0] == 0.6);
  CHECK(policy.group_thresholds[1] == 0.3);
}

TEST_CASE("the calibration target never degrades the best-served group") {
  // Incoming recalls: group0 = 1.0 at threshold 0.5, group1 = 0.5; the
  // target becomes max(0.85, 1.0) = 1.0.
  std::vector<double> scores = {0.9, 0.8, 0.4, 0.6, 0.2, 0.1};
  std::vector<std::uint8_t> labels = {1, 1, 0, 1, 1, 0};
  std::vector<std::uint8_t> group_of = {0, 0, 0, 1, 1, 1};
  const auto partition = make_partition(group_of);
  ThresholdPolicy incoming;
  incoming.global_threshold = 0.5;
  const auto policy =
      calibrate_equal_opportunity(scores, labels, partition, 0.85, incoming);
  CHECK(policy.min_sensitivity == 1.0);
  CHECK(policy.group_thresholds[1] == 0.2);
}

TEST_CASE("calibrated sensitivities reach the target on random inputs") {
  Rng rng(77);
  for (int round = 0; round < 50; ++round) {
    const std::size_t n = 30 + rng.next_below(200);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    std::vector<std::uint8_t> group_of(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.next_double();
      labels[i] = rng.next_bernoulli(0.5) ? 1 : 0;
      group_of[i] = rng.next_bernoulli(0.4) ? 1 : 0;
    }
    // force one positive per group
    labels[0] = 1;
    group_of[0] = 0;
    labels[1] = 1;
    group_of[1] = 1;
    const auto partition = make_partition(group_of);

    ThresholdPolicy incoming;
    incoming.global_threshold = rng.next_double();
    const double floor = 0.5 + 0.5 * rng.next_double();
    const auto policy =
        calibrate_equal_opportunity(scores, labels, partition, floor, incoming);

    const auto cms = group_confusions(scores, labels, partition, policy);
    for (std::size_t g = 0; g < 2; ++g) {
      CHECK(sensitivity(cms[g]) >= policy.min_sensitivity);
      // exact search: threshold equals the sweep oracle
      std::vector<double> positives;
      for (std::size_t i : partition.groups[g]) {
        if (labels[i]) positives.push_back(scores[i]);
      }
      CHECK(policy.group_thresholds[g] ==
            calibrate_oracle(positives, policy.min_sensitivity));
    }
    CHECK(policy.min_sensitivity >= floor);
  }
}

TEST_CASE("calibration leaves the score AUC untouched") {
  Rng rng(31);
  std::vector<double> scores(200);
  std::vector<std::uint8_t> labels(200);
  std::vector<std::uint8_t> group_of(200);
  for (std::size_t i = 0; i < 200; ++i) {
    scores[i] = rng.next_double();
    labels[i] = rng.next_bernoulli(0.4) ? 1 : 0;
    group_of[i] = rng.next_bernoulli(0.5) ? 1 : 0;
  }
  labels[0] = labels[1] = 1;
  group_of[0] = 0;
  group_of[1] = 1;
  const auto partition = make_partition(group_of);
  const double before = auc(scores, labels);
  ThresholdPolicy incoming;
  incoming.global_threshold = 0.5;
  (void)calibrate_equal_opportunity(scores, labels, partition, 0.85, incoming);
  CHECK(auc(scores, labels) == before);
}

TEST_CASE("lowering a group's threshold weakly increases its false positives") {
  Rng rng(41);
  std::vector<double> scores(300);
  std::vector<std::uint8_t> labels(300);
  std::vector<std::uint8_t> group_of(300);
  for (std::size_t i = 0; i < 300; ++i) {
    scores[i] = rng.next_double();
    labels[i] = rng.next_bernoulli(0.3) ? 1 : 0;
    group_of[i] = rng.next_bernoulli(0.5) ? 1 : 0;
  }
  labels[0] = labels[1] = 1;
  group_of[0] = 0;
  group_of[1] = 1;
  const auto partition = make_partition(group_of);

  ThresholdPolicy incoming;
  incoming.global_threshold = 0.7;
  const auto calibrated =
      calibrate_equal_opportunity(scores, labels, partition, 0.9, incoming);
  const auto pre = group_confusions(scores, labels, partition, incoming);
  const auto post = group_confusions(scores, labels, partition, calibrated);
  for (std::size_t g = 0; g < 2; ++g) {
    if (calibrated.group_thresholds[g] <= incoming.global_threshold) {
      CHECK(post[g].fp >= pre[g].fp);
      CHECK(sensitivity(post[g]) >= sensitivity(pre[g]));
    }
  }
}

TEST_CASE("apply_policy evaluates per-group thresholds") {
  const std::vector<double> scores = {0.6, 0.4, 0.35, 0.2};
  const auto partition = make_partition({0, 0, 1, 1});

  ThresholdPolicy everyone;
  everyone.global_threshold = 0.0;
  const auto all = apply_policy(scores, partition, everyone);
  CHECK(all == std::vector<std::uint8_t>{1, 1, 1, 1});

  ThresholdPolicy per_group;
  per_group.kind = ThresholdPolicy::Kind::per_group;
  per_group.feature = partition.feature;
  per_group.group_names = partition.group_names;
  per_group.group_thresholds = {0.5, 0.3};
  const auto split_decisions = apply_policy(scores, partition, per_group);
  CHECK(split_decisions == std::vector<std::uint8_t>{1, 0, 1, 0});

  ThresholdPolicy equal;
  equal.kind = ThresholdPolicy::Kind::per_group;
  equal.feature = partition.feature;
  equal.group_names = partition.group_names;
  equal.group_thresholds = {0.4, 0.4};
  ThresholdPolicy global_04;
  global_04.global_threshold = 0.4;
  CHECK(apply_policy(scores, partition, equal) ==
        apply_policy(scores, partition, global_04));

  ThresholdPolicy mismatched = per_group;
  mismatched.group_names = {"cats", "dogs"};
  CHECK_THROWS_AS(apply_policy(scores, partition, mismatched), std::invalid_argument);
}

TEST_CASE("a per-group policy restricted to one group matches its global slice") {
  Rng rng(59);
  std::vector<double> scores(120);
  std::vector<std::uint8_t> group_of(120);
  for (std::size_t i = 0; i < 120; ++i) {
    scores[i] = rng.next_double();
    group_of[i] = rng.next_bernoulli(0.5) ? 1 : 0;
  }
  const auto partition = make_partition(group_of);
  ThresholdPolicy per_group;
  per_group.kind = ThresholdPolicy::Kind::per_group;
  per_group.feature = partition.feature;
  per_group.group_names = partition.group_names;
  per_group.group_thresholds = {0.63, 0.27};

  const auto decisions = apply_policy(scores, partition, per_group);
  for (std::size_t g = 0; g < 2; ++g) {
    for (std::size_t i : partition.groups[g]) {
      CHECK(decisions[i] == (scores[i] >= per_group.group_thresholds[g] ? 1 : 0));
    }
  }
}

TEST_CASE("policy files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("fairscreen_fairness_test_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);

  ThresholdPolicy per_group;
  per_group.kind = ThresholdPolicy::Kind::per_group;
  per_group.feature = ProtectedFeature::senior;
  per_group.group_names = group_names_for(ProtectedFeature::senior);
  per_group.group_thresholds = {0.41375, 0.2625};
  per_group.min_sensitivity = 0.85;
  const std::string path = (dir / "policy.json").string();
  save_policy(per_group, path);
  const auto loaded = load_policy(path);
  CHECK(loaded.kind == ThresholdPolicy::Kind::per_group);
  CHECK(loaded.feature == ProtectedFeature::senior);
  CHECK(loaded.group_thresholds == per_group.group_thresholds);
  CHECK(loaded.min_sensitivity == per_group.min_sensitivity);

  ThresholdPolicy global;
  global.global_threshold = 0.375;
  const std::string global_path = (dir / "global.json").string();
  save_policy(global, global_path);
  CHECK(load_policy(global_path).global_threshold == 0.375);

  std::filesystem::remove_all(dir);
}
