#include "fairscreen/fairness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "fairscreen/error.hpp"

namespace fairscreen {

using json = nlohmann::json;

ThresholdRule ThresholdRule::parse(std::string_view text) {
  ThresholdRule rule;
  if (text == "youden") {
    rule.kind = Kind::youden;
    return rule;
  }
  const auto parse_value = [&](std::string_view payload, const char* what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(payload.data(), payload.data() + payload.size(), v);
    if (ec != std::errc{} || ptr != payload.data() + payload.size()) {
      throw ConfigError(std::string("threshold rule: unparseable ") + what + " '" +
                        std::string(payload) + "'");
    }
    return v;
  };
  if (text.starts_with("fixed:")) {
    rule.kind = Kind::fixed;
    rule.value = parse_value(text.substr(6), "threshold");
    if (!(rule.value >= 0.0 && rule.value <= 1.0)) {
      throw ConfigError("threshold rule: fixed threshold must lie in [0, 1]");
    }
    return rule;
  }
  if (text.starts_with("sens:")) {
    rule.kind = Kind::target_sensitivity;
    rule.value = parse_value(text.substr(5), "target sensitivity");
    if (!(rule.value > 0.0 && rule.value <= 1.0)) {
      throw ConfigError("threshold rule: target sensitivity must lie in (0, 1]");
    }
    return rule;
  }
  throw ConfigError("threshold rule: expected 'youden', 'fixed:<tau>' or 'sens:<s>', got '" +
                    std::string(text) + "'");
}

std::string ThresholdRule::to_string() const {
  switch (kind) {
    case Kind::youden:
      return "youden";
    case Kind::fixed:
      return "fixed:" + std::to_string(value);
    case Kind::target_sensitivity:
      return "sens:" + std::to_string(value);
  }
  return "?";
}

namespace {

// Smallest k in [1, positives] with k / positives >= target, robust to the
// usual floating fuzz around exact multiples.
std::int64_t required_positive_count(double target, std::int64_t positives) {
  std::int64_t k = static_cast<std::int64_t>(
      std::floor(target * static_cast<double>(positives)));
  k = std::clamp<std::int64_t>(k - 1, 1, positives);
  while (k < positives &&
         static_cast<double>(k) / static_cast<double>(positives) < target) {
    ++k;
  }
  return k;
}

// Largest observed positive score at which sensitivity over `positive_scores`
// reaches the target: the k-th largest positive score.
double threshold_for_target(std::vector<double> positive_scores, double target) {
  std::sort(positive_scores.begin(), positive_scores.end(), std::greater<>());
  const auto k = required_positive_count(
      target, static_cast<std::int64_t>(positive_scores.size()));
  return positive_scores[static_cast<std::size_t>(k - 1)];
}

}  // namespace

ThresholdPolicy choose_naive_threshold(std::span<const double> scores,
                                       std::span<const std::uint8_t> labels,
                                       const ThresholdRule& rule) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("choose_naive_threshold: scores and labels differ in length");
  }
  ThresholdPolicy policy;
  policy.kind = ThresholdPolicy::Kind::global;
  policy.min_sensitivity = 0.0;

  if (rule.kind == ThresholdRule::Kind::fixed) {
    if (!(rule.value >= 0.0 && rule.value <= 1.0)) {
      throw std::invalid_argument("choose_naive_threshold: fixed threshold outside [0, 1]");
    }
    policy.global_threshold = rule.value;
    return policy;
  }
  if (rule.kind == ThresholdRule::Kind::target_sensitivity &&
      !(rule.value > 0.0 && rule.value <= 1.0)) {
    throw std::invalid_argument(
        "choose_naive_threshold: target sensitivity outside (0, 1]");
  }

  std::int64_t positives = 0;
  for (auto y : labels) positives += y ? 1 : 0;
  const std::int64_t negatives = static_cast<std::int64_t>(labels.size()) - positives;

  if (rule.kind == ThresholdRule::Kind::target_sensitivity) {
    if (positives == 0) {
      throw std::invalid_argument("choose_naive_threshold: target sensitivity needs positives");
    }
    std::vector<double> positive_scores;
    positive_scores.reserve(static_cast<std::size_t>(positives));
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (labels[i]) positive_scores.push_back(scores[i]);
    }
    policy.global_threshold = threshold_for_target(std::move(positive_scores), rule.value);
    return policy;
  }

  // Youden: sweep the observed score values from above; at threshold v (with
  // the >= rule) the counts include every record scoring >= v.
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("choose_naive_threshold: youden needs both classes");
  }
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double best_j = -2.0;
  double best_threshold = scores[order[0]];
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double value = scores[order[i]];
    while (i < order.size() && scores[order[i]] == value) {
      (labels[order[i]] ? tp : fp) += 1;
      ++i;
    }
    const double j = static_cast<double>(tp) / static_cast<double>(positives) -
                     static_cast<double>(fp) / static_cast<double>(negatives);
    // Strictly-greater keeps the smallest threshold among ties, because the
    // sweep visits thresholds in decreasing order.
    if (j >= best_j) {
      if (j > best_j || value < best_threshold) best_threshold = value;
      best_j = j;
    }
  }
  policy.global_threshold = best_threshold;
  return policy;
}

std::array<ConfusionMatrix, 2> group_confusions(std::span<const double> scores,
                                                std::span<const std::uint8_t> labels,
                                                const SubgroupPartition& partition,
                                                const ThresholdPolicy& policy) {
  if (scores.size() != labels.size() || scores.size() != partition.group_of.size()) {
    throw std::invalid_argument("group_confusions: input lengths differ");
  }
  if (policy.kind == ThresholdPolicy::Kind::per_group &&
      policy.group_names != partition.group_names) {
    throw std::invalid_argument("group_confusions: policy groups do not match the partition");
  }
  std::array<ConfusionMatrix, 2> cms{};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::size_t g = partition.group_of[i];
    const bool predicted = scores[i] >= policy.threshold_for(g);
    if (labels[i]) {
      (predicted ? cms[g].tp : cms[g].fn) += 1;
    } else {
      (predicted ? cms[g].fp : cms[g].tn) += 1;
    }
  }
  return cms;
}

BiasAudit audit(std::span<const double> scores, std::span<const std::uint8_t> labels,
                const SubgroupPartition& partition, const ThresholdPolicy& policy,
                double alpha_effective) {
  if (!(alpha_effective > 0.0 && alpha_effective < 1.0)) {
    throw std::invalid_argument("audit: alpha_effective must lie in (0, 1)");
  }
  const auto cms = group_confusions(scores, labels, partition, policy);
  for (std::size_t g = 0; g < 2; ++g) {
    if (cms[g].positives() == 0) {
      throw UntestableError("audit: group '" + partition.group_names[g] +
                            "' of feature '" + std::string(to_string(partition.feature)) +
                            "' has no positive labels");
    }
  }

  BiasAudit out;
  out.feature = partition.feature;
  out.group_names = partition.group_names;
  out.alpha_effective = alpha_effective;
  for (std::size_t g = 0; g < 2; ++g) {
    out.group_positives[g] = cms[g].positives();
    out.group_true_positives[g] = cms[g].tp;
    out.group_recalls[g] = sensitivity(cms[g]);
  }
  out.test = two_proportion_ztest(out.group_true_positives[0], out.group_positives[0],
                                  out.group_true_positives[1], out.group_positives[1]);
  out.test.alpha_effective = alpha_effective;
  out.ci = recall_diff_ci(out.group_true_positives[0], out.group_positives[0],
                          out.group_true_positives[1], out.group_positives[1], 0.95);
  out.biased = out.test.p_value < alpha_effective;
  return out;
}

ThresholdPolicy calibrate_equal_opportunity(std::span<const double> scores,
                                            std::span<const std::uint8_t> labels,
                                            const SubgroupPartition& partition,
                                            double min_sensitivity,
                                            const ThresholdPolicy& incoming) {
  if (!(min_sensitivity > 0.0 && min_sensitivity <= 1.0)) {
    throw std::invalid_argument("calibrate: min_sensitivity must lie in (0, 1]");
  }
  const auto cms = group_confusions(scores, labels, partition, incoming);
  double target = min_sensitivity;
  for (std::size_t g = 0; g < 2; ++g) {
    if (cms[g].positives() == 0) {
      throw UntestableError("calibrate: group '" + partition.group_names[g] +
                            "' of feature '" + std::string(to_string(partition.feature)) +
                            "' has no positive labels");
    }
    target = std::max(target, sensitivity(cms[g]));
  }

  ThresholdPolicy policy;
  policy.kind = ThresholdPolicy::Kind::per_group;
  policy.feature = partition.feature;
  policy.group_names = partition.group_names;
  policy.min_sensitivity = target;
  for (std::size_t g = 0; g < 2; ++g) {
    std::vector<double> positive_scores;
    for (std::size_t i : partition.groups[g]) {
      if (labels[i]) positive_scores.push_back(scores[i]);
    }
    policy.group_thresholds[g] = threshold_for_target(std::move(positive_scores), target);
  }
  return policy;
}

std::vector<std::uint8_t> apply_policy(std::span<const double> scores,
                                       const SubgroupPartition& partition,
                                       const ThresholdPolicy& policy) {
  if (scores.size() != partition.group_of.size()) {
    throw std::invalid_argument("apply_policy: partition does not cover the scores");
  }
  if (policy.kind == ThresholdPolicy::Kind::per_group &&
      policy.group_names != partition.group_names) {
    throw std::invalid_argument("apply_policy: policy groups do not match the partition");
  }
  std::vector<std::uint8_t> predictions(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    predictions[i] =
        scores[i] >= policy.threshold_for(partition.group_of[i]) ? 1 : 0;
  }
  return predictions;
}

void save_policy(const ThresholdPolicy& policy, const std::string& path) {
  json j;
  j["min_sensitivity"] = policy.min_sensitivity;
  if (policy.kind == ThresholdPolicy::Kind::global) {
    j["kind"] = "global";
    j["threshold"] = policy.global_threshold;
  } else {
    j["kind"] = "per_group";
    j["feature"] = std::string(to_string(policy.feature));
    json groups;
    for (std::size_t g = 0; g < 2; ++g) {
      groups[policy.group_names[g]] = policy.group_thresholds[g];
    }
    j["thresholds"] = groups;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");
  out << j.dump(2) << '\n';
}

ThresholdPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  ThresholdPolicy policy;
  try {
    policy.min_sensitivity = j.at("min_sensitivity").get<double>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "global") {
      policy.kind = ThresholdPolicy::Kind::global;
      policy.global_threshold = j.at("threshold").get<double>();
    } else if (kind == "per_group") {
      policy.kind = ThresholdPolicy::Kind::per_group;
      policy.feature = protected_feature_from_string(j.at("feature").get<std::string>());
      policy.group_names = group_names_for(policy.feature);
      const auto& thresholds = j.at("thresholds");
      for (std::size_t g = 0; g < 2; ++g) {
        policy.group_thresholds[g] = thresholds.at(policy.group_names[g]).get<double>();
      }
    } else {
      throw ParseError(path + ": unknown policy kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  for (std::size_t g = 0; g < 2; ++g) {
    const double t = policy.kind == ThresholdPolicy::Kind::global
                         ? policy.global_threshold
                         : policy.group_thresholds[g];
    if (!(t >= 0.0 && t <= 1.0)) {
      throw ParseError(path + ": thresholds must lie in [0, 1]");
    }
  }
  return policy;
}

}  // namespace fairscreen
