#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairscreen/cohort.hpp"

namespace fairscreen {

/// Numerically safe logistic link; saturates at the extremes instead of
/// overflowing.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Penalty for subgroup sensitivity disparity, added to the training loss as
/// lambda * (softTPR_group0 - softTPR_group1)^2. softTPR_g is the mean over
/// the batch's positives in g of sigmoid((p - 0.5) / temperature), a smooth
/// stand-in for the post-threshold sensitivity on the probability scale.
struct FairnessPenalty {
  ProtectedFeature feature = ProtectedFeature::sex;
  double lambda = 0.0;
  double temperature = 0.1;
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  std::optional<FairnessPenalty> penalty;

  void validate() const;
  std::uint64_t digest() const;
};

struct LogitModel {
  std::vector<double> weights;  // on standardized features
  double intercept = 0.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_stddev;  // entries > 0; constant features pinned to 1
  TrainConfig train_config;

  std::size_t n_features() const { return weights.size(); }
  double standardized(std::size_t j, double value) const {
    return (value - feature_mean[j]) / feature_stddev[j];
  }
};

struct LossGradient {
  double loss = 0.0;
  /// d/d(weights..., intercept); intercept is the last entry.
  std::vector<double> gradient;
};

/// Minibatch SGD on mean log-loss + l2 * |w|^2 (+ the fairness penalty when
/// configured). Standardization is fit on the training cohort and frozen
/// into the model. Deterministic per config.seed.
LogitModel train(const Cohort& training, Outcome outcome,
                 const std::optional<SubgroupPartition>& groups,
                 const TrainConfig& config);

/// Loss and analytic gradient on one batch of cohort rows, matching what a
/// train() step uses. `batch` holds row indices into `cohort`; the penalty
/// needs `groups` built on the same cohort.
LossGradient loss_and_gradient(const LogitModel& model, const Cohort& cohort,
                               Outcome outcome, std::span<const std::size_t> batch,
                               const std::optional<SubgroupPartition>& groups,
                               const std::optional<FairnessPenalty>& penalty);

/// sigmoid(intercept + w . standardize(x)) per record.
std::vector<double> predict_scores(const LogitModel& model, const Cohort& cohort);

/// Key/value model document; weights and standardization round-trip
/// bit-exactly.
void save_model(const LogitModel& model, const std::string& path);
LogitModel load_model(const std::string& path);

}  // namespace fairscreen
