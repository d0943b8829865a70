#include "fairscreen/logit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "fairscreen/digest.hpp"
#include "fairscreen/error.hpp"
#include "fairscreen/rng.hpp"

namespace fairscreen {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw ConfigError("train config: learning_rate must be > 0");
  }
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(l2 >= 0.0)) throw ConfigError("train config: l2 must be >= 0");
  if (penalty) {
    if (!(penalty->lambda >= 0.0)) {
      throw ConfigError("train config: penalty lambda must be >= 0");
    }
    if (!(penalty->temperature > 0.0)) {
      throw ConfigError("train config: penalty temperature must be > 0");
    }
  }
}

std::uint64_t TrainConfig::digest() const {
  Digest d;
  d.f64(learning_rate).u64(epochs).u64(batch_size).f64(l2).u64(seed);
  if (penalty) {
    d.u64(1).u64(static_cast<std::uint64_t>(penalty->feature));
    d.f64(penalty->lambda).f64(penalty->temperature);
  } else {
    d.u64(0);
  }
  return d.value();
}

namespace {

// Stable log(1 + exp(-|z|)) + max(z, 0) - y * z form of the log-loss.
double log_loss(double z, std::uint8_t y) {
  return std::max(z, 0.0) - static_cast<double>(y) * z + std::log1p(std::exp(-std::abs(z)));
}

// Loss and gradient for one batch over a row-major standardized matrix.
// Gradient layout: n_features weights then the intercept.
double batch_loss_gradient(const std::vector<double>& matrix, std::size_t n_features,
                           const std::vector<std::uint8_t>& labels,
                           const std::uint8_t* group_of,
                           std::span<const std::size_t> batch,
                           std::span<const double> weights, double intercept,
                           double l2, double lambda, double temperature,
                           std::span<double> gradient) {
  const std::size_t rows = batch.size();
  std::fill(gradient.begin(), gradient.end(), 0.0);

  std::vector<double> probability(rows);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = matrix.data() + batch[r] * n_features;
    double z = intercept;
    for (std::size_t j = 0; j < n_features; ++j) z += weights[j] * x[j];
    probability[r] = sigmoid(z);
    loss += log_loss(z, labels[batch[r]]);
  }
  loss /= static_cast<double>(rows);

  // Disparity term: lambda * (softTPR_0 - softTPR_1)^2 over the batch's
  // positives; dropped when either group contributes none.
  std::array<double, 2> soft_sum{};
  std::array<std::size_t, 2> positive_count{};
  bool apply_penalty = false;
  if (group_of != nullptr && lambda > 0.0) {
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = batch[r];
      if (!labels[i]) continue;
      const std::size_t g = group_of[i];
      soft_sum[g] += sigmoid((probability[r] - 0.5) / temperature);
      positive_count[g] += 1;
    }
    apply_penalty = positive_count[0] > 0 && positive_count[1] > 0;
    if (apply_penalty) {
      const double gap = soft_sum[0] / static_cast<double>(positive_count[0]) -
                         soft_sum[1] / static_cast<double>(positive_count[1]);
      loss += lambda * gap * gap;
    }
  }

  const double inv_rows = 1.0 / static_cast<double>(rows);
  double gap = 0.0;
  if (apply_penalty) {
    gap = soft_sum[0] / static_cast<double>(positive_count[0]) -
          soft_sum[1] / static_cast<double>(positive_count[1]);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t i = batch[r];
    const double* x = matrix.data() + i * n_features;
    const double p = probability[r];
    double coeff = (p - static_cast<double>(labels[i])) * inv_rows;
    if (apply_penalty && labels[i]) {
      const std::size_t g = group_of[i];
      const double u = sigmoid((p - 0.5) / temperature);
      const double soft_grad = u * (1.0 - u) / temperature;  // d soft / d p
      const double sign = g == 0 ? 1.0 : -1.0;
      coeff += 2.0 * lambda * gap * sign * soft_grad * p * (1.0 - p) /
               static_cast<double>(positive_count[g]);
    }
    for (std::size_t j = 0; j < n_features; ++j) gradient[j] += coeff * x[j];
    gradient[n_features] += coeff;
  }

  for (std::size_t j = 0; j < n_features; ++j) {
    loss += l2 * weights[j] * weights[j];
    gradient[j] += 2.0 * l2 * weights[j];
  }
  return loss;
}

struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

Standardization fit_standardization(const Cohort& cohort) {
  const std::size_t k = cohort.n_features();
  const double n = static_cast<double>(cohort.size());
  Standardization s;
  s.mean.assign(k, 0.0);
  s.stddev.assign(k, 0.0);
  for (const auto& r : cohort.records) {
    for (std::size_t j = 0; j < k; ++j) s.mean[j] += r.features[j];
  }
  for (std::size_t j = 0; j < k; ++j) s.mean[j] /= n;
  for (const auto& r : cohort.records) {
    for (std::size_t j = 0; j < k; ++j) {
      const double d = r.features[j] - s.mean[j];
      s.stddev[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    s.stddev[j] = std::sqrt(s.stddev[j] / n);
    // Constant features standardize to exactly zero (the mean is pinned to
    // the observed value), which keeps their weight at its zero init.
    if (s.stddev[j] < 1e-12) {
      s.stddev[j] = 1.0;
      s.mean[j] = cohort.records.front().features[j];
    }
  }
  return s;
}

std::vector<double> standardized_matrix(const Cohort& cohort,
                                        const std::vector<double>& mean,
                                        const std::vector<double>& stddev) {
  const std::size_t k = mean.size();
  std::vector<double> matrix(cohort.size() * k);
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& f = cohort.records[i].features;
    for (std::size_t j = 0; j < k; ++j) {
      matrix[i * k + j] = (f[j] - mean[j]) / stddev[j];
    }
  }
  return matrix;
}

}  // namespace

LogitModel train(const Cohort& training, Outcome outcome,
                 const std::optional<SubgroupPartition>& groups,
                 const TrainConfig& config) {
  config.validate();
  if (training.records.empty()) throw std::invalid_argument("train: cohort is empty");
  for (const auto& r : training.records) {
    if (r.features.size() != training.n_features()) {
      throw std::invalid_argument("train: inconsistent feature vector length");
    }
  }
  const std::int64_t positives = training.positives(outcome);
  if (positives == 0 || positives == static_cast<std::int64_t>(training.size())) {
    throw std::invalid_argument("train: labels are all one class");
  }
  const bool penalized = config.penalty && config.penalty->lambda > 0.0;
  if (config.penalty && !groups) {
    throw std::invalid_argument("train: fairness penalty requires a subgroup partition");
  }
  if (groups && groups->group_of.size() != training.size()) {
    throw std::invalid_argument("train: partition does not match the cohort");
  }

  const std::size_t k = training.n_features();
  LogitModel model;
  const auto standardization = fit_standardization(training);
  model.feature_mean = standardization.mean;
  model.feature_stddev = standardization.stddev;
  model.weights.assign(k, 0.0);
  model.intercept = 0.0;
  model.train_config = config;

  const auto matrix = standardized_matrix(training, model.feature_mean, model.feature_stddev);
  const auto labels = training.label_vector(outcome);
  const std::uint8_t* group_of = penalized ? groups->group_of.data() : nullptr;
  const double lambda = penalized ? config.penalty->lambda : 0.0;
  const double temperature = penalized ? config.penalty->temperature : 1.0;

  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> gradient(k + 1);
  Rng rng(config.seed);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const double loss = batch_loss_gradient(matrix, k, labels, group_of, batch,
                                              model.weights, model.intercept,
                                              config.l2, lambda, temperature, gradient);
      if (!std::isfinite(loss)) {
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch));
      }
      for (std::size_t j = 0; j < k; ++j) {
        model.weights[j] -= config.learning_rate * gradient[j];
      }
      model.intercept -= config.learning_rate * gradient[k];
    }
  }
  return model;
}

LossGradient loss_and_gradient(const LogitModel& model, const Cohort& cohort,
                               Outcome outcome, std::span<const std::size_t> batch,
                               const std::optional<SubgroupPartition>& groups,
                               const std::optional<FairnessPenalty>& penalty) {
  if (batch.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");
  if (cohort.n_features() != model.n_features()) {
    throw std::invalid_argument("loss_and_gradient: feature length mismatch");
  }
  if (penalty && !groups) {
    throw std::invalid_argument("loss_and_gradient: penalty requires a subgroup partition");
  }
  for (std::size_t i : batch) {
    if (i >= cohort.size()) {
      throw std::invalid_argument("loss_and_gradient: batch index out of range");
    }
  }

  const auto matrix = standardized_matrix(cohort, model.feature_mean, model.feature_stddev);
  const auto labels = cohort.label_vector(outcome);
  const bool penalized = penalty && penalty->lambda > 0.0;

  LossGradient out;
  out.gradient.assign(model.n_features() + 1, 0.0);
  out.loss = batch_loss_gradient(
      matrix, model.n_features(), labels,
      penalized ? groups->group_of.data() : nullptr, batch, model.weights,
      model.intercept, model.train_config.l2, penalized ? penalty->lambda : 0.0,
      penalized ? penalty->temperature : 1.0, out.gradient);
  return out;
}

std::vector<double> predict_scores(const LogitModel& model, const Cohort& cohort) {
  if (cohort.n_features() != model.n_features()) {
    throw std::invalid_argument("predict_scores: feature length mismatch");
  }
  std::vector<double> scores;
  scores.reserve(cohort.size());
  for (const auto& r : cohort.records) {
    if (r.features.size() != model.n_features()) {
      throw std::invalid_argument("predict_scores: feature length mismatch");
    }
    double z = model.intercept;
    for (std::size_t j = 0; j < model.n_features(); ++j) {
      z += model.weights[j] * model.standardized(j, r.features[j]);
    }
    scores.push_back(sigmoid(z));
  }
  return scores;
}

void save_model(const LogitModel& model, const std::string& path) {
  json j;
  j["weights"] = model.weights;
  j["intercept"] = model.intercept;
  j["feature_mean"] = model.feature_mean;
  j["feature_stddev"] = model.feature_stddev;
  json tc;
  tc["learning_rate"] = model.train_config.learning_rate;
  tc["epochs"] = model.train_config.epochs;
  tc["batch_size"] = model.train_config.batch_size;
  tc["l2"] = model.train_config.l2;
  tc["seed"] = model.train_config.seed;
  if (model.train_config.penalty) {
    json p;
    p["feature"] = std::string(to_string(model.train_config.penalty->feature));
    p["lambda"] = model.train_config.penalty->lambda;
    p["temperature"] = model.train_config.penalty->temperature;
    tc["penalty"] = p;
  } else {
    tc["penalty"] = nullptr;
  }
  j["train_config"] = tc;
  j["train_config_digest"] = Digest::hex(model.train_config.digest());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");
  out << j.dump(2) << '\n';
}

LogitModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  LogitModel model;
  try {
    model.weights = j.at("weights").get<std::vector<double>>();
    model.intercept = j.at("intercept").get<double>();
    model.feature_mean = j.at("feature_mean").get<std::vector<double>>();
    model.feature_stddev = j.at("feature_stddev").get<std::vector<double>>();
    const auto& tc = j.at("train_config");
    model.train_config.learning_rate = tc.at("learning_rate").get<double>();
    model.train_config.epochs = tc.at("epochs").get<std::size_t>();
    model.train_config.batch_size = tc.at("batch_size").get<std::size_t>();
    model.train_config.l2 = tc.at("l2").get<double>();
    model.train_config.seed = tc.at("seed").get<std::uint64_t>();
    if (!tc.at("penalty").is_null()) {
      FairnessPenalty p;
      p.feature = protected_feature_from_string(
          tc.at("penalty").at("feature").get<std::string>());
      p.lambda = tc.at("penalty").at("lambda").get<double>();
      p.temperature = tc.at("penalty").at("temperature").get<double>();
      model.train_config.penalty = p;
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (model.weights.size() != model.feature_mean.size() ||
      model.weights.size() != model.feature_stddev.size()) {
    throw ParseError(path + ": inconsistent model dimensions");
  }
  for (double s : model.feature_stddev) {
    if (!(s > 0.0)) throw ParseError(path + ": stddev entries must be > 0");
  }
  return model;
}

}  // namespace fairscreen
