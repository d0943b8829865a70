#include <benchmark/benchmark.h>

#include <vector>

#include "fairscreen/cohort.hpp"
#include "fairscreen/fairness.hpp"
#include "fairscreen/logit.hpp"
#include "fairscreen/metrics.hpp"
#include "fairscreen/rng.hpp"
#include "fairscreen/trials.hpp"

using namespace fairscreen;

namespace {

Cohort default_cohort(std::size_t n) {
  SynthConfig config;
  config.n = n;
  config.seed = 1;
  return generate_synthetic(config);
}

void BM_generate_synthetic(benchmark::State& state) {
  SynthConfig config;
  config.n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_synthetic(config));
  }
}
BENCHMARK(BM_generate_synthetic)->Arg(21758)->Unit(benchmark::kMillisecond);

void BM_bootstrap_resample(benchmark::State& state) {
  const Cohort cohort = default_cohort(21758);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bootstrap_resample(cohort, seed++));
  }
}
BENCHMARK(BM_bootstrap_resample)->Unit(benchmark::kMillisecond);

void BM_auc(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<double> scores(n);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.next_double();
    labels[i] = rng.next_bernoulli(0.3) ? 1 : 0;
  }
  labels[0] = 1;
  labels[1] = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(auc(scores, labels));
  }
}
BENCHMARK(BM_auc)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_train(benchmark::State& state) {
  const Cohort cohort = default_cohort(13000);
  TrainConfig config;
  config.epochs = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(train(cohort, Outcome::inpatient, std::nullopt, config));
  }
}
BENCHMARK(BM_train)->Arg(1)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_calibrate(benchmark::State& state) {
  const Cohort cohort = default_cohort(21758);
  TrainConfig train_config;
  const LogitModel model = train(cohort, Outcome::inpatient, std::nullopt, train_config);
  const auto scores = predict_scores(model, cohort);
  const auto labels = cohort.label_vector(Outcome::inpatient);
  const auto partition = subgroup_partition(cohort, ProtectedFeature::senior);
  const auto naive = choose_naive_threshold(scores, labels, ThresholdRule{});
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        calibrate_equal_opportunity(scores, labels, partition, 0.85, naive));
  }
}
BENCHMARK(BM_calibrate)->Unit(benchmark::kMillisecond);

void BM_run_trial(benchmark::State& state) {
  const Cohort cohort = default_cohort(8000);
  CampaignConfig config;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_trial(cohort, Outcome::inpatient,
                                       ProtectedFeature::senior, seed++, config));
  }
}
BENCHMARK(BM_run_trial)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
