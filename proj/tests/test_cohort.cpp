#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "fairscreen/cohort.hpp"
#include "fairscreen/error.hpp"
#include "fairscreen/rng.hpp"

using namespace fairscreen;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("fairscreen_cohort_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string write_file(const TempDir& dir, const std::string& name,
                       const std::string& text) {
  const std::string path = dir.file(name);
  std::ofstream out(path, std::ios::binary);
  out << text;
  return path;
}

const char* kValidCsv =
    "id,sex,race_group,age_years,mortality,ventilator,inpatient,f1,f2\n"
    "a1,male,white,45,0,0,1,0.5,-1.25\n"
    "a2,female,non_white,70,1,0,1,2.0,0.125\n"
    "a3,male,non_white,62,0,1,0,-0.75,3.5\n"
    "a4,female,white,33,0,0,0,0.0,1.0\n";

}  // namespace

TEST_CASE("load_csv parses a valid file") {
  TempDir dir;
  const Cohort cohort = load_csv(write_file(dir, "ok.csv", kValidCsv));
  CHECK(cohort.size() == 4);
  CHECK(cohort.feature_names == std::vector<std::string>{"f1", "f2"});
  CHECK(cohort.records[0].id == "a1");
  CHECK(cohort.records[0].sex == Sex::male);
  CHECK(cohort.records[1].race_group == RaceGroup::non_white);
  CHECK(cohort.records[1].label(Outcome::mortality));
  CHECK(cohort.records[2].age_years == 62);
  CHECK(cohort.records[2].is_senior());
  CHECK(cohort.records[3].features == std::vector<double>{0.0, 1.0});
  CHECK(cohort.provenance.kind == Provenance::Kind::loaded);
}

TEST_CASE("load_csv echoes feature names from the header") {
  TempDir dir;
  std::string text = "id,sex,race_group,age_years,mortality,ventilator,inpatient,f1,f2,f3,f4,f5\n";
  text += "r1,male,white,40,0,0,0,1,2,3,4,5\n";
  const Cohort cohort = load_csv(write_file(dir, "five.csv", text));
  CHECK(cohort.feature_names == std::vector<std::string>{"f1", "f2", "f3", "f4", "f5"});
  CHECK(cohort.records[0].features.size() == 5);
}

TEST_CASE("load_csv rejects malformed inputs with location context") {
  TempDir dir;

  const std::string unknown_sex =
      "id,sex,race_group,age_years,mortality,ventilator,inpatient,f1\n"
      "a1,male,white,45,0,0,1,0.5\n"
      "a2,unknown,white,50,0,0,0,1.5\n";
  try {
    load_csv(write_file(dir, "sex.csv", unknown_sex));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string message = e.what();
    CHECK(message.find(":3:") != std::string::npos);
    CHECK(message.find("sex") != std::string::npos);
    CHECK(message.find("unknown") != std::string::npos);
  }

  const std::string missing_column =
      "id,sex,race_group,age_years,mortality,ventilator,f1\n"
      "a1,male,white,45,0,0,0.5\n";
  CHECK_THROWS_AS(load_csv(write_file(dir, "missing.csv", missing_column)), ParseError);

  const std::string bad_feature =
      "id,sex,race_group,age_years,mortality,ventilator,inpatient,f1\n"
      "a1,male,white,45,0,0,1,abc\n";
  CHECK_THROWS_AS(load_csv(write_file(dir, "feat.csv", bad_feature)), ParseError);

  const std::string bad_label =
      "id,sex,race_group,age_years,mortality,ventilator,inpatient,f1\n"
      "a1,male,white,45,2,0,1,0.5\n";
  CHECK_THROWS_AS(load_csv(write_file(dir, "label.csv", bad_label)), ParseError);

  const std::string negative_age =
      "id,sex,race_group,age_years,mortality,ventilator,inpatient,f1\n"
      "a1,male,white,-3,0,0,1,0.5\n";
  CHECK_THROWS_AS(load_csv(write_file(dir, "age.csv", negative_age)), ParseError);

  const std::string duplicate_id =
      "id,sex,race_group,age_years,mortality,ventilator,inpatient,f1\n"
      "a1,male,white,45,0,0,1,0.5\n"
      "a1,female,white,50,0,0,0,1.5\n";
  CHECK_THROWS_AS(load_csv(write_file(dir, "dup.csv", duplicate_id)), ParseError);

  const std::string short_row =
      "id,sex,race_group,age_years,mortality,ventilator,inpatient,f1\n"
      "a1,male,white,45,0,0,1\n";
  CHECK_THROWS_AS(load_csv(write_file(dir, "short.csv", short_row)), ParseError);

  CHECK_THROWS_AS(load_csv(write_file(dir, "empty.csv", "")), ParseError);
  CHECK_THROWS_AS(load_csv(write_file(
                      dir, "headeronly.csv",
                      "id,sex,race_group,age_years,mortality,ventilator,inpatient,f1\n")),
                  ParseError);
  CHECK_THROWS_AS(load_csv(dir.file("does_not_exist.csv")), ParseError);
}

TEST_CASE("save then load reproduces the cohort bit-exactly") {
  TempDir dir;
  SynthConfig config;
  config.n = 500;
  config.seed = 99;
  const Cohort cohort = generate_synthetic(config);
  const std::string path = dir.file("roundtrip.csv");
  save_csv(cohort, path);
  const Cohort loaded = load_csv(path);
  CHECK(loaded.digest() == cohort.digest());

  const std::string again = dir.file("roundtrip2.csv");
  save_csv(loaded, again);
  std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
  std::string text_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string text_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(text_a == text_b);
}

TEST_CASE("generate_synthetic hits the configured marginals") {
  SynthConfig config;  // defaults mirror the published cohort
  const Cohort cohort = generate_synthetic(config);
  CHECK(cohort.size() == 21758);
  CHECK(cohort.provenance.kind == Provenance::Kind::synthetic);

  const MarginalSummary s = summarize_marginals(cohort);
  const double n = static_cast<double>(s.n);
  CHECK(std::abs(s.group_sizes[0][0] / n - 0.52) < 0.02);  // male
  CHECK(std::abs(s.group_sizes[1][1] / n - 0.56) < 0.02);  // non_white
  CHECK(std::abs(s.group_sizes[2][1] / n - 0.32) < 0.02);  // senior
  CHECK(s.median_age >= 48);
  CHECK(s.median_age <= 52);

  // Per-subgroup outcome rates within two percentage points for large groups.
  for (std::size_t o = 0; o < 3; ++o) {
    const auto partitions_rate = [&](std::size_t f, std::size_t g) {
      return static_cast<double>(s.subgroup_positives[o][f][g]) /
             static_cast<double>(s.group_sizes[f][g]);
    };
    for (std::size_t f = 0; f < 3; ++f) {
      for (std::size_t g = 0; g < 2; ++g) {
        if (s.group_sizes[f][g] < 1000) continue;
        CHECK(std::abs(partitions_rate(f, g) - config.outcome_rates[o][f][g]) < 0.02);
      }
    }
  }
}

TEST_CASE("generate_synthetic marginals converge over seeds") {
  SynthConfig config;
  double mad_male = 0.0, mad_senior = 0.0, mad_nonwhite = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    config.seed = seed;
    const Cohort cohort = generate_synthetic(config);
    const MarginalSummary s = summarize_marginals(cohort);
    const double n = static_cast<double>(s.n);
    mad_male += std::abs(s.group_sizes[0][0] / n - config.male_fraction) / 10.0;
    mad_nonwhite += std::abs(s.group_sizes[1][1] / n - config.non_white_fraction) / 10.0;
    mad_senior += std::abs(s.group_sizes[2][1] / n - config.senior_fraction) / 10.0;
  }
  CHECK(mad_male < 0.01);
  CHECK(mad_senior < 0.01);
  CHECK(mad_nonwhite < 0.01);
}

TEST_CASE("generate_synthetic handles degenerate rates and bad configs") {
  SynthConfig config;
  config.n = 5000;
  for (auto& per_feature : config.outcome_rates[0]) per_feature = {0.0, 0.0};
  const Cohort cohort = generate_synthetic(config);
  CHECK(cohort.positives(Outcome::mortality) == 0);
  CHECK(cohort.positives(Outcome::ventilator) > 0);

  SynthConfig zero;
  zero.n = 0;
  CHECK_THROWS_AS(generate_synthetic(zero), ConfigError);

  SynthConfig bad_rate;
  bad_rate.outcome_rates[1][2][0] = 1.5;
  CHECK_THROWS_AS(generate_synthetic(bad_rate), ConfigError);

  SynthConfig bad_fraction;
  bad_fraction.male_fraction = -0.1;
  CHECK_THROWS_AS(generate_synthetic(bad_fraction), ConfigError);
}

TEST_CASE("generate_synthetic is deterministic per seed") {
  SynthConfig config;
  config.n = 2000;
  config.seed = 1234;
  const Cohort a = generate_synthetic(config);
  const Cohort b = generate_synthetic(config);
  CHECK(a.digest() == b.digest());

  config.seed = 1235;
  const Cohort c = generate_synthetic(config);
  CHECK(c.digest() != a.digest());
}

TEST_CASE("synth config round-trips through its file form") {
  TempDir dir;
  SynthConfig config;
  config.n = 4242;
  config.seed = 77;
  config.signal_strength = 2.25;
  config.outcome_rates[2][1][0] = 0.333;
  const std::string path = dir.file("synth.json");
  save_synth_config(config, path);
  const SynthConfig loaded = load_synth_config(path);
  CHECK(loaded.digest() == config.digest());

  write_file(dir, "unknown.json", "{\"m\": 3}");
  CHECK_THROWS_AS(load_synth_config(dir.file("unknown.json")), ConfigError);
  write_file(dir, "broken.json", "{");
  CHECK_THROWS_AS(load_synth_config(dir.file("broken.json")), ParseError);
}

TEST_CASE("split produces exact fractions on round counts") {
  SynthConfig config;
  config.n = 100;
  const Cohort cohort = generate_synthetic(config);
  SplitSpec spec;
  spec.seed = 5;
  const SplitResult parts = split(cohort, spec);
  CHECK(parts.train.size() == 60);
  CHECK(parts.val.size() == 20);
  CHECK(parts.test.size() == 20);
}

TEST_CASE("split sizes stay within one record of the fractions") {
  SynthConfig config;
  Rng rng(8);
  for (int round = 0; round < 30; ++round) {
    config.n = 10 + rng.next_below(400);
    config.seed = rng.next_u64();
    const Cohort cohort = generate_synthetic(config);
    SplitSpec spec;
    spec.seed = rng.next_u64();
    if (round % 2 == 0) spec.stratify_on = Outcome::inpatient;
    const SplitResult parts = split(cohort, spec);
    const double n = static_cast<double>(cohort.size());
    CHECK(std::abs(static_cast<double>(parts.train.size()) - 0.6 * n) <= 1.0);
    CHECK(std::abs(static_cast<double>(parts.val.size()) - 0.2 * n) <= 1.0);
    CHECK(std::abs(static_cast<double>(parts.test.size()) - 0.2 * n) <= 1.0);
    CHECK(parts.train.size() + parts.val.size() + parts.test.size() == cohort.size());
  }
}

TEST_CASE("stratified split tracks the outcome prevalence per part") {
  SynthConfig config;
  config.n = 1000;
  config.seed = 17;
  // Outcome rate around 10% everywhere.
  for (auto& per_feature : config.outcome_rates[0]) per_feature = {0.1, 0.1};
  const Cohort cohort = generate_synthetic(config);
  const double whole =
      static_cast<double>(cohort.positives(Outcome::mortality)) / 1000.0;

  SplitSpec spec;
  spec.seed = 3;
  spec.stratify_on = Outcome::mortality;
  const SplitResult parts = split(cohort, spec);
  for (const Cohort* part : {&parts.train, &parts.val, &parts.test}) {
    const double rate = static_cast<double>(part->positives(Outcome::mortality)) /
                        static_cast<double>(part->size());
    CHECK(std::abs(rate - whole) < 0.02);
  }
}

TEST_CASE("split is a deterministic partition of the input") {
  SynthConfig config;
  config.n = 257;
  const Cohort cohort = generate_synthetic(config);
  SplitSpec spec;
  spec.seed = 11;
  spec.stratify_on = Outcome::ventilator;
  const SplitResult a = split(cohort, spec);
  const SplitResult b = split(cohort, spec);
  CHECK(a.train.digest() == b.train.digest());
  CHECK(a.val.digest() == b.val.digest());
  CHECK(a.test.digest() == b.test.digest());

  // Concatenating the parts reproduces the multiset of input ids.
  std::multiset<std::string> original;
  for (const auto& r : cohort.records) original.insert(r.id);
  std::multiset<std::string> recombined;
  for (const Cohort* part : {&a.train, &a.val, &a.test}) {
    for (const auto& r : part->records) recombined.insert(r.id);
  }
  CHECK(original == recombined);
}

TEST_CASE("split rejects degenerate inputs") {
  SynthConfig config;
  config.n = 9;
  CHECK_THROWS_AS(split(generate_synthetic(config), SplitSpec{}), ConfigError);

  config.n = 100;
  const Cohort cohort = generate_synthetic(config);
  SplitSpec tiny;
  tiny.train_fraction = 0.998;
  tiny.val_fraction = 0.001;
  tiny.test_fraction = 0.001;
  CHECK_THROWS_AS(split(cohort, tiny), ConfigError);

  SplitSpec bad_sum;
  bad_sum.train_fraction = 0.5;
  CHECK_THROWS_AS(bad_sum.validate(), ConfigError);
}

TEST_CASE("bootstrap_resample draws with replacement at fixed size") {
  SynthConfig config;
  config.n = 1000;
  config.seed = 2;
  const Cohort cohort = generate_synthetic(config);

  const Cohort resample = bootstrap_resample(cohort, 7);
  CHECK(resample.size() == cohort.size());
  CHECK(resample.provenance.kind == Provenance::Kind::resampled);
  CHECK(resample.provenance.seed == 7);
  CHECK(resample.provenance.digest == cohort.digest());
  CHECK(bootstrap_resample(cohort, 7).digest() == resample.digest());
  CHECK(bootstrap_resample(cohort, 8).digest() != resample.digest());

  Cohort single;
  single.feature_names = cohort.feature_names;
  single.records = {cohort.records[0]};
  const Cohort forced = bootstrap_resample(single, 123);
  CHECK(forced.size() == 1);
  CHECK(forced.records[0].id == cohort.records[0].id);

  CHECK_THROWS_AS(bootstrap_resample(Cohort{}, 1), ConfigError);
}

TEST_CASE("bootstrap distinct-id fraction approaches 1 - 1/e") {
  SynthConfig config;
  config.n = 1000;
  config.seed = 4;
  const Cohort cohort = generate_synthetic(config);
  double mean_distinct = 0.0;
  const int rounds = 200;
  for (int seed = 0; seed < rounds; ++seed) {
    const Cohort resample = bootstrap_resample(cohort, static_cast<std::uint64_t>(seed));
    std::set<std::string> distinct;
    for (const auto& r : resample.records) distinct.insert(r.id);
    mean_distinct += static_cast<double>(distinct.size()) / 1000.0 / rounds;
  }
  CHECK(std::abs(mean_distinct - (1.0 - std::exp(-1.0))) < 0.01);
}

TEST_CASE("subgroup_partition splits on the senior boundary") {
  Cohort cohort;
  cohort.feature_names = {"f1"};
  for (int age : {30, 62, 70}) {
    CohortRecord r;
    r.id = "a" + std::to_string(age);
    r.features = {0.0};
    r.age_years = age;
    cohort.records.push_back(r);
  }
  const auto partition = subgroup_partition(cohort, ProtectedFeature::senior);
  CHECK(partition.group_names[0] == "non_senior");
  CHECK(partition.groups[0] == std::vector<std::size_t>{0});
  CHECK(partition.groups[1] == std::vector<std::size_t>{1, 2});
}

TEST_CASE("subgroup_partition covers degenerate and mixed cohorts") {
  Cohort all_female;
  all_female.feature_names = {"f1"};
  for (int i = 0; i < 5; ++i) {
    CohortRecord r;
    r.id = "f" + std::to_string(i);
    r.features = {0.0};
    r.sex = Sex::female;
    all_female.records.push_back(r);
  }
  const auto by_sex = subgroup_partition(all_female, ProtectedFeature::sex);
  CHECK(by_sex.groups[0].empty());
  CHECK(by_sex.groups[1].size() == 5);

  SynthConfig config;
  config.n = 500;
  const Cohort mixed = generate_synthetic(config);
  for (ProtectedFeature feature : kAllProtectedFeatures) {
    const auto partition = subgroup_partition(mixed, feature);
    CHECK(partition.groups[0].size() + partition.groups[1].size() == mixed.size());
    std::vector<std::uint8_t> seen(mixed.size(), 0);
    for (std::size_t g = 0; g < 2; ++g) {
      for (std::size_t i : partition.groups[g]) {
        CHECK(seen[i] == 0);
        seen[i] = 1;
        CHECK(partition.group_of[i] == g);
      }
    }
  }

  CHECK_THROWS_AS(subgroup_partition(mixed, "age"), ConfigError);
  CHECK(subgroup_partition(mixed, "senior").feature == ProtectedFeature::senior);
}
