#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fairscreen {

enum class Sex : std::uint8_t { male = 0, female = 1 };
enum class RaceGroup : std::uint8_t { white = 0, non_white = 1 };

enum class Outcome : std::uint8_t { mortality = 0, ventilator = 1, inpatient = 2 };
inline constexpr std::array<Outcome, 3> kAllOutcomes = {
    Outcome::mortality, Outcome::ventilator, Outcome::inpatient};

enum class ProtectedFeature : std::uint8_t { sex = 0, race = 1, senior = 2 };
inline constexpr std::array<ProtectedFeature, 3> kAllProtectedFeatures = {
    ProtectedFeature::sex, ProtectedFeature::race, ProtectedFeature::senior};

std::string_view to_string(Outcome o);
std::string_view to_string(ProtectedFeature f);
Outcome outcome_from_string(std::string_view name);                  // throws ConfigError
ProtectedFeature protected_feature_from_string(std::string_view name);  // throws ConfigError

/// Age at or above which a patient counts as senior.
inline constexpr int kSeniorAge = 62;

struct CohortRecord {
  std::string id;
  std::vector<double> features;
  Sex sex = Sex::male;
  RaceGroup race_group = RaceGroup::white;
  int age_years = 0;
  std::array<std::uint8_t, 3> labels{};  // indexed by Outcome

  bool label(Outcome o) const { return labels[static_cast<std::size_t>(o)] != 0; }
  bool is_senior() const { return age_years >= kSeniorAge; }
};

struct Provenance {
  enum class Kind : std::uint8_t { loaded, synthetic, resampled };
  Kind kind = Kind::loaded;
  std::uint64_t seed = 0;    // synthetic / resampled
  std::uint64_t digest = 0;  // config digest (synthetic) or parent cohort digest (resampled)
  std::string source;        // file path for loaded cohorts
};

struct Cohort {
  std::vector<CohortRecord> records;
  std::vector<std::string> feature_names;
  Provenance provenance;

  std::size_t size() const { return records.size(); }
  std::size_t n_features() const { return feature_names.size(); }

  /// Content digest over records and feature names (provenance excluded).
  std::uint64_t digest() const;

  std::vector<std::uint8_t> label_vector(Outcome o) const;
  std::int64_t positives(Outcome o) const;
};

struct SplitSpec {
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  std::optional<Outcome> stratify_on;

  void validate() const;  // fractions in (0,1), summing to 1 within 1e-9
};

struct SplitResult {
  Cohort train;
  Cohort val;
  Cohort test;
};

/// Synthetic cohort configuration. Group order in `outcome_rates` follows
/// subgroup_partition(): sex {male, female}, race {white, non_white},
/// senior {non_senior, senior}. Defaults reproduce the published marginals
/// of a four-hospital COVID-19 screening cohort (n = 21,758; 52% men,
/// 32% senior, 56% non-white; mortality 6.5%, ventilator 5.4%, inpatient
/// 40.7% overall).
struct SynthConfig {
  std::size_t n = 21758;
  double male_fraction = 0.52;
  double senior_fraction = 0.32;
  double non_white_fraction = 0.56;
  int adult_age_min = 18;
  int adult_age_max = 61;
  int senior_age_min = 62;
  int senior_age_max = 95;
  std::size_t n_features = 8;
  /// Scale of the feature-driven log-odds term; drives the attainable AUC.
  double signal_strength = 3.0;
  /// Indicator coefficient on the three demographic proxy features; 0 makes
  /// the features carry no group information at all.
  double proxy_strength = 1.0;
  /// Noise stddev on the three demographic proxy features.
  double proxy_noise = 0.15;
  std::uint64_t seed = 1;
  /// outcome_rates[outcome][feature][group] = P(label = 1 | group).
  std::array<std::array<std::array<double, 2>, 3>, 3> outcome_rates = {{
      // mortality: sex {male, female}, race {white, non_white}, senior {non, senior}
      {{{{0.0828, 0.0476}}, {{0.0703, 0.0603}}, {{0.0167, 0.1674}}}},
      // ventilator
      {{{{0.0773, 0.0326}}, {{0.0470, 0.0599}}, {{0.0300, 0.1062}}}},
      // inpatient
      {{{{0.4509, 0.3652}}, {{0.3994, 0.4126}}, {{0.2885, 0.6602}}}},
  }};

  void validate() const;  // throws ConfigError
  std::uint64_t digest() const;
};

/// Loads a cohort from CSV with the documented schema
///   id, sex, race_group, age_years, mortality, ventilator, inpatient, f1..fk
/// Rejects (with file:line context) missing columns, unparseable values,
/// unknown categories, duplicate ids and empty files; never imputes.
Cohort load_csv(const std::string& path);

/// Writes the same schema; doubles use shortest round-trip formatting so
/// save -> load reproduces the cohort bit-exactly.
void save_csv(const Cohort& cohort, const std::string& path);

/// Deterministic synthetic cohort. Protected attributes are sampled
/// independently from the configured marginals; per outcome, a latent
/// log-odds score is the sum of per-subgroup intercepts (solved by bisection
/// so realized subgroup rates match `outcome_rates`) and a standard-normal
/// feature combination scaled by signal_strength; labels are Bernoulli draws
/// of that score's logistic probability. The first three features are noisy
/// demographic proxies (sex, race, senior), the rest carry the risk signal,
/// so a logistic model can recover the latent risk.
Cohort generate_synthetic(const SynthConfig& config);

SynthConfig load_synth_config(const std::string& path);
void save_synth_config(const SynthConfig& config, const std::string& path);

/// Deterministic partition into train/val/test. Sizes land within one
/// record of the exact fractions; with stratify_on set, each part's
/// positive rate tracks the whole cohort (largest-remainder allocation of
/// positives per part).
SplitResult split(const Cohort& cohort, const SplitSpec& spec);

/// Same-size resample with replacement; provenance records the seed and the
/// parent cohort digest. Ids may repeat.
Cohort bootstrap_resample(const Cohort& cohort, std::uint64_t seed);

/// Canonical group order per protected feature: sex {male, female},
/// race {white, non_white}, senior {non_senior, senior}.
std::array<std::string, 2> group_names_for(ProtectedFeature feature);

/// Index sets of the two sides of a protected feature; disjoint and
/// exhaustive. Group 1 for `senior` is age_years >= 62.
struct SubgroupPartition {
  ProtectedFeature feature = ProtectedFeature::sex;
  std::array<std::string, 2> group_names;
  std::array<std::vector<std::size_t>, 2> groups;
  std::vector<std::uint8_t> group_of;  // per record index: 0 or 1
};

SubgroupPartition subgroup_partition(const Cohort& cohort, ProtectedFeature feature);
SubgroupPartition subgroup_partition(const Cohort& cohort, std::string_view feature);

/// Realized per-group counts, used by the generate CLI to print a marginals
/// table next to the configured targets.
struct MarginalSummary {
  std::size_t n = 0;
  // [feature][group] sizes; group order as in subgroup_partition().
  std::array<std::array<std::size_t, 2>, 3> group_sizes{};
  // [outcome] overall positives and [outcome][feature][group] positives.
  std::array<std::size_t, 3> outcome_positives{};
  std::array<std::array<std::array<std::size_t, 2>, 3>, 3> subgroup_positives{};
  int median_age = 0;
};

MarginalSummary summarize_marginals(const Cohort& cohort);

}  // namespace fairscreen
