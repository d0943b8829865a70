#include "fairscreen/cohort.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fairscreen/digest.hpp"
#include "fairscreen/error.hpp"
#include "fairscreen/logit.hpp"
#include "fairscreen/rng.hpp"

namespace fairscreen {

using json = nlohmann::json;

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::mortality: return "mortality";
    case Outcome::ventilator: return "ventilator";
    case Outcome::inpatient: return "inpatient";
  }
  return "?";
}

std::string_view to_string(ProtectedFeature f) {
  switch (f) {
    case ProtectedFeature::sex: return "sex";
    case ProtectedFeature::race: return "race";
    case ProtectedFeature::senior: return "senior";
  }
  return "?";
}

Outcome outcome_from_string(std::string_view name) {
  for (Outcome o : kAllOutcomes) {
    if (to_string(o) == name) return o;
  }
  throw ConfigError("unknown outcome '" + std::string(name) +
                    "' (expected mortality, ventilator or inpatient)");
}

ProtectedFeature protected_feature_from_string(std::string_view name) {
  for (ProtectedFeature f : kAllProtectedFeatures) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown protected feature '" + std::string(name) +
                    "' (expected sex, race or senior)");
}

std::uint64_t Cohort::digest() const {
  Digest d;
  d.u64(records.size());
  d.u64(feature_names.size());
  for (const auto& name : feature_names) d.str(name);
  for (const auto& r : records) {
    d.str(r.id);
    d.u64(static_cast<std::uint64_t>(r.sex));
    d.u64(static_cast<std::uint64_t>(r.race_group));
    d.i64(r.age_years);
    for (auto l : r.labels) d.u64(l);
    for (double f : r.features) d.f64(f);
  }
  return d.value();
}

std::vector<std::uint8_t> Cohort::label_vector(Outcome o) const {
  std::vector<std::uint8_t> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out[i] = records[i].label(o) ? 1 : 0;
  }
  return out;
}

std::int64_t Cohort::positives(Outcome o) const {
  std::int64_t count = 0;
  for (const auto& r : records) count += r.label(o) ? 1 : 0;
  return count;
}

void SplitSpec::validate() const {
  for (double f : {train_fraction, val_fraction, test_fraction}) {
    if (!(f > 0.0 && f < 1.0)) {
      throw ConfigError("split fractions must each lie in (0, 1)");
    }
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

void SynthConfig::validate() const {
  if (n == 0) throw ConfigError("synthetic config: n must be >= 1");
  auto check_fraction = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError(std::string("synthetic config: ") + name +
                        " must lie in [0, 1]");
    }
  };
  check_fraction(male_fraction, "male_fraction");
  check_fraction(senior_fraction, "senior_fraction");
  check_fraction(non_white_fraction, "non_white_fraction");
  if (adult_age_min < 0 || adult_age_max < adult_age_min ||
      adult_age_max >= kSeniorAge) {
    throw ConfigError("synthetic config: adult age range must satisfy 0 <= min <= max < 62");
  }
  if (senior_age_min < kSeniorAge || senior_age_max < senior_age_min) {
    throw ConfigError("synthetic config: senior age range must satisfy 62 <= min <= max");
  }
  if (n_features == 0) throw ConfigError("synthetic config: n_features must be >= 1");
  if (!(signal_strength >= 0.0)) {
    throw ConfigError("synthetic config: signal_strength must be >= 0");
  }
  if (!(proxy_strength >= 0.0)) {
    throw ConfigError("synthetic config: proxy_strength must be >= 0");
  }
  if (!(proxy_noise >= 0.0)) {
    throw ConfigError("synthetic config: proxy_noise must be >= 0");
  }
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t f = 0; f < 3; ++f) {
      for (std::size_t g = 0; g < 2; ++g) {
        const double r = outcome_rates[o][f][g];
        if (!(r >= 0.0 && r <= 1.0)) {
          std::ostringstream msg;
          msg << "synthetic config: outcome_rates." << to_string(kAllOutcomes[o])
              << "." << to_string(kAllProtectedFeatures[f]) << "[" << g
              << "] must lie in [0, 1]";
          throw ConfigError(msg.str());
        }
      }
    }
  }
}

std::uint64_t SynthConfig::digest() const {
  Digest d;
  d.u64(n).f64(male_fraction).f64(senior_fraction).f64(non_white_fraction);
  d.i64(adult_age_min).i64(adult_age_max).i64(senior_age_min).i64(senior_age_max);
  d.u64(n_features).f64(signal_strength).f64(proxy_strength).f64(proxy_noise).u64(seed);
  for (const auto& per_outcome : outcome_rates) {
    for (const auto& per_feature : per_outcome) {
      for (double r : per_feature) d.f64(r);
    }
  }
  return d.value();
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, 7> kFixedColumns = {
    "id", "sex", "race_group", "age_years", "mortality", "ventilator", "inpatient"};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no,
                             const std::string& message) {
  std::ostringstream msg;
  msg << path << ":" << line_no << ": " << message;
  throw ParseError(msg.str());
}

double parse_real(const std::string& path, std::size_t line_no,
                  const std::string& column, const std::string& value) {
  double out = 0.0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last || !std::isfinite(out)) {
    parse_fail(path, line_no,
               "column '" + column + "': unparseable value '" + value + "'");
  }
  return out;
}

int parse_age(const std::string& path, std::size_t line_no, const std::string& value) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || out < 0) {
    parse_fail(path, line_no,
               "column 'age_years': expected non-negative integer, got '" + value + "'");
  }
  return out;
}

std::uint8_t parse_label(const std::string& path, std::size_t line_no,
                         const std::string& column, const std::string& value) {
  if (value == "0") return 0;
  if (value == "1") return 1;
  parse_fail(path, line_no, "column '" + column + "': expected 0 or 1, got '" + value + "'");
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

Cohort load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_line(line);
  if (header.size() < kFixedColumns.size() + 1) {
    parse_fail(path, line_no,
               "header must be id,sex,race_group,age_years,mortality,ventilator,"
               "inpatient followed by at least one feature column");
  }
  for (std::size_t i = 0; i < kFixedColumns.size(); ++i) {
    if (header[i] != kFixedColumns[i]) {
      parse_fail(path, line_no,
                 "missing column: expected '" + std::string(kFixedColumns[i]) +
                     "' at position " + std::to_string(i + 1) + ", found '" +
                     header[i] + "'");
    }
  }

  Cohort cohort;
  cohort.provenance.kind = Provenance::Kind::loaded;
  cohort.provenance.source = path;
  cohort.feature_names.assign(header.begin() + kFixedColumns.size(), header.end());
  for (std::size_t i = 0; i < cohort.feature_names.size(); ++i) {
    if (cohort.feature_names[i].empty()) {
      parse_fail(path, line_no,
                 "feature column " + std::to_string(i + 1) + " has an empty name");
    }
  }

  std::vector<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    const auto fields = split_line(line);
    if (fields.size() != header.size()) {
      parse_fail(path, line_no,
                 "expected " + std::to_string(header.size()) + " fields, found " +
                     std::to_string(fields.size()));
    }

    CohortRecord r;
    r.id = fields[0];
    if (r.id.empty()) parse_fail(path, line_no, "column 'id': empty identifier");

    if (fields[1] == "male") {
      r.sex = Sex::male;
    } else if (fields[1] == "female") {
      r.sex = Sex::female;
    } else {
      parse_fail(path, line_no, "column 'sex': unknown category '" + fields[1] + "'");
    }

    if (fields[2] == "white") {
      r.race_group = RaceGroup::white;
    } else if (fields[2] == "non_white") {
      r.race_group = RaceGroup::non_white;
    } else {
      parse_fail(path, line_no,
                 "column 'race_group': unknown category '" + fields[2] + "'");
    }

    r.age_years = parse_age(path, line_no, fields[3]);
    r.labels[0] = parse_label(path, line_no, "mortality", fields[4]);
    r.labels[1] = parse_label(path, line_no, "ventilator", fields[5]);
    r.labels[2] = parse_label(path, line_no, "inpatient", fields[6]);

    r.features.reserve(cohort.feature_names.size());
    for (std::size_t i = kFixedColumns.size(); i < fields.size(); ++i) {
      r.features.push_back(
          parse_real(path, line_no, header[i], fields[i]));
    }
    cohort.records.push_back(std::move(r));
  }

  if (cohort.records.empty()) parse_fail(path, line_no, "no data rows");

  // Loaded cohorts must have unique ids (bootstrap resamples may repeat them).
  std::vector<std::string_view> ids;
  ids.reserve(cohort.records.size());
  for (const auto& r : cohort.records) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  const auto dup = std::adjacent_find(ids.begin(), ids.end());
  if (dup != ids.end()) {
    throw ParseError(path + ": duplicate id '" + std::string(*dup) + "'");
  }
  return cohort;
}

void save_csv(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");

  std::string buf;
  buf.reserve(256);
  buf = "id,sex,race_group,age_years,mortality,ventilator,inpatient";
  for (const auto& name : cohort.feature_names) {
    buf += ',';
    buf += name;
  }
  buf += '\n';
  out << buf;

  for (const auto& r : cohort.records) {
    buf.clear();
    buf += r.id;
    buf += r.sex == Sex::male ? ",male," : ",female,";
    buf += r.race_group == RaceGroup::white ? "white," : "non_white,";
    buf += std::to_string(r.age_years);
    for (auto l : r.labels) {
      buf += ',';
      buf += l ? '1' : '0';
    }
    for (double f : r.features) {
      buf += ',';
      append_double(buf, f);
    }
    buf += '\n';
    out << buf;
  }
  if (!out) throw Error(path + ": write failed");
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

namespace {

// Quadrature nodes/weights for E[f(T)], T ~ N(0,1): midpoint rule over
// [-8, 8] with normalized pdf weights. Plenty for sigmoid-smooth integrands.
struct NormalQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit NormalQuadrature(int count) {
    nodes.resize(static_cast<std::size_t>(count));
    weights.resize(static_cast<std::size_t>(count));
    const double span = 8.0;
    const double h = 2.0 * span / count;
    double sum = 0.0;
    for (int i = 0; i < count; ++i) {
      const double t = -span + (i + 0.5) * h;
      const double w = std::exp(-0.5 * t * t);
      nodes[static_cast<std::size_t>(i)] = t;
      weights[static_cast<std::size_t>(i)] = w;
      sum += w;
    }
    for (auto& w : weights) w /= sum;
  }
};

constexpr double kOffsetLo = -60.0;
constexpr double kOffsetHi = 60.0;

double clamped_logit(double p) {
  if (p <= 0.0) return kOffsetLo;
  if (p >= 1.0) return kOffsetHi;
  return std::clamp(std::log(p / (1.0 - p)), -25.0, 25.0);
}

// Per-subgroup intercepts for one outcome, solved so the model's conditional
// positive rates match the targets. Gauss-Seidel over the six intercepts,
// one guarded bisection each; targets are first rescaled to share a common
// implied overall rate so an exact fixed point exists.
std::array<std::array<double, 2>, 3> solve_group_offsets(
    std::array<std::array<double, 2>, 3> targets,
    const std::array<double, 3>& group1_prob, double signal,
    const NormalQuadrature& quad) {
  std::array<double, 3> implied{};
  double mean_implied = 0.0;
  for (std::size_t d = 0; d < 3; ++d) {
    implied[d] =
        targets[d][0] * (1.0 - group1_prob[d]) + targets[d][1] * group1_prob[d];
    mean_implied += implied[d] / 3.0;
  }
  for (std::size_t d = 0; d < 3; ++d) {
    if (implied[d] > 0.0) {
      const double scale = mean_implied / implied[d];
      targets[d][0] = std::min(1.0, targets[d][0] * scale);
      targets[d][1] = std::min(1.0, targets[d][1] * scale);
    }
  }

  std::array<std::array<double, 2>, 3> theta{};
  for (std::size_t d = 0; d < 3; ++d) {
    for (std::size_t g = 0; g < 2; ++g) {
      // Initialize near the answer: logit(target) minus the other dimensions'
      // expected contribution (zero at start).
      theta[d][g] = clamped_logit(targets[d][g]);
    }
  }

  // Conditional rate for group g of dimension d, marginalized over the other
  // two dimensions and the feature noise.
  const auto rate = [&](std::size_t d, std::size_t g) {
    const std::size_t d1 = (d + 1) % 3;
    const std::size_t d2 = (d + 2) % 3;
    double total = 0.0;
    for (std::size_t g1 = 0; g1 < 2; ++g1) {
      for (std::size_t g2 = 0; g2 < 2; ++g2) {
        const double weight =
            (g1 ? group1_prob[d1] : 1.0 - group1_prob[d1]) *
            (g2 ? group1_prob[d2] : 1.0 - group1_prob[d2]);
        const double base = theta[d][g] + theta[d1][g1] + theta[d2][g2];
        double inner = 0.0;
        for (std::size_t q = 0; q < quad.nodes.size(); ++q) {
          inner += quad.weights[q] * sigmoid(base + signal * quad.nodes[q]);
        }
        total += weight * inner;
      }
    }
    return total;
  };

  for (int sweep = 0; sweep < 60; ++sweep) {
    double max_change = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
      for (std::size_t g = 0; g < 2; ++g) {
        const double target = targets[d][g];
        double lo = kOffsetLo;
        double hi = kOffsetHi;
        const double before = theta[d][g];
        theta[d][g] = lo;
        if (rate(d, g) >= target) {
          // Target at or below the floor; keep the floor.
        } else {
          theta[d][g] = hi;
          if (rate(d, g) <= target) {
            // Target at or above the ceiling; keep the ceiling.
          } else {
            for (int iter = 0; iter < 60; ++iter) {
              theta[d][g] = 0.5 * (lo + hi);
              if (rate(d, g) < target) {
                lo = theta[d][g];
              } else {
                hi = theta[d][g];
              }
            }
            theta[d][g] = 0.5 * (lo + hi);
          }
        }
        max_change = std::max(max_change, std::abs(theta[d][g] - before));
      }
    }
    if (max_change < 1e-9) break;
  }
  return theta;
}

}  // namespace

Cohort generate_synthetic(const SynthConfig& config) {
  config.validate();

  const std::size_t k = config.n_features;
  const std::size_t n_proxies = std::min<std::size_t>(3, k);

  // Group-1 marginals in subgroup_partition() order: female, non_white, senior.
  const std::array<double, 3> group1_prob = {
      1.0 - config.male_fraction, config.non_white_fraction, config.senior_fraction};

  const NormalQuadrature quad(240);
  std::array<std::array<std::array<double, 2>, 3>, 3> offsets{};
  std::array<bool, 3> all_zero{};
  std::array<bool, 3> all_one{};
  for (std::size_t o = 0; o < 3; ++o) {
    bool zero = true;
    bool one = true;
    for (const auto& per_feature : config.outcome_rates[o]) {
      for (double r : per_feature) {
        zero = zero && r == 0.0;
        one = one && r == 1.0;
      }
    }
    all_zero[o] = zero;
    all_one[o] = one;
    if (!zero && !one) {
      offsets[o] = solve_group_offsets(config.outcome_rates[o], group1_prob,
                                       config.signal_strength, quad);
    }
  }

  Rng rng(config.seed);

  // One fixed unit direction per outcome over the risk features; drawn before
  // the record loop so it is part of the seeded stream.
  const std::size_t n_risk = k > n_proxies ? k - n_proxies : 0;
  std::array<std::vector<double>, 3> risk_direction;
  for (std::size_t o = 0; o < 3; ++o) {
    risk_direction[o].resize(n_risk);
    double norm = 0.0;
    for (auto& w : risk_direction[o]) {
      w = rng.next_normal();
      norm += w * w;
    }
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (auto& w : risk_direction[o]) w /= norm;
    }
  }

  Cohort cohort;
  cohort.provenance.kind = Provenance::Kind::synthetic;
  cohort.provenance.seed = config.seed;
  cohort.provenance.digest = config.digest();
  cohort.feature_names.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    cohort.feature_names.push_back("f" + std::to_string(j + 1));
  }

  cohort.records.reserve(config.n);
  std::vector<double> noise(k);
  char id_buf[24];
  for (std::size_t i = 0; i < config.n; ++i) {
    CohortRecord r;
    std::snprintf(id_buf, sizeof(id_buf), "s%06zu", i + 1);
    r.id = id_buf;

    const bool male = rng.next_bernoulli(config.male_fraction);
    const bool non_white = rng.next_bernoulli(config.non_white_fraction);
    const bool senior = rng.next_bernoulli(config.senior_fraction);
    r.sex = male ? Sex::male : Sex::female;
    r.race_group = non_white ? RaceGroup::non_white : RaceGroup::white;
    r.age_years = senior ? static_cast<int>(rng.next_int(config.senior_age_min,
                                                         config.senior_age_max))
                         : static_cast<int>(rng.next_int(config.adult_age_min,
                                                         config.adult_age_max));

    const std::array<std::size_t, 3> group = {male ? 0u : 1u, non_white ? 1u : 0u,
                                              senior ? 1u : 0u};

    for (std::size_t j = 0; j < k; ++j) noise[j] = rng.next_normal();
    r.features.resize(k);
    for (std::size_t j = 0; j < n_proxies; ++j) {
      r.features[j] = config.proxy_strength * static_cast<double>(group[j]) +
                      config.proxy_noise * noise[j];
    }
    for (std::size_t j = n_proxies; j < k; ++j) r.features[j] = noise[j];

    for (std::size_t o = 0; o < 3; ++o) {
      double probability;
      if (all_zero[o]) {
        probability = 0.0;
      } else if (all_one[o]) {
        probability = 1.0;
      } else {
        double risk = 0.0;
        for (std::size_t j = 0; j < n_risk; ++j) {
          risk += risk_direction[o][j] * noise[n_proxies + j];
        }
        const double latent = offsets[o][0][group[0]] + offsets[o][1][group[1]] +
                              offsets[o][2][group[2]] +
                              config.signal_strength * risk;
        probability = sigmoid(latent);
      }
      r.labels[o] = rng.next_bernoulli(probability) ? 1 : 0;
    }
    cohort.records.push_back(std::move(r));
  }
  return cohort;
}

// ---------------------------------------------------------------------------
// Config file I/O
// ---------------------------------------------------------------------------

namespace {

json rates_to_json(const std::array<std::array<double, 2>, 3>& per_feature) {
  json out;
  for (std::size_t f = 0; f < 3; ++f) {
    out[std::string(to_string(kAllProtectedFeatures[f]))] = per_feature[f];
  }
  return out;
}

void rates_from_json(const json& j, std::array<std::array<double, 2>, 3>& out,
                     const std::string& where) {
  for (std::size_t f = 0; f < 3; ++f) {
    const std::string key(to_string(kAllProtectedFeatures[f]));
    if (!j.contains(key)) continue;
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.size() != 2) {
      throw ConfigError(where + "." + key + " must be an array of two rates");
    }
    out[f][0] = arr[0].get<double>();
    out[f][1] = arr[1].get<double>();
  }
}

json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  return j;
}

}  // namespace

SynthConfig load_synth_config(const std::string& path) {
  const json j = parse_json_file(path);
  SynthConfig config;
  try {
    static const std::array<std::string_view, 14> known = {
        "n",          "seed",          "male_fraction", "senior_fraction",
        "non_white_fraction", "adult_age_min", "adult_age_max", "senior_age_min",
        "senior_age_max",     "n_features",    "signal_strength", "proxy_strength",
        "proxy_noise",        "outcome_rates"};
    for (const auto& [key, value] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw ConfigError(path + ": unknown key '" + key + "'");
      }
    }
    if (j.contains("n")) config.n = j.at("n").get<std::size_t>();
    if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("male_fraction")) config.male_fraction = j.at("male_fraction").get<double>();
    if (j.contains("senior_fraction")) config.senior_fraction = j.at("senior_fraction").get<double>();
    if (j.contains("non_white_fraction")) config.non_white_fraction = j.at("non_white_fraction").get<double>();
    if (j.contains("adult_age_min")) config.adult_age_min = j.at("adult_age_min").get<int>();
    if (j.contains("adult_age_max")) config.adult_age_max = j.at("adult_age_max").get<int>();
    if (j.contains("senior_age_min")) config.senior_age_min = j.at("senior_age_min").get<int>();
    if (j.contains("senior_age_max")) config.senior_age_max = j.at("senior_age_max").get<int>();
    if (j.contains("n_features")) config.n_features = j.at("n_features").get<std::size_t>();
    if (j.contains("signal_strength")) config.signal_strength = j.at("signal_strength").get<double>();
    if (j.contains("proxy_strength")) config.proxy_strength = j.at("proxy_strength").get<double>();
    if (j.contains("proxy_noise")) config.proxy_noise = j.at("proxy_noise").get<double>();
    if (j.contains("outcome_rates")) {
      const auto& rates = j.at("outcome_rates");
      for (std::size_t o = 0; o < 3; ++o) {
        const std::string key(to_string(kAllOutcomes[o]));
        if (rates.contains(key)) {
          rates_from_json(rates.at(key), config.outcome_rates[o],
                          "outcome_rates." + key);
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  config.validate();
  return config;
}

void save_synth_config(const SynthConfig& config, const std::string& path) {
  json j;
  j["n"] = config.n;
  j["seed"] = config.seed;
  j["male_fraction"] = config.male_fraction;
  j["senior_fraction"] = config.senior_fraction;
  j["non_white_fraction"] = config.non_white_fraction;
  j["adult_age_min"] = config.adult_age_min;
  j["adult_age_max"] = config.adult_age_max;
  j["senior_age_min"] = config.senior_age_min;
  j["senior_age_max"] = config.senior_age_max;
  j["n_features"] = config.n_features;
  j["signal_strength"] = config.signal_strength;
  j["proxy_strength"] = config.proxy_strength;
  j["proxy_noise"] = config.proxy_noise;
  json rates;
  for (std::size_t o = 0; o < 3; ++o) {
    rates[std::string(to_string(kAllOutcomes[o]))] =
        rates_to_json(config.outcome_rates[o]);
  }
  j["outcome_rates"] = rates;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Split / resample / partition
// ---------------------------------------------------------------------------

namespace {

// Largest-remainder allocation of n slots to the three fractions; every part
// lands strictly within one record of its exact share.
std::array<std::size_t, 3> largest_remainder(std::size_t n,
                                             const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    const double exact = fractions[p] * static_cast<double>(n);
    counts[p] = static_cast<std::size_t>(std::floor(exact));
    remainder[p] = exact - std::floor(exact);
    assigned += counts[p];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    return a < b;
  });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) counts[order[i % 3]] += 1;
  return counts;
}

Cohort take_records(const Cohort& parent, std::vector<std::size_t>& indices) {
  std::sort(indices.begin(), indices.end());
  Cohort part;
  part.feature_names = parent.feature_names;
  part.provenance = parent.provenance;
  part.records.reserve(indices.size());
  for (std::size_t i : indices) part.records.push_back(parent.records[i]);
  return part;
}

}  // namespace

SplitResult split(const Cohort& cohort, const SplitSpec& spec) {
  spec.validate();
  if (cohort.size() < 10) {
    throw ConfigError("split: cohort must have at least 10 records");
  }

  const std::array<double, 3> fractions = {spec.train_fraction, spec.val_fraction,
                                           spec.test_fraction};
  const auto totals = largest_remainder(cohort.size(), fractions);
  for (std::size_t p = 0; p < 3; ++p) {
    if (totals[p] == 0) {
      throw ConfigError("split: fraction yields an empty part");
    }
  }

  std::vector<std::size_t> order(cohort.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);

  std::array<std::vector<std::size_t>, 3> parts;
  if (spec.stratify_on) {
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i : order) {
      (cohort.records[i].label(*spec.stratify_on) ? pos : neg).push_back(i);
    }
    auto pos_totals = largest_remainder(pos.size(), fractions);
    std::array<std::int64_t, 3> neg_totals{};
    for (std::size_t p = 0; p < 3; ++p) {
      neg_totals[p] = static_cast<std::int64_t>(totals[p]) -
                      static_cast<std::int64_t>(pos_totals[p]);
    }
    // At extreme prevalence a part can be over-allocated positives; shift
    // them to the part with the most spare negative room.
    while (true) {
      std::size_t deficit = 3;
      std::size_t spare = 3;
      for (std::size_t p = 0; p < 3; ++p) {
        if (neg_totals[p] < 0 && (deficit == 3 || neg_totals[p] < neg_totals[deficit]))
          deficit = p;
        if (neg_totals[p] > 0 && (spare == 3 || neg_totals[p] > neg_totals[spare]))
          spare = p;
      }
      if (deficit == 3) break;
      pos_totals[deficit] -= 1;
      neg_totals[deficit] += 1;
      pos_totals[spare] += 1;
      neg_totals[spare] -= 1;
    }

    std::size_t pos_cursor = 0;
    std::size_t neg_cursor = 0;
    for (std::size_t p = 0; p < 3; ++p) {
      for (std::size_t i = 0; i < pos_totals[p]; ++i) parts[p].push_back(pos[pos_cursor++]);
      for (std::int64_t i = 0; i < neg_totals[p]; ++i) parts[p].push_back(neg[neg_cursor++]);
    }
  } else {
    std::size_t cursor = 0;
    for (std::size_t p = 0; p < 3; ++p) {
      for (std::size_t i = 0; i < totals[p]; ++i) parts[p].push_back(order[cursor++]);
    }
  }

  SplitResult result;
  result.train = take_records(cohort, parts[0]);
  result.val = take_records(cohort, parts[1]);
  result.test = take_records(cohort, parts[2]);
  return result;
}

Cohort bootstrap_resample(const Cohort& cohort, std::uint64_t seed) {
  if (cohort.records.empty()) {
    throw ConfigError("bootstrap_resample: cohort is empty");
  }
  Cohort out;
  out.feature_names = cohort.feature_names;
  out.provenance.kind = Provenance::Kind::resampled;
  out.provenance.seed = seed;
  out.provenance.digest = cohort.digest();

  Rng rng(seed);
  const std::uint64_t n = cohort.records.size();
  out.records.reserve(cohort.records.size());
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    out.records.push_back(cohort.records[rng.next_below(n)]);
  }
  return out;
}

std::array<std::string, 2> group_names_for(ProtectedFeature feature) {
  switch (feature) {
    case ProtectedFeature::sex: return {"male", "female"};
    case ProtectedFeature::race: return {"white", "non_white"};
    case ProtectedFeature::senior: return {"non_senior", "senior"};
  }
  return {"?", "?"};
}

SubgroupPartition subgroup_partition(const Cohort& cohort, ProtectedFeature feature) {
  SubgroupPartition partition;
  partition.feature = feature;
  partition.group_names = group_names_for(feature);
  partition.group_of.resize(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& r = cohort.records[i];
    std::uint8_t g = 0;
    switch (feature) {
      case ProtectedFeature::sex: g = r.sex == Sex::female ? 1 : 0; break;
      case ProtectedFeature::race: g = r.race_group == RaceGroup::non_white ? 1 : 0; break;
      case ProtectedFeature::senior: g = r.is_senior() ? 1 : 0; break;
    }
    partition.group_of[i] = g;
    partition.groups[g].push_back(i);
  }
  return partition;
}

SubgroupPartition subgroup_partition(const Cohort& cohort, std::string_view feature) {
  return subgroup_partition(cohort, protected_feature_from_string(feature));
}

MarginalSummary summarize_marginals(const Cohort& cohort) {
  MarginalSummary s;
  s.n = cohort.size();
  std::array<SubgroupPartition, 3> partitions;
  for (std::size_t f = 0; f < 3; ++f) {
    partitions[f] = subgroup_partition(cohort, kAllProtectedFeatures[f]);
    s.group_sizes[f] = {partitions[f].groups[0].size(), partitions[f].groups[1].size()};
  }
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    for (std::size_t o = 0; o < 3; ++o) {
      if (!cohort.records[i].label(kAllOutcomes[o])) continue;
      s.outcome_positives[o] += 1;
      for (std::size_t f = 0; f < 3; ++f) {
        s.subgroup_positives[o][f][partitions[f].group_of[i]] += 1;
      }
    }
  }
  std::vector<int> ages;
  ages.reserve(cohort.size());
  for (const auto& r : cohort.records) ages.push_back(r.age_years);
  std::nth_element(ages.begin(), ages.begin() + static_cast<std::ptrdiff_t>(ages.size() / 2),
                   ages.end());
  s.median_age = ages[ages.size() / 2];
  return s;
}

}  // namespace fairscreen
