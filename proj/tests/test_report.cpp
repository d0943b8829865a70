#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "fairscreen/cohort.hpp"
#include "fairscreen/error.hpp"
#include "fairscreen/report.hpp"
#include "fairscreen/trials.hpp"

using namespace fairscreen;
using json = nlohmann::json;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("fairscreen_report_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

CampaignResult small_campaign() {
  SynthConfig synth;
  synth.n = 5000;
  synth.seed = 21;
  const Cohort cohort = generate_synthetic(synth);
  CampaignConfig config;
  config.n_trials = 4;
  config.seed = 77;
  config.train.epochs = 15;
  config.workers = 2;
  return run_campaign(cohort, config);
}

}  // namespace

TEST_CASE("count cells render with truncated percentages") {
  CHECK(format_count_cell(3, 100) == "3/100 (3)");
  CHECK(format_count_cell(2, 3) == "2/3 (66)");
  CHECK(format_count_cell(11, 17) == "11/17 (64)");
  CHECK(format_count_cell(14, 93) == "14/93 (15)");
  CHECK(format_count_cell(98, 98) == "98/98 (100)");
  CHECK(format_count_cell(0, 20) == "0/20 (0)");
  CHECK(format_count_cell(0, 0) == "0/0 (-)");
}

TEST_CASE("the campaign grid renders nine chained rows") {
  const CampaignResult result = small_campaign();
  const std::string table = render_campaign_table(result.report, RenderFormat::plain);

  const std::regex cell_pattern(R"(\d+/\d+ \((\d+|-)\))");
  std::istringstream lines(table);
  std::string line;
  int data_rows = 0;
  while (std::getline(lines, line)) {
    const std::ptrdiff_t cells =
        std::distance(std::sregex_iterator(line.begin(), line.end(), cell_pattern),
                      std::sregex_iterator());
    if (cells >= 4) ++data_rows;
  }
  CHECK(data_rows == 9);
  for (const char* outcome : {"mortality", "ventilator", "inpatient"}) {
    CHECK(table.find(outcome) != std::string::npos);
  }
  for (const char* feature : {"sex", "race", "senior"}) {
    CHECK(table.find(feature) != std::string::npos);
  }
}

TEST_CASE("csv and json renderings carry identical values") {
  const CampaignResult result = small_campaign();
  const std::string csv = render_campaign_table(result.report, RenderFormat::csv);
  const json parsed = json::parse(campaign_report_to_json(result.report));

  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header.find("precal_biased_test") != std::string::npos);

  std::size_t row = 0;
  std::string line;
  while (std::getline(lines, line)) {
    std::vector<std::string> fields;
    std::istringstream fields_in(line);
    std::string field;
    while (std::getline(fields_in, field, ',')) fields.push_back(field);
    REQUIRE(fields.size() == 12);
    const auto& cell = parsed.at("cells").at(row);
    CHECK(fields[0] == cell.at("outcome").get<std::string>());
    CHECK(fields[1] == cell.at("feature").get<std::string>());
    CHECK(std::stoll(fields[2]) == cell.at("trials").get<std::int64_t>());
    CHECK(std::stoll(fields[6]) == cell.at("biased_val").get<std::int64_t>());
    CHECK(std::stoll(fields[8]) == cell.at("successfully_calibrated").get<std::int64_t>());
    CHECK(std::stoll(fields[10]) == cell.at("precal_biased_test").get<std::int64_t>());
    CHECK(std::stoll(fields[11]) == cell.at("postcal_biased_test").get<std::int64_t>());
    ++row;
  }
  CHECK(row == result.report.cells.size());
}

TEST_CASE("every rendered count is re-derivable from the trial log") {
  TempDir dir;
  const CampaignResult result = small_campaign();
  const std::string log_path = dir.file("trials.jsonl");
  write_trial_log(result.trials, log_path);

  const auto reloaded = read_trial_log(log_path);
  REQUIRE(reloaded.size() == result.trials.size());
  const CampaignReport rederived = summarize(reloaded);
  REQUIRE(rederived.cells.size() == result.report.cells.size());
  for (std::size_t i = 0; i < rederived.cells.size(); ++i) {
    const auto& a = rederived.cells[i];
    const auto& b = result.report.cells[i];
    CHECK(a.outcome == b.outcome);
    CHECK(a.feature == b.feature);
    CHECK(a.biased_val == b.biased_val);
    CHECK(a.successfully_calibrated == b.successfully_calibrated);
    CHECK(a.precal_biased_test == b.precal_biased_test);
    CHECK(a.postcal_biased_test == b.postcal_biased_test);
    CHECK(a.untestable_val == b.untestable_val);
  }
  CHECK(rederived.aggregates.total_precal_biased_test ==
        result.report.aggregates.total_precal_biased_test);
  CHECK(rederived.aggregates.mean_val_recall_gap_pre ==
        doctest::Approx(result.report.aggregates.mean_val_recall_gap_pre));
}

TEST_CASE("trial log lines survive a round trip byte-for-byte") {
  const CampaignResult result = small_campaign();
  for (const auto& trial : result.trials) {
    const std::string line = trial_to_json_line(trial);
    CHECK(trial_to_json_line(trial_from_json_line(line)) == line);
  }
}

TEST_CASE("campaign reports round-trip through their file form") {
  TempDir dir;
  const CampaignResult result = small_campaign();
  const std::string path = dir.file("report.json");
  write_campaign_report(result.report, path);
  const CampaignReport loaded = read_campaign_report(path);
  CHECK(campaign_report_to_json(loaded) == campaign_report_to_json(result.report));
}

TEST_CASE("audit analysis renders the calibration-statistics block") {
  SynthConfig synth;
  synth.n = 8000;
  synth.seed = 31;
  const Cohort cohort = generate_synthetic(synth);
  AuditOptions options;
  options.train.epochs = 20;

  const AuditReport report =
      run_audit_analysis(cohort, Outcome::inpatient, ProtectedFeature::senior, options);
  CHECK(report.status == TrialStatus::ok);
  CHECK(report.pre.audit.biased);  // induced senior gap
  REQUIRE(report.calibrated);
  REQUIRE(report.post.has_value());
  CHECK_FALSE(report.post->audit.biased);
  CHECK(report.post->overall_recall > report.pre.overall_recall);

  const std::string plain = render_audit_report(report, RenderFormat::plain);
  for (const char* needle :
       {"auc", "recall", "p-value", "CI", "pre-calibration", "post-calibration",
        "non_senior", "senior", "positives"}) {
    CAPTURE(needle);
    CHECK(plain.find(needle) != std::string::npos);
  }

  const std::string csv = render_audit_report(report, RenderFormat::csv);
  CHECK(csv.find("stage,group,auc,recall,positives,p_value,recall_diff,ci_lo,ci_hi") !=
        std::string::npos);
  CHECK(csv.find("pre,overall") != std::string::npos);
  CHECK(csv.find("post,overall") != std::string::npos);

  const json parsed = json::parse(render_audit_report(report, RenderFormat::json));
  CHECK(parsed.at("pre").at("audit").at("biased").get<bool>());
  CHECK_FALSE(parsed.at("post").at("audit").at("biased").get<bool>());
}

TEST_CASE("an unbiased audit renders the not-calibrated annotation") {
  SynthConfig synth;
  synth.n = 6000;
  synth.seed = 5;
  for (auto& per_feature : synth.outcome_rates[0]) per_feature = {0.08, 0.08};
  const Cohort cohort = generate_synthetic(synth);
  AuditOptions options;
  options.train.epochs = 15;
  const AuditReport report =
      run_audit_analysis(cohort, Outcome::mortality, ProtectedFeature::race, options);
  CHECK(report.status == TrialStatus::ok);
  CHECK_FALSE(report.pre.audit.biased);
  CHECK_FALSE(report.calibrated);
  const std::string plain = render_audit_report(report, RenderFormat::plain);
  CHECK(plain.find("not calibrated") != std::string::npos);
}

TEST_CASE("decision distributions bin scores and track thresholds") {
  std::vector<double> scores(40, 0.5);
  std::vector<std::uint8_t> labels(40, 0);
  for (std::size_t i = 0; i < 10; ++i) labels[i] = 1;
  SubgroupPartition partition;
  partition.feature = ProtectedFeature::sex;
  partition.group_names = group_names_for(ProtectedFeature::sex);
  partition.group_of.assign(40, 0);
  for (std::size_t i = 20; i < 40; ++i) partition.group_of[i] = 1;
  for (std::size_t i = 0; i < 40; ++i) partition.groups[partition.group_of[i]].push_back(i);

  ThresholdPolicy naive;
  naive.global_threshold = 0.6;
  ThresholdPolicy calibrated;
  calibrated.kind = ThresholdPolicy::Kind::per_group;
  calibrated.feature = partition.feature;
  calibrated.group_names = partition.group_names;
  calibrated.group_thresholds = {0.45, 0.4};

  const auto dist = decision_distribution(scores, labels, partition, naive, calibrated);
  REQUIRE(dist.groups.size() == 2);
  for (const auto& group : dist.groups) {
    // all scores 0.5 fall in one bin
    std::int64_t occupied = 0;
    for (auto count : group.bin_counts) occupied += count > 0 ? 1 : 0;
    CHECK(occupied == 1);
    CHECK(group.bin_counts[25] == static_cast<std::int64_t>(group.size));
    // calibrated thresholds moved below the naive one: fp can only grow
    CHECK(group.post_confusion.fp >= group.pre_confusion.fp);
  }
  CHECK(dist.groups[0].naive_threshold == 0.6);
  CHECK(dist.groups[1].calibrated_threshold == 0.4);

  const std::string json_text = decision_distribution_to_json(dist);
  const json parsed = json::parse(json_text);
  CHECK(parsed.at("bins").get<std::size_t>() == 50);
  CHECK(parsed.at("groups").size() == 2);

  const std::string svg = decision_distribution_svg(dist);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);  // naive line
  CHECK(svg.find("male") != std::string::npos);
}

TEST_CASE("decision distributions omit empty groups with a note") {
  std::vector<double> scores = {0.2, 0.8};
  std::vector<std::uint8_t> labels = {0, 1};
  SubgroupPartition partition;
  partition.feature = ProtectedFeature::race;
  partition.group_names = group_names_for(ProtectedFeature::race);
  partition.group_of = {1, 1};
  partition.groups[1] = {0, 1};

  ThresholdPolicy naive;
  const auto dist = decision_distribution(scores, labels, partition, naive, naive, 10);
  CHECK(dist.groups.size() == 1);
  CHECK(dist.groups[0].name == "non_white");
  REQUIRE(dist.notes.size() == 1);
  CHECK(dist.notes[0].find("white") != std::string::npos);

  CHECK_THROWS_AS(decision_distribution({}, {}, partition, naive, naive),
                  std::invalid_argument);
}

TEST_CASE("the calibrated threshold for the disadvantaged group shifts left") {
  SynthConfig synth;
  synth.n = 8000;
  synth.seed = 13;
  const Cohort cohort = generate_synthetic(synth);
  AuditOptions options;
  options.train.epochs = 20;
  const AuditReport report =
      run_audit_analysis(cohort, Outcome::inpatient, ProtectedFeature::senior, options);
  REQUIRE(report.calibrated);

  // The group with the lower pre-calibration recall must end up with a
  // threshold strictly below the naive one.
  const std::size_t disadvantaged =
      report.pre.audit.group_recalls[0] < report.pre.audit.group_recalls[1] ? 0 : 1;
  CHECK(report.policy->group_thresholds[disadvantaged] <
        report.naive_policy.global_threshold);
}
