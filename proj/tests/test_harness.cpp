#include <doctest.h>

#include <fstream>

#include "detector_fixtures.hpp"
#include "evasim/config.hpp"
#include "evasim/harness.hpp"
#include "test_support.hpp"

#include <json.hpp>

using namespace evasim;
using namespace evasim::test;

namespace {

// Small corpus so the full pipeline stays fast in unit tests.
ExperimentConfig mini_config(const std::filesystem::path& out_dir,
                             std::uint64_t seed) {
  ExperimentConfig config = default_experiment_config();
  config.generator.benign_count = 60;
  config.generator.malware_count = 20;
  config.split = SplitSpec{40, 12, 12, 6, 0};
  for (DetectorSpec& spec : config.detectors) spec.svm.epochs = 25;
  config.out_dir = out_dir;
  config.seed = seed;
  derive_stage_seeds(config);
  return config;
}

std::size_t line_count(const std::filesystem::path& file) {
  std::ifstream in(file);
  std::size_t lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  return lines;
}

}  // namespace

TEST_CASE("summarize_attacks matches hand-computed metrics") {
  const App z1 = make_app("m1", Label::Malware, {method("m0", "MM", {"a.x"})});
  const App z2 = make_app("m2", Label::Malware, {method("m0", "MM", {"a.x"})});
  const App z3 = make_app("m3", Label::Malware, {method("m0", "MM", {"a.x"})});
  Corpus originals;
  originals.apps = {z1, z2, z3};

  App final_app = z1;
  ClassDef injected;
  injected.name = "inj::g::0";
  injected.injected = true;
  injected.methods = {method("mi", "CC", {"b.y", "c.z"})};
  final_app.classes.push_back(injected);
  final_app.manifest_features.insert("perm::b.p");

  AttackResult r1;
  r1.malware_id = "m1";
  r1.initially_detected = true;
  r1.evaded = true;
  r1.delta = {"g"};
  r1.q_used = 3;
  r1.cost_percent = 12.5;
  r1.final_app = final_app;

  AttackResult r2;
  r2.malware_id = "m2";
  r2.initially_detected = true;
  r2.evaded = false;
  r2.q_used = 20;

  AttackResult r3;
  r3.malware_id = "m3";
  r3.initially_detected = false;
  r3.q_used = 1;

  const BinaryFeatureSpace space = BinaryFeatureSpace::from_vocabulary(
      {"api::a.x", "api::b.y", "api::c.z", "perm::b.p"});

  const DetectorReportRow row =
      summarize_attacks("linear_svm", {r1, r2, r3}, originals, space);
  CHECK(row.attacked == 3);
  CHECK(row.detected == 2);
  CHECK(row.evaded == 1);
  CHECK(row.evasion_rate == 0.5);
  // Per-AE stats cover only the evaded sample.
  CHECK(row.queries.mean == 3.0);
  CHECK(row.queries.stddev == 0.0);
  CHECK(row.queries.count == 1);
  CHECK(row.transformations.mean == 1.0);
  CHECK(row.size_increase_pct.mean == 12.5);
  CHECK(row.added_api_calls.mean == 2.0);
  CHECK(row.added_binary_features.mean == 3.0);  // api::b.y, api::c.z, perm::b.p
}

TEST_CASE("compute_stat basics") {
  const Stat empty = compute_stat({});
  CHECK(empty.count == 0);
  CHECK(empty.mean == 0.0);

  const Stat s = compute_stat({2.0, 4.0, 6.0});
  CHECK(s.count == 3);
  CHECK(s.mean == 4.0);
  CHECK(s.stddev == doctest::Approx(std::sqrt(8.0 / 3.0)));
}

TEST_CASE("transferability cells and denominators") {
  TempDir dir("transfer_cells");
  const App z = make_app("m1", Label::Malware, {method("m0", "MM", {"bad"})});

  AttackResult evaded;
  evaded.malware_id = "m1";
  evaded.initially_detected = true;
  evaded.evaded = true;
  evaded.q_used = 2;
  evaded.final_app = z;

  AttackResult failed;
  failed.malware_id = "m2";
  failed.initially_detected = true;
  failed.evaded = false;

  AttackResult undetected;
  undetected.malware_id = "m3";
  undetected.initially_detected = false;

  const Detector always_malware =
      linear_detector(dir, "am.json", {}, {}, 1.0);
  const Detector always_benign =
      linear_detector(dir, "ab.json", {}, {}, -1.0);

  const TransferRow row = transferability({evaded, failed, undetected},
                                          {&always_malware, &always_benign});
  CHECK(row.detected == 2);
  CHECK(row.evasion_rate[0] == 0.0);  // everything-malware target
  CHECK(row.evasion_rate[1] == 0.5);  // 1 evaded sample of 2 detected

  CHECK_THROWS_AS(transferability({}, {&always_benign}), std::invalid_argument);
}

TEST_CASE("run_experiment produces byte-identical artifacts per config") {
  TempDir dir("exp_determinism");
  const ExperimentConfig c1 = mini_config(dir.file("run1"), 4);
  const ExperimentConfig c2 = mini_config(dir.file("run2"), 4);
  const ExperimentArtifacts a1 = run_experiment(c1);
  const ExperimentArtifacts a2 = run_experiment(c2);

  CHECK(a1.report.config_hash == a2.report.config_hash);

  const std::vector<std::string> files = {
      "corpus.jsonl",        "training.jsonl",
      "attacker_benign.jsonl", "attacker_malware.jsonl",
      "detector_linear_svm.json", "detector_sec_svm.json",
      "detector_knn_markov.json", "action_set.jsonl",
      "donors.csv",          "results_linear_svm.jsonl",
      "results_sec_svm.jsonl", "results_knn_markov.jsonl",
      "report.csv",          "report.json",
      "transfer.csv",        "transfer.json"};
  for (const std::string& name : files) {
    CAPTURE(name);
    REQUIRE(std::filesystem::exists(dir.file("run1") / name));
    CHECK(read_file(dir.file("run1") / name) ==
          read_file(dir.file("run2") / name));
  }
}

TEST_CASE("run_experiment under a query budget of one") {
  TempDir dir("exp_q1");
  ExperimentConfig config = mini_config(dir.file("out"), 0);
  config.attack.max_queries = 1;
  config.run_baselines = false;  // random baseline needs q >= 1 additions
  const ExperimentArtifacts artifacts = run_experiment(config);
  for (const auto& [name, results] : artifacts.results) {
    for (const AttackResult& result : results) {
      CHECK(result.q_used <= 1);
      CHECK(!result.evaded);
    }
  }
  for (const DetectorReportRow& row : artifacts.report.rows) {
    CHECK(row.evasion_rate == 0.0);
  }
}

TEST_CASE("transfer matrix diagonal equals the direct evasion rate") {
  TempDir dir("exp_diag");
  const ExperimentConfig config = mini_config(dir.file("out"), 1);
  const ExperimentArtifacts artifacts = run_experiment(config);
  REQUIRE(artifacts.transfer.has_value());
  const TransferMatrix& matrix = *artifacts.transfer;
  REQUIRE(matrix.detectors.size() == artifacts.report.rows.size());
  for (std::size_t i = 0; i < matrix.detectors.size(); ++i) {
    CHECK(matrix.detectors[i] == artifacts.report.rows[i].detector);
    CHECK(matrix.evasion_rate[i][i] == artifacts.report.rows[i].evasion_rate);
    CHECK(matrix.detected[i] == artifacts.report.rows[i].detected);
  }

  // Independent recomputation of one row from the persisted results.
  const auto results = load_attack_results(
      dir.file("out") / "results_linear_svm.jsonl");
  std::size_t detected = 0, evaded_on_sec = 0;
  const Detector& sec = find_detector(artifacts, DetectorKind::SecSvm);
  for (const AttackResult& result : results) {
    if (!result.initially_detected) continue;
    ++detected;
    if (result.evaded &&
        sec.classify(*result.final_app).label == Label::Benign) {
      ++evaded_on_sec;
    }
  }
  const std::size_t row = 0, col = 1;  // linear -> sec in config order
  REQUIRE(matrix.detectors[row] == "linear_svm");
  REQUIRE(matrix.detectors[col] == "sec_svm");
  CHECK(matrix.evasion_rate[row][col] ==
        static_cast<double>(evaded_on_sec) / static_cast<double>(detected));
}

TEST_CASE("stage failures carry the stage name") {
  TempDir dir("exp_fail");
  SUBCASE("duplicate detector kinds fail in train") {
    ExperimentConfig config = mini_config(dir.file("out"), 0);
    config.detectors.push_back(config.detectors[0]);
    try {
      run_experiment(config);
      FAIL("expected HarnessError");
    } catch (const HarnessError& e) {
      CHECK(e.stage_name == "train");
    }
  }
  SUBCASE("infeasible split fails in split") {
    ExperimentConfig config = mini_config(dir.file("out"), 0);
    config.split.training_malware = 1000;
    try {
      run_experiment(config);
      FAIL("expected HarnessError");
    } catch (const HarnessError& e) {
      CHECK(e.stage_name == "split");
    }
  }
}

TEST_CASE("csv and json report emissions are numerically identical") {
  TempDir dir("report_formats");
  Report report;
  report.seed = 3;
  report.config_hash = "deadbeef";
  DetectorReportRow row;
  row.detector = "linear_svm";
  row.attacked = 10;
  row.detected = 8;
  row.evaded = 5;
  row.evasion_rate = 0.625;
  row.queries = compute_stat({2, 3, 4, 5, 7});
  row.transformations = compute_stat({1, 1, 2, 3, 3});
  row.size_increase_pct = compute_stat({10.5, 20.25, 5.125, 8.0, 9.75});
  row.added_api_calls = compute_stat({3, 4, 5, 6, 7});
  row.added_binary_features = compute_stat({11, 12, 13, 14, 15});
  row.detection_rate = 0.9375;
  row.false_alarm_rate = 0.03125;
  report.rows.push_back(row);

  emit_report(report, dir.path(), ReportFormat::Csv);
  emit_report(report, dir.path(), ReportFormat::Json);

  // Header plus exactly one data row.
  REQUIRE(line_count(dir.file("report.csv")) == 2);

  std::ifstream csv(dir.file("report.csv"));
  std::string header, data;
  std::getline(csv, header);
  std::getline(csv, data);
  std::vector<std::string> cells;
  std::size_t pos = 0;
  while (pos <= data.size()) {
    const auto comma = data.find(',', pos);
    cells.push_back(data.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  REQUIRE(cells.size() == 19);

  std::ifstream jf(dir.file("report.json"));
  const nlohmann::json j = nlohmann::json::parse(jf);
  const nlohmann::json& jr = j["rows"][0];
  CHECK(std::stod(cells[4]) == jr["evasion_rate"].get<double>());
  CHECK(std::stod(cells[5]) == jr["queries"]["mean"].get<double>());
  CHECK(std::stod(cells[6]) == jr["queries"]["stddev"].get<double>());
  CHECK(std::stod(cells[9]) == jr["size_increase_pct"]["mean"].get<double>());
  CHECK(std::stod(cells[15]) == jr["detection_rate"].get<double>());
  CHECK(std::stod(cells[16]) == jr["false_alarm_rate"].get<double>());
}

TEST_CASE("sweep files carry one row per point") {
  TempDir dir("sweep_rows");
  std::vector<SweepPoint> points;
  for (double alpha : {10.0, 20.0, 30.0, 40.0, 50.0}) {
    SweepPoint p;
    p.x = alpha;
    p.evasion_rate = alpha / 100.0;
    points.push_back(p);
  }
  emit_sweep(points, "alpha", dir.file("sweep_alpha.csv"));
  CHECK(line_count(dir.file("sweep_alpha.csv")) == 6);  // header + 5 points
}

TEST_CASE("query and cost sweeps re-run the attack stage") {
  TempDir dir("sweep_run");
  const ExperimentConfig config = mini_config(dir.file("out"), 2);
  const ExperimentArtifacts artifacts = run_experiment(config);

  const auto q_points = sweep_query_budget(artifacts, config, {1, 20});
  REQUIRE(q_points.size() == 2);
  CHECK(q_points[0].evasion_rate == 0.0);  // budget 1 cannot evade
  CHECK(q_points[1].evasion_rate >= q_points[0].evasion_rate);

  // The Q=20 sweep point reproduces the main run.
  for (const DetectorReportRow& row : artifacts.report.rows) {
    if (row.detector == "linear_svm") {
      CHECK(q_points[1].evasion_rate == row.evasion_rate);
    }
  }

  const auto a_points = sweep_max_cost(artifacts, config, {0.0, 50.0});
  REQUIRE(a_points.size() == 2);
  CHECK(a_points[0].evasion_rate <= a_points[1].evasion_rate);
}

TEST_CASE("flat config files parse both syntaxes and reject unknown keys") {
  const FlatConfig kv = FlatConfig::parse_text(
      "# comment\n"
      "q = 12\n"
      "alpha = 40\n"
      "mode = hard_label\n"
      "detectors = linear_svm, sec_svm\n");
  CHECK(kv.get_u64("q", 0) == 12);
  CHECK(kv.get_double("alpha", 0) == 40.0);
  CHECK(kv.get_list("detectors") ==
        std::vector<std::string>{"linear_svm", "sec_svm"});
  const AttackConfig attack = attack_from_config(kv, 0);
  CHECK(attack.max_queries == 12);
  CHECK(attack.mode == OracleMode::HardLabel);

  const FlatConfig js = FlatConfig::parse_text(
      R"({"q": 12, "alpha": 40.5, "redraw_rejected": false,)"
      R"( "q_values": [2, 5, 10]})");
  CHECK(js.get_u64("q", 0) == 12);
  CHECK(js.get_double("alpha", 0) == 40.5);
  CHECK(js.get_bool("redraw_rejected", true) == false);
  CHECK(js.get_list("q_values") == std::vector<std::string>{"2", "5", "10"});

  CHECK_THROWS_AS(FlatConfig::parse_text("nope = 1\n"), ConfigError);
  CHECK_THROWS_AS(FlatConfig::parse_text(R"({"nope": 1})"), ConfigError);
  CHECK_THROWS_AS(FlatConfig::parse_text("q 12\n"), ConfigError);
}
