#include <doctest.h>

#include <functional>

#include "detector_fixtures.hpp"
#include "evasim/attack.hpp"
#include "evasim/corpus.hpp"
#include "evasim/detectors.hpp"
#include "evasim/generator.hpp"
#include "evasim/ngram.hpp"
#include "test_support.hpp"

using namespace evasim;
using namespace evasim::test;

namespace {

class ScriptedOracle : public BlackBoxOracle {
 public:
  ScriptedOracle(OracleMode mode, std::function<QueryAnswer(const App&)> script)
      : mode_(mode), script_(std::move(script)) {}

  QueryAnswer query(const App& app) override {
    ++count_;
    QueryAnswer answer = script_(app);
    if (mode_ == OracleMode::HardLabel) answer.benign_score.reset();
    return answer;
  }
  std::uint64_t query_count() const override { return count_; }
  OracleMode mode() const override { return mode_; }

 private:
  OracleMode mode_;
  std::function<QueryAnswer(const App&)> script_;
  std::uint64_t count_ = 0;
};

ActionSet single_gadget_actions(const std::string& api, std::size_t opcode_count) {
  const App donor =
      make_app("d", Label::Benign,
               {method("m0", std::string(opcode_count, 'C'), {api})});
  return build_action_set({&donor});
}

struct Pipeline {
  Corpus training;
  Corpus benign;
  Corpus malware;
  BinaryFeatureSpace space;
  Detector detector;
  ActionSet actions;
};

Pipeline make_pipeline(std::uint64_t seed) {
  GeneratorParams params;
  params.benign_count = 90;
  params.malware_count = 30;
  const Corpus corpus = generate_synthetic_corpus(params, seed);
  const CorpusSplit split = split_corpus(corpus, SplitSpec{60, 15, 30, 15, seed});
  Pipeline p{split.training,
             split.attacker_benign,
             split.attacker_malware,
             BinaryFeatureSpace::build(split.training),
             {},
             {}};
  p.detector = train_linear_svm(p.training, p.space, SvmParams{});
  p.actions =
      build_action_set(donor_pool(select_donors(p.malware, p.benign, 2), p.benign));
  return p;
}

}  // namespace

TEST_CASE("evasion cost is the relative size increase in percent") {
  const App z = make_app("z", Label::Malware, {method("m0", "MM")}, {}, 1000);
  App z1 = z;
  z1.size_bytes = 1500;
  CHECK(evasion_cost(z, z1) == 50.0);
  CHECK(evasion_cost(z, z) == 0.0);
  z1.size_bytes = 1300;
  CHECK(evasion_cost(z, z1) == 30.0);
}

TEST_CASE("attack rejects an empty action set") {
  const App z = make_app("z", Label::Malware, {method("m0", "MM")});
  ScriptedOracle oracle(OracleMode::SoftLabel,
                        [](const App&) { return QueryAnswer{Label::Malware, 0.0}; });
  Corpus benign;
  CHECK_THROWS_AS(
      random_search_attack(z, ActionSet{}, oracle, benign, AttackConfig{}),
      AttackError);
}

TEST_CASE("attack validates its budget and cost bounds") {
  const App z = make_app("z", Label::Malware, {method("m0", "MM")});
  const ActionSet actions = single_gadget_actions("a.x", 4);
  ScriptedOracle oracle(OracleMode::SoftLabel,
                        [](const App&) { return QueryAnswer{Label::Malware, 0.0}; });
  Corpus benign;
  AttackConfig config;
  SUBCASE("zero query budget") {
    config.max_queries = 0;
    CHECK_THROWS_AS(random_search_attack(z, actions, oracle, benign, config),
                    AttackError);
  }
  SUBCASE("negative cost bound") {
    config.max_cost_percent = -1.0;
    CHECK_THROWS_AS(random_search_attack(z, actions, oracle, benign, config),
                    AttackError);
  }
  SUBCASE("soft attack needs a soft oracle") {
    ScriptedOracle hard(OracleMode::HardLabel,
                        [](const App&) { return QueryAnswer{Label::Malware, {}}; });
    CHECK_THROWS_AS(random_search_attack(z, actions, hard, benign, config),
                    AttackError);
  }
}

TEST_CASE("initially undetected samples are returned untouched") {
  const App z = make_app("z", Label::Malware, {method("m0", "MM")});
  const ActionSet actions = single_gadget_actions("a.x", 4);
  ScriptedOracle oracle(OracleMode::SoftLabel,
                        [](const App&) { return QueryAnswer{Label::Benign, 5.0}; });
  Corpus benign;
  const AttackResult result =
      random_search_attack(z, actions, oracle, benign, AttackConfig{});
  CHECK(!result.initially_detected);
  CHECK(!result.evaded);
  CHECK(result.q_used == 1);
  CHECK(result.delta.empty());
  CHECK(result.trace.empty());
  CHECK(!result.final_app.has_value());
}

TEST_CASE("a benign-weighted gadget evades in one candidate query") {
  TempDir dir("attack_fixture");
  // w(api::bad) = +2, w(api::good) = -4, bias = +1.
  const Detector detector = linear_detector(
      dir, "d.json", {"api::bad", "api::good"}, {2.0, -4.0}, 1.0);
  const App z = make_app("z", Label::Malware,
                         {method("m0", "IMGIMGM", {"bad"})}, {}, 1000);
  REQUIRE(detector.classify(z).label == Label::Malware);

  const ActionSet actions = single_gadget_actions("good", 4);  // 80 bytes
  DetectorOracle oracle(detector, OracleMode::SoftLabel);
  Corpus benign;
  const AttackResult result =
      random_search_attack(z, actions, oracle, benign, AttackConfig{});

  CHECK(result.initially_detected);
  CHECK(result.evaded);
  CHECK(result.q_used == 2);
  CHECK(result.delta == std::vector<std::string>{"d/good"});
  REQUIRE(result.trace.size() == 1);
  CHECK(result.trace[0].outcome == StepOutcome::Evaded);
  CHECK(result.trace[0].queried);
  CHECK(result.cost_percent == 8.0);
  REQUIRE(result.final_app.has_value());
  CHECK(detector.classify(*result.final_app).label == Label::Benign);
}

TEST_CASE("a query budget of one stops after the detection check") {
  TempDir dir("attack_q1");
  const Detector detector =
      linear_detector(dir, "d.json", {"api::bad"}, {2.0}, 1.0);
  const App z = make_app("z", Label::Malware, {method("m0", "MM", {"bad"})});
  const ActionSet actions = single_gadget_actions("good", 4);
  DetectorOracle oracle(detector, OracleMode::SoftLabel);
  Corpus benign;
  AttackConfig config;
  config.max_queries = 1;
  const AttackResult result =
      random_search_attack(z, actions, oracle, benign, config);
  CHECK(result.initially_detected);
  CHECK(!result.evaded);
  CHECK(result.q_used == 1);
  CHECK(result.trace.empty());
}

TEST_CASE("cost-infeasible gadgets are rejected without spending a query") {
  TempDir dir("attack_cost");
  const Detector detector =
      linear_detector(dir, "d.json", {"api::bad"}, {2.0}, 1.0);
  const App z =
      make_app("z", Label::Malware, {method("m0", "MM", {"bad"})}, {}, 1000);
  // 134 opcodes -> 4*134 + 64 = 600 bytes = 60% of z.
  const ActionSet actions = single_gadget_actions("good", 134);
  DetectorOracle oracle(detector, OracleMode::SoftLabel);
  Corpus benign;
  const AttackResult result =
      random_search_attack(z, actions, oracle, benign, AttackConfig{});

  CHECK(result.q_used == 1);  // only the initial check
  CHECK(!result.evaded);
  REQUIRE(result.trace.size() == 1);
  CHECK(result.trace[0].outcome == StepOutcome::CostRejected);
  CHECK(!result.trace[0].queried);
  CHECK(result.trace[0].cost_percent == 60.0);
  CHECK(result.cost_percent == 0.0);
}

TEST_CASE("rejected gadgets are redrawn only when configured") {
  const App z = make_app("z", Label::Malware, {method("m0", "MM")}, {}, 10000);
  const App d1 = make_app("d1", Label::Benign, {method("m0", "CC", {"a.x"})});
  const App d2 = make_app("d2", Label::Benign, {method("m0", "CC", {"b.y"})});
  const App d3 = make_app("d3", Label::Benign, {method("m0", "CC", {"c.z"})});
  const ActionSet actions = build_action_set({&d1, &d2, &d3});
  Corpus benign;
  AttackConfig config;
  config.max_queries = 10;

  // Constant score: every candidate is rejected in soft mode.
  auto constant = [](const App&) { return QueryAnswer{Label::Malware, 0.0}; };

  SUBCASE("redraw on: the budget is exhausted") {
    ScriptedOracle oracle(OracleMode::SoftLabel, constant);
    config.redraw_rejected = true;
    const AttackResult result =
        random_search_attack(z, actions, oracle, benign, config);
    CHECK(result.q_used == 10);
    CHECK(result.trace.size() == 9);
    CHECK(result.delta.empty());
  }
  SUBCASE("redraw off: the pool drains after one pass") {
    ScriptedOracle oracle(OracleMode::SoftLabel, constant);
    config.redraw_rejected = false;
    const AttackResult result =
        random_search_attack(z, actions, oracle, benign, config);
    CHECK(result.q_used == 4);  // initial + one query per distinct gadget
    CHECK(result.trace.size() == 3);
    CHECK(result.delta.empty());
  }
}

TEST_CASE("attack runs satisfy the budget, ledger and monotonicity invariants") {
  const Pipeline p = make_pipeline(1);
  AttackConfig config;
  config.seed = 5;

  for (OracleMode mode : {OracleMode::SoftLabel, OracleMode::HardLabel}) {
    config.mode = mode;
    CAPTURE(mode == OracleMode::SoftLabel);
    for (const App& z : p.malware.apps) {
      DetectorOracle oracle(p.detector, mode, config.max_queries);
      const AttackResult result =
          random_search_attack(z, p.actions, oracle, p.benign, config);

      CHECK(result.q_used <= config.max_queries);
      CHECK(oracle.query_count() == result.q_used);
      std::uint64_t queried = 0;
      for (const TraceStep& step : result.trace) queried += step.queried;
      CHECK(queried + 1 == result.q_used);
      CHECK(result.delta.size() <= result.q_used);

      if (result.evaded) {
        CHECK(result.cost_percent <= config.max_cost_percent);
        REQUIRE(result.final_app.has_value());
        // Functionality proxy: original classes survive byte-identical.
        for (std::size_t i = 0; i < z.classes.size(); ++i) {
          CHECK(result.final_app->classes[i] == z.classes[i]);
        }
      }

      // Accepted objectives improve monotonically.
      double last = -std::numeric_limits<double>::infinity();
      for (const TraceStep& step : result.trace) {
        if (step.outcome != StepOutcome::Accepted || !step.objective) continue;
        if (mode == OracleMode::SoftLabel) {
          CHECK(*step.objective > last);
        } else {
          CHECK(*step.objective >= last);
        }
        last = *step.objective;
      }

      if (mode == OracleMode::HardLabel) {
        // Appending methods never lowers the maximum benign similarity, so
        // the keep-or-increase rule accepts every queried candidate.
        for (const TraceStep& step : result.trace) {
          CHECK(step.outcome != StepOutcome::Rejected);
        }
      }
    }
  }
}

TEST_CASE("attacks are deterministic including the trace") {
  const Pipeline p = make_pipeline(2);
  AttackConfig config;
  config.seed = 11;

  TempDir dir("attack_determinism");
  for (int run = 0; run < 2; ++run) {
    std::vector<AttackResult> results;
    for (const App& z : p.malware.apps) {
      DetectorOracle oracle(p.detector, config.mode, config.max_queries);
      results.push_back(
          random_search_attack(z, p.actions, oracle, p.benign, config));
    }
    save_attack_results(results,
                        dir.file("run" + std::to_string(run) + ".jsonl"));
  }
  CHECK(read_file(dir.file("run0.jsonl")) == read_file(dir.file("run1.jsonl")));
  CHECK(!read_file(dir.file("run0.jsonl")).empty());
}

TEST_CASE("attack results round-trip through their file format") {
  const Pipeline p = make_pipeline(3);
  AttackConfig config;
  std::vector<AttackResult> results;
  for (const App& z : p.malware.apps) {
    DetectorOracle oracle(p.detector, config.mode, config.max_queries);
    results.push_back(
        random_search_attack(z, p.actions, oracle, p.benign, config));
  }

  TempDir dir("attack_io");
  save_attack_results(results, dir.file("r.jsonl"));
  const std::vector<AttackResult> loaded = load_attack_results(dir.file("r.jsonl"));
  REQUIRE(loaded.size() == results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    CHECK(loaded[i].malware_id == results[i].malware_id);
    CHECK(loaded[i].evaded == results[i].evaded);
    CHECK(loaded[i].q_used == results[i].q_used);
    CHECK(loaded[i].delta == results[i].delta);
    CHECK(loaded[i].cost_percent == results[i].cost_percent);
    CHECK(loaded[i].trace.size() == results[i].trace.size());
    CHECK(loaded[i].final_app == results[i].final_app);
  }

  save_attack_results(loaded, dir.file("r2.jsonl"));
  CHECK(read_file(dir.file("r.jsonl")) == read_file(dir.file("r2.jsonl")));
}
