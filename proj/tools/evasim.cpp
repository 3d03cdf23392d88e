// Command-line front end: stages of the evasion-attack pipeline operating on
// line-delimited JSON artifacts, so each step can run and be inspected on its
// own. See the README for the config key reference.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evasim/attack.hpp"
#include "evasim/baselines.hpp"
#include "evasim/config.hpp"
#include "evasim/corpus.hpp"
#include "evasim/detectors.hpp"
#include "evasim/gadgets.hpp"
#include "evasim/generator.hpp"
#include "evasim/harness.hpp"
#include "evasim/ngram.hpp"
#include "evasim/report.hpp"
#include "evasim/rng.hpp"

namespace {

namespace fs = std::filesystem;
using namespace evasim;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct LoadedConfig {
  FlatConfig config;
  std::uint64_t seed = 0;
  fs::path out;
  std::string hash;  // of the raw config text + seed
};

std::string hash_hex(std::string_view text) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t v = fnv1a64(text);
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

LoadedConfig load_common(const CommonArgs& args) {
  LoadedConfig loaded;
  std::string raw;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw ConfigError("cannot open config file: " + args.config_path);
    raw.assign(std::istreambuf_iterator<char>(in),
               std::istreambuf_iterator<char>());
    loaded.config = FlatConfig::parse_text(raw);
  }
  loaded.seed = args.seed.value_or(loaded.config.get_u64("seed", 0));
  loaded.out = args.out.empty() ? fs::path(loaded.config.get_string("out", "."))
                                : fs::path(args.out);
  loaded.hash = hash_hex(raw + "\nseed=" + std::to_string(loaded.seed));
  return loaded;
}

Corpus load_corpus_key(const FlatConfig& config, const std::string& key) {
  return load_corpus(config.require_string(key));
}

// The binary space for report diagnostics: the target's own vocabulary when
// it is a linear kind, any other linear detector's otherwise, else rebuilt
// from the training corpus named in the config.
BinaryFeatureSpace diagnostic_space(
    const std::vector<std::pair<fs::path, Detector>>& detectors,
    DetectorKind target, const FlatConfig& config) {
  for (const auto& [path, detector] : detectors) {
    if (detector.kind() == target && detector.kind() != DetectorKind::KnnMarkov) {
      return detector.binary_space();
    }
  }
  for (const auto& [path, detector] : detectors) {
    if (detector.kind() != DetectorKind::KnnMarkov) return detector.binary_space();
  }
  return BinaryFeatureSpace::build(load_corpus_key(config, "training"));
}

std::vector<std::pair<fs::path, Detector>> load_detectors(
    const FlatConfig& config) {
  std::vector<std::pair<fs::path, Detector>> detectors;
  for (const std::string& path : config.get_list("detectors")) {
    detectors.emplace_back(path, Detector::load(path));
  }
  if (detectors.empty()) {
    throw ConfigError("config key 'detectors' must list detector files");
  }
  return detectors;
}

DetectorKind target_kind(const FlatConfig& config) {
  return detector_kind_from_string(config.get_string("target", "linear_svm"));
}

int cmd_generate(const CommonArgs& args) {
  LoadedConfig loaded = load_common(args);
  const GeneratorParams params = generator_from_config(loaded.config);
  const Corpus corpus = generate_synthetic_corpus(params, loaded.seed);
  fs::path out = loaded.out;
  if (fs::is_directory(out) || out == ".") out /= "corpus.jsonl";
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_corpus(corpus, out);
  std::cout << "wrote " << corpus.apps.size() << " apps to " << out.string()
            << "\n";
  return 0;
}

int cmd_split(const CommonArgs& args) {
  LoadedConfig loaded = load_common(args);
  const Corpus corpus = load_corpus_key(loaded.config, "corpus");
  const SplitSpec spec = split_from_config(loaded.config, loaded.seed);
  const CorpusSplit split = split_corpus(corpus, spec);
  fs::create_directories(loaded.out);
  save_corpus(split.training, loaded.out / "training.jsonl");
  save_corpus(split.attacker_benign, loaded.out / "attacker_benign.jsonl");
  save_corpus(split.attacker_malware, loaded.out / "attacker_malware.jsonl");
  std::cout << "split " << corpus.apps.size() << " apps into "
            << split.training.apps.size() << " training / "
            << split.attacker_benign.apps.size() << " attacker benign / "
            << split.attacker_malware.apps.size() << " attacker malware\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  LoadedConfig loaded = load_common(args);
  const Corpus training = load_corpus_key(loaded.config, "training");
  std::vector<std::string> kinds = loaded.config.get_list("detectors");
  if (kinds.empty()) kinds = {"linear_svm", "sec_svm", "knn_markov"};

  const BinaryFeatureSpace binary = BinaryFeatureSpace::build(training);
  const MarkovFeatureSpace markov = MarkovFeatureSpace::build(training);
  fs::create_directories(loaded.out);
  for (const std::string& name : kinds) {
    const DetectorKind kind = detector_kind_from_string(name);
    const DetectorSpec spec =
        detector_spec_from_config(loaded.config, kind, loaded.seed);
    Detector detector = [&] {
      switch (kind) {
        case DetectorKind::LinearSvm:
          return train_linear_svm(training, binary, spec.svm);
        case DetectorKind::SecSvm:
          return train_sec_svm(training, binary, spec.svm);
        case DetectorKind::KnnMarkov:
          return train_knn_markov(training, markov, spec.knn_k);
      }
      throw ConfigError("unknown detector kind");
    }();
    const fs::path out = loaded.out / ("detector_" + name + ".json");
    detector.save(out);
    std::cout << "trained " << name << " -> " << out.string() << "\n";
  }
  return 0;
}

int cmd_prepare(const CommonArgs& args) {
  LoadedConfig loaded = load_common(args);
  const Corpus malware = load_corpus_key(loaded.config, "malware");
  const Corpus benign = load_corpus_key(loaded.config, "benign");
  const int n = loaded.config.get_int("n", 2);

  std::vector<DonorSelection> selections = select_donors(malware, benign, n);
  ActionSet actions = build_action_set(donor_pool(selections, benign));
  actions.provenance = std::move(selections);

  fs::create_directories(loaded.out);
  save_action_set(actions, loaded.out / "action_set.jsonl");
  std::ofstream donors(loaded.out / "donors.csv", std::ios::trunc);
  donors << "malware_id,donor_id,similarity\n";
  for (const DonorSelection& sel : actions.provenance) {
    donors << sel.malware_id << ',' << sel.donor_id << ','
           << format_double(sel.similarity) << '\n';
  }
  std::cout << "action set: " << actions.gadgets.size() << " gadgets from "
            << donor_pool(actions.provenance, benign).size() << " donors\n";
  return 0;
}

int cmd_attack(const CommonArgs& args) {
  LoadedConfig loaded = load_common(args);
  const Corpus malware = load_corpus_key(loaded.config, "malware");
  const Corpus benign = load_corpus_key(loaded.config, "benign");
  const ActionSet actions =
      load_action_set(loaded.config.require_string("action_set"));
  const auto detectors = load_detectors(loaded.config);
  const AttackConfig attack = attack_from_config(loaded.config, loaded.seed);
  const DetectorKind target = target_kind(loaded.config);
  const BinaryFeatureSpace space =
      diagnostic_space(detectors, target, loaded.config);

  Corpus attacker_eval;
  attacker_eval.apps = malware.apps;
  attacker_eval.apps.insert(attacker_eval.apps.end(), benign.apps.begin(),
                            benign.apps.end());

  Report report;
  report.seed = loaded.seed;
  report.config_hash = loaded.hash;
  fs::create_directories(loaded.out);
  const Detector* target_detector = nullptr;
  for (const auto& [path, detector] : detectors) {
    const std::string name(to_string(detector.kind()));
    std::vector<AttackResult> results =
        run_attacks(malware, actions, detector, benign, attack);
    save_attack_results(results, loaded.out / ("results_" + name + ".jsonl"));
    DetectorReportRow row = summarize_attacks(name, results, malware, space);
    const DetectorMetrics metrics = evaluate_detector(detector, attacker_eval);
    row.detection_rate = metrics.detection_rate;
    row.false_alarm_rate = metrics.false_alarm_rate;
    std::cout << name << ": ER " << format_double(row.evasion_rate) << " ("
              << row.evaded << "/" << row.detected << " detected)\n";
    report.rows.push_back(std::move(row));
    if (detector.kind() == target) target_detector = &detector;
  }

  if (loaded.config.get_bool("run_baselines", false)) {
    if (!target_detector || target_detector->kind() == DetectorKind::KnnMarkov) {
      throw ConfigError("baselines need a linear target detector");
    }
    BaselineReport baselines;
    baselines.target_detector = std::string(to_string(target));
    std::vector<double> pk_added, random_added, random_queries;
    std::uint64_t pk_evaded = 0, random_evaded = 0;
    const std::uint64_t pk_max =
        loaded.config.get_u64("pk_max_added", std::uint64_t(-1));
    for (const App& app : malware.apps) {
      const SparseVec x = target_detector->binary_space().extract(app);
      if (target_detector->classify_binary(x).label == Label::Benign) continue;
      ++baselines.detected;
      const PkAttackResult pk = pk_attack_linear(x, *target_detector, pk_max);
      if (pk.evaded) {
        ++pk_evaded;
        pk_added.push_back(static_cast<double>(pk.added.size()));
      }
      FeatureOracle oracle(*target_detector, OracleMode::HardLabel);
      const RandomFeatureAttackResult random = random_feature_attack(
          x, oracle, attack.max_queries - 1,
          mix_seed(attack.seed, "random::" + app.id));
      random_queries.push_back(static_cast<double>(random.q_used));
      if (random.evaded) {
        ++random_evaded;
        random_added.push_back(static_cast<double>(random.added.size()));
      }
    }
    if (baselines.detected > 0) {
      baselines.pk_evasion_rate =
          static_cast<double>(pk_evaded) / static_cast<double>(baselines.detected);
      baselines.random_evasion_rate = static_cast<double>(random_evaded) /
                                      static_cast<double>(baselines.detected);
    }
    baselines.pk_added_features = compute_stat(pk_added);
    baselines.random_added_features = compute_stat(random_added);
    baselines.random_queries = compute_stat(random_queries);
    report.baselines = std::move(baselines);
  }

  emit_report(report, loaded.out, ReportFormat::Csv);
  emit_report(report, loaded.out, ReportFormat::Json);
  std::cout << "report written to " << (loaded.out / "report.csv").string()
            << "\n";
  return 0;
}

int cmd_transfer(const CommonArgs& args) {
  LoadedConfig loaded = load_common(args);
  const auto detectors = load_detectors(loaded.config);
  const std::vector<std::string> result_files = loaded.config.get_list("results");
  if (result_files.size() != detectors.size()) {
    throw ConfigError(
        "'results' and 'detectors' must list the same number of files, "
        "surrogate by surrogate");
  }

  TransferMatrix matrix;
  std::vector<const Detector*> targets;
  for (const auto& [path, detector] : detectors) {
    matrix.detectors.emplace_back(to_string(detector.kind()));
    targets.push_back(&detector);
  }
  for (const std::string& file : result_files) {
    const TransferRow row = transferability(load_attack_results(file), targets);
    matrix.evasion_rate.push_back(row.evasion_rate);
    matrix.detected.push_back(row.detected);
  }
  fs::create_directories(loaded.out);
  emit_report(matrix, loaded.out, ReportFormat::Csv);
  emit_report(matrix, loaded.out, ReportFormat::Json);
  std::cout << "transfer matrix written to "
            << (loaded.out / "transfer.csv").string() << "\n";
  return 0;
}

int cmd_report(const CommonArgs& args) {
  LoadedConfig loaded = load_common(args);
  const Corpus malware = load_corpus_key(loaded.config, "malware");
  const Corpus benign = load_corpus_key(loaded.config, "benign");
  const auto detectors = load_detectors(loaded.config);
  const std::vector<std::string> result_files = loaded.config.get_list("results");
  if (result_files.size() != detectors.size()) {
    throw ConfigError(
        "'results' and 'detectors' must list the same number of files");
  }
  const BinaryFeatureSpace space =
      diagnostic_space(detectors, target_kind(loaded.config), loaded.config);

  Corpus attacker_eval;
  attacker_eval.apps = malware.apps;
  attacker_eval.apps.insert(attacker_eval.apps.end(), benign.apps.begin(),
                            benign.apps.end());

  Report report;
  report.seed = loaded.seed;
  report.config_hash = loaded.hash;
  for (std::size_t i = 0; i < detectors.size(); ++i) {
    const Detector& detector = detectors[i].second;
    const std::string name(to_string(detector.kind()));
    DetectorReportRow row = summarize_attacks(
        name, load_attack_results(result_files[i]), malware, space);
    const DetectorMetrics metrics = evaluate_detector(detector, attacker_eval);
    row.detection_rate = metrics.detection_rate;
    row.false_alarm_rate = metrics.false_alarm_rate;
    report.rows.push_back(std::move(row));
  }
  fs::create_directories(loaded.out);
  emit_report(report, loaded.out, ReportFormat::Csv);
  emit_report(report, loaded.out, ReportFormat::Json);
  std::cout << "report written to " << (loaded.out / "report.csv").string()
            << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  LoadedConfig loaded = load_common(args);
  const Corpus malware = load_corpus_key(loaded.config, "malware");
  const Corpus benign = load_corpus_key(loaded.config, "benign");
  const ActionSet actions =
      load_action_set(loaded.config.require_string("action_set"));
  const auto detectors = load_detectors(loaded.config);
  const DetectorKind target = target_kind(loaded.config);
  const AttackConfig attack = attack_from_config(loaded.config, loaded.seed);
  const BinaryFeatureSpace space =
      diagnostic_space(detectors, target, loaded.config);

  const Detector* detector = nullptr;
  for (const auto& [path, d] : detectors) {
    if (d.kind() == target) detector = &d;
  }
  if (!detector) {
    throw ConfigError("sweep: no detector of the target kind was given");
  }

  auto run_point = [&](const AttackConfig& cfg, double x) {
    const std::vector<AttackResult> results =
        run_attacks(malware, actions, *detector, benign, cfg);
    const DetectorReportRow row = summarize_attacks(
        std::string(to_string(target)), results, malware, space);
    SweepPoint point;
    point.x = x;
    point.evasion_rate = row.evasion_rate;
    point.added_binary_features = row.added_binary_features;
    return point;
  };

  fs::create_directories(loaded.out);
  std::vector<std::string> q_values = loaded.config.get_list("q_values");
  if (q_values.empty()) q_values = {"2", "5", "10", "20"};
  std::vector<SweepPoint> q_points;
  for (const std::string& q : q_values) {
    AttackConfig cfg = attack;
    cfg.max_queries = std::stoull(q);
    q_points.push_back(run_point(cfg, static_cast<double>(cfg.max_queries)));
  }
  emit_sweep(q_points, "q", loaded.out / "sweep_q.csv");

  std::vector<std::string> alpha_values = loaded.config.get_list("alpha_values");
  if (alpha_values.empty()) alpha_values = {"10", "30", "50"};
  std::vector<SweepPoint> alpha_points;
  for (const std::string& alpha : alpha_values) {
    AttackConfig cfg = attack;
    cfg.max_cost_percent = std::stod(alpha);
    alpha_points.push_back(run_point(cfg, cfg.max_cost_percent));
  }
  emit_sweep(alpha_points, "alpha", loaded.out / "sweep_alpha.csv");

  std::cout << "sweeps written to " << (loaded.out / "sweep_q.csv").string()
            << " and " << (loaded.out / "sweep_alpha.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box evasion attack simulator for surrogate malware "
               "detectors"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const CommonArgs&);
  };
  const std::vector<Command> commands = {
      {"generate", "Generate a synthetic app corpus", cmd_generate},
      {"split", "Split a corpus into training and attacker partitions", cmd_split},
      {"train", "Train detectors on a training corpus", cmd_train},
      {"prepare", "Select donors and build the action set", cmd_prepare},
      {"attack", "Run query-budgeted attacks and write results + report",
       cmd_attack},
      {"transfer", "Evaluate adversarial examples across detectors", cmd_transfer},
      {"report", "Recompute the report from saved attack results", cmd_report},
      {"sweep", "Re-run attacks across query/cost budgets", cmd_sweep},
  };

  std::map<std::string, CommonArgs> args;
  std::map<std::string, int (*)(const CommonArgs&)> runners;
  for (const Command& command : commands) {
    CLI::App* sub = app.add_subcommand(command.name, command.help);
    CommonArgs& a = args[command.name];
    sub->add_option("-c,--config", a.config_path,
                    "Config file (key = value lines or a JSON object)");
    sub->add_option("-s,--seed", a.seed, "Global seed (overrides the config)");
    sub->add_option("-o,--out", a.out, "Output file or directory");
    runners[command.name] = command.run;
  }

  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return runners[name](args[name]);
  } catch (const HarnessError& e) {
    std::cerr << "evasim " << name << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "evasim " << name << ": stage " << name << ": " << e.what()
              << "\n";
  }
  return 1;
}
