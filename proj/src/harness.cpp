#include "evasim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "evasim/baselines.hpp"
#include "evasim/rng.hpp"
#include "json_util.hpp"

namespace evasim {
namespace {

using detail::ordered_json;

ordered_json generator_to_json(const GeneratorParams& p) {
  ordered_json j;
  j["benign_count"] = p.benign_count;
  j["malware_count"] = p.malware_count;
  j["classes_min"] = p.classes_min;
  j["classes_max"] = p.classes_max;
  j["methods_min"] = p.methods_min;
  j["methods_max"] = p.methods_max;
  j["opcodes_min"] = p.opcodes_min;
  j["opcodes_max"] = p.opcodes_max;
  j["apis_per_method_min"] = p.apis_per_method_min;
  j["apis_per_method_max"] = p.apis_per_method_max;
  j["manifest_min"] = p.manifest_min;
  j["manifest_max"] = p.manifest_max;
  j["shared_api_pool"] = p.shared_api_pool;
  j["benign_api_pool"] = p.benign_api_pool;
  j["malware_api_pool"] = p.malware_api_pool;
  j["shared_manifest_pool"] = p.shared_manifest_pool;
  j["benign_manifest_pool"] = p.benign_manifest_pool;
  j["malware_manifest_pool"] = p.malware_manifest_pool;
  j["benign_app_benign_rate"] = p.benign_app_benign_rate;
  j["malware_app_malware_rate"] = p.malware_app_malware_rate;
  j["malware_app_benign_rate"] = p.malware_app_benign_rate;
  j["malware_manifest_rate"] = p.malware_manifest_rate;
  j["benign_manifest_rate"] = p.benign_manifest_rate;
  j["helper_ref_rate"] = p.helper_ref_rate;
  j["opcode_bias_benign"] = p.opcode_bias_benign;
  j["opcode_bias_malware"] = p.opcode_bias_malware;
  j["size_extra_min"] = p.size_extra_min;
  j["size_extra_max"] = p.size_extra_max;
  return j;
}

ordered_json config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["generator"] = generator_to_json(c.generator);
  j["split"] = ordered_json{{"training_benign", c.split.training_benign},
                            {"training_malware", c.split.training_malware},
                            {"attacker_benign", c.split.attacker_benign},
                            {"attacker_malware", c.split.attacker_malware},
                            {"seed", c.split.seed}};
  ordered_json detectors = ordered_json::array();
  for (const DetectorSpec& spec : c.detectors) {
    ordered_json jd;
    jd["kind"] = std::string(to_string(spec.kind));
    if (spec.kind == DetectorKind::KnnMarkov) {
      jd["k"] = spec.knn_k;
    } else {
      jd["epochs"] = spec.svm.epochs;
      jd["lambda"] = spec.svm.lambda;
      jd["eta0"] = spec.svm.eta0;
      jd["seed"] = spec.svm.seed;
      jd["w_cap"] = std::isfinite(spec.svm.w_cap)
                        ? ordered_json(spec.svm.w_cap)
                        : ordered_json("inf");
    }
    detectors.push_back(std::move(jd));
  }
  j["detectors"] = std::move(detectors);
  j["target"] = std::string(to_string(c.target));
  j["attack"] = ordered_json{
      {"max_queries", c.attack.max_queries},
      {"max_cost_percent", c.attack.max_cost_percent},
      {"mode", c.attack.mode == OracleMode::SoftLabel ? "soft_label" : "hard_label"},
      {"n", c.attack.n},
      {"seed", c.attack.seed},
      {"redraw_rejected", c.attack.redraw_rejected}};
  j["run_baselines"] = c.run_baselines;
  j["pk_max_added"] = c.pk_max_added;
  return j;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const HarnessError&) {
    throw;
  } catch (const std::exception& e) {
    throw HarnessError(name, e.what());
  }
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig config;
  DetectorSpec linear;
  linear.kind = DetectorKind::LinearSvm;
  DetectorSpec sec;
  sec.kind = DetectorKind::SecSvm;
  sec.svm.w_cap = kDefaultSecSvmCap;
  DetectorSpec knn;
  knn.kind = DetectorKind::KnnMarkov;
  knn.knn_k = 5;
  config.detectors = {linear, sec, knn};
  return config;
}

void derive_stage_seeds(ExperimentConfig& config) {
  config.split.seed = mix_seed(config.seed, "split");
  for (DetectorSpec& spec : config.detectors) {
    spec.svm.seed = mix_seed(config.seed, "svm");
  }
  config.attack.seed = mix_seed(config.seed, "attack");
}

std::string experiment_config_hash(const ExperimentConfig& config) {
  return hex64(fnv1a64(config_to_json(config).dump()));
}

std::vector<AttackResult> run_attacks(const Corpus& malware,
                                      const ActionSet& actions,
                                      const Detector& detector,
                                      const Corpus& benign,
                                      const AttackConfig& config) {
  std::vector<AttackResult> results;
  results.reserve(malware.apps.size());
  for (const App& app : malware.apps) {
    DetectorOracle oracle(detector, config.mode, config.max_queries);
    AttackResult result =
        random_search_attack(app, actions, oracle, benign, config);
    if (oracle.query_count() != result.q_used) {
      throw std::logic_error("query ledger mismatch for '" + app.id + "'");
    }
    results.push_back(std::move(result));
  }
  std::sort(results.begin(), results.end(),
            [](const AttackResult& a, const AttackResult& b) {
              return a.malware_id < b.malware_id;
            });
  return results;
}

DetectorReportRow summarize_attacks(std::string detector_name,
                                    const std::vector<AttackResult>& results,
                                    const Corpus& originals,
                                    const BinaryFeatureSpace& space) {
  DetectorReportRow row;
  row.detector = std::move(detector_name);
  row.attacked = results.size();
  std::vector<double> queries, transformations, size_pct, api_calls, features;
  for (const AttackResult& result : results) {
    if (!result.initially_detected) continue;
    ++row.detected;
    if (!result.evaded) continue;
    ++row.evaded;
    queries.push_back(static_cast<double>(result.q_used));
    transformations.push_back(static_cast<double>(result.delta.size()));
    size_pct.push_back(result.cost_percent);
    const App* original = originals.find(result.malware_id);
    if (!original || !result.final_app) {
      throw std::invalid_argument("summarize_attacks: missing app for '" +
                                  result.malware_id + "'");
    }
    api_calls.push_back(static_cast<double>(app_total_api_calls(*result.final_app)) -
                        static_cast<double>(app_total_api_calls(*original)));
    features.push_back(
        static_cast<double>(space.extract(*result.final_app).indices.size()) -
        static_cast<double>(space.extract(*original).indices.size()));
  }
  row.evasion_rate = row.detected == 0
                         ? 0.0
                         : static_cast<double>(row.evaded) /
                               static_cast<double>(row.detected);
  row.queries = compute_stat(queries);
  row.transformations = compute_stat(transformations);
  row.size_increase_pct = compute_stat(size_pct);
  row.added_api_calls = compute_stat(api_calls);
  row.added_binary_features = compute_stat(features);
  return row;
}

TransferRow transferability(const std::vector<AttackResult>& surrogate_results,
                            const std::vector<const Detector*>& targets) {
  if (surrogate_results.empty()) {
    throw std::invalid_argument("transferability: empty result list");
  }
  TransferRow row;
  row.evasion_rate.assign(targets.size(), 0.0);
  std::vector<std::uint64_t> hits(targets.size(), 0);
  for (const AttackResult& result : surrogate_results) {
    if (!result.initially_detected) continue;
    ++row.detected;
    if (!result.evaded) continue;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (targets[t]->classify(*result.final_app).label == Label::Benign) {
        ++hits[t];
      }
    }
  }
  if (row.detected > 0) {
    for (std::size_t t = 0; t < targets.size(); ++t) {
      row.evasion_rate[t] =
          static_cast<double>(hits[t]) / static_cast<double>(row.detected);
    }
  }
  return row;
}

const Detector& find_detector(const ExperimentArtifacts& artifacts,
                              DetectorKind kind) {
  for (const auto& [k, detector] : artifacts.detectors) {
    if (k == kind) return detector;
  }
  throw std::invalid_argument("no detector of kind '" +
                              std::string(to_string(kind)) + "' in experiment");
}

ExperimentArtifacts run_experiment(const ExperimentConfig& config) {
  if (config.detectors.empty()) {
    throw HarnessError("train", "no detectors configured");
  }
  if (config.out_dir.empty()) {
    throw HarnessError("setup", "output directory not set");
  }
  std::filesystem::create_directories(config.out_dir);
  const auto out = [&](std::string_view name) {
    return config.out_dir / name;
  };

  ExperimentArtifacts artifacts;

  stage("generate", [&] {
    artifacts.corpus = generate_synthetic_corpus(config.generator, config.seed);
    save_corpus(artifacts.corpus, out("corpus.jsonl"));
  });

  stage("split", [&] {
    CorpusSplit split = split_corpus(artifacts.corpus, config.split);
    artifacts.training = std::move(split.training);
    artifacts.attacker_benign = std::move(split.attacker_benign);
    artifacts.attacker_malware = std::move(split.attacker_malware);
    save_corpus(artifacts.training, out("training.jsonl"));
    save_corpus(artifacts.attacker_benign, out("attacker_benign.jsonl"));
    save_corpus(artifacts.attacker_malware, out("attacker_malware.jsonl"));
  });

  stage("train", [&] {
    artifacts.binary_space = BinaryFeatureSpace::build(artifacts.training);
    artifacts.markov_space = MarkovFeatureSpace::build(artifacts.training);
    for (const DetectorSpec& spec : config.detectors) {
      for (const auto& [kind, unused] : artifacts.detectors) {
        if (kind == spec.kind) {
          throw std::invalid_argument("duplicate detector kind '" +
                                      std::string(to_string(kind)) + "'");
        }
      }
      Detector detector = [&] {
        switch (spec.kind) {
          case DetectorKind::LinearSvm:
            return train_linear_svm(artifacts.training, artifacts.binary_space,
                                    spec.svm);
          case DetectorKind::SecSvm:
            return train_sec_svm(artifacts.training, artifacts.binary_space,
                                 spec.svm);
          case DetectorKind::KnnMarkov:
            return train_knn_markov(artifacts.training, artifacts.markov_space,
                                    spec.knn_k);
        }
        throw std::invalid_argument("unknown detector kind");
      }();
      detector.save(out("detector_" + std::string(to_string(spec.kind)) + ".json"));
      artifacts.detectors.emplace_back(spec.kind, std::move(detector));
    }
  });

  stage("prepare", [&] {
    std::vector<DonorSelection> selections = select_donors(
        artifacts.attacker_malware, artifacts.attacker_benign, config.attack.n);
    artifacts.actions = build_action_set(
        donor_pool(selections, artifacts.attacker_benign));
    artifacts.actions.provenance = std::move(selections);
    save_action_set(artifacts.actions, out("action_set.jsonl"));
    std::ofstream donors(out("donors.csv"), std::ios::trunc);
    donors << "malware_id,donor_id,similarity\n";
    for (const DonorSelection& sel : artifacts.actions.provenance) {
      donors << sel.malware_id << ',' << sel.donor_id << ','
             << format_double(sel.similarity) << '\n';
    }
  });

  stage("attack", [&] {
    for (const auto& [kind, detector] : artifacts.detectors) {
      std::vector<AttackResult> results =
          run_attacks(artifacts.attacker_malware, artifacts.actions, detector,
                      artifacts.attacker_benign, config.attack);
      save_attack_results(
          results, out("results_" + std::string(to_string(kind)) + ".jsonl"));
      artifacts.results.emplace(std::string(to_string(kind)), std::move(results));
    }
  });

  stage("report", [&] {
    artifacts.report.seed = config.seed;
    artifacts.report.config_hash = experiment_config_hash(config);

    Corpus attacker_eval;
    attacker_eval.apps = artifacts.attacker_malware.apps;
    attacker_eval.apps.insert(attacker_eval.apps.end(),
                              artifacts.attacker_benign.apps.begin(),
                              artifacts.attacker_benign.apps.end());

    for (const auto& [kind, detector] : artifacts.detectors) {
      const std::string name(to_string(kind));
      DetectorReportRow row =
          summarize_attacks(name, artifacts.results.at(name),
                            artifacts.attacker_malware, artifacts.binary_space);
      const DetectorMetrics metrics = evaluate_detector(detector, attacker_eval);
      row.detection_rate = metrics.detection_rate;
      row.false_alarm_rate = metrics.false_alarm_rate;
      artifacts.report.rows.push_back(std::move(row));
    }

    if (config.run_baselines) {
      const Detector& target = find_detector(artifacts, config.target);
      if (target.kind() == DetectorKind::KnnMarkov) {
        throw std::invalid_argument(
            "feature-space baselines need a linear target detector");
      }
      BaselineReport baselines;
      baselines.target_detector = std::string(to_string(config.target));
      std::vector<double> pk_added, random_added, random_queries;
      std::uint64_t pk_evaded = 0;
      std::uint64_t random_evaded = 0;
      for (const App& app : artifacts.attacker_malware.apps) {
        const SparseVec x = artifacts.binary_space.extract(app);
        if (target.classify_binary(x).label == Label::Benign) continue;
        ++baselines.detected;

        const PkAttackResult pk = pk_attack_linear(x, target, config.pk_max_added);
        if (pk.evaded) {
          ++pk_evaded;
          pk_added.push_back(static_cast<double>(pk.added.size()));
        }

        FeatureOracle oracle(target, OracleMode::HardLabel);
        const RandomFeatureAttackResult random = random_feature_attack(
            x, oracle, config.attack.max_queries - 1,
            mix_seed(config.attack.seed, "random::" + app.id));
        random_queries.push_back(static_cast<double>(random.q_used));
        if (random.evaded) {
          ++random_evaded;
          random_added.push_back(static_cast<double>(random.added.size()));
        }
      }
      if (baselines.detected > 0) {
        baselines.pk_evasion_rate = static_cast<double>(pk_evaded) /
                                    static_cast<double>(baselines.detected);
        baselines.random_evasion_rate = static_cast<double>(random_evaded) /
                                        static_cast<double>(baselines.detected);
      }
      baselines.pk_added_features = compute_stat(pk_added);
      baselines.random_added_features = compute_stat(random_added);
      baselines.random_queries = compute_stat(random_queries);
      artifacts.report.baselines = std::move(baselines);
    }

    emit_report(artifacts.report, config.out_dir, ReportFormat::Csv);
    emit_report(artifacts.report, config.out_dir, ReportFormat::Json);
  });

  if (artifacts.detectors.size() >= 2) {
    stage("transfer", [&] {
      TransferMatrix matrix;
      std::vector<const Detector*> targets;
      for (const auto& [kind, detector] : artifacts.detectors) {
        matrix.detectors.emplace_back(to_string(kind));
        targets.push_back(&detector);
      }
      for (const std::string& name : matrix.detectors) {
        TransferRow row = transferability(artifacts.results.at(name), targets);
        matrix.evasion_rate.push_back(std::move(row.evasion_rate));
        matrix.detected.push_back(row.detected);
      }
      emit_report(matrix, config.out_dir, ReportFormat::Csv);
      emit_report(matrix, config.out_dir, ReportFormat::Json);
      artifacts.transfer = std::move(matrix);
    });
  }

  return artifacts;
}

namespace {

SweepPoint sweep_point(const ExperimentArtifacts& artifacts,
                       const ExperimentConfig& config,
                       const AttackConfig& attack, double x) {
  const Detector& target = find_detector(artifacts, config.target);
  std::vector<AttackResult> results =
      run_attacks(artifacts.attacker_malware, artifacts.actions, target,
                  artifacts.attacker_benign, attack);
  DetectorReportRow row =
      summarize_attacks(std::string(to_string(config.target)), results,
                        artifacts.attacker_malware, artifacts.binary_space);
  SweepPoint point;
  point.x = x;
  point.evasion_rate = row.evasion_rate;
  point.added_binary_features = row.added_binary_features;
  return point;
}

}  // namespace

std::vector<SweepPoint> sweep_query_budget(
    const ExperimentArtifacts& artifacts, const ExperimentConfig& config,
    const std::vector<std::uint64_t>& q_values) {
  std::vector<SweepPoint> points;
  for (std::uint64_t q : q_values) {
    AttackConfig attack = config.attack;
    attack.max_queries = q;
    points.push_back(
        sweep_point(artifacts, config, attack, static_cast<double>(q)));
  }
  return points;
}

std::vector<SweepPoint> sweep_max_cost(const ExperimentArtifacts& artifacts,
                                       const ExperimentConfig& config,
                                       const std::vector<double>& alpha_values) {
  std::vector<SweepPoint> points;
  for (double alpha : alpha_values) {
    AttackConfig attack = config.attack;
    attack.max_cost_percent = alpha;
    points.push_back(sweep_point(artifacts, config, attack, alpha));
  }
  return points;
}

}  // namespace evasim
