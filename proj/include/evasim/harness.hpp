#ifndef EVASIM_HARNESS_HPP
#define EVASIM_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evasim/attack.hpp"
#include "evasim/corpus.hpp"
#include "evasim/detectors.hpp"
#include "evasim/gadgets.hpp"
#include "evasim/generator.hpp"
#include "evasim/report.hpp"

namespace evasim {

// Weight cap for the hardened SVM; small enough to bind and spread decision
// mass over many features.
inline constexpr double kDefaultSecSvmCap = 0.08;

struct DetectorSpec {
  DetectorKind kind = DetectorKind::LinearSvm;
  SvmParams svm;   // linear kinds
  int knn_k = 5;   // knn kind
};

struct ExperimentConfig {
  GeneratorParams generator;
  SplitSpec split{400, 80, 80, 40, 0};
  std::vector<DetectorSpec> detectors;  // at most one of each kind
  DetectorKind target = DetectorKind::LinearSvm;
  AttackConfig attack;
  bool run_baselines = true;
  std::uint64_t pk_max_added = std::uint64_t(-1);  // unbounded by default
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
};

// Three detectors with default hyperparameters, target = linear SVM.
ExperimentConfig default_experiment_config();

// Pins the sub-stage seeds (split, svm, attack) to streams derived from the
// global seed; called by the config loader, not by run_experiment.
void derive_stage_seeds(ExperimentConfig& config);

std::string experiment_config_hash(const ExperimentConfig& config);

struct HarnessError : std::runtime_error {
  HarnessError(const std::string& stage, const std::string& what)
      : std::runtime_error("stage " + stage + ": " + what), stage_name(stage) {}
  std::string stage_name;
};

// One attack session per malware sample with a fresh query-limited oracle;
// results are ordered by malware id.
std::vector<AttackResult> run_attacks(const Corpus& malware,
                                      const ActionSet& actions,
                                      const Detector& detector,
                                      const Corpus& benign,
                                      const AttackConfig& config);

// Report row for one detector's attack results. Added-feature counts are
// diagnostics diffed against `space`, never visible to the attacker.
DetectorReportRow summarize_attacks(std::string detector_name,
                                    const std::vector<AttackResult>& results,
                                    const Corpus& originals,
                                    const BinaryFeatureSpace& space);

struct TransferRow {
  std::vector<double> evasion_rate;  // one cell per target
  std::uint64_t detected = 0;        // surrogate's denominator
};

// Offline evaluation: every evaded final app is classified by each target
// with no query accounting; cells are over the surrogate's detected set.
TransferRow transferability(const std::vector<AttackResult>& surrogate_results,
                            const std::vector<const Detector*>& targets);

struct ExperimentArtifacts {
  Corpus corpus;
  Corpus training;
  Corpus attacker_benign;
  Corpus attacker_malware;
  BinaryFeatureSpace binary_space;
  MarkovFeatureSpace markov_space;
  std::vector<std::pair<DetectorKind, Detector>> detectors;
  ActionSet actions;
  std::map<std::string, std::vector<AttackResult>> results;  // by kind name
  Report report;
  std::optional<TransferMatrix> transfer;
};

// Full pipeline: generate, split, train, prepare, attack, report. Every
// artifact is persisted under config.out_dir; outputs are byte-stable for a
// fixed config. Throws HarnessError tagged with the failing stage.
ExperimentArtifacts run_experiment(const ExperimentConfig& config);

// Re-runs the attack stage against the target detector at each value and
// reports ER (and the added-feature diagnostic) per point.
std::vector<SweepPoint> sweep_query_budget(const ExperimentArtifacts& artifacts,
                                           const ExperimentConfig& config,
                                           const std::vector<std::uint64_t>& q_values);
std::vector<SweepPoint> sweep_max_cost(const ExperimentArtifacts& artifacts,
                                       const ExperimentConfig& config,
                                       const std::vector<double>& alpha_values);

const Detector& find_detector(const ExperimentArtifacts& artifacts,
                              DetectorKind kind);

}  // namespace evasim

#endif  // EVASIM_HARNESS_HPP
