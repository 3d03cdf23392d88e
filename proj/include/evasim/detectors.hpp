#ifndef EVASIM_DETECTORS_HPP
#define EVASIM_DETECTORS_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evasim/app.hpp"
#include "evasim/oracle.hpp"

namespace evasim {

// Sparse binary indicator vector: indices of present features, ascending.
struct SparseVec {
  std::vector<std::uint32_t> indices;

  bool contains(std::uint32_t i) const;
  bool operator==(const SparseVec&) const = default;
};

// Closed vocabulary over manifest features and "api::"-prefixed API calls,
// built from the training corpus only.
class BinaryFeatureSpace {
 public:
  static BinaryFeatureSpace build(const Corpus& training);
  static BinaryFeatureSpace from_vocabulary(std::vector<std::string> features);

  std::size_t dimension() const { return features_.size(); }
  const std::vector<std::string>& features() const { return features_; }
  std::optional<std::uint32_t> index_of(const std::string& feature) const;

  SparseVec extract(const App& app) const;

 private:
  std::vector<std::string> features_;  // lexicographic, index = position
  std::map<std::string, std::uint32_t> index_;
};

// API-call families seen at training time plus a catch-all; features are the
// row-normalized family-to-family transition frequencies, flattened row-major.
class MarkovFeatureSpace {
 public:
  static MarkovFeatureSpace build(const Corpus& training);
  static MarkovFeatureSpace from_families(std::vector<std::string> families);

  std::size_t family_count() const { return families_.size(); }
  std::size_t dimension() const { return families_.size() * families_.size(); }
  const std::vector<std::string>& families() const { return families_; }

  std::vector<double> extract(const App& app) const;

 private:
  std::size_t family_index(std::string_view family) const;

  std::vector<std::string> families_;  // sorted, catch-all "other" included
};

enum class DetectorKind { LinearSvm, SecSvm, KnnMarkov };

std::string_view to_string(DetectorKind kind);
DetectorKind detector_kind_from_string(std::string_view s);

struct SvmParams {
  int epochs = 60;
  double lambda = 1e-3;    // L2 strength
  double eta0 = 0.5;       // initial step size
  double pos_weight = 1.0; // extra step weight on malware samples
  std::uint64_t seed = 0;
  // Per-coordinate weight cap; infinity disables the projection and the
  // hardened variant degenerates to the plain one.
  double w_cap = std::numeric_limits<double>::infinity();
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A trained detector. Immutable after training; queries are pure.
class Detector {
 public:
  DetectorKind kind() const { return kind_; }
  double threshold() const { return threshold_; }

  // Label plus benign score; malware wins at the threshold.
  QueryAnswer classify(const App& app) const;
  double benign_score(const App& app) const;

  // Feature-space decision path for the binary-feature kinds.
  double benign_score_binary(const SparseVec& x) const;
  QueryAnswer classify_binary(const SparseVec& x) const;

  const BinaryFeatureSpace& binary_space() const;
  const MarkovFeatureSpace& markov_space() const;
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }
  int knn_k() const { return knn_k_; }

  void save(const std::filesystem::path& path) const;
  static Detector load(const std::filesystem::path& path);

  friend Detector train_linear_svm(const Corpus&, const BinaryFeatureSpace&,
                                   const SvmParams&);
  friend Detector train_sec_svm(const Corpus&, const BinaryFeatureSpace&,
                                const SvmParams&);
  friend Detector train_knn_markov(const Corpus&, const MarkovFeatureSpace&,
                                   int k);

 private:
  DetectorKind kind_ = DetectorKind::LinearSvm;
  double threshold_ = 0.0;

  // Linear kinds.
  std::optional<BinaryFeatureSpace> binary_space_;
  std::vector<double> weights_;
  double bias_ = 0.0;

  // KNN kind.
  std::optional<MarkovFeatureSpace> markov_space_;
  std::vector<std::vector<double>> train_vectors_;
  std::vector<Label> train_labels_;
  int knn_k_ = 0;
};

// Hinge-loss subgradient training with a fixed seeded schedule; decision is
// malware iff w.x + b >= 0.
Detector train_linear_svm(const Corpus& training, const BinaryFeatureSpace& space,
                          const SvmParams& params);

// Same schedule with per-step projection of each weight into [-w_cap, w_cap],
// spreading decision mass over more features.
Detector train_sec_svm(const Corpus& training, const BinaryFeatureSpace& space,
                       const SvmParams& params);

// Majority vote among the k nearest training vectors by Euclidean distance;
// ties go to malware. benign_score = benign neighbors / k.
Detector train_knn_markov(const Corpus& training, const MarkovFeatureSpace& space,
                          int k);

struct DetectorMetrics {
  std::optional<double> detection_rate;   // absent when no malware in test
  std::optional<double> false_alarm_rate; // absent when no benign in test
  std::uint64_t true_positives = 0;
  std::uint64_t false_negatives = 0;
  std::uint64_t false_positives = 0;
  std::uint64_t true_negatives = 0;
};

DetectorMetrics evaluate_detector(const Detector& detector, const Corpus& test);

// Query-counting wrapper around a detector. One instance per attack session;
// the counter is not synchronized.
class DetectorOracle final : public BlackBoxOracle {
 public:
  DetectorOracle(const Detector& detector, OracleMode mode,
                 std::optional<std::uint64_t> query_limit = std::nullopt);

  QueryAnswer query(const App& app) override;
  std::uint64_t query_count() const override { return query_count_; }
  OracleMode mode() const override { return mode_; }
  std::optional<std::uint64_t> query_limit() const { return query_limit_; }

 private:
  const Detector& detector_;
  OracleMode mode_;
  std::optional<std::uint64_t> query_limit_;
  std::uint64_t query_count_ = 0;
};

// Same contract for feature-space baselines: answers queries on sparse
// binary vectors directly. Only valid for the linear detector kinds.
class FeatureOracle {
 public:
  FeatureOracle(const Detector& detector, OracleMode mode,
                std::optional<std::uint64_t> query_limit = std::nullopt);

  QueryAnswer query(const SparseVec& x);
  std::uint64_t query_count() const { return query_count_; }
  OracleMode mode() const { return mode_; }
  // The feature-space dimension is visible here: the baselines that use this
  // adapter are gray-box and know the vocabulary they perturb.
  std::size_t dimension() const { return detector_.binary_space().dimension(); }

 private:
  const Detector& detector_;
  OracleMode mode_;
  std::optional<std::uint64_t> query_limit_;
  std::uint64_t query_count_ = 0;
};

}  // namespace evasim

#endif  // EVASIM_DETECTORS_HPP
