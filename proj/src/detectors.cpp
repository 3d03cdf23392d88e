#include "evasim/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "evasim/rng.hpp"
#include "json_util.hpp"

namespace evasim {
namespace {

using detail::json;
using detail::ordered_json;

constexpr int kDetectorFileVersion = 1;

std::vector<std::string> app_feature_strings(const App& app) {
  std::vector<std::string> features(app.manifest_features.begin(),
                                    app.manifest_features.end());
  for (const ClassDef& cls : app.classes) {
    for (const MethodDef& method : cls.methods) {
      for (const std::string& call : method.api_calls) {
        features.push_back("api::" + call);
      }
    }
  }
  return features;
}

double dot_sparse(const std::vector<double>& w, const SparseVec& x) {
  double sum = 0.0;
  for (std::uint32_t i : x.indices) sum += w[i];
  return sum;
}

}  // namespace

bool SparseVec::contains(std::uint32_t i) const {
  return std::binary_search(indices.begin(), indices.end(), i);
}

BinaryFeatureSpace BinaryFeatureSpace::build(const Corpus& training) {
  std::set<std::string> vocabulary;
  for (const App& app : training.apps) {
    for (std::string& f : app_feature_strings(app)) {
      vocabulary.insert(std::move(f));
    }
  }
  return from_vocabulary({vocabulary.begin(), vocabulary.end()});
}

BinaryFeatureSpace BinaryFeatureSpace::from_vocabulary(
    std::vector<std::string> features) {
  if (!std::is_sorted(features.begin(), features.end())) {
    std::sort(features.begin(), features.end());
  }
  BinaryFeatureSpace space;
  space.features_ = std::move(features);
  for (std::uint32_t i = 0; i < space.features_.size(); ++i) {
    space.index_.emplace(space.features_[i], i);
  }
  return space;
}

std::optional<std::uint32_t> BinaryFeatureSpace::index_of(
    const std::string& feature) const {
  auto it = index_.find(feature);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SparseVec BinaryFeatureSpace::extract(const App& app) const {
  SparseVec x;
  for (const std::string& f : app_feature_strings(app)) {
    if (auto idx = index_of(f)) x.indices.push_back(*idx);
  }
  std::sort(x.indices.begin(), x.indices.end());
  x.indices.erase(std::unique(x.indices.begin(), x.indices.end()),
                  x.indices.end());
  return x;
}

MarkovFeatureSpace MarkovFeatureSpace::build(const Corpus& training) {
  std::set<std::string> families{"other"};
  for (const App& app : training.apps) {
    for (const ClassDef& cls : app.classes) {
      for (const MethodDef& method : cls.methods) {
        for (const std::string& call : method.api_calls) {
          families.insert(std::string(api_family(call)));
        }
      }
    }
  }
  return from_families({families.begin(), families.end()});
}

MarkovFeatureSpace MarkovFeatureSpace::from_families(
    std::vector<std::string> families) {
  if (!std::is_sorted(families.begin(), families.end())) {
    std::sort(families.begin(), families.end());
  }
  MarkovFeatureSpace space;
  space.families_ = std::move(families);
  return space;
}

std::size_t MarkovFeatureSpace::family_index(std::string_view family) const {
  auto it = std::lower_bound(families_.begin(), families_.end(), family);
  if (it != families_.end() && *it == family) {
    return static_cast<std::size_t>(it - families_.begin());
  }
  // unseen family -> catch-all
  auto other = std::lower_bound(families_.begin(), families_.end(),
                                std::string_view("other"));
  return static_cast<std::size_t>(other - families_.begin());
}

std::vector<double> MarkovFeatureSpace::extract(const App& app) const {
  const std::size_t f = families_.size();
  std::vector<double> counts(f * f, 0.0);
  for (const ClassDef& cls : app.classes) {
    for (const MethodDef& method : cls.methods) {
      for (std::size_t i = 1; i < method.api_calls.size(); ++i) {
        const std::size_t from = family_index(api_family(method.api_calls[i - 1]));
        const std::size_t to = family_index(api_family(method.api_calls[i]));
        counts[from * f + to] += 1.0;
      }
    }
  }
  for (std::size_t row = 0; row < f; ++row) {
    const double total = std::accumulate(counts.begin() + row * f,
                                         counts.begin() + (row + 1) * f, 0.0);
    if (total > 0.0) {
      for (std::size_t col = 0; col < f; ++col) counts[row * f + col] /= total;
    }
  }
  return counts;
}

std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::LinearSvm: return "linear_svm";
    case DetectorKind::SecSvm: return "sec_svm";
    case DetectorKind::KnnMarkov: return "knn_markov";
  }
  return "unknown";
}

DetectorKind detector_kind_from_string(std::string_view s) {
  if (s == "linear_svm") return DetectorKind::LinearSvm;
  if (s == "sec_svm") return DetectorKind::SecSvm;
  if (s == "knn_markov") return DetectorKind::KnnMarkov;
  throw std::invalid_argument("unknown detector kind: " + std::string(s));
}

namespace {

struct SvmFit {
  std::vector<double> weights;
  double bias = 0.0;
};

SvmFit fit_svm(const Corpus& training, const BinaryFeatureSpace& space,
               const SvmParams& params) {
  std::vector<SparseVec> xs;
  std::vector<double> ys;  // +1 malware, -1 benign
  bool has_malware = false;
  bool has_benign = false;
  for (const App& app : training.apps) {
    xs.push_back(space.extract(app));
    const bool malware = app.label == Label::Malware;
    ys.push_back(malware ? 1.0 : -1.0);
    (malware ? has_malware : has_benign) = true;
  }
  if (!has_malware || !has_benign) {
    throw TrainingError("svm training needs both labels in the corpus");
  }
  if (!(params.w_cap > 0.0)) {
    throw TrainingError("w_cap must be positive");
  }

  std::vector<double> w(space.dimension(), 0.0);
  double b = 0.0;
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);

  Rng rng(params.seed);
  const bool capped = std::isfinite(params.w_cap);
  std::uint64_t t = 0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t idx : order) {
      ++t;
      const double eta =
          params.eta0 / (1.0 + params.eta0 * params.lambda * static_cast<double>(t));
      const double margin = ys[idx] * (dot_sparse(w, xs[idx]) + b);
      const double shrink = 1.0 - eta * params.lambda;
      for (double& wi : w) wi *= shrink;
      if (margin < 1.0) {
        const double step =
            eta * ys[idx] * (ys[idx] > 0.0 ? params.pos_weight : 1.0);
        for (std::uint32_t i : xs[idx].indices) {
          w[i] += step;
          if (capped) w[i] = std::clamp(w[i], -params.w_cap, params.w_cap);
        }
        b += step;
      }
    }
  }

  return {std::move(w), b};
}

}  // namespace

Detector train_linear_svm(const Corpus& training, const BinaryFeatureSpace& space,
                          const SvmParams& params) {
  SvmParams uncapped = params;
  uncapped.w_cap = std::numeric_limits<double>::infinity();
  SvmFit fit = fit_svm(training, space, uncapped);
  Detector detector;
  detector.kind_ = DetectorKind::LinearSvm;
  detector.threshold_ = 0.0;
  detector.binary_space_ = space;
  detector.weights_ = std::move(fit.weights);
  detector.bias_ = fit.bias;
  return detector;
}

Detector train_sec_svm(const Corpus& training, const BinaryFeatureSpace& space,
                       const SvmParams& params) {
  SvmFit fit = fit_svm(training, space, params);
  Detector detector;
  detector.kind_ = DetectorKind::SecSvm;
  detector.threshold_ = 0.0;
  detector.binary_space_ = space;
  detector.weights_ = std::move(fit.weights);
  detector.bias_ = fit.bias;
  return detector;
}

Detector train_knn_markov(const Corpus& training, const MarkovFeatureSpace& space,
                          int k) {
  if (training.apps.empty()) throw TrainingError("knn training corpus is empty");
  if (k < 1 || static_cast<std::size_t>(k) > training.apps.size()) {
    throw TrainingError("knn: k out of range [1, " +
                        std::to_string(training.apps.size()) + "]");
  }
  Detector detector;
  detector.kind_ = DetectorKind::KnnMarkov;
  detector.threshold_ = 0.5;
  detector.markov_space_ = space;
  detector.knn_k_ = k;
  for (const App& app : training.apps) {
    detector.train_vectors_.push_back(space.extract(app));
    detector.train_labels_.push_back(app.label);
  }
  return detector;
}

const BinaryFeatureSpace& Detector::binary_space() const {
  if (!binary_space_) throw std::logic_error("detector has no binary space");
  return *binary_space_;
}

const MarkovFeatureSpace& Detector::markov_space() const {
  if (!markov_space_) throw std::logic_error("detector has no markov space");
  return *markov_space_;
}

double Detector::benign_score_binary(const SparseVec& x) const {
  if (kind_ == DetectorKind::KnnMarkov) {
    throw std::logic_error("binary decision path on a knn detector");
  }
  return -(dot_sparse(weights_, x) + bias_);
}

QueryAnswer Detector::classify_binary(const SparseVec& x) const {
  const double score = benign_score_binary(x);
  return {score > threshold_ ? Label::Benign : Label::Malware, score};
}

double Detector::benign_score(const App& app) const {
  switch (kind_) {
    case DetectorKind::LinearSvm:
    case DetectorKind::SecSvm:
      return benign_score_binary(binary_space().extract(app));
    case DetectorKind::KnnMarkov: {
      const std::vector<double> x = markov_space().extract(app);
      // (squared distance, training index); index breaks exact ties
      std::vector<std::pair<double, std::size_t>> dist;
      dist.reserve(train_vectors_.size());
      for (std::size_t i = 0; i < train_vectors_.size(); ++i) {
        const std::vector<double>& v = train_vectors_[i];
        double d2 = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) {
          const double diff = x[j] - v[j];
          d2 += diff * diff;
        }
        dist.emplace_back(d2, i);
      }
      const auto k = static_cast<std::size_t>(knn_k_);
      std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
      std::size_t benign = 0;
      for (std::size_t i = 0; i < k; ++i) {
        if (train_labels_[dist[i].second] == Label::Benign) ++benign;
      }
      return static_cast<double>(benign) / static_cast<double>(k);
    }
  }
  throw std::logic_error("unreachable detector kind");
}

QueryAnswer Detector::classify(const App& app) const {
  const double score = benign_score(app);
  return {score > threshold_ ? Label::Benign : Label::Malware, score};
}

DetectorMetrics evaluate_detector(const Detector& detector, const Corpus& test) {
  if (test.apps.empty()) {
    throw std::invalid_argument("evaluate_detector: empty test corpus");
  }
  DetectorMetrics m;
  for (const App& app : test.apps) {
    const Label predicted = detector.classify(app).label;
    if (app.label == Label::Malware) {
      (predicted == Label::Malware ? m.true_positives : m.false_negatives)++;
    } else {
      (predicted == Label::Malware ? m.false_positives : m.true_negatives)++;
    }
  }
  if (m.true_positives + m.false_negatives > 0) {
    m.detection_rate = static_cast<double>(m.true_positives) /
                       static_cast<double>(m.true_positives + m.false_negatives);
  }
  if (m.false_positives + m.true_negatives > 0) {
    m.false_alarm_rate =
        static_cast<double>(m.false_positives) /
        static_cast<double>(m.false_positives + m.true_negatives);
  }
  return m;
}

void Detector::save(const std::filesystem::path& path) const {
  ordered_json j;
  j["version"] = kDetectorFileVersion;
  j["kind"] = std::string(to_string(kind_));
  j["threshold"] = threshold_;
  switch (kind_) {
    case DetectorKind::LinearSvm:
    case DetectorKind::SecSvm:
      j["vocabulary"] = binary_space().features();
      j["weights"] = weights_;
      j["bias"] = bias_;
      break;
    case DetectorKind::KnnMarkov: {
      j["families"] = markov_space().families();
      j["k"] = knn_k_;
      j["train_vectors"] = train_vectors_;
      ordered_json labels = ordered_json::array();
      for (Label label : train_labels_) {
        labels.push_back(std::string(to_string(label)));
      }
      j["train_labels"] = std::move(labels);
      break;
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write detector file: " + path.string());
  out << j.dump(2) << '\n';
}

Detector Detector::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open detector file: " + path.string());
  json j = json::parse(in);
  if (detail::require(j, "version", "detector").get<int>() != kDetectorFileVersion) {
    throw std::runtime_error("unsupported detector file version in " +
                             path.string());
  }
  Detector d;
  d.kind_ = detector_kind_from_string(
      detail::require(j, "kind", "detector").get<std::string>());
  d.threshold_ = detail::require(j, "threshold", "detector").get<double>();
  switch (d.kind_) {
    case DetectorKind::LinearSvm:
    case DetectorKind::SecSvm: {
      detail::reject_unknown_fields(
          j, {"version", "kind", "threshold", "vocabulary", "weights", "bias"},
          "detector");
      d.binary_space_ = BinaryFeatureSpace::from_vocabulary(
          detail::require(j, "vocabulary", "detector")
              .get<std::vector<std::string>>());
      d.weights_ =
          detail::require(j, "weights", "detector").get<std::vector<double>>();
      d.bias_ = detail::require(j, "bias", "detector").get<double>();
      if (d.weights_.size() != d.binary_space_->dimension()) {
        throw std::runtime_error("detector file: weight/vocabulary size mismatch");
      }
      break;
    }
    case DetectorKind::KnnMarkov: {
      detail::reject_unknown_fields(j,
                                    {"version", "kind", "threshold", "families",
                                     "k", "train_vectors", "train_labels"},
                                    "detector");
      d.markov_space_ = MarkovFeatureSpace::from_families(
          detail::require(j, "families", "detector")
              .get<std::vector<std::string>>());
      d.knn_k_ = detail::require(j, "k", "detector").get<int>();
      d.train_vectors_ = detail::require(j, "train_vectors", "detector")
                             .get<std::vector<std::vector<double>>>();
      for (const json& label :
           detail::require(j, "train_labels", "detector")) {
        d.train_labels_.push_back(label_from_string(label.get<std::string>()));
      }
      if (d.train_vectors_.size() != d.train_labels_.size() ||
          d.train_vectors_.empty() || d.knn_k_ < 1 ||
          static_cast<std::size_t>(d.knn_k_) > d.train_vectors_.size()) {
        throw std::runtime_error("detector file: inconsistent knn payload");
      }
      const std::size_t dim = d.markov_space_->dimension();
      for (const auto& v : d.train_vectors_) {
        if (v.size() != dim) {
          throw std::runtime_error("detector file: train vector dimension mismatch");
        }
      }
      break;
    }
  }
  return d;
}

DetectorOracle::DetectorOracle(const Detector& detector, OracleMode mode,
                               std::optional<std::uint64_t> query_limit)
    : detector_(detector), mode_(mode), query_limit_(query_limit) {}

QueryAnswer DetectorOracle::query(const App& app) {
  if (query_limit_ && query_count_ >= *query_limit_) {
    throw QueryBudgetExhausted("query budget exhausted (limit " +
                               std::to_string(*query_limit_) + ")");
  }
  ++query_count_;
  QueryAnswer answer = detector_.classify(app);
  if (mode_ == OracleMode::HardLabel) answer.benign_score.reset();
  return answer;
}

FeatureOracle::FeatureOracle(const Detector& detector, OracleMode mode,
                             std::optional<std::uint64_t> query_limit)
    : detector_(detector), mode_(mode), query_limit_(query_limit) {
  if (detector.kind() == DetectorKind::KnnMarkov) {
    throw std::invalid_argument(
        "feature-level oracle requires a binary-feature detector");
  }
}

QueryAnswer FeatureOracle::query(const SparseVec& x) {
  if (query_limit_ && query_count_ >= *query_limit_) {
    throw QueryBudgetExhausted("query budget exhausted (limit " +
                               std::to_string(*query_limit_) + ")");
  }
  ++query_count_;
  QueryAnswer answer = detector_.classify_binary(x);
  if (mode_ == OracleMode::HardLabel) answer.benign_score.reset();
  return answer;
}

}  // namespace evasim
