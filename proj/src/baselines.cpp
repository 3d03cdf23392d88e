#include "evasim/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "evasim/rng.hpp"

namespace evasim {

PkAttackResult pk_attack_linear(const SparseVec& x, const Detector& detector,
                                std::uint64_t max_added) {
  if (detector.kind() == DetectorKind::KnnMarkov) {
    throw std::invalid_argument("pk_attack_linear requires a linear detector");
  }
  const std::vector<double>& w = detector.weights();

  PkAttackResult result;
  double score = detector.bias();
  for (std::uint32_t i : x.indices) score += w[i];
  if (score < 0.0) {  // already classified benign
    result.evaded = true;
    return result;
  }

  // Absent features by (weight, index), most negative first.
  std::vector<std::uint32_t> absent;
  absent.reserve(w.size());
  for (std::uint32_t i = 0; i < w.size(); ++i) {
    if (!x.contains(i)) absent.push_back(i);
  }
  std::stable_sort(absent.begin(), absent.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return w[a] < w[b]; });

  for (std::uint32_t i : absent) {
    if (result.added.size() >= max_added) break;
    score += w[i];
    result.added.push_back(i);
    if (score < 0.0) {
      result.evaded = true;
      break;
    }
  }
  return result;
}

RandomFeatureAttackResult random_feature_attack(const SparseVec& x,
                                                FeatureOracle& oracle,
                                                std::uint64_t max_added,
                                                std::uint64_t seed) {
  RandomFeatureAttackResult result;
  QueryAnswer answer = oracle.query(x);
  result.q_used = 1;
  if (answer.label == Label::Benign) {
    result.evaded = true;
    return result;
  }

  std::vector<std::uint32_t> absent;
  for (std::uint32_t i = 0;
       i < static_cast<std::uint32_t>(oracle.dimension()); ++i) {
    if (!x.contains(i)) absent.push_back(i);
  }

  Rng rng(seed);
  SparseVec current = x;
  while (result.added.size() < max_added && !absent.empty()) {
    const std::size_t pick = rng.below(absent.size());
    const std::uint32_t feature = absent[pick];
    absent.erase(absent.begin() + pick);
    current.indices.insert(std::lower_bound(current.indices.begin(),
                                            current.indices.end(), feature),
                           feature);
    result.added.push_back(feature);
    answer = oracle.query(current);
    ++result.q_used;
    if (answer.label == Label::Benign) {
      result.evaded = true;
      break;
    }
  }
  return result;
}

}  // namespace evasim
