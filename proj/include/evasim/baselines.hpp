#ifndef EVASIM_BASELINES_HPP
#define EVASIM_BASELINES_HPP

#include <cstdint>
#include <vector>

#include "evasim/detectors.hpp"

namespace evasim {

// Feature-space reference attacks bracketing the problem-space search: the
// white-box greedy attack is the best case, blind random flips the worst.

struct PkAttackResult {
  bool evaded = false;
  std::vector<std::uint32_t> added;  // feature indices, in addition order
};

// Greedily sets absent features to 1 in ascending weight order (most negative
// first) until the decision flips or max_added is reached. White-box by
// design: reads the detector's weights, so it only applies to linear kinds.
PkAttackResult pk_attack_linear(const SparseVec& x, const Detector& detector,
                                std::uint64_t max_added);

struct RandomFeatureAttackResult {
  bool evaded = false;
  std::vector<std::uint32_t> added;
  std::uint64_t q_used = 0;  // includes the initial detection check
};

// Adds absent vocabulary features uniformly at random, one query per
// addition, until evasion or max_added. Deterministic for a fixed seed.
RandomFeatureAttackResult random_feature_attack(const SparseVec& x,
                                                FeatureOracle& oracle,
                                                std::uint64_t max_added,
                                                std::uint64_t seed);

}  // namespace evasim

#endif  // EVASIM_BASELINES_HPP
