#ifndef EVASIM_GENERATOR_HPP
#define EVASIM_GENERATOR_HPP

#include <cstdint>
#include <stdexcept>

#include "evasim/app.hpp"

namespace evasim {

// Knobs for the synthetic corpus. Benign and malware apps draw API calls and
// manifest features from overlapping pools; a disjoint malware-exclusive pool
// plus label-specific draw rates provide the signal detectors learn from.
// Setting the malware-exclusive pools to zero and the rates equal produces an
// unlearnable corpus (see tests).
struct GeneratorParams {
  std::uint64_t benign_count = 480;
  std::uint64_t malware_count = 120;

  // Structure ranges (inclusive).
  int classes_min = 2;
  int classes_max = 4;
  int methods_min = 2;
  int methods_max = 5;
  int opcodes_min = 10;
  int opcodes_max = 32;
  int apis_per_method_min = 3;
  int apis_per_method_max = 8;
  int manifest_min = 3;
  int manifest_max = 8;

  // Feature pools, spread evenly over the family lists below.
  int shared_api_pool = 120;
  int benign_api_pool = 80;
  int malware_api_pool = 36;  // malware-exclusive
  int shared_manifest_pool = 20;
  int benign_manifest_pool = 10;
  int malware_manifest_pool = 9;

  // Per-draw probabilities of leaving the shared pools.
  double benign_app_benign_rate = 0.35;   // benign app -> benign-leaning pool
  double malware_app_malware_rate = 0.35; // malware app -> exclusive pool
  double malware_app_benign_rate = 0.10;  // malware app -> benign-leaning pool
  double malware_manifest_rate = 0.45;
  double benign_manifest_rate = 0.40;

  // Per-app stealthiness: each malware app scales its exclusive-pool rates by
  // a factor drawn uniformly from [malware_rate_min_frac, 1]. Values below 1
  // yield a spectrum from stealthy to blatant samples.
  double malware_rate_min_frac = 1.0;

  // Probability that consecutive API calls in a method stay in the same
  // family; gives the transition features a stable per-label shape.
  double family_stickiness = 0.60;

  // Probability that a method carries an intra-class invoke reference.
  double helper_ref_rate = 0.20;

  // Opcode chains: probability of following the preferred-successor table
  // instead of a uniform symbol. Differs slightly per label.
  double opcode_bias_benign = 0.55;
  double opcode_bias_malware = 0.40;

  // size_bytes = 4 * opcodes + 64 * methods + extra.
  int size_extra_min = 1500;
  int size_extra_max = 4500;
};

struct DegenerateParamsError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Deterministic for a fixed (params, seed).
Corpus generate_synthetic_corpus(const GeneratorParams& params,
                                 std::uint64_t seed);

}  // namespace evasim

#endif  // EVASIM_GENERATOR_HPP
