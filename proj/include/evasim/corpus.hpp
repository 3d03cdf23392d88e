#ifndef EVASIM_CORPUS_HPP
#define EVASIM_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "evasim/app.hpp"

namespace evasim {

struct CorpusFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Line-delimited JSON, one app per line. Validation is strict: unknown
// fields, duplicate ids, out-of-alphabet opcodes and broken invariants are
// rejected with the offending line number, never repaired.
Corpus load_corpus(const std::filesystem::path& path);

// Inverse of load_corpus; save-then-load yields a structurally equal corpus.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct SplitSpec {
  std::uint64_t training_benign = 0;
  std::uint64_t training_malware = 0;
  std::uint64_t attacker_benign = 0;
  std::uint64_t attacker_malware = 0;
  std::uint64_t seed = 0;
};

struct InfeasibleSplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorpusSplit {
  Corpus training;
  Corpus attacker_benign;
  Corpus attacker_malware;
};

// Seeded, reproducible partition. The three parts are disjoint by id and
// the attacker partitions never overlap training.
CorpusSplit split_corpus(const Corpus& corpus, const SplitSpec& spec);

}  // namespace evasim

#endif  // EVASIM_CORPUS_HPP
