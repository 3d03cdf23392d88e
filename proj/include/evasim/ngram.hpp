#ifndef EVASIM_NGRAM_HPP
#define EVASIM_NGRAM_HPP

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "evasim/app.hpp"

namespace evasim {

// Presence set of the opcode-type n-grams of an app. Windows are taken per
// method and never span method boundaries.
struct NGramSet {
  int n = 0;
  std::set<std::string> grams;
};

struct UndefinedSimilarityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Union over all methods of the contiguous length-n windows of each opcode
// sequence. Methods shorter than n contribute nothing. n >= 1.
NGramSet ngram_set(const App& app, int n);

// Containment of b in m: |g(m) intersect g(b)| / |g(b)|. Asymmetric.
// Throws UndefinedSimilarityError when g(b) is empty.
double containment(const App& m, const App& b, int n);

// Set-level variant used by callers that cache gram sets.
double containment(const NGramSet& gm, const NGramSet& gb);

// Precomputed gram sets for a benign corpus; apps with an empty gram set are
// excluded with a warning on construction, mirroring donor-candidacy rules.
class BenignGramIndex {
 public:
  BenignGramIndex(const Corpus& benign, int n);

  int n() const { return n_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  struct Entry {
    std::string id;
    NGramSet grams;
  };
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  int n_ = 0;
  std::vector<Entry> entries_;  // sorted by id
};

struct SimilarityResult {
  double value = 0.0;
  std::string argmax_id;  // lowest id wins ties
};

// s(a) = max over usable benign apps of containment(a, b). Throws
// UndefinedSimilarityError when no benign app is usable.
SimilarityResult max_benign_similarity(const App& a, const Corpus& benign,
                                       int n);
SimilarityResult max_benign_similarity(const NGramSet& ga,
                                       const BenignGramIndex& index);

}  // namespace evasim

#endif  // EVASIM_NGRAM_HPP
