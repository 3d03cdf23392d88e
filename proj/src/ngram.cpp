#include "evasim/ngram.hpp"

#include <algorithm>
#include <iostream>

namespace evasim {

NGramSet ngram_set(const App& app, int n) {
  if (n < 1) throw std::invalid_argument("ngram_set: n must be >= 1");
  NGramSet result;
  result.n = n;
  const auto window = static_cast<std::size_t>(n);
  for (const ClassDef& cls : app.classes) {
    for (const MethodDef& method : cls.methods) {
      if (method.opcodes.size() < window) continue;
      for (std::size_t i = 0; i + window <= method.opcodes.size(); ++i) {
        result.grams.insert(method.opcodes.substr(i, window));
      }
    }
  }
  return result;
}

double containment(const NGramSet& gm, const NGramSet& gb) {
  if (gb.grams.empty()) {
    throw UndefinedSimilarityError(
        "containment undefined: benign n-gram set is empty");
  }
  std::size_t common = 0;
  for (const std::string& gram : gb.grams) {
    common += gm.grams.count(gram);
  }
  return static_cast<double>(common) / static_cast<double>(gb.grams.size());
}

double containment(const App& m, const App& b, int n) {
  return containment(ngram_set(m, n), ngram_set(b, n));
}

BenignGramIndex::BenignGramIndex(const Corpus& benign, int n) : n_(n) {
  for (const App& app : benign.apps) {
    NGramSet grams = ngram_set(app, n);
    if (grams.grams.empty()) {
      std::cerr << "warning: benign app '" << app.id
                << "' has no " << n << "-grams; skipped as similarity target\n";
      continue;
    }
    entries_.push_back({app.id, std::move(grams)});
  }
  std::sort(entries_.begin(), entries_.end(),
            [](const Entry& a, const Entry& b) { return a.id < b.id; });
}

SimilarityResult max_benign_similarity(const NGramSet& ga,
                                       const BenignGramIndex& index) {
  if (index.empty()) {
    throw UndefinedSimilarityError(
        "max_benign_similarity undefined: no usable benign apps");
  }
  SimilarityResult best;
  best.value = -1.0;
  for (const auto& entry : index.entries()) {
    const double sim = containment(ga, entry.grams);
    if (sim > best.value) {  // entries sorted by id, so first max wins ties
      best.value = sim;
      best.argmax_id = entry.id;
    }
  }
  return best;
}

SimilarityResult max_benign_similarity(const App& a, const Corpus& benign,
                                       int n) {
  return max_benign_similarity(ngram_set(a, n), BenignGramIndex(benign, n));
}

}  // namespace evasim
