#include "evasim/corpus.hpp"

#include <fstream>
#include <unordered_set>

#include "evasim/rng.hpp"
#include "json_util.hpp"

namespace evasim {
namespace {

using detail::json;
using detail::ordered_json;

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  throw CorpusFormatError("line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw CorpusFormatError("cannot open corpus file: " + path.string());
  }
  Corpus corpus;
  corpus.provenance = Provenance::Loaded;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(line_no, std::string("malformed JSON: ") + e.what());
    }
    App app;
    try {
      app = detail::parse_app(j);
    } catch (const json::exception& e) {
      fail(line_no, std::string("malformed record: ") + e.what());
    } catch (const std::exception& e) {
      fail(line_no, e.what());
    }
    if (!ids.insert(app.id).second) {
      fail(line_no, "duplicate app id '" + app.id + "'");
    }
    try {
      validate_app(app);
    } catch (const InvalidAppError& e) {
      fail(line_no, e.what());
    }
    corpus.apps.push_back(std::move(app));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw CorpusFormatError("cannot write corpus file: " + path.string());
  }
  for (const App& app : corpus.apps) {
    out << detail::app_to_json(app).dump() << '\n';
  }
}

CorpusSplit split_corpus(const Corpus& corpus, const SplitSpec& spec) {
  std::vector<const App*> benign;
  std::vector<const App*> malware;
  for (const App& app : corpus.apps) {
    (app.label == Label::Benign ? benign : malware).push_back(&app);
  }
  const std::uint64_t need_benign = spec.training_benign + spec.attacker_benign;
  const std::uint64_t need_malware =
      spec.training_malware + spec.attacker_malware;
  if (need_benign > benign.size() || need_malware > malware.size()) {
    throw InfeasibleSplitError(
        "infeasible split: need " + std::to_string(need_benign) + " benign / " +
        std::to_string(need_malware) + " malware, corpus has " +
        std::to_string(benign.size()) + " / " + std::to_string(malware.size()));
  }

  Rng rng(spec.seed);
  rng.shuffle(benign);
  rng.shuffle(malware);

  CorpusSplit split;
  auto take = [](const std::vector<const App*>& pool, std::size_t start,
                 std::size_t count, Corpus& dst) {
    for (std::size_t i = 0; i < count; ++i) dst.apps.push_back(*pool[start + i]);
  };
  take(benign, 0, spec.training_benign, split.training);
  take(malware, 0, spec.training_malware, split.training);
  take(benign, spec.training_benign, spec.attacker_benign,
       split.attacker_benign);
  take(malware, spec.training_malware, spec.attacker_malware,
       split.attacker_malware);
  for (Corpus* part :
       {&split.training, &split.attacker_benign, &split.attacker_malware}) {
    part->provenance = corpus.provenance;
    part->seed = spec.seed;
  }
  return split;
}

}  // namespace evasim
