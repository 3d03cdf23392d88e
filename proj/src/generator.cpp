#include "evasim/generator.hpp"

#include <array>
#include <string>
#include <vector>

#include "evasim/rng.hpp"

namespace evasim {
namespace {

constexpr std::array<std::string_view, 5> kSharedFamilies = {
    "app", "net", "ui", "io", "util"};
constexpr std::array<std::string_view, 2> kBenignFamilies = {"media", "view"};
constexpr std::array<std::string_view, 3> kMalwareFamilies = {"smsx", "exfil",
                                                              "boot"};

// Preferred successor per opcode-type symbol; shared by both labels, the
// labels differ only in how strongly they follow it.
char preferred_successor(char op) {
  switch (op) {
    case 'M': return 'C';
    case 'R': return 'M';
    case 'G': return 'I';
    case 'I': return 'T';
    case 'T': return 'M';
    case 'F': return 'A';
    case 'A': return 'F';
    case 'C': return 'T';
    case 'N': return 'T';
    default:  return 'M';  // X
  }
}

template <std::size_t N>
class FamilyPool {
 public:
  FamilyPool(const std::array<std::string_view, N>& families, int total) {
    for (std::size_t i = 0; i < N; ++i) {
      names_[i] = families[i];
      counts_[i] = total / static_cast<int>(N) +
                   (static_cast<int>(i) < total % static_cast<int>(N) ? 1 : 0);
    }
    total_ = total;
  }

  bool empty() const { return total_ == 0; }

  // Uniform over all items of the group.
  std::string draw_api(Rng& rng) const {
    auto [family, index] = draw(rng);
    return std::string(family) + ".api" + std::to_string(index);
  }

  std::string draw_manifest(Rng& rng) const {
    auto [family, index] = draw(rng);
    return "perm::" + std::string(family) + ".p" + std::to_string(index);
  }

  // Uniform item of one family; empty when the family is not in this group.
  std::string draw_api_in(std::string_view family, Rng& rng) const {
    for (std::size_t i = 0; i < N; ++i) {
      if (names_[i] == family && counts_[i] > 0) {
        return std::string(family) + ".api" +
               std::to_string(rng.below(static_cast<std::uint64_t>(counts_[i])));
      }
    }
    return {};
  }

 private:
  std::pair<std::string_view, int> draw(Rng& rng) const {
    auto pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(total_)));
    for (std::size_t i = 0; i < N; ++i) {
      if (pick < counts_[i]) return {names_[i], pick};
      pick -= counts_[i];
    }
    return {names_[N - 1], 0};  // unreachable
  }

  std::array<std::string_view, N> names_;
  std::array<int, N> counts_{};
  int total_ = 0;
};

void check_range(int lo, int hi, const char* what) {
  if (lo < 0 || lo > hi) {
    throw DegenerateParamsError(std::string("degenerate params: empty ") + what +
                                " range");
  }
}

void validate_params(const GeneratorParams& p) {
  check_range(p.classes_min, p.classes_max, "class count");
  check_range(p.methods_min, p.methods_max, "method count");
  check_range(p.opcodes_min, p.opcodes_max, "opcode count");
  check_range(p.apis_per_method_min, p.apis_per_method_max, "apis per method");
  check_range(p.manifest_min, p.manifest_max, "manifest count");
  check_range(p.size_extra_min, p.size_extra_max, "size extra");
  if (p.classes_min < 1 || p.methods_min < 1) {
    throw DegenerateParamsError("degenerate params: apps need >= 1 class and method");
  }
  if (p.shared_api_pool <= 0 || p.shared_manifest_pool <= 0) {
    throw DegenerateParamsError("degenerate params: shared pools must be > 0");
  }
  if (p.benign_api_pool <= 0 || p.benign_manifest_pool <= 0) {
    throw DegenerateParamsError("degenerate params: benign pools must be > 0");
  }
  if (p.malware_api_pool < 0 || p.malware_manifest_pool < 0) {
    throw DegenerateParamsError("degenerate params: negative pool size");
  }
}

struct Pools {
  FamilyPool<5> shared_api;
  FamilyPool<2> benign_api;
  FamilyPool<3> malware_api;
  FamilyPool<5> shared_manifest;
  FamilyPool<2> benign_manifest;
  FamilyPool<3> malware_manifest;
};

std::string draw_api_call(const GeneratorParams& p, const Pools& pools,
                          Label label, double malware_rate, Rng& rng) {
  const double r = rng.real01();
  if (label == Label::Malware) {
    if (!pools.malware_api.empty() && r < malware_rate) {
      return pools.malware_api.draw_api(rng);
    }
    if (r < malware_rate + p.malware_app_benign_rate) {
      return pools.benign_api.draw_api(rng);
    }
    return pools.shared_api.draw_api(rng);
  }
  if (r < p.benign_app_benign_rate) return pools.benign_api.draw_api(rng);
  return pools.shared_api.draw_api(rng);
}

// Same family as the previous call when possible, fresh draw otherwise.
std::string draw_api_sticky(const GeneratorParams& p, const Pools& pools,
                            Label label, double malware_rate,
                            std::string_view prev_family, Rng& rng) {
  std::string api = pools.shared_api.draw_api_in(prev_family, rng);
  if (api.empty()) api = pools.benign_api.draw_api_in(prev_family, rng);
  if (api.empty()) api = pools.malware_api.draw_api_in(prev_family, rng);
  if (api.empty()) api = draw_api_call(p, pools, label, malware_rate, rng);
  return api;
}

std::string draw_manifest_feature(const GeneratorParams& p, const Pools& pools,
                                  Label label, double manifest_rate, Rng& rng) {
  const double r = rng.real01();
  if (label == Label::Malware) {
    if (!pools.malware_manifest.empty() && r < manifest_rate) {
      return pools.malware_manifest.draw_manifest(rng);
    }
    if (r < manifest_rate + p.malware_app_benign_rate) {
      return pools.benign_manifest.draw_manifest(rng);
    }
    return pools.shared_manifest.draw_manifest(rng);
  }
  if (r < p.benign_manifest_rate) return pools.benign_manifest.draw_manifest(rng);
  return pools.shared_manifest.draw_manifest(rng);
}

std::string draw_opcodes(const GeneratorParams& p, Label label, Rng& rng) {
  const double bias = label == Label::Malware ? p.opcode_bias_malware
                                              : p.opcode_bias_benign;
  const auto length =
      static_cast<std::size_t>(rng.range(p.opcodes_min, p.opcodes_max));
  std::string ops;
  ops.reserve(length);
  char current = kOpcodeAlphabet[rng.below(kOpcodeAlphabet.size())];
  for (std::size_t i = 0; i < length; ++i) {
    ops.push_back(current);
    current = rng.chance(bias) ? preferred_successor(current)
                               : kOpcodeAlphabet[rng.below(kOpcodeAlphabet.size())];
  }
  return ops;
}

App generate_app(const GeneratorParams& p, const Pools& pools, std::string id,
                 Label label, Rng& rng) {
  App app;
  app.id = std::move(id);
  app.label = label;

  // Stealthiness factor: scales how loudly this malware app uses the
  // exclusive pools. Benign apps are unaffected.
  double stealth = 1.0;
  if (label == Label::Malware && p.malware_rate_min_frac < 1.0) {
    stealth = p.malware_rate_min_frac +
              (1.0 - p.malware_rate_min_frac) * rng.real01();
  }
  const double malware_rate = p.malware_app_malware_rate * stealth;
  const double manifest_rate = p.malware_manifest_rate * stealth;

  const auto num_classes =
      static_cast<int>(rng.range(p.classes_min, p.classes_max));
  for (int c = 0; c < num_classes; ++c) {
    ClassDef cls;
    cls.name = "c" + std::to_string(c);
    const auto num_methods =
        static_cast<int>(rng.range(p.methods_min, p.methods_max));
    for (int m = 0; m < num_methods; ++m) {
      MethodDef method;
      method.name = "m" + std::to_string(m);
      method.opcodes = draw_opcodes(p, label, rng);
      const auto num_apis = static_cast<int>(
          rng.range(p.apis_per_method_min, p.apis_per_method_max));
      std::string prev_family;
      for (int a = 0; a < num_apis; ++a) {
        std::string api =
            (a > 0 && rng.chance(p.family_stickiness))
                ? draw_api_sticky(p, pools, label, malware_rate, prev_family, rng)
                : draw_api_call(p, pools, label, malware_rate, rng);
        prev_family = api_family(api);
        method.api_calls.push_back(std::move(api));
      }
      cls.methods.push_back(std::move(method));
    }
    // Intra-class invoke references, added once the sibling names are known.
    for (int m = 0; m < num_methods; ++m) {
      if (num_methods > 1 && rng.chance(p.helper_ref_rate)) {
        auto sibling = static_cast<int>(rng.below(num_methods - 1));
        if (sibling >= m) ++sibling;
        cls.methods[m].api_calls.push_back("this." + cls.methods[sibling].name);
      }
    }
    app.classes.push_back(std::move(cls));
  }

  const auto num_manifest =
      static_cast<int>(rng.range(p.manifest_min, p.manifest_max));
  for (int i = 0; i < num_manifest; ++i) {
    app.manifest_features.insert(
        draw_manifest_feature(p, pools, label, manifest_rate, rng));
  }

  std::uint64_t method_count = 0;
  for (const ClassDef& cls : app.classes) method_count += cls.methods.size();
  app.size_bytes = 4 * app_total_opcodes(app) + 64 * method_count +
                   static_cast<std::uint64_t>(
                       rng.range(p.size_extra_min, p.size_extra_max));
  return app;
}

}  // namespace

Corpus generate_synthetic_corpus(const GeneratorParams& params,
                                 std::uint64_t seed) {
  validate_params(params);
  Pools pools{
      FamilyPool<5>(kSharedFamilies, params.shared_api_pool),
      FamilyPool<2>(kBenignFamilies, params.benign_api_pool),
      FamilyPool<3>(kMalwareFamilies, params.malware_api_pool),
      FamilyPool<5>(kSharedFamilies, params.shared_manifest_pool),
      FamilyPool<2>(kBenignFamilies, params.benign_manifest_pool),
      FamilyPool<3>(kMalwareFamilies, params.malware_manifest_pool),
  };

  Rng rng(seed);
  Corpus corpus;
  corpus.provenance = Provenance::Synthetic;
  corpus.seed = seed;
  corpus.apps.reserve(params.benign_count + params.malware_count);

  char buf[16];
  for (std::uint64_t i = 0; i < params.benign_count; ++i) {
    std::snprintf(buf, sizeof buf, "b%04llu", static_cast<unsigned long long>(i));
    corpus.apps.push_back(
        generate_app(params, pools, buf, Label::Benign, rng));
  }
  for (std::uint64_t i = 0; i < params.malware_count; ++i) {
    std::snprintf(buf, sizeof buf, "m%04llu", static_cast<unsigned long long>(i));
    corpus.apps.push_back(
        generate_app(params, pools, buf, Label::Malware, rng));
  }
  validate_corpus(corpus);
  return corpus;
}

}  // namespace evasim
