#ifndef EVASIM_APP_HPP
#define EVASIM_APP_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace evasim {

// Opcode-type alphabet. Every opcode in a method body is one of these
// single-character type symbols:
//   M move, R return, G goto, I if, T invoke, F field-access,
//   A arithmetic, C const, N new-instance, X other.
inline constexpr std::string_view kOpcodeAlphabet = "MRGITFACNX";

inline bool is_opcode_symbol(char c) {
  return kOpcodeAlphabet.find(c) != std::string_view::npos;
}

enum class Label { Malware, Benign };

inline std::string_view to_string(Label label) {
  return label == Label::Malware ? "malware" : "benign";
}

// Throws std::invalid_argument for anything but "malware"/"benign".
Label label_from_string(std::string_view s);

struct MethodDef {
  std::string name;
  // Opcode-type sequence, one alphabet symbol per opcode.
  std::string opcodes;
  // API-call references, dot/arrow-qualified; first segment is the family.
  // Parallel annotation of the method body, not aligned with opcodes.
  std::vector<std::string> api_calls;

  bool operator==(const MethodDef&) const = default;
};

struct ClassDef {
  std::string name;
  bool injected = false;  // injected classes are never mutated afterwards
  std::vector<MethodDef> methods;

  bool operator==(const ClassDef&) const = default;
};

struct App {
  std::string id;
  Label label = Label::Benign;
  std::uint64_t size_bytes = 0;  // must stay > 0
  std::set<std::string> manifest_features;
  std::vector<ClassDef> classes;

  bool operator==(const App&) const = default;
};

enum class Provenance { Loaded, Synthetic };

struct Corpus {
  std::vector<App> apps;
  Provenance provenance = Provenance::Loaded;
  std::optional<std::uint64_t> seed;

  const App* find(std::string_view id) const;
};

struct InvalidAppError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checks all App invariants (positive size, unique class/method names,
// opcode symbols in the alphabet). Throws InvalidAppError on violation.
void validate_app(const App& app);

// Validates every app and the corpus-wide unique-id invariant.
void validate_corpus(const Corpus& corpus);

// Sum of opcode-sequence lengths over all methods of all classes.
std::uint64_t app_total_opcodes(const App& app);

// Family of an API-call string: the first segment when split on '.' or "->".
std::string_view api_family(std::string_view api_call);

// Number of API-call references in the app (multiset count over methods).
std::uint64_t app_total_api_calls(const App& app);

}  // namespace evasim

#endif  // EVASIM_APP_HPP
