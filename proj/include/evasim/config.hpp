#ifndef EVASIM_CONFIG_HPP
#define EVASIM_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evasim/harness.hpp"

namespace evasim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat configuration map fed by either a JSON object or "key = value" lines
// ('#' starts a comment). Keys outside the documented set are rejected.
class FlatConfig {
 public:
  static FlatConfig parse_file(const std::filesystem::path& path);
  static FlatConfig parse_text(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value);

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated list; empty when the key is absent.
  std::vector<std::string> get_list(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
};

GeneratorParams generator_from_config(const FlatConfig& config);
SplitSpec split_from_config(const FlatConfig& config, std::uint64_t seed);
AttackConfig attack_from_config(const FlatConfig& config, std::uint64_t seed);
// Detector hyperparameters for the named kind.
DetectorSpec detector_spec_from_config(const FlatConfig& config,
                                       DetectorKind kind, std::uint64_t seed);

}  // namespace evasim

#endif  // EVASIM_CONFIG_HPP
