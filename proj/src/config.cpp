#include "evasim/config.hpp"

#include <charconv>
#include <fstream>
#include <set>

#include "evasim/rng.hpp"
#include "json_util.hpp"

namespace evasim {
namespace {

// Every key any subcommand understands; see the README for which command
// reads which.
const std::set<std::string>& documented_keys() {
  static const std::set<std::string> keys = {
      // generator
      "benign_count", "malware_count", "classes_min", "classes_max",
      "methods_min", "methods_max", "opcodes_min", "opcodes_max",
      "apis_per_method_min", "apis_per_method_max", "manifest_min",
      "manifest_max", "shared_api_pool", "benign_api_pool", "malware_api_pool",
      "shared_manifest_pool", "benign_manifest_pool", "malware_manifest_pool",
      "benign_app_benign_rate", "malware_app_malware_rate",
      "malware_app_benign_rate", "malware_manifest_rate",
      "benign_manifest_rate", "helper_ref_rate", "opcode_bias_benign",
      "opcode_bias_malware", "size_extra_min", "size_extra_max",
      // split counts
      "training_benign", "training_malware", "attacker_benign",
      "attacker_malware", "split_seed",
      // detectors
      "detectors", "target", "svm_epochs", "svm_lambda", "svm_eta0",
      "svm_seed", "sec_w_cap", "knn_k",
      // attack + baselines
      "q", "alpha", "mode", "n", "attack_seed", "redraw_rejected",
      "run_baselines", "pk_max_added",
      // sweeps
      "q_values", "alpha_values",
      // artifact paths
      "corpus", "training", "benign", "malware", "action_set", "results",
      // global
      "seed", "out",
  };
  return keys;
}

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

std::string scalar_to_string(const detail::json& value, const std::string& key) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
  if (value.is_number()) {
    return detail::json(value).dump();
  }
  throw ConfigError("config key '" + key + "' has an unsupported value type");
}

}  // namespace

void FlatConfig::set(const std::string& key, std::string value) {
  if (!documented_keys().count(key)) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  values_[key] = std::move(value);
}

FlatConfig FlatConfig::parse_text(const std::string& text) {
  FlatConfig config;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    detail::json j;
    try {
      j = detail::json::parse(text);
    } catch (const detail::json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    for (const auto& [key, value] : j.items()) {
      if (value.is_array()) {
        std::string joined;
        for (const auto& item : value) {
          if (!joined.empty()) joined += ',';
          joined += scalar_to_string(item, key);
        }
        config.set(key, joined);
      } else {
        config.set(key, scalar_to_string(value, key));
      }
    }
    return config;
  }

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string line = text.substr(
        pos, eol == std::string::npos ? std::string::npos : eol - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    config.set(trim(std::string_view(line).substr(0, eq)),
               trim(std::string_view(line).substr(eq + 1)));
  }
  return config;
}

FlatConfig FlatConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_text(text);
}

std::string FlatConfig::get_string(const std::string& key,
                                   const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string FlatConfig::require_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError("missing required config key '" + key + "'");
  }
  return it->second;
}

std::uint64_t FlatConfig::get_u64(const std::string& key,
                                  std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::uint64_t value = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "': not an unsigned integer: " + s);
  }
  return value;
}

int FlatConfig::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  int value = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "': not an integer: " + s);
  }
  return value;
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t consumed = 0;
    const double value = std::stod(it->second, &consumed);
    if (consumed != it->second.size()) throw std::invalid_argument("");
    return value;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: " + it->second);
  }
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "': not a boolean: " + it->second);
}

std::vector<std::string> FlatConfig::get_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  std::vector<std::string> items;
  std::size_t pos = 0;
  const std::string& s = it->second;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const std::string item =
        trim(std::string_view(s).substr(pos, comma == std::string::npos
                                                 ? std::string::npos
                                                 : comma - pos));
    if (!item.empty()) items.push_back(item);
    pos = comma == std::string::npos ? s.size() + 1 : comma + 1;
  }
  return items;
}

GeneratorParams generator_from_config(const FlatConfig& c) {
  GeneratorParams p;
  p.benign_count = c.get_u64("benign_count", p.benign_count);
  p.malware_count = c.get_u64("malware_count", p.malware_count);
  p.classes_min = c.get_int("classes_min", p.classes_min);
  p.classes_max = c.get_int("classes_max", p.classes_max);
  p.methods_min = c.get_int("methods_min", p.methods_min);
  p.methods_max = c.get_int("methods_max", p.methods_max);
  p.opcodes_min = c.get_int("opcodes_min", p.opcodes_min);
  p.opcodes_max = c.get_int("opcodes_max", p.opcodes_max);
  p.apis_per_method_min = c.get_int("apis_per_method_min", p.apis_per_method_min);
  p.apis_per_method_max = c.get_int("apis_per_method_max", p.apis_per_method_max);
  p.manifest_min = c.get_int("manifest_min", p.manifest_min);
  p.manifest_max = c.get_int("manifest_max", p.manifest_max);
  p.shared_api_pool = c.get_int("shared_api_pool", p.shared_api_pool);
  p.benign_api_pool = c.get_int("benign_api_pool", p.benign_api_pool);
  p.malware_api_pool = c.get_int("malware_api_pool", p.malware_api_pool);
  p.shared_manifest_pool = c.get_int("shared_manifest_pool", p.shared_manifest_pool);
  p.benign_manifest_pool = c.get_int("benign_manifest_pool", p.benign_manifest_pool);
  p.malware_manifest_pool = c.get_int("malware_manifest_pool", p.malware_manifest_pool);
  p.benign_app_benign_rate =
      c.get_double("benign_app_benign_rate", p.benign_app_benign_rate);
  p.malware_app_malware_rate =
      c.get_double("malware_app_malware_rate", p.malware_app_malware_rate);
  p.malware_app_benign_rate =
      c.get_double("malware_app_benign_rate", p.malware_app_benign_rate);
  p.malware_manifest_rate =
      c.get_double("malware_manifest_rate", p.malware_manifest_rate);
  p.benign_manifest_rate =
      c.get_double("benign_manifest_rate", p.benign_manifest_rate);
  p.helper_ref_rate = c.get_double("helper_ref_rate", p.helper_ref_rate);
  p.opcode_bias_benign = c.get_double("opcode_bias_benign", p.opcode_bias_benign);
  p.opcode_bias_malware =
      c.get_double("opcode_bias_malware", p.opcode_bias_malware);
  p.size_extra_min = c.get_int("size_extra_min", p.size_extra_min);
  p.size_extra_max = c.get_int("size_extra_max", p.size_extra_max);
  return p;
}

SplitSpec split_from_config(const FlatConfig& c, std::uint64_t seed) {
  SplitSpec spec;
  spec.training_benign = c.get_u64("training_benign", 400);
  spec.training_malware = c.get_u64("training_malware", 80);
  spec.attacker_benign = c.get_u64("attacker_benign", 80);
  spec.attacker_malware = c.get_u64("attacker_malware", 40);
  spec.seed = c.get_u64("split_seed", mix_seed(seed, "split"));
  return spec;
}

AttackConfig attack_from_config(const FlatConfig& c, std::uint64_t seed) {
  AttackConfig attack;
  attack.max_queries = c.get_u64("q", attack.max_queries);
  attack.max_cost_percent = c.get_double("alpha", attack.max_cost_percent);
  const std::string mode = c.get_string("mode", "soft_label");
  if (mode == "soft_label") {
    attack.mode = OracleMode::SoftLabel;
  } else if (mode == "hard_label") {
    attack.mode = OracleMode::HardLabel;
  } else {
    throw ConfigError("config key 'mode': expected soft_label or hard_label");
  }
  attack.n = c.get_int("n", attack.n);
  attack.seed = c.get_u64("attack_seed", mix_seed(seed, "attack"));
  attack.redraw_rejected = c.get_bool("redraw_rejected", attack.redraw_rejected);
  return attack;
}

DetectorSpec detector_spec_from_config(const FlatConfig& c, DetectorKind kind,
                                       std::uint64_t seed) {
  DetectorSpec spec;
  spec.kind = kind;
  spec.svm.epochs = c.get_int("svm_epochs", spec.svm.epochs);
  spec.svm.lambda = c.get_double("svm_lambda", spec.svm.lambda);
  spec.svm.eta0 = c.get_double("svm_eta0", spec.svm.eta0);
  spec.svm.seed = c.get_u64("svm_seed", mix_seed(seed, "svm"));
  if (kind == DetectorKind::SecSvm) {
    spec.svm.w_cap = c.get_double("sec_w_cap", kDefaultSecSvmCap);
  }
  spec.knn_k = c.get_int("knn_k", spec.knn_k);
  return spec;
}

}  // namespace evasim
