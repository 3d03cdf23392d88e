#include "evasim/attack.hpp"

#include <algorithm>
#include <fstream>

#include "evasim/ngram.hpp"
#include "evasim/rng.hpp"
#include "json_util.hpp"

namespace evasim {
namespace {

using detail::json;
using detail::ordered_json;

NGramSet method_grams(const std::vector<MethodDef>& methods, int n) {
  NGramSet grams;
  grams.n = n;
  const auto window = static_cast<std::size_t>(n);
  for (const MethodDef& method : methods) {
    if (method.opcodes.size() < window) continue;
    for (std::size_t i = 0; i + window <= method.opcodes.size(); ++i) {
      grams.grams.insert(method.opcodes.substr(i, window));
    }
  }
  return grams;
}

}  // namespace

std::string_view to_string(StepOutcome outcome) {
  switch (outcome) {
    case StepOutcome::CostRejected: return "cost_rejected";
    case StepOutcome::Evaded: return "evaded";
    case StepOutcome::Accepted: return "accepted";
    case StepOutcome::Rejected: return "rejected";
  }
  return "unknown";
}

StepOutcome step_outcome_from_string(std::string_view s) {
  if (s == "cost_rejected") return StepOutcome::CostRejected;
  if (s == "evaded") return StepOutcome::Evaded;
  if (s == "accepted") return StepOutcome::Accepted;
  if (s == "rejected") return StepOutcome::Rejected;
  throw std::invalid_argument("unknown step outcome: " + std::string(s));
}

double evasion_cost_bytes(std::uint64_t original_bytes,
                          std::uint64_t manipulated_bytes) {
  if (original_bytes == 0) {
    throw AttackError("evasion cost undefined for zero-size original");
  }
  return (static_cast<double>(manipulated_bytes) -
          static_cast<double>(original_bytes)) /
         static_cast<double>(original_bytes) * 100.0;
}

double evasion_cost(const App& original, const App& manipulated) {
  return evasion_cost_bytes(original.size_bytes, manipulated.size_bytes);
}

AttackResult random_search_attack(const App& z, const ActionSet& actions,
                                  BlackBoxOracle& oracle, const Corpus& benign,
                                  const AttackConfig& config) {
  if (actions.gadgets.empty()) {
    throw AttackError("attack requires a nonempty action set");
  }
  if (config.max_queries < 1) {
    throw AttackError("query budget must be >= 1");
  }
  if (config.max_cost_percent < 0.0) {
    throw AttackError("max evasion cost must be >= 0");
  }
  const bool soft = config.mode == OracleMode::SoftLabel;
  if (soft && oracle.mode() != OracleMode::SoftLabel) {
    throw AttackError("soft-label attack needs a soft-label oracle");
  }

  AttackResult result;
  result.malware_id = z.id;

  // Initial detection check; samples the detector already misses are not
  // attacked and are excluded from evasion-rate denominators.
  const QueryAnswer initial = oracle.query(z);
  result.q_used = 1;
  if (initial.label == Label::Benign) {
    result.initially_detected = false;
    return result;
  }
  result.initially_detected = true;

  Rng rng = Rng::for_stream(config.seed, z.id);

  App current = z;
  double current_score = 0.0;
  double current_similarity = 0.0;
  NGramSet current_grams;
  std::optional<BenignGramIndex> index;
  std::vector<NGramSet> gadget_grams;
  if (soft) {
    if (!initial.benign_score) {
      throw AttackError("soft-label oracle returned no score");
    }
    current_score = *initial.benign_score;
  } else {
    index.emplace(benign, config.n);
    current_grams = ngram_set(z, config.n);
    current_similarity = max_benign_similarity(current_grams, *index).value;
    gadget_grams.reserve(actions.gadgets.size());
    for (const Gadget& gadget : actions.gadgets) {
      gadget_grams.push_back(method_grams(gadget.methods, config.n));
    }
  }

  // Candidate pool: indices into actions.gadgets (sorted by id). Accepted and
  // cost-infeasible gadgets leave the pool for good.
  std::vector<std::size_t> pool(actions.gadgets.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;

  while (result.q_used < config.max_queries && !pool.empty()) {
    const std::size_t pick = rng.below(pool.size());
    const std::size_t gadget_index = pool[pick];
    const Gadget& gadget = actions.gadgets[gadget_index];

    TraceStep step;
    step.gadget_id = gadget.id;
    step.cost_percent =
        evasion_cost_bytes(z.size_bytes, current.size_bytes + gadget.size_bytes);

    if (step.cost_percent > config.max_cost_percent) {
      // Attacker-side arithmetic, no query spent. The app only grows, so
      // this gadget stays infeasible for the rest of the session.
      step.outcome = StepOutcome::CostRejected;
      result.trace.push_back(std::move(step));
      pool.erase(pool.begin() + pick);
      continue;
    }

    App candidate = apply_transformation(current, gadget);
    const QueryAnswer answer = oracle.query(candidate);
    ++result.q_used;
    step.queried = true;
    step.label = answer.label;
    step.benign_score = answer.benign_score;

    if (answer.label == Label::Benign) {
      step.objective = answer.benign_score;
      step.outcome = StepOutcome::Evaded;
      result.trace.push_back(std::move(step));
      result.delta.push_back(gadget.id);
      result.evaded = true;
      current = std::move(candidate);
      result.final_app = current;
      break;
    }

    bool accept = false;
    if (soft) {
      step.objective = *answer.benign_score;
      accept = *answer.benign_score > current_score;
    } else {
      NGramSet candidate_grams = current_grams;
      candidate_grams.grams.insert(gadget_grams[gadget_index].grams.begin(),
                                   gadget_grams[gadget_index].grams.end());
      const double similarity =
          max_benign_similarity(candidate_grams, *index).value;
      step.objective = similarity;
      accept = similarity >= current_similarity;  // keep-or-increase
      if (accept) {
        current_grams = std::move(candidate_grams);
        current_similarity = similarity;
      }
    }

    if (accept) {
      if (soft) current_score = *answer.benign_score;
      step.outcome = StepOutcome::Accepted;
      result.delta.push_back(gadget.id);
      current = std::move(candidate);
      pool.erase(pool.begin() + pick);
    } else {
      step.outcome = StepOutcome::Rejected;
      if (!config.redraw_rejected) pool.erase(pool.begin() + pick);
    }
    result.trace.push_back(std::move(step));
  }

  result.cost_percent = evasion_cost(z, current);
  return result;
}

namespace {

ordered_json trace_step_to_json(const TraceStep& step) {
  ordered_json j;
  j["gadget_id"] = step.gadget_id;
  j["cost_percent"] = step.cost_percent;
  j["queried"] = step.queried;
  if (step.label) j["label"] = std::string(to_string(*step.label));
  if (step.benign_score) j["benign_score"] = *step.benign_score;
  if (step.objective) j["objective"] = *step.objective;
  j["outcome"] = std::string(to_string(step.outcome));
  return j;
}

TraceStep trace_step_from_json(const json& j) {
  detail::reject_unknown_fields(j,
                                {"gadget_id", "cost_percent", "queried", "label",
                                 "benign_score", "objective", "outcome"},
                                "trace step");
  TraceStep step;
  step.gadget_id = detail::require(j, "gadget_id", "trace step").get<std::string>();
  step.cost_percent =
      detail::require(j, "cost_percent", "trace step").get<double>();
  step.queried = detail::require(j, "queried", "trace step").get<bool>();
  if (j.contains("label")) {
    step.label = label_from_string(j["label"].get<std::string>());
  }
  if (j.contains("benign_score")) step.benign_score = j["benign_score"].get<double>();
  if (j.contains("objective")) step.objective = j["objective"].get<double>();
  step.outcome =
      step_outcome_from_string(detail::require(j, "outcome", "trace step")
                                   .get<std::string>());
  return step;
}

}  // namespace

void save_attack_results(const std::vector<AttackResult>& results,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw AttackError("cannot write attack results file: " + path.string());
  }
  for (const AttackResult& result : results) {
    ordered_json j;
    j["malware_id"] = result.malware_id;
    j["initially_detected"] = result.initially_detected;
    j["evaded"] = result.evaded;
    j["delta"] = result.delta;
    j["q_used"] = result.q_used;
    j["cost_percent"] = result.cost_percent;
    ordered_json trace = ordered_json::array();
    for (const TraceStep& step : result.trace) {
      trace.push_back(trace_step_to_json(step));
    }
    j["trace"] = std::move(trace);
    if (result.final_app) j["final_app"] = detail::app_to_json(*result.final_app);
    out << j.dump() << '\n';
  }
}

std::vector<AttackResult> load_attack_results(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw AttackError("cannot open attack results file: " + path.string());
  }
  std::vector<AttackResult> results;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      detail::reject_unknown_fields(j,
                                    {"malware_id", "initially_detected", "evaded",
                                     "delta", "q_used", "cost_percent", "trace",
                                     "final_app"},
                                    "attack result");
      AttackResult result;
      result.malware_id =
          detail::require(j, "malware_id", "attack result").get<std::string>();
      result.initially_detected =
          detail::require(j, "initially_detected", "attack result").get<bool>();
      result.evaded = detail::require(j, "evaded", "attack result").get<bool>();
      result.delta = detail::require(j, "delta", "attack result")
                         .get<std::vector<std::string>>();
      result.q_used =
          detail::require(j, "q_used", "attack result").get<std::uint64_t>();
      result.cost_percent =
          detail::require(j, "cost_percent", "attack result").get<double>();
      for (const json& js : detail::require(j, "trace", "attack result")) {
        result.trace.push_back(trace_step_from_json(js));
      }
      if (j.contains("final_app")) {
        result.final_app = detail::parse_app(j["final_app"]);
      }
      if (result.evaded != result.final_app.has_value()) {
        throw detail::JsonFieldError(
            "evaded flag and final_app presence disagree");
      }
      results.push_back(std::move(result));
    } catch (const std::exception& e) {
      throw AttackError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return results;
}

}  // namespace evasim
