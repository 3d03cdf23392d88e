#ifndef EVASIM_ATTACK_HPP
#define EVASIM_ATTACK_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "evasim/app.hpp"
#include "evasim/gadgets.hpp"
#include "evasim/oracle.hpp"

namespace evasim {

struct AttackConfig {
  std::uint64_t max_queries = 20;    // Q, >= 1
  double max_cost_percent = 50.0;    // alpha, >= 0
  OracleMode mode = OracleMode::SoftLabel;
  int n = 2;                         // n-gram length for the hard-label objective
  std::uint64_t seed = 0;
  // When false, a gadget rejected once is never drawn again. Cost-infeasible
  // gadgets are always retired: the manipulated app only grows, so they can
  // never become feasible later.
  bool redraw_rejected = true;
};

enum class StepOutcome { CostRejected, Evaded, Accepted, Rejected };

std::string_view to_string(StepOutcome outcome);
StepOutcome step_outcome_from_string(std::string_view s);

struct TraceStep {
  std::string gadget_id;
  double cost_percent = 0.0;  // candidate cost relative to the original app
  bool queried = false;
  std::optional<Label> label;
  std::optional<double> benign_score;  // from the answer, soft mode only
  std::optional<double> objective;     // score (soft) or benign similarity (hard)
  StepOutcome outcome = StepOutcome::Rejected;
};

// Full audit trail of one attack session. The initial detection check is
// counted in q_used but not traced; every candidate evaluation is traced.
struct AttackResult {
  std::string malware_id;
  bool initially_detected = false;
  bool evaded = false;
  std::vector<std::string> delta;  // accepted gadget ids, in order
  std::uint64_t q_used = 0;
  double cost_percent = 0.0;       // of the final kept state
  std::vector<TraceStep> trace;
  std::optional<App> final_app;    // present iff evaded
};

struct AttackError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Relative size increase in percent, (|z*| - |z|) / |z| * 100.
double evasion_cost(const App& original, const App& manipulated);
double evasion_cost_bytes(std::uint64_t original_bytes,
                          std::uint64_t manipulated_bytes);

// Query-budgeted random search over the action set. Spends one query on the
// initial detection check, then one per cost-feasible candidate; acceptance
// is by improved benign score (soft mode) or kept-or-increased maximum benign
// similarity (hard mode). Deterministic given identical inputs and seed; the
// RNG stream is derived from (config.seed, z.id).
AttackResult random_search_attack(const App& z, const ActionSet& actions,
                                  BlackBoxOracle& oracle, const Corpus& benign,
                                  const AttackConfig& config);

// Line-delimited JSON, one result (with full trace) per malware sample.
void save_attack_results(const std::vector<AttackResult>& results,
                         const std::filesystem::path& path);
std::vector<AttackResult> load_attack_results(const std::filesystem::path& path);

}  // namespace evasim

#endif  // EVASIM_ATTACK_HPP
