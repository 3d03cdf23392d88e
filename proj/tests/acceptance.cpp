// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "evasim/attack.hpp"
#include "evasim/baselines.hpp"
#include "evasim/detectors.hpp"
#include "evasim/gadgets.hpp"
#include "evasim/generator.hpp"
#include "evasim/harness.hpp"
#include "evasim/ngram.hpp"
#include "evasim/rng.hpp"

using namespace evasim;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kSeeds[] = {0, 1, 2, 3, 4};

struct CriterionOutcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
  double ms;
};

std::vector<CriterionOutcome> g_outcomes;

template <typename F>
void criterion(int id, const std::string& name, F&& body) {
  const auto start = Clock::now();
  CriterionOutcome outcome{id, name, false, "", 0.0};
  try {
    outcome.detail = body(outcome.pass);
  } catch (const std::exception& e) {
    outcome.pass = false;
    outcome.detail = std::string("exception: ") + e.what();
  }
  outcome.ms = std::chrono::duration<double, std::milli>(Clock::now() - start)
                   .count();
  g_outcomes.push_back(outcome);
  std::printf("%s criterion %2d: %s [%.1f ms] %s\n",
              outcome.pass ? "PASS" : "FAIL", id, name.c_str(), outcome.ms,
              outcome.detail.c_str());
  std::fflush(stdout);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Independent brute-force containment oracle (window enumeration + set
// intersection), kept free of the library's NGramSet path.
std::set<std::string> brute_grams(const App& app, int n) {
  std::set<std::string> grams;
  for (const ClassDef& cls : app.classes) {
    for (const MethodDef& m : cls.methods) {
      for (int i = 0; i + n <= static_cast<int>(m.opcodes.size()); ++i) {
        grams.insert(m.opcodes.substr(i, n));
      }
    }
  }
  return grams;
}

double brute_containment(const App& m, const App& b, int n) {
  const auto gm = brute_grams(m, n);
  const auto gb = brute_grams(b, n);
  std::size_t common = 0;
  for (const auto& g : gb) common += gm.count(g);
  return static_cast<double>(common) / static_cast<double>(gb.size());
}

struct SeedRun {
  ExperimentConfig config;
  ExperimentArtifacts artifacts;
  std::vector<AttackResult> hard_linear;   // hard-label runs vs linear svm
  std::vector<SweepPoint> q_sweep;         // Q in {2,5,10,20}, alpha=50
  std::vector<SweepPoint> alpha_sweep;     // alpha in {10,30,50}, Q=20
};

// Every attack result produced for criteria 4-6 and 9, with its budget.
struct AuditedRun {
  const AttackResult* result;
  std::uint64_t max_queries;
  double max_cost;
};

double row_evasion_rate(const Report& report, const std::string& name) {
  for (const DetectorReportRow& row : report.rows) {
    if (row.detector == name) return row.evasion_rate;
  }
  throw std::runtime_error("missing report row " + name);
}

const DetectorReportRow& report_row(const Report& report,
                                    const std::string& name) {
  for (const DetectorReportRow& row : report.rows) {
    if (row.detector == name) return row;
  }
  throw std::runtime_error("missing report row " + name);
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "evasim_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  // --- criterion 1 -------------------------------------------------------
  criterion(1, "2-gram extraction matches the worked opcode-type example",
            [&](bool& pass) {
              App app;
              app.id = "w";
              app.label = Label::Malware;
              app.size_bytes = 1;
              // if-eq move goto if-ne move-exception goto/16 move-result
              app.classes.push_back(
                  ClassDef{"c0", false, {MethodDef{"m0", "IMGIMGM", {}}}});
              const auto t0 = Clock::now();
              const NGramSet grams = ngram_set(app, 2);
              const double us = std::chrono::duration<double, std::micro>(
                                    Clock::now() - t0)
                                    .count();
              const std::set<std::string> expected{"IM", "MG", "GI", "GM"};
              pass = grams.grams == expected && us < 1000.0;
              return "grams={IM,MG,GI,GM} in " + fmt(us) + " us";
            });

  // --- criterion 2 -------------------------------------------------------
  criterion(2, "containment equals a brute-force oracle on 200 random pairs",
            [&](bool& pass) {
              GeneratorParams params;
              params.benign_count = 40;
              params.malware_count = 40;
              double max_err = 0.0;
              std::size_t pairs = 0;
              for (std::uint64_t seed : kSeeds) {
                const Corpus corpus = generate_synthetic_corpus(params, seed);
                Rng rng(seed + 100);
                while (pairs < 40 * (seed + 1)) {
                  const App& m = corpus.apps[rng.below(corpus.apps.size())];
                  const App& b = corpus.apps[rng.below(corpus.apps.size())];
                  if (brute_grams(b, 2).empty()) continue;
                  const double expected = brute_containment(m, b, 2);
                  const double actual = containment(m, b, 2);
                  max_err = std::max(max_err, std::abs(actual - expected));
                  ++pairs;
                }
              }
              pass = pairs == 200 && max_err <= 1e-12;
              return std::to_string(pairs) + " pairs, max |err| = " +
                     fmt(max_err);
            });

  // --- shared pipeline runs for criteria 3-11 ----------------------------
  std::vector<SeedRun> runs;
  std::vector<AuditedRun> audited;
  try {
    for (std::uint64_t seed : kSeeds) {
      SeedRun run;
      run.config = default_experiment_config();
      run.config.seed = seed;
      run.config.out_dir = work / ("seed" + std::to_string(seed));
      derive_stage_seeds(run.config);
      run.artifacts = run_experiment(run.config);

      AttackConfig hard = run.config.attack;
      hard.mode = OracleMode::HardLabel;
      run.hard_linear = run_attacks(
          run.artifacts.attacker_malware, run.artifacts.actions,
          find_detector(run.artifacts, DetectorKind::LinearSvm),
          run.artifacts.attacker_benign, hard);

      run.q_sweep = sweep_query_budget(run.artifacts, run.config, {2, 5, 10, 20});
      run.alpha_sweep = sweep_max_cost(run.artifacts, run.config, {10, 30, 50});
      runs.push_back(std::move(run));
    }
    for (const SeedRun& run : runs) {
      const auto& attack = run.config.attack;
      for (const auto& [name, results] : run.artifacts.results) {
        for (const AttackResult& r : results) {
          audited.push_back({&r, attack.max_queries, attack.max_cost_percent});
        }
      }
      for (const AttackResult& r : run.hard_linear) {
        audited.push_back({&r, attack.max_queries, attack.max_cost_percent});
      }
    }
  } catch (const std::exception& e) {
    std::printf("FAIL pipeline setup: %s\n", e.what());
    return 1;
  }

  // --- criterion 3 -------------------------------------------------------
  criterion(3, "detectors learn the synthetic corpus (DR/FAR sanity)",
            [&](bool& pass) {
              const Report& report = runs[0].artifacts.report;
              const DetectorReportRow& lin = report_row(report, "linear_svm");
              const DetectorReportRow& knn = report_row(report, "knn_markov");
              const double lin_dr = lin.detection_rate.value_or(0.0);
              const double lin_far = lin.false_alarm_rate.value_or(1.0);
              const double knn_dr = knn.detection_rate.value_or(0.0);
              pass = lin_dr >= 0.90 && lin_far <= 0.05 && knn_dr >= 0.80;
              return "linear DR=" + fmt(lin_dr) + " FAR=" + fmt(lin_far) +
                     ", knn DR=" + fmt(knn_dr);
            });

  // --- criterion 4 -------------------------------------------------------
  criterion(
      4, "soft-label attack beats the random baseline at Q=20, alpha=50",
      [&](bool& pass) {
        std::vector<double> ers, random_ers;
        for (const SeedRun& run : runs) {
          ers.push_back(row_evasion_rate(run.artifacts.report, "linear_svm"));
          random_ers.push_back(
              run.artifacts.report.baselines->random_evasion_rate);
        }
        const double er = mean(ers);
        const double random_er = mean(random_ers);
        pass = er >= 0.50 && er > random_er;
        return "ER=" + fmt(er) + " vs random ER=" + fmt(random_er);
      });

  // --- criterion 5 -------------------------------------------------------
  criterion(
      5, "the hardened svm needs at least as many queries as the plain svm",
      [&](bool& pass) {
        std::vector<double> lin_queries, sec_queries;
        for (const SeedRun& run : runs) {
          for (const auto& [name, results] : run.artifacts.results) {
            if (name != "linear_svm" && name != "sec_svm") continue;
            for (const AttackResult& r : results) {
              if (!r.evaded) continue;
              (name == "sec_svm" ? sec_queries : lin_queries)
                  .push_back(static_cast<double>(r.q_used));
            }
          }
        }
        const double lin = mean(lin_queries);
        const double sec = mean(sec_queries);
        pass = !sec_queries.empty() && !lin_queries.empty() && sec >= lin;
        return "avg queries: sec=" + fmt(sec) + " linear=" + fmt(lin);
      });

  // --- criterion 6 -------------------------------------------------------
  criterion(
      6, "hard-label ER within 15 points of soft-label ER",
      [&](bool& pass) {
        std::vector<double> soft_ers, hard_ers;
        for (const SeedRun& run : runs) {
          soft_ers.push_back(
              row_evasion_rate(run.artifacts.report, "linear_svm"));
          std::uint64_t detected = 0, evaded = 0;
          for (const AttackResult& r : run.hard_linear) {
            detected += r.initially_detected;
            evaded += r.evaded;
          }
          hard_ers.push_back(detected == 0 ? 0.0
                                           : static_cast<double>(evaded) /
                                                 static_cast<double>(detected));
        }
        const double soft = mean(soft_ers);
        const double hard = mean(hard_ers);
        pass = std::abs(soft - hard) <= 0.15;
        return "soft ER=" + fmt(soft) + " hard ER=" + fmt(hard);
      });

  // --- criterion 7 -------------------------------------------------------
  criterion(
      7, "budget, cost and query-ledger safety on every run",
      [&](bool& pass) {
        std::size_t violations = 0;
        for (const AuditedRun& audit : audited) {
          const AttackResult& r = *audit.result;
          if (r.q_used > audit.max_queries) ++violations;
          if (r.evaded && r.cost_percent > audit.max_cost) ++violations;
          std::uint64_t queried = 0;
          for (const TraceStep& step : r.trace) queried += step.queried;
          if (queried + 1 != r.q_used) ++violations;
          if (r.delta.size() > r.q_used) ++violations;
          if (r.evaded != r.final_app.has_value()) ++violations;
        }
        pass = violations == 0 && !audited.empty();
        return std::to_string(audited.size()) + " runs audited, " +
               std::to_string(violations) + " violations";
      });

  // --- criterion 8 -------------------------------------------------------
  criterion(
      8, "transformations preserve original methods and grow feature sets",
      [&](bool& pass) {
        const ExperimentArtifacts& artifacts = runs[0].artifacts;
        Rng rng(808);
        std::size_t checked = 0, failures = 0;
        while (checked < 100) {
          const Corpus& malware = artifacts.attacker_malware;
          const App& z = malware.apps[rng.below(malware.apps.size())];
          std::vector<std::size_t> order(artifacts.actions.gadgets.size());
          std::iota(order.begin(), order.end(), 0);
          rng.shuffle(order);
          const std::size_t count = 1 + rng.below(6);
          App current = z;
          for (std::size_t i = 0; i < count && i < order.size(); ++i) {
            current = apply_transformation(
                current, artifacts.actions.gadgets[order[i]]);
          }
          bool ok = current.classes.size() > z.classes.size();
          for (std::size_t i = 0; i < z.classes.size(); ++i) {
            ok = ok && current.classes[i] == z.classes[i];
          }
          const auto before_grams = ngram_set(z, 2).grams;
          const auto after_grams = ngram_set(current, 2).grams;
          ok = ok && std::includes(after_grams.begin(), after_grams.end(),
                                   before_grams.begin(), before_grams.end());
          const SparseVec before_x = artifacts.binary_space.extract(z);
          const SparseVec after_x = artifacts.binary_space.extract(current);
          ok = ok && std::includes(after_x.indices.begin(),
                                   after_x.indices.end(),
                                   before_x.indices.begin(),
                                   before_x.indices.end());
          ok = ok && std::includes(current.manifest_features.begin(),
                                   current.manifest_features.end(),
                                   z.manifest_features.begin(),
                                   z.manifest_features.end());
          ok = ok && current.size_bytes > z.size_bytes;
          failures += !ok;
          ++checked;
        }
        pass = failures == 0;
        return "100 random gadget sequences, " + std::to_string(failures) +
               " violations";
      });

  // --- criterion 9 -------------------------------------------------------
  criterion(
      9, "ER is non-decreasing in the query budget and the cost bound",
      [&](bool& pass) {
        std::vector<double> q_means(4, 0.0), a_means(3, 0.0);
        for (const SeedRun& run : runs) {
          for (std::size_t i = 0; i < 4; ++i) {
            q_means[i] += run.q_sweep[i].evasion_rate / runs.size();
          }
          for (std::size_t i = 0; i < 3; ++i) {
            a_means[i] += run.alpha_sweep[i].evasion_rate / runs.size();
          }
        }
        pass = true;
        for (std::size_t i = 1; i < q_means.size(); ++i) {
          pass = pass && q_means[i] >= q_means[i - 1];
        }
        for (std::size_t i = 1; i < a_means.size(); ++i) {
          pass = pass && a_means[i] >= a_means[i - 1];
        }
        std::string detail = "ER(Q=2,5,10,20)=";
        for (double v : q_means) detail += fmt(v) + " ";
        detail += "ER(a=10,30,50)=";
        for (double v : a_means) detail += fmt(v) + " ";
        return detail;
      });

  // --- criterion 10 ------------------------------------------------------
  criterion(
      10, "the white-box baseline reaches full evasion with fewer additions",
      [&](bool& pass) {
        std::vector<double> pk_ers, pk_added, evade_added;
        for (const SeedRun& run : runs) {
          const BaselineReport& b = *run.artifacts.report.baselines;
          pk_ers.push_back(b.pk_evasion_rate);
          if (b.pk_added_features.count > 0) {
            pk_added.push_back(b.pk_added_features.mean);
          }
          const DetectorReportRow& lin =
              report_row(run.artifacts.report, "linear_svm");
          if (lin.added_binary_features.count > 0) {
            evade_added.push_back(lin.added_binary_features.mean);
          }
        }
        const double pk_er = mean(pk_ers);
        const double pk_mean = mean(pk_added);
        const double evade_mean = mean(evade_added);
        pass = pk_er == 1.0 && pk_mean < evade_mean;
        return "PK ER=" + fmt(pk_er) + ", PK adds " + fmt(pk_mean) +
               " features vs " + fmt(evade_mean);
      });

  // --- criterion 11 ------------------------------------------------------
  criterion(
      11, "transfer diagonal is exact and stronger surrogates transfer better",
      [&](bool& pass) {
        bool diag_ok = true;
        std::vector<double> lin_offdiag, sec_offdiag;
        for (const SeedRun& run : runs) {
          const TransferMatrix& matrix = *run.artifacts.transfer;
          for (std::size_t i = 0; i < matrix.detectors.size(); ++i) {
            const double direct = row_evasion_rate(run.artifacts.report,
                                                   matrix.detectors[i]);
            diag_ok = diag_ok && matrix.evasion_rate[i][i] == direct;
          }
          std::map<std::string, std::size_t> index;
          for (std::size_t i = 0; i < matrix.detectors.size(); ++i) {
            index[matrix.detectors[i]] = i;
          }
          const std::size_t lin = index.at("linear_svm");
          const std::size_t sec = index.at("sec_svm");
          std::vector<double> lin_cells, sec_cells;
          for (std::size_t t = 0; t < matrix.detectors.size(); ++t) {
            if (t != lin) lin_cells.push_back(matrix.evasion_rate[lin][t]);
            if (t != sec) sec_cells.push_back(matrix.evasion_rate[sec][t]);
          }
          lin_offdiag.push_back(mean(lin_cells));
          sec_offdiag.push_back(mean(sec_cells));
        }
        const double lin = mean(lin_offdiag);
        const double sec = mean(sec_offdiag);
        pass = diag_ok && sec >= lin;
        return std::string(diag_ok ? "diagonal exact" : "diagonal BROKEN") +
               ", off-diagonal ER: sec=" + fmt(sec) + " linear=" + fmt(lin);
      });

  std::size_t passed = 0;
  for (const CriterionOutcome& outcome : g_outcomes) passed += outcome.pass;
  std::printf("%zu/%zu criteria passed\n", passed, g_outcomes.size());
  return passed == g_outcomes.size() ? 0 : 1;
}
