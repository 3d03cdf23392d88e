#ifndef EVASIM_ORACLE_HPP
#define EVASIM_ORACLE_HPP

#include <optional>
#include <stdexcept>

#include "evasim/app.hpp"

namespace evasim {

enum class OracleMode { HardLabel, SoftLabel };

struct QueryAnswer {
  Label label = Label::Malware;
  // Present only in soft-label mode. Higher means more benign-looking;
  // the label is benign exactly when the score clears the detector's
  // threshold on the benign side.
  std::optional<double> benign_score;
};

struct QueryBudgetExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The attacker's only channel to a detector: submit an app, get an answer,
// spend one query. Implementations hide every detail of the model behind it.
class BlackBoxOracle {
 public:
  virtual ~BlackBoxOracle() = default;

  // Counts one query. Throws QueryBudgetExhausted when a limit is set and
  // already spent; a failed call does not count.
  virtual QueryAnswer query(const App& app) = 0;

  virtual std::uint64_t query_count() const = 0;
  virtual OracleMode mode() const = 0;
};

}  // namespace evasim

#endif  // EVASIM_ORACLE_HPP
