#ifndef EVASIM_GADGETS_HPP
#define EVASIM_GADGETS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "evasim/app.hpp"

namespace evasim {

// A transplantable code slice anchored at an API call: the method containing
// the anchor plus its one-level same-class helpers.
struct Gadget {
  std::string id;  // "<donor_id>/<anchor_api>"
  std::string donor_id;
  std::string anchor_api;
  std::vector<MethodDef> methods;
  std::set<std::string> manifest_deltas;
  std::uint64_t size_bytes = 0;  // 4 * opcodes + 64 * methods, always

  bool operator==(const Gadget&) const = default;
};

std::uint64_t gadget_size_estimate(const std::vector<MethodDef>& methods);

struct DonorSelection {
  std::string malware_id;
  std::string donor_id;
  double similarity = 0.0;
};

struct ActionSet {
  std::vector<Gadget> gadgets;  // unique ids, unique anchors, sorted by id
  std::vector<DonorSelection> provenance;

  const Gadget* find(std::string_view gadget_id) const;
};

struct ActionSetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TransformError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// True iff the api_call is an intra-class invoke reference ("this.<method>"
// or "this-><method>") rather than an external API.
bool is_intra_class_ref(std::string_view api_call);

// For each malware app, the benign app with the highest containment of its
// n-grams in the malware app; ties broken by lowest donor id.
std::vector<DonorSelection> select_donors(const Corpus& malware,
                                          const Corpus& benign, int n);

// Distinct donors named by the selections, in ascending id order.
std::vector<const App*> donor_pool(const std::vector<DonorSelection>& selections,
                                   const Corpus& benign);

// One gadget per distinct external API call of the donor. The slice is the
// containing method plus every same-class method reached by one level of
// resolvable intra-class references; when an API occurs in several methods
// the smallest slice is kept.
std::vector<Gadget> extract_gadgets(const App& donor);

// Union of the donors' gadgets, deduplicated per anchor API keeping the
// smallest size; deterministic ordering by gadget id. Empty union is an error.
ActionSet build_action_set(const std::vector<const App*>& donors);

// Returns a new app with one extra injected class holding the gadget's
// methods; original classes and methods are untouched. Applying the same
// gadget to an app twice is rejected.
App apply_transformation(const App& app, const Gadget& gadget);

// Gadget ids already injected into the app, in injection order.
std::vector<std::string> applied_gadget_ids(const App& app);

// Line-delimited JSON, one gadget per line, so preparation and attack can
// run as separate steps.
void save_action_set(const ActionSet& actions, const std::filesystem::path& path);
ActionSet load_action_set(const std::filesystem::path& path);

}  // namespace evasim

#endif  // EVASIM_GADGETS_HPP
