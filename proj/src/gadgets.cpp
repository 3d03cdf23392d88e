#include "evasim/gadgets.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <unordered_set>

#include "evasim/ngram.hpp"
#include "json_util.hpp"

namespace evasim {
namespace {

using detail::json;
using detail::ordered_json;

// Family of a manifest feature: the part after its namespace, up to the
// first dot ("perm::smsx.p2" -> "smsx").
std::string_view feature_family(std::string_view feature) {
  const auto ns = feature.find("::");
  std::string_view name =
      ns == std::string_view::npos ? feature : feature.substr(ns + 2);
  const auto dot = name.find('.');
  return dot == std::string_view::npos ? name : name.substr(0, dot);
}

std::string_view intra_class_target(std::string_view api_call) {
  if (api_call.starts_with("this.")) return api_call.substr(5);
  if (api_call.starts_with("this->")) return api_call.substr(6);
  return {};
}

const MethodDef* find_method(const ClassDef& cls, std::string_view name) {
  for (const MethodDef& method : cls.methods) {
    if (method.name == name) return &method;
  }
  return nullptr;
}

// Containing method plus one level of resolvable intra-class references.
std::vector<MethodDef> build_slice(const ClassDef& cls, const MethodDef& anchor) {
  std::vector<MethodDef> slice{anchor};
  std::unordered_set<std::string_view> included{anchor.name};
  for (const std::string& call : anchor.api_calls) {
    const std::string_view target = intra_class_target(call);
    if (target.empty() || included.count(target)) continue;
    if (const MethodDef* helper = find_method(cls, target)) {
      slice.push_back(*helper);
      included.insert(helper->name);
    }
  }
  return slice;
}

std::set<std::string> manifest_deltas_for(const App& donor,
                                          const std::vector<MethodDef>& slice) {
  std::set<std::string_view> families;
  for (const MethodDef& method : slice) {
    for (const std::string& call : method.api_calls) {
      families.insert(api_family(call));
    }
  }
  std::set<std::string> deltas;
  for (const std::string& feature : donor.manifest_features) {
    if (families.count(feature_family(feature))) deltas.insert(feature);
  }
  return deltas;
}

ordered_json gadget_to_json(const Gadget& gadget) {
  ordered_json j;
  j["id"] = gadget.id;
  j["donor_id"] = gadget.donor_id;
  j["anchor_api"] = gadget.anchor_api;
  ordered_json methods = ordered_json::array();
  for (const MethodDef& method : gadget.methods) {
    methods.push_back(detail::method_to_json(method));
  }
  j["methods"] = std::move(methods);
  j["manifest_deltas"] = gadget.manifest_deltas;
  j["size_bytes"] = gadget.size_bytes;
  return j;
}

Gadget gadget_from_json(const json& j) {
  if (!j.is_object()) throw detail::JsonFieldError("gadget record is not an object");
  detail::reject_unknown_fields(
      j, {"id", "donor_id", "anchor_api", "methods", "manifest_deltas",
          "size_bytes"},
      "gadget");
  Gadget gadget;
  gadget.id = detail::require(j, "id", "gadget").get<std::string>();
  gadget.donor_id = detail::require(j, "donor_id", "gadget").get<std::string>();
  gadget.anchor_api =
      detail::require(j, "anchor_api", "gadget").get<std::string>();
  for (const json& jm : detail::require(j, "methods", "gadget")) {
    gadget.methods.push_back(detail::parse_method(jm));
  }
  for (const json& jf : detail::require(j, "manifest_deltas", "gadget")) {
    gadget.manifest_deltas.insert(jf.get<std::string>());
  }
  gadget.size_bytes =
      detail::require(j, "size_bytes", "gadget").get<std::uint64_t>();
  if (gadget.size_bytes != gadget_size_estimate(gadget.methods)) {
    throw detail::JsonFieldError("gadget '" + gadget.id +
                                 "': size_bytes does not match the slice");
  }
  const bool anchored = std::any_of(
      gadget.methods.begin(), gadget.methods.end(), [&](const MethodDef& m) {
        return std::find(m.api_calls.begin(), m.api_calls.end(),
                         gadget.anchor_api) != m.api_calls.end();
      });
  if (!anchored) {
    throw detail::JsonFieldError("gadget '" + gadget.id +
                                 "': anchor_api not present in any method");
  }
  return gadget;
}

}  // namespace

std::uint64_t gadget_size_estimate(const std::vector<MethodDef>& methods) {
  std::uint64_t opcodes = 0;
  for (const MethodDef& method : methods) opcodes += method.opcodes.size();
  return 4 * opcodes + 64 * methods.size();
}

const Gadget* ActionSet::find(std::string_view gadget_id) const {
  for (const Gadget& gadget : gadgets) {
    if (gadget.id == gadget_id) return &gadget;
  }
  return nullptr;
}

bool is_intra_class_ref(std::string_view api_call) {
  return api_family(api_call) == "this";
}

std::vector<DonorSelection> select_donors(const Corpus& malware,
                                          const Corpus& benign, int n) {
  if (malware.apps.empty() || benign.apps.empty()) {
    throw ActionSetError("select_donors: both corpora must be nonempty");
  }
  const BenignGramIndex index(benign, n);
  std::vector<DonorSelection> selections;
  selections.reserve(malware.apps.size());
  for (const App& m : malware.apps) {
    const SimilarityResult best = max_benign_similarity(ngram_set(m, n), index);
    selections.push_back({m.id, best.argmax_id, best.value});
  }
  return selections;
}

std::vector<const App*> donor_pool(const std::vector<DonorSelection>& selections,
                                   const Corpus& benign) {
  std::set<std::string_view> ids;
  for (const DonorSelection& sel : selections) ids.insert(sel.donor_id);
  std::vector<const App*> pool;
  for (std::string_view id : ids) {
    const App* donor = benign.find(id);
    if (!donor) {
      throw ActionSetError("donor '" + std::string(id) + "' not in benign corpus");
    }
    pool.push_back(donor);
  }
  return pool;
}

std::vector<Gadget> extract_gadgets(const App& donor) {
  // anchor api -> smallest slice so far (scan order breaks ties)
  std::map<std::string, std::vector<MethodDef>> best_slice;
  for (const ClassDef& cls : donor.classes) {
    for (const MethodDef& method : cls.methods) {
      std::vector<MethodDef> slice;  // built lazily, shared by all anchors
      for (const std::string& call : method.api_calls) {
        if (is_intra_class_ref(call)) continue;
        if (slice.empty()) slice = build_slice(cls, method);
        auto it = best_slice.find(call);
        if (it == best_slice.end()) {
          best_slice.emplace(call, slice);
        } else if (gadget_size_estimate(slice) <
                   gadget_size_estimate(it->second)) {
          it->second = slice;
        }
      }
    }
  }
  if (best_slice.empty()) {
    std::cerr << "warning: donor '" << donor.id
              << "' has no external API calls; no gadgets extracted\n";
    return {};
  }
  std::vector<Gadget> gadgets;
  gadgets.reserve(best_slice.size());
  for (auto& [anchor, slice] : best_slice) {
    Gadget gadget;
    gadget.id = donor.id + "/" + anchor;
    gadget.donor_id = donor.id;
    gadget.anchor_api = anchor;
    gadget.size_bytes = gadget_size_estimate(slice);
    gadget.manifest_deltas = manifest_deltas_for(donor, slice);
    gadget.methods = std::move(slice);
    gadgets.push_back(std::move(gadget));
  }
  return gadgets;  // map iteration: already sorted by anchor
}

ActionSet build_action_set(const std::vector<const App*>& donors) {
  if (donors.empty()) {
    throw ActionSetError("build_action_set: donor list is empty");
  }
  std::map<std::string, Gadget> by_anchor;
  for (const App* donor : donors) {
    for (Gadget& gadget : extract_gadgets(*donor)) {
      auto it = by_anchor.find(gadget.anchor_api);
      if (it == by_anchor.end()) {
        by_anchor.emplace(gadget.anchor_api, std::move(gadget));
      } else if (gadget.size_bytes < it->second.size_bytes ||
                 (gadget.size_bytes == it->second.size_bytes &&
                  gadget.id < it->second.id)) {
        it->second = std::move(gadget);
      }
    }
  }
  if (by_anchor.empty()) {
    throw ActionSetError("build_action_set: donors produced no gadgets");
  }
  ActionSet actions;
  actions.gadgets.reserve(by_anchor.size());
  for (auto& [anchor, gadget] : by_anchor) {
    actions.gadgets.push_back(std::move(gadget));
  }
  std::sort(actions.gadgets.begin(), actions.gadgets.end(),
            [](const Gadget& a, const Gadget& b) { return a.id < b.id; });
  return actions;
}

std::vector<std::string> applied_gadget_ids(const App& app) {
  std::vector<std::string> ids;
  for (const ClassDef& cls : app.classes) {
    if (!cls.injected || !cls.name.starts_with("inj::")) continue;
    const auto sep = cls.name.rfind("::");
    if (sep == std::string::npos || sep < 5) continue;
    const std::string_view counter = std::string_view(cls.name).substr(sep + 2);
    if (counter.empty() ||
        counter.find_first_not_of("0123456789") != std::string_view::npos) {
      continue;
    }
    ids.push_back(cls.name.substr(5, sep - 5));
  }
  return ids;
}

App apply_transformation(const App& app, const Gadget& gadget) {
  for (const std::string& applied : applied_gadget_ids(app)) {
    if (applied == gadget.id) {
      throw TransformError("gadget '" + gadget.id +
                           "' already applied to app '" + app.id + "'");
    }
  }
  std::size_t injected_count = 0;
  for (const ClassDef& cls : app.classes) {
    if (cls.injected) ++injected_count;
  }

  App result = app;
  ClassDef injected;
  injected.name =
      "inj::" + gadget.id + "::" + std::to_string(injected_count);
  injected.injected = true;
  injected.methods = gadget.methods;
  result.classes.push_back(std::move(injected));
  result.manifest_features.insert(gadget.manifest_deltas.begin(),
                                  gadget.manifest_deltas.end());
  result.size_bytes += gadget.size_bytes;
  return result;
}

void save_action_set(const ActionSet& actions,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ActionSetError("cannot write action set file: " + path.string());
  }
  for (const Gadget& gadget : actions.gadgets) {
    out << gadget_to_json(gadget).dump() << '\n';
  }
}

ActionSet load_action_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ActionSetError("cannot open action set file: " + path.string());
  }
  ActionSet actions;
  std::unordered_set<std::string> ids;
  std::unordered_set<std::string> anchors;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Gadget gadget;
    try {
      gadget = gadget_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw ActionSetError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(gadget.id).second) {
      throw ActionSetError("line " + std::to_string(line_no) +
                           ": duplicate gadget id '" + gadget.id + "'");
    }
    if (!anchors.insert(gadget.anchor_api).second) {
      throw ActionSetError("line " + std::to_string(line_no) +
                           ": duplicate anchor api '" + gadget.anchor_api + "'");
    }
    actions.gadgets.push_back(std::move(gadget));
  }
  if (actions.gadgets.empty()) {
    throw ActionSetError("action set file is empty: " + path.string());
  }
  std::sort(actions.gadgets.begin(), actions.gadgets.end(),
            [](const Gadget& a, const Gadget& b) { return a.id < b.id; });
  return actions;
}

}  // namespace evasim
