#include "evasim/app.hpp"

#include <unordered_set>

namespace evasim {

Label label_from_string(std::string_view s) {
  if (s == "malware") return Label::Malware;
  if (s == "benign") return Label::Benign;
  throw std::invalid_argument("unknown label: " + std::string(s));
}

const App* Corpus::find(std::string_view id) const {
  for (const App& app : apps) {
    if (app.id == id) return &app;
  }
  return nullptr;
}

void validate_app(const App& app) {
  if (app.size_bytes == 0) {
    throw InvalidAppError("app '" + app.id + "': size_bytes must be positive");
  }
  std::unordered_set<std::string_view> class_names;
  for (const ClassDef& cls : app.classes) {
    if (!class_names.insert(cls.name).second) {
      throw InvalidAppError("app '" + app.id + "': duplicate class name '" +
                            cls.name + "'");
    }
    std::unordered_set<std::string_view> method_names;
    for (const MethodDef& method : cls.methods) {
      if (!method_names.insert(method.name).second) {
        throw InvalidAppError("app '" + app.id + "': duplicate method name '" +
                              method.name + "' in class '" + cls.name + "'");
      }
      for (char op : method.opcodes) {
        if (!is_opcode_symbol(op)) {
          throw InvalidAppError("app '" + app.id + "': unknown opcode symbol '" +
                                std::string(1, op) + "' in method '" +
                                method.name + "'");
        }
      }
    }
  }
}

void validate_corpus(const Corpus& corpus) {
  std::unordered_set<std::string_view> ids;
  for (const App& app : corpus.apps) {
    if (!ids.insert(app.id).second) {
      throw InvalidAppError("duplicate app id '" + app.id + "'");
    }
    validate_app(app);
  }
}

std::uint64_t app_total_opcodes(const App& app) {
  std::uint64_t total = 0;
  for (const ClassDef& cls : app.classes) {
    for (const MethodDef& method : cls.methods) {
      total += method.opcodes.size();
    }
  }
  return total;
}

std::string_view api_family(std::string_view api_call) {
  const auto dot = api_call.find('.');
  const auto arrow = api_call.find("->");
  const auto cut = std::min(dot, arrow);
  return cut == std::string_view::npos ? api_call : api_call.substr(0, cut);
}

std::uint64_t app_total_api_calls(const App& app) {
  std::uint64_t total = 0;
  for (const ClassDef& cls : app.classes) {
    for (const MethodDef& method : cls.methods) {
      total += method.api_calls.size();
    }
  }
  return total;
}

}  // namespace evasim
