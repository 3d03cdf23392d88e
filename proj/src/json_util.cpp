#include "json_util.hpp"

namespace evasim::detail {

void reject_unknown_fields(const json& obj,
                           std::initializer_list<std::string_view> allowed,
                           std::string_view context) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (std::string_view a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw JsonFieldError("unknown field '" + key + "' in " +
                           std::string(context));
    }
  }
}

const json& require(const json& obj, const char* key, std::string_view context) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw JsonFieldError("missing field '" + std::string(key) + "' in " +
                         std::string(context));
  }
  return *it;
}

MethodDef parse_method(const json& j) {
  if (!j.is_object()) throw JsonFieldError("method entry is not an object");
  reject_unknown_fields(j, {"name", "opcodes", "api_calls"}, "method");
  MethodDef method;
  method.name = require(j, "name", "method").get<std::string>();
  const json& ops = require(j, "opcodes", "method");
  if (!ops.is_array()) throw JsonFieldError("'opcodes' must be an array");
  method.opcodes.reserve(ops.size());
  for (const json& op : ops) {
    const auto s = op.get<std::string>();
    if (s.size() != 1 || !is_opcode_symbol(s[0])) {
      throw JsonFieldError("unknown opcode symbol '" + s + "' in method '" +
                           method.name + "'");
    }
    method.opcodes.push_back(s[0]);
  }
  const json& apis = require(j, "api_calls", "method");
  if (!apis.is_array()) throw JsonFieldError("'api_calls' must be an array");
  for (const json& api : apis) method.api_calls.push_back(api.get<std::string>());
  return method;
}

ordered_json method_to_json(const MethodDef& method) {
  ordered_json j;
  j["name"] = method.name;
  ordered_json ops = ordered_json::array();
  for (char op : method.opcodes) ops.push_back(std::string(1, op));
  j["opcodes"] = std::move(ops);
  j["api_calls"] = method.api_calls;
  return j;
}

App parse_app(const json& j) {
  if (!j.is_object()) throw JsonFieldError("app record is not an object");
  reject_unknown_fields(
      j, {"id", "label", "size_bytes", "manifest_features", "classes"}, "app");
  App app;
  app.id = require(j, "id", "app").get<std::string>();
  app.label = label_from_string(require(j, "label", "app").get<std::string>());
  const json& size = require(j, "size_bytes", "app");
  if (!size.is_number_unsigned() || size.get<std::uint64_t>() == 0) {
    throw JsonFieldError("'size_bytes' must be a positive integer");
  }
  app.size_bytes = size.get<std::uint64_t>();

  const json& feats = require(j, "manifest_features", "app");
  if (!feats.is_array()) {
    throw JsonFieldError("'manifest_features' must be an array");
  }
  for (const json& f : feats) {
    if (!app.manifest_features.insert(f.get<std::string>()).second) {
      throw JsonFieldError("duplicate manifest feature '" +
                           f.get<std::string>() + "'");
    }
  }

  const json& classes = require(j, "classes", "app");
  if (!classes.is_array()) throw JsonFieldError("'classes' must be an array");
  for (const json& jc : classes) {
    if (!jc.is_object()) throw JsonFieldError("class entry is not an object");
    reject_unknown_fields(jc, {"name", "injected", "methods"}, "class");
    ClassDef cls;
    cls.name = require(jc, "name", "class").get<std::string>();
    cls.injected = require(jc, "injected", "class").get<bool>();
    const json& methods = require(jc, "methods", "class");
    if (!methods.is_array()) throw JsonFieldError("'methods' must be an array");
    for (const json& jm : methods) cls.methods.push_back(parse_method(jm));
    app.classes.push_back(std::move(cls));
  }
  return app;
}

ordered_json app_to_json(const App& app) {
  ordered_json j;
  j["id"] = app.id;
  j["label"] = std::string(to_string(app.label));
  j["size_bytes"] = app.size_bytes;
  j["manifest_features"] = app.manifest_features;  // std::set: sorted output
  ordered_json classes = ordered_json::array();
  for (const ClassDef& cls : app.classes) {
    ordered_json jc;
    jc["name"] = cls.name;
    jc["injected"] = cls.injected;
    ordered_json methods = ordered_json::array();
    for (const MethodDef& method : cls.methods) {
      methods.push_back(method_to_json(method));
    }
    jc["methods"] = std::move(methods);
    classes.push_back(std::move(jc));
  }
  j["classes"] = std::move(classes);
  return j;
}

}  // namespace evasim::detail
