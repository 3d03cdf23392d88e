// Internal JSON helpers shared by the line-delimited file formats. Parsing is
// strict: unknown or missing fields are errors, bad records are never repaired.
#ifndef EVASIM_SRC_JSON_UTIL_HPP
#define EVASIM_SRC_JSON_UTIL_HPP

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "evasim/app.hpp"

namespace evasim::detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct JsonFieldError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void reject_unknown_fields(const json& obj,
                           std::initializer_list<std::string_view> allowed,
                           std::string_view context);

const json& require(const json& obj, const char* key, std::string_view context);

MethodDef parse_method(const json& j);
ordered_json method_to_json(const MethodDef& method);

App parse_app(const json& j);
ordered_json app_to_json(const App& app);

}  // namespace evasim::detail

#endif  // EVASIM_SRC_JSON_UTIL_HPP
