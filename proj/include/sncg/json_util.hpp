#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace sncg {

using Json = nlohmann::json;

/// Parses a JSON file; failures become ValidationError naming the file.
Json read_json_file(const std::filesystem::path& path);

/// j[key] or a ValidationError naming `context.key`.
const Json& require_field(const Json& j, const std::string& key, const std::string& context);

template <class T>
T field_as(const Json& j, const std::string& key, const std::string& context);

template <class T>
T field_or(const Json& j, const std::string& key, T fallback, const std::string& context) {
  if (!j.contains(key)) return fallback;
  return field_as<T>(j, key, context);
}

}  // namespace sncg

#include "sncg/errors.hpp"

namespace sncg {

template <class T>
T field_as(const Json& j, const std::string& key, const std::string& context) {
  const Json& v = require_field(j, key, context);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(context + "." + key + ": wrong type");
  }
}

}  // namespace sncg
