#include "sncg/json_util.hpp"

#include <fstream>

#include "sncg/errors.hpp"

namespace sncg {

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

const Json& require_field(const Json& j, const std::string& key, const std::string& context) {
  if (!j.is_object() || !j.contains(key))
    throw ValidationError(context + ": missing field '" + key + "'");
  return j.at(key);
}

}  // namespace sncg
