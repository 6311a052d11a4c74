#pragma once

#include <initializer_list>
#include <string>

#include "json.hpp"

namespace i2ckd {

using Json = nlohmann::json;

// Strict-parsing guard: rejects any key outside the allowed set so a typo
// in a config cannot silently fall back to a default.
inline void require_known_keys(const Json& j, std::initializer_list<const char*> allowed,
                               const std::string& context) {
  if (!j.is_object()) throw std::invalid_argument(context + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) { known = true; break; }
    if (!known) throw std::invalid_argument(context + ": unknown key '" + key + "'");
  }
}

template <typename T>
T json_get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace i2ckd
