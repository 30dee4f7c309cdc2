#pragma once

// Strict JSON object reader: every key must be consumed, unknown keys are
// reported by name.

#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace attnpool::detail {

class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw std::invalid_argument(context_ + ": expected a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T get(const std::string& key) {
    if (!j_.contains(key)) throw std::invalid_argument(context_ + ": missing required key '" + key + "'");
    used_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(context_ + ": bad value for '" + key + "': " + e.what());
    }
  }

  template <typename T>
  T get_or(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return get<T>(key);
  }

  const nlohmann::json& raw(const std::string& key) {
    if (!j_.contains(key)) throw std::invalid_argument(context_ + ": missing required key '" + key + "'");
    used_.insert(key);
    return j_.at(key);
  }

  /// Marks a key as forbidden for the current mode.
  void reject(const std::string& key, const std::string& why) const {
    if (j_.contains(key)) throw std::invalid_argument(context_ + ": key '" + key + "' not allowed " + why);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw std::invalid_argument(context_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string context_;
  std::set<std::string> used_;
};

}  // namespace attnpool::detail
