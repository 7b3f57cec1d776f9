#pragma once

#include <cmath>
#include <string>
#include <variant>

#include <json.hpp>

namespace utk {

/// Tagged thematic value: number, text, or null. Numbers are always finite.
class Scalar {
public:
  Scalar() = default;
  Scalar(double v) { if (std::isfinite(v)) value_ = v; }
  Scalar(int v) : value_(static_cast<double>(v)) {}
  Scalar(std::string s) : value_(std::move(s)) {}
  Scalar(const char* s) : value_(std::string(s)) {}

  static Scalar null() { return {}; }

  bool is_null() const { return std::holds_alternative<std::monostate>(value_); }
  bool is_number() const { return std::holds_alternative<double>(value_); }
  bool is_text() const { return std::holds_alternative<std::string>(value_); }

  double number() const { return std::get<double>(value_); }
  const std::string& text() const { return std::get<std::string>(value_); }

  friend bool operator==(const Scalar&, const Scalar&) = default;

private:
  std::variant<std::monostate, double, std::string> value_;
};

inline void to_json(nlohmann::json& j, const Scalar& s) {
  if (s.is_number()) j = s.number();
  else if (s.is_text()) j = s.text();
  else j = nullptr;
}

/// NaN/inf numbers and JSON null become null; booleans become 1/0.
inline Scalar scalar_from_json(const nlohmann::json& j) {
  if (j.is_number()) return Scalar(j.get<double>());
  if (j.is_string()) return Scalar(j.get<std::string>());
  if (j.is_boolean()) return Scalar(j.get<bool>() ? 1.0 : 0.0);
  return Scalar::null();
}

}  // namespace utk
