#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace metatest {

/// Exact, arbitrary-precision decimal number. Field bounds and submitted
/// values are compared with this type so that boundary tests never depend on
/// binary floating-point rounding.
class Decimal {
public:
  Decimal() = default;
  static Decimal from_int(std::int64_t value);

  /// Strict literal: `-?digits` (integer) or `[+-]?digits(.digits)?` (numeric).
  static std::optional<Decimal> parse_integer(std::string_view text);
  static std::optional<Decimal> parse_numeric(std::string_view text);
  /// JSON number grammar, exponent included.
  static std::optional<Decimal> parse_json_number(std::string_view text);

  bool is_negative() const noexcept { return negative_; }
  bool is_zero() const noexcept { return magnitude_ == "0"; }
  bool is_integer() const noexcept { return scale_ == 0; }
  std::optional<std::int64_t> to_int64() const;
  double to_double() const;

  /// Canonical rendering: no exponent, no trailing fractional zeros, no "-0".
  std::string to_string() const;

  Decimal operator-() const;
  friend Decimal operator+(const Decimal& a, const Decimal& b);
  friend Decimal operator-(const Decimal& a, const Decimal& b);
  Decimal abs() const;
  Decimal half() const;
  Decimal floor() const;
  Decimal ceil() const;

  friend std::strong_ordering operator<=>(const Decimal& a, const Decimal& b);
  friend bool operator==(const Decimal& a, const Decimal& b) = default;

private:
  Decimal(bool negative, std::string magnitude, int scale);
  void normalize();

  bool negative_ = false;
  std::string magnitude_ = "0"; // unscaled digits, no leading zeros
  int scale_ = 0;               // digits after the decimal point
};

} // namespace metatest
