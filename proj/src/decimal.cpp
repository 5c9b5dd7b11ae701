#include "metatest/decimal.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

namespace metatest {

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

int compare_magnitude(std::string_view a, std::string_view b) {
  a.remove_prefix(std::min(a.find_first_not_of('0'), a.size()));
  b.remove_prefix(std::min(b.find_first_not_of('0'), b.size()));
  if (a.size() != b.size())
    return a.size() < b.size() ? -1 : 1;
  int c = a.compare(b);
  return c < 0 ? -1 : (c > 0 ? 1 : 0);
}

std::string add_magnitude(const std::string& a, const std::string& b) {
  std::string out;
  out.reserve(std::max(a.size(), b.size()) + 1);
  int carry = 0;
  auto i = a.rbegin(), j = b.rbegin();
  while (i != a.rend() || j != b.rend() || carry) {
    int d = carry;
    if (i != a.rend())
      d += *i++ - '0';
    if (j != b.rend())
      d += *j++ - '0';
    out.push_back(static_cast<char>('0' + d % 10));
    carry = d / 10;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Requires a >= b.
std::string sub_magnitude(const std::string& a, const std::string& b) {
  std::string out;
  out.reserve(a.size());
  int borrow = 0;
  auto j = b.rbegin();
  for (auto i = a.rbegin(); i != a.rend(); ++i) {
    int d = (*i - '0') - borrow;
    if (j != b.rend())
      d -= *j++ - '0';
    borrow = d < 0;
    if (d < 0)
      d += 10;
    out.push_back(static_cast<char>('0' + d));
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::string mul_small(const std::string& a, int k) {
  std::string out;
  int carry = 0;
  for (auto i = a.rbegin(); i != a.rend(); ++i) {
    int d = (*i - '0') * k + carry;
    out.push_back(static_cast<char>('0' + d % 10));
    carry = d / 10;
  }
  while (carry) {
    out.push_back(static_cast<char>('0' + carry % 10));
    carry /= 10;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Both operands rescaled to the larger scale.
std::pair<std::string, std::string> aligned(const std::string& a, int sa, const std::string& b,
                                            int sb) {
  int s = std::max(sa, sb);
  return {a + std::string(static_cast<size_t>(s - sa), '0'),
          b + std::string(static_cast<size_t>(s - sb), '0')};
}

} // namespace

Decimal::Decimal(bool negative, std::string magnitude, int scale)
    : negative_(negative), magnitude_(std::move(magnitude)), scale_(scale) {
  normalize();
}

void Decimal::normalize() {
  while (scale_ > 0 && magnitude_.size() > 1 && magnitude_.back() == '0') {
    magnitude_.pop_back();
    --scale_;
  }
  if (scale_ > 0 && magnitude_ == "0")
    scale_ = 0;
  auto nz = magnitude_.find_first_not_of('0');
  if (nz == std::string::npos)
    magnitude_ = "0";
  else if (nz > 0)
    magnitude_.erase(0, nz);
  if (magnitude_ == "0") {
    negative_ = false;
    scale_ = 0;
  }
}

Decimal Decimal::from_int(std::int64_t value) {
  bool neg = value < 0;
  // Avoid overflow on INT64_MIN by working in unsigned space.
  std::uint64_t mag = neg ? (~static_cast<std::uint64_t>(value) + 1) : static_cast<std::uint64_t>(value);
  return Decimal(neg, std::to_string(mag), 0);
}

std::optional<Decimal> Decimal::parse_integer(std::string_view text) {
  bool neg = false;
  if (!text.empty() && text.front() == '-') {
    neg = true;
    text.remove_prefix(1);
  }
  if (!all_digits(text))
    return std::nullopt;
  return Decimal(neg, std::string(text), 0);
}

std::optional<Decimal> Decimal::parse_numeric(std::string_view text) {
  bool neg = false;
  if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
    neg = text.front() == '-';
    text.remove_prefix(1);
  }
  auto dot = text.find('.');
  std::string_view whole = text.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (!all_digits(whole))
    return std::nullopt;
  if (dot != std::string_view::npos && !all_digits(frac))
    return std::nullopt;
  return Decimal(neg, std::string(whole) + std::string(frac), static_cast<int>(frac.size()));
}

std::optional<Decimal> Decimal::parse_json_number(std::string_view text) {
  auto e = text.find_first_of("eE");
  std::string_view mantissa = text.substr(0, e);
  if (!mantissa.empty() && mantissa.front() == '+')
    return std::nullopt;
  auto base = parse_numeric(mantissa);
  if (!base || e == std::string_view::npos)
    return base;
  std::string_view exp_text = text.substr(e + 1);
  if (!exp_text.empty() && exp_text.front() == '+')
    exp_text.remove_prefix(1);
  int exponent = 0;
  auto [ptr, ec] = std::from_chars(exp_text.data(), exp_text.data() + exp_text.size(), exponent);
  if (ec != std::errc{} || ptr != exp_text.data() + exp_text.size() || exp_text.empty())
    return std::nullopt;
  if (exponent > 4096 || exponent < -4096)
    return std::nullopt;
  Decimal d = *base;
  int scale = d.scale_ - exponent;
  std::string mag = d.magnitude_;
  if (scale < 0) {
    mag.append(static_cast<size_t>(-scale), '0');
    scale = 0;
  }
  return Decimal(d.negative_, mag, scale);
}

std::optional<std::int64_t> Decimal::to_int64() const {
  if (scale_ != 0)
    return std::nullopt;
  std::uint64_t mag = 0;
  auto [ptr, ec] = std::from_chars(magnitude_.data(), magnitude_.data() + magnitude_.size(), mag);
  if (ec != std::errc{} || ptr != magnitude_.data() + magnitude_.size())
    return std::nullopt;
  constexpr auto max = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());
  if (!negative_)
    return mag <= max ? std::optional<std::int64_t>(static_cast<std::int64_t>(mag)) : std::nullopt;
  if (mag <= max)
    return -static_cast<std::int64_t>(mag);
  if (mag == max + 1)
    return std::numeric_limits<std::int64_t>::min();
  return std::nullopt;
}

double Decimal::to_double() const { return std::stod(to_string()); }

std::string Decimal::to_string() const {
  std::string digits = magnitude_;
  if (scale_ > 0) {
    if (digits.size() <= static_cast<size_t>(scale_))
      digits.insert(0, static_cast<size_t>(scale_) - digits.size() + 1, '0');
    digits.insert(digits.size() - static_cast<size_t>(scale_), 1, '.');
  }
  return negative_ ? "-" + digits : digits;
}

Decimal Decimal::operator-() const {
  Decimal d = *this;
  if (!d.is_zero())
    d.negative_ = !d.negative_;
  return d;
}

Decimal operator+(const Decimal& a, const Decimal& b) {
  auto [ma, mb] = aligned(a.magnitude_, a.scale_, b.magnitude_, b.scale_);
  int scale = std::max(a.scale_, b.scale_);
  if (a.negative_ == b.negative_)
    return Decimal(a.negative_, add_magnitude(ma, mb), scale);
  if (compare_magnitude(ma, mb) >= 0)
    return Decimal(a.negative_, sub_magnitude(ma, mb), scale);
  return Decimal(b.negative_, sub_magnitude(mb, ma), scale);
}

Decimal operator-(const Decimal& a, const Decimal& b) { return a + (-b); }

Decimal Decimal::abs() const {
  Decimal d = *this;
  d.negative_ = false;
  return d;
}

Decimal Decimal::half() const { return Decimal(negative_, mul_small(magnitude_, 5), scale_ + 1); }

Decimal Decimal::floor() const {
  if (scale_ == 0)
    return *this;
  std::string whole = magnitude_.size() > static_cast<size_t>(scale_)
                          ? magnitude_.substr(0, magnitude_.size() - static_cast<size_t>(scale_))
                          : "0";
  // Normalized values with scale > 0 always carry a nonzero fraction.
  if (negative_)
    whole = add_magnitude(whole, "1");
  return Decimal(negative_, whole, 0);
}

Decimal Decimal::ceil() const { return -(-*this).floor(); }

std::strong_ordering operator<=>(const Decimal& a, const Decimal& b) {
  if (a.negative_ != b.negative_)
    return a.negative_ ? std::strong_ordering::less : std::strong_ordering::greater;
  auto [ma, mb] = aligned(a.magnitude_, a.scale_, b.magnitude_, b.scale_);
  int c = compare_magnitude(ma, mb);
  if (a.negative_)
    c = -c;
  return c < 0 ? std::strong_ordering::less
               : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
}

} // namespace metatest
