#ifndef SENSPROBE_EXACT_HPP
#define SENSPROBE_EXACT_HPP

// Exact rational arithmetic and exact decimal rendering of binary floats.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <concepts>
#include <string>
#include <string_view>

#include "sensprobe/error.hpp"

namespace sensprobe {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

/// Exact value of a finite binary floating-point number.
template <std::floating_point T>
Rational to_rational(T v) {
  if (!std::isfinite(v)) throw DomainError("to_rational: non-finite value");
  if (v == T(0)) return Rational(0);
  int exp = 0;
  // v = frac * 2^exp with 0.5 <= |frac| < 1; scale the fraction to an integer.
  T frac = std::frexp(v, &exp);
  constexpr int digits = std::numeric_limits<T>::digits;
  auto mant = static_cast<long long>(std::ldexp(frac, digits));
  exp -= digits;
  Rational r(mant);
  if (exp > 0) {
    r *= Rational(BigInt(1) << exp);
  } else if (exp < 0) {
    r /= Rational(BigInt(1) << -exp);
  }
  return r;
}

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

/// Exact base-10 expansion of |v| for a value whose denominator is a power
/// of two. Always contains a decimal point ("1.0", "0.5").
inline std::string exact_decimal_abs(const Rational& v) {
  BigInt num = boost::multiprecision::abs(numerator(v));
  BigInt den = denominator(v);
  unsigned k = 0;
  while (den > 1) {
    if ((den & 1) != 0) throw DomainError("exact_decimal: denominator is not a power of two");
    den >>= 1;
    ++k;
  }
  if (k == 0) return num.str() + ".0";
  BigInt scaled = num * boost::multiprecision::pow(BigInt(5), k);
  std::string digits = scaled.str();
  if (digits.size() <= k) digits.insert(0, k - digits.size() + 1, '0');
  digits.insert(digits.size() - k, 1, '.');
  return digits;
}

/// Exact decimal expansion of a finite float/double, signed, plain notation.
template <std::floating_point T>
std::string exact_decimal(T v) {
  Rational r = to_rational(v);
  std::string body = exact_decimal_abs(r);
  return r < 0 ? "-" + body : body;
}

/// SMT-LIB real literal carrying the exact binary value; negatives use the
/// unary minus form "(- 1.0)".
template <std::floating_point T>
std::string emit_exact_literal(T v) {
  if (!std::isfinite(v)) throw DomainError("emit_exact_literal: non-finite value");
  Rational r = to_rational(v);
  std::string body = exact_decimal_abs(r);
  return r < 0 ? "(- " + body + ")" : body;
}

/// SMT-LIB term for an arbitrary rational: a decimal when the denominator is
/// a power of two, a (/ p q) division otherwise.
inline std::string emit_rational(const Rational& r) {
  BigInt num = boost::multiprecision::abs(numerator(r));
  const BigInt& den = denominator(r);
  const bool binary = (den & (den - 1)) == 0;
  std::string body = binary ? exact_decimal_abs(r) : "(/ " + num.str() + ".0 " + den.str() + ".0)";
  return r < 0 ? "(- " + body + ")" : body;
}

/// Parses an SMT-LIB numeral or decimal ("12", "1.5") exactly.
inline Rational parse_decimal(std::string_view text) {
  if (text.empty()) throw UnsupportedValue("empty numeral");
  BigInt num = 0;
  BigInt den = 1;
  bool seen_dot = false;
  bool any_digit = false;
  for (char c : text) {
    if (c == '.') {
      if (seen_dot) throw UnsupportedValue("bad decimal: " + std::string(text));
      seen_dot = true;
    } else if (c >= '0' && c <= '9') {
      num = num * 10 + (c - '0');
      if (seen_dot) den *= 10;
      any_digit = true;
    } else {
      throw UnsupportedValue("bad decimal: " + std::string(text));
    }
  }
  if (!any_digit) throw UnsupportedValue("bad decimal: " + std::string(text));
  return Rational(num, den);
}

}  // namespace sensprobe

#endif  // SENSPROBE_EXACT_HPP
