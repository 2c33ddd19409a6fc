#pragma once

// Scalar traits shared by the float (double) and exact (rational) modes.

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <charconv>
#include <string>
#include <string_view>

#include "crw/errors.hpp"

namespace crw {

using Rational = boost::multiprecision::cpp_rational;

template <class Real>
struct ScalarTraits;

template <>
struct ScalarTraits<double> {
    static constexpr bool exact = false;
    static double from_double(double v) { return v; }
    static double to_double(double v) { return v; }
};

template <>
struct ScalarTraits<Rational> {
    static constexpr bool exact = true;
    /// The decimal with the shortest round-trip spelling, so 0.3 maps to 3/10.
    static Rational from_double(double v);
    static double to_double(const Rational& v) { return v.convert_to<double>(); }
};

template <class Real>
Real from_double(double v) {
    return ScalarTraits<Real>::from_double(v);
}

template <class Real>
double to_double(const Real& v) {
    return ScalarTraits<Real>::to_double(v);
}

/// Parses a decimal literal such as "0.3" or "-1.25e-2" into the exact
/// rational it denotes (3/10, not the nearest double).
inline Rational parse_decimal_rational(std::string_view text) {
    std::string s(text);
    if (s.empty()) throw ParameterError("empty decimal literal");
    int exp10 = 0;
    if (auto e = s.find_first_of("eE"); e != std::string::npos) {
        const std::string tail = s.substr(e + 1);
        auto [ptr, ec] = std::from_chars(tail.data() + (tail[0] == '+' ? 1 : 0), tail.data() + tail.size(), exp10);
        if (ec != std::errc{} || ptr != tail.data() + tail.size())
            throw ParameterError("bad exponent in decimal literal '" + s + "'");
        s.resize(e);
    }
    bool negative = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
        negative = s[0] == '-';
        s.erase(0, 1);
    }
    std::string digits;
    bool seen_point = false;
    for (char c : s) {
        if (c == '.') {
            if (seen_point) throw ParameterError("bad decimal literal '" + std::string(text) + "'");
            seen_point = true;
        } else if (c >= '0' && c <= '9') {
            digits.push_back(c);
            if (seen_point) --exp10;
        } else {
            throw ParameterError("bad decimal literal '" + std::string(text) + "'");
        }
    }
    if (digits.empty()) throw ParameterError("bad decimal literal '" + std::string(text) + "'");
    // cpp_int reads a leading 0 as an octal prefix.
    digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 1));
    boost::multiprecision::cpp_int num(digits);
    boost::multiprecision::cpp_int ten_pow = 1;
    for (int i = 0; i < (exp10 < 0 ? -exp10 : exp10); ++i) ten_pow *= 10;
    Rational r = exp10 >= 0 ? Rational(num * ten_pow) : Rational(num, ten_pow);
    return negative ? Rational(-r) : r;
}

inline Rational ScalarTraits<Rational>::from_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw ParameterError("cannot convert value to rational");
    return parse_decimal_rational(std::string_view(buf, static_cast<std::size_t>(ptr - buf)));
}

}  // namespace crw
