#pragma once

#include <gmpxx.h>

#include <cctype>
#include <string>
#include <string_view>

#include "omniflow/error.hpp"

namespace omniflow {

/// Exact rational number; always kept in canonical form (den > 0, gcd 1).
using Rational = mpq_class;

inline Rational make_rational(long num, long den = 1) {
    if (den == 0) throw InvalidParameter("rational with zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    Rational r(num, static_cast<unsigned long>(den));
    r.canonicalize();
    return r;
}

/// "num/den" with no decimal point; integers are written as "n/1".
inline std::string to_string(const Rational& r) {
    return r.get_num().get_str() + "/" + r.get_den().get_str();
}

inline double to_double(const Rational& r) { return r.get_d(); }

/// Parses "a/b", "a", or an exact decimal such as "-0.35" or "2.5e-3".
inline Rational parse_rational(std::string_view text) {
    std::string s(text);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t start = 0;
    while (start < s.size() && std::isspace(static_cast<unsigned char>(s[start]))) ++start;
    s = s.substr(start);
    if (s.empty()) throw InvalidParameter("empty rational literal");

    if (auto slash = s.find('/'); slash != std::string::npos) {
        Rational r;
        try {
            mpz_class num(s.substr(0, slash), 10);
            mpz_class den(s.substr(slash + 1), 10);
            if (den == 0) throw InvalidParameter("rational with zero denominator: " + s);
            r = Rational(num, den);
        } catch (const std::invalid_argument&) {
            throw InvalidParameter("malformed rational literal: " + s);
        }
        r.canonicalize();
        return r;
    }

    // Decimal with optional exponent, converted exactly.
    std::size_t pos = 0;
    bool negative = false;
    if (s[pos] == '+' || s[pos] == '-') negative = s[pos++] == '-';
    std::string digits;
    long scale = 0;
    bool seen_point = false;
    bool any_digit = false;
    for (; pos < s.size(); ++pos) {
        char c = s[pos];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            digits += c;
            any_digit = true;
            if (seen_point) ++scale;
        } else if (c == '.' && !seen_point) {
            seen_point = true;
        } else {
            break;
        }
    }
    if (!any_digit) throw InvalidParameter("malformed rational literal: " + s);
    long exponent = 0;
    if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
        try {
            std::size_t used = 0;
            exponent = std::stol(s.substr(pos + 1), &used);
            pos += 1 + used;
        } catch (const std::exception&) {
            throw InvalidParameter("malformed exponent in: " + s);
        }
    }
    if (pos != s.size()) throw InvalidParameter("malformed rational literal: " + s);

    mpz_class num(digits, 10);
    mpz_class ten_pow;
    long net = exponent - scale;
    mpz_ui_pow_ui(ten_pow.get_mpz_t(), 10, static_cast<unsigned long>(net < 0 ? -net : net));
    Rational r = net < 0 ? Rational(num, ten_pow) : Rational(num * ten_pow, 1);
    r.canonicalize();
    return negative ? Rational(-r) : r;
}

} // namespace omniflow
