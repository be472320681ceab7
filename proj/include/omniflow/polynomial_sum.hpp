#pragma once

// Polynomials that are sums of homogeneous components, plus a small parser
// for expressions such as "q1q2 + 0.3*q1^3 - 1/2 q2^4".

#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "omniflow/polynomial.hpp"

namespace omniflow {

class Polynomial {
public:
    Polynomial() = default;
    explicit Polynomial(int dim) : dim_(dim) {
        if (dim < 1) throw InvalidParameter("polynomial dimension must be positive");
    }
    Polynomial(const HomogeneousPolynomial& p) : dim_(p.dim()) { add(p); }

    int dim() const noexcept { return dim_; }

    void add(const HomogeneousPolynomial& p) {
        if (p.dim() != dim_) throw DimensionMismatch("polynomial parts of different dimension");
        if (p.is_zero()) return;
        auto [it, inserted] = parts_.try_emplace(p.degree(), p);
        if (!inserted) {
            it->second += p;
            if (it->second.is_zero()) parts_.erase(it);
        }
    }

    /// Homogeneous components keyed by degree; zero components are absent.
    const std::map<int, HomogeneousPolynomial>& parts() const noexcept { return parts_; }
    bool is_zero() const noexcept { return parts_.empty(); }
    int max_degree() const noexcept { return parts_.empty() ? 0 : parts_.rbegin()->first; }

    double eval(std::span<const double> q) const {
        double s = 0.0;
        for (const auto& [deg, p] : parts_) s += p.eval<double>(q);
        return s;
    }

    friend bool operator==(const Polynomial& a, const Polynomial& b) {
        return a.dim_ == b.dim_ && a.parts_ == b.parts_;
    }

private:
    int dim_ = 1;
    std::map<int, HomogeneousPolynomial> parts_;
};

/// Value, gradient and Hessian of a Polynomial at floating-point points.
class PolynomialSumEvaluator {
public:
    PolynomialSumEvaluator() = default;
    explicit PolynomialSumEvaluator(const Polynomial& p) : dim_(p.dim()) {
        for (const auto& [deg, part] : p.parts()) parts_.emplace_back(part);
    }

    int dim() const noexcept { return dim_; }

    double value(std::span<const double> q) const {
        double s = 0.0;
        for (const auto& e : parts_) s += e.value(q);
        return s;
    }
    std::vector<double> gradient(std::span<const double> q) const {
        std::vector<double> g(dim_, 0.0);
        for (const auto& e : parts_) {
            const auto gi = e.gradient(q);
            for (int i = 0; i < dim_; ++i) g[i] += gi[i];
        }
        return g;
    }
    SymmetricMatrix hessian(std::span<const double> q) const {
        SymmetricMatrix h(dim_);
        for (const auto& e : parts_) h += e.hessian(q);
        return h;
    }

private:
    int dim_ = 1;
    std::vector<PolynomialEvaluator> parts_;
};

inline nlohmann::json to_json(const Polynomial& p) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [deg, part] : p.parts()) arr.push_back(to_json(part));
    return arr;
}

/// Accepts a single homogeneous-polynomial object or an array of them.
inline Polynomial polynomial_sum_from_json(const nlohmann::json& j) {
    if (j.is_object()) return Polynomial(polynomial_from_json(j));
    if (!j.is_array() || j.empty()) throw InvalidParameter("polynomial JSON must be an object or a non-empty array");
    Polynomial out(polynomial_from_json(j.front()).dim());
    for (const auto& part : j) out.add(polynomial_from_json(part));
    return out;
}

/// Parses a polynomial expression in variables q1..qd. Terms are separated by
/// '+' or '-'; each term is an optional exact coefficient (integer, decimal or
/// a/b) followed by factors "q<i>" or "q<i>^<e>", optionally joined by '*'.
inline Polynomial parse_polynomial(std::string_view text, int dim) {
    Polynomial out(dim);
    std::string s;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    if (s.empty()) throw InvalidParameter("empty polynomial expression");

    std::size_t pos = 0;
    auto fail = [&](const std::string& why) -> void {
        throw InvalidParameter("cannot parse polynomial '" + std::string(text) + "': " + why);
    };
    auto read_int = [&]() {
        std::size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (start == pos) fail("expected an integer at position " + std::to_string(start));
        return std::stoi(s.substr(start, pos - start));
    };

    while (pos < s.size()) {
        Rational sign = 1;
        if (s[pos] == '+' || s[pos] == '-') {
            if (s[pos] == '-') sign = -1;
            ++pos;
        } else if (pos != 0) {
            fail("expected '+' or '-' at position " + std::to_string(pos));
        }

        if (pos == s.size()) fail("dangling sign");
        Rational coef = 1;
        bool had_coef = false;
        if (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.')) {
            had_coef = true;
            std::size_t start = pos;
            while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.' || s[pos] == '/'))
                ++pos;
            coef = parse_rational(s.substr(start, pos - start));
            if (pos < s.size() && s[pos] == '*') ++pos;
        }

        MultiIndex e(dim, 0);
        bool any_factor = false;
        while (pos < s.size() && s[pos] == 'q') {
            ++pos;
            const int var = read_int();
            if (var < 1 || var > dim) fail("variable q" + std::to_string(var) + " outside dimension");
            int power = 1;
            if (pos < s.size() && s[pos] == '^') {
                ++pos;
                power = read_int();
            }
            e[var - 1] += power;
            any_factor = true;
            if (pos < s.size() && s[pos] == '*') ++pos;
        }
        if (!any_factor && !had_coef) fail("unexpected character '" + std::string(1, s[pos]) + "'");
        out.add(HomogeneousPolynomial::monomial(e, sign * coef));
    }
    return out;
}

} // namespace omniflow
