#pragma once

// Constructors for the homogeneous polynomial building blocks of
// omni-potential flows, in two dimensions (even and odd families solving the
// cot 2theta equation) and in d >= 3 (permutation-symmetric blocks whose
// Hessians commute with that of p4).

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "omniflow/polynomial.hpp"

namespace omniflow {

namespace detail {

inline Rational factorial(int n) {
    Rational r = 1;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

/// Coefficient of q1^{2i} q2^{2(k-i)} in the even 2-D family, and its partial
/// derivatives in a and b. Each product is a product of factors linear in a
/// (resp. b), so the derivative follows from the product rule.
struct EvenCoefficient {
    Rational value, d_a, d_b;
};

inline std::pair<Rational, Rational> linear_product(int count, int k, const Rational& param) {
    // prod_{j=0}^{count-1} (2k - 1 + 2 j (param - 1)) and its derivative in param
    std::vector<Rational> f;
    for (int j = 0; j < count; ++j) f.push_back(Rational(2 * k - 1) + Rational(2 * j) * (param - 1));
    Rational value = 1;
    for (const auto& x : f) value *= x;
    Rational deriv = 0;
    for (int l = 0; l < count; ++l) {
        Rational term = 2 * l;
        for (int j = 0; j < count; ++j)
            if (j != l) term *= f[j];
        deriv += term;
    }
    return {value, deriv};
}

inline EvenCoefficient even_coefficient(int k, int i, const Rational& a, const Rational& b) {
    const auto [pa, dpa] = linear_product(i, k, a);
    const auto [pb, dpb] = linear_product(k - i, k, b);
    const Rational factor = factorial(k) / (factorial(i) * factorial(k - i) * (2 * k - 1));
    return {pa * pb * factor, dpa * pb * factor, pa * dpb * factor};
}

inline MultiIndex exps2(int i, int j) { return MultiIndex{i, j}; }

} // namespace detail

struct EvenFamily {
    HomogeneousPolynomial poly;
    /// True when every coefficient vanishes (isolated parameter values).
    bool degenerate = false;
    /// d/da and d/db of the family at the degenerate parameters; both solve the
    /// same cot 2theta equation.
    std::optional<std::pair<HomogeneousPolynomial, HomogeneousPolynomial>> derivative_solutions;
};

/// Degree-2k even polynomial solving (d11 - d22) p = g d12 p for
/// g = (a q1^2 - b q2^2) / (q1 q2).
inline EvenFamily family_p2_even(int k, const Rational& a, const Rational& b) {
    if (k < 2) throw InvalidParameter("even family needs k >= 2");
    EvenFamily out{HomogeneousPolynomial(2, 2 * k), false, std::nullopt};
    HomogeneousPolynomial da(2, 2 * k), db(2, 2 * k);
    for (int i = 0; i <= k; ++i) {
        const auto c = detail::even_coefficient(k, i, a, b);
        const auto e = detail::exps2(2 * i, 2 * (k - i));
        out.poly.add_term(e, c.value);
        da.add_term(e, c.d_a);
        db.add_term(e, c.d_b);
    }
    if (out.poly.is_zero()) {
        out.degenerate = true;
        out.derivative_solutions = std::make_pair(std::move(da), std::move(db));
    }
    return out;
}

/// The isolated (a, b) = (1 - (2k-1)/(2 jh), 1 - (2k-1)/(2 j)) with j, jh >= 1,
/// j + jh <= k - 1, at which the even family vanishes identically.
inline std::vector<std::pair<Rational, Rational>> even_family_degenerate_parameters(int k) {
    std::vector<std::pair<Rational, Rational>> out;
    for (int jh = 1; jh <= k - 2; ++jh)
        for (int j = 1; j + jh <= k - 1; ++j)
            out.emplace_back(1 - make_rational(2 * k - 1, 2 * jh), 1 - make_rational(2 * k - 1, 2 * j));
    return out;
}

struct OddFamily {
    HomogeneousPolynomial poly;
    Rational a, b; // the only invariant parameters admitting this solution: -1/(k-1)
};

namespace detail {

/// sum_{i<k} (prod_{j<i} (2(k-j)+1)(k-1-j) / ((j+1)(2j-1))) x^{2i} y^{2(k-i)+1}
/// as a table of (power of x, coefficient).
inline std::vector<std::pair<int, Rational>> odd_kernel(int k) {
    std::vector<std::pair<int, Rational>> out;
    Rational c = 1;
    for (int i = 0; i < k; ++i) {
        if (i > 0) {
            const int j = i - 1;
            c *= make_rational((2 * (k - j) + 1) * (k - 1 - j), (j + 1) * (2 * j - 1));
        }
        out.emplace_back(2 * i, c);
    }
    return out;
}

} // namespace detail

/// Degree-(2k+1) solution for a = b = -1/(k-1); c1 multiplies the component
/// containing q1^{2k+1}, c2 the one containing q2^{2k+1}.
inline OddFamily family_p2_odd(int k, const Rational& c1, const Rational& c2) {
    if (k < 2) throw InvalidParameter("odd family needs k >= 2");
    OddFamily out{HomogeneousPolynomial(2, 2 * k + 1), make_rational(-1, k - 1), make_rational(-1, k - 1)};
    const int n = 2 * k + 1;
    for (const auto& [px, coef] : detail::odd_kernel(k)) {
        // kernel(q2, q1): q2^{px} q1^{n - px}; kernel(q1, q2): q1^{px} q2^{n - px}
        out.poly.add_term(detail::exps2(n - px, px), c1 * coef);
        out.poly.add_term(detail::exps2(px, n - px), c2 * coef);
    }
    return out;
}

/// Numerator and denominator of g = (a q1^2 - b q2^2) / (q1 q2).
inline std::pair<HomogeneousPolynomial, HomogeneousPolynomial> gexa_ratio(const Rational& a, const Rational& b) {
    HomogeneousPolynomial num(2, 2);
    num.add_term({2, 0}, a);
    num.add_term({0, 2}, -b);
    return {num, HomogeneousPolynomial::monomial({1, 1}, 1)};
}

/// den * (p_11 - p_22) - num * p_12: the cot 2theta equation cleared of its
/// denominator, for g = num / den.
inline HomogeneousPolynomial gen2d_cleared_residual(const HomogeneousPolynomial& p, const HomogeneousPolynomial& num,
                                                    const HomogeneousPolynomial& den) {
    if (p.dim() != 2 || num.dim() != 2 || den.dim() != 2)
        throw DimensionMismatch("the cot 2theta equation is two-dimensional");
    const auto h = hessian(p);
    return den * (h[0][0] - h[1][1]) - num * h[0][1];
}

// ---------------------------------------------------------------------------
// Symmetric blocks in d >= 3
// ---------------------------------------------------------------------------

/// sum_i q_i^4 + c sum_{i<j} q_i^2 q_j^2
inline HomogeneousPolynomial family_pd4(int d, const Rational& c) {
    if (d < 2) throw InvalidParameter("p4 block needs d >= 2");
    HomogeneousPolynomial p(d, 4);
    for (int i = 0; i < d; ++i) {
        MultiIndex e(d, 0);
        e[i] = 4;
        p.add_term(e, 1);
        for (int j = i + 1; j < d; ++j) {
            MultiIndex f(d, 0);
            f[i] = 2;
            f[j] = 2;
            p.add_term(f, c);
        }
    }
    return p;
}

struct Pd6Parameters {
    Rational a, b;
};

/// The (a~, b~) making the Hessian of p6 commute with that of p4.
inline Pd6Parameters pd6_parameters(const Rational& c) {
    if (c == 12 || c == -3) throw InvalidParameter("p6 block undefined for c~ = 12 or c~ = -3");
    Pd6Parameters out{15 * c / (12 - c), 75 * c * c / ((12 - c) * (3 + c))};
    out.a.canonicalize();
    out.b.canonicalize();
    return out;
}

/// sum_i q_i^6 + a~ sum_{i != j} q_i^4 q_j^2 + b~ sum_{i<j<k} q_i^2 q_j^2 q_k^2
inline HomogeneousPolynomial family_pd6(int d, const Rational& c) {
    if (d < 3) throw InvalidParameter("p6 block needs d >= 3");
    const auto [a, b] = pd6_parameters(c);
    HomogeneousPolynomial p(d, 6);
    for (int i = 0; i < d; ++i) {
        MultiIndex e(d, 0);
        e[i] = 6;
        p.add_term(e, 1);
        for (int j = 0; j < d; ++j) {
            if (j == i) continue;
            MultiIndex f(d, 0);
            f[i] = 4;
            f[j] = 2;
            p.add_term(f, a);
        }
        for (int j = i + 1; j < d; ++j)
            for (int k = j + 1; k < d; ++k) {
                MultiIndex f(d, 0);
                f[i] = f[j] = f[k] = 2;
                p.add_term(f, b);
            }
    }
    return p;
}

/// chi_m = (c (2n + 2 - 3m) + 6 (m - 1)) / m, m = 1..n (index 0 unused).
inline std::vector<Rational> chi_sequence(int n, const Rational& c) {
    std::vector<Rational> chi(n + 1, Rational(0));
    for (int m = 1; m <= n; ++m) {
        chi[m] = (c * (2 * n + 2 - 3 * m) + 6 * (m - 1)) / m;
        chi[m].canonicalize();
    }
    return chi;
}

/// Symmetric degree-2n block in d = 3 with coefficients
/// a_{ijk} = (prod^i chi prod^j chi prod^k chi) / prod^n chi.
inline HomogeneousPolynomial family_p3_2n(int n, const Rational& c) {
    if (n < 2) throw InvalidParameter("p3_2n block needs n >= 2");
    const auto chi = chi_sequence(n, c);
    for (int m = 1; m <= n; ++m)
        if (chi[m] == 0) throw InvalidParameter("chi_" + std::to_string(m) + " vanishes for c~ = " + to_string(c));
    std::vector<Rational> partial(n + 1, Rational(1));
    for (int m = 1; m <= n; ++m) partial[m] = partial[m - 1] * chi[m];
    HomogeneousPolynomial p(3, 2 * n);
    for (int i = 0; i <= n; ++i)
        for (int j = 0; i + j <= n; ++j) {
            const int k = n - i - j;
            p.add_term({2 * i, 2 * j, 2 * k}, partial[i] * partial[j] * partial[k] / partial[n]);
        }
    return p;
}

/// Convexity windows as stated for the families (coefficient-level statements).
inline std::string stated_convexity_window(const std::string& family, int k_or_n = 0) {
    if (family == "pd46") return "convex for 0 <= c~ < 12";
    if (family == "p3-2n") {
        if (k_or_n <= 2) return "convex for c~ >= 0 (no upper bound stated)";
        return "convex for 0 <= c~ < " + std::to_string(6 * (k_or_n - 1)) + "/" + std::to_string(k_or_n - 2);
    }
    if (family == "p2-even") return "convex if min(a,b) >= -1/" + std::to_string(2 * k_or_n - 2);
    if (family == "p2-odd") return "not globally convex (odd degree); convex only on bounded boxes for small factors";
    return "convex while the Hessian stays positive definite";
}

} // namespace omniflow
