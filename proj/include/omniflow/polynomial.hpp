#pragma once

// Sparse homogeneous polynomials with exact rational coefficients.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "omniflow/error.hpp"
#include "omniflow/rational.hpp"
#include "omniflow/symmat.hpp"

namespace omniflow {

/// Exponent vector of a monomial; its length is the ambient dimension.
using MultiIndex = std::vector<int>;

inline int total_degree(const MultiIndex& e) { return std::accumulate(e.begin(), e.end(), 0); }

class HomogeneousPolynomial {
public:
    using Terms = std::map<MultiIndex, Rational>;

    HomogeneousPolynomial() = default;
    HomogeneousPolynomial(int dim, int degree) : dim_(dim), degree_(degree) {
        if (dim < 1) throw InvalidParameter("polynomial dimension must be positive");
        if (degree < 0) throw InvalidParameter("polynomial degree must be non-negative");
    }

    static HomogeneousPolynomial monomial(MultiIndex exps, const Rational& coef) {
        HomogeneousPolynomial p(static_cast<int>(exps.size()), total_degree(exps));
        p.add_term(exps, coef);
        return p;
    }

    /// |q|^2 / 2 in dimension d.
    static HomogeneousPolynomial half_square_norm(int dim) {
        HomogeneousPolynomial p(dim, 2);
        for (int i = 0; i < dim; ++i) {
            MultiIndex e(dim, 0);
            e[i] = 2;
            p.add_term(e, make_rational(1, 2));
        }
        return p;
    }

    int dim() const noexcept { return dim_; }
    int degree() const noexcept { return degree_; }
    const Terms& terms() const noexcept { return terms_; }
    bool is_zero() const noexcept { return terms_.empty(); }

    Rational coefficient(const MultiIndex& e) const {
        auto it = terms_.find(e);
        return it == terms_.end() ? Rational(0) : it->second;
    }

    /// Adds `coef` to the coefficient of the monomial `e`; zero results are erased.
    void add_term(const MultiIndex& e, const Rational& coef) {
        if (static_cast<int>(e.size()) != dim_) throw DimensionMismatch("multi-index length differs from dimension");
        if (std::any_of(e.begin(), e.end(), [](int x) { return x < 0; }))
            throw InvalidParameter("negative exponent in multi-index");
        if (total_degree(e) != degree_) throw InvalidParameter("monomial degree differs from polynomial degree");
        if (coef == 0) return;
        auto [it, inserted] = terms_.try_emplace(e, coef);
        if (!inserted) {
            it->second += coef;
            if (it->second == 0) terms_.erase(it);
        }
    }

    HomogeneousPolynomial derivative(int axis) const {
        if (axis < 0 || axis >= dim_) throw InvalidParameter("derivative axis out of range");
        HomogeneousPolynomial out(dim_, std::max(degree_ - 1, 0));
        if (degree_ == 0) return out;
        for (const auto& [e, c] : terms_) {
            if (e[axis] == 0) continue;
            MultiIndex f = e;
            f[axis] -= 1;
            out.add_term(f, c * e[axis]);
        }
        return out;
    }

    template <class T>
    T eval(std::span<const T> q) const {
        check_point(q.size());
        T sum = T(0);
        for (const auto& [e, c] : terms_) {
            T term = coefficient_as<T>(c);
            for (int i = 0; i < dim_; ++i)
                for (int k = 0; k < e[i]; ++k) term *= q[i];
            sum += term;
        }
        return sum;
    }
    double operator()(std::span<const double> q) const { return eval<double>(q); }

    HomogeneousPolynomial& operator+=(const HomogeneousPolynomial& o) {
        check_compatible(o);
        for (const auto& [e, c] : o.terms_) add_term(e, c);
        return *this;
    }
    HomogeneousPolynomial& operator-=(const HomogeneousPolynomial& o) {
        check_compatible(o);
        for (const auto& [e, c] : o.terms_) add_term(e, -c);
        return *this;
    }
    HomogeneousPolynomial& operator*=(const Rational& s) {
        if (s == 0) {
            terms_.clear();
            return *this;
        }
        for (auto& [e, c] : terms_) c *= s;
        return *this;
    }

    friend HomogeneousPolynomial operator+(HomogeneousPolynomial a, const HomogeneousPolynomial& b) { return a += b; }
    friend HomogeneousPolynomial operator-(HomogeneousPolynomial a, const HomogeneousPolynomial& b) { return a -= b; }
    friend HomogeneousPolynomial operator*(const Rational& s, HomogeneousPolynomial a) { return a *= s; }
    friend HomogeneousPolynomial operator*(const HomogeneousPolynomial& a, const HomogeneousPolynomial& b) {
        if (a.dim_ != b.dim_) throw DimensionMismatch("product of polynomials of different dimension");
        HomogeneousPolynomial out(a.dim_, a.degree_ + b.degree_);
        for (const auto& [ea, ca] : a.terms_)
            for (const auto& [eb, cb] : b.terms_) {
                MultiIndex e(a.dim_);
                for (int i = 0; i < a.dim_; ++i) e[i] = ea[i] + eb[i];
                out.add_term(e, ca * cb);
            }
        return out;
    }
    friend bool operator==(const HomogeneousPolynomial& a, const HomogeneousPolynomial& b) {
        return a.dim_ == b.dim_ && a.terms_ == b.terms_ && (a.degree_ == b.degree_ || a.is_zero());
    }

    /// Sets every variable with index >= `keep` to zero and drops those axes.
    HomogeneousPolynomial restrict_to_leading(int keep) const {
        if (keep < 1 || keep > dim_) throw InvalidParameter("restriction dimension out of range");
        HomogeneousPolynomial out(keep, degree_);
        for (const auto& [e, c] : terms_) {
            if (std::any_of(e.begin() + keep, e.end(), [](int x) { return x != 0; })) continue;
            out.add_term(MultiIndex(e.begin(), e.begin() + keep), c);
        }
        return out;
    }

    /// Substitutes q -> P q for the axis permutation P (new axis i is old axis perm[i]).
    HomogeneousPolynomial permuted(const std::vector<int>& perm) const {
        if (static_cast<int>(perm.size()) != dim_) throw DimensionMismatch("permutation length differs from dimension");
        HomogeneousPolynomial out(dim_, degree_);
        for (const auto& [e, c] : terms_) {
            MultiIndex f(dim_);
            for (int i = 0; i < dim_; ++i) f[i] = e[perm[i]];
            out.add_term(f, c);
        }
        return out;
    }

    bool all_coefficients_nonnegative() const {
        return std::all_of(terms_.begin(), terms_.end(), [](const auto& kv) { return kv.second >= 0; });
    }

private:
    template <class T>
    static T coefficient_as(const Rational& c) {
        if constexpr (std::is_same_v<T, Rational>) return c;
        else return static_cast<T>(c.get_d());
    }
    void check_point(std::size_t n) const {
        if (static_cast<int>(n) != dim_) throw DimensionMismatch("point dimension differs from polynomial dimension");
    }
    // A zero polynomial adopts the degree of a nonzero summand.
    void check_compatible(const HomogeneousPolynomial& o) {
        if (o.dim_ != dim_) throw DimensionMismatch("sum of polynomials of different dimension");
        if (o.degree_ != degree_ && !o.is_zero() && !is_zero())
            throw InvalidParameter("sum of homogeneous polynomials of different degree");
        if (is_zero() && !o.is_zero()) degree_ = o.degree_;
    }

    int dim_ = 1;
    int degree_ = 0;
    Terms terms_;
};

using PolynomialMatrix = std::vector<std::vector<HomogeneousPolynomial>>;

inline PolynomialMatrix hessian(const HomogeneousPolynomial& p) {
    const int d = p.dim();
    PolynomialMatrix h(d, std::vector<HomogeneousPolynomial>(d));
    for (int i = 0; i < d; ++i) {
        const auto di = p.derivative(i);
        for (int j = i; j < d; ++j) {
            h[i][j] = di.derivative(j);
            h[j][i] = h[i][j];
        }
    }
    return h;
}

inline std::vector<HomogeneousPolynomial> gradient(const HomogeneousPolynomial& p) {
    std::vector<HomogeneousPolynomial> g;
    for (int i = 0; i < p.dim(); ++i) g.push_back(p.derivative(i));
    return g;
}

/// Symbolic H(p) H(r) - H(r) H(p); entries have degree deg p + deg r - 4.
inline PolynomialMatrix commutator_poly(const HomogeneousPolynomial& p, const HomogeneousPolynomial& r) {
    if (p.dim() != r.dim()) throw DimensionMismatch("commutator of polynomials of different dimension");
    const int d = p.dim();
    const auto hp = hessian(p);
    const auto hr = hessian(r);
    const int deg = std::max(p.degree() - 2, 0) + std::max(r.degree() - 2, 0);
    PolynomialMatrix c(d, std::vector<HomogeneousPolynomial>(d, HomogeneousPolynomial(d, deg)));
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            HomogeneousPolynomial sum(d, deg);
            for (int k = 0; k < d; ++k) {
                sum += hp[i][k] * hr[k][j];
                sum -= hr[i][k] * hp[k][j];
            }
            c[j][i] = Rational(-1) * sum;
            c[i][j] = std::move(sum);
        }
    return c;
}

inline bool is_zero(const PolynomialMatrix& m) {
    return std::all_of(m.begin(), m.end(), [](const auto& row) {
        return std::all_of(row.begin(), row.end(), [](const auto& p) { return p.is_zero(); });
    });
}

// ---------------------------------------------------------------------------
// Fast floating-point evaluation
// ---------------------------------------------------------------------------

/// Polynomial compiled to double coefficients for repeated evaluation.
class CompiledPolynomial {
public:
    CompiledPolynomial() = default;
    explicit CompiledPolynomial(const HomogeneousPolynomial& p) : dim_(p.dim()), max_exp_(0) {
        for (const auto& [e, c] : p.terms()) {
            exps_.insert(exps_.end(), e.begin(), e.end());
            coefs_.push_back(c.get_d());
            max_exp_ = std::max(max_exp_, *std::max_element(e.begin(), e.end()));
        }
    }

    int dim() const noexcept { return dim_; }

    /// `powers` holds q_i^k at index i * (max_exp + 1) + k.
    double eval_with_powers(const std::vector<double>& powers, int stride) const {
        double sum = 0.0;
        const std::size_t n = coefs_.size();
        for (std::size_t t = 0; t < n; ++t) {
            double term = coefs_[t];
            const int* e = &exps_[t * dim_];
            for (int i = 0; i < dim_; ++i) term *= powers[i * stride + e[i]];
            sum += term;
        }
        return sum;
    }

    int max_exponent() const noexcept { return max_exp_; }

private:
    int dim_ = 0;
    int max_exp_ = 0;
    std::vector<int> exps_;
    std::vector<double> coefs_;
};

/// Value, gradient and Hessian of a polynomial at floating-point points.
class PolynomialEvaluator {
public:
    PolynomialEvaluator() = default;
    explicit PolynomialEvaluator(const HomogeneousPolynomial& p) : dim_(p.dim()), value_(p) {
        const auto h = omniflow::hessian(p);
        for (int i = 0; i < dim_; ++i) {
            grad_.emplace_back(p.derivative(i));
            for (int j = i; j < dim_; ++j) hess_.emplace_back(h[i][j]);
        }
        stride_ = std::max(p.degree(), 0) + 1;
    }

    int dim() const noexcept { return dim_; }

    double value(std::span<const double> q) const { return value_.eval_with_powers(powers(q), stride_); }

    std::vector<double> gradient(std::span<const double> q) const {
        const auto pw = powers(q);
        std::vector<double> g(dim_);
        for (int i = 0; i < dim_; ++i) g[i] = grad_[i].eval_with_powers(pw, stride_);
        return g;
    }

    SymmetricMatrix hessian(std::span<const double> q) const {
        const auto pw = powers(q);
        SymmetricMatrix h(dim_);
        std::size_t k = 0;
        for (int i = 0; i < dim_; ++i)
            for (int j = i; j < dim_; ++j) h.set(i, j, hess_[k++].eval_with_powers(pw, stride_));
        return h;
    }

private:
    std::vector<double> powers(std::span<const double> q) const {
        if (static_cast<int>(q.size()) != dim_) throw DimensionMismatch("point dimension differs from polynomial dimension");
        std::vector<double> pw(static_cast<std::size_t>(dim_ * stride_));
        for (int i = 0; i < dim_; ++i) {
            double v = 1.0;
            for (int k = 0; k < stride_; ++k) {
                pw[i * stride_ + k] = v;
                v *= q[i];
            }
        }
        return pw;
    }

    int dim_ = 0;
    int stride_ = 1;
    CompiledPolynomial value_;
    std::vector<CompiledPolynomial> grad_;
    std::vector<CompiledPolynomial> hess_;
};

inline double eval(const HomogeneousPolynomial& p, std::span<const double> q) { return p.eval<double>(q); }
inline Rational eval(const HomogeneousPolynomial& p, std::span<const Rational> q) { return p.eval<Rational>(q); }

inline std::vector<double> gradient_at(const HomogeneousPolynomial& p, std::span<const double> q) {
    return PolynomialEvaluator(p).gradient(q);
}
inline SymmetricMatrix hessian_at(const HomogeneousPolynomial& p, std::span<const double> q) {
    return PolynomialEvaluator(p).hessian(q);
}

inline std::vector<Rational> gradient_at(const HomogeneousPolynomial& p, std::span<const Rational> q) {
    std::vector<Rational> g;
    for (int i = 0; i < p.dim(); ++i) g.push_back(p.derivative(i).eval<Rational>(q));
    return g;
}

/// Exact Hessian at a rational point; symmetric by construction.
inline std::vector<std::vector<Rational>> hessian_at(const HomogeneousPolynomial& p, std::span<const Rational> q) {
    const auto h = hessian(p);
    std::vector<std::vector<Rational>> out(p.dim(), std::vector<Rational>(p.dim()));
    for (int i = 0; i < p.dim(); ++i)
        for (int j = i; j < p.dim(); ++j) {
            out[i][j] = h[i][j].eval<Rational>(q);
            out[j][i] = out[i][j];
        }
    return out;
}

// ---------------------------------------------------------------------------
// JSON: {"dim": d, "degree": n, "terms": [{"exp": [...], "coef": "num/den"}]}
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const HomogeneousPolynomial& p) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [e, c] : p.terms()) terms.push_back({{"exp", e}, {"coef", to_string(c)}});
    return {{"dim", p.dim()}, {"degree", p.degree()}, {"terms", terms}};
}

inline HomogeneousPolynomial polynomial_from_json(const nlohmann::json& j) {
    try {
        HomogeneousPolynomial p(j.at("dim").get<int>(), j.at("degree").get<int>());
        for (const auto& t : j.at("terms")) {
            const auto& c = t.at("coef");
            const Rational coef = c.is_string() ? parse_rational(c.get<std::string>())
                                                : parse_rational(c.dump());
            p.add_term(t.at("exp").get<MultiIndex>(), coef);
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidParameter(std::string("malformed polynomial JSON: ") + e.what());
    }
}

} // namespace omniflow
