#pragma once

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniflow/error.hpp"

namespace omniflow {

/// c0 + c1 t + c2 t^2 + ...
class TimePolynomial {
public:
    TimePolynomial() = default;
    explicit TimePolynomial(std::vector<double> coefficients) : c_(std::move(coefficients)) {
        for (double v : c_)
            if (!std::isfinite(v)) throw InvalidParameter("non-finite time coefficient");
        while (!c_.empty() && c_.back() == 0.0) c_.pop_back();
    }

    static TimePolynomial constant(double c) { return TimePolynomial({c}); }
    /// t^n
    static TimePolynomial power(int n) {
        std::vector<double> c(n + 1, 0.0);
        c[n] = 1.0;
        return TimePolynomial(std::move(c));
    }

    const std::vector<double>& coefficients() const noexcept { return c_; }
    int degree() const noexcept { return static_cast<int>(c_.size()) - 1; }

    double operator()(double t) const {
        double v = 0.0;
        for (auto it = c_.rbegin(); it != c_.rend(); ++it) v = v * t + *it;
        return v;
    }

    TimePolynomial derivative() const {
        std::vector<double> d;
        for (std::size_t k = 1; k < c_.size(); ++k) d.push_back(static_cast<double>(k) * c_[k]);
        return TimePolynomial(std::move(d));
    }

    friend bool operator==(const TimePolynomial&, const TimePolynomial&) = default;

private:
    std::vector<double> c_;
};

inline nlohmann::json to_json(const TimePolynomial& p) { return p.coefficients(); }

inline TimePolynomial time_polynomial_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw InvalidParameter("time polynomial must be a coefficient array");
    return TimePolynomial(j.get<std::vector<double>>());
}

} // namespace omniflow
