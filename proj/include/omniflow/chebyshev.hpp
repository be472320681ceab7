#pragma once

// Tensor-product Chebyshev interpolation on a rectangle, with first and
// second derivatives.

#include <cmath>
#include <numbers>
#include <vector>

#include "omniflow/error.hpp"
#include "omniflow/sampling.hpp"

namespace omniflow {

class Chebyshev2D {
public:
    struct Derivs {
        double f = 0, fx = 0, fy = 0, fxx = 0, fxy = 0, fyy = 0;
    };

    Chebyshev2D() = default;

    /// Gauss-Lobatto points cos(pi k / n), k = 0..n, mapped to [lo, hi].
    static std::vector<double> nodes(int n, double lo, double hi) {
        std::vector<double> x(n + 1);
        for (int k = 0; k <= n; ++k) x[k] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * std::cos(std::numbers::pi * k / n);
        return x;
    }

    /// Interpolant through values[j * (n+1) + i] at (nodes_x[i], nodes_y[j]).
    static Chebyshev2D fit(const Box& domain, int n, const std::vector<double>& values) {
        if (domain.dim() != 2) throw DimensionMismatch("Chebyshev fits are two-dimensional");
        if (n < 2) throw InvalidParameter("Chebyshev degree must be at least 2");
        const int m = n + 1;
        if (static_cast<int>(values.size()) != m * m) throw InvalidParameter("Chebyshev value count differs from (n+1)^2");
        // cos(pi j k / n) table
        std::vector<double> c(m * m);
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k) c[j * m + k] = std::cos(std::numbers::pi * j * k / n);
        auto weight = [&](int j) { return (j == 0 || j == n) ? 0.5 : 1.0; };

        // transform along x for every row, then along y
        std::vector<double> tmp(m * m, 0.0), a(m * m, 0.0);
        for (int jy = 0; jy < m; ++jy)
            for (int k = 0; k < m; ++k) {
                double s = 0.0;
                for (int ix = 0; ix < m; ++ix) s += weight(ix) * values[jy * m + ix] * c[ix * m + k];
                tmp[jy * m + k] = s * 2.0 / n * weight(k);
            }
        for (int kx = 0; kx < m; ++kx)
            for (int l = 0; l < m; ++l) {
                double s = 0.0;
                for (int jy = 0; jy < m; ++jy) s += weight(jy) * tmp[jy * m + kx] * c[jy * m + l];
                a[l * m + kx] = s * 2.0 / n * weight(l);
            }
        Chebyshev2D out;
        out.domain_ = domain;
        out.n_ = n;
        out.a_ = std::move(a);
        return out;
    }

    const Box& domain() const noexcept { return domain_; }
    int degree() const noexcept { return n_; }

    Derivs eval(double x, double y) const {
        const int m = n_ + 1;
        const double sx = 2.0 / (domain_.hi[0] - domain_.lo[0]), sy = 2.0 / (domain_.hi[1] - domain_.lo[1]);
        const double u = (x - domain_.lo[0]) * sx - 1.0, w = (y - domain_.lo[1]) * sy - 1.0;
        std::vector<double> tx(3 * m), ty(3 * m);
        basis(u, tx.data(), m);
        basis(w, ty.data(), m);
        Derivs d;
        for (int l = 0; l < m; ++l) {
            double v0 = 0.0, v1 = 0.0, v2 = 0.0;
            const double* row = &a_[l * m];
            for (int k = 0; k < m; ++k) {
                v0 += row[k] * tx[k];
                v1 += row[k] * tx[m + k];
                v2 += row[k] * tx[2 * m + k];
            }
            d.f += v0 * ty[l];
            d.fx += v1 * ty[l];
            d.fxx += v2 * ty[l];
            d.fy += v0 * ty[m + l];
            d.fxy += v1 * ty[m + l];
            d.fyy += v0 * ty[2 * m + l];
        }
        d.fx *= sx;
        d.fxx *= sx * sx;
        d.fy *= sy;
        d.fxy *= sx * sy;
        d.fyy *= sy * sy;
        return d;
    }

    double value(double x, double y) const { return eval(x, y).f; }

private:
    // T_k, T_k', T_k'' at u for k < m, stored in blocks of m.
    static void basis(double u, double* t, int m) {
        double* d1 = t + m;
        double* d2 = t + 2 * m;
        t[0] = 1.0;
        d1[0] = 0.0;
        d2[0] = 0.0;
        if (m == 1) return;
        t[1] = u;
        d1[1] = 1.0;
        d2[1] = 0.0;
        for (int k = 1; k + 1 < m; ++k) {
            t[k + 1] = 2.0 * u * t[k] - t[k - 1];
            d1[k + 1] = 2.0 * t[k] + 2.0 * u * d1[k] - d1[k - 1];
            d2[k + 1] = 4.0 * d1[k] + 2.0 * u * d2[k] - d2[k - 1];
        }
    }

    Box domain_;
    int n_ = 0;
    std::vector<double> a_;  // a_[l * (n+1) + k] multiplies T_k(x) T_l(y)
};

} // namespace omniflow
