#pragma once

// Sampled convexity check for homogeneous polynomials. The Hessian of a
// degree-n homogeneous polynomial is homogeneous of degree n-2, so its sign
// structure is determined by its values on the unit sphere.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "omniflow/polynomial.hpp"
#include "omniflow/sampling.hpp"

namespace omniflow {

enum class ConvexityVerdict { Convex, NotConvex, Undetermined };

inline const char* to_string(ConvexityVerdict v) {
    switch (v) {
    case ConvexityVerdict::Convex: return "convex";
    case ConvexityVerdict::NotConvex: return "not-convex";
    case ConvexityVerdict::Undetermined: return "undetermined";
    }
    return "?";
}

struct ConvexityReport {
    ConvexityVerdict verdict = ConvexityVerdict::Undetermined;
    double min_eigenvalue = 0.0;  // smallest Hessian eigenvalue found on the sphere
    double max_hessian_norm = 0.0;
    std::optional<std::vector<double>> witness;  // point with a negative eigenvalue
    /// All coefficients non-negative. For even-degree polynomials this is the
    /// classical sufficient test; it is reported but does not decide the verdict.
    bool coefficients_nonnegative = false;
    int samples = 0;
};

struct ConvexityOptions {
    int samples = 4096;
    std::uint64_t seed = 1;
    double tolerance = 1e-9;  // relative to the largest sampled Hessian norm
};

namespace detail {

inline double min_eigenvalue(const SymmetricMatrix& h) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.matrix(), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

} // namespace detail

inline ConvexityReport convexity_range_check(const HomogeneousPolynomial& p, const ConvexityOptions& opt = {}) {
    ConvexityReport r;
    r.coefficients_nonnegative = p.all_coefficients_nonnegative();
    const int d = p.dim();
    if (p.degree() < 2 || p.is_zero()) {
        r.verdict = ConvexityVerdict::Convex;  // affine: the Hessian vanishes
        return r;
    }
    const PolynomialEvaluator ev(p);
    const auto pts = sample_sphere(d, opt.samples, opt.seed);
    r.samples = static_cast<int>(pts.size());
    r.min_eigenvalue = std::numeric_limits<double>::infinity();
    std::vector<double> worst;
    for (const auto& q : pts) {
        const auto h = ev.hessian(q);
        r.max_hessian_norm = std::max(r.max_hessian_norm, h.frobenius());
        const double lam = detail::min_eigenvalue(h);
        if (lam < r.min_eigenvalue) {
            r.min_eigenvalue = lam;
            worst = q;
        }
    }

    // Pattern search on the sphere around the worst sample.
    double step = 0.1;
    while (step > 1e-6) {
        bool improved = false;
        for (int k = 0; k < d && !improved; ++k)
            for (double s : {step, -step}) {
                auto q = worst;
                q[k] += s;
                double n = 0.0;
                for (double x : q) n += x * x;
                n = std::sqrt(n);
                for (auto& x : q) x /= n;
                const double lam = detail::min_eigenvalue(ev.hessian(q));
                if (lam < r.min_eigenvalue) {
                    r.min_eigenvalue = lam;
                    worst = q;
                    improved = true;
                    break;
                }
            }
        if (!improved) step *= 0.5;
    }

    const double scale = std::max(r.max_hessian_norm, 1e-300);
    if (r.min_eigenvalue < -opt.tolerance * scale) {
        r.verdict = ConvexityVerdict::NotConvex;
        r.witness = worst;
    } else if (r.max_hessian_norm == 0.0) {
        r.verdict = ConvexityVerdict::Undetermined;
    } else {
        r.verdict = ConvexityVerdict::Convex;
    }
    return r;
}

} // namespace omniflow
