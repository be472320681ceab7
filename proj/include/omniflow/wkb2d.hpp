#pragma once

// Two-dimensional WKB construction of omni-potential flows for an arbitrary
// smooth initial potential phi0:
//   Phi(q, t) = |q|^2/2 + t phi0(q) + f(t) (eps / kappa^2) 2 Re[e^{i kappa S} (A0 + A1/kappa)]
// The eikonal S has its gradient along one eigendirection of H(phi0); its
// level lines are the "rays" (integral curves of the other eigendirection).
// A0 and A1 are transported along those rays.
//
// S, A0 and A1 are obtained pointwise at Chebyshev nodes by tracing rays back
// to a seed line and integrating along them, then represented by tensor
// Chebyshev interpolants, which supply the derivatives needed downstream.

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "omniflow/chebyshev.hpp"
#include "omniflow/flow.hpp"
#include "omniflow/parallel.hpp"
#include "omniflow/verify.hpp"

namespace omniflow {

using Vec2 = Eigen::Vector2d;
using cplx = std::complex<double>;

/// Hessian of a 2-D polynomial, compiled for fast repeated evaluation.
class Hessian2D {
public:
    struct Entries {
        double r = 0, s = 0, t = 0;  // H11, H12, H22
        double norm() const { return std::sqrt(r * r + t * t + 2 * s * s); }
        double gap() const { return std::sqrt((r - t) * (r - t) + 4 * s * s); }
    };

    explicit Hessian2D(const Polynomial& phi0) {
        if (phi0.dim() != 2) throw DimensionMismatch("WKB construction needs a 2-D potential");
        for (const auto& [deg, part] : phi0.parts()) {
            if (deg < 2) continue;
            const auto h = hessian(part);
            const HomogeneousPolynomial* entries[3] = {&h[0][0], &h[0][1], &h[1][1]};
            for (int k = 0; k < 3; ++k)
                for (const auto& [e, c] : entries[k]->terms()) {
                    terms_[k].push_back({c.get_d(), e[0], e[1]});
                    max_exp_ = std::max({max_exp_, e[0], e[1]});
                }
        }
        if (max_exp_ >= kMaxExp) throw InvalidParameter("potential degree too high for the WKB evaluator");
    }

    Entries operator()(double x, double y) const {
        std::array<double, kMaxExp> px, py;
        px[0] = py[0] = 1.0;
        for (int k = 1; k <= max_exp_; ++k) {
            px[k] = px[k - 1] * x;
            py[k] = py[k - 1] * y;
        }
        double v[3] = {0, 0, 0};
        for (int k = 0; k < 3; ++k)
            for (const auto& term : terms_[k]) v[k] += term.c * px[term.ex] * py[term.ey];
        return {v[0], v[1], v[2]};
    }
    Entries operator()(const Vec2& q) const { return (*this)(q.x(), q.y()); }

private:
    static constexpr int kMaxExp = 64;
    struct Term {
        double c;
        int ex, ey;
    };
    std::array<std::vector<Term>, 3> terms_;
    int max_exp_ = 0;
};

/// Unit eigenvector of [[r, s], [s, t]]: branch 1 pairs with the smaller
/// eigenvalue, branch 2 with the larger. The sign is not normalized.
inline Vec2 branch_vector(const Hessian2D::Entries& h, int branch) {
    const double theta = 0.5 * std::atan2(2.0 * h.s, h.r - h.t);
    const Vec2 v2(std::cos(theta), std::sin(theta));
    return branch == 2 ? v2 : Vec2(-v2.y(), v2.x());
}

inline void check_branch(int branch) {
    if (branch != 1 && branch != 2) throw InvalidParameter("eigen branch must be 1 or 2");
}

/// Eigendirection field of H(phi0). `at` returns the sign-normalized vector
/// (largest component positive); `follow` keeps the sign continuous with a
/// previous vector along a path.
class EigenField2D {
public:
    EigenField2D(const Polynomial& phi0, int branch) : hess_(phi0), branch_(branch) { check_branch(branch); }

    const Hessian2D& hessian() const noexcept { return hess_; }
    int branch() const noexcept { return branch_; }

    Vec2 at(const Vec2& q) const {
        Vec2 v = raw(q);
        const int i = std::abs(v.x()) >= std::abs(v.y()) ? 0 : 1;
        if (v(i) < 0.0) v = -v;
        return v;
    }

    Vec2 follow(const Vec2& q, const Vec2& prev) const {
        Vec2 v = raw(q);
        if (v.dot(prev) < 0.0) v = -v;
        return v;
    }

private:
    Vec2 raw(const Vec2& q) const {
        const auto h = hess_(q);
        const double norm = h.norm();
        if (norm == 0.0 || h.gap() <= kDistinctGapTolerance * norm)
            throw DegenerateHessian("eigenvalues of the Hessian of phi0 coincide", {q.x(), q.y()});
        return branch_vector(h, branch_);
    }

    Hessian2D hess_;
    int branch_;
};

inline Vec2 eigen_field(const Polynomial& phi0, const Vec2& q, int branch) { return EigenField2D(phi0, branch).at(q); }

// ---------------------------------------------------------------------------
// Rays
// ---------------------------------------------------------------------------

enum class RayStop { LeftDomain, MaxLength, Degenerate };

struct Ray {
    std::vector<Vec2> points;
    std::vector<Vec2> tangents;
    double step = 0.0;
    RayStop stop = RayStop::MaxLength;
    double length() const { return step * (points.empty() ? 0 : points.size() - 1); }
};

namespace detail {

/// One classical RK4 step along the direction field; `u` is the direction at
/// `x` on entry and at the returned point on exit.
inline Vec2 rk4_step(const EigenField2D& field, const Vec2& x, Vec2& u, double h) {
    const Vec2 k1 = u;
    const Vec2 k2 = field.follow(x + 0.5 * h * k1, k1);
    const Vec2 k3 = field.follow(x + 0.5 * h * k2, k2);
    const Vec2 k4 = field.follow(x + h * k3, k3);
    const Vec2 xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    u = field.follow(xn, k4);
    return xn;
}

inline bool inside(const Box& b, const Vec2& x) { return b.contains({x.x(), x.y()}); }

} // namespace detail

/// Integral curve of the branch field from q0, with fixed arclength step.
/// `initial` optionally fixes the starting orientation.
inline Ray trace_ray(const Polynomial& phi0, const Vec2& q0, int branch, double step, double max_len, const Box& omega,
                     std::optional<Vec2> initial = std::nullopt) {
    if (!(step > 0.0)) throw InvalidParameter("ray step must be positive");
    if (!detail::inside(omega, q0)) throw InvalidParameter("ray start outside the patch");
    const EigenField2D field(phi0, branch);
    Ray ray;
    ray.step = step;
    Vec2 u = initial ? field.follow(q0, *initial) : field.at(q0);  // throws on a degenerate start
    Vec2 x = q0;
    ray.points.push_back(x);
    ray.tangents.push_back(u);
    const int n = static_cast<int>(std::floor(max_len / step + 1e-9));
    for (int i = 0; i < n; ++i) {
        Vec2 un = u;
        Vec2 xn;
        try {
            xn = detail::rk4_step(field, x, un, step);
        } catch (const DegenerateHessian&) {
            ray.stop = RayStop::Degenerate;
            return ray;
        }
        if (!detail::inside(omega, xn)) {
            ray.stop = RayStop::LeftDomain;
            return ray;
        }
        x = xn;
        u = un;
        ray.points.push_back(x);
        ray.tangents.push_back(u);
    }
    ray.stop = RayStop::MaxLength;
    return ray;
}

// ---------------------------------------------------------------------------
// Patch construction
// ---------------------------------------------------------------------------

/// Straight seed curve: S = sigma = (x - center) . direction on it.
struct SeedLine {
    Vec2 center;
    Vec2 direction;  // unit
};

struct WkbOptions {
    int degree = 28;             // Chebyshev degree per axis
    double margin = 0.15;        // fit domain = Omega enlarged by this fraction of its width per side
    double step = 0.0;           // ray step; 0 selects diag(Omega) / 2000
    int quad_intervals = 128;    // samples per ray for the transport integrals
    double max_len_factor = 4.0; // max ray length, in fit-domain diagonals
    double min_transversality_deg = 10.0;
    int diagnostic_grid = 65;    // nodes per axis of the residual grid over Omega
};

struct RayPatch {
    Polynomial phi0;
    Box omega, fit_domain;
    int gradient_branch = 2;  // grad S is parallel to this eigen branch; rays follow the other one
    SeedLine seed;
    WkbOptions options;

    Chebyshev2D S;
    bool has_amplitudes = false;
    Chebyshev2D A0re, A0im, A1re, A1im;

    struct PathSample {
        Vec2 x, u;
    };
    std::vector<double> node_sigma;   // seed coordinate reached from each fit node
    std::vector<double> node_length;  // ray length from each node to the seed line
    std::vector<std::vector<PathSample>> node_paths;

    double min_transversality_deg = 90.0;
    double eikonal_residual = 0.0;    // max |p^2 - q^2 - g p q| / (p^2 + q^2) over the grid, where g is defined
    double alignment_residual = 0.0;  // max |sin angle(grad S, gradient branch)| over the grid
    double min_gradient_norm = 0.0;   // min |grad S| over the grid
    double transport_residual_a0 = 0.0;
    double transport_residual_a1 = 0.0;

    int ray_branch() const noexcept { return 3 - gradient_branch; }

    struct Amplitudes {
        cplx b, b1, b2, b11, b12, b22;
    };
    Amplitudes amplitude(const Vec2& q, double kappa, int order) const;
};

namespace detail {

struct NodeTrace {
    double sigma = 0.0, length = 0.0, transversality_deg = 90.0;
    std::vector<RayPatch::PathSample> samples;
};

inline double signed_distance(const SeedLine& seed, const Vec2& x) {
    const Vec2 nu(-seed.direction.y(), seed.direction.x());
    return (x - seed.center).dot(nu);
}

/// Traces the ray through x0 to the seed line with `nq` equal arclength steps
/// (refined so that the final point lies on the line).
inline NodeTrace trace_to_seed(const EigenField2D& rays, const SeedLine& seed, const Vec2& x0, double h, int nq,
                               double max_len) {
    const Vec2 nu(-seed.direction.y(), seed.direction.x());
    NodeTrace out;
    const double d0 = signed_distance(seed, x0);
    Vec2 u0 = rays.at(x0);
    if (d0 * u0.dot(nu) > 0.0) u0 = -u0;
    if (d0 == 0.0) {
        out.sigma = (x0 - seed.center).dot(seed.direction);
        out.samples.assign(nq + 1, {x0, u0});
        out.transversality_deg = std::asin(std::min(1.0, std::abs(u0.dot(nu)))) * 180.0 / std::numbers::pi;
        return out;
    }

    // march until the signed distance changes sign
    Vec2 x = x0, u = u0;
    double s = 0.0, d = d0, L = -1.0;
    while (s < max_len) {
        Vec2 un = u;
        const Vec2 xn = rk4_step(rays, x, un, h);
        const double dn = signed_distance(seed, xn);
        if (dn == 0.0 || (dn > 0.0) != (d0 > 0.0)) {
            L = s + h * d / (d - dn);
            break;
        }
        x = xn;
        u = un;
        d = dn;
        s += h;
    }
    if (L < 0.0)
        throw ConfigurationError("ray through " + format_point({x0.x(), x0.y()}) + " does not reach the seed line");

    // retrace with equal steps ending on the line
    const double tol = 1e-13 * (1.0 + seed.center.norm());
    for (int iter = 0; iter < 8; ++iter) {
        const int per = std::max(1, static_cast<int>(std::ceil(L / (h * nq))));
        const int n = per * nq;
        const double hh = L / n;
        out.samples.clear();
        Vec2 xr = x0, ur = u0;
        out.samples.push_back({xr, ur});
        for (int i = 1; i <= n; ++i) {
            xr = rk4_step(rays, xr, ur, hh);
            if (i % per == 0) out.samples.push_back({xr, ur});
        }
        const double de = signed_distance(seed, xr);
        const double rate = ur.dot(nu);
        if (std::abs(de) <= tol || rate == 0.0) break;
        L -= de / rate;
        if (!(L > 0.0)) throw ConfigurationError("ray refinement failed near " + format_point({x0.x(), x0.y()}));
    }
    const auto& end = out.samples.back();
    out.length = L;
    out.sigma = (end.x - seed.center).dot(seed.direction);
    out.transversality_deg = std::asin(std::min(1.0, std::abs(end.u.dot(nu)))) * 180.0 / std::numbers::pi;
    return out;
}

/// Cumulative integral at equally spaced samples, fourth order.
template <class T>
std::vector<T> cumulative_integral(const std::vector<T>& f, double h) {
    const int n = static_cast<int>(f.size()) - 1;
    std::vector<T> out(f.size(), T(0));
    if (n < 3) {
        for (int j = 0; j < n; ++j) out[j + 1] = out[j] + 0.5 * h * (f[j] + f[j + 1]);
        return out;
    }
    for (int j = 0; j < n; ++j) {
        T seg;
        if (j == 0) seg = (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]) * (h / 24.0);
        else if (j == n - 1) seg = (f[n - 3] - 5.0 * f[n - 2] + 19.0 * f[n - 1] + 9.0 * f[n]) * (h / 24.0);
        else seg = (-f[j - 1] + 13.0 * f[j] + 13.0 * f[j + 1] - f[j + 2]) * (h / 24.0);
        out[j + 1] = out[j] + seg;
    }
    return out;
}

struct Monge {
    double p, q, r, s, t, rho2;
};

inline Monge monge(const Chebyshev2D& S, const Vec2& x) {
    const auto d = S.eval(x.x(), x.y());
    return {d.fx, d.fy, d.fxx, d.fxy, d.fyy, d.fx * d.fx + d.fy * d.fy};
}

/// Coefficient c of the transport equation (q d1 - p d2) A + c A = source.
inline double transport_coefficient(const Monge& m) {
    return (m.p * m.q * (m.r - m.t) - (m.p * m.p - m.q * m.q) * m.s) / m.rho2;
}

struct ComplexDerivs {
    cplx f, fx, fy, fxx, fxy, fyy;
};

inline ComplexDerivs complex_eval(const Chebyshev2D& re, const Chebyshev2D& im, const Vec2& x) {
    const auto a = re.eval(x.x(), x.y());
    const auto b = im.eval(x.x(), x.y());
    return {{a.f, b.f}, {a.fx, b.fx}, {a.fy, b.fy}, {a.fxx, b.fxx}, {a.fxy, b.fxy}, {a.fyy, b.fyy}};
}

/// [pq (A11 - A22) - (p^2 - q^2) A12] / (p^2 + q^2)
inline cplx cleared_operator(const Monge& m, const ComplexDerivs& a) {
    return (m.p * m.q * (a.fxx - a.fyy) - (m.p * m.p - m.q * m.q) * a.fxy) / m.rho2;
}

inline std::vector<Vec2> grid_points(const Box& b, int n) {
    std::vector<Vec2> pts;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            pts.emplace_back(b.lo[0] + (b.hi[0] - b.lo[0]) * i / (n - 1), b.lo[1] + (b.hi[1] - b.lo[1]) * j / (n - 1));
    return pts;
}

/// Smallest relative eigenvalue gap of H(phi0) over Omega (grid scan refined
/// by pattern search); throws DegenerateHessian at a coincidence.
inline void check_nondegenerate(const Hessian2D& hess, const Box& omega) {
    auto rel_gap = [&](const Vec2& q) {
        const auto h = hess(q);
        const double n = h.norm();
        return n == 0.0 ? 0.0 : h.gap() / n;
    };
    Vec2 best;
    double best_gap = std::numeric_limits<double>::infinity();
    for (const auto& q : grid_points(omega, 101)) {
        const double g = rel_gap(q);
        if (g < best_gap) {
            best_gap = g;
            best = q;
        }
    }
    double step = 0.01 * omega.diagonal();
    while (step > 1e-10 && best_gap > 1e-8) {
        bool improved = false;
        for (const Vec2& dir : {Vec2(1, 0), Vec2(-1, 0), Vec2(0, 1), Vec2(0, -1)}) {
            const Vec2 c = best + step * dir;
            if (!inside(omega, c)) continue;
            const double g = rel_gap(c);
            if (g < best_gap) {
                best_gap = g;
                best = c;
                improved = true;
            }
        }
        if (!improved) step *= 0.5;
    }
    if (best_gap < 1e-6)
        throw DegenerateHessian("eigenvalues of the Hessian of phi0 coincide inside the patch", {best.x(), best.y()});
}

} // namespace detail

/// Builds the eikonal S on Omega: grad S along `gradient_branch`, S equal to
/// arclength on the seed line (default: through the centre of Omega along the
/// gradient branch there).
inline RayPatch build_eikonal(const Polynomial& phi0, const Box& omega, int gradient_branch,
                              std::optional<SeedLine> seed = std::nullopt, const WkbOptions& opt = {}) {
    check_branch(gradient_branch);
    if (omega.dim() != 2) throw DimensionMismatch("WKB patch must be two-dimensional");
    RayPatch patch;
    patch.phi0 = phi0;
    patch.omega = omega;
    patch.gradient_branch = gradient_branch;
    patch.options = opt;
    const Hessian2D hess(phi0);
    detail::check_nondegenerate(hess, omega);

    const Vec2 center(0.5 * (omega.lo[0] + omega.hi[0]), 0.5 * (omega.lo[1] + omega.hi[1]));
    if (!seed) seed = SeedLine{center, EigenField2D(phi0, gradient_branch).at(center)};
    seed->direction.normalize();
    patch.seed = *seed;

    const double wx = omega.hi[0] - omega.lo[0], wy = omega.hi[1] - omega.lo[1];
    patch.fit_domain = Box{{omega.lo[0] - opt.margin * wx, omega.lo[1] - opt.margin * wy},
                           {omega.hi[0] + opt.margin * wx, omega.hi[1] + opt.margin * wy}};
    const double h = opt.step > 0.0 ? opt.step : omega.diagonal() / 2000.0;
    const double max_len = opt.max_len_factor * patch.fit_domain.diagonal();

    const EigenField2D rays(phi0, patch.ray_branch());
    const int n = opt.degree, m = n + 1;
    const auto xs = Chebyshev2D::nodes(n, patch.fit_domain.lo[0], patch.fit_domain.hi[0]);
    const auto ys = Chebyshev2D::nodes(n, patch.fit_domain.lo[1], patch.fit_domain.hi[1]);
    std::vector<detail::NodeTrace> traces(m * m);
    parallel_for(m * m, [&](int k) {
        traces[k] = detail::trace_to_seed(rays, patch.seed, Vec2(xs[k % m], ys[k / m]), h, opt.quad_intervals, max_len);
    });

    std::vector<double> values(m * m);
    for (int k = 0; k < m * m; ++k) {
        values[k] = traces[k].sigma;
        patch.min_transversality_deg = std::min(patch.min_transversality_deg, traces[k].transversality_deg);
        patch.node_sigma.push_back(traces[k].sigma);
        patch.node_length.push_back(traces[k].length);
        patch.node_paths.push_back(std::move(traces[k].samples));
    }
    if (patch.min_transversality_deg < opt.min_transversality_deg)
        throw ConfigurationError("seed line meets the rays at " + std::to_string(patch.min_transversality_deg) +
                                 " degrees, below the transversality limit");
    patch.S = Chebyshev2D::fit(patch.fit_domain, n, values);

    // diagnostics over Omega
    patch.min_gradient_norm = std::numeric_limits<double>::infinity();
    const EigenField2D grad_branch(phi0, gradient_branch);
    for (const auto& x : detail::grid_points(omega, opt.diagnostic_grid)) {
        const auto mg = detail::monge(patch.S, x);
        const double rho = std::sqrt(mg.rho2);
        patch.min_gradient_norm = std::min(patch.min_gradient_norm, rho);
        const Vec2 e = grad_branch.at(x);
        if (rho > 0.0) patch.alignment_residual = std::max(patch.alignment_residual, std::abs(e.x() * mg.q - e.y() * mg.p) / rho);
        const auto hx = hess(x);
        if (std::abs(hx.s) >= 1e-8 * hx.norm() && mg.rho2 > 0.0) {
            const double g = (hx.r - hx.t) / hx.s;
            patch.eikonal_residual =
                std::max(patch.eikonal_residual, std::abs(mg.p * mg.p - mg.q * mg.q - g * mg.p * mg.q) / mg.rho2);
        }
    }
    if (!(patch.min_gradient_norm > 1e-8))
        throw ConfigurationError("eikonal gradient vanishes inside the patch (rays meet)");
    return patch;
}

using AmplitudeSeed = std::function<cplx(double sigma)>;

/// Integrates A0 (homogeneous transport, seed values on the seed line) and A1
/// (inhomogeneous transport, zero on the seed line) along the rays.
inline RayPatch transport_amplitudes(const RayPatch& in, const AmplitudeSeed& a0_seed = [](double) { return cplx(1.0); }) {
    RayPatch patch = in;
    const int n = patch.options.degree, m = n + 1, nq = patch.options.quad_intervals;
    const std::size_t nodes = patch.node_paths.size();
    std::vector<std::vector<double>> K(nodes);
    std::vector<cplx> a0(nodes), a1(nodes);

    parallel_for(static_cast<int>(nodes), [&](int k) {
        const auto& path = patch.node_paths[k];
        const double hs = patch.node_length[k] / nq;
        std::vector<double> rate(path.size());
        for (std::size_t j = 0; j < path.size(); ++j) {
            const auto mg = detail::monge(patch.S, path[j].x);
            const double rho = std::sqrt(mg.rho2);
            const Vec2 mhat(mg.q / rho, -mg.p / rho);
            rate[j] = -(detail::transport_coefficient(mg) / rho) * path[j].u.dot(mhat);
        }
        K[k] = detail::cumulative_integral(rate, hs);
        const cplx seed_value = a0_seed(patch.node_sigma[k]);
        if (seed_value == cplx(0.0)) throw InvalidParameter("A0 seed must be non-zero on the seed line");
        a0[k] = seed_value * std::exp(-K[k].back());
    });
    auto fit_complex = [&](const std::vector<cplx>& v, Chebyshev2D& re, Chebyshev2D& im) {
        std::vector<double> r(v.size()), i(v.size());
        for (std::size_t k = 0; k < v.size(); ++k) {
            r[k] = v[k].real();
            i[k] = v[k].imag();
        }
        re = Chebyshev2D::fit(patch.fit_domain, n, r);
        im = Chebyshev2D::fit(patch.fit_domain, n, i);
    };
    fit_complex(a0, patch.A0re, patch.A0im);

    parallel_for(static_cast<int>(nodes), [&](int k) {
        const auto& path = patch.node_paths[k];
        const double hs = patch.node_length[k] / nq;
        std::vector<cplx> src(path.size());
        for (std::size_t j = 0; j < path.size(); ++j) {
            const auto mg = detail::monge(patch.S, path[j].x);
            const double rho = std::sqrt(mg.rho2);
            const Vec2 mhat(mg.q / rho, -mg.p / rho);
            const cplx w = detail::cleared_operator(mg, detail::complex_eval(patch.A0re, patch.A0im, path[j].x));
            src[j] = std::exp(-K[k][j]) * path[j].u.dot(mhat) * w / rho;
        }
        a1[k] = cplx(0.0, -1.0) * detail::cumulative_integral(src, hs).back();
    });
    fit_complex(a1, patch.A1re, patch.A1im);
    patch.has_amplitudes = true;
    (void)m;

    // transport residuals over Omega, relative to max |A0|
    double amax = 0.0, r0 = 0.0, r1 = 0.0;
    for (const auto& x : detail::grid_points(patch.omega, patch.options.diagnostic_grid)) {
        const auto mg = detail::monge(patch.S, x);
        const double c = detail::transport_coefficient(mg);
        const auto A0 = detail::complex_eval(patch.A0re, patch.A0im, x);
        const auto A1 = detail::complex_eval(patch.A1re, patch.A1im, x);
        amax = std::max(amax, std::abs(A0.f));
        r0 = std::max(r0, std::abs(mg.q * A0.fx - mg.p * A0.fy + c * A0.f));
        const cplx w = detail::cleared_operator(mg, A0);
        r1 = std::max(r1, std::abs(mg.q * A1.fx - mg.p * A1.fy + c * A1.f - cplx(0.0, 1.0) * w));
    }
    patch.transport_residual_a0 = amax > 0.0 ? r0 / amax : r0;
    patch.transport_residual_a1 = amax > 0.0 ? r1 / amax : r1;
    return patch;
}

inline RayPatch::Amplitudes RayPatch::amplitude(const Vec2& q, double kappa, int order) const {
    if (!has_amplitudes) throw ConfigurationError("patch has no amplitudes; run transport_amplitudes first");
    const auto a0 = detail::complex_eval(A0re, A0im, q);
    Amplitudes b{a0.f, a0.fx, a0.fy, a0.fxx, a0.fxy, a0.fyy};
    if (order >= 1) {
        const auto a1 = detail::complex_eval(A1re, A1im, q);
        const double k = 1.0 / kappa;
        b.b += k * a1.f;
        b.b1 += k * a1.fx;
        b.b2 += k * a1.fy;
        b.b11 += k * a1.fxx;
        b.b12 += k * a1.fxy;
        b.b22 += k * a1.fyy;
    }
    return b;
}

namespace detail {

/// e^{-i kappa S} times the second derivatives of e^{i kappa S} B.
struct WaveHessian {
    cplx w11, w12, w22;
};

inline WaveHessian wave_hessian(const Monge& m, const RayPatch::Amplitudes& b, double kappa) {
    const cplx ik(0.0, kappa);
    const double k2 = kappa * kappa;
    return {ik * m.r * b.b - k2 * m.p * m.p * b.b + 2.0 * ik * m.p * b.b1 + b.b11,
            ik * m.s * b.b - k2 * m.p * m.q * b.b + ik * (m.p * b.b2 + m.q * b.b1) + b.b12,
            ik * m.t * b.b - k2 * m.q * m.q * b.b + 2.0 * ik * m.q * b.b2 + b.b22};
}

} // namespace detail

/// The WKB term w(q) = 2 Re[e^{i kappa S} (A0 + A1/kappa)] (A1 omitted for order 0).
class WkbField final : public SpatialField {
public:
    WkbField(std::shared_ptr<const RayPatch> patch, double kappa, int order)
        : patch_(std::move(patch)), kappa_(kappa), order_(order) {
        if (!patch_ || !patch_->has_amplitudes) throw ConfigurationError("WKB field needs a patch with amplitudes");
        if (!(kappa > 0.0)) throw InvalidParameter("kappa must be positive");
        if (order != 0 && order != 1) throw InvalidParameter("WKB truncation order must be 0 or 1");
    }

    int dim() const override { return 2; }
    double kappa() const noexcept { return kappa_; }
    int order() const noexcept { return order_; }
    const RayPatch& patch() const noexcept { return *patch_; }

    double value(std::span<const double> q) const override {
        const Vec2 x(q[0], q[1]);
        return 2.0 * (phase(x) * patch_->amplitude(x, kappa_, order_).b).real();
    }

    std::vector<double> gradient(std::span<const double> q) const override {
        const Vec2 x(q[0], q[1]);
        const auto m = detail::monge(patch_->S, x);
        const auto b = patch_->amplitude(x, kappa_, order_);
        const cplx e = phase(x), ik(0.0, kappa_);
        return {2.0 * (e * (ik * m.p * b.b + b.b1)).real(), 2.0 * (e * (ik * m.q * b.b + b.b2)).real()};
    }

    SymmetricMatrix hessian(std::span<const double> q) const override {
        const Vec2 x(q[0], q[1]);
        const auto w = detail::wave_hessian(detail::monge(patch_->S, x), patch_->amplitude(x, kappa_, order_), kappa_);
        const cplx e = phase(x);
        SymmetricMatrix h(2);
        h.set(0, 0, 2.0 * (e * w.w11).real());
        h.set(0, 1, 2.0 * (e * w.w12).real());
        h.set(1, 1, 2.0 * (e * w.w22).real());
        return h;
    }

    /// Tabulated on a 257 x 257 grid over the patch.
    nlohmann::json to_json() const override {
        return GriddedField2D::tabulate(*this, patch_->omega, 257, 257).to_json();
    }

private:
    cplx phase(const Vec2& x) const { return std::exp(cplx(0.0, kappa_ * patch_->S.value(x.x(), x.y()))); }

    std::shared_ptr<const RayPatch> patch_;
    double kappa_;
    int order_;
};

// ---------------------------------------------------------------------------
// Residuals and order study
// ---------------------------------------------------------------------------

struct WkbResidual {
    double kappa = 0.0;
    int order = 0;
    double max_residual = 0.0;  // max over the grid of |e^{-i kappa S} L[e^{i kappa S} B]|
    int skipped = 0;            // grid points where H12(phi0) vanishes and g is undefined
};

/// Residual of (d11 - d22 - g d12) applied to the WKB wave, g = (H11 - H22)/H12 of phi0.
inline WkbResidual wkb_residual(const RayPatch& patch, double kappa, int order) {
    WkbResidual r{kappa, order, 0.0, 0};
    const Hessian2D hess(patch.phi0);
    for (const auto& x : detail::grid_points(patch.omega, patch.options.diagnostic_grid)) {
        const auto h = hess(x);
        if (std::abs(h.s) < 1e-8 * h.norm()) {
            ++r.skipped;
            continue;
        }
        const double g = (h.r - h.t) / h.s;
        const auto w = detail::wave_hessian(detail::monge(patch.S, x), patch.amplitude(x, kappa, order), kappa);
        r.max_residual = std::max(r.max_residual, std::abs(w.w11 - w.w22 - g * w.w12));
    }
    return r;
}

struct KappaSweep {
    std::vector<WkbResidual> residuals;
    double slope = 0.0;  // least-squares slope of log2(residual) against log2(kappa)
};

inline KappaSweep kappa_sweep(const RayPatch& patch, const std::vector<double>& kappas, int order) {
    if (kappas.size() < 2) throw InvalidParameter("kappa sweep needs at least two values");
    KappaSweep out;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double k : kappas) {
        out.residuals.push_back(wkb_residual(patch, k, order));
        const double x = std::log2(k), y = std::log2(out.residuals.back().max_residual);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(kappas.size());
    out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return out;
}

struct EikonalRefinement {
    std::vector<int> resolutions;
    std::vector<double> residuals;
    std::vector<double> orders;  // between consecutive resolutions
};

/// Eikonal residual with grad S from central differences of S tabulated on
/// uniform grids over Omega; measures the discretization order of a gridded S.
inline EikonalRefinement eikonal_refinement_study(const RayPatch& patch, const std::vector<int>& resolutions) {
    EikonalRefinement out;
    const Hessian2D hess(patch.phi0);
    const Box& b = patch.omega;
    for (int n : resolutions) {
        const double hx = (b.hi[0] - b.lo[0]) / (n - 1), hy = (b.hi[1] - b.lo[1]) / (n - 1);
        auto S = [&](int i, int j) { return patch.S.value(b.lo[0] + i * hx, b.lo[1] + j * hy); };
        double worst = 0.0;
        for (int j = 1; j < n - 1; ++j)
            for (int i = 1; i < n - 1; ++i) {
                const double p = (S(i + 1, j) - S(i - 1, j)) / (2 * hx), q = (S(i, j + 1) - S(i, j - 1)) / (2 * hy);
                const auto h = hess(b.lo[0] + i * hx, b.lo[1] + j * hy);
                if (std::abs(h.s) < 1e-8 * h.norm()) continue;
                const double g = (h.r - h.t) / h.s;
                worst = std::max(worst, std::abs(p * p - q * q - g * p * q) / (p * p + q * q));
            }
        out.resolutions.push_back(n);
        out.residuals.push_back(worst);
    }
    for (std::size_t k = 1; k < out.residuals.size(); ++k) {
        const double ratio = static_cast<double>(out.resolutions[k] - 1) / (out.resolutions[k - 1] - 1);
        out.orders.push_back(std::log(out.residuals[k - 1] / out.residuals[k]) / std::log(ratio));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Flow assembly
// ---------------------------------------------------------------------------

struct WkbFlow {
    FlowPotential flow;
    double T = 0.0;             // admissible final time (after any halving)
    int halvings = 0;
    WkbResidual residual;
    double min_eigenvalue = 0.0;  // over the convexity grid at times <= T
};

struct AssembleOptions {
    int order = 1;
    int convexity_grid = 41;
    int convexity_times = 16;
};

/// |q|^2/2 + t phi0 + f(t) (eps/kappa^2) w(q). T is halved until the Hessian is
/// positive definite on a grid over Omega for all sampled t <= T.
inline WkbFlow assemble_wkb_flow(std::shared_ptr<const RayPatch> patch, double kappa, double eps,
                                 const TimePolynomial& f, double T, const AssembleOptions& opt = {}) {
    if (!patch) throw InvalidParameter("null patch");
    if (f(0.0) != 0.0 || f.derivative()(0.0) != 0.0) throw InvalidParameter("f and its derivative must vanish at t=0");
    if (!(T > 0.0)) throw InvalidParameter("final time must be positive");
    std::vector<FlowBlock> blocks{{make_field(patch->phi0), TimePolynomial::power(1)}};
    if (eps != 0.0) {
        std::vector<double> c = f.coefficients();
        for (auto& v : c) v *= eps / (kappa * kappa);
        blocks.push_back({std::make_shared<WkbField>(patch, kappa, opt.order), TimePolynomial(c)});
    }
    const auto residual = wkb_residual(*patch, kappa, opt.order);
    const auto grid = detail::grid_points(patch->omega, opt.convexity_grid);
    int halvings = 0;
    while (true) {
        FlowPotential flow(2, TimePolynomial::constant(1.0), blocks, FlowKind::WkbAugmented, {0.0, T});
        double lam = std::numeric_limits<double>::infinity();
        for (const auto& x : grid) {
            const double q[2] = {x.x(), x.y()};
            const auto ph = flow.at(q);
            for (int k = 1; k <= opt.convexity_times; ++k)
                lam = std::min(lam, detail::matrix_min_eigenvalue(ph.hessian(T * k / opt.convexity_times)));
        }
        if (lam > kShellCrossingEigenvalue) return {std::move(flow), T, halvings, residual, lam};
        T *= 0.5;
        ++halvings;
        if (T < 1e-4) throw ConfigurationError("no final time above 1e-4 keeps the WKB flow convex on the patch");
    }
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Grid header {nx, ny, box} and per-node S, A0re, A0im, A1re, A1im.
inline nlohmann::json patch_to_json(const RayPatch& patch, int nx, int ny) {
    nlohmann::json nodes = nlohmann::json::array();
    const Box& b = patch.omega;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double x = b.lo[0] + (b.hi[0] - b.lo[0]) * i / (nx - 1), y = b.lo[1] + (b.hi[1] - b.lo[1]) * j / (ny - 1);
            nlohmann::json row = {x, y, patch.S.value(x, y)};
            if (patch.has_amplitudes) {
                for (const auto* c : {&patch.A0re, &patch.A0im, &patch.A1re, &patch.A1im}) row.push_back(c->value(x, y));
            }
            nodes.push_back(std::move(row));
        }
    return {{"grid", {{"nx", nx}, {"ny", ny}, {"box", {b.lo[0], b.hi[0], b.lo[1], b.hi[1]}}}},
            {"columns", patch.has_amplitudes ? nlohmann::json{"q1", "q2", "S", "A0re", "A0im", "A1re", "A1im"}
                                             : nlohmann::json{"q1", "q2", "S"}},
            {"nodes", nodes}};
}

inline void write_patch_csv(std::ostream& os, const RayPatch& patch, int nx, int ny) {
    const auto j = patch_to_json(patch, nx, ny);
    const auto& box = j["grid"]["box"];
    os << "# nx=" << nx << " ny=" << ny << " box=" << box.dump() << "\n";
    bool first = true;
    for (const auto& c : j["columns"]) {
        os << (first ? "" : ",") << c.get<std::string>();
        first = false;
    }
    os << "\n";
    os.precision(17);
    for (const auto& row : j["nodes"]) {
        for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << row[k].get<double>();
        os << "\n";
    }
}

inline nlohmann::json to_json(const RayPatch& p) {
    return {{"omega", {p.omega.lo[0], p.omega.hi[0], p.omega.lo[1], p.omega.hi[1]}},
            {"fit_domain", {p.fit_domain.lo[0], p.fit_domain.hi[0], p.fit_domain.lo[1], p.fit_domain.hi[1]}},
            {"gradient_branch", p.gradient_branch},
            {"seed", {{"center", {p.seed.center.x(), p.seed.center.y()}},
                      {"direction", {p.seed.direction.x(), p.seed.direction.y()}}}},
            {"chebyshev_degree", p.options.degree},
            {"min_transversality_deg", p.min_transversality_deg},
            {"eikonal_residual", p.eikonal_residual},
            {"alignment_residual", p.alignment_residual},
            {"min_gradient_norm", p.min_gradient_norm},
            {"transport_residual_a0", p.transport_residual_a0},
            {"transport_residual_a1", p.transport_residual_a1}};
}

inline nlohmann::json to_json(const WkbResidual& r) {
    return {{"kappa", r.kappa}, {"order", r.order}, {"max_residual", r.max_residual}, {"skipped_points", r.skipped}};
}

} // namespace omniflow
