#pragma once

// Time-dependent flow potentials
//   Phi(q, t) = mu2(t) |q|^2 / 2 + sum_k mu_k(t) block_k(q)
// and the Lagrangian map x = grad_q Phi.

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniflow/families.hpp"
#include "omniflow/field.hpp"
#include "omniflow/time_poly.hpp"

namespace omniflow {

enum class FlowKind { ZeldovichType, PolynomialFamily, WkbAugmented, Radial, Custom };

inline const char* to_string(FlowKind k) {
    switch (k) {
    case FlowKind::ZeldovichType: return "zeldovich-type";
    case FlowKind::PolynomialFamily: return "polynomial-family";
    case FlowKind::WkbAugmented: return "wkb-augmented";
    case FlowKind::Radial: return "radial";
    case FlowKind::Custom: return "custom";
    }
    return "?";
}

inline FlowKind flow_kind_from_string(const std::string& s) {
    for (auto k : {FlowKind::ZeldovichType, FlowKind::PolynomialFamily, FlowKind::WkbAugmented, FlowKind::Radial,
                   FlowKind::Custom})
        if (s == to_string(k)) return k;
    throw InvalidParameter("unknown flow kind '" + s + "'");
}

struct FlowBlock {
    FieldPtr field;
    TimePolynomial mu;
};

class FlowPotential {
public:
    FlowPotential(int dim, TimePolynomial quad_mu, std::vector<FlowBlock> blocks, FlowKind kind,
                  std::array<double, 2> time_range)
        : dim_(dim), quad_mu_(std::move(quad_mu)), blocks_(std::move(blocks)), kind_(kind), range_(time_range) {
        if (dim < 1) throw InvalidParameter("flow dimension must be positive");
        if (std::abs(quad_mu_(0.0) - 1.0) > 1e-14) throw InvalidParameter("mu2(0) must equal 1 (identity map at t=0)");
        for (const auto& b : blocks_) {
            if (!b.field) throw InvalidParameter("flow block without a field");
            if (b.field->dim() != dim) throw DimensionMismatch("flow block dimension differs from flow dimension");
            if (b.mu(0.0) != 0.0) throw InvalidParameter("block time coefficients must vanish at t=0");
        }
        if (!(range_[0] <= range_[1])) throw InvalidParameter("empty time range");
        quad_mu_dot_ = quad_mu_.derivative();
        for (const auto& b : blocks_) mu_dot_.push_back(b.mu.derivative());
    }

    int dim() const noexcept { return dim_; }
    FlowKind kind() const noexcept { return kind_; }
    const TimePolynomial& quad_mu() const noexcept { return quad_mu_; }
    const std::vector<FlowBlock>& blocks() const noexcept { return blocks_; }
    std::array<double, 2> time_range() const noexcept { return range_; }

    double potential(std::span<const double> q, double t) const {
        check(q);
        double s = 0.0;
        for (double x : q) s += x * x;
        double v = quad_mu_(t) * 0.5 * s;
        for (const auto& b : blocks_) v += b.mu(t) * b.field->value(q);
        return v;
    }

    /// x = grad_q Phi(q, t)
    std::vector<double> lagrangian_map(std::span<const double> q, double t) const {
        return combine_gradient(q, quad_mu_(t), [&](std::size_t k) { return blocks_[k].mu(t); });
    }

    /// grad_q dPhi/dt: velocity of the particle labelled q.
    std::vector<double> lagrangian_velocity(std::span<const double> q, double t) const {
        return combine_gradient(q, quad_mu_dot_(t), [&](std::size_t k) { return mu_dot_[k](t); });
    }

    SymmetricMatrix hessian(std::span<const double> q, double t) const { return at(q).hessian(t); }
    SymmetricMatrix hessian_dt(std::span<const double> q, double t) const { return at(q).hessian_dt(t); }

    /// Block Hessians at a fixed label q; they do not depend on time, so the
    /// Hessian at any time is a cheap linear combination.
    class PointHessians {
    public:
        SymmetricMatrix hessian(double t) const { return combine(flow_->quad_mu_(t), t, false); }
        SymmetricMatrix hessian_dt(double t) const { return combine(flow_->quad_mu_dot_(t), t, true); }
        /// H - mu2 I: shares the eigenframe of H and is better conditioned for
        /// commutators when the blocks are small compared with the identity part.
        SymmetricMatrix anisotropic(double t) const { return combine(0.0, t, false); }
        SymmetricMatrix anisotropic_dt(double t) const { return combine(0.0, t, true); }
        double quad(double t) const { return flow_->quad_mu_(t); }

    private:
        friend class FlowPotential;
        SymmetricMatrix combine(double diag, double t, bool dt) const {
            SymmetricMatrix h = SymmetricMatrix::identity(flow_->dim_);
            h *= diag;
            for (std::size_t k = 0; k < blocks_.size(); ++k) {
                const double c = dt ? flow_->mu_dot_[k](t) : flow_->blocks_[k].mu(t);
                if (c == 0.0) continue;
                SymmetricMatrix b = blocks_[k];
                b *= c;
                h += b;
            }
            return h;
        }
        const FlowPotential* flow_ = nullptr;
        std::vector<SymmetricMatrix> blocks_;
    };

    PointHessians at(std::span<const double> q) const {
        check(q);
        PointHessians p;
        p.flow_ = this;
        for (const auto& b : blocks_) p.blocks_.push_back(b.field->hessian(q));
        return p;
    }

private:
    void check(std::span<const double> q) const {
        if (static_cast<int>(q.size()) != dim_) throw DimensionMismatch("point dimension differs from flow dimension");
    }

    template <class Coef>
    std::vector<double> combine_gradient(std::span<const double> q, double quad, Coef coef) const {
        check(q);
        std::vector<double> x(q.begin(), q.end());
        for (auto& v : x) v *= quad;
        for (std::size_t k = 0; k < blocks_.size(); ++k) {
            const double c = coef(k);
            if (c == 0.0) continue;
            const auto g = blocks_[k].field->gradient(q);
            for (int i = 0; i < dim_; ++i) x[i] += c * g[i];
        }
        return x;
    }

    int dim_;
    TimePolynomial quad_mu_, quad_mu_dot_;
    std::vector<FlowBlock> blocks_;
    std::vector<TimePolynomial> mu_dot_;
    FlowKind kind_;
    std::array<double, 2> range_;
};

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

/// |q|^2/2 + t phi0(q): straight trajectories with constant velocity.
inline FlowPotential zeldovich_flow(const Polynomial& phi0, double T) {
    return FlowPotential(phi0.dim(), TimePolynomial::constant(1.0), {{make_field(phi0), TimePolynomial::power(1)}},
                         FlowKind::ZeldovichType, {0.0, T});
}

/// mu(t) |q|^2/2 + eta(t) phi0(q) with mu(0) = 1, eta(0) = 0.
inline FlowPotential zeldovich_type_flow(const Polynomial& phi0, TimePolynomial mu, TimePolynomial eta, double T) {
    return FlowPotential(phi0.dim(), std::move(mu), {{make_field(phi0), std::move(eta)}}, FlowKind::ZeldovichType,
                         {0.0, T});
}

/// Identity part plus homogeneous polynomial blocks with their own time factors.
inline FlowPotential polynomial_flow(int dim, std::vector<std::pair<HomogeneousPolynomial, TimePolynomial>> blocks,
                                     double T, FlowKind kind = FlowKind::PolynomialFamily,
                                     TimePolynomial quad = TimePolynomial::constant(1.0)) {
    std::vector<FlowBlock> fb;
    for (auto& [p, mu] : blocks) fb.push_back({make_field(p), std::move(mu)});
    return FlowPotential(dim, std::move(quad), std::move(fb), kind, {0.0, T});
}

/// 2-D flow |q|^2/2 + sum_k t^k p_{2k}(a, b) over the listed k; all blocks share
/// the invariant g = (a q1^2 - b q2^2)/(q1 q2).
inline FlowPotential exa2d_flow(const std::vector<int>& ks, const Rational& a, const Rational& b, double T) {
    std::vector<std::pair<HomogeneousPolynomial, TimePolynomial>> blocks;
    for (int k : ks) {
        auto fam = family_p2_even(k, a, b);
        if (fam.degenerate) throw InvalidParameter("even family degenerate at k=" + std::to_string(k) + "; use a derivative solution");
        blocks.emplace_back(std::move(fam.poly), TimePolynomial::power(k));
    }
    return polynomial_flow(2, std::move(blocks), T);
}

/// |q|^2/2 + mu4(t) p4(d, c) + mu6(t) p6(d, c); defaults mu4 = t^2, mu6 = t^3.
inline FlowPotential pd46_flow(int d, const Rational& c, double T, TimePolynomial mu4 = TimePolynomial::power(2),
                               TimePolynomial mu6 = TimePolynomial::power(3)) {
    return polynomial_flow(d, {{family_pd4(d, c), std::move(mu4)}, {family_pd6(d, c), std::move(mu6)}}, T);
}

/// |q|^2/2 + sum_{n=2}^{n_max} t^n p3_{2n}(c) in d = 3.
inline FlowPotential xpoly_flow(const Rational& c, int n_max, double T) {
    std::vector<std::pair<HomogeneousPolynomial, TimePolynomial>> blocks;
    for (int n = 2; n <= n_max; ++n) blocks.emplace_back(family_p3_2n(n, c), TimePolynomial::power(n));
    return polynomial_flow(3, std::move(blocks), T);
}

/// (|q|^2)^n in dimension d.
inline HomogeneousPolynomial radial_power(int d, int n) {
    HomogeneousPolynomial r2(d, 2);
    for (int i = 0; i < d; ++i) {
        MultiIndex e(d, 0);
        e[i] = 2;
        r2.add_term(e, 1);
    }
    HomogeneousPolynomial out = HomogeneousPolynomial::monomial(MultiIndex(d, 0), 1);
    for (int k = 0; k < n; ++k) out = out * r2;
    return out;
}

/// mu2(t)|q|^2/2 + sum_n mu_n(t) |q|^{2n}: every block is spherically symmetric.
inline FlowPotential radial_flow(int d, TimePolynomial quad, std::vector<std::pair<int, TimePolynomial>> powers,
                                 double T) {
    std::vector<std::pair<HomogeneousPolynomial, TimePolynomial>> blocks;
    for (auto& [n, mu] : powers) blocks.emplace_back(radial_power(d, n), std::move(mu));
    return polynomial_flow(d, std::move(blocks), T, FlowKind::Radial, std::move(quad));
}

/// |q|^2/2 + t q1^2 q2^2 + t^2 q1^4: a convex potential flow whose Hessians at
/// different times do not commute.
inline FlowPotential control_flow(double T) {
    return polynomial_flow(2,
                           {{HomogeneousPolynomial::monomial({2, 2}, 1), TimePolynomial::power(1)},
                            {HomogeneousPolynomial::monomial({4, 0}, 1), TimePolynomial::power(2)}},
                           T, FlowKind::Custom);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const FlowPotential& f) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : f.blocks()) {
        nlohmann::json jb = b.field->to_json();
        if (jb.is_object() && jb.value("gridded", false)) {
            jb["mu"] = to_json(b.mu);
        } else {
            jb = {{"poly", jb}, {"mu", to_json(b.mu)}};
        }
        blocks.push_back(std::move(jb));
    }
    return {{"dim", f.dim()},
            {"kind", to_string(f.kind())},
            {"quad_mu", to_json(f.quad_mu())},
            {"blocks", blocks},
            {"time_range", {f.time_range()[0], f.time_range()[1]}}};
}

inline FlowPotential flow_from_json(const nlohmann::json& j) {
    try {
        const int dim = j.at("dim").get<int>();
        std::vector<FlowBlock> blocks;
        for (const auto& b : j.at("blocks")) {
            FieldPtr field = b.value("gridded", false) ? field_from_json(b) : field_from_json(b.at("poly"));
            blocks.push_back({std::move(field), time_polynomial_from_json(b.at("mu"))});
        }
        const auto tr = j.at("time_range").get<std::vector<double>>();
        if (tr.size() != 2) throw InvalidParameter("time_range must be [t0, T]");
        return FlowPotential(dim, time_polynomial_from_json(j.at("quad_mu")), std::move(blocks),
                             flow_kind_from_string(j.value("kind", std::string("custom"))), {tr[0], tr[1]});
    } catch (const nlohmann::json::exception& e) {
        throw InvalidParameter(std::string("malformed flow spec: ") + e.what());
    }
}

} // namespace omniflow
