#pragma once

// Omni-potentiality checks for a FlowPotential: commutation of Hessians at
// different times, symmetry of H^{-1} dH/dt (bi-potentiality), symmetry of
// the intermediate (t -> tau) Jacobian, eigenframe constancy, invariant
// constancy along trajectories, and Eulerian velocities via Newton inversion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "omniflow/flow.hpp"
#include "omniflow/parallel.hpp"
#include "omniflow/sampling.hpp"

namespace omniflow {

inline constexpr double kShellCrossingEigenvalue = 1e-6;
/// Eigenframes are compared only where the smallest eigenvalue gap of the
/// anisotropic Hessian exceeds this fraction of its norm.
inline constexpr double kFrameGapTolerance = 1e-4;

struct SamplingSpec {
    int num_points = 256;
    int num_time_pairs = 16;
    std::optional<Box> box;             // default: [-1, 1]^d
    std::optional<double> t_lo, t_hi;   // default: the flow's time range
    std::uint64_t seed = 20240917;
};

struct VerifyTolerances {
    double commutation = 1e-9;
    double bipotential = 1e-9;
    double intermediate = 1e-9;
    double eigenframe = 1e-9;
    double invariant = 1e-8;
};

struct ShellCrossingEvent {
    std::vector<double> q;
    double t = 0.0;
    double min_eigenvalue = 0.0;
};

struct DefectSite {
    std::vector<double> q;
    double t1 = 0.0, t2 = 0.0;
};

struct VerificationReport {
    int num_points = 0;
    int num_time_pairs = 0;
    std::uint64_t seed = 0;
    Box box;
    double t_lo = 0.0, t_hi = 0.0;

    double commutation_defect = 0.0;
    double bipotential_defect = 0.0;
    double intermediate_defect = 0.0;
    double eigenframe_drift = 0.0;  // radians
    double invariant_drift = 0.0;
    double min_eigenvalue = std::numeric_limits<double>::infinity();
    bool convexity_ok = true;

    DefectSite worst_commutation, worst_bipotential, worst_intermediate, worst_eigenframe;
    std::vector<double> min_eigenvalue_at;
    double min_eigenvalue_time = 0.0;
    std::vector<ShellCrossingEvent> shell_crossings;
    int frame_comparisons = 0;
    int invariant_comparisons = 0;

    bool passes(const VerifyTolerances& tol) const {
        return convexity_ok && shell_crossings.empty() && commutation_defect < tol.commutation &&
               bipotential_defect < tol.bipotential && intermediate_defect < tol.intermediate &&
               eigenframe_drift < tol.eigenframe;
    }
};

namespace detail {

/// Largest angle between matched unit vectors of two orthonormal frames
/// (columns), matching each column of `a` to the column of `b` with the
/// largest |dot|. Uses 2 asin(|v - s w| / 2) to keep accuracy for tiny angles.
inline double frame_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double worst = 0.0;
    for (int i = 0; i < a.cols(); ++i) {
        double best_dot = -1.0;
        int best = 0;
        for (int j = 0; j < b.cols(); ++j) {
            const double d = std::abs(a.col(i).dot(b.col(j)));
            if (d > best_dot) {
                best_dot = d;
                best = j;
            }
        }
        const double s = a.col(i).dot(b.col(best)) >= 0.0 ? 1.0 : -1.0;
        const double chord = (a.col(i) - s * b.col(best)).norm();
        worst = std::max(worst, 2.0 * std::asin(std::min(1.0, chord / 2.0)));
    }
    return worst;
}

/// Invariants tracked along trajectories: g = (H11 - H22)/H12 in d = 2,
/// gamma^{(d,k)}_{21} for k = 1..d otherwise.
inline std::vector<InvariantValue> trajectory_invariants(const SymmetricMatrix& a) {
    const int d = a.dim();
    const double norm = a.frobenius();
    if (d == 2) {
        const auto& m = a.matrix();
        if (norm == 0.0 || std::abs(m(0, 1)) < kPoleTolerance * norm) return {std::nullopt};
        return {(m(0, 0) - m(1, 1)) / m(0, 1)};
    }
    const EigenFrame f = eigenframe(a);
    std::vector<InvariantValue> out;
    if (norm == 0.0 || f.min_gap < kFrameGapTolerance * norm) return std::vector<InvariantValue>(d, std::nullopt);
    for (int k = 1; k <= d; ++k) out.push_back(gamma_invariant(f, k, 1, 0));
    return out;
}

inline double matrix_min_eigenvalue(const SymmetricMatrix& h) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.matrix(), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

/// |K C K|_F with K = H^{-1} and C antisymmetric.
inline double sandwiched_norm(const Eigen::MatrixXd& hinv, const Eigen::MatrixXd& c) {
    return (hinv * c * hinv).norm();
}

struct PointResult {
    double commutation = 0.0, bipotential = 0.0, intermediate = 0.0, frame = 0.0, invariant = 0.0;
    DefectSite at_comm, at_bip, at_inter, at_frame;
    double min_eig = std::numeric_limits<double>::infinity();
    double min_eig_t = 0.0;
    std::vector<ShellCrossingEvent> crossings;
    int frames = 0, invariants = 0;
};

} // namespace detail

/// Relative drift of the trajectory invariants: max |v - mean| / max(|mean|, 1)
/// over the listed times, per invariant, ignoring poles.
struct InvariantTrajectory {
    std::vector<double> times;
    std::vector<std::vector<InvariantValue>> values;  // [time][invariant]
    std::vector<std::optional<double>> mean;
    double drift = 0.0;
    int poles = 0;
};

inline InvariantTrajectory g_invariant_along_trajectory(const FlowPotential& flow, std::span<const double> q,
                                                        const std::vector<double>& times) {
    const auto ph = flow.at(q);
    InvariantTrajectory r;
    r.times = times;
    for (double t : times) r.values.push_back(detail::trajectory_invariants(ph.anisotropic(t)));
    const std::size_t n_inv = r.values.empty() ? 0 : r.values.front().size();
    r.mean.assign(n_inv, std::nullopt);
    for (std::size_t k = 0; k < n_inv; ++k) {
        double s = 0.0;
        int c = 0;
        for (const auto& row : r.values) {
            if (row[k]) {
                s += *row[k];
                ++c;
            } else {
                ++r.poles;
            }
        }
        if (c == 0) continue;
        const double mean = s / c;
        r.mean[k] = mean;
        for (const auto& row : r.values)
            if (row[k]) r.drift = std::max(r.drift, std::abs(*row[k] - mean) / std::max(std::abs(mean), 1.0));
    }
    return r;
}

/// Potentiality defect of the map from time t to time tau at label q:
/// |J - J^T|_F / |J|_F with J = H(tau) H(t)^{-1}.
inline double intermediate_map_symmetry(const FlowPotential& flow, std::span<const double> q, double t, double tau) {
    if (tau < t) throw InvalidParameter("intermediate map needs t <= tau");
    const auto ph = flow.at(q);
    const SymmetricMatrix ht = ph.hessian(t);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ht.matrix());
    if (detail::matrix_min_eigenvalue(ht) < kShellCrossingEigenvalue)
        throw ShellCrossing("Hessian singular or indefinite at time t", std::vector<double>(q.begin(), q.end()), t);
    const Eigen::MatrixXd hinv = ldlt.solve(Eigen::MatrixXd::Identity(flow.dim(), flow.dim()));
    const Eigen::MatrixXd j = ph.hessian(tau).matrix() * hinv;
    const double nj = j.norm();
    if (nj == 0.0) return 0.0;
    // J - J^T = H(t)^{-1} [A(t), A(tau)] H(t)^{-1}, exactly zero when tau = t.
    const auto c = commutator(ph.anisotropic(t), ph.anisotropic(tau));
    return detail::sandwiched_norm(hinv, c.value) / nj;
}

inline VerificationReport verify_omnipotential(const FlowPotential& flow, const SamplingSpec& spec = {}) {
    VerificationReport rep;
    const int d = flow.dim();
    rep.box = spec.box ? *spec.box : Box::cube(d, -1.0, 1.0);
    if (rep.box.dim() != d) throw DimensionMismatch("sampling box dimension differs from flow dimension");
    rep.t_lo = spec.t_lo.value_or(flow.time_range()[0]);
    rep.t_hi = spec.t_hi.value_or(flow.time_range()[1]);
    rep.num_points = spec.num_points;
    rep.num_time_pairs = spec.num_time_pairs;
    rep.seed = spec.seed;
    if (!(rep.t_lo < rep.t_hi)) throw InvalidParameter("verification needs a non-empty time interval");

    const auto points = sample_box(rep.box, spec.num_points, spec.seed);
    const auto pairs = sample_time_pairs(rep.t_lo, rep.t_hi, spec.num_time_pairs, spec.seed);
    std::vector<double> times;
    for (const auto& [a, b] : pairs) {
        times.push_back(a);
        times.push_back(b);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    auto time_index = [&](double t) {
        return static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), t) - times.begin());
    };

    std::vector<detail::PointResult> results(points.size());
    parallel_for(static_cast<int>(points.size()), [&](int pi) {
        const auto& q = points[pi];
        auto& r = results[pi];
        const auto ph = flow.at(q);
        const std::size_t nt = times.size();
        std::vector<SymmetricMatrix> A, Adot;
        std::vector<Eigen::MatrixXd> Hinv;
        std::vector<double> Hnorm;
        std::vector<char> ok(nt, 1);
        for (std::size_t k = 0; k < nt; ++k) {
            const double t = times[k];
            const SymmetricMatrix h = ph.hessian(t);
            A.push_back(ph.anisotropic(t));
            Adot.push_back(ph.anisotropic_dt(t));
            Hnorm.push_back(h.frobenius());
            const double lam = detail::matrix_min_eigenvalue(h);
            if (lam < r.min_eig) {
                r.min_eig = lam;
                r.min_eig_t = t;
            }
            if (lam < kShellCrossingEigenvalue) {
                ok[k] = 0;
                r.crossings.push_back({q, t, lam});
                Hinv.emplace_back();
                continue;
            }
            Hinv.push_back(h.matrix().ldlt().solve(Eigen::MatrixXd::Identity(d, d)));

            // bi-potentiality: M = H^{-1} Hdot, M - M^T = H^{-1} [Adot, A] H^{-1}
            const Eigen::MatrixXd m = Hinv.back() * ph.hessian_dt(t).matrix();
            const double nm = m.norm();
            if (nm > 0.0) {
                const double def = detail::sandwiched_norm(Hinv.back(), commutator(Adot.back(), A.back()).value) / nm;
                if (def > r.bipotential) {
                    r.bipotential = def;
                    r.at_bip = {q, t, t};
                }
            }
        }

        for (const auto& [t1, t2] : pairs) {
            const std::size_t i = time_index(t1), j = time_index(t2);
            if (!ok[i] || !ok[j]) continue;
            const auto c = commutator(A[i], A[j]);
            const double comm = c.value.norm() / (Hnorm[i] * Hnorm[j]);
            if (comm > r.commutation) {
                r.commutation = comm;
                r.at_comm = {q, t1, t2};
            }
            const Eigen::MatrixXd jac = ph.hessian(t2).matrix() * Hinv[i];
            const double nj = jac.norm();
            if (nj > 0.0) {
                const double inter = detail::sandwiched_norm(Hinv[i], c.value) / nj;
                if (inter > r.intermediate) {
                    r.intermediate = inter;
                    r.at_inter = {q, t1, t2};
                }
            }
        }

        // eigenframe and invariant constancy along the trajectory of q
        std::optional<EigenFrame> ref;
        double ref_t = 0.0;
        std::vector<std::vector<InvariantValue>> inv;
        for (std::size_t k = 0; k < nt; ++k) {
            if (!ok[k]) continue;
            const double na = A[k].frobenius();
            if (na == 0.0) continue;
            EigenFrame f = eigenframe(A[k]);
            if (f.min_gap < kFrameGapTolerance * na) continue;
            inv.push_back(detail::trajectory_invariants(A[k]));
            if (!ref) {
                ref = std::move(f);
                ref_t = times[k];
                continue;
            }
            ++r.frames;
            const double ang = detail::frame_angle(ref->eigenvectors, f.eigenvectors);
            if (ang > r.frame) {
                r.frame = ang;
                r.at_frame = {q, ref_t, times[k]};
            }
        }
        if (!inv.empty()) {
            for (std::size_t m = 0; m < inv.front().size(); ++m) {
                double s = 0.0;
                int c = 0;
                for (const auto& row : inv)
                    if (row[m]) {
                        s += *row[m];
                        ++c;
                    }
                if (c < 2) continue;
                const double mean = s / c;
                for (const auto& row : inv)
                    if (row[m]) r.invariant = std::max(r.invariant, std::abs(*row[m] - mean) / std::max(std::abs(mean), 1.0));
                r.invariants += c;
            }
        }
    });

    for (const auto& r : results) {
        if (r.commutation >= rep.commutation_defect) {
            rep.commutation_defect = r.commutation;
            rep.worst_commutation = r.at_comm;
        }
        if (r.bipotential >= rep.bipotential_defect) {
            rep.bipotential_defect = r.bipotential;
            rep.worst_bipotential = r.at_bip;
        }
        if (r.intermediate >= rep.intermediate_defect) {
            rep.intermediate_defect = r.intermediate;
            rep.worst_intermediate = r.at_inter;
        }
        if (r.frame >= rep.eigenframe_drift) {
            rep.eigenframe_drift = r.frame;
            rep.worst_eigenframe = r.at_frame;
        }
        rep.invariant_drift = std::max(rep.invariant_drift, r.invariant);
        if (r.min_eig < rep.min_eigenvalue) {
            rep.min_eigenvalue = r.min_eig;
            rep.min_eigenvalue_time = r.min_eig_t;
        }
        rep.shell_crossings.insert(rep.shell_crossings.end(), r.crossings.begin(), r.crossings.end());
        rep.frame_comparisons += r.frames;
        rep.invariant_comparisons += r.invariants;
    }
    for (std::size_t pi = 0; pi < points.size(); ++pi)
        if (results[pi].min_eig == rep.min_eigenvalue) {
            rep.min_eigenvalue_at = points[pi];
            break;
        }
    rep.convexity_ok = rep.min_eigenvalue > 0.0 && rep.shell_crossings.empty();
    return rep;
}

inline nlohmann::json to_json(const DefectSite& s) { return {{"q", s.q}, {"t1", s.t1}, {"t2", s.t2}}; }

inline nlohmann::json to_json(const VerificationReport& r) {
    nlohmann::json crossings = nlohmann::json::array();
    for (const auto& e : r.shell_crossings)
        crossings.push_back({{"q", e.q}, {"t", e.t}, {"min_eigenvalue", e.min_eigenvalue}});
    return {{"sampling",
             {{"num_points", r.num_points},
              {"num_time_pairs", r.num_time_pairs},
              {"seed", r.seed},
              {"box", {{"lo", r.box.lo}, {"hi", r.box.hi}}},
              {"time_range", {r.t_lo, r.t_hi}}}},
            {"commutation_defect", r.commutation_defect},
            {"bipotential_defect", r.bipotential_defect},
            {"intermediate_defect", r.intermediate_defect},
            {"eigenframe_drift", r.eigenframe_drift},
            {"invariant_drift", r.invariant_drift},
            {"min_eigenvalue", r.min_eigenvalue},
            {"min_eigenvalue_at", {{"q", r.min_eigenvalue_at}, {"t", r.min_eigenvalue_time}}},
            {"convexity_ok", r.convexity_ok},
            {"worst", {{"commutation", to_json(r.worst_commutation)},
                       {"bipotential", to_json(r.worst_bipotential)},
                       {"intermediate", to_json(r.worst_intermediate)},
                       {"eigenframe", to_json(r.worst_eigenframe)}}},
            {"frame_comparisons", r.frame_comparisons},
            {"invariant_comparisons", r.invariant_comparisons},
            {"shell_crossings", crossings}};
}

// ---------------------------------------------------------------------------
// Inverse map and Eulerian velocity
// ---------------------------------------------------------------------------

struct NewtonOptions {
    int max_iterations = 50;
    double tolerance = 1e-12;  // on |grad Phi(q) - x|, scaled by (1 + |x|)
};

struct Preimage {
    std::vector<double> q;
    int iterations = 0;
    double residual = 0.0;
};

/// Solves grad_q Phi(q, t) = x by damped Newton iteration from q0 = x.
inline Preimage inverse_map(const FlowPotential& flow, std::span<const double> x, double t,
                            const NewtonOptions& opt = {}) {
    const int d = flow.dim();
    if (static_cast<int>(x.size()) != d) throw DimensionMismatch("point dimension differs from flow dimension");
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), d);
    const double tol = opt.tolerance * (1.0 + xv.norm());
    std::vector<double> q(x.begin(), x.end());
    auto residual = [&](const std::vector<double>& p) {
        const auto m = flow.lagrangian_map(p, t);
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(m.data(), d) - xv);
    };
    Eigen::VectorXd r = residual(q);
    for (int it = 0; it <= opt.max_iterations; ++it) {
        if (r.norm() <= tol) return {q, it, r.norm()};
        if (it == opt.max_iterations) break;
        const Eigen::MatrixXd h = flow.hessian(q, t).matrix();
        const Eigen::VectorXd step = h.fullPivLu().solve(-r);
        if (!step.allFinite()) break;
        double lambda = 1.0;
        bool accepted = false;
        for (int halvings = 0; halvings < 40; ++halvings, lambda *= 0.5) {
            std::vector<double> trial(q);
            for (int i = 0; i < d; ++i) trial[i] += lambda * step(i);
            const Eigen::VectorXd rt = residual(trial);
            if (rt.norm() < r.norm()) {
                q = std::move(trial);
                r = rt;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    throw NoPreimage("Newton inversion did not converge (outside the image or past shell-crossing)",
                     std::vector<double>(x.begin(), x.end()), t);
}

struct EulerianVelocity {
    std::vector<double> q;      // Lagrangian preimage of x
    std::vector<double> v;      // velocity grad_q dPhi/dt at q
    Eigen::MatrixXd h_inv_hdot; // H^{-1} dH/dt at q
    double asymmetry = 0.0;     // |M - M^T|_F / |M|_F
    int iterations = 0;
    double residual = 0.0;
};

inline EulerianVelocity eulerian_velocity(const FlowPotential& flow, std::span<const double> x, double t,
                                          const NewtonOptions& opt = {}) {
    const auto pre = inverse_map(flow, x, t, opt);
    EulerianVelocity out;
    out.q = pre.q;
    out.iterations = pre.iterations;
    out.residual = pre.residual;
    out.v = flow.lagrangian_velocity(pre.q, t);
    const auto ph = flow.at(pre.q);
    const SymmetricMatrix h = ph.hessian(t);
    const Eigen::MatrixXd hinv = h.matrix().fullPivLu().inverse();
    out.h_inv_hdot = hinv * ph.hessian_dt(t).matrix();
    const double nm = out.h_inv_hdot.norm();
    if (nm > 0.0)
        out.asymmetry =
            detail::sandwiched_norm(hinv, commutator(ph.anisotropic_dt(t), ph.anisotropic(t)).value) / nm;
    return out;
}

} // namespace omniflow
