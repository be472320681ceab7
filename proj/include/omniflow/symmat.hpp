#pragma once

// Symmetric-matrix core: commutators, eigenframes, and the invariants of a
// symmetric matrix that depend only on its set of eigendirections.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniflow/error.hpp"

namespace omniflow {

/// Dense d x d symmetric matrix. Entries can only be written in symmetric
/// pairs, so symmetry holds exactly.
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    explicit SymmetricMatrix(int dim) : m_(Eigen::MatrixXd::Zero(dim, dim)) {
        if (dim < 1) throw InvalidParameter("matrix dimension must be positive");
    }

    /// Symmetrizes `m` from its upper triangle.
    static SymmetricMatrix from_upper(const Eigen::MatrixXd& m) {
        if (m.rows() != m.cols()) throw DimensionMismatch("matrix is not square");
        SymmetricMatrix s(static_cast<int>(m.rows()));
        for (int i = 0; i < s.dim(); ++i)
            for (int j = i; j < s.dim(); ++j) s.set(i, j, m(i, j));
        return s;
    }

    /// Row-major upper triangle, d(d+1)/2 entries.
    static SymmetricMatrix from_upper_list(int dim, const std::vector<double>& upper) {
        if (upper.size() != static_cast<std::size_t>(dim * (dim + 1) / 2))
            throw DimensionMismatch("upper-triangle list has wrong length");
        SymmetricMatrix s(dim);
        std::size_t k = 0;
        for (int i = 0; i < dim; ++i)
            for (int j = i; j < dim; ++j) s.set(i, j, upper[k++]);
        return s;
    }

    static SymmetricMatrix identity(int dim) {
        SymmetricMatrix s(dim);
        s.m_.setIdentity();
        return s;
    }

    int dim() const noexcept { return static_cast<int>(m_.rows()); }
    double operator()(int i, int j) const { return m_(i, j); }
    void set(int i, int j, double v) {
        m_(i, j) = v;
        m_(j, i) = v;
    }
    void add(int i, int j, double v) {
        m_(i, j) += v;
        if (i != j) m_(j, i) += v;
    }

    const Eigen::MatrixXd& matrix() const noexcept { return m_; }
    double frobenius() const { return m_.norm(); }

    std::vector<double> upper_list() const {
        std::vector<double> out;
        for (int i = 0; i < dim(); ++i)
            for (int j = i; j < dim(); ++j) out.push_back(m_(i, j));
        return out;
    }

    SymmetricMatrix& operator+=(const SymmetricMatrix& o) {
        check_same(o);
        m_ += o.m_;
        return *this;
    }
    SymmetricMatrix& operator*=(double s) {
        m_ *= s;
        return *this;
    }
    friend SymmetricMatrix operator+(SymmetricMatrix a, const SymmetricMatrix& b) { return a += b; }
    friend SymmetricMatrix operator*(double s, SymmetricMatrix a) { return a *= s; }

    /// Symmetric powers H^p, p >= 0.
    SymmetricMatrix power(int p) const {
        Eigen::MatrixXd r = Eigen::MatrixXd::Identity(dim(), dim());
        for (int i = 0; i < p; ++i) r = r * m_;
        return from_upper(r);
    }

private:
    void check_same(const SymmetricMatrix& o) const {
        if (o.dim() != dim()) throw DimensionMismatch("symmetric matrices of different dimension");
    }

    Eigen::MatrixXd m_;
};

struct CommutatorResult {
    Eigen::MatrixXd value; // a*b - b*a, antisymmetric
    double defect = 0.0;   // |ab - ba|_F / (|a|_F |b|_F)
};

inline CommutatorResult commutator(const SymmetricMatrix& a, const SymmetricMatrix& b) {
    if (a.dim() != b.dim()) throw DimensionMismatch("commutator of matrices of different dimension");
    const Eigen::MatrixXd ab = a.matrix() * b.matrix();
    // b*a is the transpose of a*b for symmetric inputs, so the result is exactly antisymmetric.
    CommutatorResult r{ab - ab.transpose(), 0.0};
    const double na = a.frobenius();
    const double nb = b.frobenius();
    if (na > 0.0 && nb > 0.0) r.defect = r.value.norm() / (na * nb);
    return r;
}

/// Eigen-decomposition with a deterministic ordering and sign convention.
struct EigenFrame {
    Eigen::VectorXd eigenvalues;  // ascending
    Eigen::MatrixXd eigenvectors; // column i pairs with eigenvalues[i]
    bool distinct = false;        // min gap > 1e-8 |H|_F
    double min_gap = 0.0;

    int dim() const noexcept { return static_cast<int>(eigenvalues.size()); }
    Eigen::VectorXd vector(int i) const { return eigenvectors.col(i); }
};

inline constexpr double kDistinctGapTolerance = 1e-8;

/// Flips `v` so that its largest-magnitude component is positive.
inline void normalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
}

inline EigenFrame eigenframe(const SymmetricMatrix& h) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h.matrix());
    EigenFrame f;
    f.eigenvalues = solver.eigenvalues();
    f.eigenvectors = solver.eigenvectors();
    for (int i = 0; i < f.dim(); ++i) {
        f.eigenvectors.col(i).normalize();
        normalize_sign(f.eigenvectors.col(i));
    }
    f.min_gap = std::numeric_limits<double>::infinity();
    for (int i = 1; i < f.dim(); ++i) f.min_gap = std::min(f.min_gap, f.eigenvalues(i) - f.eigenvalues(i - 1));
    if (f.dim() < 2) f.min_gap = 0.0;
    f.distinct = f.dim() >= 2 && f.min_gap > kDistinctGapTolerance * h.frobenius();
    return f;
}

// ---------------------------------------------------------------------------
// Eigendirection invariants
//
// gamma^{(d,k)}_{mn} = e_k(beta_{mn,1}, ..., beta_{mn,d}) where
// beta_{mn,i} = h_m(lambda_i) / h_n(lambda_i) and e_k is the elementary
// symmetric polynomial of degree k. Component indices m, n are 0-based here;
// reports label them 1-based.
// ---------------------------------------------------------------------------

/// Value of an invariant; std::nullopt marks a pole (a vanishing denominator).
using InvariantValue = std::optional<double>;

inline constexpr double kPoleTolerance = 1e-12;

/// e_1..e_d of the given values; result[k] is e_k, result[0] = 1.
inline std::vector<double> elementary_symmetric(const std::vector<double>& y) {
    std::vector<double> e(y.size() + 1, 0.0);
    e[0] = 1.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t k = i + 1; k >= 1; --k) e[k] += e[k - 1] * y[i];
    return e;
}

/// All e_k of the ratios beta_{mn,i} for one (m, n) pair, or nullopt on a pole.
inline std::optional<std::vector<double>> beta_symmetric_sums(const EigenFrame& frame, int m, int n) {
    std::vector<double> beta(frame.dim());
    for (int i = 0; i < frame.dim(); ++i) {
        const double hn = frame.eigenvectors(n, i);
        if (std::abs(hn) < kPoleTolerance) return std::nullopt;
        beta[i] = frame.eigenvectors(m, i) / hn;
    }
    return elementary_symmetric(beta);
}

inline void check_invariant_indices(int dim, int k, int m, int n) {
    if (k < 1 || k > dim) throw InvalidParameter("invariant degree k must satisfy 1 <= k <= d");
    if (m < 0 || n < 0 || m >= dim || n >= dim) throw InvalidParameter("invariant component index out of range");
    if (m == n) throw InvalidParameter("invariant requires m != n");
}

inline InvariantValue gamma_invariant(const EigenFrame& frame, int k, int m, int n) {
    check_invariant_indices(frame.dim(), k, m, n);
    auto sums = beta_symmetric_sums(frame, m, n);
    if (!sums) return std::nullopt;
    return (*sums)[k];
}

inline InvariantValue gamma_invariant(const SymmetricMatrix& h, int k, int m, int n) {
    return gamma_invariant(eigenframe(h), k, m, n);
}

/// Every gamma^{(d,k)}_{mn} of one matrix.
struct InvariantSet {
    int dim = 0;
    std::map<std::tuple<int, int, int>, InvariantValue> values; // (k, m, n), m and n 0-based
    /// e_k of |beta_{mn,i}|: the size of the terms summed in each value, which
    /// bounds its rounding error.
    std::map<std::tuple<int, int, int>, double> magnitudes;

    InvariantValue get(int k, int m, int n) const {
        auto it = values.find({k, m, n});
        if (it == values.end()) throw InvalidParameter("invariant index not in set");
        return it->second;
    }
    bool has_pole() const {
        return std::any_of(values.begin(), values.end(), [](const auto& kv) { return !kv.second; });
    }
};

inline InvariantSet invariant_set(const EigenFrame& frame) {
    InvariantSet set;
    set.dim = frame.dim();
    for (int m = 0; m < set.dim; ++m)
        for (int n = 0; n < set.dim; ++n) {
            if (m == n) continue;
            auto sums = beta_symmetric_sums(frame, m, n);
            std::vector<double> mags(set.dim + 1, 0.0);
            if (sums) {
                std::vector<double> abs_beta(set.dim);
                for (int i = 0; i < set.dim; ++i) abs_beta[i] = std::abs(frame.eigenvectors(m, i) / frame.eigenvectors(n, i));
                mags = elementary_symmetric(abs_beta);
            }
            for (int k = 1; k <= set.dim; ++k) {
                set.values[{k, m, n}] = sums ? InvariantValue((*sums)[k]) : std::nullopt;
                set.magnitudes[{k, m, n}] = mags[k];
            }
        }
    return set;
}

inline InvariantSet invariant_set(const SymmetricMatrix& h) { return invariant_set(eigenframe(h)); }

// ---------------------------------------------------------------------------
// Closed forms for d = 3 (rational in the matrix entries).
// ---------------------------------------------------------------------------

namespace detail {

struct Closed3 {
    InvariantValue g1; // gamma^{(3,1)}_{21}
    InvariantValue g3; // gamma^{(3,3)}_{21}
};

inline Closed3 closed3(const Eigen::Matrix3d& H, double norm) {
    const double h11 = H(0, 0), h22 = H(1, 1), h33 = H(2, 2);
    const double h12 = H(0, 1), h13 = H(0, 2), h23 = H(1, 2);
    const double den = (h22 - h33) * h12 * h13 + (h13 * h13 - h12 * h12) * h23;
    const double num3 = (h11 - h33) * h12 * h23 + (h23 * h23 - h12 * h12) * h13;
    Closed3 out;
    const double n3 = norm * norm * norm;
    if (std::abs(den) < kPoleTolerance * n3) return out;
    out.g3 = -num3 / den;
    if (std::abs(h12) < kPoleTolerance * norm) return out;
    out.g1 = (h22 - h11) / h12 + (h13 / h12) * ((h11 - h22) * h13 * h23 + (h23 * h23 - h13 * h13) * h12) / den +
             num3 / den;
    return out;
}

inline Eigen::Matrix3d swap12(const Eigen::Matrix3d& H) {
    Eigen::Matrix3d P;
    P << 0, 1, 0, 1, 0, 0, 0, 0, 1;
    return P * H * P;
}

} // namespace detail

/// gamma^{(3,which)}_{21} evaluated from the rational closed forms.
inline InvariantValue gamma3_closed_form(const SymmetricMatrix& h, int which) {
    if (h.dim() != 3) throw DimensionMismatch("closed-form invariants need a 3x3 matrix");
    if (which < 1 || which > 3) throw InvalidParameter("closed-form invariant selector must be 1, 2 or 3");
    const Eigen::Matrix3d H = h.matrix();
    const double norm = h.frobenius();
    const auto c = detail::closed3(H, norm);
    if (which == 1) return c.g1;
    if (which == 3) return c.g3;
    // gamma^{(3,2)}_{21} = gamma^{(3,3)}_{21} * gamma^{(3,1)}_{12}
    const auto swapped = detail::closed3(detail::swap12(H), norm);
    if (!c.g3 || !swapped.g1) return std::nullopt;
    return *c.g3 * *swapped.g1;
}

/// The two eigendirection sets compatible with (gamma^{(3,k)}_{21}), k = 1..3.
/// The cubic beta^3 - g1 beta^2 + g2 beta - g3 = 0 gives the ratios beta_{21,i};
/// orthogonality fixes the third components only up to a common sign, so both
/// candidates are returned (columns are unit eigendirections). Empty when the
/// cubic has non-real roots or the orthogonality system is singular.
inline std::vector<Eigen::Matrix3d> candidate_frames(double g1, double g2, double g3) {
    Eigen::Matrix3d companion;
    companion << g1, -g2, g3, 1, 0, 0, 0, 1, 0;
    Eigen::EigenSolver<Eigen::Matrix3d> es(companion);
    std::array<double, 3> beta{};
    const auto roots = es.eigenvalues();
    for (int i = 0; i < 3; ++i) {
        if (std::abs(roots(i).imag()) > 1e-9 * (1.0 + std::abs(roots(i).real()))) return {};
        beta[i] = roots(i).real();
    }
    // (1, b_i, c_i).(1, b_j, c_j) = 0  =>  c_i c_j = -(1 + b_i b_j)
    const double p01 = -(1.0 + beta[0] * beta[1]);
    const double p02 = -(1.0 + beta[0] * beta[2]);
    const double p12 = -(1.0 + beta[1] * beta[2]);
    if (std::abs(p12) < 1e-300) return {};
    const double c0sq = p01 * p02 / p12;
    if (!(c0sq > 0.0)) return {};
    std::vector<Eigen::Matrix3d> out;
    for (double sign : {1.0, -1.0}) {
        const double c0 = sign * std::sqrt(c0sq);
        const std::array<double, 3> c{c0, p01 / c0, p02 / c0};
        Eigen::Matrix3d f;
        for (int i = 0; i < 3; ++i) {
            Eigen::Vector3d v(1.0, beta[i], c[i]);
            v.normalize();
            normalize_sign(v);
            f.col(i) = v;
        }
        out.push_back(f);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Relations between invariants
// ---------------------------------------------------------------------------

enum class RelationStatus { pass, fail, inconclusive };

inline const char* to_string(RelationStatus s) {
    switch (s) {
    case RelationStatus::pass: return "pass";
    case RelationStatus::fail: return "fail";
    case RelationStatus::inconclusive: return "inconclusive";
    }
    return "?";
}

struct RelationResult {
    std::string relation;
    double residual = 0.0; // |lhs - rhs|
    double scale = 0.0;    // sum of magnitudes of the terms involved
    RelationStatus status = RelationStatus::inconclusive;
};

struct RelationReport {
    std::vector<RelationResult> relations;
    RelationStatus status = RelationStatus::inconclusive;

    double max_relative_residual() const {
        double r = 0.0;
        for (const auto& rel : relations)
            if (rel.status != RelationStatus::inconclusive) r = std::max(r, rel.residual / rel.scale);
        return r;
    }
};

namespace detail {

inline std::string label(const char* family, std::initializer_list<int> idx) {
    std::string s = family;
    s += "(";
    bool first = true;
    for (int i : idx) {
        if (!first) s += ",";
        s += std::to_string(i);
        first = false;
    }
    return s + ")";
}

class RelationBuilder {
public:
    RelationBuilder(const InvariantSet& set, double tol) : set_(set), tol_(tol) {}

    double g(int k, int m, int n) {
        auto v = set_.get(k, m, n);
        if (!v) {
            pole_ = true;
            return 0.0;
        }
        return *v;
    }

    double mag(int k, int m, int n) const { return set_.magnitudes.at({k, m, n}); }

    /// Records lhs - rhs with `scale` = sum of term magnitudes (pole flag consumed).
    void record(std::string name, double lhs, double rhs, double scale) {
        RelationResult r;
        r.relation = std::move(name);
        if (pole_) {
            r.status = RelationStatus::inconclusive;
            r.residual = std::numeric_limits<double>::quiet_NaN();
        } else {
            r.residual = std::abs(lhs - rhs);
            r.scale = std::max(scale, std::numeric_limits<double>::min());
            r.status = r.residual <= tol_ * r.scale ? RelationStatus::pass : RelationStatus::fail;
        }
        pole_ = false;
        report.relations.push_back(std::move(r));
    }

    RelationReport report;

private:
    const InvariantSet& set_;
    double tol_;
    bool pole_ = false;
};

} // namespace detail

/// Checks every listed relation between the invariants of `h`. Index labels in
/// the report are 1-based.
inline RelationReport check_relations(const SymmetricMatrix& h, double tol) {
    const int d = h.dim();
    if (d < 2) throw InvalidParameter("relations need d >= 2");
    const EigenFrame frame = eigenframe(h);
    RelationReport out;
    if (!frame.distinct) {
        out.relations.push_back({"distinct-eigenvalues", 0.0, 0.0, RelationStatus::inconclusive});
        out.status = RelationStatus::inconclusive;
        return out;
    }
    const InvariantSet set = invariant_set(frame);
    detail::RelationBuilder b(set, tol);
    using detail::label;

    for (int m = 0; m < d; ++m)
        for (int n = 0; n < d; ++n) {
            if (m == n) continue;
            // gamma^{(d,d)}_{mn} gamma^{(d,d)}_{nm} = 1
            if (m < n) {
                const double x = b.g(d, m, n), y = b.g(d, n, m);
                b.record(label("prodrel", {m + 1, n + 1}), x * y, 1.0, std::abs(x * y) + 1.0);
            }
            // gamma^{(d,d)}_{ml} gamma^{(d,d)}_{ln} = gamma^{(d,d)}_{mn}
            for (int l = 0; l < d; ++l) {
                if (l == m || l == n) continue;
                const double x = b.g(d, m, l), y = b.g(d, l, n), z = b.g(d, m, n);
                b.record(label("prodrel3", {m + 1, l + 1, n + 1}), x * y, z, std::abs(x * y) + std::abs(z));
            }
            // gamma^{(d,k)}_{mn} = gamma^{(d,d)}_{mn} gamma^{(d,d-k)}_{nm}
            for (int k = 1; k < d; ++k) {
                const double lhs = b.g(k, m, n), x = b.g(d, m, n), y = b.g(d - k, n, m);
                b.record(label("hessdk", {k, m + 1, n + 1}), lhs, x * y,
                         std::abs(lhs) + std::abs(x * y) + b.mag(k, m, n) + b.mag(d, m, n) * b.mag(d - k, n, m));
            }
        }

    // sum_{m != n} gamma^{(d,2)}_{mn} = -d(d-1)/2
    const double target = -0.5 * d * (d - 1);
    for (int n = 0; n < d; ++n) {
        double sum = 0.0, scale = std::abs(target);
        for (int m = 0; m < d; ++m) {
            if (m == n) continue;
            const double v = b.g(2, m, n);
            sum += v;
            scale += std::abs(v) + b.mag(2, m, n);
        }
        b.record(label("orthogonality", {n + 1}), sum, target, scale);
    }

    // sum_n sum_{m != n} (H^p)_{mn} gamma^{(d,1)}_{mn} = 0, p = 1..d-1
    for (int p = 1; p < d; ++p) {
        const SymmetricMatrix hp = h.power(p);
        double sum = 0.0, scale = 0.0;
        for (int n = 0; n < d; ++n)
            for (int m = 0; m < d; ++m) {
                if (m == n) continue;
                const double term = hp(m, n) * b.g(1, m, n);
                sum += term;
                scale += std::abs(term) + std::abs(hp(m, n)) * b.mag(1, m, n);
            }
        b.record(label("powH", {p}), sum, 0.0, scale);
    }

    // d = 3: g1_ab + g3_ab + g1_ba + g3_ba + g3_ca g3_cb = 0 for every labelling
    if (d == 3) {
        const std::array<std::array<int, 3>, 3> perms{{{1, 0, 2}, {2, 1, 0}, {2, 0, 1}}};
        for (const auto& [a, bb, c] : perms) {
            const double t1 = b.g(1, a, bb), t2 = b.g(3, a, bb), t3 = b.g(1, bb, a), t4 = b.g(3, bb, a);
            const double t5 = b.g(3, c, a) * b.g(3, c, bb);
            b.record(label("impdouble", {a + 1, bb + 1, c + 1}), t1 + t2 + t3 + t4 + t5, 0.0,
                     std::abs(t1) + std::abs(t2) + std::abs(t3) + std::abs(t4) + std::abs(t5) + b.mag(1, a, bb) +
                         b.mag(3, a, bb) + b.mag(1, bb, a) + b.mag(3, bb, a) + b.mag(3, c, a) * b.mag(3, c, bb));
        }
    }

    out = std::move(b.report);
    bool any_fail = false, any_inconclusive = false;
    for (const auto& r : out.relations) {
        any_fail |= r.status == RelationStatus::fail;
        any_inconclusive |= r.status == RelationStatus::inconclusive;
    }
    out.status = any_fail ? RelationStatus::fail
                          : (any_inconclusive ? RelationStatus::inconclusive : RelationStatus::pass);
    return out;
}

struct CodiagonalizationResult {
    bool commuting = false;
    double defect = 0.0;
    /// Max off-diagonal of U^T b U relative to |b|_F, in the eigenframe U of a.
    /// Only computed when the matrices commute and a has distinct eigenvalues.
    std::optional<double> frame_defect;
};

inline CodiagonalizationResult codiagonalizable(const SymmetricMatrix& a, const SymmetricMatrix& b, double tol) {
    const auto c = commutator(a, b);
    CodiagonalizationResult r;
    r.defect = c.defect;
    r.commuting = c.defect < tol;
    if (!r.commuting) return r;
    const EigenFrame fa = eigenframe(a);
    if (!fa.distinct) return r;
    const Eigen::MatrixXd rotated = fa.eigenvectors.transpose() * b.matrix() * fa.eigenvectors;
    double off = 0.0;
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j)
            if (i != j) off = std::max(off, std::abs(rotated(i, j)));
    const double nb = b.frobenius();
    r.frame_defect = nb > 0.0 ? off / nb : 0.0;
    if (*r.frame_defect >= tol) r.commuting = false;
    return r;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const SymmetricMatrix& h) { return {{"dim", h.dim()}, {"upper", h.upper_list()}}; }

/// Reads {"dim": d, "upper": [...]} or a full array of rows (must be symmetric).
inline SymmetricMatrix symmetric_matrix_from_json(const nlohmann::json& j) {
    try {
        if (j.is_object()) return SymmetricMatrix::from_upper_list(j.at("dim").get<int>(), j.at("upper").get<std::vector<double>>());
        const auto rows = j.get<std::vector<std::vector<double>>>();
        const int d = static_cast<int>(rows.size());
        Eigen::MatrixXd m(d, d);
        for (int i = 0; i < d; ++i) {
            if (static_cast<int>(rows[i].size()) != d) throw DimensionMismatch("matrix is not square");
            for (int k = 0; k < d; ++k) m(i, k) = rows[i][k];
        }
        if (m != m.transpose()) throw InvalidParameter("matrix is not symmetric");
        return SymmetricMatrix::from_upper(m);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidParameter(std::string("malformed matrix JSON: ") + e.what());
    }
}

inline nlohmann::json to_json(const RelationReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& rel : r.relations) {
        nlohmann::json row = {{"relation", rel.relation}, {"status", to_string(rel.status)}};
        row["residual"] = std::isnan(rel.residual) ? nlohmann::json(nullptr) : nlohmann::json(rel.residual);
        rows.push_back(std::move(row));
    }
    return {{"status", to_string(r.status)}, {"max_relative_residual", r.max_relative_residual()}, {"relations", rows}};
}

} // namespace omniflow
