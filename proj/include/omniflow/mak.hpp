#pragma once

// Discrete quadratic-cost optimal transport between a uniform Lagrangian grid
// and its image under a flow (the Monge-Ampere-Kantorovich reconstruction).

#include <chrono>
#include <cmath>
#include <ctime>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniflow/assignment.hpp"
#include "omniflow/flow.hpp"
#include "omniflow/verify.hpp"

namespace omniflow {

using PointSet = std::vector<std::vector<double>>;

/// Regular node grid: n[a] nodes along axis a spanning [box.lo[a], box.hi[a]],
/// first axis varying fastest.
struct GridInfo {
    std::vector<int> n;
    Box box;

    int dim() const noexcept { return static_cast<int>(n.size()); }
    int size() const {
        int s = 1;
        for (int k : n) s *= k;
        return s;
    }
    double spacing(int a) const { return (box.hi[a] - box.lo[a]) / (n[a] - 1); }
    std::vector<int> index(int k) const {
        std::vector<int> idx(dim());
        for (int a = 0; a < dim(); ++a) {
            idx[a] = k % n[a];
            k /= n[a];
        }
        return idx;
    }
    int flat(const std::vector<int>& idx) const {
        int k = 0;
        for (int a = dim() - 1; a >= 0; --a) k = k * n[a] + idx[a];
        return k;
    }
    std::vector<double> point(int k) const {
        const auto idx = index(k);
        std::vector<double> q(dim());
        for (int a = 0; a < dim(); ++a) q[a] = box.lo[a] + idx[a] * spacing(a);
        return q;
    }
    PointSet points() const {
        PointSet out;
        for (int k = 0; k < size(); ++k) out.push_back(point(k));
        return out;
    }
};

inline GridInfo make_grid(int dim, int n, const Box& box) {
    if (n < 2) throw InvalidParameter("grid needs at least 2 nodes per axis");
    if (box.dim() != dim) throw DimensionMismatch("grid box dimension differs from the flow dimension");
    return GridInfo{std::vector<int>(dim, n), box};
}

/// Recognizes a point set laid out as a regular grid (first axis fastest).
inline std::optional<GridInfo> detect_grid(const PointSet& pts, double rtol = 1e-9) {
    if (pts.empty()) return std::nullopt;
    const int d = static_cast<int>(pts[0].size());
    GridInfo g{std::vector<int>(d, 0), Box{pts[0], pts[0]}};
    for (const auto& p : pts)
        for (int a = 0; a < d; ++a) {
            g.box.lo[a] = std::min(g.box.lo[a], p[a]);
            g.box.hi[a] = std::max(g.box.hi[a], p[a]);
        }
    // count of nodes along each axis from the run length of the first axis, etc.
    int stride = 1;
    for (int a = 0; a < d; ++a) {
        int count = 1;
        while (stride * count < static_cast<int>(pts.size()) && pts[stride * count][a] != pts[0][a]) {
            bool same_other = true;
            for (int b = a + 1; b < d; ++b) same_other = same_other && pts[stride * count][b] == pts[0][b];
            if (!same_other) break;
            ++count;
        }
        if (count < 2) return std::nullopt;
        g.n[a] = count;
        stride *= count;
    }
    if (g.size() != static_cast<int>(pts.size())) return std::nullopt;
    const double tol = rtol * (1.0 + g.box.diagonal());
    for (int k = 0; k < g.size(); ++k) {
        const auto q = g.point(k);
        for (int a = 0; a < d; ++a)
            if (std::abs(q[a] - pts[k][a]) > tol) return std::nullopt;
    }
    return g;
}

struct PointCloudPair {
    PointSet lagrangian, eulerian;
    std::optional<std::vector<int>> true_permutation;  // lagrangian index -> eulerian index

    int size() const noexcept { return static_cast<int>(lagrangian.size()); }
    int dim() const noexcept { return lagrangian.empty() ? 0 : static_cast<int>(lagrangian[0].size()); }
    void validate() const {
        if (lagrangian.size() != eulerian.size()) throw InvalidParameter("point clouds differ in size");
        for (const auto* set : {&lagrangian, &eulerian})
            for (const auto& p : *set) {
                if (static_cast<int>(p.size()) != dim()) throw DimensionMismatch("point clouds mix dimensions");
                for (double v : p)
                    if (!std::isfinite(v)) throw InvalidParameter("non-finite point coordinate");
            }
        if (true_permutation) check_bijection(*true_permutation, size());
    }
};

/// Lagrangian grid and its image under the flow at time t. Refuses if the
/// Hessian loses positive definiteness at any grid node for times in [0, t].
inline PointCloudPair generate_pair(const FlowPotential& flow, int grid_n, const Box& box, double t,
                                    int time_checks = 8) {
    const auto range = flow.time_range();
    if (t < range[0] || t > range[1]) throw InvalidParameter("time outside the flow's range");
    const auto grid = make_grid(flow.dim(), grid_n, box);
    PointCloudPair pair;
    pair.lagrangian = grid.points();
    pair.eulerian.resize(pair.lagrangian.size());
    const int n = static_cast<int>(pair.lagrangian.size());
    parallel_for(n, [&](int k) {
        const auto& q = pair.lagrangian[k];
        const auto ph = flow.at(q);
        for (int s = 1; s <= time_checks; ++s) {
            const double ts = t * s / time_checks;
            if (detail::matrix_min_eigenvalue(ph.hessian(ts)) < kShellCrossingEigenvalue)
                throw ShellCrossing("Lagrangian map is not invertible (Hessian not positive definite)", q, ts);
        }
        pair.eulerian[k] = flow.lagrangian_map(q, t);
    });
    std::vector<int> id(n);
    for (int k = 0; k < n; ++k) id[k] = k;
    pair.true_permutation = std::move(id);
    return pair;
}

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s;
}

/// Costs |x_j - q_i|^2 rounded to integers at 2^32 resolution relative to the largest.
inline CostMatrix integer_costs(const PointCloudPair& pair) {
    const int n = pair.size();
    std::vector<double> real(static_cast<std::size_t>(n) * n);
    double cmax = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double c = squared_distance(pair.eulerian[j], pair.lagrangian[i]);
            if (!std::isfinite(c)) throw InvalidParameter("non-finite transport cost");
            real[static_cast<std::size_t>(i) * n + j] = c;
            cmax = std::max(cmax, c);
        }
    CostMatrix m{n, std::vector<std::int64_t>(real.size(), 0)};
    if (cmax > 0.0)
        for (std::size_t k = 0; k < real.size(); ++k) m.c[k] = std::llround(real[k] / cmax * 4294967296.0);
    return m;
}

enum class SolverMethod { Auction, Hungarian };

inline std::string to_string(SolverMethod m) { return m == SolverMethod::Auction ? "auction" : "hungarian"; }

inline SolverMethod solver_from_string(const std::string& s) {
    if (s == "auction") return SolverMethod::Auction;
    if (s == "hungarian") return SolverMethod::Hungarian;
    throw InvalidParameter("unknown solver '" + s + "' (auction | hungarian)");
}

struct SolverOptions {
    SolverMethod method = SolverMethod::Auction;
    int hungarian_limit = 2000;
    int auction_limit = 100000;
};

struct TransportAssignment {
    std::vector<int> sigma;
    double total_cost = 0.0;          // sum |x_sigma(i) - q_i|^2
    std::int64_t integer_cost = 0;    // same sum in integerized units
    std::string method;
    double epsilon_final = 0.0;
    long long iterations = 0;
};

inline double total_cost(const PointCloudPair& pair, const std::vector<int>& sigma) {
    double s = 0.0;
    for (int i = 0; i < pair.size(); ++i) s += squared_distance(pair.eulerian[sigma[i]], pair.lagrangian[i]);
    return s;
}

inline TransportAssignment solve_assignment(const PointCloudPair& pair, const SolverOptions& opt = {}) {
    pair.validate();
    const int n = pair.size();
    if (opt.method == SolverMethod::Hungarian && n > opt.hungarian_limit)
        throw InvalidParameter("instance too large for the Hungarian solver");
    if (opt.method == SolverMethod::Auction && n > opt.auction_limit)
        throw InvalidParameter("instance too large for the auction solver");
    const auto costs = integer_costs(pair);
    const auto r = opt.method == SolverMethod::Hungarian ? hungarian(costs) : auction(costs);
    check_bijection(r.sigma, n);
    return {r.sigma, total_cost(pair, r.sigma), r.cost, r.method, r.epsilon_final, r.iterations};
}

struct ReconstructionReport {
    TransportAssignment assignment;
    std::optional<double> match_fraction;
    PointSet displacement;  // x_sigma(i) - q_i
    double runtime_ms = 0.0;
    std::string timestamp;
};

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline ReconstructionReport mak_reconstruct(const PointCloudPair& pair, const SolverOptions& opt = {}) {
    const auto start = std::chrono::steady_clock::now();
    ReconstructionReport rep;
    rep.assignment = solve_assignment(pair, opt);
    rep.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    rep.timestamp = utc_timestamp();
    const int n = pair.size();
    if (pair.true_permutation) {
        int hits = 0;
        for (int i = 0; i < n; ++i) hits += rep.assignment.sigma[i] == (*pair.true_permutation)[i];
        rep.match_fraction = n ? static_cast<double>(hits) / n : 1.0;
    }
    for (int i = 0; i < n; ++i) {
        const auto& x = pair.eulerian[rep.assignment.sigma[i]];
        std::vector<double> dq(x.size());
        for (std::size_t a = 0; a < x.size(); ++a) dq[a] = x[a] - pair.lagrangian[i][a];
        rep.displacement.push_back(std::move(dq));
    }
    return rep;
}

/// Reorders the Eulerian cloud by a seeded random permutation, carrying the
/// ground truth along.
inline PointCloudPair shuffle_eulerian(const PointCloudPair& pair, std::uint64_t seed) {
    const int n = pair.size();
    std::vector<int> perm(n);  // new position -> old index
    for (int k = 0; k < n; ++k) perm[k] = k;
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> where(n);
    PointCloudPair out;
    out.lagrangian = pair.lagrangian;
    out.eulerian.resize(n);
    for (int k = 0; k < n; ++k) {
        out.eulerian[k] = pair.eulerian[perm[k]];
        where[perm[k]] = k;
    }
    if (pair.true_permutation) {
        std::vector<int> truth(n);
        for (int i = 0; i < n; ++i) truth[i] = where[(*pair.true_permutation)[i]];
        out.true_permutation = std::move(truth);
    }
    return out;
}

struct MonotonicityCheck {
    int checked = 0;
    int violations = 0;
};

/// Random 2-swap test on the integerized costs: no pair (i, j) may lower the
/// cost by exchanging partners.
inline MonotonicityCheck cyclical_monotonicity_check(const PointCloudPair& pair, const std::vector<int>& sigma,
                                                     int samples = 10000, std::uint64_t seed = 1) {
    const auto m = integer_costs(pair);
    MonotonicityCheck out;
    if (m.n < 2) return out;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, m.n - 1);
    for (int s = 0; s < samples; ++s) {
        const int i = pick(rng), j = pick(rng);
        if (i == j) continue;
        ++out.checked;
        if (m(i, sigma[i]) + m(j, sigma[j]) > m(i, sigma[j]) + m(j, sigma[i])) ++out.violations;
    }
    return out;
}

/// -div_q of the assigned displacement on the Lagrangian grid: central
/// differences inside, second-order one-sided differences on the faces.
inline std::vector<double> displacement_divergence(const PointCloudPair& pair, const TransportAssignment& a) {
    const auto grid = detect_grid(pair.lagrangian);
    if (!grid) throw InvalidParameter("lagrangian points do not form a regular grid");
    const int n = pair.size(), d = pair.dim();
    auto disp = [&](int k, int comp) { return pair.eulerian[a.sigma[k]][comp] - pair.lagrangian[k][comp]; };
    std::vector<double> out(n, 0.0);
    for (int k = 0; k < n; ++k) {
        const auto idx = grid->index(k);
        double div = 0.0;
        for (int ax = 0; ax < d; ++ax) {
            const int m = grid->n[ax];
            const double h = grid->spacing(ax);
            auto at = [&](int i) {
                auto j = idx;
                j[ax] = i;
                return disp(grid->flat(j), ax);
            };
            const int i = idx[ax];
            if (m == 2) div += (at(1) - at(0)) / h;
            else if (i == 0) div += (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h);
            else if (i == m - 1) div += (3 * at(m - 1) - 4 * at(m - 2) + at(m - 3)) / (2 * h);
            else div += (at(i + 1) - at(i - 1)) / (2 * h);
        }
        out[k] = -div;
    }
    return out;
}

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

/// One point per line, comma- or whitespace-separated; '#' starts a comment.
inline PointSet read_points_csv(std::istream& is) {
    PointSet pts;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        for (char& c : line)
            if (c == ',') c = ' ';
        std::istringstream ss(line);
        std::vector<double> p;
        std::string tok;
        while (ss >> tok) {
            try {
                std::size_t used = 0;
                p.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw InvalidParameter("bad number '" + tok + "' on line " + std::to_string(lineno));
            }
        }
        if (p.empty()) continue;
        if (!pts.empty() && p.size() != pts[0].size())
            throw DimensionMismatch("line " + std::to_string(lineno) + " has a different number of coordinates");
        pts.push_back(std::move(p));
    }
    return pts;
}

inline void write_points_csv(std::ostream& os, const PointSet& pts) {
    os.precision(17);
    for (const auto& p : pts) {
        for (std::size_t a = 0; a < p.size(); ++a) os << (a ? "," : "") << p[a];
        os << "\n";
    }
}

inline std::vector<int> read_permutation(std::istream& is) {
    std::vector<int> perm;
    for (const auto& p : read_points_csv(is)) {
        if (p.size() != 1 || p[0] != std::floor(p[0])) throw InvalidParameter("permutation file needs one integer per line");
        perm.push_back(static_cast<int>(p[0]));
    }
    return perm;
}

/// q coordinates followed by the value, one grid point per line.
inline void write_divergence_csv(std::ostream& os, const PointCloudPair& pair, const std::vector<double>& div) {
    os.precision(17);
    for (int a = 0; a < pair.dim(); ++a) os << "q" << a + 1 << ",";
    os << "neg_div_displacement\n";
    for (int k = 0; k < pair.size(); ++k) {
        for (double v : pair.lagrangian[k]) os << v << ",";
        os << div[k] << "\n";
    }
}

/// Report JSON; the timing block is excluded from determinism comparisons.
inline nlohmann::json to_json(const ReconstructionReport& r) {
    nlohmann::json j = {{"total_cost", r.assignment.total_cost},
                        {"integer_cost", r.assignment.integer_cost},
                        {"solver", r.assignment.method},
                        {"epsilon_final", r.assignment.epsilon_final},
                        {"iterations", r.assignment.iterations},
                        {"num_points", r.assignment.sigma.size()},
                        {"timing", {{"runtime_ms", r.runtime_ms}, {"timestamp", r.timestamp}}}};
    j["match_fraction"] = r.match_fraction ? nlohmann::json(*r.match_fraction) : nlohmann::json(nullptr);
    return j;
}

} // namespace omniflow
