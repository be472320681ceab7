#pragma once

// Dense linear assignment on integer costs: forward auction with epsilon
// scaling, and the Hungarian (shortest augmenting path) method as an exact
// reference.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "omniflow/error.hpp"

namespace omniflow {

/// Row-major N x N integer cost matrix.
struct CostMatrix {
    int n = 0;
    std::vector<std::int64_t> c;
    std::int64_t operator()(int i, int j) const { return c[static_cast<std::size_t>(i) * n + j]; }
};

struct AssignmentResult {
    std::vector<int> sigma;  // row -> column
    std::int64_t cost = 0;   // sum of integer costs
    std::string method;
    double epsilon_final = 0.0;  // in integer cost units; 0 for exact methods
    long long iterations = 0;    // bids (auction) or augmentations (hungarian)
};

inline std::int64_t assignment_cost(const CostMatrix& m, const std::vector<int>& sigma) {
    std::int64_t s = 0;
    for (int i = 0; i < m.n; ++i) s += m(i, sigma[i]);
    return s;
}

inline void check_bijection(const std::vector<int>& sigma, int n) {
    if (static_cast<int>(sigma.size()) != n) throw InvalidParameter("assignment has the wrong length");
    std::vector<char> seen(n, 0);
    for (int j : sigma) {
        if (j < 0 || j >= n || seen[j]) throw InvalidParameter("assignment is not a bijection");
        seen[j] = 1;
    }
}

/// Minimum-cost assignment, O(N^3).
inline AssignmentResult hungarian(const CostMatrix& m) {
    const int n = m.n;
    constexpr std::int64_t inf = std::numeric_limits<std::int64_t>::max() / 4;
    // 1-based potentials u (rows), v (columns); p[j] = row matched to column j
    std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    AssignmentResult out;
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            std::int64_t delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const std::int64_t cur = m(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
        ++out.iterations;
    }
    out.sigma.assign(n, -1);
    for (int j = 1; j <= n; ++j) out.sigma[p[j] - 1] = j - 1;
    out.cost = assignment_cost(m, out.sigma);
    out.method = "hungarian";
    return out;
}

/// Forward (Gauss-Seidel) auction with epsilon scaling. Benefits are the
/// negated costs multiplied by N+2, so the final phase at epsilon = 1 amounts
/// to 1/(N+2) < 1/(N+1) in cost units and the result is optimal.
inline AssignmentResult auction(const CostMatrix& m) {
    const int n = m.n;
    AssignmentResult out;
    out.method = "auction";
    if (n == 0) return out;
    const std::int64_t scale = n + 2;
    std::int64_t cmax = 0;
    for (auto v : m.c) cmax = std::max(cmax, v);
    if (cmax > std::numeric_limits<std::int64_t>::max() / (8 * scale))
        throw InvalidParameter("integer costs too large for the auction");

    std::vector<std::int64_t> price(n, 0);
    std::vector<int> owner(n), assigned(n);
    std::int64_t eps = std::max<std::int64_t>(1, cmax * scale / 2);
    while (true) {
        std::fill(owner.begin(), owner.end(), -1);
        std::fill(assigned.begin(), assigned.end(), -1);
        std::vector<int> queue(n);
        for (int i = 0; i < n; ++i) queue[i] = n - 1 - i;
        while (!queue.empty()) {
            const int i = queue.back();
            queue.pop_back();
            // best and second-best value -scale*c - price
            std::int64_t best = std::numeric_limits<std::int64_t>::min(), second = best;
            int jbest = -1;
            for (int j = 0; j < n; ++j) {
                const std::int64_t val = -scale * m(i, j) - price[j];
                if (val > best) {
                    second = best;
                    best = val;
                    jbest = j;
                } else if (val > second) {
                    second = val;
                }
            }
            const std::int64_t incr = (n == 1 ? 0 : best - second) + eps;
            price[jbest] += incr;
            if (owner[jbest] >= 0) {
                assigned[owner[jbest]] = -1;
                queue.push_back(owner[jbest]);
            }
            owner[jbest] = i;
            assigned[i] = jbest;
            ++out.iterations;
        }
        if (eps == 1) break;
        eps = std::max<std::int64_t>(1, eps / 4);
    }
    out.sigma = assigned;
    out.cost = assignment_cost(m, out.sigma);
    out.epsilon_final = 1.0 / static_cast<double>(scale);
    return out;
}

} // namespace omniflow
