#pragma once

// Low-discrepancy sample sets used by the verification routines: Halton
// points with a seeded Cranley-Patterson rotation, mapped to boxes, time
// intervals and unit spheres.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "omniflow/error.hpp"

namespace omniflow {

inline constexpr std::array<int, 16> kHaltonPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

/// Radical inverse of `index` in base `base`.
inline double radical_inverse(std::uint64_t index, int base) {
    const double inv = 1.0 / base;
    double f = inv, r = 0.0;
    while (index > 0) {
        r += f * static_cast<double>(index % base);
        index /= base;
        f *= inv;
    }
    return r;
}

/// Halton sequence in [0,1)^dim, shifted modulo 1 by a random vector drawn
/// from `seed`. The first point (index 0 of the raw sequence) is skipped.
class HaltonSampler {
public:
    HaltonSampler(int dim, std::uint64_t seed) : dim_(dim), shift_(dim, 0.0) {
        if (dim < 1 || dim > static_cast<int>(kHaltonPrimes.size()))
            throw InvalidParameter("Halton dimension must be in [1, 16]");
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& s : shift_) s = u(rng);
    }

    int dim() const noexcept { return dim_; }

    std::vector<double> point(std::uint64_t i) const {
        std::vector<double> p(dim_);
        for (int k = 0; k < dim_; ++k) {
            double v = radical_inverse(i + 1, kHaltonPrimes[k]) + shift_[k];
            p[k] = v - std::floor(v);
        }
        return p;
    }

private:
    int dim_;
    std::vector<double> shift_;
};

struct Box {
    std::vector<double> lo, hi;

    int dim() const noexcept { return static_cast<int>(lo.size()); }
    double diagonal() const {
        double s = 0.0;
        for (int i = 0; i < dim(); ++i) s += (hi[i] - lo[i]) * (hi[i] - lo[i]);
        return std::sqrt(s);
    }
    bool contains(const std::vector<double>& q, double pad = 0.0) const {
        for (int i = 0; i < dim(); ++i)
            if (q[i] < lo[i] - pad || q[i] > hi[i] + pad) return false;
        return true;
    }
    static Box cube(int dim, double lo, double hi) {
        return Box{std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
    }
};

inline std::vector<std::vector<double>> sample_box(const Box& box, int count, std::uint64_t seed) {
    if (box.lo.size() != box.hi.size()) throw DimensionMismatch("box corners differ in dimension");
    HaltonSampler h(box.dim(), seed);
    std::vector<std::vector<double>> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        auto p = h.point(i);
        for (int k = 0; k < box.dim(); ++k) p[k] = box.lo[k] + p[k] * (box.hi[k] - box.lo[k]);
        out.push_back(std::move(p));
    }
    return out;
}

/// Ordered time pairs t1 < t2 in [t0, t1], from a 2-D Halton set.
inline std::vector<std::pair<double, double>> sample_time_pairs(double t_lo, double t_hi, int count,
                                                                std::uint64_t seed) {
    HaltonSampler h(2, seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::pair<double, double>> out;
    for (std::uint64_t i = 0; static_cast<int>(out.size()) < count; ++i) {
        auto p = h.point(i);
        double a = t_lo + p[0] * (t_hi - t_lo), b = t_lo + p[1] * (t_hi - t_lo);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        out.emplace_back(a, b);
    }
    return out;
}

/// Points on the unit sphere S^{dim-1}: Halton points in [-1,1]^dim kept when
/// inside the unit ball (and not too close to the centre), then normalized.
inline std::vector<std::vector<double>> sample_sphere(int dim, int count, std::uint64_t seed) {
    HaltonSampler h(dim, seed);
    std::vector<std::vector<double>> out;
    out.reserve(count);
    for (std::uint64_t i = 0; static_cast<int>(out.size()) < count; ++i) {
        auto p = h.point(i);
        double r2 = 0.0;
        for (auto& x : p) {
            x = 2.0 * x - 1.0;
            r2 += x * x;
        }
        if (r2 > 1.0 || r2 < 1e-4) continue;
        const double r = std::sqrt(r2);
        for (auto& x : p) x /= r;
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace omniflow
