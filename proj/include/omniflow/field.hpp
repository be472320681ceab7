#pragma once

// Spatial building blocks of a flow potential: anything that can report a
// value, gradient and Hessian at a point.

#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "omniflow/polynomial_sum.hpp"
#include "omniflow/sampling.hpp"
#include "omniflow/symmat.hpp"

namespace omniflow {

class SpatialField {
public:
    virtual ~SpatialField() = default;
    virtual int dim() const = 0;
    virtual double value(std::span<const double> q) const = 0;
    virtual std::vector<double> gradient(std::span<const double> q) const = 0;
    virtual SymmetricMatrix hessian(std::span<const double> q) const = 0;
    virtual nlohmann::json to_json() const = 0;
    /// Non-null when the field is an exact polynomial.
    virtual const Polynomial* polynomial() const { return nullptr; }
};

using FieldPtr = std::shared_ptr<const SpatialField>;

class PolynomialField final : public SpatialField {
public:
    explicit PolynomialField(Polynomial p) : poly_(std::move(p)), eval_(poly_) {}

    int dim() const override { return poly_.dim(); }
    double value(std::span<const double> q) const override { return eval_.value(q); }
    std::vector<double> gradient(std::span<const double> q) const override { return eval_.gradient(q); }
    SymmetricMatrix hessian(std::span<const double> q) const override { return eval_.hessian(q); }
    nlohmann::json to_json() const override { return omniflow::to_json(poly_); }
    const Polynomial* polynomial() const override { return &poly_; }

private:
    Polynomial poly_;
    PolynomialSumEvaluator eval_;
};

inline FieldPtr make_field(Polynomial p) { return std::make_shared<PolynomialField>(std::move(p)); }
inline FieldPtr make_field(const HomogeneousPolynomial& p) { return make_field(Polynomial(p)); }

/// Scalar field tabulated on a uniform nx-by-ny node grid over a 2-D box.
/// Nodal first and second derivatives come from second-order finite
/// differences (central inside, one-sided on the edges); value, gradient and
/// Hessian between nodes are bilinear interpolants of the nodal arrays.
class GriddedField2D final : public SpatialField {
public:
    GriddedField2D(Box box, int nx, int ny, std::vector<double> values)
        : box_(std::move(box)), nx_(nx), ny_(ny), f_(std::move(values)) {
        if (box_.dim() != 2) throw DimensionMismatch("gridded fields are two-dimensional");
        if (nx < 4 || ny < 4) throw InvalidParameter("gridded field needs at least 4 nodes per axis");
        if (static_cast<int>(f_.size()) != nx * ny) throw InvalidParameter("gridded field value count differs from nx*ny");
        hx_ = (box_.hi[0] - box_.lo[0]) / (nx - 1);
        hy_ = (box_.hi[1] - box_.lo[1]) / (ny - 1);
        if (!(hx_ > 0.0 && hy_ > 0.0)) throw InvalidParameter("gridded field box is empty");
        fx_ = diff(f_, 0, 1);
        fy_ = diff(f_, 1, 1);
        fxx_ = diff(f_, 0, 2);
        fyy_ = diff(f_, 1, 2);
        fxy_ = diff(fx_, 1, 1);
    }

    static GriddedField2D tabulate(const SpatialField& f, const Box& box, int nx, int ny) {
        std::vector<double> v(static_cast<std::size_t>(nx) * ny);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double q[2] = {box.lo[0] + i * (box.hi[0] - box.lo[0]) / (nx - 1),
                                     box.lo[1] + j * (box.hi[1] - box.lo[1]) / (ny - 1)};
                v[j * nx + i] = f.value(q);
            }
        return GriddedField2D(box, nx, ny, std::move(v));
    }

    int dim() const override { return 2; }
    const Box& box() const noexcept { return box_; }
    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    const std::vector<double>& values() const noexcept { return f_; }

    double value(std::span<const double> q) const override { return interp(f_, q); }
    std::vector<double> gradient(std::span<const double> q) const override {
        return {interp(fx_, q), interp(fy_, q)};
    }
    SymmetricMatrix hessian(std::span<const double> q) const override {
        SymmetricMatrix h(2);
        h.set(0, 0, interp(fxx_, q));
        h.set(0, 1, interp(fxy_, q));
        h.set(1, 1, interp(fyy_, q));
        return h;
    }

    nlohmann::json to_json() const override {
        return {{"gridded", true},
                {"grid", {{"nx", nx_}, {"ny", ny_}, {"box", {box_.lo[0], box_.hi[0], box_.lo[1], box_.hi[1]}}}},
                {"values", f_}};
    }

private:
    double at(const std::vector<double>& a, int i, int j) const { return a[j * nx_ + i]; }

    // Derivative of order 1 or 2 along `axis` with second-order stencils.
    std::vector<double> diff(const std::vector<double>& a, int axis, int order) const {
        std::vector<double> out(a.size());
        const int n = axis == 0 ? nx_ : ny_;
        const double h = axis == 0 ? hx_ : hy_;
        for (int j = 0; j < ny_; ++j)
            for (int i = 0; i < nx_; ++i) {
                const int k = axis == 0 ? i : j;
                auto v = [&](int kk) { return axis == 0 ? at(a, kk, j) : at(a, i, kk); };
                double d;
                if (order == 1) {
                    if (k == 0) d = (-3 * v(0) + 4 * v(1) - v(2)) / (2 * h);
                    else if (k == n - 1) d = (3 * v(n - 1) - 4 * v(n - 2) + v(n - 3)) / (2 * h);
                    else d = (v(k + 1) - v(k - 1)) / (2 * h);
                } else {
                    if (k == 0) d = (2 * v(0) - 5 * v(1) + 4 * v(2) - v(3)) / (h * h);
                    else if (k == n - 1) d = (2 * v(n - 1) - 5 * v(n - 2) + 4 * v(n - 3) - v(n - 4)) / (h * h);
                    else d = (v(k + 1) - 2 * v(k) + v(k - 1)) / (h * h);
                }
                out[j * nx_ + i] = d;
            }
        return out;
    }

    // Bilinear interpolation; points outside the box use the nearest edge cell.
    double interp(const std::vector<double>& a, std::span<const double> q) const {
        if (q.size() != 2) throw DimensionMismatch("gridded field evaluated at a non-2-D point");
        const double sx = (q[0] - box_.lo[0]) / hx_, sy = (q[1] - box_.lo[1]) / hy_;
        const int i = std::clamp(static_cast<int>(std::floor(sx)), 0, nx_ - 2);
        const int j = std::clamp(static_cast<int>(std::floor(sy)), 0, ny_ - 2);
        const double u = sx - i, w = sy - j;
        return (1 - u) * (1 - w) * at(a, i, j) + u * (1 - w) * at(a, i + 1, j) + (1 - u) * w * at(a, i, j + 1) +
               u * w * at(a, i + 1, j + 1);
    }

    Box box_;
    int nx_, ny_;
    double hx_ = 0.0, hy_ = 0.0;
    std::vector<double> f_, fx_, fy_, fxx_, fyy_, fxy_;
};

/// Reads a block field: a polynomial (object or array form) or a gridded table.
inline FieldPtr field_from_json(const nlohmann::json& j) {
    if (j.is_object() && j.value("gridded", false)) {
        try {
            const auto& g = j.at("grid");
            const auto b = g.at("box").get<std::vector<double>>();
            if (b.size() != 4) throw InvalidParameter("gridded box must be [x0, x1, y0, y1]");
            return std::make_shared<GriddedField2D>(Box{{b[0], b[2]}, {b[1], b[3]}}, g.at("nx").get<int>(),
                                                    g.at("ny").get<int>(), j.at("values").get<std::vector<double>>());
        } catch (const nlohmann::json::exception& e) {
            throw InvalidParameter(std::string("malformed gridded field: ") + e.what());
        }
    }
    return make_field(polynomial_sum_from_json(j));
}

} // namespace omniflow
