#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "omniflow/polynomial_sum.hpp"
#include "omniflow/verify.hpp"
#include "omniflow/wkb2d.hpp"

using namespace omniflow;

namespace {

Polynomial poly(const std::string& s) { return parse_polynomial(s, 2); }

const Box kUnit = Box::cube(2, -1.0, 1.0);
const Box kAnnulusPatch{{0.5, -0.5}, {1.5, 0.5}};

// The order study needs a curved patch: for q1 q2 alone every coefficient of
// the transport equations vanishes and the truncated series is exact.
std::shared_ptr<const RayPatch> cubic_patch() {
    static const auto patch = std::make_shared<const RayPatch>(
        transport_amplitudes(build_eikonal(poly("q1*q2 + 0.3*q1^3"), kUnit, 2)));
    return patch;
}

} // namespace

TEST(EigenField, BilinearBranchesAreConstantDiagonals) {
    const auto phi = poly("q1*q2");
    for (const Vec2& q : {Vec2(0, 0), Vec2(0.3, -0.9), Vec2(5, 2)}) {
        const Vec2 e1 = eigen_field(phi, q, 1), e2 = eigen_field(phi, q, 2);
        EXPECT_LT((e2 - Vec2(1, 1) / std::sqrt(2.0)).norm(), 1e-15);
        EXPECT_LT(std::abs(std::abs(e1.x()) - 1 / std::sqrt(2.0)), 1e-15);
        EXPECT_LT(std::abs(e1.x() + e1.y()), 1e-15);
    }
}

TEST(EigenField, DiagonalHessianGivesCoordinateAxes) {
    const auto phi = poly("q1^3 + q2^3");  // Hessian diag(6, 12) at (1, 2)
    EXPECT_LT((eigen_field(phi, Vec2(1, 2), 1) - Vec2(1, 0)).norm(), 1e-15);
    EXPECT_LT((eigen_field(phi, Vec2(1, 2), 2) - Vec2(0, 1)).norm(), 1e-15);
}

TEST(EigenField, RadialPolynomialHasRadialAndTangentialBranches) {
    const auto phi = poly("q1^4 + 2*q1^2*q2^2 + q2^4");
    for (double a = 0.1; a < 6.2; a += 0.7) {
        const Vec2 q(1.3 * std::cos(a), 1.3 * std::sin(a));
        const Vec2 r = q.normalized();
        EXPECT_NEAR(std::abs(eigen_field(phi, q, 2).dot(r)), 1.0, 1e-12);
        EXPECT_NEAR(eigen_field(phi, q, 1).dot(r), 0.0, 1e-12);
    }
}

TEST(EigenField, BranchesAreOrthogonalOnAGrid) {
    const Hessian2D hess(poly("q1*q2 + 0.3*q1^3 - 0.2*q2^4"));
    for (int i = 0; i < 21; ++i)
        for (int j = 0; j < 21; ++j) {
            const auto h = hess(-1 + 0.1 * i, -1 + 0.1 * j);
            EXPECT_LT(std::abs(branch_vector(h, 1).dot(branch_vector(h, 2))), 1e-10);
        }
}

TEST(EigenField, DegenerateHessianThrowsWithLocation) {
    const auto phi = poly("q1^4 + 2*q1^2*q2^2 + q2^4");
    try {
        eigen_field(phi, Vec2(0, 0), 1);
        FAIL() << "expected DegenerateHessian";
    } catch (const DegenerateHessian& e) {
        EXPECT_EQ(e.location(), (std::vector<double>{0.0, 0.0}));
    }
    EXPECT_THROW(eigen_field(phi, Vec2(1, 0), 3), InvalidParameter);
}

TEST(TraceRay, BilinearRayIsStraight) {
    const auto ray = trace_ray(poly("q1*q2"), Vec2(0, 0.5), 2, 1e-2, 10.0, kUnit);
    ASSERT_GT(ray.points.size(), 10u);
    EXPECT_EQ(ray.stop, RayStop::LeftDomain);
    for (const auto& x : ray.points) EXPECT_NEAR(x.y() - x.x(), 0.5, 1e-13);
}

TEST(TraceRay, TangentialRayOfRadialFieldIsACircle) {
    const auto ray = trace_ray(poly("q1^4 + 2*q1^2*q2^2 + q2^4"), Vec2(1, 0), 1, 1e-3, M_PI / 2, Box::cube(2, -2, 2));
    EXPECT_EQ(ray.stop, RayStop::MaxLength);
    double dev = 0.0;
    for (const auto& x : ray.points) dev = std::max(dev, std::abs(x.norm() - 1.0));
    EXPECT_LT(dev, 1e-6);
    EXPECT_NEAR(std::abs(ray.points.back().y()), 1.0, 1e-3);
}

TEST(TraceRay, CrossesTheOtherFamilyOrthogonally) {
    const auto phi = poly("q1*q2 + 0.3*q1^3");
    const auto ray = trace_ray(phi, Vec2(0.2, -0.1), 1, 1e-3, 2.0, kUnit);
    const EigenField2D other(phi, 2);
    for (std::size_t k = 0; k < ray.points.size(); k += 50)
        EXPECT_LT(std::abs(ray.tangents[k].dot(other.at(ray.points[k]))), 1e-6);
}

TEST(TraceRay, InvalidStarts) {
    EXPECT_THROW(trace_ray(poly("q1*q2"), Vec2(2, 0), 1, 1e-2, 1.0, kUnit), InvalidParameter);
    EXPECT_THROW(trace_ray(poly("q1*q2"), Vec2(0, 0), 1, 0.0, 1.0, kUnit), InvalidParameter);
    EXPECT_THROW(trace_ray(poly("q1^4 + 2*q1^2*q2^2 + q2^4"), Vec2(0, 0), 1, 1e-2, 1.0, kUnit), DegenerateHessian);
}

TEST(Eikonal, BilinearPatchIsLinear) {
    const auto patch = build_eikonal(poly("q1*q2"), kUnit, 2);
    double err = 0.0;
    for (const auto& x : detail::grid_points(kUnit, 21))
        err = std::max(err, std::abs(patch.S.value(x.x(), x.y()) - (x.x() + x.y()) / std::sqrt(2.0)));
    EXPECT_LT(err, 1e-10);
    EXPECT_LT(patch.eikonal_residual, 1e-10);
    EXPECT_LT(patch.alignment_residual, 1e-6);
}

TEST(Eikonal, RadialPatchIsRadial) {
    const auto patch = build_eikonal(poly("q1^4 + 2*q1^2*q2^2 + q2^4"), kAnnulusPatch, 2);
    double err = 0.0;
    for (const auto& x : detail::grid_points(kAnnulusPatch, 21))
        err = std::max(err, std::abs(patch.S.value(x.x(), x.y()) - (x.norm() - 1.0)));
    EXPECT_LT(err, 1e-8);
    EXPECT_LT(patch.alignment_residual, 1e-6);
}

TEST(Eikonal, CurvedPatchDiagnostics) {
    const auto& patch = *cubic_patch();
    EXPECT_LT(patch.eikonal_residual, 1e-8);
    EXPECT_LT(patch.alignment_residual, 1e-6);
    EXPECT_GT(patch.min_transversality_deg, 10.0);
    EXPECT_GT(patch.min_gradient_norm, 0.0);
}

TEST(Eikonal, GriddedRefinementOrder) {
    const auto study = eikonal_refinement_study(*cubic_patch(), {17, 33, 65});
    ASSERT_EQ(study.orders.size(), 2u);
    for (double o : study.orders) EXPECT_GE(o, 1.5);
}

TEST(Eikonal, Errors) {
    EXPECT_THROW(build_eikonal(poly("q1^4 + 2*q1^2*q2^2 + q2^4"), kUnit, 2), DegenerateHessian);
    // a seed line along the rays is not transversal
    const SeedLine bad{Vec2(0, 0), Vec2(-1, 1)};
    EXPECT_THROW(build_eikonal(poly("q1*q2"), kUnit, 2, bad), ConfigurationError);
    EXPECT_THROW(build_eikonal(poly("q1*q2"), Box::cube(3, -1, 1), 2), DimensionMismatch);
}

TEST(Transport, BilinearPatchHasConstantAmplitude) {
    const auto patch = transport_amplitudes(build_eikonal(poly("q1*q2"), kUnit, 2));
    for (const auto& x : detail::grid_points(kUnit, 11)) {
        const auto a = patch.amplitude(x, 50.0, 1);
        EXPECT_LT(std::abs(a.b - 1.0), 1e-10);
    }
    EXPECT_LT(std::abs(patch.A1re.value(0.3, 0.2)) + std::abs(patch.A1im.value(0.3, 0.2)), 1e-10);
}

TEST(Transport, SeedValuesArePreservedAlongRays) {
    const auto eik = build_eikonal(poly("q1*q2"), kUnit, 2);
    const auto patch = transport_amplitudes(eik, [](double s) { return cplx(1.0 + s); });
    double err = 0.0;
    for (const auto& x : detail::grid_points(kUnit, 21))
        err = std::max(err, std::abs(cplx(patch.A0re.value(x.x(), x.y()), patch.A0im.value(x.x(), x.y())) -
                                     (1.0 + patch.S.value(x.x(), x.y()))));
    EXPECT_LT(err, 1e-8);
}

TEST(Transport, RadialAmplitudeSelfConvergence) {
    const auto phi = poly("q1^4 + 2*q1^2*q2^2 + q2^4");
    WkbOptions coarse, fine;
    coarse.step = kAnnulusPatch.diagonal() / 500.0;
    fine.step = coarse.step / 10.0;
    const auto a = transport_amplitudes(build_eikonal(phi, kAnnulusPatch, 2, std::nullopt, coarse));
    const auto b = transport_amplitudes(build_eikonal(phi, kAnnulusPatch, 2, std::nullopt, fine));
    double err = 0.0;
    for (const auto& x : detail::grid_points(kAnnulusPatch, 11)) {
        const cplx va(a.A0re.value(x.x(), x.y()), a.A0im.value(x.x(), x.y()));
        const cplx vb(b.A0re.value(x.x(), x.y()), b.A0im.value(x.x(), x.y()));
        err = std::max(err, std::abs(va - vb) / std::abs(vb));
    }
    EXPECT_LT(err, 1e-6);
}

TEST(Transport, CurvedPatchResiduals) {
    const auto& patch = *cubic_patch();
    EXPECT_TRUE(patch.has_amplitudes);
    EXPECT_LT(patch.transport_residual_a0, 1e-6);
    EXPECT_LT(patch.transport_residual_a1, 1e-6);
}

TEST(WkbOrder, KappaSlopes) {
    const std::vector<double> kappas = {25, 50, 100, 200};
    const auto p0 = kappa_sweep(*cubic_patch(), kappas, 0);
    const auto p1 = kappa_sweep(*cubic_patch(), kappas, 1);
    EXPECT_NEAR(p0.slope, 0.0, 0.3);
    EXPECT_NEAR(p1.slope, -1.0, 0.3);
    EXPECT_THROW(kappa_sweep(*cubic_patch(), {50}, 1), InvalidParameter);
}

TEST(WkbField, AnalyticDerivativesMatchFiniteDifferences) {
    const WkbField w(cubic_patch(), 20.0, 1);
    const double q[2] = {0.31, -0.42}, h = 1e-5;
    const auto g = w.gradient(q);
    const auto H = w.hessian(q);
    for (int i = 0; i < 2; ++i) {
        double qp[2] = {q[0], q[1]}, qm[2] = {q[0], q[1]};
        qp[i] += h;
        qm[i] -= h;
        EXPECT_NEAR((w.value(qp) - w.value(qm)) / (2 * h), g[i], 1e-5 * std::max(1.0, std::abs(g[i])));
        const auto gp = w.gradient(qp), gm = w.gradient(qm);
        for (int j = 0; j < 2; ++j) EXPECT_NEAR((gp[j] - gm[j]) / (2 * h), H(i, j), 1e-4 * std::max(1.0, H.frobenius()));
    }
}

TEST(WkbField, NeedsAmplitudes) {
    const auto eik = std::make_shared<const RayPatch>(build_eikonal(poly("q1*q2"), kUnit, 2));
    EXPECT_THROW(WkbField(eik, 50.0, 1), ConfigurationError);
    EXPECT_THROW(WkbField(cubic_patch(), 50.0, 2), InvalidParameter);
}

TEST(Assemble, ZeroAmplitudeIsZeldovich) {
    const auto w = assemble_wkb_flow(cubic_patch(), 50.0, 0.0, TimePolynomial::power(2), 0.5);
    const auto z = zeldovich_flow(cubic_patch()->phi0, 0.5);
    for (const auto& x : detail::grid_points(kUnit, 7)) {
        const std::vector<double> q = {x.x(), x.y()};
        EXPECT_EQ(w.flow.lagrangian_map(q, w.T), z.lagrangian_map(q, w.T));
    }
}

TEST(Assemble, DefectDecreasesWithAmplitude) {
    SamplingSpec spec;
    spec.box = kUnit;
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {0.1, 0.01, 0.001}) {
        const auto w = assemble_wkb_flow(cubic_patch(), 50.0, eps, TimePolynomial::power(2), 0.2);
        const auto rep = verify_omnipotential(w.flow, spec);
        EXPECT_TRUE(rep.convexity_ok);
        EXPECT_LT(rep.commutation_defect, 1e-3);
        EXPECT_LT(rep.commutation_defect, prev);
        prev = rep.commutation_defect;
    }
}

TEST(Assemble, TrajectoriesStayCloseToZeldovich) {
    const double kappa = 50.0, eps = 0.05;
    const auto w = assemble_wkb_flow(cubic_patch(), kappa, eps, TimePolynomial::power(2), 0.2);
    const auto z = zeldovich_flow(cubic_patch()->phi0, w.T);
    double dev = 0.0;
    for (const auto& x : detail::grid_points(kUnit, 21)) {
        const std::vector<double> q = {x.x(), x.y()};
        const auto a = w.flow.lagrangian_map(q, w.T), b = z.lagrangian_map(q, w.T);
        dev = std::max(dev, std::hypot(a[0] - b[0], a[1] - b[1]));
    }
    EXPECT_GT(dev, 0.0);
    EXPECT_LT(dev, 10.0 * eps / kappa);
}

TEST(Assemble, RejectsInvalidTimeFactor) {
    EXPECT_THROW(assemble_wkb_flow(cubic_patch(), 50.0, 0.05, TimePolynomial::power(1), 0.2), InvalidParameter);
    EXPECT_THROW(assemble_wkb_flow(cubic_patch(), 50.0, 0.05, TimePolynomial::power(2), 0.0), InvalidParameter);
}

TEST(Assemble, LargeAmplitudeShrinksFinalTime) {
    const auto w = assemble_wkb_flow(cubic_patch(), 50.0, 50.0, TimePolynomial::power(2), 0.5);
    EXPECT_GT(w.halvings, 0);
    EXPECT_LT(w.T, 0.5);
    EXPECT_GT(w.min_eigenvalue, 0.0);
}

TEST(Export, GriddedFlowRoundTrip) {
    const auto w = assemble_wkb_flow(cubic_patch(), 50.0, 0.05, TimePolynomial::power(2), 0.2);
    const auto j = to_json(w.flow);
    EXPECT_TRUE(j["blocks"][1]["gridded"].get<bool>());
    const auto g = flow_from_json(j);
    double dev = 0.0;
    for (const auto& x : detail::grid_points(Box::cube(2, -0.9, 0.9), 13)) {
        const std::vector<double> q = {x.x(), x.y()};
        const auto a = w.flow.lagrangian_map(q, w.T), b = g.lagrangian_map(q, w.T);
        dev = std::max(dev, std::hypot(a[0] - b[0], a[1] - b[1]));
    }
    EXPECT_LT(dev, 1e-5);
}

TEST(Export, PatchCsvAndJson) {
    const auto& patch = *cubic_patch();
    const auto j = patch_to_json(patch, 5, 4);
    EXPECT_EQ(j["grid"]["nx"], 5);
    EXPECT_EQ(j["nodes"].size(), 20u);
    EXPECT_EQ(j["columns"].size(), 7u);
    EXPECT_NEAR(j["nodes"][0][2].get<double>(), patch.S.value(-1, -1), 1e-15);
    std::ostringstream os;
    write_patch_csv(os, patch, 5, 4);
    std::istringstream is(os.str());
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) ++lines;
    EXPECT_EQ(lines, 2 + 20);
    EXPECT_EQ(to_json(patch)["gradient_branch"], 2);
}
