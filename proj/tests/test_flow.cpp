#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "omniflow/flow.hpp"
#include "omniflow/verify.hpp"

using namespace omniflow;

namespace {

Polynomial random_phi0(int d, int max_degree, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> coef(-10, 10);
    Polynomial p(d);
    for (int deg = 2; deg <= max_degree; ++deg) {
        HomogeneousPolynomial h(d, deg);
        // every exponent vector of total degree deg
        std::vector<int> e(d, 0);
        std::function<void(int, int)> rec = [&](int i, int left) {
            if (i == d - 1) {
                e[i] = left;
                h.add_term(e, make_rational(coef(rng), 10));
                return;
            }
            for (int k = 0; k <= left; ++k) {
                e[i] = k;
                rec(i + 1, left - k);
            }
        };
        rec(0, deg);
        p.add(h);
    }
    return p;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST(LagrangianMap, CubicMonomialExample) {
    const auto f = polynomial_flow(2, {{HomogeneousPolynomial::monomial({2, 1}, 1), TimePolynomial::power(1)}}, 1.0);
    for (double t : {0.0, 0.3, 1.0}) {
        const double q[2] = {1, 0};
        const auto x = f.lagrangian_map(q, t);
        EXPECT_DOUBLE_EQ(x[0], 1.0);
        EXPECT_DOUBLE_EQ(x[1], t);
    }
}

TEST(LagrangianMap, IdentityAtTimeZeroAndGradientConsistency) {
    const auto f = pd46_flow(3, 1, 1.0);
    const std::vector<double> q = {0.3, -0.7, 0.5};
    EXPECT_EQ(max_abs_diff(f.lagrangian_map(q, 0.0), q), 0.0);
    const double t = 0.6, step = 1e-6;
    const auto h = f.hessian(q, t);
    for (int j = 0; j < 3; ++j) {
        auto qp = q, qm = q;
        qp[j] += step;
        qm[j] -= step;
        const auto xp = f.lagrangian_map(qp, t), xm = f.lagrangian_map(qm, t);
        for (int i = 0; i < 3; ++i) EXPECT_NEAR((xp[i] - xm[i]) / (2 * step), h(i, j), 1e-6);
    }
    const auto v = f.lagrangian_velocity(q, t);
    const auto xp = f.lagrangian_map(q, t + step), xm = f.lagrangian_map(q, t - step);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR((xp[i] - xm[i]) / (2 * step), v[i], 1e-7);
}

TEST(LagrangianMap, DimensionMismatchThrows) {
    const auto f = pd46_flow(3, 1, 1.0);
    const double q[2] = {1, 2};
    EXPECT_THROW(f.lagrangian_map(q, 0.1), DimensionMismatch);
}

TEST(FlowConstruction, RejectsInvalidTimeFactors) {
    EXPECT_THROW(FlowPotential(2, TimePolynomial::constant(2.0), {}, FlowKind::Custom, {0, 1}), InvalidParameter);
    EXPECT_THROW(FlowPotential(2, TimePolynomial::constant(1.0),
                               {{make_field(HomogeneousPolynomial::monomial({4, 0}, 1)), TimePolynomial::constant(1.0)}},
                               FlowKind::Custom, {0, 1}),
                 InvalidParameter);
    EXPECT_THROW(exa2d_flow({3}, make_rational(-3, 2), make_rational(-3, 2), 1.0), InvalidParameter);
}

TEST(Zeldovich, TrajectoriesAreStraightWithConstantVelocity) {
    const auto f = zeldovich_flow(random_phi0(2, 4, 3), 0.05);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> q = {u(rng), u(rng)};
        const auto v0 = f.lagrangian_velocity(q, 0.0);
        for (double t : {0.01, 0.03, 0.05}) {
            const auto x = f.lagrangian_map(q, t);
            EXPECT_LT(max_abs_diff(f.lagrangian_velocity(q, t), v0), 1e-13);
            for (int i = 0; i < 2; ++i) EXPECT_NEAR(x[i], q[i] + t * v0[i], 1e-13);
        }
    }
}

TEST(Verify, ZeldovichRandomPotentialsPass) {
    for (int d : {2, 3}) {
        const auto f = zeldovich_flow(random_phi0(d, 4, 10 + d), 0.02);
        const auto rep = verify_omnipotential(f);
        EXPECT_TRUE(rep.convexity_ok);
        EXPECT_LT(rep.commutation_defect, 1e-12);
        EXPECT_LT(rep.bipotential_defect, 1e-12);
        EXPECT_LT(rep.intermediate_defect, 1e-12);
        EXPECT_LT(rep.eigenframe_drift, 1e-9);
        EXPECT_TRUE(rep.passes({}));
    }
}

TEST(Verify, ZeldovichTypeWithReparameterizationPasses) {
    const auto f = zeldovich_type_flow(random_phi0(2, 3, 5), TimePolynomial({1.0, 0.5, 0.2}),
                                       TimePolynomial({0.0, 0.1, 0.3}), 0.2);
    EXPECT_TRUE(verify_omnipotential(f).passes({}));
}

TEST(Verify, Pd46FlowPasses) {
    for (const Rational& c : {Rational(1), Rational(3)}) {
        const auto rep = verify_omnipotential(pd46_flow(3, c, 1.0));
        EXPECT_LT(rep.commutation_defect, 1e-10);
        EXPECT_LT(rep.bipotential_defect, 1e-10);
        EXPECT_LT(rep.intermediate_defect, 1e-10);
        EXPECT_LT(rep.eigenframe_drift, 1e-9);
        EXPECT_LT(rep.invariant_drift, 1e-8);
        EXPECT_TRUE(rep.passes({}));
    }
}

TEST(Verify, ExaAndXpolyFlowsPass) {
    EXPECT_TRUE(verify_omnipotential(exa2d_flow({2, 3}, 0, 0, 0.5)).passes({}));
    EXPECT_TRUE(verify_omnipotential(exa2d_flow({2, 3}, 1, 1, 0.5)).passes({}));
    EXPECT_TRUE(verify_omnipotential(xpoly_flow(1, 4, 0.5)).passes({}));
}

TEST(Verify, RadialFlowPasses) {
    const auto f = radial_flow(3, TimePolynomial({1.0, 1.0}), {{2, TimePolynomial::power(2)}}, 1.0);
    EXPECT_TRUE(verify_omnipotential(f).passes({}));
}

TEST(Verify, ControlFlowFails) {
    const auto f = control_flow(1.0);
    const auto rep = verify_omnipotential(f);
    EXPECT_TRUE(rep.convexity_ok);
    EXPECT_GT(rep.commutation_defect, 1e-4);
    EXPECT_FALSE(rep.passes({}));
    EXPECT_EQ(rep.worst_commutation.q.size(), 2u);
}

TEST(Verify, ControlFlowDefectAtNamedPoint) {
    const auto f = control_flow(1.0);
    const std::vector<double> q = {1, 1};
    const auto ph = f.at(q);
    EXPECT_GT(commutator(ph.hessian(0.05), ph.hessian(0.1)).defect, 1e-3);
    EXPECT_GT(intermediate_map_symmetry(f, q, 0.05, 0.1), 0.0);
}

TEST(Verify, ShellCrossingIsReported) {
    // q1^3 gives H11 = 1 + 6 t q1, singular at q1 = -1, t = 1/6
    const auto f = polynomial_flow(2, {{HomogeneousPolynomial::monomial({3, 0}, 1), TimePolynomial::power(1)}}, 1.0);
    const auto rep = verify_omnipotential(f);
    EXPECT_FALSE(rep.convexity_ok);
    EXPECT_FALSE(rep.shell_crossings.empty());
    EXPECT_LT(rep.min_eigenvalue, 0.0);
    EXPECT_FALSE(rep.passes({}));
}

TEST(Verify, SameSeedIsReproducible) {
    const auto f = control_flow(1.0);
    SamplingSpec s;
    s.num_points = 64;
    s.num_time_pairs = 4;
    const auto a = verify_omnipotential(f, s), b = verify_omnipotential(f, s);
    EXPECT_EQ(a.commutation_defect, b.commutation_defect);
    EXPECT_EQ(a.worst_commutation.q, b.worst_commutation.q);
}

TEST(Verify, BoxDimensionMismatchThrows) {
    SamplingSpec s;
    s.box = Box::cube(3, -1, 1);
    EXPECT_THROW(verify_omnipotential(control_flow(1.0), s), DimensionMismatch);
}

TEST(Invariant, TwoDimensionalValueAlongTrajectory) {
    const auto f = exa2d_flow({2, 3}, 1, 1, 1.0);
    const double q[2] = {1, 2};
    const auto traj = g_invariant_along_trajectory(f, q, {0.1, 0.4, 0.7, 1.0});
    ASSERT_TRUE(traj.mean[0]);
    EXPECT_NEAR(*traj.mean[0], -1.5, 1e-12);
    EXPECT_LT(traj.drift, 1e-12);
}

TEST(Invariant, ThreeDimensionalTrajectoryConstancy) {
    const auto f = pd46_flow(3, 1, 1.0);
    const double q[3] = {0.4, -0.8, 0.3};
    const auto traj = g_invariant_along_trajectory(f, q, {0.2, 0.5, 0.8, 1.0});
    EXPECT_EQ(traj.poles, 0);
    EXPECT_LT(traj.drift, 1e-9);
}

TEST(IntermediateMap, SymmetricForOmnipotentialFlow) {
    const auto f = pd46_flow(3, 2, 1.0);
    const double q[3] = {0.9, -0.2, 0.6};
    EXPECT_LT(intermediate_map_symmetry(f, q, 0.2, 0.9), 1e-13);
    EXPECT_EQ(intermediate_map_symmetry(control_flow(1.0), std::vector<double>{1.0, 1.0}, 0.5, 0.5), 0.0);
    EXPECT_THROW(intermediate_map_symmetry(f, q, 0.9, 0.2), InvalidParameter);
}

TEST(Composition, MapsBetweenTimesCompose) {
    // M_{t1->t3} = M_{t2->t3} o M_{t1->t2}; Jacobians multiply and stay symmetric.
    const auto f = pd46_flow(3, 3, 1.0);
    const std::vector<double> q = {0.5, 0.1, -0.4};
    const double t1 = 0.2, t2 = 0.5, t3 = 0.9;
    auto jac = [&](double a, double b) {
        return Eigen::MatrixXd(f.hessian(q, b).matrix() * f.hessian(q, a).matrix().inverse());
    };
    const Eigen::MatrixXd j13 = jac(t1, t3), j12 = jac(t1, t2), j23 = jac(t2, t3);
    EXPECT_LT((j13 - j23 * j12).norm(), 1e-12 * j13.norm());
    for (const auto& j : {j12, j23, j13}) {
        EXPECT_LT((j - j.transpose()).norm(), 1e-12 * j.norm());
        EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (j + j.transpose())).eigenvalues()(0), 0.0);
    }
}

TEST(Eulerian, ZeldovichVelocityAtPreimage) {
    const auto phi = random_phi0(2, 3, 8);
    const auto f = zeldovich_flow(phi, 0.05);
    const std::vector<double> q = {0.3, -0.6};
    const auto x = f.lagrangian_map(q, 0.04);
    const auto ev = eulerian_velocity(f, x, 0.04);
    EXPECT_LT(max_abs_diff(ev.q, q), 1e-10);
    EXPECT_LT(max_abs_diff(ev.v, f.lagrangian_velocity(q, 0.0)), 1e-10);
    EXPECT_LT(ev.asymmetry, 1e-13);
}

TEST(Eulerian, ControlFlowVelocityGradientIsNotSymmetric) {
    const auto f = control_flow(1.0);
    const auto ev = eulerian_velocity(f, f.lagrangian_map(std::vector<double>{1.0, 1.0}, 0.1), 0.1);
    EXPECT_NEAR(ev.q[0], 1.0, 1e-10);
    EXPECT_GT(ev.asymmetry, 0.0);
}

TEST(Eulerian, PastShellCrossingHasNoPreimage) {
    const auto f = polynomial_flow(1, {{HomogeneousPolynomial::monomial({3}, -1), TimePolynomial::power(1)}}, 1.0);
    // x = q - 3 t q^2 has maximum 1/(12 t); points above it have no preimage
    EXPECT_THROW(eulerian_velocity(f, std::vector<double>{1.0}, 1.0), NoPreimage);
}

TEST(FlowJson, RoundTripPreservesMaps) {
    const auto f = pd46_flow(3, make_rational(1, 2), 0.8, TimePolynomial({0.0, 0.5, 1.0}));
    const auto g = flow_from_json(to_json(f));
    EXPECT_EQ(g.dim(), 3);
    EXPECT_EQ(g.time_range()[1], 0.8);
    const std::vector<double> q = {0.1, 0.2, -0.3};
    EXPECT_EQ(f.lagrangian_map(q, 0.7), g.lagrangian_map(q, 0.7));
    EXPECT_THROW(flow_from_json(nlohmann::json{{"dim", 2}}), InvalidParameter);
}
