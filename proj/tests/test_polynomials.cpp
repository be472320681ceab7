#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "omniflow/convexity.hpp"
#include "omniflow/families.hpp"
#include "omniflow/polynomial_sum.hpp"

using namespace omniflow;

namespace {

const std::vector<Rational> kCTildes = {make_rational(1, 2), 1, 2, 3, 5};

HomogeneousPolynomial mono(MultiIndex e, const Rational& c) { return HomogeneousPolynomial::monomial(std::move(e), c); }

std::vector<double> random_point(int d, std::mt19937_64& rng, double rmin = 0.5, double rmax = 2.0) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> r(rmin, rmax);
    std::vector<double> q(d);
    double n = 0.0;
    for (auto& v : q) {
        v = g(rng);
        n += v * v;
    }
    const double s = r(rng) / std::sqrt(n);
    for (auto& v : q) v *= s;
    return q;
}

// Collects every member of the constructed families used below.
std::vector<HomogeneousPolynomial> family_members() {
    std::vector<HomogeneousPolynomial> out;
    for (int k = 2; k <= 5; ++k) out.push_back(family_p2_even(k, 1, make_rational(-1, 4)).poly);
    for (int k = 2; k <= 4; ++k) out.push_back(family_p2_odd(k, 2, -3).poly);
    for (int d : {3, 4}) {
        out.push_back(family_pd4(d, 3));
        out.push_back(family_pd6(d, 3));
    }
    for (int n = 2; n <= 5; ++n) out.push_back(family_p3_2n(n, 1));
    return out;
}

} // namespace

TEST(Rational, CanonicalFormAndParsing) {
    EXPECT_EQ(make_rational(2, -4), make_rational(-1, 2));
    EXPECT_EQ(to_string(make_rational(6, 4)), "3/2");
    EXPECT_EQ(parse_rational("-0.35"), make_rational(-7, 20));
    EXPECT_EQ(parse_rational("2.5e-3"), make_rational(1, 400));
    EXPECT_EQ(parse_rational(" 45/9 "), Rational(5));
    EXPECT_THROW(parse_rational("1/0"), InvalidParameter);
    EXPECT_THROW(parse_rational("abc"), InvalidParameter);
}

TEST(Evaluation, HalfSquareNormHasIdentityHessian) {
    const auto p = HomogeneousPolynomial::half_square_norm(3);
    const double q[3] = {0.3, -1.2, 2.0};
    const auto h = hessian_at(p, q);
    EXPECT_EQ((h.matrix() - Eigen::MatrixXd::Identity(3, 3)).norm(), 0.0);
}

TEST(Evaluation, EvenQuarticAtOneTwo) {
    const auto p = family_p2_even(2, 1, 0).poly;  // 3 q1^4 + 6 q1^2 q2^2 + q2^4
    const Rational qr[2] = {1, 2};
    EXPECT_EQ(eval(p, qr), Rational(3 + 24 + 16));
    EXPECT_EQ(hessian_at(p, qr)[0][0], Rational(84));
    const double q[2] = {1, 2};
    EXPECT_DOUBLE_EQ(eval(p, q), 43.0);
    EXPECT_DOUBLE_EQ(hessian_at(p, q)(0, 0), 84.0);
}

TEST(Evaluation, QuarticMonomialHessian) {
    const double q[2] = {1, 1};
    const auto h = hessian_at(mono({4, 0}, 1), q);
    EXPECT_EQ(h(0, 0), 12.0);
    EXPECT_EQ(h(0, 1), 0.0);
    EXPECT_EQ(h(1, 1), 0.0);
}

TEST(Evaluation, DerivativesMatchFiniteDifferences) {
    std::mt19937_64 rng(21);
    for (const auto& p : family_members()) {
        for (int trial = 0; trial < 5; ++trial) {
            auto q = random_point(p.dim(), rng);
            const auto g = gradient_at(p, q);
            const auto h = hessian_at(p, q);
            double gscale = 0.0, hscale = h.frobenius();
            for (double v : g) gscale = std::max(gscale, std::abs(v));
            for (int i = 0; i < p.dim(); ++i) {
                const double step = 1e-5;
                auto qp = q, qm = q;
                qp[i] += step;
                qm[i] -= step;
                const double fd = (eval(p, qp) - eval(p, qm)) / (2 * step);
                EXPECT_LT(std::abs(fd - g[i]), 1e-6 * std::max(1.0, gscale));
                const auto gp = gradient_at(p, qp), gm = gradient_at(p, qm);
                for (int j = 0; j < p.dim(); ++j)
                    EXPECT_LT(std::abs((gp[j] - gm[j]) / (2 * step) - h(i, j)), 1e-5 * std::max(1.0, hscale));
            }
        }
    }
}

TEST(Evaluation, EulerIdentityIsExact) {
    for (const auto& p : family_members()) {
        std::vector<Rational> q;
        for (int i = 0; i < p.dim(); ++i) q.push_back(make_rational(2 * i + 3, 7 - i));
        const auto g = gradient_at(p, std::span<const Rational>(q));
        Rational dot = 0;
        for (int i = 0; i < p.dim(); ++i) dot += q[i] * g[i];
        EXPECT_EQ(dot, Rational(p.degree()) * eval(p, std::span<const Rational>(q)));
    }
}

TEST(Evaluation, DimensionMismatchThrows) {
    const double q[3] = {1, 2, 3};
    EXPECT_THROW(eval(mono({2, 0}, 1), q), DimensionMismatch);
}

TEST(EvenFamily, QuarticDisplay) {
    const Rational a = make_rational(3, 7), b = -2;
    const auto p = family_p2_even(2, a, b).poly;
    const auto expect = mono({4, 0}, 2 * a + 1) + mono({2, 2}, 6) + mono({0, 4}, 2 * b + 1);
    EXPECT_EQ(p, expect);
}

TEST(EvenFamily, SexticDisplay) {
    const Rational a = make_rational(1, 3), b = make_rational(-2, 5);
    const auto p = family_p2_even(3, a, b).poly;
    const auto expect = mono({6, 0}, (4 * a + 1) * (2 * a + 3)) + mono({4, 2}, 15 * (2 * a + 3)) +
                        mono({2, 4}, 15 * (2 * b + 3)) + mono({0, 6}, (4 * b + 1) * (2 * b + 3));
    EXPECT_EQ(p, expect);
}

TEST(EvenFamily, SolvesTheTwoDimensionalEquation) {
    for (int k = 2; k <= 6; ++k)
        for (const auto& [a, b] : std::vector<std::pair<Rational, Rational>>{
                 {0, 0}, {1, 0}, {1, 1}, {make_rational(-1, 4), make_rational(-1, 4)}, {make_rational(2, 3), -5}}) {
            const auto fam = family_p2_even(k, a, b);
            const auto [num, den] = gexa_ratio(a, b);
            EXPECT_TRUE(gen2d_cleared_residual(fam.poly, num, den).is_zero()) << "k=" << k;
        }
}

TEST(EvenFamily, DegenerateParametersAndDerivativeSolutions) {
    const Rational h = make_rational(-3, 2);
    const auto fam = family_p2_even(3, h, h);
    EXPECT_TRUE(fam.degenerate);
    EXPECT_TRUE(fam.poly.is_zero());
    ASSERT_TRUE(fam.derivative_solutions);
    const auto [num, den] = gexa_ratio(h, h);
    EXPECT_FALSE(fam.derivative_solutions->first.is_zero());
    EXPECT_FALSE(fam.derivative_solutions->second.is_zero());
    EXPECT_TRUE(gen2d_cleared_residual(fam.derivative_solutions->first, num, den).is_zero());
    EXPECT_TRUE(gen2d_cleared_residual(fam.derivative_solutions->second, num, den).is_zero());
    const auto listed = even_family_degenerate_parameters(3);
    EXPECT_NE(std::find(listed.begin(), listed.end(), std::make_pair(h, h)), listed.end());
}

TEST(EvenFamily, RejectsSmallK) { EXPECT_THROW(family_p2_even(1, 0, 0), InvalidParameter); }

TEST(OddFamily, QuinticDisplays) {
    EXPECT_EQ(family_p2_odd(2, 1, 0).poly, mono({5, 0}, 1) + mono({3, 2}, -5));
    EXPECT_EQ(family_p2_odd(2, 0, 1).poly, mono({2, 3}, -5) + mono({0, 5}, 1));
    const double q[2] = {1, 1};
    EXPECT_DOUBLE_EQ(eval(family_p2_odd(2, 1, 1).poly, q), -8.0);
}

TEST(OddFamily, ReportsLockedParametersAndSolves) {
    for (int k = 2; k <= 5; ++k) {
        const auto fam = family_p2_odd(k, 3, make_rational(-1, 2));
        EXPECT_EQ(fam.a, make_rational(-1, k - 1));
        EXPECT_EQ(fam.b, make_rational(-1, k - 1));
        const auto [num, den] = gexa_ratio(fam.a, fam.b);
        EXPECT_TRUE(gen2d_cleared_residual(fam.poly, num, den).is_zero()) << "k=" << k;
        EXPECT_EQ(fam.poly.degree(), 2 * k + 1);
    }
    EXPECT_THROW(family_p2_odd(1, 1, 0), InvalidParameter);
}

TEST(Pd46, SphericalAtCTildeTwo) {
    const auto r2 = mono({2, 0, 0}, 1) + mono({0, 2, 0}, 1) + mono({0, 0, 2}, 1);
    EXPECT_EQ(family_pd4(3, 2), r2 * r2);
    const auto par = pd6_parameters(2);
    EXPECT_EQ(par.a, Rational(3));
    EXPECT_EQ(par.b, Rational(6));
    EXPECT_EQ(family_pd6(3, 2), r2 * r2 * r2);
}

TEST(Pd46, ParametersAtCTildeOne) {
    const auto par = pd6_parameters(1);
    EXPECT_EQ(par.a, make_rational(15, 11));
    EXPECT_EQ(par.b, make_rational(75, 44));
}

TEST(Pd46, ExcludedValuesAndDimension) {
    EXPECT_THROW(family_pd6(3, 12), InvalidParameter);
    EXPECT_THROW(family_pd6(3, -3), InvalidParameter);
    EXPECT_THROW(family_pd4(1, 1), InvalidParameter);
}

TEST(Pd46, SexticBlockCommutesWithQuartic) {
    for (int d : {3, 4})
        for (const Rational& c : std::vector<Rational>{0, 1, 2, 5, 11})
            EXPECT_TRUE(is_zero(commutator_poly(family_pd6(d, c), family_pd4(d, c)))) << "d=" << d << " c=" << c;
}

TEST(Pd46, RestrictionToThePlaneIsProportionalToEvenFamily) {
    for (const Rational& c : kCTildes) {
        const Rational a = (6 - c) / (2 * c);
        auto restrict2 = [](const HomogeneousPolynomial& p) {
            HomogeneousPolynomial out(2, p.degree());
            for (const auto& [e, coef] : p.terms())
                if (e[2] == 0) out.add_term({e[0], e[1]}, coef);
            return out;
        };
        for (const auto& [full, k] : std::vector<std::pair<HomogeneousPolynomial, int>>{{family_pd4(3, c), 2},
                                                                                        {family_pd6(3, c), 3}}) {
            const auto r = restrict2(full);
            const auto e = family_p2_even(k, a, a).poly;
            const Rational scale = e.coefficient({2 * k, 0}) / r.coefficient({2 * k, 0});
            EXPECT_EQ(scale * r, e) << "c=" << c << " k=" << k;
        }
    }
}

TEST(P32n, QuarticMember) {
    for (const Rational& c : kCTildes) EXPECT_EQ(family_p3_2n(2, c), family_pd4(3, c));
}

TEST(P32n, SexticMemberReproducesParameters) {
    for (const Rational& c : kCTildes) {
        const auto p = family_p3_2n(3, c);
        EXPECT_EQ(p.coefficient({4, 2, 0}), 15 * c / (12 - c));
        EXPECT_EQ(p.coefficient({2, 2, 2}), 75 * c * c / ((c + 3) * (12 - c)));
        EXPECT_EQ(p, family_pd6(3, c));
    }
}

TEST(P32n, LeadingCoefficientAndPermutationSymmetry) {
    const std::vector<std::vector<int>> perms = {{0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (int n = 2; n <= 6; ++n)
        for (const Rational& c : kCTildes) {
            const auto p = family_p3_2n(n, c);
            EXPECT_EQ(p.coefficient({2 * n, 0, 0}), Rational(1));
            for (const auto& perm : perms) EXPECT_EQ(p.permuted(perm), p);
        }
}

TEST(P32n, CommutesWithQuarticBlock) {
    for (int n = 2; n <= 6; ++n)
        for (const Rational& c : kCTildes) EXPECT_TRUE(is_zero(commutator_poly(family_p3_2n(n, c), family_pd4(3, c))));
}

TEST(P32n, VanishingChiIsAnError) {
    // chi_3 = (12 - c)/3 vanishes at c = 12
    EXPECT_THROW(family_p3_2n(3, 12), InvalidParameter);
}

TEST(CommutatorPoly, SelfCommutatorVanishes) {
    for (const auto& p : family_members()) EXPECT_TRUE(is_zero(commutator_poly(p, p)));
}

TEST(CommutatorPoly, HandExpandedEntry) {
    const auto c = commutator_poly(mono({2, 2}, 1), mono({4, 0}, 1));
    EXPECT_EQ(c[0][1], mono({3, 1}, -48));
    EXPECT_EQ(c[1][0], mono({3, 1}, 48));
    EXPECT_TRUE(c[0][0].is_zero());
}

TEST(PolynomialJson, RoundTripIsExact) {
    for (const auto& p : family_members()) EXPECT_EQ(polynomial_from_json(to_json(p)), p);
    const auto j = to_json(mono({1, 1}, make_rational(-3, 7)));
    EXPECT_EQ(j["terms"][0]["coef"], "-3/7");
}

TEST(PolynomialParser, SumsAndCoefficients) {
    const auto p = parse_polynomial("q1*q2 + 0.3*q1^3 - 1/2 q2^2", 2);
    EXPECT_EQ(p.parts().at(2), mono({1, 1}, 1) + mono({0, 2}, make_rational(-1, 2)));
    EXPECT_EQ(p.parts().at(3), mono({3, 0}, make_rational(3, 10)));
    EXPECT_THROW(parse_polynomial("q3", 2), InvalidParameter);
    EXPECT_EQ(polynomial_sum_from_json(to_json(p)).parts().at(3), p.parts().at(3));
}

TEST(Convexity, EvenQuarticIsConvex) {
    const auto rep = convexity_range_check(family_p2_even(2, 0, 0).poly);
    EXPECT_EQ(rep.verdict, ConvexityVerdict::Convex);
    EXPECT_TRUE(rep.coefficients_nonnegative);
}

TEST(Convexity, QuarticBeyondRangeHasWitness) {
    const auto p = family_pd4(3, 13);
    const auto rep = convexity_range_check(p);
    ASSERT_EQ(rep.verdict, ConvexityVerdict::NotConvex);
    ASSERT_TRUE(rep.witness);
    const auto h = hessian_at(p, *rep.witness);
    EXPECT_LT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h.matrix()).eigenvalues()(0), 0.0);
}

TEST(Convexity, OddQuinticIsNotConvex) {
    const auto rep = convexity_range_check(family_p2_odd(2, 1, 0).poly);
    EXPECT_EQ(rep.verdict, ConvexityVerdict::NotConvex);
    EXPECT_TRUE(rep.witness);
}

TEST(Convexity, InsideStatedWindow) {
    for (const Rational& c : kCTildes) {
        EXPECT_EQ(convexity_range_check(family_pd4(3, c)).verdict, ConvexityVerdict::Convex);
        EXPECT_EQ(convexity_range_check(family_pd6(3, c)).verdict, ConvexityVerdict::Convex);
    }
}
