#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "nsi/axisym.hpp"
#include "nsi/cutoff.hpp"
#include "nsi/field.hpp"
#include "nsi/mollify.hpp"

using namespace nsi;

namespace {

const Rect U{0, 1, 1, 2};

Point2 random_point(std::mt19937_64& rng, const Rect& r) {
    std::uniform_real_distribution<double> a(r.a1, r.b1), b(r.a2, r.b2);
    return {a(rng), b(rng)};
}

// central differences of value and first partials against the analytic jet
void expect_fd_consistent(const ScalarField2D& f, Point2 p, double h = 1e-6, double rtol = 1e-5) {
    Jet2 j = f.jet(p);
    auto fx = [&](double dx, double dy) { return f.jet({p.x1 + dx, p.x2 + dy}); };
    double d1 = (fx(h, 0).v - fx(-h, 0).v) / (2 * h), d2 = (fx(0, h).v - fx(0, -h).v) / (2 * h);
    double d11 = (fx(h, 0).d1 - fx(-h, 0).d1) / (2 * h), d12 = (fx(0, h).d1 - fx(0, -h).d1) / (2 * h);
    double d22 = (fx(0, h).d2 - fx(0, -h).d2) / (2 * h);
    double s1 = std::abs(j.d1) + std::abs(j.d2) + 1e-3, s2 = std::abs(j.d11) + std::abs(j.d12) + std::abs(j.d22) + 1e-3;
    EXPECT_NEAR(d1, j.d1, rtol * s1) << p.x1 << "," << p.x2;
    EXPECT_NEAR(d2, j.d2, rtol * s1) << p.x1 << "," << p.x2;
    EXPECT_NEAR(d11, j.d11, rtol * s2) << p.x1 << "," << p.x2;
    EXPECT_NEAR(d12, j.d12, rtol * s2) << p.x1 << "," << p.x2;
    EXPECT_NEAR(d22, j.d22, rtol * s2) << p.x1 << "," << p.x2;
}

const Structure& recipe() {
    static const Structure s = build_structure_recipe(U, 0.3);
    return s;
}

}  // namespace

TEST(FieldCore, PolynomialPartials) {
    ScalarField2D f([](Point2 p) { return Jet2::x2(p.x2) * Jet2::x2(p.x2); }, {U});
    Jet2 j = eval_with_partials(f, {0.5, 1.5}, 2);
    EXPECT_DOUBLE_EQ(j.v, 2.25);
    EXPECT_DOUBLE_EQ(j.d2, 3.0);
    EXPECT_DOUBLE_EQ(j.d22, 2.0);
    EXPECT_DOUBLE_EQ(j.d1, 0.0);
    Jet2 j1 = eval_with_partials(f, {0.5, 1.5}, 1);
    EXPECT_DOUBLE_EQ(j1.d22, 0.0);
}

TEST(FieldCore, ZeroField) {
    Jet2 j = eval_with_partials(ScalarField2D::zero(), {0.3, 0.7}, 2);
    EXPECT_EQ(j.v, 0);
    EXPECT_EQ(j.d1, 0);
    EXPECT_EQ(j.d22, 0);
}

TEST(FieldCore, RejectsLowerHalfPlane) {
    EXPECT_THROW(eval_with_partials(ScalarField2D::zero(), {0.3, -1}, 2), DomainError);
}

TEST(FieldCore, RecipeVelocityMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    const Structure& s = recipe();
    for (int i = 0; i < 100; ++i) {
        Point2 p = random_point(rng, eta_subset(U, 0.01));
        expect_fd_consistent(s.v.v1, p);
        expect_fd_consistent(s.v.v2, p);
    }
}

TEST(FieldCore, RecipeCutoffAndPlateauMatchFiniteDifferences) {
    std::mt19937_64 rng(12);
    const Structure& s = recipe();
    for (int i = 0; i < 100; ++i) {
        Point2 p = random_point(rng, eta_subset(U, 0.05));
        expect_fd_consistent(s.f, p);
        expect_fd_consistent(s.phi, p);
    }
}

TEST(FieldCore, EtaSubset) {
    Rect r = eta_subset(U, 0.1);
    EXPECT_DOUBLE_EQ(r.a1, 0.1);
    EXPECT_DOUBLE_EQ(r.b1, 0.9);
    EXPECT_DOUBLE_EQ(r.a2, 1.1);
    EXPECT_DOUBLE_EQ(r.b2, 1.9);
    EXPECT_EQ(eta_subset(U, 0), U);
    EXPECT_THROW(eta_subset(U, 0.6), EmptySetError);
}

TEST(FieldCore, DividedDifferences) {
    auto sq = ScalarField1D::polynomial({0, 0, 1}), cube = ScalarField1D::polynomial({0, 0, 0, 1});
    EXPECT_DOUBLE_EQ(divided_difference(sq, {0, 1, 2}), 1.0);
    EXPECT_DOUBLE_EQ(divided_difference(cube, {0, 1, 2}), 3.0);
    EXPECT_DOUBLE_EQ(divided_difference(cube, {1, 2}), 7.0);
    EXPECT_THROW(divided_difference(cube, {1, 1}), DegenerateInputError);
}

// g[a,b,c] lies between min g''/2 and max g''/2 on [a,c]
TEST(FieldCore, DividedDifferenceMeanValueProperty) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> coef(-2, 2), pt(-1, 1);
    std::vector<ScalarField1D> gs{ScalarField1D([](double x) { return exp(Jet1::variable(x)); }),
                                  ScalarField1D([](double x) { return sqrt(Jet1::variable(x) + 3.0); })};
    for (int i = 0; i < 20; ++i) gs.push_back(ScalarField1D::polynomial({coef(rng), coef(rng), coef(rng), coef(rng), coef(rng)}));
    for (const auto& g : gs)
        for (int k = 0; k < 20; ++k) {
            std::array<double, 3> x{pt(rng), pt(rng), pt(rng)};
            std::sort(x.begin(), x.end());
            if (x[1] - x[0] < 1e-3 || x[2] - x[1] < 1e-3) continue;
            double lo = INFINITY, hi = -INFINITY;
            for (int s = 0; s <= 2000; ++s) {
                double h = g.jet(x[0] + (x[2] - x[0]) * s / 2000.0).d2 / 2;
                lo = std::min(lo, h);
                hi = std::max(hi, h);
            }
            double dd = divided_difference(g, {x[0], x[1], x[2]});
            double slack = 1e-9 * (std::abs(lo) + std::abs(hi) + 1);
            EXPECT_GE(dd, lo - slack);
            EXPECT_LE(dd, hi + slack);
        }
}

// g = h near 0: g'' > 0, 0 < g' < x g'', g < x^2 g'' wherever g''' > 0 from 0 on
TEST(FieldCore, FlatStartInequalities) {
    const BumpProfile& b = build_bump();
    double x_end = 0;
    for (int i = 1; i <= 4000; ++i) {
        double x = 0.5 * i / 4000;
        if (b.jet(x).v > 0 && b.jet(x).d3 <= 0) break;
        x_end = x;
    }
    ASSERT_GT(x_end, 0.2);
    int checked = 0;
    for (int i = 1; i <= 1000; ++i) {
        double x = x_end * i / 1000;
        Jet1 g = b.jet(x);
        if (g.v == 0) continue;  // below the underflow threshold
        ++checked;
        EXPECT_GT(g.d2, 0) << x;
        EXPECT_GT(g.d1, 0) << x;
        EXPECT_LT(g.d1, x * g.d2) << x;
        EXPECT_LT(g.v, x * x * g.d2) << x;
    }
    EXPECT_GT(checked, 500);
}

TEST(FieldCore, MollifyConstant) {
    auto c = mollify(ScalarField1D::constant(2.5), 0.3);
    for (double t : {-1.0, 0.0, 0.7, 3.0}) EXPECT_NEAR(c(t), 2.5, 1e-12);
}

TEST(FieldCore, MollifyLinearIsExactInside) {
    auto g = ScalarField1D([](double t) { return Jet1{1 - t, -1, 0, 0}; }, {}, 0, 1);
    auto J = mollify(g, 0.01);
    EXPECT_NEAR(J(0.5), 0.5, 1e-4);
}

TEST(FieldCore, MollifyPreservesMonotonicityAndRange) {
    auto step = ScalarField1D([](double t) { return Jet1::constant(t < 0.5 ? 1.0 : 0.2); }, {0.5});
    auto J = mollify(step, 0.1);
    double prev = J(0.0);
    for (int i = 1; i <= 400; ++i) {
        double v = J(i / 400.0);
        EXPECT_LE(v, prev + 1e-12);
        EXPECT_GE(v, 0.2 - 1e-12);
        EXPECT_LE(v, 1.0 + 1e-12);
        prev = v;
    }
}

TEST(Cutoff, BumpValues) {
    const BumpProfile& b = build_bump();
    EXPECT_EQ(b.h(-1), 0.0);
    EXPECT_NEAR(b.h(0.4), std::exp(-6.25), 1e-15);
    EXPECT_NEAR(b.h(0.4), 1.930e-3, 5e-7);
    EXPECT_EQ(b.h(1.0), 1.0);
    EXPECT_GE(b.C_h, 1.0);
}

TEST(Cutoff, BumpIsNondecreasing) {
    const BumpProfile& b = build_bump();
    for (int i = 0; i <= 4000; ++i) EXPECT_GE(b.jet(i / 4000.0).d1, -1e-12);
}

TEST(Cutoff, RecipeInputs) {
    CertifiedCutoff cc = build_cutoff(U, 0.3, 1.0);
    EXPECT_NEAR(cc.f.value({0.5, 1.5}), 1.0, 0);
    double Ch = build_bump().C_h;
    EXPECT_DOUBLE_EQ(closed_form_c_prime(1.0, Ch), std::min(1.0, std::exp(-4.5) / (2 * std::sqrt(Ch))) / 3);
    EXPECT_DOUBLE_EQ(cc.c_prime, closed_form_c_prime(1.0, Ch));
    EXPECT_GT(cc.worst_Lf_margin, 0);
    EXPECT_TRUE(cc.checks.all_pass());
}

// Lf > 0 at random points of U minus U_{c' eta}, most of them inside the thin frame
TEST(Cutoff, LfPositiveOffTheCore) {
    CertifiedCutoff cc = build_cutoff(U, 0.3, 1.0);
    double w = cc.c_prime * cc.eta;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unit(0, 1);
    for (int i = 0; i < 20000; ++i) {
        double d = w * unit(rng), s = unit(rng);
        Point2 p;
        switch (i % 4) {
            case 0: p = {d, 1 + s}; break;
            case 1: p = {1 - d, 1 + s}; break;
            case 2: p = {s, 1 + d}; break;
            default: p = {s, 2 - d}; break;
        }
        if (d == 0) continue;
        EXPECT_GT(cc.ratios(p).L_over_f, 0) << p.x1 << "," << p.x2;
    }
}

TEST(Cutoff, InvariantsAcrossEta) {
    for (double eta : {0.3, 0.1, 0.05}) {
        CertifiedCutoff cc = build_cutoff(U, eta, 1.0);
        Rect inner = eta_subset(U, eta);
        for (int i = 0; i <= 20; ++i)
            for (int k = 0; k <= 20; ++k) {
                Point2 p{inner.a1 + inner.width() * i / 20, inner.a2 + inner.height() * k / 20};
                if (inner.contains(p)) EXPECT_EQ(cc.value(p), 1.0);
                double v = cc.value({(i + 0.5) / 21, 1 + (k + 0.5) / 21});
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
        for (const char* name : {"f_above_c", "Lf_positive_frame", "Lf_positive_corners", "Lf_positive_strips"}) {
            const Check* c = cc.checks.find(name);
            ASSERT_NE(c, nullptr) << name;
            EXPECT_TRUE(c->pass) << name;
        }
    }
}

TEST(Cutoff, SideLayerClaim) {
    CertifiedCutoff cc = build_cutoff(U, 0.1, 1.0);
    bool found = false;
    for (const auto& c : cc.checks.checks)
        if (c.name.find("g2") != std::string::npos) {
            found = true;
            EXPECT_TRUE(c.pass);
        }
    EXPECT_TRUE(found);
}

TEST(Structure, RecipePasses) {
    const Structure& s = recipe();
    EXPECT_TRUE(verify_structure(s).all_pass());
}

TEST(Structure, DivergenceOfX2VAtRandomPoints) {
    std::mt19937_64 rng(3);
    const Structure& s = recipe();
    for (int i = 0; i < 500; ++i) {
        Point2 p = random_point(rng, U);
        Jet2 a = s.v.v1.jet(p), b = s.v.v2.jet(p);
        EXPECT_NEAR(p.x2 * (a.d1 + b.d2) + b.v, 0.0, 1e-6);
    }
}

TEST(Structure, FDominatesV) {
    const Structure& s = recipe();
    double worst = INFINITY;
    for (Point2 p : sample_grid(U, 0.3, 200, 200))
        if (s.v.magnitude(p) > 0) worst = std::min(worst, s.f.value(p) - s.v.magnitude(p));
    EXPECT_GT(worst, 0);
}

TEST(Structure, ScaledVelocityStillPasses) {
    for (double a : {-0.9, -0.3, 0.5, 0.99}) {
        EXPECT_TRUE(verify_structure(recipe().with_v_scaled(a)).all_pass()) << a;
    }
}

TEST(Structure, HalvedFFailsDomination) {
    Structure s = recipe().with_f_scaled(0.5);
    double worst = INFINITY;
    for (Point2 p : sample_grid(U, 0.3, 200, 200)) worst = std::min(worst, s.f.value(p) - s.v.magnitude(p));
    ASSERT_LT(worst, 0) << "fixture: f/2 must drop below |v| somewhere";
    const Check* c = verify_structure(s).find("f_greater_than_v");
    ASSERT_NE(c, nullptr);
    EXPECT_FALSE(c->pass);
}

TEST(Structure, DegenerateRectangleRejected) {
    EXPECT_THROW(build_structure_recipe(Rect{0, 0.1, 1, 1.1}, 0.3), PreconditionError);
}

TEST(Structure, DisjointUnionPasses) {
    Structure a = build_structure_recipe(U, 0.3), b = build_structure_recipe(Rect{2, 3, 1, 2}, 0.3);
    Structure s = disjoint_union(a, b);
    EXPECT_TRUE(verify_structure(s).all_pass());
}

TEST(Axisym, LiftWithoutSwirlComponents) {
    const Structure& s = recipe();
    AxisymField u = AxisymField::of(s.f);
    Vec3 y = lift_eval(u, {0.5, 1.5, 0});
    EXPECT_EQ(y[0], 0);
    EXPECT_EQ(y[1], 0);
    EXPECT_DOUBLE_EQ(y[2], s.f.value({0.5, 1.5}));
    Vec3 z = lift_eval(AxisymField::of(s.v, s.f), {5, 0.3, 0.2});
    EXPECT_EQ(norm3(z), 0);
}

TEST(Axisym, MagnitudeEqualsF) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> x1(0, 1), r(1, 2), th(0, 2 * std::numbers::pi);
    const Structure& s = recipe();
    AxisymField u = AxisymField::of(s.v, s.f);
    for (int i = 0; i < 1000; ++i) {
        double rho = r(rng), t = th(rng), a = x1(rng);
        double f = s.f.value({a, rho});
        double m = norm3(lift_eval(u, {a, rho * std::cos(t), rho * std::sin(t)}));
        EXPECT_NEAR(m, f, 1e-10 * std::max(1.0, f));
    }
}

TEST(Axisym, RotationEquivariance) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> x1(0, 1), r(1, 2), th(0, 2 * std::numbers::pi);
    AxisymField u = AxisymField::of(recipe().v, recipe().f);
    for (int i = 0; i < 200; ++i) {
        double a = x1(rng), rho = r(rng), t0 = th(rng), t = th(rng);
        Vec3 x{a, rho * std::cos(t0), rho * std::sin(t0)};
        Vec3 Rx{a, std::cos(t) * x[1] - std::sin(t) * x[2], std::sin(t) * x[1] + std::cos(t) * x[2]};
        Vec3 ux = lift_eval(u, x), uRx = lift_eval(u, Rx);
        Vec3 Rux{ux[0], std::cos(t) * ux[1] - std::sin(t) * ux[2], std::sin(t) * ux[1] + std::cos(t) * ux[2]};
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(uRx[k], Rux[k], 1e-10 * (1 + norm3(ux)));
    }
}

TEST(Axisym, LOperatorExamples) {
    ScalarField2D x2([](Point2 p) { return Jet2::x2(p.x2); }, {U});
    ScalarField2D x2sq([](Point2 p) { return Jet2::x2(p.x2) * Jet2::x2(p.x2); }, {U});
    auto g = [](double x) { return std::sin(3 * x); };
    ScalarField2D sep([](Point2 p) { return Jet2::x2(p.x2) * lift_x1(Jet1{std::sin(3 * p.x1), 3 * std::cos(3 * p.x1), -9 * std::sin(3 * p.x1), 0}); },
                      {U});
    for (Point2 p : {Point2{0.2, 1.1}, Point2{0.7, 1.9}, Point2{0.5, 1.5}}) {
        EXPECT_NEAR(Lf_eval(x2, p), 0.0, 1e-14);
        EXPECT_NEAR(Lf_eval(x2sq, p), 3.0, 1e-13);
        EXPECT_NEAR(Lf_eval(sep, p), -9 * p.x2 * g(p.x1), 1e-12);
    }
}

TEST(Axisym, IndicatorNorms) {
    AxisymField chi = AxisymField::of(ScalarField2D::indicator(U));
    EXPECT_NEAR(lp_norm(chi, 2), std::sqrt(3 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(lp_norm(chi, 1), 3 * std::numbers::pi, 1e-11);
    EXPECT_EQ(lp_norm(chi, INFINITY), 1.0);
    for (double p : {1.0, 2.0, 3.5, double(INFINITY)}) EXPECT_EQ(lp_norm(AxisymField{}, p), 0.0);
    // the frame U \ U_0.1 as four disjoint strips
    ScalarField2D frame = ScalarField2D::indicator({0, 1, 1, 1.1}) + ScalarField2D::indicator({0, 1, 1.9, 2}) +
                          ScalarField2D::indicator({0, 0.1, 1.1, 1.9}) + ScalarField2D::indicator({0.9, 1, 1.1, 1.9});
    double expect = std::sqrt(2 * std::numbers::pi * (1.5 - 0.8 * (1.9 * 1.9 - 1.1 * 1.1) / 2));
    EXPECT_NEAR(lp_norm(AxisymField::of(frame), 2), expect, 1e-12);
}

// 2D reduction against 3D Monte Carlo on one fixture
TEST(Axisym, NormMatchesMonteCarlo) {
    const Structure& s = recipe();
    AxisymField u = AxisymField::of(s.f);
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> x1(0, 1), yz(-2, 2);
    const int n = 400000;
    double sum = 0;
    for (int i = 0; i < n; ++i) {
        Vec3 x{x1(rng), yz(rng), yz(rng)};
        double m = norm3(lift_eval(u, x));
        sum += m * m;
    }
    double mc = std::sqrt(16.0 * sum / n);
    EXPECT_NEAR(mc, lp_norm(u, 2), 0.01 * lp_norm(u, 2));
}

TEST(Axisym, IdentitiesOnRecipe) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> x1(0.05, 0.95), r(1.05, 1.95), th(0, 2 * std::numbers::pi);
    const Structure& s = recipe();
    AxisymField full = AxisymField::of(s.v, s.f), bare = AxisymField::of(s.f);
    for (int i = 0; i < 100; ++i) {
        double rho = r(rng), t = th(rng), a = x1(rng);
        IdentityResiduals res = axisym_identities(full, {a, rho * std::cos(t), rho * std::sin(t)});
        EXPECT_LT(res.divergence, 1e-4);
        IdentityResiduals b = axisym_identities(bare, {a, rho, 0});
        EXPECT_LT(b.divergence, 1e-5);
        EXPECT_LT(b.d3_magnitude, 1e-6);
        EXPECT_LT(b.laplacian, 1e-5);
        EXPECT_LT(axisym_identities(full, {a, rho, 0}).d3_magnitude, 1e-6);
    }
}

TEST(Axisym, LaplacianIdentityOnSmoothField) {
    ScalarField2D g([](Point2 p) { return Jet2::x2(p.x2) * Jet2::x2(p.x2) * (Jet2::x1(p.x1) + 1.0); }, {U});
    AxisymField u = AxisymField::of(g);
    for (Point2 p : {Point2{0.3, 1.3}, Point2{0.5, 1.5}, Point2{0.8, 1.7}}) {
        IdentityResiduals r = axisym_identities(u, {p.x1, p.x2, 0});
        // the stencil is exact on cubics; what is left is round-off of order 1e-16 / h^2
        EXPECT_LT(r.laplacian, 1e-6);
        EXPECT_LT(r.divergence, 1e-8);
        EXPECT_NEAR(Lf_eval(g, p), 3 * (1 + p.x1), 1e-12);
    }
}

TEST(Axisym, SupFLf) {
    ScalarField2D x2sq([](Point2 p) { return Jet2::x2(p.x2) * Jet2::x2(p.x2); }, {U});
    EXPECT_NEAR(sup_f_Lf(x2sq), 12.0, 1e-12);
    EXPECT_EQ(sup_f_Lf(ScalarField2D::zero()), 0.0);
    double s = sup_f_Lf(build_cutoff(U, 0.3, 1.0).f);
    EXPECT_TRUE(std::isfinite(s));
    EXPECT_GT(s, 0);
}
