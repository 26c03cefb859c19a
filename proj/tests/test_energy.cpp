#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "nsi/energy.hpp"

using namespace nsi;

namespace {

const Rect U{0, 1, 1, 2};

const SynthResult& coarse_run() {
    static const SynthResult r = synthesize(U, 0.5, 1.0, EnergyProfile::linear(1, 0, 1));
    return r;
}

const Structure& plain_structure() {
    static const Structure s = build_structure_recipe(U, 0.3).with_v_scaled(0);
    return s;
}

}  // namespace

TEST(Profile, ParseKinds) {
    EnergyProfile a = EnergyProfile::parse("linear:1,0", 1);
    EXPECT_EQ(a(0), 1.0);
    EXPECT_EQ(a(0.25), 0.75);
    EXPECT_EQ(a(1), 0.0);
    EnergyProfile b = EnergyProfile::parse("const:0.7", 2);
    EXPECT_EQ(b(1.3), 0.7);
    EXPECT_EQ(b.T(), 2.0);
    EXPECT_THROW(EnergyProfile::parse("linear:1", 1), PreconditionError);
    EXPECT_THROW(EnergyProfile::parse("wave:1", 1), PreconditionError);
    EXPECT_THROW(EnergyProfile::parse("const:x", 1), PreconditionError);
}

TEST(Profile, CsvWithJump) {
    std::string path = ::testing::TempDir() + "profile_jump.csv";
    {
        std::ofstream o(path);
        o << "t,e\n0,1\n0.5,0.9\n0.5,0.5\n1,0.2\n";
    }
    EnergyProfile e = EnergyProfile::parse("csv:" + path, 1);
    ASSERT_EQ(e.jump_times().size(), 1u);
    EXPECT_EQ(e.jump_times()[0], 0.5);
    EXPECT_EQ(e(0.5), 0.5);
    EXPECT_NEAR(e(0.25), 0.95, 1e-15);
    EXPECT_EQ(e.cuts(), (std::vector<double>{0, 0.5, 1}));
}

TEST(Profile, RejectsIncreasingOrNegative) {
    EXPECT_THROW(EnergyProfile::from_knots({{0, 1}, {1, 1.2}}), PreconditionError);
    EXPECT_THROW(EnergyProfile::from_knots({{0, -1}, {1, -2}}), PreconditionError);
    EXPECT_THROW(EnergyProfile::from_knots({{0.1, 1}, {1, 0}}), PreconditionError);
    EXPECT_THROW(EnergyProfile::from_knots({{0, 1}, {1, 0.5}, {1, 0.2}}), PreconditionError);
}

TEST(Smoothing, ConstantProfile) {
    SmoothedProfile s = smooth_profile(EnergyProfile::constant(1, 1), 0.4, 1);
    EXPECT_DOUBLE_EQ(s.zeta, 0.1);
    for (double t : {0.0, 0.1, 0.5, 0.93, 1.0}) EXPECT_NEAR(s(t), std::sqrt(1.2 - 0.1 * t), 1e-12) << t;
    EXPECT_TRUE(s.checks.all_pass());
}

TEST(Smoothing, LinearProfileSandwichAndDecay) {
    EnergyProfile e = EnergyProfile::linear(1, 0, 1);
    double eps = 0.2;
    SmoothedProfile s = smooth_profile(e, eps, 1);
    EXPECT_TRUE(s.checks.all_pass());
    for (int i = 0; i <= 1000; ++i) {
        double t = i / 1000.0;
        EXPECT_GE(s(t), e(t));
        EXPECT_LE(s.pow_at(t), e(t) * e(t) + eps);
        EXPECT_LE(s.dpow_at(t), -s.zeta * (1 - 1e-9));
        // away from e = 0 the squared bound gives the plain one
        if (e(t) >= 0.5) EXPECT_LE(s(t), e(t) + eps);
    }
}

TEST(Smoothing, ZeroProfileStillDecays) {
    double eps = 0.2, T = 1;
    SmoothedProfile s = smooth_profile(EnergyProfile::constant(0, T), eps, T);
    for (double t : {0.0, 0.5, 1.0}) {
        EXPECT_NEAR(s(t), std::sqrt(eps / 2 - eps * t / (4 * T)), 1e-15);
        EXPECT_GT(s(t), 0);
    }
}

TEST(Smoothing, Preconditions) {
    EXPECT_THROW(smooth_profile(EnergyProfile::constant(1, 1), 0, 1), PreconditionError);
    EXPECT_THROW(smooth_profile(EnergyProfile::constant(1, 1), 0.1, 2), PreconditionError);
}

// the example's c^2 = 0.25 sits on the open bound, so the largest admissible c is used
TEST(StagePlanning, FiveStagesForQuarterDecay) {
    SmoothedProfile s = SmoothedProfile::from_power(ScalarField1D::polynomial({1, -0.9}), 1, 2, 0.9);
    StagePlan pl = plan_stages(s, 0.5, std::nextafter(0.5, 0.0));
    EXPECT_EQ(pl.K, 5);
    EXPECT_LT(std::pow(0.75, 5), 0.25);
    EXPECT_GE(std::pow(0.75, 4), 0.25);
    EXPECT_THROW(plan_stages(s, 0.5, 0.5), PreconditionError);
}

TEST(StagePlanning, LinearSquareClosedForm) {
    SmoothedProfile s = SmoothedProfile::from_power(ScalarField1D::polynomial({1, -0.5}), 2, 2, 0.5);
    StagePlan pl = plan_stages(s, 0.3, std::sqrt(0.19));
    ASSERT_GE(pl.K, 2);
    EXPECT_NEAR(pl.t[1], 0.38, 1e-12);
    EXPECT_NEAR(pl.t[2], 2 * (1 - 0.81 * 0.81), 1e-12);
    EXPECT_NEAR(pl.t[2], 0.6878, 1e-12);
    for (int k = 0; k <= pl.K; ++k) EXPECT_NEAR(s.pow_at(pl.t[k]), std::pow(0.81, k), 1e-12);
    EXPECT_LT(std::pow(0.81, pl.K), 0.09);
    EXPECT_GE(std::pow(0.81, pl.K - 1), 0.09);
}

TEST(StagePlanning, LargerCGivesFewerStages) {
    SmoothedProfile s = SmoothedProfile::from_power(ScalarField1D::polynomial({1, -0.9}), 1, 2, 0.9);
    int prev = 1 << 30;
    for (double c : {0.1, 0.2, 0.3, 0.4, 0.49}) {
        int K = plan_stages(s, 0.4, c).K;
        EXPECT_LE(K, prev);
        prev = K;
    }
}

TEST(StagePlanning, InsufficientDecayThrows) {
    SmoothedProfile s = SmoothedProfile::from_power(ScalarField1D::polynomial({1, -0.01}), 1, 2, 0.01);
    EXPECT_THROW(plan_stages(s, 0.1, 0.3), SizingError);
}

TEST(Synthesis, ZeroProfile) {
    SynthResult r = synthesize(U, 0.1, 1, EnergyProfile::constant(0, 1));
    EXPECT_TRUE(r.zero);
    EXPECT_EQ(r.max_deviation, 0.0);
    for (const auto& row : r.series) EXPECT_EQ(row[1], 0.0);
}

TEST(Synthesis, CoarseRunSatisfiesAllChecks) {
    const SynthResult& r = coarse_run();
    for (const auto& c : r.checks.checks) EXPECT_TRUE(c.pass) << c.name << " margin " << c.margin;
    EXPECT_LE(r.max_deviation, 0.5);
    EXPECT_EQ(r.series.size(), 100u);
    EXPECT_GT(r.nu0, 0);
    EXPECT_LE(r.nu0, r.nu0_formula);
}

TEST(Synthesis, CalibrationMu) {
    const SynthResult& r = coarse_run();
    double e0 = r.profile->operator()(0);
    EXPECT_NEAR(r.calib.mu / e0, 1 / std::sqrt(3 * std::numbers::pi), 1e-9);
    EXPECT_NEAR(detail::rect_volume(U), 3 * std::numbers::pi, 1e-14);
}

TEST(Synthesis, StageEndpointIdentities) {
    const SynthResult& r = coarse_run();
    ASSERT_FALSE(r.calib.stages.empty());
    for (const Stage& st : r.calib.stages) {
        if (st.truncated) continue;
        double e0 = st.E2(st.start), e1 = st.E2(st.t_nom);
        EXPECT_NEAR(e0, st.A * st.mass, 1e-12 * e0);
        EXPECT_NEAR(e1, (1 - st.c2) * e0, 1e-12 * e0);
    }
}

TEST(Synthesis, SupportStaysInsideU) {
    const SynthResult& r = coarse_run();
    for (const auto& st : r.solution.stages)
        for (const Rect& R : st.support) EXPECT_TRUE(R.inside(U));
}

TEST(Synthesis, CombinationAtEverySwitch) {
    const SynthResult& r = coarse_run();
    const PiecewiseSolution& u = r.solution;
    for (std::size_t i = 0; i < u.switch_times.size(); ++i) {
        double t = u.switch_times[i];
        Check c = combination_check(u.stages[i].at(t).u, u.stages[i + 1].at(t).u, 100, t);
        EXPECT_TRUE(c.pass) << t;
    }
}

TEST(Synthesis, ResidualNonpositiveOnGrid) {
    const SynthResult& r = coarse_run();
    for (const auto& st : r.solution.stages)
        for (double f : {0.1, 0.6}) {
            double t = st.t_start + f * (st.t_end - st.t_start);
            FieldSnapshot s = st.at(t);
            for (Point2 p : sample_grid(U, 0.05, 24, 24))
                for (double nu : {0.0, r.nu0 / 2, r.nu0}) EXPECT_LE(nsi_residual(s, nu, {p.x1, p.x2, 0}), 1e-8);
        }
}

TEST(AlmostConstant, InitialModeStartsExactly) {
    const Structure& s = plain_structure();
    AlmostConstant a = almost_constant(s, 0.05, 2, AlmostMode::initial);
    FieldSnapshot z = a.u.at(0);
    for (Point2 p : sample_grid(U, 0.3, 50, 50)) EXPECT_EQ(z.u.f.value(p), s.f.value(p));
    EXPECT_TRUE(a.checks.all_pass());
    EXPECT_GT(a.delta, 0);
}

TEST(AlmostConstant, PlateauDecaysMonotonically) {
    const Structure& s = plain_structure();
    AlmostConstant a = almost_constant(s, 0.05, 2, AlmostMode::initial);
    Point2 c = U.center();
    double prev = INFINITY;
    for (int i = 0; i <= 20; ++i) {
        double v = a.u.at(0.1 * i).u.f.value(c);
        EXPECT_LT(v, prev);
        EXPECT_NEAR(v * v, s.f.value(c) * s.f.value(c) - a.delta * 0.1 * i, 1e-12);
        prev = v;
    }
}

TEST(AlmostConstant, FinalModeDominates) {
    const Structure& s = plain_structure();
    AlmostConstant a = almost_constant(s, 0.05, 2, AlmostMode::final);
    FieldSnapshot end = a.u.at(2);
    for (Point2 p : sample_grid(U, 0.3, 80, 80)) EXPECT_GE(end.u.f.value(p), s.f.value(p));
    EXPECT_TRUE(a.checks.all_pass());
}

TEST(AlmostConstant, ResidualBoundedByDelta) {
    const Structure& s = plain_structure();
    AlmostConstant a = almost_constant(s, 0.05, 2, AlmostMode::initial);
    for (double t : {0.0, 1.0, 2.0}) {
        FieldSnapshot sn = a.u.at(t);
        for (Point2 p : sample_grid(U, 0.3, 40, 40)) {
            double r = nsi_residual(sn, a.nu0, {p.x1, p.x2, 0});
            EXPECT_LE(r, 1e-8);
            if (s.phi.value(p) == 1.0) EXPECT_LE(r, -a.delta / 2 + 1e-12);
        }
    }
}
