#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "field.hpp"
#include "mollify.hpp"
#include "quadrature.hpp"
#include "report.hpp"

namespace nsi {

// 0 for t <= 0, 1 for t >= 1, psi(t)/(psi(t)+psi(1-t)) with psi(t) = exp(-1/t) between
inline Jet1 smooth_step_jet(double t) {
    constexpr double flat = 1.0 / 750;  // exp(-750) is below the double range
    if (t <= flat) return {};
    if (t >= 1 - flat) return {1, 0, 0, 0};
    Jet1 x = Jet1::variable(t);
    Jet1 a = exp(-1.0 / x), b = exp(-1.0 / (1.0 - x));
    return a / (a + b);
}

// log h and the ratios h'/h, h''/h, h'''/h; finite for every x > 0
struct LogRatios {
    double logv = 0, r1 = 0, r2 = 0, r3 = 0;
};

inline Jet1 bump_jet(double x) {
    if (x <= 0) return {};
    if (x >= 1) return {1, 0, 0, 0};
    if (x < 0.5) {
        if (x < 0.0366) return {};
        double ix = 1 / x, ix2 = ix * ix, g = std::exp(-ix2);
        double ix3 = ix2 * ix, ix4 = ix2 * ix2, ix5 = ix4 * ix;
        return {g, 2 * ix3 * g, (4 * ix4 * ix2 - 6 * ix4) * g,
                (8 * ix4 * ix5 - 36 * ix5 * ix2 + 24 * ix5) * g};
    }
    Jet1 X = Jet1::variable(x);
    Jet1 g = exp(-1.0 / (X * X));
    Jet1 t = 2.0 * X - 1.0;
    Jet1 w = compose(t, smooth_step_jet(t.v));
    return (1.0 - w) * g + w;
}

inline LogRatios bump_ratios(double x) {
    if (x <= 0) {
        double nan = std::numeric_limits<double>::quiet_NaN();
        return {-std::numeric_limits<double>::infinity(), nan, nan, nan};
    }
    if (x >= 1) return {};
    if (x < 0.5) {
        double ix = 1 / x, ix2 = ix * ix, ix3 = ix2 * ix, ix4 = ix2 * ix2, ix5 = ix4 * ix;
        return {-ix2, 2 * ix3, 4 * ix4 * ix2 - 6 * ix4, 8 * ix4 * ix5 - 36 * ix5 * ix2 + 24 * ix5};
    }
    Jet1 j = bump_jet(x);
    return {std::log(j.v), j.d1 / j.v, j.d2 / j.v, j.d3 / j.v};
}

struct BumpProfile {
    ScalarField1D h;
    double C_h = 1;

    Jet1 jet(double x) const { return bump_jet(x); }
    LogRatios ratios(double x) const { return bump_ratios(x); }
};

inline const BumpProfile& build_bump() {
    static const BumpProfile b = [] {
        BumpProfile p;
        p.h = ScalarField1D([](double x) { return bump_jet(x); }, {0.0, 0.5, 1.0});
        double mx = 0;
        const int n = 100000;
        for (int i = 0; i <= n; ++i) {
            Jet1 j = bump_jet(static_cast<double>(i) / n);
            mx = std::max({mx, std::abs(j.v), std::abs(j.d1), std::abs(j.d2)});
        }
        p.C_h = 1.05 * mx;
        return p;
    }();
    return b;
}

// f_i(x) = h((x-a)/eta) h((b-x)/eta)
struct CutoffProfile1D {
    double a = 0, b = 1, eta = 0.1;

    Jet1 jet(double x) const {
        Jet1 hu = bump_jet((x - a) / eta), hw = bump_jet((b - x) / eta);
        double e1 = 1 / eta, e2 = e1 * e1, e3 = e2 * e1;
        Jet1 U{hu.v, hu.d1 * e1, hu.d2 * e2, hu.d3 * e3};
        Jet1 W{hw.v, -hw.d1 * e1, hw.d2 * e2, -hw.d3 * e3};
        return U * W;
    }
    // log f_i, f_i'/f_i, f_i''/f_i for a < x < b
    LogRatios ratios(double x) const {
        LogRatios u = bump_ratios((x - a) / eta), w = bump_ratios((b - x) / eta);
        return {u.logv + w.logv, (u.r1 - w.r1) / eta, (u.r2 + w.r2 - 2 * u.r1 * w.r1) / (eta * eta), 0};
    }
};

// log f and the derivative ratios of a positive product field f1(x1) f2(x2)
struct CutoffRatios {
    double logf = 0;
    double r1 = 0, r2 = 0, r11 = 0, r12 = 0, r22 = 0;
    double L_over_f = 0;  // Lf / f, same sign as Lf
};

struct CertifiedCutoff {
    Rect rect;
    double eta = 0.1, a = 1;
    double C_h = 1;
    double c_prime = 0;
    double log_c = 0;  // c = exp(log_c) underflows for realistic c'
    double c = 0;
    double eta1 = 0, eta2 = 0;
    double m_diag = 0, M_diag = 0;
    double worst_Lf_margin = 0;  // min of Lf/f on the certified frame
    double worst_log_c_margin = 0;
    CheckList checks;
    CutoffProfile1D p1, p2;
    ScalarField2D f;

    bool inside(Point2 p) const { return rect.contains(p); }
    Jet2 jet(Point2 p) const {
        if (!rect.contains(p)) return {};
        return lift_x1(p1.jet(p.x1)) * lift_x2(p2.jet(p.x2));
    }
    double value(Point2 p) const { return jet(p).v; }
    CutoffRatios ratios(Point2 p) const {
        LogRatios q1 = p1.ratios(p.x1), q2 = p2.ratios(p.x2);
        CutoffRatios r;
        r.logf = q1.logv + q2.logv;
        r.r1 = q1.r1;
        r.r2 = q2.r1;
        r.r11 = q1.r2;
        r.r22 = q2.r2;
        r.r12 = q1.r1 * q2.r1;
        r.L_over_f = r.r11 + r.r22 + r.r2 / p.x2 - 1 / (p.x2 * p.x2);
        return r;
    }
};

inline double closed_form_c_prime(double a, double C_h) {
    double ma = std::min(1.0, a);
    return ma / 3 * std::min(1.0, std::exp(-9 / (2 * ma * ma)) / (2 * std::sqrt(C_h)));
}

inline CertifiedCutoff make_cutoff(const Rect& rect, double eta, double a) {
    if (!(eta > 0 && eta < 1)) throw PreconditionError("eta must lie in (0,1)");
    if (!(eta < rect.min_side() / 2)) throw PreconditionError("eta must be below half the shorter side");
    if (!(a > 0) || a > rect.a2 * (1 + 1e-12)) throw PreconditionError("a must be positive and at most dist(U, axis)");
    const BumpProfile& bump = build_bump();
    CertifiedCutoff cc;
    cc.rect = rect;
    cc.eta = eta;
    cc.a = a;
    cc.C_h = bump.C_h;
    double ma = std::min(1.0, a);
    cc.c_prime = closed_form_c_prime(a, bump.C_h);
    cc.log_c = -8 / (cc.c_prime * cc.c_prime);
    cc.c = std::exp(cc.log_c);
    cc.eta1 = cc.c_prime * eta;
    cc.eta2 = eta / 3 * ma;
    cc.m_diag = std::exp(-9 / (ma * ma));
    cc.M_diag = 3 * bump.C_h / (eta * eta * ma * ma);
    cc.p1 = {rect.a1, rect.b1, eta};
    cc.p2 = {rect.a2, rect.b2, eta};
    auto p1 = cc.p1, p2 = cc.p2;
    cc.f = ScalarField2D(
        [rect, p1, p2](Point2 p) {
            if (!rect.contains(p)) return Jet2{};
            return lift_x1(p1.jet(p.x1)) * lift_x2(p2.jet(p.x2));
        },
        {rect}, eta);
    return cc;
}

namespace detail {

inline void require(const Check& c) {
    if (!c.pass)
        throw CertificationError(c.name, c.witness,
                                 "certification failed: " + c.name + " (margin " + fmt17(c.margin) + ")");
}

// nodes in (lo, lo + w), quadratically graded toward lo
inline std::vector<double> edge_nodes(double lo, double w, int n) {
    std::vector<double> x;
    for (int i = 0; i < n; ++i) {
        double s = (i + 0.5) / n;
        x.push_back(lo + w * s * s);
    }
    return x;
}

}  // namespace detail

inline CheckList certify_cutoff(const CertifiedCutoff& cc, int n = 200) {
    CheckList out;
    const Rect& U = cc.rect;
    {
        MarginTracker t;
        Rect core = eta_subset(U, cc.eta);
        core = {core.a1 + 1e-12, core.b1 - 1e-12, core.a2 + 1e-12, core.b2 - 1e-12};
        for (Point2 p : sample_grid(core, 0.0, 40, 40)) t.see(cc.value(p) == 1.0 ? 1.0 : -1.0, p.x1, p.x2);
        for (int i = 0; i <= 40; ++i) {
            double s = static_cast<double>(i) / 40;
            for (Point2 p : {Point2{core.a1 + s * core.width(), core.a2}, Point2{core.a1 + s * core.width(), core.b2},
                             Point2{core.a1, core.a2 + s * core.height()}, Point2{core.b1, core.a2 + s * core.height()}})
                t.see(cc.value(p) == 1.0 ? 1.0 : -1.0, p.x1, p.x2);
        }
        out.add(t.check("plateau_on_U_eta", "f = 1 on U_eta"));
    }
    {
        MarginTracker t;
        for (Point2 p : sample_grid(U, cc.eta, n, n)) {
            double v = cc.value(p);
            t.see(std::min(v, 1 - v), p.x1, p.x2);
        }
        out.add(t.check("range_0_1", "0 <= f <= 1", false));
    }
    {
        // f > c on U_{c'eta/2}, compared in log form
        MarginTracker t;
        Rect inner = eta_subset(U, cc.eta1 / 2);
        for (Point2 p : sample_grid(inner, cc.eta, n, n)) {
            if (!U.contains(p)) continue;
            CutoffRatios r = cc.ratios(p);
            t.see(r.logf - cc.log_c, p.x1, p.x2);
        }
        Check c = t.check("f_above_c", "f > c on U_{c' eta/2}");
        c.note = "margin is log f - log c";
        out.add(c);
    }
    MarginTracker lf;  // all Lf/f samples near the boundary
    {
        // Lf > 0 on U \ U_{c'eta}: per-axis nodes with edge layers of width c'eta
        auto xs = sample_axis(U.a1, U.b1, cc.eta1, n);
        auto ys = sample_axis(U.a2, U.b2, cc.eta1, n);
        Rect inner = eta_subset(U, cc.eta1);
        MarginTracker t;
        for (double x : xs)
            for (double y : ys) {
                Point2 p{x, y};
                if (inner.contains(p) || !U.contains(p)) continue;
                t.see(cc.ratios(p).L_over_f, x, y);
                lf.see(cc.ratios(p).L_over_f, x, y);
            }
        Check c = t.check("Lf_positive_frame", "Lf > 0 on U \\ U_{c' eta}");
        c.note = "margin is min Lf/f (sign-equivalent to Lf)";
        out.add(c);
    }
    {
        // claim g2 > f2''/4 > 0 in the eta'' layers of the x2 sides
        MarginTracker t;
        std::vector<double> nodes = detail::edge_nodes(U.a2, cc.eta2, 400);
        for (double y : detail::edge_nodes(U.b2 - cc.eta2, cc.eta2, 400)) nodes.push_back(2 * U.b2 - cc.eta2 - y);
        for (double y : nodes) {
            if (!(y > U.a2 && y < U.b2)) continue;  // rounds onto the edge when eta'' is a few ulps
            LogRatios q = cc.p2.ratios(y);
            double g2 = q.r2 + q.r1 / y - 1 / (y * y);
            t.see(std::min(g2 - q.r2 / 4, q.r2 / 4), U.center().x1, y);
        }
        Check c = t.check("claim_g2", "g2 > f2''/4 > 0 near x2-edges");
        c.note = "margin in units of f2";
        out.add(c);
    }
    {
        MarginTracker t;
        for (int cx = 0; cx < 2; ++cx)
            for (int cy = 0; cy < 2; ++cy) {
                auto xs = detail::edge_nodes(0, cc.eta2, 100);
                auto ys = detail::edge_nodes(0, cc.eta2, 100);
                for (double dx : xs)
                    for (double dy : ys) {
                        Point2 p{cx ? U.b1 - dx : U.a1 + dx, cy ? U.b2 - dy : U.a2 + dy};
                        if (!U.contains(p)) continue;
                        double m = cc.ratios(p).L_over_f;
                        t.see(m, p.x1, p.x2);
                        lf.see(m, p.x1, p.x2);
                    }
            }
        out.add(t.check("Lf_positive_corners", "Lf > 0 on the eta''-corners"));
    }
    {
        MarginTracker t;
        auto mid1 = sample_axis(U.a1 + cc.eta2, U.b1 - cc.eta2, 0.0, 100);
        auto mid2 = sample_axis(U.a2 + cc.eta2, U.b2 - cc.eta2, 0.0, 100);
        auto e = detail::edge_nodes(0, cc.eta1, 50);
        for (double x : mid1)
            for (double d : e)
                for (Point2 p : {Point2{x, U.a2 + d}, Point2{x, U.b2 - d}}) {
                    if (!U.contains(p)) continue;
                    double m = cc.ratios(p).L_over_f;
                    t.see(m, p.x1, p.x2);
                    lf.see(m, p.x1, p.x2);
                }
        for (double y : mid2)
            for (double d : e)
                for (Point2 p : {Point2{U.a1 + d, y}, Point2{U.b1 - d, y}}) {
                    if (!U.contains(p)) continue;
                    double m = cc.ratios(p).L_over_f;
                    t.see(m, p.x1, p.x2);
                    lf.see(m, p.x1, p.x2);
                }
        out.add(t.check("Lf_positive_strips", "Lf > 0 on the eta'-strips"));
    }
    {
        Check c;
        c.name = "diag_m_M";
        c.tag = "m/4 - eta'^2 M > 0";
        c.margin = cc.m_diag / 4 - cc.eta1 * cc.eta1 * cc.M_diag;
        c.pass = c.margin > 0;
        out.add(c);
    }
    return out;
}

// cutoff with all invariants grid-verified
inline CertifiedCutoff build_cutoff(const Rect& rect, double eta, double a, int n = 200) {
    CertifiedCutoff cc = make_cutoff(rect, eta, a);
    cc.checks = certify_cutoff(cc, n);
    for (const auto& c : cc.checks.checks) detail::require(c);
    double w = std::numeric_limits<double>::infinity();
    for (const char* k : {"Lf_positive_frame", "Lf_positive_corners", "Lf_positive_strips"})
        w = std::min(w, cc.checks.find(k)->margin);
    cc.worst_Lf_margin = w;
    cc.worst_log_c_margin = cc.checks.find("f_above_c")->margin;
    return cc;
}

// plateau phi = Psi(f) with Psi = 0 below c_lo and 1 above c_hi
struct LevelPlateau {
    double c_lo = 0.1, c_hi = 0.15;

    Jet1 psi(double y) const {
        double w = c_hi - c_lo;
        Jet1 s = smooth_step_jet((y - c_lo) / w);
        return {s.v, s.d1 / w, s.d2 / (w * w), s.d3 / (w * w * w)};
    }
    Jet2 apply(const Jet2& f) const { return compose(f, psi(f.v)); }
};

// smallest cutoff value at which Lf/f <= 0 on a layered grid
inline double level_threshold(const CertifiedCutoff& cc, int n = 400) {
    double best = 1.0;
    for (Point2 p : sample_grid(cc.rect, cc.eta, n, n)) {
        CutoffRatios r = cc.ratios(p);
        if (!(r.L_over_f > 0)) best = std::min(best, std::exp(r.logf));
    }
    return best;
}

// checks {f < c_hi} inside {Lf > 0} on a grid offset from the one used to pick the threshold
inline Check certify_level_plateau(const CertifiedCutoff& cc, const LevelPlateau& lp, int n = 301) {
    MarginTracker t;
    for (Point2 p : sample_grid(cc.rect, cc.eta, n, n)) {
        CutoffRatios r = cc.ratios(p);
        if (std::exp(r.logf) < lp.c_hi) t.see(r.L_over_f, p.x1, p.x2);
    }
    Check c = t.check("Lf_positive_off_level_plateau", "Lf > 0 in U \\ {phi = 1}");
    c.note = "margin is min Lf/f over {f < c_hi}";
    return c;
}

inline LevelPlateau make_level_plateau(const CertifiedCutoff& cc, double hi_factor = 0.9, double lo_factor = 0.75) {
    double L = level_threshold(cc);
    LevelPlateau lp{lo_factor * hi_factor * L, hi_factor * L};
    detail::require(certify_level_plateau(cc, lp));
    return lp;
}

enum class PlateauKind { level_set, rectangular };

// product of 1D ramps: 1 on U_{c'eta}, 0 outside U_{c'eta/2}
inline ScalarField2D rectangular_plateau(const Rect& U, double width) {
    auto ramp = [width](double d) {
        double half = width / 2;
        Jet1 s = smooth_step_jet((d - half) / half);
        return Jet1{s.v, s.d1 / half, s.d2 / (half * half), s.d3 / (half * half * half)};
    };
    return ScalarField2D(
        [U, ramp](Point2 p) {
            if (!U.contains(p)) return Jet2{};
            Jet1 l1 = ramp(p.x1 - U.a1), r1 = ramp(U.b1 - p.x1);
            Jet1 l2 = ramp(p.x2 - U.a2), r2 = ramp(U.b2 - p.x2);
            Jet1 g1 = l1 * Jet1{r1.v, -r1.d1, r1.d2, -r1.d3};
            Jet1 g2 = l2 * Jet1{r2.v, -r2.d1, r2.d2, -r2.d3};
            return lift_x1(g1) * lift_x2(g2);
        },
        {U}, width);
}

// J_eps of the indicator of 1 < r < 2, in annulus units
struct RadialProfile {
    double eps = 0.25;

    double cdf(double z) const {
        double zz = std::clamp(z / eps, -1.0, 1.0);
        if (zz <= -1) return 0;
        const GaussRule& q = gauss_legendre(64);
        double h = (zz + 1) / 2, m = (zz - 1) / 2, s = 0;
        for (size_t i = 0; i < q.x.size(); ++i) s += q.w[i] * mollifier_kernel(m + h * q.x[i]).v;
        return s * h;
    }
    Jet1 G(double r) const {
        Jet1 k1 = mollifier_kernel((r - 1) / eps), k2 = mollifier_kernel((r - 2) / eps);
        double e1 = 1 / eps, e2 = e1 * e1, e3 = e2 * e1;
        return {cdf(r - 1) - cdf(r - 2), (k1.v - k2.v) * e1, (k1.d1 - k2.d1) * e2, (k1.d2 - k2.d2) * e3};
    }
    double r_min() const { return 1 - eps; }
    double r_max() const { return 2 + eps; }
};

struct StructureComponent {
    CertifiedCutoff cutoff;
    double f_scale = 1;
    PlateauKind plateau = PlateauKind::level_set;
    LevelPlateau level;
};

struct Structure {
    Rect rect;
    std::vector<Rect> rects;
    PlanarVectorField v;
    ScalarField2D f;
    ScalarField2D phi;
    std::vector<StructureComponent> comps;
    CheckList report;

    const StructureComponent* component_at(Point2 p) const {
        for (const auto& c : comps)
            if (c.cutoff.rect.contains(p)) return &c;
        return nullptr;
    }
    std::optional<CutoffRatios> f_ratios(Point2 p) const {
        const StructureComponent* c = component_at(p);
        if (!c) return std::nullopt;
        CutoffRatios r = c->cutoff.ratios(p);
        r.logf += std::log(c->f_scale);
        return r;
    }

    Structure with_v_scaled(double a) const {
        Structure s = *this;
        s.v = v.scaled(a);
        return s;
    }
    Structure with_f_scaled(double k) const {
        Structure s = *this;
        s.f = f.scaled(k);
        for (auto& c : s.comps) c.f_scale *= k;
        return s;
    }
};

inline Structure disjoint_union(const Structure& a, const Structure& b) {
    for (const Rect& r : a.rects)
        for (const Rect& q : b.rects)
            if (!r.disjoint(q)) throw PreconditionError("structures must have disjoint rectangles");
    Structure s;
    s.rect = a.rect;
    s.rects = a.rects;
    s.rects.insert(s.rects.end(), b.rects.begin(), b.rects.end());
    s.v = a.v + b.v;
    s.f = a.f + b.f;
    s.phi = a.phi + b.phi;
    s.comps = a.comps;
    s.comps.insert(s.comps.end(), b.comps.begin(), b.comps.end());
    return s;
}

// rotational annulus field w = (-y2, y1) G(|y|), y = (x - center)/scale, so div w = 0; v = w / x2
inline PlanarVectorField annulus_field(Point2 center, double scale, RadialProfile rp, double amplitude = 1.0) {
    auto comp = [center, scale, rp, amplitude](Point2 p, int which) {
        double y1v = (p.x1 - center.x1) / scale, y2v = (p.x2 - center.x2) / scale;
        double r = std::hypot(y1v, y2v);
        if (r <= rp.r_min() || r >= rp.r_max()) return Jet2{};
        Jet2 y1{y1v, 1 / scale, 0, 0, 0, 0}, y2{y2v, 0, 1 / scale, 0, 0, 0};
        Jet2 rr = sqrt(y1 * y1 + y2 * y2);
        Jet2 G = compose(rr, rp.G(r));
        Jet2 w = which == 1 ? -(y2 * G) : y1 * G;
        return amplitude * w / Jet2::x2(p.x2);
    };
    double R = rp.r_max() * scale;
    Rect sup{center.x1 - R, center.x1 + R, center.x2 - R, center.x2 + R};
    return {ScalarField2D([comp](Point2 p) { return comp(p, 1); }, {sup}),
            ScalarField2D([comp](Point2 p) { return comp(p, 2); }, {sup})};
}

inline CheckList verify_structure(const Structure& s, int n = 200);

inline Structure build_structure_recipe(const Rect& rect, double eta, PlateauKind kind = PlateauKind::level_set,
                                        int n = 200) {
    if (!(eta > 0 && eta < 1) || !(eta < rect.min_side() / 2))
        throw PreconditionError("rectangle too small for the eta-frame");
    Rect core = eta_subset(rect, eta);
    RadialProfile rp;
    double scale = 0.9 * core.min_side() / 2 / rp.r_max();
    if (!(scale > 1e-6 * rect.min_side())) throw PreconditionError("rectangle too small for the annulus");
    Point2 ctr = rect.center();
    CertifiedCutoff cc = build_cutoff(rect, eta, std::min(1.0, rect.a2), n);

    Structure s;
    s.rect = rect;
    s.rects = {rect};
    s.v = annulus_field(ctr, scale, rp);
    double vmax = rp.r_max() / (ctr.x2 - rp.r_max() * scale);  // |w| <= r_max G, G <= 1
    double kf = std::max(1.0, 1.25 * vmax);
    s.f = cc.f.scaled(kf);

    StructureComponent comp;
    comp.cutoff = cc;
    comp.f_scale = kf;
    comp.plateau = kind;
    if (kind == PlateauKind::level_set) {
        comp.level = make_level_plateau(cc);
        auto lp = comp.level;
        auto cf = cc.f;
        s.phi = ScalarField2D(
            [lp, cf](Point2 p) {
                Jet2 j = cf.jet(p);
                if (j.v <= lp.c_lo) return Jet2{};
                return lp.apply(j);
            },
            {rect}, eta);
    } else {
        s.phi = rectangular_plateau(rect, cc.eta1);
    }
    s.comps = {comp};
    s.report = verify_structure(s, n);
    for (const auto& c : s.report.checks) detail::require(c);
    return s;
}

inline CheckList verify_structure(const Structure& s, int n) {
    CheckList out;
    MarginTracker sup, fv, div, lf, vin;
    bool any_v = false;
    for (const Rect& R : s.rects) {
        double layer = 0;
        for (const auto& c : s.comps)
            if (c.cutoff.rect == R) layer = c.cutoff.eta;
        for (Point2 p : sample_grid(R, layer, n, n)) {
            auto r = s.f_ratios(p);
            double logf = r ? r->logf : -std::numeric_limits<double>::infinity();
            sup.see(std::isfinite(logf) ? 1.0 : -1.0, p.x1, p.x2);
            double vm = s.v.magnitude(p);
            if (vm > 0) {
                any_v = true;
                fv.see(s.f.value(p) - vm, p.x1, p.x2);
                vin.see(s.phi.value(p) == 1.0 ? 0.0 : -1.0, p.x1, p.x2);
                Jet2 a = s.v.v1.jet(p), b = s.v.v2.jet(p);
                double d = p.x2 * (a.d1 + b.d2) + b.v;
                div.see(1e-6 - std::abs(d), p.x1, p.x2);
            } else if (!std::isfinite(logf)) {
                fv.see(-1.0, p.x1, p.x2);
            }
            double ph = s.phi.value(p);
            if (ph < 1.0 && r) lf.see(r->L_over_f, p.x1, p.x2);
        }
        // outside the closure f must vanish
        double d = 0.05 * R.min_side();
        for (int i = 0; i < 64; ++i) {
            double t = (i + 0.5) / 64;
            for (Point2 p : {Point2{R.a1 - d, R.a2 + t * R.height()}, Point2{R.b1 + d, R.a2 + t * R.height()},
                             Point2{R.a1 + t * R.width(), R.a2 - std::min(d, R.a2 / 2)},
                             Point2{R.a1 + t * R.width(), R.b2 + d}}) {
                bool elsewhere = false;
                for (const Rect& Q : s.rects) elsewhere = elsewhere || Q.contains_closed(p);
                if (!elsewhere) sup.see(s.f.value(p) == 0.0 ? 1.0 : -1.0, p.x1, p.x2);
            }
        }
    }
    out.add(sup.check("support_equality", "supp f = closure of U"));
    Check c = fv.check("f_greater_than_v", "f > |v| in U");
    if (!any_v) c.note = "v vanishes on the grid; clause reduces to f > 0";
    out.add(c);
    Check dv = div.check("div_x2v_zero", "div(x2 v) = 0", false);
    if (!any_v) dv.pass = true;
    out.add(dv);
    Check l = lf.check("Lf_positive_off_plateau", "Lf > 0 in U \\ {phi = 1}");
    l.note = "margin is min Lf/f";
    out.add(l);
    Check vi = vin.check("supp_v_in_plateau", "supp v inside {phi = 1}", false);
    if (!any_v) vi.pass = true;
    out.add(vi);
    return out;
}

}  // end of namespace nsi
