#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "axisym.hpp"
#include "pressure.hpp"
#include "report.hpp"

namespace nsi {

// a time-dependent field frozen at one instant
struct FieldSnapshot {
    AxisymField u;
    std::function<double(Point2)> dt_mag2;  // d/dt |u|^2 on the plane x3 = 0
};

struct TimeDependentField {
    double t_start = 0, t_end = 0;
    std::vector<Rect> support;  // declared bound for supp u(t), all t
    std::function<FieldSnapshot(double)> at;
    double nu0 = std::numeric_limits<double>::infinity();
    std::string name;

    static TimeDependentField zero(double t0, double t1) {
        TimeDependentField z;
        z.t_start = t0;
        z.t_end = t1;
        z.at = [](double) { return FieldSnapshot{AxisymField{}, [](Point2) { return 0.0; }}; };
        z.name = "zero";
        return z;
    }
};

// sum of two fields with disjoint support rectangles
inline TimeDependentField disjoint_sum(const TimeDependentField& a, const TimeDependentField& b) {
    for (const Rect& r : a.support)
        for (const Rect& s : b.support)
            if (!r.disjoint(s)) throw PreconditionError("supports of the summands intersect");
    if (a.t_start != b.t_start || a.t_end != b.t_end) throw PreconditionError("summands live on different intervals");
    TimeDependentField s;
    s.t_start = a.t_start;
    s.t_end = a.t_end;
    s.support = a.support;
    s.support.insert(s.support.end(), b.support.begin(), b.support.end());
    s.nu0 = std::min(a.nu0, b.nu0);
    s.name = a.name + "+" + b.name;
    auto fa = a.at, fb = b.at;
    s.at = [fa, fb](double t) {
        FieldSnapshot x = fa(t), y = fb(t);
        if (!x.u.v.is_zero() || !y.u.v.is_zero()) throw ContractError("disjoint sums are formed for v = 0 fields");
        FieldSnapshot r;
        r.u = AxisymField::of(x.u.f + y.u.f);
        auto dx = x.dt_mag2, dy = y.dt_mag2;
        r.dt_mag2 = [dx, dy](Point2 p) { return dx(p) + dy(p); };
        return r;
    };
    return s;
}

enum class Transport { vanishing, pressure };

struct NsiOptions {
    Transport transport = Transport::vanishing;
    PressureEvaluator pressure;  // src is replaced by u(t)
    double fd_step = 1e-4;
};

namespace detail {

inline double cyl_laplacian(const Jet2& g, double rho) { return g.d11 + g.d22 + g.d2 / rho; }

// u . Delta u at the planar point from the cylindrical jets
inline double u_dot_lap(const AxisymField::PlanarJets& j, double rho) {
    double r2 = rho * rho;
    return j.v1.v * cyl_laplacian(j.v1, rho) + j.v2.v * (cyl_laplacian(j.v2, rho) - j.v2.v / r2) +
           j.w.v * (cyl_laplacian(j.w, rho) - j.w.v / r2);
}

}  // namespace detail

// d_t |u|^2 - 2 nu u.Delta u + u.grad(|u|^2 + 2p) at (x, t), x on the plane x3 = 0
inline double nsi_residual(const FieldSnapshot& s, double nu, const Vec3& x, const NsiOptions& opt = {}) {
    if (x[2] != 0) throw ContractError("the NSI residual is evaluated on the plane x3 = 0 only");
    double rho = std::abs(x[1]);
    if (rho == 0) return 0.0;
    Point2 p{x[0], rho};
    auto j = s.u.planar(p);
    if (!j.inside) return 0.0;
    double r = s.dt_mag2(p) - 2 * nu * detail::u_dot_lap(j, rho);
    if (s.u.v.is_zero()) return r;
    if (opt.transport == Transport::vanishing)
        throw ContractError("transport term does not vanish for v != 0; a pressure evaluator is needed");
    PressureEvaluator pe = opt.pressure;
    pe.src = s.u;
    double h = opt.fd_step;
    auto q = [&](double a, double b) {
        double f = s.u.f.value({a, b});
        return f * f + 2 * pressure_eval(pe, a, b).value;
    };
    double q1 = (q(p.x1 + h, rho) - q(p.x1 - h, rho)) / (2 * h);
    double q2 = (q(p.x1, rho + h) - q(p.x1, rho - h)) / (2 * h);
    return r + j.v1.v * q1 + j.v2.v * q2;
}

inline double nsi_residual(const TimeDependentField& u, double nu, const Vec3& x, double t,
                           const NsiOptions& opt = {}) {
    if (x[2] != 0) throw ContractError("the NSI residual is evaluated on the plane x3 = 0 only");
    return nsi_residual(u.at(t), nu, x, opt);
}

// |u2| <= |u1| + 1e-12 on a grid of the support of u2
inline Check combination_check(const AxisymField& u1, const AxisymField& u2, int n = 150, double t = 0) {
    MarginTracker m;
    double tol = 1e-12;
    bool fail = false;
    std::array<double, 3> at{0, 0, t};
    double worst_excess = -std::numeric_limits<double>::infinity();
    for (const Rect& r : u2.support()) {
        for (Point2 p : sample_grid(r, u2.f.layer(), n, n)) {
            double a = std::abs(u1.f.value(p)), b = std::abs(u2.f.value(p));
            m.see(a - b, p.x1, p.x2, t);
            if (b - a > worst_excess) worst_excess = b - a;
            if (b > a + tol && !fail) {
                fail = true;
                at = {p.x1, p.x2, t};
            }
        }
    }
    Check c = m.check("combination", "|u2(t1)| <= |u1(t1)| a.e.", false);
    if (m.count == 0) c.margin = 0;
    c.pass = !fail;
    if (fail) c.witness = at;
    return c;
}

// one stage after another; stage i covers [t_i, t_{i+1})
struct PiecewiseSolution {
    std::vector<TimeDependentField> stages;
    std::vector<double> switch_times;
    double nu0 = std::numeric_limits<double>::infinity();
    CheckList checks;

    double t_start() const { return stages.front().t_start; }
    double t_end() const { return stages.back().t_end; }
    std::size_t stage_index(double t) const {
        if (stages.empty()) throw PreconditionError("empty solution");
        if (t < t_start() || t > t_end()) throw DomainError("time outside the solution interval");
        auto it = std::upper_bound(switch_times.begin(), switch_times.end(), t);
        return static_cast<std::size_t>(it - switch_times.begin());
    }
    FieldSnapshot at(double t) const { return stages[stage_index(t)].at(t); }
};

inline PiecewiseSolution concatenate(std::vector<TimeDependentField> stages, int grid = 150) {
    if (stages.empty()) throw PreconditionError("no stages to concatenate");
    PiecewiseSolution s;
    for (std::size_t i = 0; i + 1 < stages.size(); ++i) {
        double t1 = stages[i].t_end, t2 = stages[i + 1].t_start;
        if (std::abs(t1 - t2) > 1e-12 * std::max(1.0, std::abs(t1)))
            throw PreconditionError("stage intervals do not abut");
        Check c = combination_check(stages[i].at(t1).u, stages[i + 1].at(t1).u, grid, t1);
        c.name = "combination_t" + std::to_string(i + 1);
        if (!c.pass)
            throw CombinationError(c.name, c.witness, "combination condition fails at t = " + fmt17(t1));
        s.checks.add(c);
        s.switch_times.push_back(t1);
    }
    for (const auto& st : stages) s.nu0 = std::min(s.nu0, st.nu0);
    s.stages = std::move(stages);
    return s;
}

// 0.9 zeta / (4 |u[chi_U]|^2 S), S the sampled sup of |f Lf| over the family
inline double compute_nu0(const std::vector<TimeDependentField>& family, double zeta, double norm_uU,
                          double cap = 1.0, int times = 3, int grid = 400) {
    if (family.empty()) throw PreconditionError("empty family");
    double S = 0;
    for (const auto& u : family)
        for (int i = 0; i < times; ++i) {
            double t = times == 1 ? u.t_start : u.t_start + (u.t_end - u.t_start) * i / (times - 1);
            S = std::max(S, sup_f_Lf(u.at(t).u.f, grid));
        }
    if (!(S > 0)) return cap;
    return 0.9 * zeta / (4 * norm_uU * norm_uU * S);
}

// an axisymmetric test function phi(x1, rho, t) >= 0
struct TestFunction {
    std::function<Jet2(Point2, double)> phi;
    std::function<double(Point2, double)> dt;
    Rect support;
    std::string name;

    // product of smooth bumps in x1 and rho, times a smooth window in time
    static TestFunction bump(const Rect& r, double t0 = -1e300, double t1 = 1e300) {
        TestFunction tf;
        tf.support = r;
        tf.name = "bump";
        auto b = [](double x, double lo, double hi) {
            double c = (lo + hi) / 2, h = (hi - lo) / 2;
            double y = (x - c) / h;
            if (std::abs(y) >= 1) return Jet1{};
            Jet1 Y = Jet1::variable(y);
            Jet1 e = exp(-1.0 / (1.0 - Y * Y));
            return Jet1{e.v, e.d1 / h, e.d2 / (h * h), e.d3 / (h * h * h)};
        };
        bool timed = t1 - t0 < 1e299;
        tf.phi = [=](Point2 p, double t) {
            double w = timed ? b(t, t0, t1).v : 1.0;
            return w * (lift_x1(b(p.x1, r.a1, r.b1)) * lift_x2(b(p.x2, r.a2, r.b2)));
        };
        tf.dt = [=](Point2 p, double t) {
            if (!timed) return 0.0;
            return b(t, t0, t1).d1 * b(p.x1, r.a1, r.b1).v * b(p.x2, r.a2, r.b2).v;
        };
        return tf;
    }
};

struct LeiOptions {
    int n_time = 8;     // Gauss nodes per stage piece
    int n_space = 4;    // panels per axis at the first level
    int levels = 3;
    double tol = 1e-6;
};

namespace detail {

struct LeiParts {
    double lhs = 0, rhs = 0;
};

inline LeiParts lei_parts(const PiecewiseSolution& u, const TestFunction& tf, double S, double S2, double nu,
                          int n_time, int n_space) {
    LeiParts out;
    auto space = [&](const FieldSnapshot& s, double t, auto&& integrand) {
        double total = 0;
        for (const Rect& R : s.u.support()) {
            Rect box{std::max(R.a1, tf.support.a1), std::min(R.b1, tf.support.b1), std::max(R.a2, tf.support.a2),
                     std::min(R.b2, tf.support.b2)};
            if (!(box.b1 > box.a1 && box.b2 > box.a2)) continue;
            double layer = s.u.f.layer();
            Axis a1 = composite_axis(layered_breaks(R.a1, R.b1, layer, n_space, n_space), 8);
            Axis a2 = composite_axis(layered_breaks(R.a2, R.b2, layer, n_space, n_space), 8);
            total += integrate2d(
                [&](Point2 p) {
                    if (!box.contains_closed(p)) return 0.0;
                    return integrand(s, p, t) * p.x2;
                },
                a1, a2);
        }
        return 2 * std::numbers::pi * total;
    };
    auto mass = [&](const FieldSnapshot& s, Point2 p, double t) {
        double f = s.u.f.value(p);
        return f * f * tf.phi(p, t).v;
    };
    auto bulk = [&](const FieldSnapshot& s, Point2 p, double t) {
        auto j = s.u.planar(p);
        if (!j.inside) return 0.0;
        Jet2 ph = tf.phi(p, t);
        const Jet2& F = j.w;
        double rho = p.x2;
        double grad2 = F.d1 * F.d1 + F.d2 * F.d2 + F.v * F.v / (rho * rho);
        double lap_phi = ph.d11 + ph.d22 + ph.d2 / rho;
        return F.v * F.v * (tf.dt(p, t) + nu * lap_phi) - 2 * nu * grad2 * ph.v;
    };
    out.lhs = space(u.at(S2), S2, mass) - space(u.at(S), S, mass);
    // time integral, split at the switch times
    std::vector<double> cuts{S};
    for (double t : u.switch_times)
        if (t > S && t < S2) cuts.push_back(t);
    cuts.push_back(S2);
    const GaussRule& g = gauss_legendre(n_time);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double lo = cuts[i], hi = cuts[i + 1], h = (hi - lo) / 2, m = (hi + lo) / 2;
        std::size_t k = u.stage_index(std::min(m, u.t_end()));
        for (std::size_t q = 0; q < g.x.size(); ++q) {
            double t = m + h * g.x[q];
            out.rhs += h * g.w[q] * space(u.stages[k].at(t), t, bulk);
        }
    }
    return out;
}

}  // namespace detail

// RHS - LHS of the local energy inequality on [S, S2]; v = 0 fields only
inline double lei_check(const PiecewiseSolution& u, const TestFunction& tf, double S, double S2, double nu,
                        const LeiOptions& opt = {}) {
    if (!(S2 > S)) throw PreconditionError("need S < S'");
    if (S < u.t_start() || S2 > u.t_end()) throw DomainError("interval outside the solution");
    for (const auto& st : u.stages)
        if (!st.at(st.t_start).u.v.is_zero())
            throw ContractError("lei_check handles v = 0 fields, whose transport term vanishes");
    double prev = 0;
    int nt = opt.n_time, ns = opt.n_space;
    for (int level = 0; level < opt.levels; ++level) {
        auto parts = detail::lei_parts(u, tf, S, S2, nu, nt, ns);
        double slack = parts.rhs - parts.lhs;
        if (level > 0 && std::abs(slack - prev) <= opt.tol) return slack;
        prev = slack;
        nt *= 2;
        ns *= 2;
    }
    throw AccuracyError("space-time quadrature for the local energy inequality did not settle", prev);
}

}  // end of namespace nsi
