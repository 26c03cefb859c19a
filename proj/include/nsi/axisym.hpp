#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "field.hpp"
#include "quadrature.hpp"

namespace nsi {

// u[v,f] = v1 x1^ + v2 rho^ + sqrt(f^2 - |v|^2) phi^
struct AxisymField {
    PlanarVectorField v;
    ScalarField2D f = ScalarField2D::zero();

    static AxisymField of(ScalarField2D f) { return {PlanarVectorField{}, std::move(f)}; }
    static AxisymField of(PlanarVectorField v, ScalarField2D f) { return {std::move(v), std::move(f)}; }

    const std::vector<Rect>& support() const { return f.support(); }

    // planar jets of v1, v2 and the azimuthal component w at (x1, rho)
    struct PlanarJets {
        Jet2 v1, v2, w;
        bool inside = false;
    };
    PlanarJets planar(Point2 p) const {
        PlanarJets j;
        if (!(p.x2 > 0) || !f.in_support(p)) return j;
        j.inside = true;
        Jet2 fj = f.jet(p);
        if (!v.is_zero()) {
            j.v1 = v.v1.jet(p);
            j.v2 = v.v2.jet(p);
        }
        bool vzero = j.v1.v == 0 && j.v2.v == 0 && j.v1.d1 == 0 && j.v1.d2 == 0 && j.v2.d1 == 0 && j.v2.d2 == 0;
        if (vzero) {
            j.w = fj;
        } else {
            Jet2 rad = fj * fj - j.v1 * j.v1 - j.v2 * j.v2;
            if (rad.v < -1e-12 * std::max(1.0, fj.v * fj.v)) throw InvariantViolation("f < |v| inside the support");
            if (rad.v <= 0) rad.v = 0;
            j.w = rad.v > 0 ? sqrt(rad) : Jet2{};
        }
        return j;
    }
};

inline Vec3 lift_eval(const AxisymField& u, const Vec3& x) {
    double rho = std::hypot(x[1], x[2]);
    if (rho == 0) return {0, 0, 0};
    Point2 p{x[0], rho};
    if (!u.f.in_support(p)) return {0, 0, 0};
    double fv = u.f.value(p);
    double v1 = 0, v2 = 0;
    if (!u.v.is_zero()) {
        v1 = u.v.v1.value(p);
        v2 = u.v.v2.value(p);
    }
    double rad = fv * fv - v1 * v1 - v2 * v2;
    if (rad < -1e-12 * std::max(1.0, fv * fv)) throw InvariantViolation("f < |v| inside the support");
    double w = (v1 == 0 && v2 == 0) ? fv : std::sqrt(std::max(rad, 0.0));
    double c = x[1] / rho, s = x[2] / rho;
    return {v1, v2 * c - w * s, v2 * s + w * c};
}

// J[i][j] = d_i u_j in Cartesian coordinates
inline std::array<Vec3, 3> lift_jacobian(const AxisymField& u, const Vec3& x) {
    std::array<Vec3, 3> J{};
    double rho = std::hypot(x[1], x[2]);
    if (rho == 0) return J;
    auto j = u.planar({x[0], rho});
    if (!j.inside) return J;
    double c = x[1] / rho, s = x[2] / rho;
    const Jet2 &a = j.v1, &b = j.v2, &w = j.w;
    J[0] = {a.d1, b.d1 * c - w.d1 * s, b.d1 * s + w.d1 * c};
    J[1] = {a.d2 * c, b.d2 * c * c + b.v * s * s / rho - w.d2 * c * s + w.v * c * s / rho,
            b.d2 * c * s - b.v * c * s / rho + w.d2 * c * c + w.v * s * s / rho};
    J[2] = {a.d2 * s, b.d2 * s * c - b.v * c * s / rho - w.d2 * s * s - w.v * c * c / rho,
            b.d2 * s * s + b.v * c * c / rho + w.d2 * s * c - w.v * c * s / rho};
    return J;
}

// (2 pi int f^p rho)^(1/p); p = inf gives a grid supremum
inline double lp_norm(const AxisymField& u, double p, int sup_grid = 400, double rel_tol = 1e-8, int max_level = 6) {
    if (!(p >= 1)) throw DomainError("p must be at least 1");
    const ScalarField2D& f = u.f;
    if (f.is_zero()) return 0.0;
    if (f.whole_plane()) throw DomainError("norm needs a bounded support");
    if (std::isinf(p)) {
        double m = 0;
        for (const Rect& r : f.support())
            for (Point2 q : sample_grid(r, f.layer(), sup_grid, sup_grid)) m = std::max(m, std::abs(f.value(q)));
        return m;
    }
    double s = 0;
    for (const Rect& r : f.support()) {
        auto q = [&](Point2 y) {
            double v = std::abs(f.value(y));
            return v == 0 ? 0.0 : std::pow(v, p) * y.x2;
        };
        s += integrate_rect(q, r, f.kind() == FieldKind::indicator ? 0.0 : f.layer(), rel_tol, 1e-14, max_level).value;
    }
    return std::pow(2 * std::numbers::pi * s, 1 / p);
}

struct IdentityResiduals {
    double divergence = 0;
    double laplacian = std::numeric_limits<double>::quiet_NaN();  // only for v = 0
    double d3_magnitude = 0;
};

inline IdentityResiduals axisym_identities(const AxisymField& u, const Vec3& x, double h_div = 1e-5,
                                           double h_lap = 1e-4) {
    IdentityResiduals r;
    auto at = [&](Vec3 y, int i, double d) {
        y[i] += d;
        return lift_eval(u, y);
    };
    double div = 0;
    for (int i = 0; i < 3; ++i) div += (at(x, i, h_div)[i] - at(x, i, -h_div)[i]) / (2 * h_div);
    r.divergence = std::abs(div);
    Vec3 xp{x[0], std::hypot(x[1], x[2]), 0.0};
    r.d3_magnitude = std::abs(norm3(at(xp, 2, h_div)) - norm3(at(xp, 2, -h_div))) / (2 * h_div);
    if (u.v.is_zero()) {
        Vec3 lap{0, 0, 0};
        Vec3 u0 = lift_eval(u, xp);
        for (int i = 0; i < 3; ++i) {
            Vec3 a = at(xp, i, 2 * h_lap), b = at(xp, i, h_lap), c = at(xp, i, -h_lap), d = at(xp, i, -2 * h_lap);
            for (int k = 0; k < 3; ++k)
                lap[k] += (-a[k] + 16 * b[k] - 30 * u0[k] + 16 * c[k] - d[k]) / (12 * h_lap * h_lap);
        }
        double Lf = Lf_eval(u.f, {xp[0], xp[1]});
        r.laplacian = norm3({lap[0], lap[1], lap[2] - Lf});
    }
    return r;
}

// max |f Lf| on a layered grid of the closed support
inline double sup_f_Lf(const ScalarField2D& f, int n = 400) {
    if (f.is_zero()) return 0.0;
    double m = 0;
    for (const Rect& r : f.support()) {
        auto xs = sample_axis(r.a1, r.b1, f.layer(), n), ys = sample_axis(r.a2, r.b2, f.layer(), n);
        xs.insert(xs.begin(), r.a1);
        xs.push_back(r.b1);
        ys.insert(ys.begin(), r.a2);
        ys.push_back(r.b2);
        for (double x : xs)
            for (double y : ys) {
                if (!(y > 0)) continue;
                Jet2 j = f.jet({x, y});
                double v = std::abs(j.v * L_of(j, y));
                if (std::isfinite(v)) m = std::max(m, v);
            }
    }
    return m;
}

}  // end of namespace nsi
