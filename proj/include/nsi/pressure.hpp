#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "axisym.hpp"
#include "quadrature.hpp"

namespace nsi {

// sum_ij d_i u_j d_j u_i at the planar point (x1, rho), from the cylindrical form of the Jacobian
inline double stress_trace_planar(const AxisymField& u, Point2 p) {
    auto j = u.planar(p);
    if (!j.inside) return 0.0;
    double rho = p.x2;
    // w w_rho = (f f_rho - v.v_rho); avoids differentiating the square root
    double wwr = j.w.v * j.w.d2;
    return j.v1.d1 * j.v1.d1 + j.v2.d2 * j.v2.d2 + (j.v2.v / rho) * (j.v2.v / rho) + 2 * j.v2.d1 * j.v1.d2 -
           2 * wwr / rho;
}

inline double stress_trace(const AxisymField& u, const Vec3& x) {
    return stress_trace_planar(u, {x[0], std::hypot(x[1], x[2])});
}

enum class KernelMethod { elliptic, quadrature };

inline double agm(double a, double b) {
    for (int i = 0; i < 60 && std::abs(a - b) > 1e-16 * a; ++i) {
        double m = (a + b) / 2;
        b = std::sqrt(a * b);
        a = m;
    }
    return (a + b) / 2;
}

// int_0^{2 pi} dtheta / (4 pi sqrt(dx1^2 + rho^2 + s^2 - 2 rho s cos theta))
inline double angular_kernel(double dx1, double rho, double s, KernelMethod m = KernelMethod::elliptic) {
    if (rho < 0 || s < 0) throw DomainError("rho and s must be non-negative");
    if (dx1 == 0 && rho == s) throw SingularityError("angular kernel evaluated on the singular circle");
    double ap = dx1 * dx1 + (rho + s) * (rho + s);
    if (rho == 0 || s == 0) return 1 / (2 * std::sqrt(ap));
    if (m == KernelMethod::elliptic) {
        double am = dx1 * dx1 + (rho - s) * (rho - s);
        double kp = std::sqrt(am / ap);
        double K = std::numbers::pi / (2 * agm(1.0, kp));
        return K / (std::numbers::pi * std::sqrt(ap));
    }
    double a = dx1 * dx1 + rho * rho + s * s, b = 2 * rho * s;
    auto q = [&](double th) { return 1 / std::sqrt(a - b * std::cos(th)); };
    // symmetric in theta; the peak sits at theta = 0
    double tol = 1e-13 / std::sqrt(std::max(a - b, 1e-300));
    return 2 * integrate1d(q, 0, std::numbers::pi, tol) / (4 * std::numbers::pi);
}

struct PressureValue {
    double value = 0;
    double error = 0;
};

struct PressureEvaluator {
    AxisymField src;
    double tol = 1e-7;       // absolute target per call
    int max_level = 7;       // swirl annuli are not axis aligned and need the deeper levels
    int angular_nodes = 24;  // per angular sector of the kernel patch
};

namespace detail {

// breakpoints on [lo, hi] graded geometrically toward c when c lies inside
inline std::vector<double> graded_breaks(double lo, double hi, double layer, int nl, int ni, double c, int ngrade) {
    std::vector<double> b = layered_breaks(lo, hi, layer, nl, ni);
    if (c > lo && c < hi) {
        double d = (hi - lo) / (nl * 2 + ni);
        for (int k = 0; k < ngrade; ++k) {
            double e = d * std::pow(0.5, k);
            if (c - e > lo) b.push_back(c - e);
            if (c + e < hi) b.push_back(c + e);
        }
        b.push_back(c);
    }
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
}

// int over [0,A]x[0,B] of K(P + (sx u, sy v)) du dv in polar form around the corner P
inline double kernel_corner_integral(double x1, double rho, double A, double B, double sx, double sy, int nang) {
    if (A <= 0 || B <= 0) return 0.0;
    const GaussRule& ga = gauss_legendre(nang);
    const GaussRule& gr = gauss_legendre(8);
    double split = std::atan2(B, A);
    double total = 0;
    for (int part = 0; part < 2; ++part) {
        double lo = part == 0 ? 0.0 : split, hi = part == 0 ? split : std::numbers::pi / 2;
        double h = (hi - lo) / 2, m = (hi + lo) / 2;
        for (int i = 0; i < nang; ++i) {
            double al = m + h * ga.x[i];
            double ca = std::cos(al), sa = std::sin(al);
            double R = part == 0 ? A / ca : B / sa;
            double acc = 0;
            // geometric panels toward r = 0 for the logarithmic kernel
            double right = R;
            for (int k = 0; k < 40; ++k) {
                double left = k == 39 ? 0.0 : right / 2;
                double hr = (right - left) / 2, mr = (right + left) / 2;
                for (size_t q = 0; q < gr.x.size(); ++q) {
                    double r = mr + hr * gr.x[q];
                    double y1 = x1 + sx * r * ca, s = rho + sy * r * sa;
                    acc += hr * gr.w[q] * r * angular_kernel(x1 - y1, rho, s);
                }
                right = left;
            }
            total += h * ga.w[i] * acc;
        }
    }
    return total;
}

}  // namespace detail

// int over R of the angular kernel K(x1 - y1, rho, s) dy1 ds, with (x1, rho) inside R
inline double kernel_rect_integral(const Rect& R, double x1, double rho, int nang = 24) {
    return detail::kernel_corner_integral(x1, rho, R.b1 - x1, R.b2 - rho, 1, 1, nang) +
           detail::kernel_corner_integral(x1, rho, x1 - R.a1, R.b2 - rho, -1, 1, nang) +
           detail::kernel_corner_integral(x1, rho, R.b1 - x1, rho - R.a2, 1, -1, nang) +
           detail::kernel_corner_integral(x1, rho, x1 - R.a1, rho - R.a2, -1, -1, nang);
}

// p(x1, rho) = int Theta(y1, s) s K(x1 - y1, rho, s) over the planar support
inline PressureValue pressure_eval(const PressureEvaluator& pe, double x1, double rho) {
    if (rho < 0) throw DomainError("rho must be non-negative");
    const AxisymField& u = pe.src;
    if (u.f.is_zero()) return {};
    PressureValue out;
    for (const Rect& R : u.support()) {
        bool inside = R.contains({x1, rho});
        double theta_x = inside ? stress_trace_planar(u, {x1, rho}) : 0.0;
        double patch = 0;
        if (inside && theta_x != 0) patch = theta_x * rho * kernel_rect_integral(R, x1, rho, pe.angular_nodes);
        auto q = [&](Point2 y) {
            double sub = inside ? theta_x * rho : 0.0;
            double th = stress_trace_planar(u, y) * y.x2 - sub;
            if (th == 0) return 0.0;
            if (y.x1 == x1 && y.x2 == rho) return 0.0;
            return th * angular_kernel(x1 - y.x1, rho, y.x2);
        };
        double layer = u.f.layer();
        double prev = 0;
        bool have = false, done = false;
        int nl = 2, ni = 2;
        for (int level = 0; level <= pe.max_level; ++level) {
            Axis a1 = composite_axis(detail::graded_breaks(R.a1, R.b1, layer, nl, ni, x1, 24), 8);
            Axis a2 = composite_axis(detail::graded_breaks(R.a2, R.b2, layer, nl, ni, rho, 24), 8);
            double v = integrate2d(q, a1, a2);
            if (have && std::abs(v - prev) <= pe.tol) {
                out.value += v + patch;
                out.error += std::abs(v - prev);
                done = true;
                break;
            }
            prev = v;
            have = true;
            nl *= 2;
            ni *= 2;
        }
        if (!done) throw AccuracyError("pressure quadrature did not converge", std::abs(prev));
    }
    return out;
}

}  // end of namespace nsi
