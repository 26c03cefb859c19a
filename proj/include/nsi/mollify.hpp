#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "field.hpp"
#include "quadrature.hpp"

namespace nsi {

namespace detail {

// exp(-1/(1-y^2)) on (-1,1) with derivatives, unnormalized
inline Jet1 raw_bump(double y) {
    if (std::abs(y) >= 1) return {};
    Jet1 u = 1.0 - Jet1::variable(y) * Jet1::variable(y);
    return exp(-1.0 / u);
}

inline double bump_norm_1d() {
    static const double c = [] {
        // the flat ends make one Gauss panel about 5e-12 short
        const GaussRule& g = gauss_legendre(64);
        const int panels = 32;
        double s = 0, h = 1.0 / panels;
        for (int k = 0; k < panels; ++k)
            for (size_t i = 0; i < g.x.size(); ++i) s += h * g.w[i] * raw_bump(-1 + h * (2 * k + 1) + h * g.x[i]).v;
        return 1.0 / s;
    }();
    return c;
}

inline double bump_norm_2d() {
    static const double c = [] {
        const GaussRule& g = gauss_legendre(64);
        double s = 0;
        for (size_t i = 0; i < g.x.size(); ++i) {
            double rho = 0.5 * (g.x[i] + 1);
            s += 0.5 * g.w[i] * raw_bump(rho).v * rho;
        }
        return 1.0 / (2 * std::numbers::pi * s);
    }();
    return c;
}

}  // namespace detail

// normalized kernel of radius 1 on the line
inline Jet1 mollifier_kernel(double y) { return detail::bump_norm_1d() * detail::raw_bump(y); }

// convolution with the kernel of radius r; the input is extended by its boundary values
inline ScalarField1D mollify(const ScalarField1D& g, double r) {
    if (!(r > 0)) throw DomainError("mollification radius must be positive");
    std::vector<double> bp = g.breakpoints();
    if (std::isfinite(g.lo())) bp.push_back(g.lo());
    if (std::isfinite(g.hi())) bp.push_back(g.hi());
    std::sort(bp.begin(), bp.end());
    auto fn = [g, r, bp](double t) {
        // split [-1, 1] in kernel units where t - r*x meets a breakpoint
        std::vector<double> cuts{-1.0, 1.0};
        for (double b : bp) {
            double x = (t - b) / r;
            if (x > -1 && x < 1) cuts.push_back(x);
        }
        std::sort(cuts.begin(), cuts.end());
        const GaussRule& q = gauss_legendre(64);
        // four panels per piece; an off-centre cut otherwise leaves ~1e-9 of spurious slope
        std::vector<double> panels;
        for (size_t k = 0; k + 1 < cuts.size(); ++k)
            for (int j = 0; j < 4; ++j) panels.push_back(cuts[k] + (cuts[k + 1] - cuts[k]) * j / 4);
        panels.push_back(1.0);
        Jet1 out;
        for (size_t k = 0; k + 1 < panels.size(); ++k) {
            double lo = panels[k], hi = panels[k + 1];
            if (!(hi > lo)) continue;
            double h = (hi - lo) / 2, m = (hi + lo) / 2;
            for (size_t i = 0; i < q.x.size(); ++i) {
                double x = m + h * q.x[i];
                Jet1 k1 = mollifier_kernel(x);
                double gv = g.extended(t - r * x) * q.w[i] * h;
                out.v += k1.v * gv;
                out.d1 += k1.d1 / r * gv;
                out.d2 += k1.d2 / (r * r) * gv;
                out.d3 += k1.d3 / (r * r * r) * gv;
            }
        }
        return out;
    };
    std::vector<double> nb;
    for (double b : bp) {
        nb.push_back(b - r);
        nb.push_back(b + r);
    }
    return ScalarField1D(fn, nb);
}

// planar mollification by polar quadrature over the kernel disc
inline ScalarField2D mollify(const ScalarField2D& f, double r) {
    if (!(r > 0)) throw DomainError("mollification radius must be positive");
    auto fn = [f, r](Point2 x) {
        const GaussRule& q = gauss_legendre(64);
        const int na = 64;
        const double c2 = detail::bump_norm_2d();
        Jet2 out;
        for (size_t i = 0; i < q.x.size(); ++i) {
            double rho = 0.5 * (q.x[i] + 1);
            Jet1 k = c2 * detail::raw_bump(rho);
            double wr = 0.5 * q.w[i] * rho * (2 * std::numbers::pi / na);
            for (int a = 0; a < na; ++a) {
                double th = 2 * std::numbers::pi * (a + 0.5) / na;
                double u1 = std::cos(th), u2 = std::sin(th);
                double val = f.value({x.x1 - r * rho * u1, x.x2 - r * rho * u2}) * wr;
                // derivatives of the radial kernel k(|y|) at y = rho*u, radius 1
                double g1 = k.d1 * u1, g2 = k.d1 * u2;
                double h11 = k.d2 * u1 * u1 + k.d1 * (1 - u1 * u1) / rho;
                double h12 = k.d2 * u1 * u2 - k.d1 * u1 * u2 / rho;
                double h22 = k.d2 * u2 * u2 + k.d1 * (1 - u2 * u2) / rho;
                out.v += k.v * val;
                out.d1 += g1 / r * val;
                out.d2 += g2 / r * val;
                out.d11 += h11 / (r * r) * val;
                out.d12 += h12 / (r * r) * val;
                out.d22 += h22 / (r * r) * val;
            }
        }
        return out;
    };
    std::vector<Rect> sup;
    for (const Rect& s : f.support()) sup.push_back({s.a1 - r, s.b1 + r, std::max(s.a2 - r, 1e-300), s.b2 + r});
    return ScalarField2D(fn, sup, f.layer() > 0 ? f.layer() + 2 * r : 0.0);
}

}  // end of namespace nsi
