#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

#include "error.hpp"
#include "field.hpp"

namespace nsi {

struct GaussRule {
    std::vector<double> x, w;  // on [-1, 1]
};

inline GaussRule compute_gauss_legendre(int n) {
    GaussRule g;
    g.x.resize(n);
    g.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1, p2 = 0;
            for (int j = 1; j <= n; ++j) {
                double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j - 1) * z * p2 - (j - 1.0) * p3) / j;
            }
            pp = n * (z * p1 - p2) / (z * z - 1);
            double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        g.x[i] = -z;
        g.x[n - 1 - i] = z;
        g.w[i] = g.w[n - 1 - i] = 2 / ((1 - z * z) * pp * pp);
    }
    return g;
}

inline const GaussRule& gauss_legendre(int n) {
    static std::mutex mu;
    static std::map<int, GaussRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute_gauss_legendre(n)).first;
    return it->second;
}

// composite rule on a 1D partition
struct Axis {
    std::vector<double> x, w;
};

inline Axis composite_axis(const std::vector<double>& breaks, int n) {
    const GaussRule& g = gauss_legendre(n);
    Axis a;
    for (size_t k = 0; k + 1 < breaks.size(); ++k) {
        double lo = breaks[k], hi = breaks[k + 1];
        if (!(hi > lo)) continue;
        double h = (hi - lo) / 2, m = (hi + lo) / 2;
        for (int i = 0; i < n; ++i) {
            a.x.push_back(m + h * g.x[i]);
            a.w.push_back(h * g.w[i]);
        }
    }
    return a;
}

inline void append_uniform(std::vector<double>& b, double lo, double hi, int n) {
    for (int i = 1; i <= n; ++i) b.push_back(lo + (hi - lo) * i / n);
}

// partition of [lo, hi] with n_layer panels in each edge layer of width `layer`
inline std::vector<double> layered_breaks(double lo, double hi, double layer, int n_layer, int n_inner) {
    std::vector<double> b{lo};
    if (layer > 0 && 2 * layer < hi - lo) {
        append_uniform(b, lo, lo + layer, n_layer);
        append_uniform(b, lo + layer, hi - layer, n_inner);
        append_uniform(b, hi - layer, hi, n_layer);
    } else {
        append_uniform(b, lo, hi, n_inner + 2 * n_layer);
    }
    return b;
}

inline double integrate2d(const std::function<double(Point2)>& q, const Axis& a1, const Axis& a2) {
    double s = 0;
    for (size_t i = 0; i < a1.x.size(); ++i) {
        double row = 0;
        for (size_t j = 0; j < a2.x.size(); ++j) row += a2.w[j] * q({a1.x[i], a2.x[j]});
        s += a1.w[i] * row;
    }
    return s;
}

struct QuadResult {
    double value = 0;
    double error = 0;
};

// tensor Gauss-Legendre on a rectangle, refined by doubling panel counts until stable
inline QuadResult integrate_rect(const std::function<double(Point2)>& q, const Rect& r, double layer,
                                 double rel_tol = 1e-8, double abs_tol = 1e-14, int max_level = 6) {
    int nl = 2, ni = 2;
    double prev = 0;
    bool have = false;
    for (int level = 0; level <= max_level; ++level) {
        Axis a1 = composite_axis(layered_breaks(r.a1, r.b1, layer, nl, ni), 8);
        Axis a2 = composite_axis(layered_breaks(r.a2, r.b2, layer, nl, ni), 8);
        double v = integrate2d(q, a1, a2);
        if (have) {
            double err = std::abs(v - prev);
            if (err <= rel_tol * std::abs(v) || err <= abs_tol) return {v, err};
        }
        prev = v;
        have = true;
        nl *= 2;
        ni *= 2;
    }
    return {prev, std::abs(prev) * rel_tol * 10};
}

// adaptive Gauss-Legendre on [a, b], bisection until both halves agree with the whole
inline double integrate1d(const std::function<double(double)>& q, double a, double b, double tol = 1e-12,
                          int depth = 40) {
    const GaussRule& g = gauss_legendre(16);
    auto rule = [&](double lo, double hi) {
        double h = (hi - lo) / 2, m = (hi + lo) / 2, s = 0;
        for (size_t i = 0; i < g.x.size(); ++i) s += g.w[i] * q(m + h * g.x[i]);
        return s * h;
    };
    std::function<double(double, double, double, double, int)> rec = [&](double lo, double hi, double whole,
                                                                            double t, int d) {
        double mid = (lo + hi) / 2;
        double l = rule(lo, mid), r = rule(mid, hi);
        if (d <= 0 || std::abs(l + r - whole) <= t) return l + r;
        return rec(lo, mid, l, t / 2, d - 1) + rec(mid, hi, r, t / 2, d - 1);
    };
    return rec(a, b, rule(a, b), tol, depth);
}

// sample nodes on [lo, hi], quadratically graded inside the edge layers
inline std::vector<double> sample_axis(double lo, double hi, double layer, int n) {
    std::vector<double> x;
    if (layer > 0 && 2 * layer < hi - lo) {
        int nl = n / 4, ni = n - 2 * nl;
        for (int i = 0; i < nl; ++i) {
            double s = (i + 0.5) / nl;
            x.push_back(lo + layer * s * s);
        }
        for (int i = 0; i < ni; ++i) x.push_back(lo + layer + (hi - lo - 2 * layer) * (i + 0.5) / ni);
        for (int i = nl - 1; i >= 0; --i) {
            double s = (i + 0.5) / nl;
            x.push_back(hi - layer * s * s);
        }
    } else {
        for (int i = 0; i < n; ++i) x.push_back(lo + (hi - lo) * (i + 0.5) / n);
    }
    return x;
}

inline std::vector<Point2> sample_grid(const Rect& r, double layer, int n1, int n2) {
    std::vector<Point2> pts;
    auto xs = sample_axis(r.a1, r.b1, layer, n1);
    auto ys = sample_axis(r.a2, r.b2, layer, n2);
    pts.reserve(xs.size() * ys.size());
    for (double x : xs)
        for (double y : ys) pts.push_back({x, y});
    return pts;
}

}  // end of namespace nsi
