#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "nsi/pressure.hpp"

namespace oracle {

using nsi::AxisymField;
using nsi::Rect;
using nsi::Vec3;

struct McEstimate {
    double mean = 0, se = 0;
};

inline double dist3(const Vec3& a, const Vec3& b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

// p(x) = int Theta(y) / (4 pi |x - y|) dy by plain sampling in 3D.
// A ball of radius r0 around x is sampled in spherical coordinates with uniform radius, which cancels
// the 1/|x - y| singularity. The rest of the lifted rectangle R is sampled in cylindrical coordinates
// (y1, s, theta), stratified on an m x m grid of (y1, s) cells and in theta.
inline McEstimate pressure_mc(const AxisymField& u, const Rect& R, const Vec3& x, long n, std::uint64_t seed,
                              double r0 = 0.1, int m = 100) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0, 1);
    auto theta = [&](const Vec3& y) { return nsi::stress_trace(u, y); };
    McEstimate est;
    const int sectors = 8;
    long n_ball = n / 5, per = std::max(2L, (n - n_ball) / (long(m) * m * sectors));
    double cell = R.width() * R.height() / (double(m) * m) * 2 * std::numbers::pi;
    double var = 0;
    for (int i = 0; i < m; ++i)
        for (int k = 0; k < m; ++k) {
            double sum = 0, sum2 = 0;
            for (long q = 0; q < per; ++q) {
                double y1 = R.a1 + R.width() * (i + unit(rng)) / m, s = R.a2 + R.height() * (k + unit(rng)) / m;
                // one stratified sample of theta per sector
                double g = 0;
                for (int a = 0; a < sectors; ++a) {
                    double th = 2 * std::numbers::pi * (a + unit(rng)) / sectors;
                    Vec3 y{y1, s * std::cos(th), s * std::sin(th)};
                    double d = dist3(x, y);
                    if (d >= r0) g += cell * theta(y) * s / (4 * std::numbers::pi * d) / sectors;
                }
                sum += g;
                sum2 += g * g;
            }
            double mean = sum / per;
            est.mean += mean;
            var += std::max(0.0, sum2 / per - mean * mean) / (per - 1);
        }
    // dV = r^2 dr dOmega; r uniform on [0, r0] and the direction uniform give density 1 / (4 pi r0)
    double sum = 0, sum2 = 0;
    std::normal_distribution<double> gauss;
    for (long q = 0; q < n_ball; ++q) {
        double r = r0 * unit(rng);
        Vec3 dir{gauss(rng), gauss(rng), gauss(rng)};
        double l = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
        Vec3 y{x[0] + r * dir[0] / l, x[1] + r * dir[1] / l, x[2] + r * dir[2] / l};
        double g = theta(y) * r * r0;
        sum += g;
        sum2 += g * g;
    }
    double mean = sum / n_ball;
    est.mean += mean;
    var += (sum2 / n_ball - mean * mean) / (n_ball - 1);
    est.se = std::sqrt(var);
    return est;
}


// |u|_p over the lifted rectangles by the midpoint rule on an n x n grid, from the lifted field only
inline double lp_norm_midpoint(const AxisymField& u, const std::vector<Rect>& rects, double p, int n) {
    double s = 0, m = 0;
    for (const Rect& r : rects) {
        double h1 = (r.b1 - r.a1) / n, h2 = (r.b2 - r.a2) / n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double y1 = r.a1 + (i + 0.5) * h1, y2 = r.a2 + (j + 0.5) * h2;
                Vec3 w = nsi::lift_eval(u, {y1, y2, 0});
                double a = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
                m = std::max(m, a);
                if (std::isfinite(p)) s += std::pow(a, p) * y2 * h1 * h2;
            }
    }
    return std::isfinite(p) ? std::pow(2 * std::numbers::pi * s, 1 / p) : m;
}

}  // namespace oracle
