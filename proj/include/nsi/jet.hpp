#pragma once

#include <cmath>

namespace nsi {

// value and derivatives up to order 3 of a function of one variable
struct Jet1 {
    double v = 0, d1 = 0, d2 = 0, d3 = 0;

    static Jet1 constant(double c) { return {c, 0, 0, 0}; }
    static Jet1 variable(double x) { return {x, 1, 0, 0}; }
};

inline Jet1 operator+(const Jet1& a, const Jet1& b) { return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2, a.d3 + b.d3}; }
inline Jet1 operator-(const Jet1& a, const Jet1& b) { return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2, a.d3 - b.d3}; }
inline Jet1 operator-(const Jet1& a) { return {-a.v, -a.d1, -a.d2, -a.d3}; }
inline Jet1 operator*(double s, const Jet1& a) { return {s * a.v, s * a.d1, s * a.d2, s * a.d3}; }
inline Jet1 operator*(const Jet1& a, double s) { return s * a; }
inline Jet1 operator+(const Jet1& a, double s) { return {a.v + s, a.d1, a.d2, a.d3}; }
inline Jet1 operator+(double s, const Jet1& a) { return a + s; }
inline Jet1 operator-(const Jet1& a, double s) { return {a.v - s, a.d1, a.d2, a.d3}; }
inline Jet1 operator-(double s, const Jet1& a) { return {s - a.v, -a.d1, -a.d2, -a.d3}; }

inline Jet1 operator*(const Jet1& a, const Jet1& b) {
    return {a.v * b.v,
            a.d1 * b.v + a.v * b.d1,
            a.d2 * b.v + 2 * a.d1 * b.d1 + a.v * b.d2,
            a.d3 * b.v + 3 * a.d2 * b.d1 + 3 * a.d1 * b.d2 + a.v * b.d3};
}

// g(a) where g0..g3 are g and its derivatives at a.v
inline Jet1 compose(const Jet1& a, double g0, double g1, double g2, double g3) {
    return {g0,
            g1 * a.d1,
            g2 * a.d1 * a.d1 + g1 * a.d2,
            g3 * a.d1 * a.d1 * a.d1 + 3 * g2 * a.d1 * a.d2 + g1 * a.d3};
}

inline Jet1 compose(const Jet1& a, const Jet1& g) { return compose(a, g.v, g.d1, g.d2, g.d3); }

inline Jet1 recip(const Jet1& a) {
    double r = 1.0 / a.v;
    return compose(a, r, -r * r, 2 * r * r * r, -6 * r * r * r * r);
}
inline Jet1 operator/(const Jet1& a, const Jet1& b) { return a * recip(b); }
inline Jet1 operator/(const Jet1& a, double s) { return (1.0 / s) * a; }
inline Jet1 operator/(double s, const Jet1& a) { return s * recip(a); }

inline Jet1 exp(const Jet1& a) {
    double e = std::exp(a.v);
    return compose(a, e, e, e, e);
}
inline Jet1 log(const Jet1& a) {
    double r = 1.0 / a.v;
    return compose(a, std::log(a.v), r, -r * r, 2 * r * r * r);
}
inline Jet1 sqrt(const Jet1& a) {
    double s = std::sqrt(a.v);
    return compose(a, s, 0.5 / s, -0.25 / (s * a.v), 0.375 / (s * a.v * a.v));
}
inline Jet1 pow(const Jet1& a, double q) {
    double p0 = std::pow(a.v, q);
    double p1 = q * std::pow(a.v, q - 1);
    double p2 = q * (q - 1) * std::pow(a.v, q - 2);
    double p3 = q * (q - 1) * (q - 2) * std::pow(a.v, q - 3);
    return compose(a, p0, p1, p2, p3);
}

// value, gradient and Hessian of a function of (x1, x2)
struct Jet2 {
    double v = 0, d1 = 0, d2 = 0, d11 = 0, d12 = 0, d22 = 0;

    static Jet2 constant(double c) { return {c, 0, 0, 0, 0, 0}; }
    static Jet2 x1(double x) { return {x, 1, 0, 0, 0, 0}; }
    static Jet2 x2(double x) { return {x, 0, 1, 0, 0, 0}; }
    double laplacian() const { return d11 + d22; }
};

inline Jet2 operator+(const Jet2& a, const Jet2& b) {
    return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2, a.d11 + b.d11, a.d12 + b.d12, a.d22 + b.d22};
}
inline Jet2 operator-(const Jet2& a, const Jet2& b) {
    return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2, a.d11 - b.d11, a.d12 - b.d12, a.d22 - b.d22};
}
inline Jet2 operator-(const Jet2& a) { return {-a.v, -a.d1, -a.d2, -a.d11, -a.d12, -a.d22}; }
inline Jet2 operator*(double s, const Jet2& a) {
    return {s * a.v, s * a.d1, s * a.d2, s * a.d11, s * a.d12, s * a.d22};
}
inline Jet2 operator*(const Jet2& a, double s) { return s * a; }
inline Jet2 operator+(const Jet2& a, double s) { Jet2 r = a; r.v += s; return r; }
inline Jet2 operator-(const Jet2& a, double s) { Jet2 r = a; r.v -= s; return r; }
inline Jet2 operator-(double s, const Jet2& a) { return -a + s; }

inline Jet2 operator*(const Jet2& a, const Jet2& b) {
    return {a.v * b.v,
            a.d1 * b.v + a.v * b.d1,
            a.d2 * b.v + a.v * b.d2,
            a.d11 * b.v + 2 * a.d1 * b.d1 + a.v * b.d11,
            a.d12 * b.v + a.d1 * b.d2 + a.d2 * b.d1 + a.v * b.d12,
            a.d22 * b.v + 2 * a.d2 * b.d2 + a.v * b.d22};
}

inline Jet2 compose(const Jet2& a, double g0, double g1, double g2) {
    return {g0,
            g1 * a.d1,
            g1 * a.d2,
            g2 * a.d1 * a.d1 + g1 * a.d11,
            g2 * a.d1 * a.d2 + g1 * a.d12,
            g2 * a.d2 * a.d2 + g1 * a.d22};
}
inline Jet2 compose(const Jet2& a, const Jet1& g) { return compose(a, g.v, g.d1, g.d2); }

inline Jet2 recip(const Jet2& a) {
    double r = 1.0 / a.v;
    return compose(a, r, -r * r, 2 * r * r * r);
}
inline Jet2 operator/(const Jet2& a, const Jet2& b) { return a * recip(b); }
inline Jet2 operator/(const Jet2& a, double s) { return (1.0 / s) * a; }
inline Jet2 exp(const Jet2& a) {
    double e = std::exp(a.v);
    return compose(a, e, e, e);
}
inline Jet2 sqrt(const Jet2& a) {
    double s = std::sqrt(a.v);
    return compose(a, s, 0.5 / s, -0.25 / (s * a.v));
}
inline Jet2 pow(const Jet2& a, double q) {
    return compose(a, std::pow(a.v, q), q * std::pow(a.v, q - 1), q * (q - 1) * std::pow(a.v, q - 2));
}

// a one-variable jet promoted to a field of x1 or of x2
inline Jet2 lift_x1(const Jet1& g) { return {g.v, g.d1, 0, g.d2, 0, 0}; }
inline Jet2 lift_x2(const Jet1& g) { return {g.v, 0, g.d1, 0, 0, g.d2}; }

}  // end of namespace nsi
