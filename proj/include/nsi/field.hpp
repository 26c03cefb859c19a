#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <utility>
#include <vector>

#include "error.hpp"
#include "jet.hpp"

namespace nsi {

struct Point2 {
    double x1 = 0, x2 = 0;
};

using Vec3 = std::array<double, 3>;

inline double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

// open rectangle (a1,b1) x (a2,b2) in the upper half-plane
struct Rect {
    double a1 = 0, b1 = 1, a2 = 1, b2 = 2;

    static Rect make(double a1, double b1, double a2, double b2) {
        if (!(b1 > a1) || !(b2 > a2) || !(a2 > 0)) {
            std::ostringstream os;
            os << "invalid rectangle (" << a1 << "," << b1 << ")x(" << a2 << "," << b2 << ")";
            throw DomainError(os.str());
        }
        return Rect{a1, b1, a2, b2};
    }

    double width() const { return b1 - a1; }
    double height() const { return b2 - a2; }
    double min_side() const { return std::min(width(), height()); }
    Point2 center() const { return {(a1 + b1) / 2, (a2 + b2) / 2}; }
    bool contains(Point2 p) const { return p.x1 > a1 && p.x1 < b1 && p.x2 > a2 && p.x2 < b2; }
    bool contains_closed(Point2 p) const { return p.x1 >= a1 && p.x1 <= b1 && p.x2 >= a2 && p.x2 <= b2; }
    // distance from p to the boundary, for p inside
    double depth(Point2 p) const { return std::min({p.x1 - a1, b1 - p.x1, p.x2 - a2, b2 - p.x2}); }
    bool disjoint(const Rect& o) const { return b1 <= o.a1 || o.b1 <= a1 || b2 <= o.a2 || o.b2 <= a2; }
    bool inside(const Rect& o) const { return a1 >= o.a1 && b1 <= o.b1 && a2 >= o.a2 && b2 <= o.b2; }
    Rect scaled(double s, Point2 shift) const { return {s * a1 + shift.x1, s * b1 + shift.x1, s * a2 + shift.x2, s * b2 + shift.x2}; }
};

inline bool operator==(const Rect& a, const Rect& b) {
    return a.a1 == b.a1 && a.b1 == b.b1 && a.a2 == b.a2 && a.b2 == b.b2;
}

// U_eta = {x in U : dist(x, dU) > eta}
inline Rect eta_subset(const Rect& r, double margin) {
    if (margin < 0) throw DomainError("negative margin");
    if (margin >= r.min_side() / 2) throw EmptySetError("eta-subset is empty: margin exceeds half-width");
    return {r.a1 + margin, r.b1 - margin, r.a2 + margin, r.b2 - margin};
}

class ScalarField1D {
public:
    using Fn = std::function<Jet1(double)>;

    ScalarField1D() : ScalarField1D(constant(0.0)) {}
    explicit ScalarField1D(Fn fn, std::vector<double> breakpoints = {},
                           double lo = -std::numeric_limits<double>::infinity(),
                           double hi = std::numeric_limits<double>::infinity())
        : fn_(std::make_shared<const Fn>(std::move(fn))), breaks_(std::move(breakpoints)), lo_(lo), hi_(hi) {}

    static ScalarField1D constant(double c) {
        return ScalarField1D([c](double) { return Jet1::constant(c); });
    }
    // sum_k coeffs[k] x^k
    static ScalarField1D polynomial(std::vector<double> coeffs) {
        return ScalarField1D([coeffs](double x) {
            Jet1 r, xp = Jet1::constant(1.0), xj = Jet1::variable(x);
            for (double c : coeffs) {
                r = r + c * xp;
                xp = xp * xj;
            }
            return r;
        });
    }

    Jet1 jet(double x) const { return (*fn_)(x); }
    double operator()(double x) const { return (*fn_)(x).v; }
    // value with the constant extension outside [lo, hi]
    double extended(double x) const { return (*fn_)(std::clamp(x, lo_, hi_)).v; }
    const std::vector<double>& breakpoints() const { return breaks_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }

private:
    std::shared_ptr<const Fn> fn_;
    std::vector<double> breaks_;
    double lo_, hi_;
};

enum class FieldKind { smooth, indicator };

class ScalarField2D {
public:
    using Fn = std::function<Jet2(Point2)>;

    ScalarField2D() : ScalarField2D(zero()) {}
    ScalarField2D(Fn fn, std::vector<Rect> support, double layer = 0.0, FieldKind kind = FieldKind::smooth)
        : fn_(std::make_shared<const Fn>(std::move(fn))), support_(std::move(support)), layer_(layer), kind_(kind) {}

    static ScalarField2D zero() {
        ScalarField2D f([](Point2) { return Jet2{}; }, {});
        f.zero_ = true;
        return f;
    }
    // entire half-plane
    static ScalarField2D from(Fn fn) { return ScalarField2D(std::move(fn), {}); }
    static ScalarField2D indicator(const Rect& r) {
        return ScalarField2D([r](Point2 p) { return Jet2::constant(r.contains(p) ? 1.0 : 0.0); }, {r}, 0.0,
                             FieldKind::indicator);
    }

    Jet2 jet(Point2 p) const {
        if (kind_ == FieldKind::indicator) throw DomainError("indicator fields admit no derivatives");
        return (*fn_)(p);
    }
    double value(Point2 p) const { return (*fn_)(p).v; }
    double operator()(Point2 p) const { return value(p); }

    const std::vector<Rect>& support() const { return support_; }
    bool whole_plane() const { return support_.empty(); }
    bool in_support(Point2 p) const {
        if (support_.empty()) return p.x2 > 0;
        for (const auto& r : support_)
            if (r.contains_closed(p)) return true;
        return false;
    }
    double layer() const { return layer_; }
    FieldKind kind() const { return kind_; }
    bool is_zero() const { return zero_; }

    ScalarField2D scaled(double s) const {
        auto fn = fn_;
        ScalarField2D r([fn, s](Point2 p) { return s * (*fn)(p); }, support_, layer_, kind_);
        r.zero_ = zero_ || s == 0.0;
        return r;
    }

    friend ScalarField2D operator+(const ScalarField2D& a, const ScalarField2D& b) {
        if (a.zero_) return b;
        if (b.zero_) return a;
        std::vector<Rect> sup;
        if (!a.support_.empty() && !b.support_.empty()) {
            sup = a.support_;
            sup.insert(sup.end(), b.support_.begin(), b.support_.end());
        }
        auto fa = a.fn_, fb = b.fn_;
        FieldKind k = (a.kind_ == FieldKind::indicator || b.kind_ == FieldKind::indicator) ? FieldKind::indicator
                                                                                          : FieldKind::smooth;
        double layer = std::max(a.layer_, b.layer_);
        if (a.layer_ > 0 && b.layer_ > 0) layer = std::min(a.layer_, b.layer_);
        return ScalarField2D([fa, fb](Point2 p) { return (*fa)(p) + (*fb)(p); }, sup, layer, k);
    }

private:
    std::shared_ptr<const Fn> fn_;
    std::vector<Rect> support_;
    double layer_ = 0.0;
    FieldKind kind_ = FieldKind::smooth;
    bool zero_ = false;
};

struct PlanarVectorField {
    ScalarField2D v1 = ScalarField2D::zero();
    ScalarField2D v2 = ScalarField2D::zero();

    bool is_zero() const { return v1.is_zero() && v2.is_zero(); }
    double magnitude(Point2 p) const {
        if (is_zero()) return 0.0;
        return std::hypot(v1.value(p), v2.value(p));
    }
    PlanarVectorField scaled(double s) const { return {v1.scaled(s), v2.scaled(s)}; }
    friend PlanarVectorField operator+(const PlanarVectorField& a, const PlanarVectorField& b) {
        return {a.v1 + b.v1, a.v2 + b.v2};
    }
};

inline Jet2 eval_with_partials(const ScalarField2D& f, Point2 p, int order = 2) {
    if (!(p.x2 > 0)) throw DomainError("point outside the half-plane");
    if (order < 0 || order > 2) throw DomainError("order must be 0, 1 or 2");
    Jet2 j = order == 0 ? Jet2::constant(f.value(p)) : f.jet(p);
    if (order < 2) j.d11 = j.d12 = j.d22 = 0;
    if (order < 1) j.d1 = j.d2 = 0;
    return j;
}

// Lf = Δf + f_2 / x2 - f / x2^2 from a jet at height x2
inline double L_of(const Jet2& j, double x2) { return j.d11 + j.d22 + j.d2 / x2 - j.v / (x2 * x2); }

inline double Lf_eval(const ScalarField2D& f, Point2 p) {
    if (!(p.x2 > 0)) throw DomainError("Lf needs x2 > 0");
    return L_of(f.jet(p), p.x2);
}

inline double divided_difference(const ScalarField1D& g, const std::vector<double>& pts) {
    auto distinct = [](double a, double b) {
        if (a == b) throw DegenerateInputError("coincident points in divided difference");
    };
    if (pts.size() == 2) {
        distinct(pts[0], pts[1]);
        return (g(pts[0]) - g(pts[1])) / (pts[0] - pts[1]);
    }
    if (pts.size() == 3) {
        double a = pts[0], b = pts[1], c = pts[2];
        distinct(a, b);
        distinct(b, c);
        distinct(a, c);
        double gab = (g(a) - g(b)) / (a - b);
        double gcb = (g(c) - g(b)) / (c - b);
        return (gab - gcb) / (a - c);
    }
    throw DegenerateInputError("divided difference needs 2 or 3 points");
}

}  // end of namespace nsi
