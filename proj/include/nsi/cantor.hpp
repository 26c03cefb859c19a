#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "axisym.hpp"
#include "energy.hpp"
#include "verifier.hpp"

namespace nsi {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }
inline double to_double(double x) { return x; }

// "p/q", an integer, or a decimal such as "0.6" (read exactly as 6/10)
inline Rational parse_rational(const std::string& s) {
    if (s.empty()) throw PreconditionError("empty rational");
    try {
        auto slash = s.find('/');
        if (slash != std::string::npos) {
            BigInt p(s.substr(0, slash)), q(s.substr(slash + 1));
            if (q == 0) throw PreconditionError("zero denominator in " + s);
            return Rational(p, q);
        }
        auto dot = s.find('.');
        if (dot == std::string::npos) return Rational(BigInt(s));
        std::string ip = s.substr(0, dot), fp = s.substr(dot + 1);
        bool neg = !ip.empty() && ip[0] == '-';
        if (neg || (!ip.empty() && ip[0] == '+')) ip = ip.substr(1);
        if (ip.empty()) ip = "0";
        if (fp.empty() || fp.find_first_not_of("0123456789") != std::string::npos ||
            ip.find_first_not_of("0123456789") != std::string::npos)
            throw PreconditionError("bad rational " + s);
        BigInt den = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(fp.size()));
        Rational r(BigInt(ip) * den + BigInt(fp), den);
        return neg ? Rational(-r) : r;
    } catch (const std::runtime_error&) {
        throw PreconditionError("bad rational " + s);
    }
}

template <class Num>
Num int_pow(const Num& x, int j) {
    Num r = 1;
    for (int i = 0; i < j; ++i) r *= x;
    return r;
}

// closed boxes in R^3
template <class Num>
struct Box3 {
    std::array<Num, 3> lo, hi;

    bool contains(const Box3& o) const {
        for (int i = 0; i < 3; ++i)
            if (o.lo[i] < lo[i] || o.hi[i] > hi[i]) return false;
        return true;
    }
    bool disjoint(const Box3& o) const {
        for (int i = 0; i < 3; ++i)
            if (hi[i] < o.lo[i] || o.hi[i] < lo[i]) return true;
        return false;
    }
    Num dist2(const Box3& o) const {
        Num s = 0;
        for (int i = 0; i < 3; ++i) {
            Num g = std::max(Num(o.lo[i] - hi[i]), Num(lo[i] - o.hi[i]));
            if (g > 0) s += g * g;
        }
        return s;
    }
    Box3 hull(const Box3& o) const {
        Box3 b = *this;
        for (int i = 0; i < 3; ++i) {
            b.lo[i] = std::min(lo[i], o.lo[i]);
            b.hi[i] = std::max(hi[i], o.hi[i]);
        }
        return b;
    }
    double diam() const {
        double s = 0;
        for (int i = 0; i < 3; ++i) s += std::pow(to_double(Num(hi[i] - lo[i])), 2);
        return std::sqrt(s);
    }
};

// bounding box of R(closure U) for a planar rectangle U
template <class Num>
Box3<Num> revolution_box(const Num& a1, const Num& b1, const Num& b2) {
    return {{a1, Num(-b2), Num(-b2)}, {b1, b2, b2}};
}

template <class Num>
struct CantorParams {
    Num tau = Num(1) / 3;
    int M = 2;
    Rational xi = Rational(3, 5);
    std::array<Num, 3> z{0, 0, 0};
    Num X = Num(2) / 3;
    Box3<Num> G = revolution_box<Num>(0, 1, 2);
    Num sep = 0;  // 0 means: take the gap between neighbouring images
};

using MultiIndex = std::vector<int>;  // entries in 1..M; empty is m_0

template <class Num>
Num beta(const CantorParams<Num>& p, int n, const Num& x) {
    return p.tau * x + p.z[0] + Num(n - 1) * p.X;
}
template <class Num>
Num gamma_pow(const CantorParams<Num>& p, int j, const Num& x) {
    Num tj = int_pow(p.tau, j);
    return tj * x + p.z[1] * (Num(1) - tj) / (Num(1) - p.tau);
}
template <class Num>
Num gamma_pow_inv(const CantorParams<Num>& p, int j, const Num& y) {
    Num tj = int_pow(p.tau, j);
    return (y - p.z[1] * (Num(1) - tj) / (Num(1) - p.tau)) / tj;
}

// pi_m by the closed form
template <class Num>
Num pi_map(const CantorParams<Num>& p, const MultiIndex& m, const Num& x) {
    int j = static_cast<int>(m.size());
    Num tj = int_pow(p.tau, j);
    Num s = 0, tk = 1;
    for (int k = 0; k < j; ++k) {
        s += tk * Num(m[k] - 1);
        tk *= p.tau;
    }
    return tj * x + p.z[0] * (Num(1) - tj) / (Num(1) - p.tau) + p.X * s;
}

// pi_m as beta_{m_1} o ... o beta_{m_j}
template <class Num>
Num pi_compose(const CantorParams<Num>& p, const MultiIndex& m, Num x) {
    for (auto it = m.rbegin(); it != m.rend(); ++it) x = beta(p, *it, x);
    return x;
}

template <class Num>
Num pi_inverse(const CantorParams<Num>& p, const MultiIndex& m, const Num& y) {
    Num c = pi_map(p, m, Num(0));
    return (y - c) / int_pow(p.tau, static_cast<int>(m.size()));
}

template <class Num>
std::array<Num, 3> apply_map(const CantorParams<Num>& p, const MultiIndex& m, const std::array<Num, 3>& x) {
    int j = static_cast<int>(m.size());
    return {pi_map(p, m, x[0]), gamma_pow(p, j, x[1]), int_pow(p.tau, j) * x[2]};
}
template <class Num>
std::array<Num, 3> apply_inverse(const CantorParams<Num>& p, const MultiIndex& m, const std::array<Num, 3>& y) {
    int j = static_cast<int>(m.size());
    return {pi_inverse(p, m, y[0]), gamma_pow_inv(p, j, y[1]), y[2] / int_pow(p.tau, j)};
}
template <class Num>
Box3<Num> apply_map(const CantorParams<Num>& p, const MultiIndex& m, const Box3<Num>& b) {
    return {apply_map(p, m, b.lo), apply_map(p, m, b.hi)};
}

inline std::vector<MultiIndex> multi_indices(int M, int j) {
    std::vector<MultiIndex> out{MultiIndex{}};
    for (int level = 0; level < j; ++level) {
        std::vector<MultiIndex> next;
        for (const auto& m : out)
            for (int n = 1; n <= M; ++n) {
                MultiIndex q = m;
                q.push_back(n);
                next.push_back(q);
            }
        out = std::move(next);
    }
    return out;
}

struct CantorValidation {
    bool valid = false;
    double dim_ifs = 0;     // -log M / log tau
    double xi_bound = 0;    // d_H(S') >= xi
    double separation = 0;  // gap between neighbouring images
    CheckList checks;
};

namespace detail {

inline Check exact_check(std::string name, std::string tag, bool pass, double margin) {
    Check c;
    c.name = std::move(name);
    c.tag = std::move(tag);
    c.pass = pass;
    c.margin = margin;
    c.note = "exact";
    return c;
}

// tau^xi M >= 1 with xi = a/b, tau = p/q: M^b p^a >= q^a
inline bool tau_xi_M(const Rational& tau, int M, const Rational& xi) {
    BigInt a = boost::multiprecision::numerator(xi), b = boost::multiprecision::denominator(xi);
    BigInt p = boost::multiprecision::numerator(tau), q = boost::multiprecision::denominator(tau);
    if (a > 100000 || b > 100000) throw PreconditionError("xi denominator too large for an exact check");
    unsigned ua = a.convert_to<unsigned>(), ub = b.convert_to<unsigned>();
    return boost::multiprecision::pow(BigInt(M), ub) * boost::multiprecision::pow(p, ua) >=
           boost::multiprecision::pow(q, ua);
}
inline bool tau_xi_M(double tau, int M, const Rational& xi) { return std::pow(tau, to_double(xi)) * M >= 1; }

}  // namespace detail

template <class Num>
CantorValidation validate_params(const CantorParams<Num>& p) {
    CantorValidation out;
    double tau = to_double(p.tau), xi = to_double(p.xi);
    bool tau_ok = p.tau > 0 && p.tau < 1, xi_ok = p.xi > 0 && p.xi < 1, M_ok = p.M >= 1;
    out.checks.add(detail::exact_check("tau_range", "0 < tau < 1", tau_ok, std::min(tau, 1 - tau)));
    out.checks.add(detail::exact_check("xi_range", "0 < xi < 1", xi_ok, std::min(xi, 1 - xi)));
    out.checks.add(detail::exact_check("M_range", "M >= 1", M_ok, p.M - 1.0));
    if (!tau_ok || !M_ok) return out;
    bool txm = detail::tau_xi_M(p.tau, p.M, p.xi);
    out.checks.add(detail::exact_check("tau_xi_M", "tau^xi M >= 1", txm, std::pow(tau, xi) * p.M - 1));
    bool tm = p.tau * Num(p.M) < Num(1);
    out.checks.add(detail::exact_check("tau_M", "tau M < 1", tm, 1 - tau * p.M));
    out.dim_ifs = -std::log(static_cast<double>(p.M)) / std::log(tau);
    out.xi_bound = xi;

    const Box3<Num>& G = p.G;
    bool zin = true;
    for (int i = 0; i < 3; ++i) zin = zin && p.z[i] >= G.lo[i] && p.z[i] <= G.hi[i];
    out.checks.add(detail::exact_check("z_in_G", "z in G", zin, zin ? 0.0 : -1.0));
    bool inside = true, disjoint = true;
    Box3<Num> hull = apply_map(p, MultiIndex{1}, G);
    std::vector<Box3<Num>> imgs;
    for (int n = 1; n <= p.M; ++n) {
        imgs.push_back(apply_map(p, MultiIndex{n}, G));
        inside = inside && G.contains(imgs.back());
        hull = hull.hull(imgs.back());
    }
    for (int a = 0; a < p.M; ++a)
        for (int b = a + 1; b < p.M; ++b) disjoint = disjoint && imgs[a].disjoint(imgs[b]);
    out.checks.add(detail::exact_check("images_inside_G", "Gamma_n(G) subset of G", inside, inside ? 0.0 : -1.0));
    out.checks.add(detail::exact_check("images_disjoint", "Gamma_n(G) pairwise disjoint", disjoint, disjoint ? 0.0 : -1.0));
    bool hin = G.contains(hull);
    out.checks.add(detail::exact_check("hull_inside_G", "conv{Gamma_n(G)} subset of G", hin, hin ? 0.0 : -1.0));
    if (p.M >= 2) {
        Num gap = imgs[1].lo[0] - imgs[0].hi[0];
        out.separation = to_double(gap);
    }
    out.valid = out.checks.all_pass();
    return out;
}

template <class Num>
struct LevelBoxes {
    int j = 0;
    std::vector<MultiIndex> index;
    std::vector<Box3<Num>> boxes;
    CheckList checks;
};

template <class Num>
LevelBoxes<Num> level_boxes(const CantorParams<Num>& p, int j, bool certify = true) {
    if (j < 0) throw PreconditionError("level must be non-negative");
    LevelBoxes<Num> out;
    out.j = j;
    out.index = multi_indices(p.M, j);
    for (const auto& m : out.index) out.boxes.push_back(apply_map(p, m, p.G));
    if (!certify || j == 0) return out;
    bool nest = true, disj = true, sep_ok = true;
    for (const auto& m : out.index) {
        MultiIndex parent(m.begin(), m.end() - 1);
        Box3<Num> child = apply_map(p, m, p.G), up = apply_map(p, parent, p.G);
        nest = nest && up.contains(child);
        // Gamma_m(G) = Gamma_mbar(Gamma_{m_j}(G))
        Box3<Num> via = apply_map(p, parent, apply_map(p, MultiIndex{m.back()}, p.G));
        nest = nest && via.lo == child.lo && via.hi == child.hi;
    }
    Num sep = p.sep;
    if (sep == 0 && p.M >= 2) sep = apply_map(p, MultiIndex{2}, p.G).lo[0] - apply_map(p, MultiIndex{1}, p.G).hi[0];
    Num need = int_pow(p.tau, j - 1) * sep;
    need *= need;
    Num worst = -1;
    for (std::size_t a = 0; a < out.boxes.size(); ++a)
        for (std::size_t b = a + 1; b < out.boxes.size(); ++b) {
            disj = disj && out.boxes[a].disjoint(out.boxes[b]);
            Num d = out.boxes[a].dist2(out.boxes[b]);
            if (worst < 0 || d < worst) worst = d;
            sep_ok = sep_ok && d >= need;
        }
    out.checks.add(detail::exact_check("nesting", "Gamma_m(G) subset of Gamma_mbar(G)", nest, nest ? 0.0 : -1.0));
    out.checks.add(detail::exact_check("disjointness", "Gamma_m(G) pairwise disjoint", disj, disj ? 0.0 : -1.0));
    double margin = worst < 0 ? 0.0 : std::sqrt(to_double(worst)) - std::sqrt(to_double(need));
    out.checks.add(detail::exact_check("separation", "components separated by tau^{j-1} zeta", sep_ok, margin));
    return out;
}

template <class Num>
struct Schedule {
    std::vector<Num> t;  // t_0 .. t_{jmax+1}
    Num T0;
};

// t_j = T sum_{k<j} tau^{2k}, T_0 = T / (1 - tau^2)
template <class Num>
Schedule<Num> switching_schedule(const Num& T, const Num& tau, int jmax) {
    if (!(T > 0) || !(tau >= 0 && tau < 1)) throw PreconditionError("need T > 0 and tau in [0, 1)");
    if (jmax < 0) throw PreconditionError("jmax must be non-negative");
    Schedule<Num> s;
    s.t.push_back(Num(0));
    Num term = T;
    for (int j = 0; j <= jmax; ++j) {
        s.t.push_back(s.t.back() + term);
        term *= tau * tau;
    }
    s.T0 = T / (Num(1) - tau * tau);
    return s;
}

struct DimensionFit {
    double slope = 0, intercept = 0, r2 = 0;
    std::vector<std::array<double, 2>> points;  // log(1/delta), log N(delta)
};

namespace detail {

inline long long floor_div(const Rational& a, const Rational& d) {
    Rational q = a / d;
    BigInt n = boost::multiprecision::numerator(q), m = boost::multiprecision::denominator(q);
    BigInt f = n / m;
    if (n < 0 && f * m != n) f -= 1;
    return f.convert_to<long long>();
}
inline long long floor_div(double a, double d) { return static_cast<long long>(std::floor(a / d)); }
inline long long ceil_div(const Rational& a, const Rational& d) { return -floor_div(Rational(-a), d); }
inline long long ceil_div(double a, double d) { return static_cast<long long>(std::ceil(a / d)); }

struct CellHash {
    std::size_t operator()(const std::array<long long, 3>& c) const {
        std::size_t h = 1469598103934665603ull;
        for (long long v : c) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
        return h;
    }
};

}  // namespace detail

// number of delta-grid cells meeting the union of the boxes
template <class Num>
std::size_t box_count(const std::vector<Box3<Num>>& boxes, const Num& delta) {
    std::unordered_set<std::array<long long, 3>, detail::CellHash> cells;
    for (const auto& b : boxes) {
        std::array<long long, 3> lo, hi;
        for (int i = 0; i < 3; ++i) {
            lo[i] = detail::floor_div(b.lo[i], delta);
            hi[i] = std::max(lo[i], detail::ceil_div(b.hi[i], delta) - 1);
        }
        double n = 1;
        for (int i = 0; i < 3; ++i) n *= static_cast<double>(hi[i] - lo[i] + 1);
        if (n > 5e7) throw SizingError("box count grid too fine");
        for (long long x = lo[0]; x <= hi[0]; ++x)
            for (long long y = lo[1]; y <= hi[1]; ++y)
                for (long long z = lo[2]; z <= hi[2]; ++z) cells.insert({x, y, z});
    }
    return cells.size();
}

// least-squares slope of log N(delta) against log(1/delta)
template <class Num>
DimensionFit box_dimension(const std::vector<Box3<Num>>& boxes, const std::vector<Num>& scales) {
    if (scales.size() < 4) throw PreconditionError("box dimension needs at least 4 scales");
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (const auto& s : scales) {
        if (!(s > 0)) throw PreconditionError("scales must be positive");
        lo = std::min(lo, to_double(s));
        hi = std::max(hi, to_double(s));
    }
    if (hi / lo < 100 * (1 - 1e-12)) throw PreconditionError("scales must span at least two decades");
    DimensionFit fit;
    for (const auto& s : scales)
        fit.points.push_back({-std::log(to_double(s)), std::log(static_cast<double>(box_count(boxes, s)))});
    double n = static_cast<double>(fit.points.size()), sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (auto [x, y] : fit.points) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    double vx = sxx - sx * sx / n, vy = syy - sy * sy / n, cxy = sxy - sx * sy / n;
    fit.slope = cxy / vx;
    fit.intercept = (sy - fit.slope * sx) / n;
    fit.r2 = vy > 0 ? cxy * cxy / (vx * vy) : 1.0;
    return fit;
}

namespace detail {

// g(y1, rho) = k F(s y1 - shift, s rho)
inline ScalarField2D rescaled_field(const ScalarField2D& F, double k, double s, double shift) {
    if (F.is_zero()) return ScalarField2D::zero();
    std::vector<Rect> sup;
    for (const Rect& r : F.support()) sup.push_back({(r.a1 + shift) / s, (r.b1 + shift) / s, r.a2 / s, r.b2 / s});
    return ScalarField2D(
        [F, k, s, shift](Point2 y) {
            Jet2 j = F.jet({s * y.x1 - shift, s * y.x2});
            double s2 = s * s;
            return Jet2{k * j.v, k * s * j.d1, k * s * j.d2, k * s2 * j.d11, k * s2 * j.d12, k * s2 * j.d22};
        },
        sup, F.layer() / s, F.kind());
}

// sum of disjointly supported fields
inline ScalarField2D disjoint_field_sum(const std::vector<ScalarField2D>& parts) {
    std::vector<Rect> sup;
    std::vector<std::pair<Rect, std::size_t>> owner;
    double layer = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        for (const Rect& r : parts[i].support()) {
            sup.push_back(r);
            owner.push_back({r, i});
        }
        layer = std::max(layer, parts[i].layer());
    }
    return ScalarField2D(
        [parts, owner](Point2 y) {
            for (const auto& [r, i] : owner)
                if (r.contains(y)) return parts[i].jet(y);
            return Jet2{};
        },
        sup, layer);
}

inline TimeDependentField rescaled_in_time(const TimeDependentField& base, double k, double s, double shift,
                                           double t0, double time_scale, double t_start, double t_end,
                                           const std::string& name) {
    TimeDependentField u;
    u.t_start = t_start;
    u.t_end = t_end;
    u.nu0 = base.nu0;
    u.name = name;
    for (const Rect& r : base.support) u.support.push_back({(r.a1 + shift) / s, (r.b1 + shift) / s, r.a2 / s, r.b2 / s});
    u.at = [base, k, s, shift, t0, time_scale](double t) {
        double tb = std::clamp(time_scale * (t - t0), base.t_start, base.t_end);
        FieldSnapshot b = base.at(tb);
        FieldSnapshot out;
        out.u = AxisymField::of(rescaled_field(b.u.f, k, s, shift));
        auto dt = b.dt_mag2;
        double amp = k * k * time_scale;
        out.dt_mag2 = [dt, amp, s, shift](Point2 y) { return amp * dt({s * y.x1 - shift, s * y.x2}); };
        return out;
    };
    return u;
}

}  // namespace detail

// the tower u^(j)(x, t) = tau^-j sum_m base(Gamma_m^-1 x, tau^-2j (t - t_j)) in planar form
struct CantorTower {
    CantorParams<Rational> params;
    TimeDependentField base;  // on [0, T]
    double T = 1, T0 = 0, tau = 0;
    int M = 1, jmax = 0;
    std::vector<double> t;  // t_0 .. t_{jmax+1}
    double C = 0;           // sup_s |base(s)|^2 on the sample grid
    CheckList checks;
    CheckList assumption;  // growth property at the switches; diagnostic only

    TimeDependentField level(int j) const {
        if (j < 0 || j > jmax) throw DomainError("tower level out of range");
        double tj = std::pow(tau, j), s = 1 / tj;
        TimeDependentField u;
        u.t_start = t[j];
        u.t_end = t[j + 1];
        u.nu0 = base.nu0;
        u.name = "tower" + std::to_string(j);
        std::vector<double> shifts;
        for (const auto& m : multi_indices(M, j)) shifts.push_back(s * to_double(pi_map(params, m, Rational(0))));
        for (double sh : shifts)
            for (const Rect& r : base.support) u.support.push_back({(r.a1 + sh) / s, (r.b1 + sh) / s, r.a2 / s, r.b2 / s});
        TimeDependentField b = base;
        double t_j = t[j], ts = s * s;
        u.at = [b, shifts, s, t_j, ts](double tt) {
            double tb = std::clamp(ts * (tt - t_j), b.t_start, b.t_end);
            FieldSnapshot bs = b.at(tb);
            std::vector<ScalarField2D> parts;
            for (double sh : shifts) parts.push_back(detail::rescaled_field(bs.u.f, s, s, sh));
            FieldSnapshot out;
            out.u = AxisymField::of(detail::disjoint_field_sum(parts));
            auto dt = bs.dt_mag2;
            double amp = s * s * ts;
            out.dt_mag2 = [dt, amp, s, shifts, sup = bs.u.f.support()](Point2 y) {
                for (double sh : shifts) {
                    Point2 q{s * y.x1 - sh, s * y.x2};
                    for (const Rect& r : sup)
                        if (r.contains(q)) return amp * dt(q);
                }
                return 0.0;
            };
            return out;
        };
        return u;
    }
    // the switching solution on [0, t_{jmax+1})
    TimeDependentField solution() const {
        std::vector<TimeDependentField> levels;
        for (int j = 0; j <= jmax; ++j) levels.push_back(level(j));
        TimeDependentField u;
        u.t_start = 0;
        u.t_end = t[jmax + 1];
        u.nu0 = base.nu0;
        u.name = "tower";
        u.support = {Rect{to_double(params.G.lo[0]), to_double(params.G.hi[0]), 0.0, to_double(params.G.hi[1])}};
        std::vector<double> ts = t;
        u.at = [levels, ts](double tt) {
            auto it = std::upper_bound(ts.begin(), ts.end(), tt);
            std::size_t j = it == ts.begin() ? 0 : static_cast<std::size_t>(it - ts.begin()) - 1;
            if (j >= levels.size()) throw DomainError("time beyond the represented tower depth");
            return levels[j].at(tt);
        };
        return u;
    }
};

inline CantorTower rescale_tower(const TimeDependentField& base, const CantorParams<Rational>& p, double T, int jmax,
                                 double growth_factor = -1, int norm_levels = 3, int grid = 80) {
    if (p.z[1] != 0 || p.z[2] != 0) throw ContractError("the planar tower needs z = (z1, 0, 0)");
    if (!validate_params(p).valid) throw PreconditionError("cantor parameters do not validate");
    if (!(std::abs(base.t_start) < 1e-15 && std::abs(base.t_end - T) <= 1e-12 * T))
        throw PreconditionError("base family must live on [0, T]");
    CantorTower tw;
    tw.params = p;
    tw.base = base;
    tw.T = T;
    tw.tau = to_double(p.tau);
    tw.M = p.M;
    tw.jmax = jmax;
    auto sch = switching_schedule(Rational(T), p.tau, jmax);
    for (const auto& x : sch.t) tw.t.push_back(to_double(x));
    tw.T0 = to_double(sch.T0);
    if (growth_factor < 0) growth_factor = 1 / tw.tau;

    const int ns = 6;
    for (int i = 0; i <= ns; ++i) tw.C = std::max(tw.C, std::pow(lp_norm(base.at(T * i / ns).u, 2, 400, 1e-7, 4), 2));

    // supports: the lifted planar images have bounding box Gamma_m(G)
    MarginTracker supp;
    Rect b0 = base.support.front();
    for (int j = 0; j <= std::min(jmax, 6); ++j) {
        auto lv = tw.level(j);
        auto idx = multi_indices(p.M, j);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            Box3<Rational> g = apply_map(p, idx[k], p.G);
            const Rect& r = lv.support[k * base.support.size()];
            Box3<Rational> gb = apply_map(p, idx[k], revolution_box<Rational>(Rational(b0.a1), Rational(b0.b1), Rational(b0.b2)));
            double err = std::max({std::abs(r.a1 - to_double(gb.lo[0])), std::abs(r.b1 - to_double(gb.hi[0])),
                                   std::abs(r.b2 - to_double(gb.hi[1]))});
            double scale = std::pow(tw.tau, j);
            supp.see(1e-12 * std::max(1.0, scale) - err, r.a1, r.b1, j);
            supp.see(g.contains(gb) ? 1.0 : -1.0, r.a1, r.b1, j);
        }
    }
    tw.checks.add(supp.check("support_identity", "supp u^(j)(t) = union of Gamma_m(supp base) inside Gamma_m(G)", false));

    // L^p identities |u^(j)|_p = M^{j/p} tau^{-j(1-3/p)} |base|_p
    MarginTracker lpm, en;
    for (int j = 0; j <= std::min(jmax, norm_levels); ++j) {
        auto lv = tw.level(j);
        for (double frac : {0.0, 0.5}) {
            double tt = tw.t[j] + frac * (tw.t[j + 1] - tw.t[j]);
            double tb = std::pow(tw.tau, -2 * j) * (tt - tw.t[j]);
            FieldSnapshot a = lv.at(tt), b = base.at(std::clamp(tb, 0.0, T));
            for (double q : {1.0, 2.0, 2.5}) {
                // same capped rule on both sides; it maps affinely between levels
                double direct = lp_norm(a.u, q, 400, 0.0, 2),
                       pred = std::pow(p.M, j / q) * std::pow(tw.tau, -j * (1 - 3 / q)) * lp_norm(b.u, q, 400, 0.0, 2);
                lpm.see(1e-6 - std::abs(direct - pred) / pred, q, j, tt);
                if (q == 2) en.see(tw.C * std::pow(p.M * tw.tau, j) * (1 + 1e-4) - direct * direct, j, 0, tt);
            }
        }
    }
    tw.checks.add(lpm.check("lp_rescaling", "|u^(j)|_p = M^{j/p} tau^{-j(1-3/p)} |u^(0)|_p", false));
    tw.checks.add(en.check("energy_shape", "|u^(j)(t)|^2 <= C (M tau)^j", false));

    // growth assumption at each switch: |u^(j)(t_j)| <= |u^(j-1)(t_j)|
    for (int j = 1; j <= jmax; ++j) {
        auto prev = tw.level(j - 1), cur = tw.level(j);
        Check c = combination_check(prev.at(tw.t[j]).u, cur.at(tw.t[j]).u, grid, tw.t[j]);
        c.name = "switch_" + std::to_string(j);
        c.tag = "|u^(j)(t_j)| <= |u^(j-1)(t_j)| given the growth assumption";
        c.note = "assumption check (growth factor " + fmt17(growth_factor) + ")";
        tw.assumption.add(c);
    }
    return tw;
}

// placeholder parameters: middle thirds along x1 inside R(closure U) for U = (0,1) x (1,2)
inline CantorParams<Rational> placeholder_params() {
    CantorParams<Rational> p;
    p.tau = Rational(1, 3);
    p.M = 2;
    p.xi = Rational(3, 5);
    p.z = {Rational(0), Rational(0), Rational(0)};
    p.X = Rational(2, 3);
    p.G = revolution_box<Rational>(Rational(0), Rational(1), Rational(2));
    return p;
}

struct PlaceholderTower {
    Structure structure;
    AlmostConstant base;
    CantorTower tower;
};

// the tower over the initial-mode almost constant solution of the recipe structure on (0,1) x (1,2)
inline PlaceholderTower placeholder_tower(int jmax = 4, double T = 1, double base_eps = 0.05, double eta = 0.3) {
    PlaceholderTower out;
    out.structure = build_structure_recipe(Rect{0, 1, 1, 2}, eta, PlateauKind::level_set);
    out.base = almost_constant(out.structure, base_eps, T, AlmostMode::initial);
    out.tower = rescale_tower(out.base.u, placeholder_params(), T, jmax);
    return out;
}

struct CompositionPlan {
    double T_prime = 0, T_dprime = 0, lambda = 1, a1 = 0;
    double T_u2 = 0;  // u_2 lives on [0, T_u2], the first time e <= eps/3
    Rect U1;
    bool has_U2 = false;
    Rect U2;
    PiecewiseSolution solution;
    SynthResult u2;
    double sup_u0 = 0;
    std::vector<std::array<double, 4>> series;
    CheckList checks;
};

// first t with e(t) <= eps on [t, T]
inline double first_time_below(const EnergyProfile& e, double eps) {
    const auto& k = e.knots();
    if (k.front().e <= eps) return 0.0;
    for (std::size_t i = 1; i < k.size(); ++i) {
        if (k[i].e <= eps) {
            const auto& a = k[i - 1];
            if (a.t == k[i].t) return a.t;
            return a.t + (a.e - eps) / (a.e - k[i].e) * (k[i].t - a.t);
        }
    }
    throw PreconditionError("the profile never drops to eps before T");
}

// (e - d)_+ restricted to [0, t1]
inline EnergyProfile restricted_profile(const EnergyProfile& e, double t1, double d) {
    std::vector<EnergyProfile::Knot> k;
    for (const auto& q : e.knots())
        if (q.t < t1) k.push_back({q.t, std::max(q.e - d, 0.0)});
    double last = e(t1) - d;
    k.push_back({t1, last <= 1e-12 * std::max(1.0, d) ? 0.0 : last});
    if (k.size() >= 2 && k.back().e > k[k.size() - 2].e) k.back().e = k[k.size() - 2].e;
    return EnergyProfile::from_knots(std::move(k));
}

struct ComposeConfig {
    double x_bar = 0, R = 3;  // the ball B((x_bar, 0, 0), R) inside W
    SynthConfig synth;
    int grid = 120;
    int time_samples = 24;
};

inline CompositionPlan compose_with_profile(const EnergyProfile& e, double eps, double T, const CantorTower& tower,
                                            const Structure& base_structure, const ComposeConfig& cfg = {}) {
    if (!(eps > 0) || !(T > 0)) throw PreconditionError("eps and T must be positive");
    CompositionPlan plan;
    plan.T_prime = first_time_below(e, eps);
    const Box3<Rational>& G = tower.params.G;
    double g1lo = to_double(G.lo[0]), g1hi = to_double(G.hi[0]), g2hi = to_double(G.hi[1]);
    double diamG = G.diam(), C = tower.C;

    Rect U2{cfg.x_bar + cfg.R / 6, cfg.x_bar + cfg.R / 2, cfg.R / 3, 2 * cfg.R / 3};
    plan.has_U2 = plan.T_prime > 0;
    plan.U2 = U2;
    // u_2 follows (e - eps/3)_+ within eps/3, so that |u_2| >= e - 2 eps/3 while it lives
    plan.T_u2 = plan.has_U2 ? first_time_below(e, eps / 3) : 0.0;
    double lambda = 1;
    Rect U1;
    for (int it = 0;; ++it) {
        if (it > 60) throw SizingError("lambda search exhausted");
        double a1 = lambda * cfg.x_bar - (g1lo + g1hi) / 2;
        U1 = {(g1lo + a1) / lambda, (g1hi + a1) / lambda, 0.0, g2hi / lambda};
        double far = std::hypot(std::max(std::abs(U1.a1 - cfg.x_bar), std::abs(U1.b1 - cfg.x_bar)), U1.b2);
        bool ok = tower.T0 / (lambda * lambda) < T - std::max(plan.T_prime, plan.T_u2) && diamG / lambda < cfg.R && far < cfg.R &&
                  std::sqrt(C / lambda) <= eps / 3 && (!plan.has_U2 || U1.disjoint(U2));
        if (ok) {
            plan.a1 = a1;
            break;
        }
        lambda *= 2;
    }
    plan.lambda = lambda;
    plan.U1 = U1;
    plan.T_dprime = T - tower.T0 / (lambda * lambda);
    plan.sup_u0 = std::sqrt(C / lambda);

    // u_0(x, t) = lambda frak_u(lambda x - a, lambda^2 t), started at T''
    TimeDependentField frak = tower.solution();
    double Tend_rep = plan.T_dprime + frak.t_end / (lambda * lambda);
    TimeDependentField u0 =
        detail::rescaled_in_time(frak, lambda, lambda, plan.a1, plan.T_dprime, lambda * lambda, plan.T_dprime, T, "u0");
    {
        auto inner = u0.at;
        double lim = Tend_rep;
        u0.at = [inner, lim](double t) {
            if (t >= lim) throw DomainError("time beyond the represented tower depth");
            return inner(t);
        };
    }

    // u_1: final-mode almost constant solution on the structure of u_0(0)
    Structure s1;
    s1.f = detail::rescaled_field(base_structure.f, lambda, lambda, plan.a1);
    s1.phi = detail::rescaled_field(base_structure.phi, 1.0, lambda, plan.a1);
    s1.rects = s1.f.support();
    s1.rect = s1.rects.front();
    AlmostConstant ac = almost_constant(s1, eps / 3, plan.T_dprime, AlmostMode::final, cfg.grid);
    plan.checks.append(ac.checks, "u1.");

    TimeDependentField first = ac.u;
    if (plan.has_U2) {
        EnergyProfile e2 = restricted_profile(e, plan.T_u2, eps / 3);
        SynthConfig sc = cfg.synth;
        plan.u2 = synthesize(U2, eps / 3, plan.T_u2, e2, sc);
        plan.checks.append(plan.u2.checks, "u2.");
        auto sol = std::make_shared<PiecewiseSolution>(plan.u2.solution);
        TimeDependentField ext;
        ext.t_start = 0;
        ext.t_end = plan.T_dprime;
        ext.support = {U2};
        ext.nu0 = plan.u2.nu0;
        ext.name = "u2";
        double Tp = plan.T_u2;
        ext.at = [sol, Tp](double t) {
            if (t < Tp) return sol->at(t);
            FieldSnapshot z;
            z.dt_mag2 = [](Point2) { return 0.0; };
            return z;
        };
        first = disjoint_sum(ac.u, ext);
        first.nu0 = std::min(ac.nu0, plan.u2.nu0);
    }
    u0.nu0 = tower.base.nu0;
    plan.solution = concatenate({first, u0}, cfg.grid);
    plan.solution.nu0 = std::min(first.nu0, u0.nu0);
    plan.checks.append(plan.solution.checks, "splice.");

    Check order = detail::exact_check("time_order", "T' < T'' < T", plan.T_prime < plan.T_dprime && plan.T_dprime < T,
                                      std::min(plan.T_dprime - plan.T_prime, T - plan.T_dprime));
    order.note = "";
    plan.checks.add(order);
    Check small;
    small.name = "u0_small";
    small.tag = "diam supp u0 < R and |u0(t)| <= eps/3";
    small.margin = std::min(eps / 3 - plan.sup_u0, cfg.R - diamG / lambda);
    small.pass = small.margin >= 0;
    plan.checks.add(small);
    if (plan.has_U2) {
        Check dj;
        dj.name = "disjoint_supports";
        dj.tag = "U1 and U2 disjoint";
        dj.pass = U1.disjoint(U2);
        dj.margin = dj.pass ? 1.0 : -1.0;
        plan.checks.add(dj);
    }

    // |lambda u(lambda x - a, lambda^2 t)| = lambda^{-1/2} |u(lambda^2 t)|
    MarginTracker sc;
    for (double frac : {0.0, 0.3, 0.7}) {
        double s = frac * tower.t[1];
        double t = plan.T_dprime + s / (lambda * lambda);
        double direct = lp_norm(u0.at(t).u, 2), pred = std::pow(lambda, -0.5) * lp_norm(frak.at(s).u, 2);
        sc.see(1e-10 - std::abs(direct - pred) / pred, s, 0, t);
    }
    plan.checks.add(sc.check("lambda_scaling", "|lambda u(lambda ., lambda^2 t)| = lambda^{-1/2} |u(lambda^2 t)|", false));

    // deviation on the represented time range
    MarginTracker dev;
    int n = std::max(2, cfg.time_samples);
    for (int i = 0; i < n; ++i) {
        double t = std::min(Tend_rep, T) * i / (n - 1);
        if (t >= Tend_rep) t = std::nextafter(Tend_rep, 0.0);
        double nu = lp_norm(plan.solution.at(t).u, 2), et = e(t);
        plan.series.push_back({t, nu, et, std::abs(nu - et)});
        dev.see(eps - std::abs(nu - et), 0, 0, t);
    }
    plan.checks.add(dev.check("deviation", "| |u(t)| - e(t) | <= eps on the represented range", false));
    return plan;
}

}  // end of namespace nsi
