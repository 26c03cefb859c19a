#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "axisym.hpp"
#include "cutoff.hpp"
#include "mollify.hpp"
#include "verifier.hpp"

namespace nsi {

// piecewise linear, nonincreasing, non-negative; a repeated time marks a jump
class EnergyProfile {
public:
    struct Knot {
        double t, e;
    };

    static EnergyProfile from_knots(std::vector<Knot> k) {
        if (k.size() < 2) throw PreconditionError("a profile needs at least two knots");
        if (k.front().t != 0) throw PreconditionError("a profile starts at t = 0");
        for (std::size_t i = 0; i < k.size(); ++i) {
            if (!(k[i].e >= 0) || !std::isfinite(k[i].e)) throw PreconditionError("profile values must be non-negative");
            if (i == 0) continue;
            if (k[i].t < k[i - 1].t) throw PreconditionError("profile times must be sorted");
            if (k[i].e > k[i - 1].e) throw PreconditionError("profile must be nonincreasing");
            if (i >= 2 && k[i].t == k[i - 1].t && k[i - 1].t == k[i - 2].t)
                throw PreconditionError("at most two knots share a time");
        }
        if (!(k.back().t > 0)) throw PreconditionError("profile interval is empty");
        if (k.back().t == k[k.size() - 2].t) throw PreconditionError("a jump cannot sit at the final time");
        EnergyProfile p;
        p.knots_ = std::move(k);
        return p;
    }
    static EnergyProfile linear(double e0, double eT, double T) { return from_knots({{0, e0}, {T, eT}}); }
    static EnergyProfile constant(double e0, double T) { return from_knots({{0, e0}, {T, e0}}); }

    // rows "t,e"; a header row is skipped; a repeated t is a jump
    static EnergyProfile from_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw PreconditionError("cannot open profile file " + path);
        std::vector<Knot> k;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ss(line);
            Knot q{};
            if (!(ss >> q.t >> q.e)) {
                if (k.empty()) continue;
                throw PreconditionError("bad profile row: " + line);
            }
            k.push_back(q);
        }
        return from_knots(std::move(k));
    }

    // linear:e0,eT | const:e0 | csv:path
    static EnergyProfile parse(const std::string& spec, double T) {
        auto colon = spec.find(':');
        if (colon == std::string::npos) throw PreconditionError("profile spec needs a kind prefix");
        std::string kind = spec.substr(0, colon), rest = spec.substr(colon + 1);
        auto num = [](const std::string& s) {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size()) throw PreconditionError("bad number in profile spec: " + s);
            return v;
        };
        try {
            if (kind == "linear") {
                auto comma = rest.find(',');
                if (comma == std::string::npos) throw PreconditionError("linear profile needs e0,eT");
                return linear(num(rest.substr(0, comma)), num(rest.substr(comma + 1)), T);
            }
            if (kind == "const") return constant(num(rest), T);
        } catch (const std::invalid_argument&) {
            throw PreconditionError("bad number in profile spec: " + spec);
        }
        if (kind == "csv") {
            EnergyProfile p = from_csv(rest);
            if (std::abs(p.T() - T) > 1e-12 * std::max(1.0, T))
                throw PreconditionError("profile file does not end at T");
            return p;
        }
        throw PreconditionError("unknown profile kind " + kind);
    }

    double T() const { return knots_.back().t; }
    const std::vector<Knot>& knots() const { return knots_; }

    double operator()(double t) const {
        if (t <= 0) return knots_.front().e;
        auto it = std::upper_bound(knots_.begin(), knots_.end(), t, [](double x, const Knot& k) { return x < k.t; });
        if (it == knots_.end()) return knots_.back().e;
        const Knot& a = *(it - 1);
        const Knot& b = *it;
        return a.e + (b.e - a.e) * (t - a.t) / (b.t - a.t);
    }

    std::vector<double> jump_times() const {
        std::vector<double> j;
        for (std::size_t i = 1; i < knots_.size(); ++i)
            if (knots_[i].t == knots_[i - 1].t && knots_[i].e < knots_[i - 1].e) j.push_back(knots_[i].t);
        return j;
    }
    std::vector<double> cuts() const {
        std::vector<double> c{0.0};
        for (double t : jump_times()) c.push_back(t);
        c.push_back(T());
        return c;
    }
    bool is_zero() const {
        return std::all_of(knots_.begin(), knots_.end(), [](const Knot& k) { return k.e == 0; });
    }

    // e^p on the i-th continuous piece, extended by its end values
    ScalarField1D piece_power(std::size_t i, double p) const {
        auto c = cuts();
        if (i + 1 >= c.size()) throw DomainError("no such profile piece");
        double lo = c[i], hi = c[i + 1];
        std::vector<Knot> k;
        for (std::size_t j = 0; j < knots_.size(); ++j) {
            const Knot& q = knots_[j];
            if (q.t < lo || q.t > hi) continue;
            if (q.t == lo && j + 1 < knots_.size() && knots_[j + 1].t == lo) continue;  // left limit at a jump
            if (q.t == hi && j > 0 && knots_[j - 1].t == hi) continue;                 // right value at a jump
            k.push_back(q);
        }
        std::vector<double> br;
        for (const Knot& q : k)
            if (q.t > lo && q.t < hi) br.push_back(q.t);
        auto fn = [k, p, lo, hi](double t) {
            t = std::clamp(t, lo, hi);
            std::size_t j = 0;
            while (j + 2 < k.size() && t > k[j + 1].t) ++j;
            double slope = (k[j + 1].e - k[j].e) / (k[j + 1].t - k[j].t);
            double e = k[j].e + slope * (t - k[j].t);
            if (!(e > 0)) return Jet1{};
            return pow(Jet1{e, slope, 0, 0}, p);
        };
        return ScalarField1D(fn, br, lo, hi);
    }

private:
    std::vector<Knot> knots_;
};

// e~^p = J(e^p) + eps/2 - eps t / (4T) on each continuous piece
struct SmoothedProfile {
    double T = 1, p = 2, eps = 0, zeta = 0, radius = 0;
    std::vector<double> cuts{0.0, 1.0};
    std::vector<ScalarField1D> pieces;  // defined past their ends
    CheckList checks;
    double max_gap = 0;  // max of e~ - e on the check grid

    std::size_t piece(double t) const {
        auto it = std::upper_bound(cuts.begin() + 1, cuts.end() - 1, t);
        return static_cast<std::size_t>(it - cuts.begin()) - 1;
    }
    double pow_at(double t) const { return pieces[piece(t)](t); }
    double dpow_at(double t) const { return pieces[piece(t)].jet(t).d1; }
    double operator()(double t) const { return std::pow(std::max(pow_at(t), 0.0), 1 / p); }

    // a single smooth piece given directly by e~^p
    static SmoothedProfile from_power(ScalarField1D pw, double T, double p, double zeta) {
        SmoothedProfile s;
        s.T = T;
        s.p = p;
        s.zeta = zeta;
        s.cuts = {0.0, T};
        s.pieces = {std::move(pw)};
        return s;
    }
};

inline SmoothedProfile smooth_profile(const EnergyProfile& e, double eps, double T, double p = 2) {
    if (!(eps > 0) || !(T > 0)) throw PreconditionError("eps and T must be positive");
    if (std::abs(e.T() - T) > 1e-12 * std::max(1.0, T)) throw PreconditionError("profile must live on [0, T]");
    SmoothedProfile s;
    s.T = T;
    s.p = p;
    s.eps = eps;
    s.zeta = eps / (4 * T);
    s.cuts = e.cuts();
    double shortest = T;
    for (std::size_t i = 0; i + 1 < s.cuts.size(); ++i) shortest = std::min(shortest, s.cuts[i + 1] - s.cuts[i]);

    std::vector<double> grid;
    auto make_grid = [&](std::size_t i) {
        grid.clear();
        double lo = s.cuts[i], hi = s.cuts[i + 1];
        for (int j = 0; j < 1000; ++j) grid.push_back(lo + (hi - lo) * j / 999.0);
        for (const auto& k : e.knots())
            if (k.t >= lo && k.t <= hi) grid.push_back(k.t);
        std::sort(grid.begin(), grid.end());
    };

    double r = shortest / 4;
    bool ok = false;
    std::vector<ScalarField1D> moll;
    for (int it = 0; it < 60 && !ok; ++it, r /= 2) {
        moll.clear();
        ok = true;
        for (std::size_t i = 0; i + 1 < s.cuts.size() && ok; ++i) {
            ScalarField1D ep = e.piece_power(i, p);
            ScalarField1D J = mollify(ep, r);
            make_grid(i);
            for (double t : grid)
                if (std::abs(J(t) - ep(t)) > eps / 4) {
                    ok = false;
                    break;
                }
            moll.push_back(J);
        }
        if (ok) s.radius = r;
    }
    if (!ok) throw AccuracyError("mollification radius search failed", r);

    double Tl = T;
    for (const auto& J : moll) {
        s.pieces.push_back(ScalarField1D([J, eps, Tl](double t) {
            Jet1 j = J.jet(t);
            return Jet1{j.v + eps / 2 - eps * t / (4 * Tl), j.d1 - eps / (4 * Tl), j.d2, j.d3};
        }));
    }

    MarginTracker lower, upper, decay;
    for (std::size_t i = 0; i + 1 < s.cuts.size(); ++i) {
        ScalarField1D ep = e.piece_power(i, p);
        make_grid(i);
        for (double t : grid) {
            double ev = ep(t);
            Jet1 w = s.pieces[i].jet(t);
            lower.see(w.v - ev, t, 0);
            upper.see(ev + 0.75 * eps - w.v, t, 0);
            decay.see(-w.d1 - s.zeta * (1 - 1e-9), t, 0);
            s.max_gap = std::max(s.max_gap, std::pow(std::max(w.v, 0.0), 1 / p) - std::pow(ev, 1 / p));
        }
    }
    s.checks.add(lower.check("sandwich_lower", "e <= e~", false));
    s.checks.add(upper.check("sandwich_upper_power", "e~^p <= e^p + 3 eps/4", false));
    s.checks.add(decay.check("decay_rate", "(e~^p)' <= -zeta", false));
    return s;
}

struct StagePlan {
    int K = 0;
    double c = 0;
    std::vector<double> t;       // t_0 .. t_K
    std::vector<double> levels;  // e~(t_k)^p
    double d = 0;
};

namespace detail {

// first t in [lo, hi] with g(t) <= level, g strictly decreasing; bisects down to adjacent doubles
template <class G>
double decreasing_root(G&& g, double level, double lo, double hi) {
    for (int i = 0; i < 2000; ++i) {
        double m = lo + (hi - lo) / 2;
        if (m <= lo || m >= hi) break;
        if (g(m) > level)
            lo = m;
        else
            hi = m;
    }
    return std::abs(g(lo) - level) < std::abs(g(hi) - level) ? lo : hi;
}

}  // namespace detail

// K minimal with (1 - c^2)^{K p/2} e~(0)^p < eps^p, and the level times t_k
inline StagePlan plan_stages(const SmoothedProfile& sp, double eps, double c) {
    if (!(c > 0 && c < 0.5)) throw PreconditionError("c must lie in (0, 1/2)");
    if (sp.pieces.size() != 1) throw PreconditionError("plan_stages takes a continuous profile");
    StagePlan pl;
    pl.c = c;
    double q = std::pow(1 - c * c, sp.p / 2), e0 = sp.pow_at(0), target = std::pow(eps, sp.p);
    int K = 1;
    double lev = e0 * q;
    while (!(lev < target)) {
        lev *= q;
        ++K;
        if (K > 100000) throw SizingError("too many stages");
    }
    pl.K = K;
    pl.t = {0.0};
    pl.levels = {e0};
    double last = pl.levels.back();
    for (int k = 1; k <= K; ++k) {
        last *= q;
        pl.levels.push_back(last);
        if (sp.pow_at(sp.T) > last) throw SizingError("t_K > T: the profile does not decay enough on [0, T]");
        pl.t.push_back(detail::decreasing_root([&](double t) { return sp.pow_at(t); }, last, pl.t.back(), sp.T));
    }
    pl.d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) pl.d = std::min(pl.d, pl.t[k + 1] - pl.t[k]);
    return pl;
}

struct SynthConfig {
    double p = 2;
    int cert_grid = 200;
    int plateau_grid = 301;
    int combo_grid = 120;
    int nu_grid = 120;
    int time_samples = 100;
    double hi_factor = 0.9, lo_factor = 0.75;
    double nu_cap = 1.0;
    double a = 0;  // axis distance for the cutoffs; 0 means min(1, a2)
};

namespace detail {

inline double rect_volume(const Rect& r) { return std::numbers::pi * (r.b1 - r.a1) * (r.b2 * r.b2 - r.a2 * r.a2); }

// 2 pi int q rho over U \ U_w, for q = Q(f1(x1), f2(x2)) with f1 = 1 off the x1-edges, f2 = 1 off the
// x2-edges, and Q(1, 1) = 0: four edge integrals in one variable plus four corner squares
inline double frame_integral(const std::function<double(Point2)>& q, const Rect& U, double w, double rel_tol = 1e-6) {
    const double xc = (U.a1 + U.b1) / 2, yc = (U.a2 + U.b2) / 2;
    const double mid1 = U.b1 - U.a1 - 2 * w;
    const double mid2 = ((U.b2 - w) * (U.b2 - w) - (U.a2 + w) * (U.a2 + w)) / 2;
    auto axes = [&](int n) {
        // unit layer graded geometrically toward the outer edge, where f moves on the c' scale
        std::vector<double> br{0.0};
        for (int k = 20; k >= 0; --k) {
            double lo = br.back(), hi = std::ldexp(1.0, -k);
            for (int i = 1; i <= n; ++i) br.push_back(lo + (hi - lo) * i / n);
        }
        Axis unit = composite_axis(br, 8);
        auto edge = [&](double outer, double dir) {
            Axis a;
            for (std::size_t i = 0; i < unit.x.size(); ++i) {
                a.x.push_back(outer + dir * w * unit.x[i]);
                a.w.push_back(w * unit.w[i]);
            }
            return a;
        };
        return std::array<Axis, 4>{edge(U.a1, 1), edge(U.b1, -1), edge(U.a2, 1), edge(U.b2, -1)};
    };
    auto edges = [&](int n) {
        auto ax = axes(n);
        double v = 0;
        for (int k : {2, 3})
            for (std::size_t i = 0; i < ax[k].x.size(); ++i) v += mid1 * ax[k].w[i] * q({xc, ax[k].x[i]}) * ax[k].x[i];
        for (int k : {0, 1})
            for (std::size_t i = 0; i < ax[k].x.size(); ++i) v += mid2 * ax[k].w[i] * q({ax[k].x[i], yc});
        return v;
    };
    auto corners = [&](int n) {
        auto ax = axes(n);
        double v = 0;
        for (int i : {0, 1})
            for (int k : {2, 3}) v += integrate2d([&](Point2 p) { return q(p) * p.x2; }, ax[i], ax[k]);
        return v;
    };
    // corners weigh about w relative to the edges, so each part converges against the total
    double e = edges(1);
    for (int n = 2; n <= 256; n *= 2) {
        double e2 = edges(n);
        bool done = std::abs(e2 - e) <= rel_tol * std::abs(e2);
        e = e2;
        if (done) break;
    }
    double c = corners(1);
    for (int n = 2; n <= 32; n *= 2) {
        double c2 = corners(n);
        bool done = std::abs(c2 - c) <= rel_tol * std::abs(e + c2);
        c = c2;
        if (done) break;
    }
    double v = e + c;
    return 2 * std::numbers::pi * v;
}

// F on stage data: F^2 = B f^2 - sigma Psi(f)
inline Jet2 stage_F(const CertifiedCutoff& cc, const LevelPlateau& lp, double B, double sigma, Point2 p) {
    Jet2 f = cc.jet(p);
    if (!(f.v > 0)) return {};
    if (sigma == 0 || f.v <= lp.c_lo) return std::sqrt(B) * f;
    Jet1 ps = lp.psi(f.v);
    double y = f.v;
    Jet1 G{B * y * y - sigma * ps.v, 2 * B * y - sigma * ps.d1, 2 * B - sigma * ps.d2, -sigma * ps.d3};
    Jet2 F2 = compose(f, G);
    if (!(F2.v > 0)) return {};
    return sqrt(F2);
}

inline double stage_phi(const CertifiedCutoff& cc, const LevelPlateau& lp, Point2 p) {
    if (!cc.rect.contains(p)) return 0.0;
    double f = cc.value(p);
    if (f <= lp.c_lo) return 0.0;
    return lp.psi(f).v;
}

}  // namespace detail

// one stage of the staged construction on [start, end]
struct Stage {
    int k = 0;
    double start = 0, end = 0, t_nom = 0;
    bool truncated = false;
    Rect rect;
    CertifiedCutoff cutoff;
    LevelPlateau plateau;
    double p = 2, c2 = 0;
    double B = 0, A = 0;  // A = B^{p/2}
    double vol = 0;       // |u[chi_{U^k}]|_p^p
    double Df = 0, Dphi = 0;
    double g0 = 0, g1 = 0, delta0 = 0, delta1 = 0, slope = 0;
    double target0 = 0, target1 = 0;
    double mass = 0;  // 2 pi int phi rho
    std::shared_ptr<const SmoothedProfile> prof;
    std::size_t piece = 0;

    // g(sigma) / B^{p/2} with s = sigma / B
    // even p = 2m: G(s) = (1-s)^m vol - sum_j C(m,j) (-s)^j I_j, I_j = frame integral of 1 - f^{2(m-j)} phi^j
    std::vector<double> I;
    int m_even() const { return static_cast<int>(p / 2); }
    double G(double s) const {
        if (p == 2) return (vol - Df) - s * (vol - Dphi);
        if (!I.empty()) {
            int m = m_even();
            double v = std::pow(1 - s, m) * vol, bin = 1, sj = 1;
            for (int j = 0; j <= m; ++j) {
                v -= bin * sj * I[j];
                bin = bin * (m - j) / (j + 1);
                sj *= -s;
            }
            return v;
        }
        double a = std::pow(1 - s, p / 2);
        auto q = [&](Point2 x) {
            double f = cutoff.value(x), ph = detail::stage_phi(cutoff, plateau, x);
            return a - std::pow(std::max(f * f - s * ph, 0.0), p / 2);
        };
        return a * vol - detail::frame_integral(q, rect, cutoff.eta);
    }
    double dG(double s) const {
        if (p == 2) return -(vol - Dphi);
        if (!I.empty()) {
            int m = m_even();
            double v = -m * std::pow(1 - s, m - 1) * vol, bin = 1;
            for (int j = 1; j <= m; ++j) {
                bin = bin * (m - j + 1) / j;
                v -= bin * j * std::pow(-1.0, j) * std::pow(s, j - 1) * I[j];
            }
            return v;
        }
        double a = p / 2 * std::pow(1 - s, p / 2 - 1);
        auto q = [&](Point2 x) {
            double f = cutoff.value(x), ph = detail::stage_phi(cutoff, plateau, x);
            double r = std::max(f * f - s * ph, 0.0);
            return a - p / 2 * (r > 0 ? std::pow(r, p / 2 - 1) : 0.0) * ph;
        };
        return -a * vol + detail::frame_integral(q, rect, cutoff.eta);
    }
    double theta(double t) const { return (t - start) / (t_nom - start); }
    double N(double t) const {
        double th = theta(t);
        return prof->pieces[piece](t) + delta0 * (1 - th) + delta1 * th;
    }
    double dN(double t) const { return prof->pieces[piece].jet(t).d1 + slope; }

    // sigma(t) solving g(sigma) = N(t), clamped to [0, c^2 B]; sdot = d sigma/dt
    double sigma(double t, double* sdot = nullptr) const {
        double target = N(t) / A;
        double s;
        if (t == start) {
            s = 0;
        } else if (p == 2) {
            s = (G(0) - target) / (vol - Dphi);
        } else {
            double lo = 0, hi = c2;
            s = std::clamp(theta(t) * c2, lo, hi);
            for (int it = 0; it < 60; ++it) {
                double r = G(s) - target;
                if (r > 0)
                    lo = s;
                else
                    hi = s;
                double ns = s - r / dG(s);
                if (!(ns > lo && ns < hi)) ns = (lo + hi) / 2;
                if (std::abs(ns - s) <= 1e-15) {
                    s = ns;
                    break;
                }
                s = ns;
            }
        }
        s = std::clamp(s, 0.0, c2);
        if (sdot) *sdot = dN(t) / (std::pow(B, p / 2 - 1) * dG(s));
        return s * B;
    }

    // E_k(t)^2 for p = 2
    double E2(double t) const { return N(t) - g0 + A * mass; }
};

struct Calibration {
    double mu = 0, eta = 0, c = 0, c_hi = 0, vol0 = 0, d = 0, frame_norm = 0, frame_bound = 0;
    int K = 0, halvings = 0;
    double worst_ratio = 0;  // max over stages of the sufficient-condition ratios
    std::vector<Stage> stages;
    CheckList checks;
};

namespace detail {

struct NominalStage {
    double start, t_nom, end;
};

// stage times assuming the plateau never limits the next level
inline std::vector<NominalStage> nominal_schedule(const SmoothedProfile& sp, double eps, double c2) {
    std::vector<NominalStage> out;
    double q = std::pow(1 - c2, sp.p / 2), floor = std::pow(eps, sp.p);
    double s = 0, level = sp.pow_at(0);
    if (level < floor) return out;
    for (int guard = 0; guard < 100000; ++guard) {
        std::size_t i = sp.piece(s);
        const ScalarField1D& g = sp.pieces[i];
        double next = q * level;
        double hi = s + (sp.T - s + 1e-3);
        while (g(hi) > next) hi = s + 2 * (hi - s);
        double tn = decreasing_root([&](double t) { return g(t); }, next, s, hi);
        double end = std::min(tn, sp.cuts[i + 1]);
        out.push_back({s, tn, end});
        if (end >= sp.T) break;
        level = end < tn ? sp.pow_at(end) : next;
        s = end;
        if (level < floor) break;
    }
    return out;
}

}  // namespace detail

// builds the stages for a fixed eta; returns the worst sufficient-condition ratio
inline double build_stages(const Rect& U, const std::shared_ptr<const SmoothedProfile>& sp, double eps, double c,
                           double c_hi, double eta, double a, const SynthConfig& cfg, std::vector<Stage>& out,
                           bool stop_early = false) {
    out.clear();
    const double p = sp->p, c2 = c * c, vol0 = detail::rect_volume(U);
    const double floor = std::pow(eps, p), em = std::pow(eps / 2, p) / 2;
    double s = 0, B = std::pow(sp->pow_at(0) / vol0, 2 / p);
    if (sp->pow_at(0) < floor) return 0.0;
    double worst = 0;
    for (int k = 0; k < 100000; ++k) {
        Stage st;
        st.k = k;
        st.p = p;
        st.c2 = c2;
        st.prof = sp;
        st.piece = sp->piece(s);
        st.start = s;
        st.B = B;
        st.A = std::pow(B, p / 2);
        st.rect = eta_subset(U, k * eta);
        if (!(st.rect.min_side() > 2 * eta)) throw SizingError("rectangle too small for the stage frames");
        double ulp = std::nextafter(std::max({std::abs(U.a1), std::abs(U.b1), U.b2}), 1e300) -
                     std::max({std::abs(U.a1), std::abs(U.b1), U.b2});
        if (!(closed_form_c_prime(a, build_bump().C_h) * eta > 16 * ulp))
            throw SizingError("eta is below what double precision resolves near U");
        st.cutoff = cfg.cert_grid > 0 ? build_cutoff(st.rect, eta, a, cfg.cert_grid) : make_cutoff(st.rect, eta, a);
        st.plateau = LevelPlateau{c, c_hi};
        if (cfg.plateau_grid > 0) {
            Check lc = certify_level_plateau(st.cutoff, st.plateau, cfg.plateau_grid);
            if (!lc.pass)
                throw ConstructionError(lc.name, lc.witness, "level plateau leaves Lf <= 0 off {phi = 1}");
        }
        st.vol = detail::rect_volume(st.rect);
        const CertifiedCutoff& cc = st.cutoff;
        const LevelPlateau& lp = st.plateau;
        st.Df = detail::frame_integral(
            [&](Point2 x) {
                double f = cc.value(x);
                return 1 - std::pow(f, p == 2 ? 2.0 : p);
            },
            st.rect, eta);
        st.Dphi = detail::frame_integral([&](Point2 x) { return 1 - detail::stage_phi(cc, lp, x); }, st.rect, eta);
        st.mass = st.vol - st.Dphi;
        if (p != 2 && p == 2 * std::round(p / 2) && p <= 16) {
            int m = st.m_even();
            for (int j = 0; j <= m; ++j)
                st.I.push_back(detail::frame_integral(
                    [&](Point2 x) {
                        double f = cc.value(x), ph = detail::stage_phi(cc, lp, x);
                        return 1 - std::pow(f, 2 * (m - j)) * std::pow(ph, j);
                    },
                    st.rect, eta));
        }

        const ScalarField1D& g = sp->pieces[st.piece];
        double next = std::pow(1 - c2, p / 2) * st.A * vol0;
        double hi = s + (sp->T - s + 1e-3);
        while (g(hi) > next) hi = s + 2 * (hi - s);
        st.t_nom = detail::decreasing_root([&](double t) { return g(t); }, next, s, hi);
        st.end = std::min({st.t_nom, sp->cuts[st.piece + 1], sp->T});
        st.truncated = st.end < st.t_nom;
        st.target0 = g(s);
        st.target1 = next;
        st.g0 = st.A * st.G(0);
        st.g1 = st.A * st.G(c2);
        st.delta0 = st.g0 - st.target0;
        st.delta1 = st.g1 - st.target1;
        st.slope = (st.delta1 - st.delta0) / (st.t_nom - st.start);
        worst = std::max({worst, std::abs(st.delta0) / em, std::abs(st.delta1) / em, st.slope / (sp->zeta / 2)});
        if (worst > 1 && stop_early) return worst;

        double sig_end = st.sigma(st.end);
        double plateau_val = st.B * 1.0 * 1.0 - sig_end * 1.0;
        out.push_back(st);
        if (st.end >= sp->T) break;
        double Bn;
        if (st.truncated)
            Bn = std::min(std::pow(sp->pow_at(st.end) / vol0, 2 / p), plateau_val);
        else
            Bn = std::min((1 - c2) * st.B, plateau_val);
        if (std::pow(Bn, p / 2) * vol0 < floor) break;
        B = Bn;
        s = st.end;
    }
    return worst;
}

// level-set plateau constants from a reference cutoff on U
inline std::pair<double, double> stage_levels(const Rect& U, double a, const SynthConfig& cfg) {
    double eta_ref = std::min(0.05, U.min_side() / 10);
    CertifiedCutoff ref = build_cutoff(U, eta_ref, a, cfg.cert_grid > 0 ? cfg.cert_grid : 200);
    double L = level_threshold(ref);
    double c_hi = cfg.hi_factor * L;
    return {cfg.lo_factor * c_hi, c_hi};
}

inline Calibration calibrate(const Rect& U, const std::shared_ptr<const SmoothedProfile>& sp, double eps, double d,
                             double zeta, int K, double a, double c, double c_hi, const SynthConfig& cfg = {}) {
    Calibration cal;
    const double p = sp->p;
    cal.c = c;
    cal.c_hi = c_hi;
    cal.K = K;
    cal.d = d;
    cal.vol0 = detail::rect_volume(U);
    cal.mu = std::pow(sp->pow_at(0), 1 / p) / std::pow(cal.vol0, 1 / p);
    double bound = std::min(eps, std::pow(d * zeta, 1 / p)) / (2 * cal.mu);
    double eta = std::min(0.5, U.min_side() / (2.0 * K + 4));
    auto frame = [&](double e) {
        Rect in = eta_subset(U, K * e);
        return std::pow(cal.vol0 - detail::rect_volume(in), 1 / p);
    };
    int halvings = 0;
    // for p != 2 the frame form pushes c' eta below double resolution; the per-stage conditions decide
    if (p == 2)
        while (!(frame(eta) < bound)) {
            eta /= 2;
            if (++halvings > 60) throw SizingError("eta search exhausted");
        }
    // the offsets are about A_0 times the frame volume of U_{(K+1) eta}; start where that meets the budget
    {
        double em = std::pow(eps / 2, p) / 2, A0 = std::pow(cal.mu, p);
        double lo = 0, hi = eta;
        auto off = [&](double e) { return A0 * (cal.vol0 - detail::rect_volume(eta_subset(U, (K + 1) * e))); };
        if (off(hi) > em) {
            for (int i = 0; i < 100; ++i) {
                double mid = (lo + hi) / 2;
                (off(mid) > em ? hi : lo) = mid;
            }
            double start = lo;
            while (eta > start) {
                eta /= 2;
                ++halvings;
            }
        }
    }
    for (;;) {
        double r = build_stages(U, sp, eps, c, c_hi, eta, a, cfg, cal.stages, true);
        cal.worst_ratio = r;
        if (r <= 1) break;
        int h = std::max(1, static_cast<int>(std::ceil(std::log2(r / 0.9))));
        eta = std::ldexp(eta, -h);
        halvings += h;
        if (halvings > 60) throw SizingError("eta search exhausted");
    }
    cal.eta = eta;
    cal.halvings = halvings;
    cal.frame_norm = frame(eta);
    Check fc;
    fc.name = "eta_frame_condition";
    fc.tag = "|u[chi_{U \\ U_{K eta}}]| < min(eps, (d zeta)^{1/p}) / (2 mu)";
    fc.margin = bound - cal.frame_norm;
    fc.pass = fc.margin > 0;
    cal.frame_bound = bound;
    if (p == 2) cal.checks.add(fc);
    Check sc;
    sc.name = "stage_offsets";
    sc.tag = "|delta| <= (eps/2)^p / 2 and slope <= zeta/2 per stage";
    sc.margin = 1 - cal.worst_ratio;
    sc.pass = cal.worst_ratio <= 1;
    cal.checks.add(sc);
    return cal;
}

// u_k(t) = u[f_{k,t}] with d/dt |u_k|^2 = -sigma'(t) phi_k
inline TimeDependentField build_stage(const Stage& st) {
    TimeDependentField u;
    u.t_start = st.start;
    u.t_end = st.end;
    u.support = {st.rect};
    u.name = "stage" + std::to_string(st.k);
    auto sp = std::make_shared<const Stage>(st);
    u.at = [sp](double t) {
        double sdot = 0;
        double sig = sp->sigma(t, &sdot);
        FieldSnapshot s;
        s.u = AxisymField::of(ScalarField2D(
            [sp, sig](Point2 p) { return detail::stage_F(sp->cutoff, sp->plateau, sp->B, sig, p); }, {sp->rect},
            sp->cutoff.eta));
        s.dt_mag2 = [sp, sdot](Point2 p) { return -sdot * detail::stage_phi(sp->cutoff, sp->plateau, p); };
        return s;
    };
    return u;
}

namespace detail {

// sup over {phi > 0} of (-F LF)_+ / phi, and sup |F LF|, at one sigma
inline std::pair<double, double> stage_flf(const Stage& st, double sigma, int n) {
    double ramp = 0, full = 0;
    for (Point2 x : sample_grid(st.rect, st.cutoff.eta, n, n)) {
        Jet2 F = stage_F(st.cutoff, st.plateau, st.B, sigma, x);
        double flf = F.v * L_of(F, x.x2);
        full = std::max(full, std::abs(flf));
        double ph = stage_phi(st.cutoff, st.plateau, x);
        if (ph > 0 && flf < 0) ramp = std::max(ramp, -flf / ph);
    }
    return {ramp, full};
}

}  // namespace detail

struct SynthResult {
    PiecewiseSolution solution;
    std::shared_ptr<const SmoothedProfile> profile;
    Calibration calib;
    StagePlan plan;  // nominal, continuous profiles only
    double eps = 0, T = 0, p = 2, zeta = 0, eps_smooth = 0;
    double nu0 = 0, nu0_formula = 0, nu0_rate = 0;
    std::vector<std::array<double, 4>> series;  // t, norm, target, deviation
    double max_deviation = 0;
    CheckList checks;
    bool zero = false;
};

inline SynthResult synthesize(const Rect& U, double eps, double T, const EnergyProfile& e,
                              const SynthConfig& cfg = {}) {
    if (!(U.a2 > 0)) throw PreconditionError("U must lie strictly above the axis");
    if (!(eps > 0) || !(T > 0)) throw PreconditionError("eps and T must be positive");
    if (!(cfg.p >= 1)) throw PreconditionError("p must be at least 1");
    SynthResult R;
    R.eps = eps;
    R.T = T;
    R.p = cfg.p;
    const double p = cfg.p;
    double a = cfg.a > 0 ? cfg.a : std::min(1.0, U.a2);
    R.eps_smooth = 4.0 / 3.0 * std::pow(eps / 2, p);
    auto sp = std::make_shared<const SmoothedProfile>(smooth_profile(e, R.eps_smooth, T, p));
    R.profile = sp;
    R.zeta = sp->zeta;
    R.checks.append(sp->checks, "profile.");

    std::vector<TimeDependentField> fields;
    if (e.is_zero() || sp->pow_at(0) < std::pow(eps, p)) {
        R.zero = true;
        fields.push_back(TimeDependentField::zero(0, T));
        R.nu0 = R.nu0_formula = R.nu0_rate = cfg.nu_cap;
    } else {
        auto [c, c_hi] = stage_levels(U, a, cfg);
        auto nominal = detail::nominal_schedule(*sp, eps, c * c);
        int K = static_cast<int>(nominal.size());
        double d = std::numeric_limits<double>::infinity();
        for (const auto& n : nominal) d = std::min(d, n.t_nom - n.start);
        if (sp->pieces.size() == 1) {
            try {
                R.plan = plan_stages(*sp, eps, c);
            } catch (const SizingError&) {
                R.plan.K = K;  // the profile is truncated at T
            }
        }
        R.calib = calibrate(U, sp, eps, d, sp->zeta, K, a, c, c_hi, cfg);
        R.checks.append(R.calib.checks, "calibration.");

        double vol0 = R.calib.vol0;
        MarginTracker ends, sub, pos;
        double rate_bound = std::numeric_limits<double>::infinity(), S_all = 0;
        for (const Stage& st : R.calib.stages) {
            fields.push_back(build_stage(st));
            // endpoint identities: sigma = 0 at the start, c^2 B at the nominal end
            double s_end = st.truncated ? st.c2 * st.B : st.sigma(st.t_nom);
            ends.see(1e-12 - std::abs(s_end - st.c2 * st.B) / st.B, st.k, 0, st.end);
            if (p == 2) {
                double e0 = st.E2(st.start), e1 = st.E2(st.t_nom);
                ends.see(1e-12 - std::abs(e0 - st.A * st.mass) / (st.A * st.mass), st.k, 0, st.start);
                ends.see(1e-12 - std::abs(e1 - (1 - st.c2) * e0) / e0, st.k, 1, st.t_nom);
            }
            // the subtracted term lies in [0, c^2 B phi]
            for (double t : {st.start, (st.start + st.end) / 2, st.end}) {
                double sg = st.sigma(t);
                sub.see(std::min(sg, st.c2 * st.B - sg) / st.B, st.k, 0, t);
            }
            // f_{k,t}^2 > 0 where phi > 0; worst at sigma = c^2 B
            for (Point2 x : sample_grid(st.rect, st.cutoff.eta, 60, 60)) {
                double ph = detail::stage_phi(st.cutoff, st.plateau, x);
                if (ph <= 0) continue;
                double f = st.cutoff.value(x);
                pos.see(f * f - st.c2 * ph, x.x1, x.x2, st.end);
            }
            // nu0: 2 nu (-F LF)_+ <= sigma' phi with sigma' >= (zeta - slope_+) / max |g'|
            double gp = std::max(std::abs(st.dG(0)), std::abs(st.dG(st.c2))) * std::pow(st.B, p / 2 - 1);
            double sdot_min = (sp->zeta - std::max(st.slope, 0.0)) / gp;
            double S = 0;
            for (double f : {0.0, 0.5, 1.0}) {
                auto [ramp, full] = detail::stage_flf(st, f * st.c2 * st.B, cfg.nu_grid);
                S = std::max(S, ramp);
                S_all = std::max(S_all, full);
            }
            S *= 1.05;
            if (S > 0) rate_bound = std::min(rate_bound, 0.9 * sdot_min / (2 * S));
        }
        Check ce = ends.check("stage_endpoints", "E_k(t_k)^2 = A_k |phi_k|, E_k(t_{k+1})^2 = (1-c^2) E_k(t_k)^2", false);
        R.checks.add(ce);
        R.checks.add(sub.check("subtracted_term_bounds", "0 <= sigma <= c^2 B", false));
        R.checks.add(pos.check("stage_positivity", "f_{k,t}^2 > 0 in U^k"));
        R.nu0_rate = std::isfinite(rate_bound) ? rate_bound : cfg.nu_cap;
        if (p == 2) {
            S_all *= 1.05;
            R.nu0_formula = S_all > 0 ? 0.9 * sp->zeta / (4 * vol0 * S_all) : cfg.nu_cap;
            R.nu0 = std::min(R.nu0_formula, R.nu0_rate);
        } else {
            R.nu0_formula = R.nu0_rate;
            R.nu0 = R.nu0_rate;
        }
        for (auto& f : fields) f.nu0 = R.nu0;
        double tk = R.calib.stages.back().end;
        if (tk < T) fields.push_back(TimeDependentField::zero(tk, T));
    }
    R.solution = concatenate(std::move(fields), cfg.combo_grid);
    R.solution.nu0 = R.nu0;
    R.checks.append(R.solution.checks);

    // deviation on a time grid
    int n = std::max(2, cfg.time_samples);
    MarginTracker dev;
    for (int i = 0; i < n; ++i) {
        double t = T * i / (n - 1);
        FieldSnapshot s = R.solution.at(t);
        double nu = lp_norm(s.u, p), et = e(t);
        R.series.push_back({t, nu, et, std::abs(nu - et)});
        R.max_deviation = std::max(R.max_deviation, std::abs(nu - et));
        dev.see(eps - std::abs(nu - et), 0, 0, t);
    }
    R.checks.add(dev.check("deviation", "| |u(t)|_p - e(t) | <= eps", false));
    return R;
}

// almost constant solutions: f_t^2 = (kf)^2 - delta t phi with k = 1 (initial mode) or 1 + eps' (final mode)
enum class AlmostMode { initial, final };

struct AlmostConstant {
    TimeDependentField u;
    double delta = 0, eps_prime = 0, nu0 = 0;
    CheckList checks;
};

inline AlmostConstant almost_constant(const Structure& s, double eps, double T, AlmostMode mode, int grid = 120) {
    if (!(eps > 0) || !(T > 0)) throw PreconditionError("eps and T must be positive");
    if (s.rects.empty()) throw PreconditionError("structure without support");
    AlmostConstant out;
    ScalarField2D f = s.f, phi = s.phi;
    double layer = f.layer();
    auto fnorm = [&](double q) { return lp_norm(AxisymField::of(f), q); };
    double scale = 1;
    if (mode == AlmostMode::final) {
        double big = std::max({fnorm(1), fnorm(2), fnorm(std::numeric_limits<double>::infinity()), 1.0});
        out.eps_prime = eps / (4 * big);
        scale = 1 + out.eps_prime;
    }
    const std::vector<Rect> rects = s.rects;
    auto make = [f, phi, rects, layer, scale](double delta, double t) {
        return ScalarField2D(
            [f, phi, scale, delta, t](Point2 p) {
                Jet2 fj = f.jet(p);
                if (!(fj.v > 0)) return Jet2{};
                Jet2 ph = phi.jet(p);
                if (ph.v == 0 && ph.d1 == 0 && ph.d2 == 0) return scale * fj;
                Jet2 F2 = (scale * scale) * (fj * fj) - (delta * t) * ph;
                if (!(F2.v > 0)) return Jet2{};
                return sqrt(F2);
            },
            rects, layer);
    };
    // fixed graded rule; |f_t - f| has a kink where the plateau starts, so adaptive refinement stalls
    auto diff_norm = [&](double delta, double t, double q) {
        ScalarField2D ft = make(delta, t);
        if (std::isinf(q)) {
            double m = 0;
            for (const Rect& r : rects)
                for (Point2 p : sample_grid(r, layer, 200, 200)) m = std::max(m, std::abs(ft.value(p) - f.value(p)));
            return m;
        }
        double sum = 0;
        for (const Rect& r : rects) {
            Axis a1 = composite_axis(layered_breaks(r.a1, r.b1, layer, 16, 16), 8);
            Axis a2 = composite_axis(layered_breaks(r.a2, r.b2, layer, 16, 16), 8);
            sum += integrate2d([&](Point2 p) { return std::pow(std::abs(ft.value(p) - f.value(p)), q) * p.x2; }, a1, a2);
        }
        return std::pow(2 * std::numbers::pi * sum, 1 / q);
    };
    // start at the largest delta keeping f_t^2 > 0, then halve
    double mratio = std::numeric_limits<double>::infinity();
    for (const Rect& r : rects)
        for (Point2 p : sample_grid(r, layer, grid, grid)) {
            double ph = phi.value(p);
            if (ph > 0) mratio = std::min(mratio, scale * scale * f.value(p) * f.value(p) / ph);
        }
    double delta = std::isfinite(mratio) ? 0.5 * mratio / T : 1.0;
    const double inf = std::numeric_limits<double>::infinity();
    int it = 0;
    for (;; ++it) {
        if (it >= 60) throw SizingError("delta search exhausted");
        bool ok = true;
        for (double q : {1.0, 2.0, inf})
            if (!(diff_norm(delta, T, q) <= 0.98 * eps)) ok = false;
        if (ok && mode == AlmostMode::final) {
            for (const Rect& r : rects)
                for (Point2 p : sample_grid(r, layer, grid, grid)) {
                    double fT = make(delta, T).value(p), f0 = f.value(p);
                    if (fT < f0) ok = false;
                }
        }
        if (ok) break;
        delta /= 2;
    }
    out.delta = delta;

    // nu0: 2 nu |F LF| <= delta on {phi = 1}, 2 nu (-F LF)_+ <= delta phi elsewhere
    double S = 0, Sr = 0;
    for (double t : {0.0, T / 2, T}) {
        ScalarField2D ft = make(delta, t);
        for (const Rect& r : rects)
            for (Point2 p : sample_grid(r, layer, 2 * grid, 2 * grid)) {
                Jet2 F = ft.jet(p);
                double flf = F.v * L_of(F, p.x2);
                S = std::max(S, std::abs(flf));
                double ph = phi.value(p);
                if (ph > 0 && flf < 0) Sr = std::max(Sr, -flf / ph);
            }
    }
    S *= 1.05;
    Sr *= 1.05;
    double nu = 1.0;
    if (S > 0) nu = std::min(nu, 0.9 * delta / (2 * S));
    if (Sr > 0) nu = std::min(nu, 0.9 * delta / (2 * Sr));
    out.nu0 = nu;

    out.u.t_start = 0;
    out.u.t_end = T;
    out.u.support = rects;
    out.u.nu0 = nu;
    out.u.name = mode == AlmostMode::initial ? "almost_constant_initial" : "almost_constant_final";
    out.u.at = [make, delta, phi](double t) {
        FieldSnapshot sn;
        sn.u = AxisymField::of(make(delta, t));
        sn.dt_mag2 = [phi, delta](Point2 p) { return -delta * phi.value(p); };
        return sn;
    };

    MarginTracker m;
    // |f_t - f| grows with t, so the end time dominates
    for (int i = 0; i <= 4; ++i) {
        double t = T * i / 4;
        for (double q : {1.0, 2.0, inf}) m.see(eps - diff_norm(delta, t, q), q, 0, t);
    }
    out.checks.add(m.check("lp_closeness", "|u(t) - u[f]|_p <= eps, p in {1, 2, inf}", false));
    return out;
}

}  // end of namespace nsi
