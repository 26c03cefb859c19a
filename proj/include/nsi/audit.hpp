#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "verifier.hpp"

namespace nsi {

struct SamplePoint {
    double t;
    Point2 p;
};

// half uniform in a support rectangle, half inside its boundary layer
inline std::vector<SamplePoint> sample_points(const PiecewiseSolution& u, int n_times, int n_points,
                                              std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<SamplePoint> out;
    double t0 = u.t_start(), t1 = u.t_end();
    for (int i = 0; i < n_times; ++i) {
        double t = t0 + (t1 - t0) * unit(rng);
        const TimeDependentField& st = u.stages[u.stage_index(t)];
        if (st.support.empty()) continue;
        double layer = st.at(t).u.f.layer();
        for (int k = 0; k < n_points; ++k) {
            const Rect& r = st.support[static_cast<std::size_t>(unit(rng) * st.support.size()) % st.support.size()];
            double x = r.a1 + unit(rng) * r.width(), y = r.a2 + unit(rng) * r.height();
            if (k % 2 == 1 && layer > 0 && 2 * layer < r.min_side()) {
                // distance from the boundary in (0, layer), on a random edge
                double d = layer * unit(rng);
                switch (static_cast<int>(unit(rng) * 4)) {
                    case 0: x = r.a1 + d; break;
                    case 1: x = r.b1 - d; break;
                    case 2: y = r.a2 + d; break;
                    default: y = r.b2 - d; break;
                }
            }
            out.push_back({t, {x, y}});
        }
    }
    return out;
}

// NSI residual d_t|u|^2 - 2 nu u.Delta u must stay <= tol at every sampled (x, t)
inline Check nsi_sampling_check(const PiecewiseSolution& u, const std::vector<double>& nus, int n_times, int n_points,
                                std::uint64_t seed, double tol = 1e-8, const NsiOptions& opt = {}) {
    MarginTracker m;
    auto pts = sample_points(u, n_times, n_points, seed);
    for (const auto& sp : pts) {
        FieldSnapshot s = u.at(sp.t);
        for (double nu : nus) m.see(tol - nsi_residual(s, nu, {sp.p.x1, sp.p.x2, 0.0}, opt), sp.p.x1, sp.p.x2, sp.t);
    }
    Check c = m.check("nsi_residual", "d_t|u|^2 <= 2 nu u.Delta u (+ transport) pointwise for nu in [0, nu0]", false);
    c.note = std::to_string(pts.size()) + " points x " + std::to_string(nus.size()) + " viscosities, seed " +
             std::to_string(seed);
    return c;
}

// the local energy inequality for a few bump test functions over a few windows
// windows are short, so that each covers only a few switches
inline Check lei_sampling_check(const PiecewiseSolution& u, double nu, int windows = 2, double tol = 1e-9,
                                double width = 0.01, const LeiOptions& opt = {}) {
    MarginTracker m;
    double t0 = u.t_start(), t1 = u.t_end();
    const Rect& R = u.stages.front().support.front();
    std::vector<Rect> boxes{R, {R.a1, R.center().x1, R.a2, R.b2}};
    for (int w = 0; w < windows; ++w) {
        double S = t0 + (t1 - t0) * (w + 1) / (windows + 1), S2 = std::min(t1, S + width * (t1 - t0));
        for (const Rect& b : boxes) {
            TestFunction tf = TestFunction::bump({b.a1 - 0.1 * b.width(), b.b1 + 0.1 * b.width(),
                                                  std::max(b.a2 / 2, b.a2 - 0.1 * b.height()), b.b2 + 0.1 * b.height()});
            m.see(lei_check(u, tf, S, S2, nu, opt) + tol, b.a1, b.a2, S);
        }
    }
    return m.check("local_energy_inequality", "local energy inequality for bump test functions", false);
}

}  // end of namespace nsi
