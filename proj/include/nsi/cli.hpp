#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "audit.hpp"
#include "cantor.hpp"
#include "cutoff.hpp"
#include "energy.hpp"

namespace nsi::cli {

using nlohmann::json;

inline constexpr const char* kSchemaVersion = "1.0";

enum Exit { ok = 0, failed = 1, bad_config = 2 };

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, sep)) out.push_back(item);
    return out;
}

inline std::vector<double> parse_doubles(const std::string& s, std::size_t n, const std::string& what) {
    auto parts = split(s);
    if (parts.size() != n) throw ConfigError(what + " needs " + std::to_string(n) + " comma separated numbers");
    std::vector<double> v;
    for (const auto& p : parts) {
        std::size_t used = 0;
        double x = 0;
        try {
            x = std::stod(p, &used);
        } catch (const std::exception&) {
            throw ConfigError("bad number '" + p + "' in " + what);
        }
        if (used != p.size()) throw ConfigError("bad number '" + p + "' in " + what);
        v.push_back(x);
    }
    return v;
}

inline Rect parse_rect(const std::string& s) {
    auto v = parse_doubles(s, 4, "--rect");
    Rect r{v[0], v[1], v[2], v[3]};
    if (!(r.b1 > r.a1 && r.b2 > r.a2)) throw ConfigError("--rect must have a1 < b1 and a2 < b2");
    if (!(r.a2 > 0)) throw ConfigError("--rect must lie strictly above the axis (a2 > 0)");
    return r;
}

inline json rect_json(const Rect& r) { return {r.a1, r.b1, r.a2, r.b2}; }

inline json rational_json(const Rational& r) { return {{"exact", r.str()}, {"value", to_double(r)}}; }

struct Run {
    std::string command;
    std::filesystem::path out = ".";
    json inputs = json::object();
    json constants = json::object();
    CheckList checks;
    CheckList diagnostics;  // reported, not part of the pass verdict
    json error;
    std::vector<std::string> artifacts;

    bool pass() const { return error.is_null() && checks.all_pass(); }

    json report() const {
        json r;
        r["schema_version"] = kSchemaVersion;
        r["command"] = command;
        r["inputs"] = inputs;
        r["constants"] = constants;
        r["checks"] = to_json(checks);
        if (!diagnostics.checks.empty()) r["diagnostics"] = to_json(diagnostics);
        r["pass"] = pass();
        if (!error.is_null()) r["error"] = error;
        r["artifacts"] = artifacts;
        return r;
    }

    void write_text(const std::string& name, const std::string& text) {
        std::ofstream f(out / name, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + (out / name).string());
        f << text;
        if (!f) throw ConfigError("cannot write " + (out / name).string());
        artifacts.push_back(name);
    }
    void finish() {
        artifacts.push_back("report.json");
        std::ofstream f(out / "report.json", std::ios::binary);
        if (!f) throw ConfigError("cannot write " + (out / "report.json").string());
        f << report().dump(2) << "\n";
        if (!f) throw ConfigError("cannot write " + (out / "report.json").string());
    }
};

inline std::string series_csv(const std::vector<std::array<double, 4>>& series) {
    std::string s = "t,norm,target,deviation\n";
    for (const auto& row : series) s += fmt17(row[0]) + "," + fmt17(row[1]) + "," + fmt17(row[2]) + "," + fmt17(row[3]) + "\n";
    return s;
}

struct CutoffArgs {
    std::string rect;
    double eta = 0.1, a = 1;
    int grid = 200;
};

inline void run_cutoff(Run& run, const CutoffArgs& a) {
    Rect r = parse_rect(a.rect);
    run.inputs = {{"rect", rect_json(r)}, {"eta", a.eta}, {"a", a.a}, {"grid", a.grid}};
    CertifiedCutoff cc = make_cutoff(r, a.eta, a.a);
    run.checks = certify_cutoff(cc, a.grid);
    double w = std::numeric_limits<double>::infinity();
    for (const char* k : {"Lf_positive_frame", "Lf_positive_corners", "Lf_positive_strips"})
        if (const Check* c = run.checks.find(k)) w = std::min(w, c->margin);
    run.constants = {{"c", cc.c},
                     {"log_c", cc.log_c},
                     {"c_prime", cc.c_prime},
                     {"C_h", cc.C_h},
                     {"eta1", cc.eta1},
                     {"eta2", cc.eta2},
                     {"worst_Lf_margin", number_json(w)}};
}

struct StructureArgs {
    std::string rect;
    double eta = 0.1;
    std::string plateau = "level_set";
    int grid = 200;
};

inline void run_structure(Run& run, const StructureArgs& a) {
    Rect r = parse_rect(a.rect);
    if (a.plateau != "level_set" && a.plateau != "rectangular") throw ConfigError("--plateau is level_set or rectangular");
    run.inputs = {{"rect", rect_json(r)}, {"eta", a.eta}, {"plateau", a.plateau}, {"grid", a.grid}};
    Structure s = build_structure_recipe(r, a.eta, a.plateau == "level_set" ? PlateauKind::level_set : PlateauKind::rectangular,
                                         a.grid);
    run.checks.append(s.report, "recipe.");
    run.checks.append(verify_structure(s, a.grid), "verify.");
    const auto& cc = s.comps.front().cutoff;
    run.constants = {{"c_prime", cc.c_prime}, {"log_c", cc.log_c}, {"f_layer", s.f.layer()},
                     {"components", s.comps.size()}, {"u_f_L2", lp_norm(AxisymField::of(s.f), 2)}};
}

struct SynthArgs {
    std::string rect, profile;
    double T = 1, eps = 0.1, p = 2, a = 0;
    int time_samples = 100;
};

inline json synth_inputs(const Rect& r, const SynthArgs& a) {
    return {{"rect", rect_json(r)}, {"profile", a.profile}, {"T", a.T}, {"eps", a.eps},
            {"p", a.p}, {"a", a.a}, {"time_samples", a.time_samples}};
}

inline SynthResult synth_from(const Rect& r, const SynthArgs& a) {
    if (!(a.T > 0) || !(a.eps > 0)) throw ConfigError("--T and --eps must be positive");
    EnergyProfile e = EnergyProfile::parse(a.profile, a.T);
    SynthConfig cfg;
    cfg.p = a.p;
    cfg.a = a.a;
    cfg.time_samples = a.time_samples;
    return synthesize(r, a.eps, a.T, e, cfg);
}

inline json synth_constants(const SynthResult& R) {
    return {{"nu0", R.nu0},
            {"nu0_formula", R.nu0_formula},
            {"nu0_rate", R.nu0_rate},
            {"zeta", R.zeta},
            {"eps_smooth", R.eps_smooth},
            {"eta", R.calib.eta},
            {"stages", R.calib.stages.size()},
            {"c", R.calib.c},
            {"c_hi", R.calib.c_hi},
            {"max_deviation", R.max_deviation}};
}

inline void run_synth(Run& run, const SynthArgs& a) {
    Rect r = parse_rect(a.rect);
    run.inputs = synth_inputs(r, a);
    SynthResult R = synth_from(r, a);
    run.checks = R.checks;
    run.constants = synth_constants(R);
    run.write_text("energy.csv", series_csv(R.series));
}

struct VerifyArgs {
    std::string manifest;
    std::uint64_t seed = 1;
    int times = 50, points = 10;
    bool lei = true;
};

inline void run_verify(Run& run, const VerifyArgs& a) {
    std::ifstream f(a.manifest);
    if (!f) throw ConfigError("cannot open manifest " + a.manifest);
    json m;
    try {
        m = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (m.value("command", "") != "synth") throw ConfigError("verify needs a report.json written by synth");
    SynthArgs s;
    try {
        const json& in = m.at("inputs");
        auto rv = in.at("rect");
        s.rect = fmt17(rv[0].get<double>()) + "," + fmt17(rv[1].get<double>()) + "," + fmt17(rv[2].get<double>()) + "," +
                 fmt17(rv[3].get<double>());
        s.profile = in.at("profile").get<std::string>();
        s.T = in.at("T").get<double>();
        s.eps = in.at("eps").get<double>();
        s.p = in.at("p").get<double>();
        s.a = in.at("a").get<double>();
        s.time_samples = in.at("time_samples").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest inputs incomplete: ") + e.what());
    }
    Rect r = parse_rect(s.rect);
    run.inputs = {{"manifest", a.manifest}, {"seed", a.seed}, {"times", a.times}, {"points", a.points},
                  {"lei", a.lei}, {"synth", synth_inputs(r, s)}};
    SynthResult R = synth_from(r, s);
    run.constants = synth_constants(R);
    run.checks.append(R.checks, "synth.");
    Check same;
    same.name = "manifest_reproduced";
    same.tag = "re-run reproduces the manifest constants";
    same.pass = true;
    same.margin = 0;
    if (m.contains("constants"))
        for (const char* k : {"nu0", "eta", "stages"})
            if (m["constants"].contains(k) && m["constants"][k] != run.constants[k]) {
                same.pass = false;
                same.margin = -1;
                same.note = std::string("differs: ") + k;
            }
    run.checks.add(same);
    run.checks.add(nsi_sampling_check(R.solution, {0.0, R.nu0 / 2, R.nu0}, a.times, a.points, a.seed));
    if (a.lei && !R.zero) run.checks.add(lei_sampling_check(R.solution, R.nu0));
}

struct CantorArgs {
    std::string tau = "1/3", xi = "3/5", X = "2/3", z = "0,0,0", G, scales;
    int M = 2, depth = 6, dim_depth = 8, jmax = 4;
    std::string T = "1";
    bool tower = false;
};

inline void run_cantor(Run& run, const CantorArgs& a) {
    CantorParams<Rational> p;
    try {
        p.tau = parse_rational(a.tau);
        p.xi = parse_rational(a.xi);
        p.X = parse_rational(a.X);
        auto zs = split(a.z);
        if (zs.size() != 3) throw ConfigError("--z needs three numbers");
        for (int i = 0; i < 3; ++i) p.z[i] = parse_rational(zs[i]);
        if (!a.G.empty()) {
            auto gs = split(a.G);
            if (gs.size() != 6) throw ConfigError("--G needs a1,b1,a2,b2,a3,b3");
            for (int i = 0; i < 3; ++i) {
                p.G.lo[i] = parse_rational(gs[2 * i]);
                p.G.hi[i] = parse_rational(gs[2 * i + 1]);
                if (!(p.G.lo[i] < p.G.hi[i])) throw ConfigError("--G needs lo < hi on every axis");
            }
        }
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
    }
    p.M = a.M;
    if (a.depth < 0 || a.dim_depth < 1 || a.jmax < 0) throw ConfigError("depths must be non-negative");
    Rational T = parse_rational(a.T);
    run.inputs = {{"tau", rational_json(p.tau)}, {"M", p.M},        {"xi", rational_json(p.xi)},
                  {"X", rational_json(p.X)},     {"z", a.z},        {"G", json::array()},
                  {"depth", a.depth},            {"dim_depth", a.dim_depth}, {"T", rational_json(T)},
                  {"jmax", a.jmax},              {"tower", a.tower}};
    for (int i = 0; i < 3; ++i) {
        run.inputs["G"].push_back(rational_json(p.G.lo[i]));
        run.inputs["G"].push_back(rational_json(p.G.hi[i]));
    }
    CantorValidation v = validate_params(p);
    run.checks.append(v.checks, "validate.");
    run.constants["valid"] = v.valid;
    if (!v.valid) {
        if (const Check* c = v.checks.find("tau_xi_M"); c && !c->pass) run.constants["reason"] = "tau^xi M < 1";
        else if (const Check* c2 = v.checks.find("tau_M"); c2 && !c2->pass) run.constants["reason"] = "tau M >= 1";
        else run.constants["reason"] = "geometry of Gamma_n(G) inside G fails";
        return;
    }
    run.constants["dimension_ifs"] = v.dim_ifs;
    run.constants["separation"] = v.separation;

    json levels = json::array();
    for (int j = 0; j <= a.depth; ++j) {
        LevelBoxes<Rational> lb = level_boxes(p, j);
        run.checks.append(lb.checks, "level" + std::to_string(j) + ".");
        json boxes = json::array();
        for (std::size_t k = 0; k < lb.boxes.size(); ++k) {
            json lo = json::array(), hi = json::array(), lo_x = json::array(), hi_x = json::array();
            for (int i = 0; i < 3; ++i) {
                lo.push_back(to_double(lb.boxes[k].lo[i]));
                hi.push_back(to_double(lb.boxes[k].hi[i]));
                lo_x.push_back(lb.boxes[k].lo[i].str());
                hi_x.push_back(lb.boxes[k].hi[i].str());
            }
            boxes.push_back({{"index", lb.index[k]}, {"lo", lo}, {"hi", hi}, {"lo_exact", lo_x}, {"hi_exact", hi_x}});
        }
        levels.push_back({{"j", j}, {"boxes", boxes}});
    }
    run.write_text("boxes.json", json{{"schema_version", kSchemaVersion}, {"levels", levels}}.dump(2) + "\n");

    // dimension fit at depth dim_depth over the scales tau^k, k = 1 .. dim_depth - 1
    std::vector<Rational> scales;
    if (!a.scales.empty()) {
        for (const auto& s : split(a.scales)) scales.push_back(parse_rational(s));
    } else {
        for (int k = 1; k < a.dim_depth; ++k) scales.push_back(int_pow(p.tau, k));
        while (scales.size() > 4 && to_double(scales.front()) / to_double(scales.back()) > 100 &&
               to_double(scales[1]) / to_double(scales.back()) >= 100)
            scales.erase(scales.begin());
    }
    try {
        DimensionFit fit = box_dimension(level_boxes(p, a.dim_depth, false).boxes, scales);
        std::string csv = "log_inv_scale,log_count\n";
        for (auto [x, y] : fit.points) csv += fmt17(x) + "," + fmt17(y) + "\n";
        run.write_text("dimension.csv", csv);
        run.constants["dimension_fit"] = {{"slope", fit.slope}, {"intercept", fit.intercept}, {"r2", fit.r2}};
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
    }

    Schedule<Rational> sch = switching_schedule(T, p.tau, a.jmax);
    json ts = json::array();
    for (const auto& t : sch.t) ts.push_back(rational_json(t));
    run.constants["schedule"] = {{"t", ts}, {"T0", rational_json(sch.T0)}};

    if (a.tower) {
        if (p.z[1] != 0 || p.z[2] != 0) throw ConfigError("--tower needs z = (z1, 0, 0)");
        Structure st = build_structure_recipe(Rect{0, 1, 1, 2}, 0.3, PlateauKind::level_set);
        AlmostConstant base = almost_constant(st, 0.05, to_double(T), AlmostMode::initial);
        CantorTower tw = rescale_tower(base.u, p, to_double(T), a.jmax);
        run.checks.append(tw.checks, "tower.");
        run.diagnostics.append(tw.assumption, "tower.");
        run.constants["tower"] = {{"C", tw.C}, {"T0", tw.T0}, {"base", "almost constant solution of the recipe structure on (0,1)x(1,2)"}};
    }
}

struct ComposeArgs {
    std::string profile;
    double T = 1, eps = 0.2;
    std::string ball = "0,3";
    int jmax = 4;
};

inline void run_compose(Run& run, const ComposeArgs& a) {
    auto b = parse_doubles(a.ball, 2, "--ball");
    if (!(a.T > 0) || !(a.eps > 0)) throw ConfigError("--T and --eps must be positive");
    if (!(b[1] > 0)) throw ConfigError("--ball radius must be positive");
    EnergyProfile e = EnergyProfile::parse(a.profile, a.T);
    run.inputs = {{"profile", a.profile}, {"T", a.T}, {"eps", a.eps}, {"ball", b}, {"jmax", a.jmax}};
    PlaceholderTower pt = placeholder_tower(a.jmax);
    ComposeConfig cfg;
    cfg.x_bar = b[0];
    cfg.R = b[1];
    CompositionPlan plan = compose_with_profile(e, a.eps, a.T, pt.tower, pt.structure, cfg);
    run.checks = plan.checks;
    run.diagnostics.append(pt.tower.assumption, "tower.");
    run.constants = {{"T_prime", plan.T_prime}, {"T_dprime", plan.T_dprime}, {"T_u2", plan.T_u2},
                     {"lambda", plan.lambda},   {"a1", plan.a1},             {"U1", rect_json(plan.U1)},
                     {"has_U2", plan.has_U2},   {"sup_u0", plan.sup_u0},     {"C", pt.tower.C},
                     {"T0", pt.tower.T0},       {"nu0", plan.solution.nu0}};
    if (plan.has_U2) run.constants["U2"] = rect_json(plan.U2);
    run.write_text("energy.csv", series_csv(plan.series));
}

inline json error_json(const std::string& type, const std::string& msg) { return {{"type", type}, {"message", msg}}; }

// runs one subcommand; the return value is the process exit code
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"nsi: constructions of weak solutions to the Navier-Stokes inequality"};
    app.require_subcommand(1);
    std::string outdir = ".";
    app.add_option("--out", outdir, "output directory");

    CutoffArgs ca;
    auto* c1 = app.add_subcommand("cutoff", "build and certify a cutoff");
    c1->add_option("--rect", ca.rect, "a1,b1,a2,b2")->required();
    c1->add_option("--eta", ca.eta);
    c1->add_option("--a", ca.a);
    c1->add_option("--grid", ca.grid);
    c1->add_option("--out", outdir);

    StructureArgs sa;
    auto* c2 = app.add_subcommand("structure", "build and verify the recipe structure");
    c2->add_option("--rect", sa.rect)->required();
    c2->add_option("--eta", sa.eta);
    c2->add_option("--plateau", sa.plateau);
    c2->add_option("--grid", sa.grid);
    c2->add_option("--out", outdir);

    SynthArgs ya;
    auto* c3 = app.add_subcommand("synth", "synthesize a solution with a prescribed energy profile");
    c3->add_option("--rect", ya.rect)->required();
    c3->add_option("--profile", ya.profile, "linear:e0,eT | const:e0 | csv:path")->required();
    c3->add_option("--T", ya.T);
    c3->add_option("--eps", ya.eps);
    c3->add_option("--p", ya.p);
    c3->add_option("--a", ya.a);
    c3->add_option("--time-samples", ya.time_samples);
    c3->add_option("--out", outdir);

    VerifyArgs va;
    auto* c4 = app.add_subcommand("verify", "re-run the NSI and local energy checks on a synth manifest");
    c4->add_option("--manifest", va.manifest)->required();
    c4->add_option("--seed", va.seed);
    c4->add_option("--times", va.times);
    c4->add_option("--points", va.points);
    c4->add_flag("--lei,!--no-lei", va.lei);
    c4->add_option("--out", outdir);

    CantorArgs na;
    auto* c5 = app.add_subcommand("cantor", "validate parameters, level boxes, schedule and dimension");
    c5->add_option("--tau", na.tau);
    c5->add_option("--M", na.M);
    c5->add_option("--xi", na.xi);
    c5->add_option("--X", na.X);
    c5->add_option("--z", na.z);
    c5->add_option("--G", na.G, "a1,b1,a2,b2,a3,b3");
    c5->add_option("--depth", na.depth);
    c5->add_option("--dim-depth", na.dim_depth);
    c5->add_option("--scales", na.scales);
    c5->add_option("--T", na.T);
    c5->add_option("--jmax", na.jmax);
    c5->add_flag("--tower", na.tower);
    c5->add_option("--out", outdir);

    ComposeArgs oa;
    auto* c6 = app.add_subcommand("compose", "splice a profile solution with a blow-up tower");
    c6->add_option("--profile", oa.profile)->required();
    c6->add_option("--T", oa.T);
    c6->add_option("--eps", oa.eps);
    c6->add_option("--ball", oa.ball, "x,R");
    c6->add_option("--jmax", oa.jmax);
    c6->add_option("--out", outdir);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return bad_config;
    }

    Run run;
    run.out = outdir;
    try {
        std::filesystem::create_directories(run.out);
    } catch (const std::exception& e) {
        err << "error: cannot create output directory " << outdir << ": " << e.what() << "\n";
        return bad_config;
    }
    try {
        try {
            if (c1->parsed()) run.command = "cutoff", run_cutoff(run, ca);
            else if (c2->parsed()) run.command = "structure", run_structure(run, sa);
            else if (c3->parsed()) run.command = "synth", run_synth(run, ya);
            else if (c4->parsed()) run.command = "verify", run_verify(run, va);
            else if (c5->parsed()) run.command = "cantor", run_cantor(run, na);
            else if (c6->parsed()) run.command = "compose", run_compose(run, oa);
        } catch (const ConfigError& e) {
            err << "error: " << e.what() << "\n";
            return bad_config;
        } catch (const PreconditionError& e) {
            err << "error: " << e.what() << "\n";
            return bad_config;
        } catch (const DegenerateInputError& e) {
            err << "error: " << e.what() << "\n";
            return bad_config;
        } catch (const CertificationError& e) {
            run.error = error_json("certification", e.what());
        } catch (const Error& e) {
            run.error = error_json("construction", e.what());
        }
        run.finish();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return bad_config;
    }
    bool pass = run.pass();
    out << run.command << ": " << (pass ? "pass" : "FAIL") << " (" << run.checks.checks.size() << " checks)";
    if (!pass) {
        for (const auto& c : run.checks.checks)
            if (!c.pass) out << "\n  failed: " << c.name << " margin " << fmt17(c.margin);
        if (!run.error.is_null()) out << "\n  error: " << run.error["message"].get<std::string>();
    }
    out << "\n";
    return pass ? ok : failed;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(std::move(args), out, err);
}

}  // namespace nsi::cli
