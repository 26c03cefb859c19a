#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "nsi/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    fs::path d = fs::path(::testing::TempDir()) / ("nsi_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int cli(const std::string& args) {
    std::string cmd = std::string(NSI_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

json report(const fs::path& dir) { return json::parse(slurp(dir / "report.json")); }

const json* check_named(const json& r, const std::string& name) {
    for (const auto& c : r["checks"])
        if (c["name"] == name) return &c;
    return nullptr;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(cli("--help"), 0);
    EXPECT_EQ(cli("frobnicate"), 2);
    EXPECT_EQ(cli("cutoff"), 2);
    EXPECT_EQ(cli("cutoff --rect 0,1,1"), 2);
    EXPECT_EQ(cli("cutoff --rect 0,1,-1,2"), 2);
    EXPECT_EQ(cli("cutoff --rect 1,0,1,2"), 2);
    EXPECT_EQ(cli("synth --rect 0,1,1,2 --profile wave:1"), 2);
    EXPECT_EQ(cli("synth --rect 0,1,1,2 --profile linear:1,0 --eps 0"), 2);
    EXPECT_EQ(cli("cantor --tau abc"), 2);
    EXPECT_EQ(cli("compose --profile linear:1,0 --ball 0,-1"), 2);
}

TEST(Cli, CutoffReport) {
    fs::path d = scratch("cutoff");
    ASSERT_EQ(cli("cutoff --rect 0,1,1,2 --eta 0.3 --grid 60 --out " + d.string()), 0);
    json r = report(d);
    EXPECT_EQ(r["schema_version"], "1.0");
    EXPECT_EQ(r["command"], "cutoff");
    EXPECT_EQ(r["pass"], true);
    EXPECT_EQ(r["inputs"]["rect"], json({0.0, 1.0, 1.0, 2.0}));
    EXPECT_EQ(r["artifacts"], json({"report.json"}));
    for (const char* k : {"plateau_on_U_eta", "range_0_1", "f_above_c", "Lf_positive_frame"}) {
        const json* c = check_named(r, k);
        ASSERT_NE(c, nullptr) << k;
        EXPECT_EQ((*c)["pass"], true);
        EXPECT_TRUE((*c).contains("margin") && (*c).contains("clause") && (*c)["witness"].size() == 3);
    }
    EXPECT_GT(r["constants"]["c_prime"].get<double>(), 0);
}

TEST(Cli, StructureReport) {
    fs::path d = scratch("structure");
    ASSERT_EQ(cli("structure --rect 0,1,1,2 --eta 0.3 --grid 60 --out " + d.string()), 0);
    json r = report(d);
    EXPECT_NE(check_named(r, "verify.div_x2v_zero"), nullptr);
    EXPECT_EQ(cli("structure --rect 0,1,1,2 --plateau round --out " + d.string()), 2);
}

TEST(Cli, CantorArtifacts) {
    fs::path d = scratch("cantor");
    ASSERT_EQ(cli("cantor --depth 3 --out " + d.string()), 0);
    json r = report(d);
    EXPECT_EQ(r["constants"]["valid"], true);
    EXPECT_EQ(r["constants"]["schedule"]["T0"]["exact"], "9/8");
    EXPECT_EQ(r["constants"]["schedule"]["t"][2]["exact"], "10/9");
    EXPECT_NEAR(r["constants"]["dimension_fit"]["slope"].get<double>(), std::log(2.0) / std::log(3.0), 0.05);
    json b = json::parse(slurp(d / "boxes.json"));
    ASSERT_EQ(b["levels"].size(), 4u);
    EXPECT_EQ(b["levels"][2]["boxes"].size(), 4u);
    EXPECT_EQ(b["levels"][1]["boxes"][1]["lo_exact"][0], "2/3");
    std::string csv = slurp(d / "dimension.csv");
    EXPECT_EQ(csv.rfind("log_inv_scale,log_count\n", 0), 0u);
}

TEST(Cli, InvalidCantorParametersFail) {
    fs::path d = scratch("cantor_bad");
    EXPECT_EQ(cli("cantor --xi 7/10 --out " + d.string()), 1);
    json r = report(d);
    EXPECT_EQ(r["pass"], false);
    EXPECT_EQ(r["constants"]["reason"], "tau^xi M < 1");
    EXPECT_EQ(cli("cantor --scales 1,1/2 --out " + d.string()), 2);
}

TEST(Cli, CutoffIsDeterministic) {
    fs::path a = scratch("det_a"), b = scratch("det_b");
    ASSERT_EQ(cli("cutoff --rect 0,1,1,2 --eta 0.1 --grid 40 --out " + a.string()), 0);
    ASSERT_EQ(cli("cutoff --rect 0,1,1,2 --eta 0.1 --grid 40 --out " + b.string()), 0);
    EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
}

TEST(Cli, SynthThenVerify) {
    fs::path a = scratch("synth_a"), b = scratch("synth_b"), v = scratch("verify");
    std::string args = "synth --rect 0,1,1,2 --profile linear:1,0 --eps 0.5 --time-samples 20 --out ";
    ASSERT_EQ(cli(args + a.string()), 0);
    ASSERT_EQ(cli(args + b.string()), 0);
    std::string csv = slurp(a / "energy.csv");
    EXPECT_EQ(csv, slurp(b / "energy.csv"));
    EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
    EXPECT_EQ(csv.rfind("t,norm,target,deviation\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);

    json r = report(a);
    EXPECT_EQ(r["artifacts"], json({"energy.csv", "report.json"}));
    EXPECT_LE(r["constants"]["max_deviation"].get<double>(), 0.5);

    ASSERT_EQ(cli("verify --manifest " + (a / "report.json").string() + " --times 5 --points 5 --no-lei --out " + v.string()),
              0);
    json rv = report(v);
    EXPECT_EQ(check_named(rv, "manifest_reproduced")->at("pass"), true);
}

TEST(Cli, VerifyRejectsBadManifests) {
    fs::path d = scratch("verify_bad");
    EXPECT_EQ(cli("verify --manifest " + (d / "missing.json").string() + " --out " + d.string()), 2);
    {
        std::ofstream f(d / "junk.json");
        f << "{not json";
    }
    EXPECT_EQ(cli("verify --manifest " + (d / "junk.json").string() + " --out " + d.string()), 2);
    fs::path c = scratch("verify_cutoff");
    ASSERT_EQ(cli("cutoff --rect 0,1,1,2 --eta 0.3 --grid 20 --out " + c.string()), 0);
    EXPECT_EQ(cli("verify --manifest " + (c / "report.json").string() + " --out " + d.string()), 2);
}

TEST(Cli, CsvProfileErrors) {
    fs::path d = scratch("csv_profile");
    EXPECT_EQ(cli("synth --rect 0,1,1,2 --profile csv:" + (d / "nope.csv").string() + " --out " + d.string()), 2);
    {
        std::ofstream f(d / "up.csv");
        f << "t,e\n0,1\n1,2\n";
    }
    EXPECT_EQ(cli("synth --rect 0,1,1,2 --profile csv:" + (d / "up.csv").string() + " --out " + d.string()), 2);
}

TEST(Cli, InProcessSummaryLine) {
    fs::path d = scratch("inproc");
    std::ostringstream out, err;
    int rc = nsi::cli::run({"cantor", "--depth", "1", "--out", d.string()}, out, err);
    EXPECT_EQ(rc, 0);
    EXPECT_EQ(out.str().rfind("cantor: pass", 0), 0u);
    std::ostringstream out2, err2;
    EXPECT_EQ(nsi::cli::run({"cutoff", "--rect", "x"}, out2, err2), 2);
    EXPECT_NE(err2.str().find("error:"), std::string::npos);
}
