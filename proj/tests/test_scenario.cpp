#include "test_util.hpp"
#include "weinfib/scenario.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace weinfib;
namespace fs = std::filesystem;

namespace {

Scenario parse(const std::string& text)
{
    std::istringstream in(text);
    return parse_scenario(in);
}

int cli(const std::string& args)
{
    const std::string cmd = std::string(WEINFIB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string scenario(const std::string& name) { return std::string(WEINFIB_SCENARIO_DIR) + "/" + name; }

fs::path fresh_dir(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("weinfib_test_" + name);
    fs::remove_all(p);
    return p;
}

Json read_json(const fs::path& p)
{
    std::ifstream in(p);
    return Json::parse(in);
}

} // namespace

TEST(Parse, KeysLabelsAndComments)
{
    const auto s = parse(R"(
# comment line
schema_version = 1
seed = 17
model.name = torus4      # trailing comment
model.c_amplitude = 0.25
model.fibre_resolution = 8
pipeline = hodge, graph:first, graph:second
step.hodge.degree = 1
step.first.amplitude = 0.5
step.second.amplitude = 1.0
output.tables = lambda, psi
)");
    EXPECT_EQ(s.model_name, "torus4");
    EXPECT_EQ(s.seed, 17U);
    EXPECT_EQ(s.params.c_amplitude, 0.25);
    EXPECT_EQ(s.params.fibre_resolution, 8);
    ASSERT_EQ(s.pipeline.size(), 3U);
    EXPECT_EQ(s.pipeline[1].op, "graph");
    EXPECT_EQ(s.pipeline[1].label, "first");
    EXPECT_EQ(s.pipeline[2].params.at("amplitude"), "1.0");
    EXPECT_EQ(s.pipeline[0].params.at("degree"), "1");
    EXPECT_EQ(s.tables, (std::set<std::string>{"lambda", "psi"}));
}

TEST(Parse, Errors)
{
    EXPECT_THROW(parse("nonsense = 1"), ParseError);
    EXPECT_THROW(parse("schema_version = 2"), ParseError);
    EXPECT_THROW(parse("pipeline = liouville, fly"), ParseError);
    EXPECT_THROW(parse("step.liouville.tol = 1e-6"), ParseError);
    EXPECT_THROW(parse("pipeline = liouville\nstep.liouville.colour = red"), ParseError);
    EXPECT_THROW(parse("model.c_amplitude = half"), ParseError);
    EXPECT_THROW(parse("model.base_samples = 8.5"), ParseError);
    EXPECT_THROW(parse("just some words"), ParseError);
    EXPECT_THROW(parse("= 3"), ParseError);
    EXPECT_THROW(load_scenario("/nonexistent/file.scn"), ParseError);
}

TEST(Parse, TolerancesMustBePositive)
{
    EXPECT_THROW(parse("pipeline = liouville\nstep.liouville.tol = 0"), ParseError);
    EXPECT_THROW(parse("pipeline = polarize\nstep.polarize.tol_conformal = -1e-4"), ParseError);
    EXPECT_NO_THROW(parse("pipeline = polarize\nstep.polarize.tol_conformal = 1e-4"));
    try {
        parse("pipeline = liouville\n\nstep.liouville.tol = x");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(Parse, ShippedScenariosParse)
{
    for (const auto& entry : fs::directory_iterator(WEINFIB_SCENARIO_DIR))
        if (entry.path().extension() == ".scn") EXPECT_NO_THROW(load_scenario(entry.path().string())) << entry.path();
}

TEST(OneForms, FourierTerms)
{
    const auto f = fourier_one_form(parse_one_form("0.1*dth1 + sin(th2)*dth1 - 0.5*cos(2*th1)*dth2", 2), 2);
    Vec th(2);
    th << 0.3, 1.1;
    EXPECT_NEAR(f(0.0, th)[0], 0.1 + std::sin(1.1), 1e-15);
    EXPECT_NEAR(f(0.0, th)[1], -0.5 * std::cos(0.6), 1e-15);
    const Mat j = f.jacobian(0.0, th);
    EXPECT_NEAR(j(0, 1), std::cos(1.1), 1e-15);
    EXPECT_NEAR(j(1, 0), std::sin(0.6), 1e-15);
    EXPECT_TRUE(parse_one_form("0", 2).empty());
    EXPECT_EQ(parse_one_form("-dth2", 2).front().coef, -1.0);
    EXPECT_EQ(parse_one_form("1e-3*dth1", 1).front().coef, 1e-3);
    EXPECT_THROW(parse_one_form("dth3", 2), ParseError);
    EXPECT_THROW(parse_one_form("tan(th1)*dth1", 2), ParseError);
}

TEST(Runner, InProcessExitCodes)
{
    EXPECT_EQ(run_scenario(load_scenario(scenario("empty.scn"))).exit_code, 0);
    auto bad = load_scenario(scenario("empty.scn"));
    bad.model_name = "klein_bottle";
    const auto r = run_scenario(bad);
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_FALSE(r.report.at("passed").get<bool>());
    const auto fail = run_scenario(load_scenario(scenario("torus4_classify_fails.scn")));
    EXPECT_EQ(fail.exit_code, 1);
    EXPECT_EQ(fail.report.at("failed_step"), "classify");
}

TEST(Runner, StripTimingsRemovesOnlyWallTime)
{
    Json j = {{"a", 1}, {"wall_time_ms", 2.0}, {"steps", {{{"wall_time_ms", 3.0}, {"b", 4}}}}};
    const Json s = strip_timings(j);
    EXPECT_FALSE(s.contains("wall_time_ms"));
    EXPECT_FALSE(s.at("steps")[0].contains("wall_time_ms"));
    EXPECT_EQ(s.at("steps")[0].at("b"), 4);
    EXPECT_EQ(s.at("a"), 1);
}

TEST(Cli, ExitCodes)
{
    EXPECT_EQ(cli("run --scenario " + scenario("fibrations.scn")), 0);
    EXPECT_EQ(cli("run --scenario " + scenario("torus4_classify_fails.scn")), 1);
    EXPECT_EQ(cli("run --scenario " + scenario("empty.scn") + " --set pipeline=bogus"), 2);
    EXPECT_EQ(cli("run --scenario /nonexistent.scn"), 2);
    EXPECT_EQ(cli("run"), 2);
    EXPECT_EQ(cli("teleport"), 2);
    EXPECT_EQ(cli("liouville --model nonsense"), 3);
    EXPECT_EQ(cli("psi --model torus2 --set step.psi.amplitude=0.2"), 0);
    EXPECT_EQ(cli("psi --model torus2 --set step.psi.amplitude=1.5"), 1);
}

TEST(Cli, WritesReportsAndTables)
{
    const auto dir = fresh_dir("tables");
    ASSERT_EQ(cli("run --scenario " + scenario("fibrations.scn") + " --out " + dir.string()), 0);
    const auto rep = read_json(dir / "report.json");
    EXPECT_EQ(rep.at("schema_version"), 1);
    EXPECT_EQ(rep.at("steps").size(), 7U);
    for (const auto& st : rep.at("steps")) EXPECT_TRUE(st.at("passed").get<bool>());
    EXPECT_TRUE(fs::exists(dir / "5_psi.json"));
    std::ifstream csv(dir / "psi.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "node,x,alpha_y,psi_x");
    fs::remove_all(dir);
}

TEST(Cli, SeededRunsAreDeterministic)
{
    const auto a = fresh_dir("det_a");
    const auto b = fresh_dir("det_b");
    const std::string base = "run --scenario " + scenario("fibrations.scn") + " --seed 11 --out ";
    ASSERT_EQ(cli(base + a.string()), 0);
    ASSERT_EQ(cli(base + b.string() + " --threads 2"), 0);
    EXPECT_EQ(strip_timings(read_json(a / "report.json")), strip_timings(read_json(b / "report.json")));
    fs::remove_all(a);
    fs::remove_all(b);
}
