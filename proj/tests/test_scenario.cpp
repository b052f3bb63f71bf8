#include "gfm/config.hpp"
#include "gfm/scenario.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace gfm;
namespace fs = std::filesystem;

namespace {

ScenarioConfig short_chil(double horizon = 1.8)
{
    auto c = preset("chil_table1");
    c.horizon = horizon;
    c.fault->t_on = 1.2;
    c.controller.t_p = 0.5;
    c.relay.horizon = 0.5;
    return c;
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch(const std::string &name)
{
    auto p = fs::temp_directory_path() / ("gfm_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ScenarioConfig from_text(const std::string &text) { return config_from_json(nlohmann::json::parse(text)); }

} // namespace

TEST(Config, PresetsAreValid)
{
    for (const char *name : {"chil_table1", "lab_table2"}) {
        const auto c = preset(name);
        EXPECT_NO_THROW(c.validate()) << name;
        EXPECT_EQ(c.name, name);
    }
    EXPECT_THROW(preset("nope"), ConfigError);
}

TEST(Config, UnknownKeyIsRejectedWithItsPath)
{
    try {
        from_text(R"({"preset": "chil_table1", "controller": {"k_x9": 1}})");
        FAIL() << "accepted an unknown key";
    } catch (const ConfigError &e) {
        EXPECT_NE(std::string(e.what()).find("controller.k_x9"), std::string::npos) << e.what();
    }
}

TEST(Config, TimerOrderingIsEnforced)
{
    EXPECT_THROW(from_text(R"({"preset": "chil_table1", "controller": {"t1": 0.5, "t_p": 0.2}})"), ConfigError);
    EXPECT_THROW(from_text(R"({"preset": "chil_table1", "controller": {"t_r": 0.08}})"), ConfigError);
    EXPECT_NO_THROW(from_text(R"({"preset": "chil_table1", "controller": {"t_r": 0.02}})"));
}

TEST(Config, GainBelowSizingIsRejected)
{
    EXPECT_THROW(from_text(R"({"preset": "chil_table1", "controller": {"k_x1": 0.1}})"), ConfigError);
}

TEST(Config, FilterReactanceMustAgree)
{
    EXPECT_THROW(from_text(R"({"preset": "chil_table1", "controller": {"x_f": 0.3}})"), ConfigError);
}

TEST(Config, EchoRoundTrip)
{
    for (const char *name : {"chil_table1", "lab_table2"}) {
        const auto once = config_to_json(preset(name));
        const auto twice = config_to_json(config_from_json(once));
        EXPECT_EQ(once, twice) << name;
    }
    const auto edited = from_text(R"({"preset": "lab_table2", "disturbance": {"phase_jump_deg": -60}, "seed": 7})");
    EXPECT_EQ(config_to_json(config_from_json(config_to_json(edited))), config_to_json(edited));
}

TEST(Config, NullRemovesThePresetEvent)
{
    const auto c = from_text(R"({"preset": "chil_table1", "fault": null})");
    EXPECT_FALSE(c.fault.has_value());
}

TEST(Scenario, RowCountIsHorizonOverStep)
{
    auto c = short_chil(0.4);
    c.fault.reset();
    const auto r = run_scenario(c);
    EXPECT_EQ(r.trace.size(), static_cast<std::size_t>(std::llround(c.horizon / c.ts)));
    EXPECT_EQ(r.verdicts.size(), r.trace.size());
}

TEST(Scenario, PreFaultSettlesOnTheReference)
{
    auto c = short_chil(1.0);
    c.fault.reset();
    const auto r = run_scenario(c);
    // p1 and the inverter current stay on the operating point
    const auto op = operating_point(c.network, c.controller);
    for (std::size_t k = r.trace.size() / 2; k < r.trace.size(); ++k) {
        ASSERT_NEAR(r.trace[k].p1, c.controller.p_ref, 0.01 * c.controller.p_ref) << r.trace[k].t;
        ASSERT_LE(r.trace[k].i_max, std::abs(op.i_t) * 1.01);
    }
    EXPECT_FALSE(r.summary.events.size());
}

TEST(Scenario, DeterministicBytes)
{
    auto c = short_chil();
    c.noise = 0.01;
    c.seed = 11;
    const auto a = scratch("det_a"), b = scratch("det_b");
    emit_csv(run_scenario(c), a);
    emit_csv(run_scenario(c), b);
    for (const char *f : {"trace.csv", "relay.csv", "summary.txt"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;

    c.seed = 12;
    const auto d = scratch("det_d");
    emit_csv(run_scenario(c), d);
    EXPECT_NE(slurp(a / "trace.csv"), slurp(d / "trace.csv"));
}

TEST(Scenario, CsvHeadersAndShape)
{
    auto c = short_chil(0.3);
    c.fault.reset();
    const auto dir = scratch("headers");
    emit_csv(run_scenario(c), dir);
    std::ifstream trace(dir / "trace.csv"), relay(dir / "relay.csv");
    std::string line;
    std::getline(trace, line);
    EXPECT_EQ(line, trace_header);
    std::size_t rows = 0, cols = std::count(line.begin(), line.end(), ',');
    while (std::getline(trace, line)) {
        ++rows;
        ASSERT_EQ(static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')), cols);
    }
    EXPECT_EQ(rows, 3000u);
    std::getline(relay, line);
    EXPECT_EQ(line, relay_header);
}

TEST(Scenario, SummaryReportsFaultWindowAndModes)
{
    const auto r = run_scenario(short_chil());
    const auto &s = r.summary;
    EXPECT_DOUBLE_EQ(s.window_start, 1.2 + r.config.relay.t_r);
    EXPECT_DOUBLE_EQ(s.window_end, 1.7);
    ASSERT_FALSE(s.events.empty());
    EXPECT_EQ(s.events.front().what, "s_f_rise");
    bool entered = false;
    for (const auto &e : s.events)
        if (e.what == "s_p_rise") entered = e.t > 1.2 && e.t < 1.22;
    EXPECT_TRUE(entered);
    EXPECT_TRUE(s.dz_error.has_value());
}

TEST(Scenario, InapplicableElementsAreBlank)
{
    auto c = short_chil();
    c.fault->type = FaultType::AB;
    const auto o = run_scenario(c).summary.occupancy;
    EXPECT_TRUE(std::isnan(o.phi0));
    EXPECT_TRUE(std::isnan(o.d20));
    EXPECT_FALSE(std::isnan(o.phi2));
    c.fault->type = FaultType::ABC;
    const auto b = run_scenario(c).summary.occupancy;
    EXPECT_TRUE(std::isnan(b.phi2) && std::isnan(b.dd21) && std::isnan(b.phi0));
    EXPECT_GT(b.dphi1, 0.9);
}

TEST(Scenario, SteadyCurrentMatchesFixedPointPrediction)
{
    const auto c = short_chil();
    const auto r = run_scenario(c);
    const auto p = predict_fault_state(c);
    EXPECT_NEAR(r.summary.steady_i_t1, p.i_t1, 0.02 * p.i_t1);
    EXPECT_NEAR(r.x_v1_steady, p.x_v1, 0.05 * p.x_v1 + 0.01);
}

TEST(Scenario, ChecksFlagFailures)
{
    auto c = short_chil();
    c.checks.max_peak_current = 0.5;
    const auto r = run_scenario(c);
    EXPECT_FALSE(r.summary.passed);
    ASSERT_EQ(r.summary.failed_checks.size(), 1u);
    EXPECT_EQ(r.summary.failed_checks.front(), "max_peak_current");
}

TEST(Matrix, SixtySixUniqueCases)
{
    const auto set = fault_matrix(preset("chil_table1"));
    EXPECT_EQ(set.size(), 66u);
    std::set<std::string> names;
    for (const auto &c : set)
        names.insert(c.name);
    EXPECT_EQ(names.size(), 66u);
    EXPECT_TRUE(names.count("ag_forward_m0.01"));
    EXPECT_TRUE(names.count("abcg_reverse_m0.99"));
}

TEST(Matrix, EmptySetGivesEmptyTable)
{
    const auto rows = run_matrix({});
    EXPECT_TRUE(rows.empty());
    const auto table = matrix_table(rows);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 1);
}

TEST(Matrix, EntryEqualsStandaloneRun)
{
    auto a = short_chil();
    a.name = "a";
    auto b = short_chil();
    b.name = "b";
    b.fault->type = FaultType::BC;
    const auto rows = run_matrix({a, b});
    ASSERT_EQ(rows.size(), 2u);
    const auto alone = run_scenario(b);
    ASSERT_TRUE(rows[1].ok);
    EXPECT_EQ(rows[1].summary.max_abs_i_t, alone.summary.max_abs_i_t);
    EXPECT_EQ(rows[1].summary.occupancy.dd21, alone.summary.occupancy.dd21);
    EXPECT_EQ(rows[1].summary.steady_i_t1, alone.summary.steady_i_t1);
}

TEST(Matrix, BadEntryDoesNotStopTheBatch)
{
    auto good = short_chil();
    auto bad = short_chil();
    bad.name = "bad";
    bad.controller.t1 = 5.0;
    const auto rows = run_matrix({bad, good});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_FALSE(rows[0].ok);
    EXPECT_FALSE(rows[0].error.empty());
    EXPECT_TRUE(rows[1].ok);
}

#ifdef GFM_CLI
namespace {
int cli(const std::string &args)
{
    const std::string cmd = std::string(GFM_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
} // namespace

TEST(Cli, ExitCodes)
{
    const auto dir = scratch("cli");
    {
        std::ofstream f(dir / "ok.json");
        f << R"({"preset": "chil_table1", "horizon": 1.8, "fault": {"t_on": 1.2}, "controller": {"t_p": 0.5},
                 "relay": {"horizon": 0.5}, "checks": {"min_zone_fraction": 0.95}})";
        std::ofstream g(dir / "strict.json");
        g << R"({"preset": "chil_table1", "checks": {"max_peak_current": 0.5}, "horizon": 1.8,
                 "fault": {"t_on": 1.2}, "controller": {"t_p": 0.5}, "relay": {"horizon": 0.5}})";
        std::ofstream h(dir / "broken.json");
        h << R"({"preset": "chil_table1", "bogus": 1})";
    }
    EXPECT_EQ(cli("simulate --config " + (dir / "ok.json").string() + " --out " + (dir / "a").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "a" / "trace.csv"));
    EXPECT_TRUE(fs::exists(dir / "a" / "config.json"));
    EXPECT_EQ(cli("simulate --config " + (dir / "strict.json").string() + " --out " + (dir / "b").string()), 1);
    EXPECT_EQ(cli("simulate --config " + (dir / "broken.json").string() + " --out " + (dir / "c").string()), 2);
    EXPECT_EQ(cli("simulate --preset nope --out " + (dir / "d").string()), 2);
    EXPECT_EQ(cli("zones --out " + (dir / "z").string()), 0);
    EXPECT_NE(slurp(dir / "z" / "zones.json").find("\"forward_center_deg\": 90.0"), std::string::npos);

    // the echoed config reproduces the run
    EXPECT_EQ(cli("simulate --config " + (dir / "a" / "config.json").string() + " --out " + (dir / "e").string()), 0);
    EXPECT_EQ(slurp(dir / "a" / "trace.csv"), slurp(dir / "e" / "trace.csv"));
}
#endif
