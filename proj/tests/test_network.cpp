#include "gfm/estimators.hpp"
#include "gfm/network.hpp"
#include "gfm/oracle.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

using namespace gfm;

namespace {

constexpr double kTs = 1e-4;

std::array<double, 3> balanced(Phasor e, double w, double t)
{
    std::array<double, 3> out{};
    for (int k = 0; k < 3; ++k)
        out[k] = sqrt2 * (e * std::polar(1.0, w * t - 2.0 * pi * k / 3.0)).real();
    return out;
}

// Runs an ideal sinusoidal inverter EMF and returns the phasors of the last
// full cycle of the given channel.
struct Capture {
    std::vector<std::array<double, 3>> v_poc, i_poc, i_t;
    double t0 = 0.0;
};

Capture run_ideal(Network &net, Phasor e, double t_end, double capture_from)
{
    const double w = net.params().w1();
    Capture c;
    bool started = false;
    while (net.time() < t_end - 0.5 * kTs) {
        const double t1 = net.time() + kTs;
        const auto &s = net.step(balanced(e, w, t1));
        if (s.t >= capture_from - 1e-9) {
            if (!started) {
                c.t0 = s.t;
                started = true;
            }
            c.v_poc.push_back(s.v_poc);
            c.i_poc.push_back(s.i_poc);
            c.i_t.push_back(s.i_t);
        }
    }
    return c;
}

SequenceSet cycle_sequence(const std::vector<std::array<double, 3>> &x, double w, double t0)
{
    const std::size_t n = samples_per_cycle(w, kTs);
    PhaseSet p;
    for (int k = 0; k < 3; ++k) {
        std::vector<double> ch(n);
        for (std::size_t i = 0; i < n; ++i)
            ch[i] = x[x.size() - n + i][k];
        p[k] = dft_phasor(ch, w, kTs, t0 + static_cast<double>(x.size() - n) * kTs);
    }
    return abc_to_sequence(p);
}

OracleNetwork oracle_of(const NetworkParams &p)
{
    OracleNetwork o;
    o.z_l1 = p.z_l1();
    o.z_l0 = p.z_l0();
    o.z_g1 = p.z_g;
    o.z_g0 = p.z_g;
    o.v_g1 = std::polar(p.v_g / sqrt2, rad(p.v_g_angle_deg));
    o.z_base_ohm = p.z_base_grid();
    return o;
}

IbrSource ideal_source(const NetworkParams &p, Phasor e)
{
    IbrSource s;
    s.e_pre1 = e;
    s.x_f = p.x_f;
    s.x_t = p.x_t;
    s.n = p.n_pu();
    s.mode = IbrMode::Conventional;
    return s;
}

} // namespace

TEST(NetworkParams, PerUnitConversions)
{
    NetworkParams p;
    EXPECT_NEAR(p.z_base_grid(), 484.0, 1e-9);
    EXPECT_NEAR(p.n_pu(), 1.0, 1e-12);
    EXPECT_NEAR(p.z_l1().real(), 3.0 / 484.0, 1e-12);
    EXPECT_NEAR(p.z_l1().imag(), 34.0 / 484.0, 1e-12);
    EXPECT_NEAR(henry_to_pu(pu_to_henry(0.3, 50.0, 7.5), 50.0, 7.5), 0.3, 1e-12);
}

TEST(NetworkParams, RejectsBadValues)
{
    NetworkParams p;
    p.x_f = 0.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = {};
    p.line_km = -1.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = {};
    EXPECT_THROW(Network(p, 0.0), std::invalid_argument);
    EXPECT_THROW(Network(p, kTs, {FaultSide::Forward, 1.5}), std::invalid_argument);
}

TEST(Network, SteadyStateMatchesPhasorDivider)
{
    NetworkParams p;
    const Phasor e = std::polar(1.05 / sqrt2, rad(15.0));
    Network net(p, kTs);
    net.initialize_steady_state(e);
    const auto c = run_ideal(net, e, 0.2, 0.1);
    const auto v = cycle_sequence(c.v_poc, p.w1(), c.t0);
    const auto i = cycle_sequence(c.i_poc, p.w1(), c.t0);

    const Phasor vg = p.v_g / sqrt2;
    const Phasor loop = unit_j * (p.x_f + p.x_t) + p.z_l1() + p.z_g;
    const Phasor i_ref = (e - vg) / loop;
    const Phasor v_ref = vg + i_ref * (p.z_l1() + p.z_g);
    EXPECT_LT(std::abs(i.positive - i_ref), 1e-3 * std::abs(i_ref));
    EXPECT_LT(std::abs(v.positive - v_ref), 1e-3);
    EXPECT_LT(std::abs(v.negative), 1e-6);
    EXPECT_LT(std::abs(v.zero), 1e-6);
}

TEST(Network, InitializerIsCloseToTheDiscreteSteadyState)
{
    NetworkParams p;
    const Phasor e = std::polar(1.0 / sqrt2, rad(20.0));
    Network net(p, kTs);
    net.initialize_steady_state(e);
    const auto before = net.sample();
    net.step(balanced(e, p.w1(), kTs));
    const auto after = net.sample();
    // one step of a 50 Hz sinusoid at 10 kHz moves a unit signal by at most w*Ts
    for (int k = 0; k < 3; ++k)
        EXPECT_LT(std::abs(after.i_poc[k] - before.i_poc[k]), 2.0 * p.w1() * kTs);
}

TEST(Network, KclResidualStaysTiny)
{
    NetworkParams p;
    Network net(p, kTs, {FaultSide::Forward, 0.3});
    const Phasor e = std::polar(1.0 / sqrt2, rad(10.0));
    net.initialize_steady_state(e);
    double worst = 0.0;
    for (int k = 0; k < 2000; ++k) {
        if (k == 500) net.apply_fault({FaultType::BCG, 0.3, 5.0, 0.05, 1e9, FaultSide::Forward});
        if (k == 1500) net.clear_fault();
        net.step(balanced(e, p.w1(), net.time() + kTs));
        worst = std::max(worst, net.kcl_residual());
    }
    EXPECT_LT(worst, 1e-9);
}

TEST(Network, PassiveNetworkNeverGainsEnergy)
{
    NetworkParams p;
    p.z_g = {0.01, 0.1298};
    Network net(p, kTs, {FaultSide::Forward, 0.4});
    net.initialize_steady_state(std::polar(1.0 / sqrt2, rad(30.0)));
    net.apply_fault({FaultType::ABG, 0.4, 10.0, 0.0, 1e9, FaultSide::Forward});
    net.apply_grid_disturbance({0.0, 0.0, 0.0, 1e9});
    net.step({0.0, 0.0, 0.0}); // the first step still averages the old EMFs
    double prev = net.stored_energy();
    EXPECT_GT(prev, 0.0);
    for (int k = 0; k < 3000; ++k) {
        net.step({0.0, 0.0, 0.0});
        const double e = net.stored_energy();
        EXPECT_LE(e, prev * (1.0 + 1e-12) + 1e-15);
        prev = e;
    }
    EXPECT_LT(prev, 0.5 * net.stored_energy() + 1e-3);
}

TEST(Network, SeriesRlEnergizationMatchesClosedForm)
{
    NetworkParams p;
    p.line_km = 0.0;
    p.v_g = 0.0;
    p.z_g = {0.05, 0.1298};
    Network net(p, kTs);
    const double w = p.w1();
    const double L = (p.x_f + p.x_t + p.z_g.imag()) / w;
    const double R = p.z_g.real();
    const std::array<double, 3> u{1.0, -0.5, -0.5};
    double worst = 0.0;
    for (int k = 0; k < 5000; ++k) {
        const auto &s = net.step(u);
        if (s.t < 0.02) continue; // the step is seen as a one-sample ramp
        const double ref = (1.0 / R) * (1.0 - std::exp(-s.t * R / L));
        worst = std::max(worst, std::abs(s.i_t[0] - ref) / ref);
        EXPECT_NEAR(s.i_t[1], -0.5 * s.i_t[0], 1e-9);
    }
    EXPECT_LT(worst, 0.005);
}

TEST(Network, ZeroLengthLineRuns)
{
    NetworkParams p;
    p.line_km = 0.0;
    const Phasor e = std::polar(1.0 / sqrt2, rad(10.0));
    Network net(p, kTs);
    net.initialize_steady_state(e);
    const auto c = run_ideal(net, e, 0.1, 0.05);
    const auto i = cycle_sequence(c.i_poc, p.w1(), c.t0);
    const Phasor i_ref = (e - p.v_g / sqrt2) / (unit_j * (p.x_f + p.x_t) + p.z_g);
    EXPECT_LT(std::abs(i.positive - i_ref), 1e-3 * std::abs(i_ref));
}

TEST(Network, DeltaWindingBlocksZeroSequence)
{
    NetworkParams p;
    Network net(p, kTs, {FaultSide::Forward, 0.1});
    const Phasor e = std::polar(1.0 / sqrt2, rad(10.0));
    net.initialize_steady_state(e);
    net.apply_fault({FaultType::AG, 0.1, 0.0, 0.0, 1e9, FaultSide::Forward});
    double i0_inv = 0.0, i0_gnd = 0.0;
    for (int k = 0; k < 1000; ++k) {
        net.step(balanced(e, p.w1(), net.time() + kTs));
        i0_inv = std::max(i0_inv, std::abs(net.inverter_zero_sequence_current()));
        i0_gnd = std::max(i0_gnd, std::abs(net.transformer_ground_current()));
    }
    EXPECT_LT(i0_inv, 1e-9);
    EXPECT_GT(i0_gnd, 0.1);
}

TEST(Network, BoltedThreePhaseFaultAtBusCollapsesVoltage)
{
    NetworkParams p;
    Network net(p, kTs, {FaultSide::Forward, 0.0});
    const Phasor e = std::polar(1.0 / sqrt2, 0.0);
    net.initialize_steady_state(e);
    net.apply_fault({FaultType::ABC, 0.0, 0.0, 0.0, 1e9, FaultSide::Forward});
    double vmax = 0.0;
    for (int k = 0; k < 600; ++k) {
        const auto &s = net.step(balanced(e, p.w1(), net.time() + kTs));
        if (k > 400)
            for (double v : s.v_poc)
                vmax = std::max(vmax, std::abs(v));
    }
    EXPECT_LT(vmax, 1e-3);
}

TEST(Network, FaultLocationMustMatchSplitPoint)
{
    Network net(NetworkParams{}, kTs, {FaultSide::Forward, 0.5});
    EXPECT_THROW(net.apply_fault({FaultType::AG, 0.2, 0.0, 0.0, 1e9, FaultSide::Forward}), std::invalid_argument);
    EXPECT_THROW(net.apply_fault({FaultType::AG, 0.5, 0.0, 0.0, 1e9, FaultSide::Reverse}), std::invalid_argument);
}

TEST(Network, GridDisturbanceWindow)
{
    NetworkParams p;
    Network net(p, kTs);
    net.apply_grid_disturbance({0.7, -60.0, 0.1, 0.3});
    EXPECT_NEAR(std::abs(net.grid_phasor(0.05)), 1.0 / sqrt2, 1e-12);
    EXPECT_NEAR(std::abs(net.grid_phasor(0.2)), 0.7 / sqrt2, 1e-12);
    EXPECT_NEAR(angle_deg(net.grid_phasor(0.2)), -60.0, 1e-9);
    EXPECT_NEAR(angle_deg(net.grid_phasor(0.3)), 0.0, 1e-9);
    const auto e = net.grid_emf(0.2);
    EXPECT_NEAR(e[0], 0.7 * std::cos(p.w1() * 0.2 - pi / 3.0), 1e-12);
    EXPECT_NEAR(e[0] + e[1] + e[2], 0.0, 1e-12);
    EXPECT_THROW(net.apply_grid_disturbance({1.2, 0.0, 0.0, 1.0}), std::invalid_argument);
}

// Time-domain fault steady state against the analytic solution of the same
// circuit with an ideal inverter EMF.
class NetworkVsOracle : public ::testing::TestWithParam<std::tuple<FaultType, FaultSide, double>> {};

TEST_P(NetworkVsOracle, FaultSteadyState)
{
    const auto [type, side, m] = GetParam();
    NetworkParams p;
    const Phasor e = std::polar(1.03 / sqrt2, rad(12.0));
    const double r_f = 20.0;
    Network net(p, kTs, {side, m});
    net.initialize_steady_state(e);
    net.apply_fault({type, m, r_f, 0.0, 1e9, side});
    const auto c = run_ideal(net, e, 1.0, 0.9);
    const auto v = cycle_sequence(c.v_poc, p.w1(), c.t0);
    const auto i = cycle_sequence(c.i_poc, p.w1(), c.t0);

    const auto ref = fault_network_solve(ideal_source(p, e), oracle_of(p), {type, m, r_f, side});
    auto check = [](Phasor got, Phasor want, const char *what) {
        EXPECT_LT(std::abs(got - want), 2e-3 * std::max(std::abs(want), 0.05)) << what << " got " << got << " want " << want;
    };
    check(v.positive, ref.v_bus1.positive, "v1");
    check(v.negative, ref.v_bus1.negative, "v2");
    check(v.zero, ref.v_bus1.zero, "v0");
    check(i.positive, ref.i_bus1.positive, "i1");
    check(i.negative, ref.i_bus1.negative, "i2");
    check(i.zero, ref.i_bus1.zero, "i0");
}

INSTANTIATE_TEST_SUITE_P(Types, NetworkVsOracle,
                         ::testing::Combine(::testing::Values(FaultType::AG, FaultType::BC, FaultType::BCG,
                                                              FaultType::ABC, FaultType::CAG),
                                            ::testing::Values(FaultSide::Forward, FaultSide::Reverse),
                                            ::testing::Values(0.0, 0.4, 1.0)));
