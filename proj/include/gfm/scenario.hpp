#ifndef GFM_SCENARIO_HPP
#define GFM_SCENARIO_HPP

// Closed-loop scenario execution: network, controller and relay stepped in
// that order on one fixed time grid, plus summaries, CSV output and the
// fault-matrix batch runner.

#include "gfm/config.hpp"
#include "gfm/controller.hpp"
#include "gfm/network.hpp"
#include "gfm/oracle.hpp"
#include "gfm/relay.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace gfm {

/// Steady operating point of the inverter against the grid for the
/// configured power references (amplitude-based alpha-beta quantities,
/// inverter side).
struct OperatingPoint {
    Phasor e;   // internal EMF amplitude phasor at t = 0
    Phasor i_t; // terminal current amplitude phasor
    Phasor v_t;
    double p = 0.0, q = 0.0;
};

inline OperatingPoint operating_point(const NetworkParams &net, const ControllerParams &c)
{
    const double n = net.n_pu();
    const Phasor z_grid_side = unit_j * net.x_t + net.z_l1() + net.z_g;
    const Phasor v_g = std::polar(net.v_g, rad(net.v_g_angle_deg));
    auto eval = [&](double mag, double ang) {
        OperatingPoint op;
        op.e = std::polar(mag, ang);
        const Phasor z_loop = n * n * Phasor(net.r_filter, net.x_f) + z_grid_side;
        const Phasor i_grid = (n * op.e - v_g) / z_loop;
        op.i_t = n * i_grid;
        op.v_t = op.e - Phasor(net.r_filter, net.x_f) * op.i_t;
        const Phasor s = op.v_t * std::conj(op.i_t);
        op.p = s.real();
        op.q = s.imag();
        return op;
    };
    // unknowns: EMF magnitude and angle; equations: P = P_ref, E = V_n1 - K_q (Q - Q_ref)
    double mag = c.v_n1, ang = rad(net.v_g_angle_deg) + 0.1;
    auto residual = [&](double m, double a) {
        const auto op = eval(m, a);
        return std::array<double, 2>{op.p - c.p_ref, m - (c.v_n1 - c.k_q * (op.q - c.q_ref))};
    };
    for (int it = 0; it < 50; ++it) {
        const auto r = residual(mag, ang);
        if (std::hypot(r[0], r[1]) < 1e-13) break;
        const double h = 1e-7;
        const auto rm = residual(mag + h, ang), ra = residual(mag, ang + h);
        const double j00 = (rm[0] - r[0]) / h, j01 = (ra[0] - r[0]) / h;
        const double j10 = (rm[1] - r[1]) / h, j11 = (ra[1] - r[1]) / h;
        const double det = j00 * j11 - j01 * j10;
        if (std::abs(det) < 1e-14) throw std::runtime_error("operating point: singular Jacobian");
        mag -= (r[0] * j11 - r[1] * j01) / det;
        ang -= (j00 * r[1] - j10 * r[0]) / det;
    }
    const auto r = residual(mag, ang);
    if (std::hypot(r[0], r[1]) > 1e-9) throw std::runtime_error("operating point: no steady solution for P_ref");
    return eval(mag, ang);
}

struct TraceRow {
    double t = 0.0;
    std::array<double, 3> v_poc{}, i_poc{}, v_t{}, i_t{};
    double i_max = 0.0, i_t1 = 0.0, i_t2 = 0.0;
    bool s_f = false, s_p = false, transient = false;
    ControllerMode mode = ControllerMode::NormalSlow;
    double x_v1 = 0.0, x_v2 = 0.0;
    double delta_deg = std::numeric_limits<double>::quiet_NaN(); // POC minus grid EMF, positive sequence
    double p1 = 0.0;
    Phasor e_ref1{}; // internal voltage reference, RMS phasor in the w1*t frame
};

// NaN marks an element the fault type does not exercise.
struct ZoneOccupancy {
    double dphi1 = 0.0, phi2 = 0.0, phi0 = 0.0, dd21 = 0.0, d20 = 0.0;
    int steps = 0;

    double min_all() const
    {
        double m = 1.0;
        for (double x : {dphi1, phi2, phi0, dd21, d20})
            if (!std::isnan(x)) m = std::min(m, x);
        return m;
    }
};

struct ModeEvent {
    double t;
    std::string what; // s_f_rise, s_f_fall, s_p_rise, s_p_fall
};

struct ScenarioSummary {
    double t_event = std::numeric_limits<double>::quiet_NaN();
    double t_clear = std::numeric_limits<double>::quiet_NaN();
    double window_start = 0.0, window_end = 0.0;
    ZoneOccupancy occupancy;
    double max_abs_i_t = 0.0;
    double max_abs_i_poc = 0.0;
    std::vector<ModeEvent> events;
    // steady window (last cycle before the window end)
    std::optional<Phasor> dz_e1;        // -dv1/di1 from relay phasors
    std::optional<Phasor> dz_e1_closed; // j n^2 X_f + j X_T + n^2 Z_v1 with the active X_v1
    std::optional<double> dz_error;   // |dz - closed| / |closed|
    double steady_i_t1 = 0.0, steady_i_t2 = 0.0;
    double delta_pre_deg = std::numeric_limits<double>::quiet_NaN();
    double delta_end_deg = std::numeric_limits<double>::quiet_NaN();
    double max_delta_excursion_deg = 0.0;
    bool passed = true;
    std::vector<std::string> failed_checks;
};

struct ScenarioResult {
    ScenarioConfig config;
    std::vector<TraceRow> trace;
    std::vector<RelayVerdict> verdicts;
    ScenarioSummary summary;
    // relay phasors at the end of the steady window
    SequenceSet v_bus1, i_bus1;
    Phasor e_ref1_steady{};
    double x_v1_steady = 0.0, x_v2_steady = 0.0;
    double r_vt_steady = 0.0;
};

namespace detail {

inline bool correct_direction(Direction d, FaultSide side)
{
    return d == (side == FaultSide::Forward ? Direction::Forward : Direction::Reverse);
}

inline bool in_zone_of(const std::vector<ZoneSector> &zones, double angle, FaultType t)
{
    if (std::isnan(angle)) return false;
    for (const auto &s : zones)
        if (s.contains(angle)) return std::find(s.labels.begin(), s.labels.end(), t) != s.labels.end();
    return false;
}

} // namespace detail

/// Fraction of relay steps in [t0, t1] at which each element sits in the
/// zone that matches the applied fault.
inline ZoneOccupancy zone_occupancy(const std::vector<RelayVerdict> &v, const ZoneTable &z, const FaultSpec &f,
                                    double t0, double t1)
{
    ZoneOccupancy o;
    for (const auto &r : v) {
        if (r.t < t0 || r.t > t1) continue;
        ++o.steps;
        o.dphi1 += detail::correct_direction(r.dir_incremental, f.side);
        o.phi2 += detail::correct_direction(r.dir_neg_seq, f.side);
        o.phi0 += detail::correct_direction(r.dir_zero_seq, f.side);
        o.dd21 += detail::in_zone_of(z.d21, r.dd21, f.type);
        o.d20 += detail::in_zone_of(z.d20, r.d20, f.type);
    }
    if (o.steps > 0) {
        const double n = o.steps;
        o.dphi1 /= n, o.phi2 /= n, o.phi0 /= n, o.dd21 /= n, o.d20 /= n;
    }
    const bool balanced = f.type == FaultType::ABC || f.type == FaultType::ABCG;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (balanced) o.phi2 = o.dd21 = nan;
    if (balanced || !is_ground_fault(f.type)) o.phi0 = o.d20 = nan;
    return o;
}

/// Runs one scenario. The network starts in the sinusoidal steady state of
/// the configured operating point; the controller is warmed up on the same
/// steady waveforms before t = 0.
inline ScenarioResult run_scenario(const ScenarioConfig &cfg)
{
    cfg.validate();
    ScenarioResult res;
    res.config = cfg;
    const double ts = cfg.ts;
    const double w = cfg.network.w1();
    const auto op = operating_point(cfg.network, cfg.controller);

    FaultPlacement placement;
    if (cfg.fault) placement = {cfg.fault->side, cfg.fault->m};
    Network net(cfg.network, ts, placement);
    if (cfg.disturbance) net.apply_grid_disturbance(*cfg.disturbance);
    net.initialize_steady_state(op.e / sqrt2);

    GfmController ctl(cfg.controller, ts);
    Relay relay(cfg.relay, ts);
    const double n_pu = cfg.network.n_pu();

    // warm-up on the analytic steady state, then pin the loop states
    auto steady = [&](Phasor x, double t) {
        std::array<double, 3> out{};
        for (int k = 0; k < 3; ++k)
            out[k] = (x * std::polar(1.0, w * t - 2.0 * pi * k / 3.0)).real();
        return out;
    };
    const int warm = static_cast<int>(2 * samples_per_cycle(w, ts));
    for (int k = -warm; k < 0; ++k)
        ctl.step(k * ts, steady(op.v_t, k * ts), steady(op.i_t, k * ts));
    ctl.initialize(std::arg(op.e), op.q, std::abs(op.i_t), 0.0);

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> noise(-1.0, 1.0);
    auto measure = [&](const std::array<double, 3> &x) {
        if (cfg.noise == 0.0) return x;
        std::array<double, 3> y{};
        for (int k = 0; k < 3; ++k)
            y[k] = x[k] * (1.0 + cfg.noise * noise(rng));
        return y;
    };

    const auto &s0 = net.sample();
    auto out = ctl.step(0.0, s0.v_t, measure(s0.i_t));
    relay.step(0.0, s0.v_poc, s0.i_poc);

    auto &sum = res.summary;
    double t_event = std::numeric_limits<double>::quiet_NaN(), t_clear = cfg.horizon;
    if (cfg.fault) t_event = cfg.fault->t_on, t_clear = std::min(cfg.fault->t_off, cfg.horizon);
    if (cfg.disturbance) t_event = cfg.disturbance->t_on, t_clear = std::min(cfg.disturbance->t_off, cfg.horizon);
    sum.t_event = t_event;
    sum.t_clear = t_clear;
    const bool has_event = !std::isnan(t_event);
    if (has_event) {
        sum.window_start = t_event + cfg.relay.t_r;
        sum.window_end = std::min({t_event + cfg.controller.t_p, t_clear, cfg.horizon});
    }
    // steady phasors are read one step before the window end
    const double t_ss = sum.window_end - 2.0 * ts;
    bool captured = false;

    const long long steps = std::llround(cfg.horizon / ts);
    res.trace.reserve(static_cast<std::size_t>(steps));
    res.verdicts.reserve(static_cast<std::size_t>(steps));
    const auto cycle = static_cast<long long>(samples_per_cycle(w, ts));
    bool fault_on = false;
    for (long long k = 1; k <= steps; ++k) {
        const double t = static_cast<double>(k) * ts;
        if (cfg.fault) {
            const bool want = t > cfg.fault->t_on + 1e-12 && t <= cfg.fault->t_off + 1e-12;
            if (want != fault_on) {
                if (want) net.apply_fault(*cfg.fault);
                else net.clear_fault();
                fault_on = want;
            }
        }
        const auto &s = net.step(out.u);
        out = ctl.step(t, s.v_t, measure(s.i_t));
        const auto &verdict = relay.step(t, s.v_poc, s.i_poc);

        TraceRow row;
        row.t = t;
        row.v_poc = s.v_poc;
        row.i_poc = s.i_poc;
        row.v_t = s.v_t;
        row.i_t = s.i_t;
        row.i_max = out.i_max;
        row.i_t1 = out.i_t1;
        row.i_t2 = out.i_t2;
        row.s_f = out.s_f;
        row.s_p = out.s_p;
        row.transient = out.transient;
        row.mode = out.mode;
        row.x_v1 = out.x_v1;
        row.x_v2 = out.x_v2;
        row.p1 = out.p1;
        const Phasor v1 = relay.voltage().positive;
        if (k >= cycle && std::abs(v1) > 1e-6) row.delta_deg = wrap_deg(angle_deg(v1) - angle_deg(net.grid_phasor(t)));
        row.e_ref1 = std::polar(out.e_ref1 / sqrt2, out.theta - w * (t + ts));
        res.trace.push_back(row);
        res.verdicts.push_back(verdict);

        if (has_event && !captured && t >= t_ss - 1e-9 * ts) {
            captured = true;
            res.v_bus1 = relay.voltage();
            res.i_bus1 = relay.current();
            res.e_ref1_steady = row.e_ref1;
            res.x_v1_steady = row.x_v1;
            res.x_v2_steady = row.x_v2;
            res.r_vt_steady = out.r_vt;
            sum.steady_i_t1 = row.i_t1;
            sum.steady_i_t2 = row.i_t2;
            // behind a reverse fault the relay looks into the network, not the inverter
            const bool sees_inverter = !cfg.fault || cfg.fault->side == FaultSide::Forward;
            if (sees_inverter && std::abs(relay.di1) >= cfg.relay.floor) {
                sum.dz_e1 = -relay.dv1 / relay.di1;
                IbrSource ibr;
                ibr.n = n_pu;
                ibr.x_f = cfg.network.x_f;
                ibr.x_t = cfg.network.x_t;
                ibr.z_v1 = Phasor(res.r_vt_steady, res.x_v1_steady);
                sum.dz_e1_closed = interoperable_dz_e1(ibr);
                sum.dz_error = std::abs(*sum.dz_e1 - *sum.dz_e1_closed) / std::abs(*sum.dz_e1_closed);
            }
        }
    }

    for (const auto &r : res.trace)
        for (int k = 0; k < 3; ++k) {
            sum.max_abs_i_t = std::max(sum.max_abs_i_t, std::abs(r.i_t[k]));
            sum.max_abs_i_poc = std::max(sum.max_abs_i_poc, std::abs(r.i_poc[k]));
        }
    for (std::size_t k = 1; k < res.trace.size(); ++k) {
        const auto &a = res.trace[k - 1], &b = res.trace[k];
        if (a.s_f != b.s_f) sum.events.push_back({b.t, b.s_f ? "s_f_rise" : "s_f_fall"});
        if (a.s_p != b.s_p) sum.events.push_back({b.t, b.s_p ? "s_p_rise" : "s_p_fall"});
    }
    if (has_event) {
        if (cfg.fault)
            sum.occupancy = zone_occupancy(res.verdicts, relay.zones(), *cfg.fault, sum.window_start, sum.window_end);
        for (const auto &r : res.trace)
            if (r.t < t_event - 0.05 && !std::isnan(r.delta_deg)) sum.delta_pre_deg = r.delta_deg;
        if (!res.trace.empty()) sum.delta_end_deg = res.trace.back().delta_deg;
        if (!std::isnan(sum.delta_pre_deg))
            for (const auto &r : res.trace)
                if (r.t > t_event && !std::isnan(r.delta_deg))
                    sum.max_delta_excursion_deg =
                        std::max(sum.max_delta_excursion_deg, std::abs(wrap_deg(r.delta_deg - sum.delta_pre_deg)));
    }

    const auto &chk = cfg.checks;
    auto require = [&](bool ok, const std::string &name) {
        if (!ok) {
            sum.passed = false;
            sum.failed_checks.push_back(name);
        }
    };
    if (chk.min_zone_fraction) require(sum.occupancy.min_all() >= *chk.min_zone_fraction, "min_zone_fraction");
    if (chk.max_peak_current) require(sum.max_abs_i_t <= *chk.max_peak_current, "max_peak_current");
    if (chk.max_dz_error) require(sum.dz_error && *sum.dz_error <= *chk.max_dz_error, "max_dz_error");
    return res;
}

inline OracleNetwork oracle_network(const NetworkParams &p)
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

/// Phasor-domain source that reproduces the closed-loop inverter in the
/// steady fault window: the reference EMF and virtual impedances it settled on.
inline IbrSource oracle_equivalent_source(const ScenarioResult &r)
{
    IbrSource s;
    s.e_pre1 = r.e_ref1_steady;
    s.z_v1 = Phasor(r.r_vt_steady, r.x_v1_steady);
    s.z_v2 = Phasor(r.r_vt_steady, r.x_v2_steady);
    s.x_f = r.config.network.x_f;
    s.x_t = r.config.network.x_t;
    s.n = r.config.network.n_pu();
    s.mode = IbrMode::Conventional;
    return s;
}

struct OracleComparison {
    OracleSolution want;
    double max_rel_mag = 0.0;   // over sequence quantities above the floor
    double max_angle_deg = 0.0; // over sequence quantities above the floor
    double max_abs_small = 0.0; // absolute error of quantities below the floor
    bool pass(double rel = 0.02, double deg = 2.0, double small = 1e-3) const
    {
        return max_rel_mag <= rel && max_angle_deg <= deg && max_abs_small <= small;
    }
};

/// Bus-1 sequence phasors of a fault run against the oracle solution of
/// the equivalent source.
inline OracleComparison oracle_compare(const ScenarioResult &r, double floor = 0.05)
{
    if (!r.config.fault) throw std::invalid_argument("oracle comparison needs a fault scenario");
    OracleComparison c;
    c.want = fault_network_solve(oracle_equivalent_source(r), oracle_network(r.config.network),
                                 FaultLocation::from(*r.config.fault));
    auto one = [&](Phasor got, Phasor want) {
        if (std::abs(want) >= floor) {
            c.max_rel_mag = std::max(c.max_rel_mag, std::abs(std::abs(got) / std::abs(want) - 1.0));
            c.max_angle_deg = std::max(c.max_angle_deg, std::abs(wrap_deg(angle_deg(got) - angle_deg(want))));
        } else {
            c.max_abs_small = std::max(c.max_abs_small, std::abs(got - want));
        }
    };
    const auto &w = c.want;
    one(r.v_bus1.positive, w.v_bus1.positive);
    one(r.v_bus1.negative, w.v_bus1.negative);
    one(r.v_bus1.zero, w.v_bus1.zero);
    one(r.i_bus1.positive, w.i_bus1.positive);
    one(r.i_bus1.negative, w.i_bus1.negative);
    one(r.i_bus1.zero, w.i_bus1.zero);
    return c;
}

struct FaultPrediction {
    OracleSolution solution;
    IbrSource source;
    double x_v1 = 0.0, x_v2 = 0.0;
    double i_t1 = 0.0, i_t2 = 0.0; // inverter-side sequence amplitudes
};

namespace detail {

// Inverter-side sequence current amplitudes for an oracle solution.
inline std::pair<double, double> inverter_currents(const IbrSource &src, const OracleSolution &sol)
{
    const double n2 = src.n * src.n;
    const Phasor z1 = n2 * (src.z_v1 + unit_j * src.x_f) + unit_j * src.x_t;
    const Phasor z2 = n2 * (src.z_v2 + unit_j * src.x_f) + unit_j * src.x_t;
    const Phasor i1 = (src.n * sol.e_ref1 - sol.v_bus1.positive) / z1;
    const Phasor i2 = -sol.v_bus1.negative / z2;
    return {sqrt2 * src.n * std::abs(i1), sqrt2 * src.n * std::abs(i2)};
}

} // namespace detail

/// Phasor-domain prediction of the steady fault state under the configured
/// controller: virtual reactances consistent with the currents they produce.
inline FaultPrediction predict_fault_state(const ScenarioConfig &cfg)
{
    if (!cfg.fault) throw std::invalid_argument("fault prediction needs a fault scenario");
    const auto op = operating_point(cfg.network, cfg.controller);
    const auto &c = cfg.controller;
    FaultPrediction out;
    out.source.e_pre1 = op.e / sqrt2;
    out.source.x_f = cfg.network.x_f;
    out.source.x_t = cfg.network.x_t;
    out.source.n = cfg.network.n_pu();
    out.source.mode = c.interoperable_enabled ? IbrMode::Interoperable : IbrMode::Conventional;
    const auto net = oracle_network(cfg.network);
    const auto loc = FaultLocation::from(*cfg.fault);
    auto solve = [&](double x1, double x2) {
        IbrSource s = out.source;
        s.z_v1 = {0.0, x1};
        s.z_v2 = {0.0, x2};
        const auto sol = fault_network_solve(s, net, loc);
        return std::pair{sol, detail::inverter_currents(s, sol)};
    };
    // each reactance solves x = k max(0, I(x) - I_th) with I decreasing in x
    auto settle = [&](double k, double i_th, double other, bool first) {
        auto g = [&](double x) {
            const auto cur = solve(first ? x : other, first ? other : x).second;
            const double i = first ? cur.first : cur.second;
            return x - k * std::max(0.0, i - i_th);
        };
        if (g(0.0) >= 0.0) return 0.0;
        double lo = 0.0, hi = 1.0;
        while (g(hi) < 0.0) hi *= 2.0;
        for (int it = 0; it < 80; ++it) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) < 0.0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    double x1 = 0.0, x2 = 0.0;
    for (int it = 0; it < 100; ++it) {
        const double x1n = settle(c.k_x1, c.i_thx1, x2, true);
        const double x2n = settle(c.k_x2, c.i_thx2, x1n, false);
        const bool done = std::abs(x1n - x1) < 1e-12 && std::abs(x2n - x2) < 1e-12;
        x1 = x1n, x2 = x2n;
        if (done) break;
    }
    out.x_v1 = x1;
    out.x_v2 = x2;
    out.source.z_v1 = {0.0, x1};
    out.source.z_v2 = {0.0, x2};
    const auto [sol, cur] = solve(x1, x2);
    out.solution = sol;
    out.i_t1 = cur.first;
    out.i_t2 = cur.second;
    return out;
}

namespace detail {

inline std::string num(double x)
{
    if (std::isnan(x)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

inline std::string bad_io(const std::filesystem::path &p) { return "cannot write " + p.string(); }

} // namespace detail

inline constexpr const char *trace_header =
    "t,v_poc_a,v_poc_b,v_poc_c,i_poc_a,i_poc_b,i_poc_c,v_t_a,v_t_b,v_t_c,i_t_a,i_t_b,i_t_c,"
    "i_max,s_f,s_p,x_v1,x_v2,mode,delta_deg,p1,e_ref1_mag,e_ref1_deg";

inline constexpr const char *relay_header =
    "t,dphi1,phi2,phi0,dd21,d20,dir_incremental,dir_neg_seq,dir_zero_seq,fault_type,pickup";

inline std::string summary_text(const ScenarioResult &r)
{
    using detail::num;
    const auto &s = r.summary;
    std::ostringstream os;
    os << "scenario " << r.config.name << "\n";
    os << "event_time " << num(s.t_event) << "\n";
    os << "clear_time " << num(s.t_clear) << "\n";
    os << "window " << num(s.window_start) << " " << num(s.window_end) << "\n";
    os << "zone_fraction dphi1 " << num(s.occupancy.dphi1) << "\n";
    os << "zone_fraction phi2 " << num(s.occupancy.phi2) << "\n";
    os << "zone_fraction phi0 " << num(s.occupancy.phi0) << "\n";
    os << "zone_fraction dd21 " << num(s.occupancy.dd21) << "\n";
    os << "zone_fraction d20 " << num(s.occupancy.d20) << "\n";
    os << "max_abs_i_t " << num(s.max_abs_i_t) << "\n";
    os << "max_abs_i_poc " << num(s.max_abs_i_poc) << "\n";
    os << "steady_i_t1 " << num(s.steady_i_t1) << "\n";
    os << "steady_i_t2 " << num(s.steady_i_t2) << "\n";
    for (const auto &e : s.events)
        os << "event " << e.what << " " << num(e.t) << "\n";
    if (s.dz_e1) {
        os << "dz_e1 " << num(s.dz_e1->real()) << " " << num(s.dz_e1->imag()) << "\n";
        os << "dz_e1_closed_form " << num(s.dz_e1_closed->real()) << " " << num(s.dz_e1_closed->imag()) << "\n";
        os << "dz_e1_rel_error " << num(*s.dz_error) << "\n";
    }
    os << "delta_pre_deg " << num(s.delta_pre_deg) << "\n";
    os << "delta_end_deg " << num(s.delta_end_deg) << "\n";
    os << "max_delta_excursion_deg " << num(s.max_delta_excursion_deg) << "\n";
    os << "result " << (s.passed ? "pass" : "fail");
    for (const auto &f : s.failed_checks)
        os << " " << f;
    os << "\n";
    return os.str();
}

/// Writes trace.csv, relay.csv and summary.txt into dir (created if needed).
inline void emit_csv(const ScenarioResult &r, const std::filesystem::path &dir)
{
    using detail::num;
    std::filesystem::create_directories(dir);
    {
        const auto p = dir / "trace.csv";
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error(detail::bad_io(p));
        f << trace_header << "\n";
        for (const auto &row : r.trace) {
            f << num(row.t);
            for (const auto *ch : {&row.v_poc, &row.i_poc, &row.v_t, &row.i_t})
                for (double x : *ch)
                    f << ',' << num(x);
            f << ',' << num(row.i_max) << ',' << row.s_f << ',' << row.s_p << ',' << num(row.x_v1) << ','
              << num(row.x_v2) << ',' << to_string(row.mode) << ',' << num(row.delta_deg) << ',' << num(row.p1)
              << ',' << num(std::abs(row.e_ref1)) << ',' << num(angle_deg(row.e_ref1)) << "\n";
        }
        if (!f) throw std::runtime_error(detail::bad_io(p));
    }
    {
        const auto p = dir / "relay.csv";
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error(detail::bad_io(p));
        f << relay_header << "\n";
        for (const auto &v : r.verdicts) {
            f << num(v.t) << ',' << num(v.dphi1) << ',' << num(v.phi2) << ',' << num(v.phi0) << ',' << num(v.dd21)
              << ',' << num(v.d20) << ',' << to_string(v.dir_incremental) << ',' << to_string(v.dir_neg_seq) << ','
              << to_string(v.dir_zero_seq) << ','
              << (v.pickup ? (v.selected_fault_type ? std::string(to_string(*v.selected_fault_type)) : "unresolved")
                           : "")
              << ',' << v.pickup << "\n";
        }
        if (!f) throw std::runtime_error(detail::bad_io(p));
    }
    {
        const auto p = dir / "summary.txt";
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error(detail::bad_io(p));
        f << summary_text(r);
        if (!f) throw std::runtime_error(detail::bad_io(p));
    }
}

struct MatrixRow {
    std::string name;
    bool ok = false;    // ran to completion
    std::string error;  // set when the run threw
    ScenarioSummary summary;
};

/// Runs each scenario in isolation. A failing scenario is reported in its
/// row; the rest of the batch still runs.
inline std::vector<MatrixRow> run_matrix(const std::vector<ScenarioConfig> &set,
                                         const std::function<void(const ScenarioResult &)> &each = {})
{
    std::vector<MatrixRow> rows;
    rows.reserve(set.size());
    for (const auto &cfg : set) {
        MatrixRow row;
        row.name = cfg.name;
        try {
            const auto r = run_scenario(cfg);
            row.summary = r.summary;
            row.ok = true;
            if (each) each(r);
        } catch (const std::exception &e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Every fault type on both sides of bus 1 at three locations, derived from
/// a base scenario.
inline std::vector<ScenarioConfig> fault_matrix(const ScenarioConfig &base,
                                                const std::vector<double> &locations = {0.01, 0.5, 0.99})
{
    std::vector<ScenarioConfig> out;
    const FaultSpec proto = base.fault.value_or(FaultSpec{});
    for (auto type : all_fault_types)
        for (auto side : {FaultSide::Forward, FaultSide::Reverse})
            for (double m : locations) {
                ScenarioConfig c = base;
                c.disturbance.reset();
                c.fault = proto;
                c.fault->type = type;
                c.fault->side = side;
                c.fault->m = m;
                c.name = std::string(to_string(type)) + "_" + std::string(to_string(side)) + "_m" + detail::num(m);
                out.push_back(std::move(c));
            }
    return out;
}

inline std::string matrix_table(const std::vector<MatrixRow> &rows)
{
    using detail::num;
    std::ostringstream os;
    os << "name,ran,passed,dphi1,phi2,phi0,dd21,d20,max_abs_i_t,dz_e1_rel_error,error\n";
    for (const auto &r : rows) {
        const auto &s = r.summary;
        os << r.name << ',' << r.ok << ',' << (r.ok && s.passed) << ',' << num(s.occupancy.dphi1) << ','
           << num(s.occupancy.phi2) << ',' << num(s.occupancy.phi0) << ',' << num(s.occupancy.dd21) << ','
           << num(s.occupancy.d20) << ',' << num(s.max_abs_i_t) << ','
           << (s.dz_error ? num(*s.dz_error) : std::string()) << ',' << r.error << "\n";
    }
    return os.str();
}

} // namespace gfm

#endif
