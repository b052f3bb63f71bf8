#ifndef GFM_CONFIG_HPP
#define GFM_CONFIG_HPP

// Scenario configuration: JSON loading with strict keys, bundled presets and
// load-time validation.

#include "gfm/controller.hpp"
#include "gfm/fault.hpp"
#include "gfm/network.hpp"
#include "gfm/relay.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gfm {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Optional pass/fail checks evaluated on a run.
struct ScenarioChecks {
    std::optional<double> min_zone_fraction; // every supervising element in its correct zone
    std::optional<double> max_peak_current;  // inverter-side instantaneous, p.u.
    std::optional<double> max_dz_error;    // relative |dZ - closed form| in the steady window
};

struct ScenarioConfig {
    std::string name = "scenario";
    NetworkParams network;
    ControllerParams controller;
    RelaySettings relay;
    std::optional<FaultSpec> fault;
    std::optional<GridDisturbance> disturbance;
    double horizon = 2.0;
    double ts = 1e-4;
    std::uint64_t seed = 0;
    double noise = 0.0; // uniform current-measurement noise, fraction of the reading
    std::string output_dir = "out";
    ScenarioChecks checks;

    void validate() const;
};

inline void ScenarioConfig::validate() const
{
    auto fail = [](const std::string &what) { throw ConfigError(what); };
    try {
        network.validate();
        controller.validate();
        relay.validate();
        if (fault) fault->validate();
        if (disturbance) disturbance->validate();
    } catch (const std::invalid_argument &e) {
        fail(e.what());
    }
    if (fault && disturbance) fail("stimulus: give either fault or disturbance, not both");
    if (!(ts > 0.0)) fail("ts must be positive");
    if (!(horizon > ts)) fail("horizon must exceed ts");
    if (!(noise >= 0.0 && noise < 0.5)) fail("noise must lie in [0, 0.5)");
    if (std::abs(controller.w1 - network.w1()) > 1e-9 * network.w1())
        fail("controller.w1 must match 2*pi*network.f1");
    if (std::abs(controller.x_f - network.x_f) > 1e-9 * network.x_f)
        fail("controller.x_f must match network.x_f");
    if (std::abs(relay.w1 - network.w1()) > 1e-9 * network.w1()) fail("relay.w1 must match 2*pi*network.f1");
    // R_vt has to be gone before the relay reports
    if (controller.t_r > relay.t_r + 1e-12) fail("controller.t_r must not exceed relay.t_r");
    try {
        samples_per_cycle(network.w1(), ts);
    } catch (const std::invalid_argument &e) {
        fail(std::string("ts: ") + e.what());
    }
    GainRequirement g;
    try {
        g = gain_requirements(controller.design_dv1, controller.design_v_t2, controller.design_i_tpre1, network.x_f,
                              controller);
    } catch (const std::invalid_argument &e) {
        fail(std::string("controller: ") + e.what());
    }
    if (controller.k_x1 < g.k_x1_min - 1e-12)
        fail("controller.k_x1 is below the sizing requirement " + std::to_string(g.k_x1_min));
    if (controller.k_x2 < g.k_x2_min - 1e-12)
        fail("controller.k_x2 is below the sizing requirement " + std::to_string(g.k_x2_min));
}

namespace detail {

using nlohmann::json;

// Reads the keys of an object into fields, rejecting anything unknown.
class Reader {
public:
    Reader(const json &j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <typename T>
    void get(const char *key, T &out)
    {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception &e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    void get(const char *key, Phasor &out)
    {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const auto &v = j_.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw ConfigError(path_ + "." + key + ": expected [re, im]");
        out = {v[0].get<double>(), v[1].get<double>()};
    }

    template <typename T>
    void get_optional(const char *key, std::optional<T> &out)
    {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        if (j_.at(key).is_null()) {
            out.reset();
            return;
        }
        T v{};
        get(key, v);
        out = v;
    }

    const json *child(const char *key)
    {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
        return &j_.at(key);
    }

    std::string sub(const char *key) const { return path_ + "." + key; }

    void finish() const
    {
        for (const auto &[k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(path_ + "." + k + ": unknown key");
    }

private:
    const json &j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline json phasor_json(Phasor z) { return json::array({z.real(), z.imag()}); }

inline void read(const json &j, const std::string &path, NetworkParams &p)
{
    Reader r(j, path);
    r.get("f1", p.f1);
    r.get("s_base_va", p.s_base_va);
    r.get("v_n_inverter", p.v_n_inverter);
    r.get("v_n_grid", p.v_n_grid);
    r.get("turns_ratio", p.turns_ratio);
    r.get("x_f", p.x_f);
    r.get("r_filter", p.r_filter);
    r.get("x_t", p.x_t);
    r.get("line_km", p.line_km);
    r.get("z_l1_ohm_per_km", p.z_l1_ohm_per_km);
    r.get("z_l0_ohm_per_km", p.z_l0_ohm_per_km);
    r.get("z_g", p.z_g);
    r.get("v_g", p.v_g);
    r.get("v_g_angle_deg", p.v_g_angle_deg);
    r.finish();
}

inline json write(const NetworkParams &p)
{
    return {{"f1", p.f1},
            {"s_base_va", p.s_base_va},
            {"v_n_inverter", p.v_n_inverter},
            {"v_n_grid", p.v_n_grid},
            {"turns_ratio", p.turns_ratio},
            {"x_f", p.x_f},
            {"r_filter", p.r_filter},
            {"x_t", p.x_t},
            {"line_km", p.line_km},
            {"z_l1_ohm_per_km", phasor_json(p.z_l1_ohm_per_km)},
            {"z_l0_ohm_per_km", phasor_json(p.z_l0_ohm_per_km)},
            {"z_g", phasor_json(p.z_g)},
            {"v_g", p.v_g},
            {"v_g_angle_deg", p.v_g_angle_deg}};
}

#define GFM_CONTROLLER_FIELDS(X)                                                                                     \
    X(w1) X(p_ref) X(q_ref) X(v_n1) X(k_pp) X(fast_gain_factor) X(i_thf) X(use_vsg) X(d) X(h) X(k_q) X(q_lpf_hz)     \
        X(interoperable_enabled) X(i_th1) X(t1) X(t_p) X(t_r) X(r_vt) X(r_vt_fade) X(k_x1) X(k_x2) X(i_thx1) X(i_thx2) X(i_lim1)  \
            X(i_lim2) X(lpf1_hz) X(lpf2_hz) X(r_ad) X(hpf_hz) X(hpf_interop_hz) X(dc_reject) X(design_dv1) X(design_v_t2) X(design_i_tpre1) X(x_f)

inline void read(const json &j, const std::string &path, ControllerParams &p)
{
    Reader r(j, path);
#define GFM_READ(f) r.get(#f, p.f);
    GFM_CONTROLLER_FIELDS(GFM_READ)
#undef GFM_READ
    r.finish();
}

inline json write(const ControllerParams &p)
{
    json j = json::object();
#define GFM_WRITE(f) j[#f] = p.f;
    GFM_CONTROLLER_FIELDS(GFM_WRITE)
#undef GFM_WRITE
    return j;
}

inline void read(const json &j, const std::string &path, RelaySettings &s)
{
    Reader r(j, path);
    r.get("w1", s.w1);
    r.get("floor", s.floor);
    r.get("dir_half_width", s.dir_half_width);
    r.get("d21_half_width", s.d21_half_width);
    r.get("d20_half_width", s.d20_half_width);
    r.get("t_r", s.t_r);
    r.get("horizon", s.horizon);
    r.finish();
}

inline json write(const RelaySettings &s)
{
    return {{"w1", s.w1},
            {"floor", s.floor},
            {"dir_half_width", s.dir_half_width},
            {"d21_half_width", s.d21_half_width},
            {"d20_half_width", s.d20_half_width},
            {"t_r", s.t_r},
            {"horizon", s.horizon}};
}

inline void read(const json &j, const std::string &path, FaultSpec &f)
{
    Reader r(j, path);
    std::string type(to_string(f.type)), side(to_string(f.side));
    r.get("type", type);
    r.get("side", side);
    r.get("m", f.m);
    r.get("r_f_ohm", f.r_f_ohm);
    r.get("t_on", f.t_on);
    r.get("t_off", f.t_off);
    r.finish();
    try {
        f.type = parse_fault_type(type);
        f.side = parse_fault_side(side);
    } catch (const std::invalid_argument &e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline json write(const FaultSpec &f)
{
    return {{"type", std::string(to_string(f.type))},
            {"side", std::string(to_string(f.side))},
            {"m", f.m},
            {"r_f_ohm", f.r_f_ohm},
            {"t_on", f.t_on},
            {"t_off", f.t_off}};
}

inline void read(const json &j, const std::string &path, GridDisturbance &d)
{
    Reader r(j, path);
    r.get("sag_depth", d.sag_depth);
    r.get("phase_jump_deg", d.phase_jump_deg);
    r.get("t_on", d.t_on);
    r.get("t_off", d.t_off);
    r.finish();
}

inline json write(const GridDisturbance &d)
{
    return {{"sag_depth", d.sag_depth}, {"phase_jump_deg", d.phase_jump_deg}, {"t_on", d.t_on}, {"t_off", d.t_off}};
}

inline void read(const json &j, const std::string &path, ScenarioChecks &c)
{
    Reader r(j, path);
    r.get_optional("min_zone_fraction", c.min_zone_fraction);
    r.get_optional("max_peak_current", c.max_peak_current);
    r.get_optional("max_dz_error", c.max_dz_error);
    r.finish();
}

inline json write(const ScenarioChecks &c)
{
    json j = json::object();
    j["min_zone_fraction"] = c.min_zone_fraction ? json(*c.min_zone_fraction) : json(nullptr);
    j["max_peak_current"] = c.max_peak_current ? json(*c.max_peak_current) : json(nullptr);
    j["max_dz_error"] = c.max_dz_error ? json(*c.max_dz_error) : json(nullptr);
    return j;
}

} // namespace detail

/// Table I circuit: 100 MVA, 33 kV / 220 kV, 100 km line, single-phase
/// fault next to bus 1 through 20 ohm.
inline ScenarioConfig preset_chil_table1()
{
    ScenarioConfig c;
    c.name = "chil_table1";
    c.network = NetworkParams{};
    c.network.x_f = henry_to_pu(5e-3, 50.0, c.network.z_base_inverter());
    c.network.x_t = 0.05;
    c.network.z_g = {0.0, henry_to_pu(0.2, 50.0, c.network.z_base_grid())};
    c.controller.x_f = c.network.x_f;
    c.controller.t_p = 1.0;
    c.relay.horizon = 1.0;
    c.fault = FaultSpec{FaultType::AG, 0.01, 20.0, 1.5, 1e9, FaultSide::Forward};
    c.horizon = 2.6;
    return c;
}

/// Table II bench: 1 kW, 86.6 V line-to-line, 3 mH filter, 6 mH grid, no
/// line, with the 0.7 p.u. sag for 0.2 s.
inline ScenarioConfig preset_lab_table2()
{
    ScenarioConfig c;
    c.name = "lab_table2";
    auto &n = c.network;
    n.s_base_va = 1000.0;
    n.v_n_inverter = 86.6;
    n.v_n_grid = 86.6;
    n.turns_ratio = 1.0;
    n.x_f = henry_to_pu(3e-3, 50.0, n.z_base_grid());
    n.x_t = 0.01;
    n.line_km = 0.0;
    n.z_g = {0.0, henry_to_pu(6e-3, 50.0, n.z_base_grid())};
    n.v_g = 1.0;
    c.controller.x_f = n.x_f;
    auto &k = c.controller;
    // 0.7 p.u. keeps the pre-fault current clear of I_thf and I_th1
    k.p_ref = 0.7;
    k.design_i_tpre1 = 0.7;
    k.design_dv1 = 1.0;
    k.design_v_t2 = 0.3;
    k.fast_gain_factor = 1.0;
    k.t_p = 0.3;
    k.i_lim1 = 1.5;
    k.i_thx1 = 0.82;
    k.i_lim2 = 0.5;
    k.i_thx2 = 0.1;
    k.k_x1 = 7.2;
    k.k_x2 = 2.0;
    k.lpf1_hz = 330.0;
    k.lpf2_hz = 50.0;
    // the filter reactance is small here, so R_vt hands over to X_v gradually
    k.r_vt = 0.32;
    k.r_vt_fade = 1.0;
    // the bench is lossless, so the current loop needs active damping
    k.r_ad = 0.58;
    k.hpf_hz = 7.4;
    k.hpf_interop_hz = 135.0;
    // R_vt is gone before the first relay window opens
    k.t_r = 0.016;
    c.relay.horizon = 0.3;
    c.disturbance = GridDisturbance{0.7, 0.0, 1.0, 1.2};
    c.horizon = 2.5;
    return c;
}

inline ScenarioConfig preset(const std::string &name)
{
    if (name == "chil_table1") return preset_chil_table1();
    if (name == "lab_table2") return preset_lab_table2();
    throw ConfigError("unknown preset '" + name + "'");
}

/// Full config as JSON, every default resolved.
inline nlohmann::json config_to_json(const ScenarioConfig &c)
{
    using nlohmann::json;
    json j;
    j["name"] = c.name;
    j["network"] = detail::write(c.network);
    j["controller"] = detail::write(c.controller);
    j["relay"] = detail::write(c.relay);
    j["fault"] = c.fault ? detail::write(*c.fault) : json(nullptr);
    j["disturbance"] = c.disturbance ? detail::write(*c.disturbance) : json(nullptr);
    j["horizon"] = c.horizon;
    j["ts"] = c.ts;
    j["seed"] = c.seed;
    j["noise"] = c.noise;
    j["output_dir"] = c.output_dir;
    j["checks"] = detail::write(c.checks);
    return j;
}

/// Builds a config from JSON: an optional "preset" key selects the base,
/// everything else overrides it. The result is validated.
inline ScenarioConfig config_from_json(const nlohmann::json &j)
{
    detail::Reader r(j, "config");
    ScenarioConfig c;
    std::string base;
    r.get("preset", base);
    if (!base.empty()) c = preset(base);
    r.get("name", c.name);
    if (const auto *n = r.child("network")) detail::read(*n, r.sub("network"), c.network);
    if (const auto *n = r.child("controller")) detail::read(*n, r.sub("controller"), c.controller);
    if (const auto *n = r.child("relay")) detail::read(*n, r.sub("relay"), c.relay);
    if (j.contains("fault") && j.at("fault").is_null()) c.fault.reset();
    if (const auto *n = r.child("fault")) {
        FaultSpec f = c.fault.value_or(FaultSpec{});
        detail::read(*n, r.sub("fault"), f);
        c.fault = f;
    }
    if (j.contains("disturbance") && j.at("disturbance").is_null()) c.disturbance.reset();
    if (const auto *n = r.child("disturbance")) {
        GridDisturbance d = c.disturbance.value_or(GridDisturbance{});
        detail::read(*n, r.sub("disturbance"), d);
        c.disturbance = d;
    }
    r.get("horizon", c.horizon);
    r.get("ts", c.ts);
    r.get("seed", c.seed);
    r.get("noise", c.noise);
    r.get("output_dir", c.output_dir);
    if (const auto *n = r.child("checks")) detail::read(*n, r.sub("checks"), c.checks);
    r.finish();
    c.validate();
    return c;
}

inline ScenarioConfig load_config(const std::string &path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error &e) {
        throw ConfigError("parse error in '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

} // namespace gfm

#endif
