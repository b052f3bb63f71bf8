// Command-line front end: simulate, oracle, matrix and zones.

#include "gfm/config.hpp"
#include "gfm/scenario.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;

struct Common {
    std::string config, preset, out;
    std::optional<std::uint64_t> seed;
};

gfm::ScenarioConfig resolve(const Common &o)
{
    gfm::ScenarioConfig c;
    if (!o.config.empty()) c = gfm::load_config(o.config);
    else if (!o.preset.empty()) c = gfm::preset(o.preset);
    else throw gfm::ConfigError("give --config or --preset");
    if (o.seed) c.seed = *o.seed;
    if (!o.out.empty()) c.output_dir = o.out;
    c.validate();
    return c;
}

json phasor(gfm::Phasor z) { return json::array({z.real(), z.imag()}); }

json sequence(const gfm::SequenceSet &s)
{
    return {{"zero", phasor(s.zero)}, {"positive", phasor(s.positive)}, {"negative", phasor(s.negative)}};
}

void write_text(const std::filesystem::path &p, const std::string &text)
{
    std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + p.string());
}

int simulate(const Common &o)
{
    const auto cfg = resolve(o);
    const auto r = gfm::run_scenario(cfg);
    gfm::emit_csv(r, cfg.output_dir);
    write_text(std::filesystem::path(cfg.output_dir) / "config.json", gfm::config_to_json(cfg).dump(2) + "\n");
    std::cout << gfm::summary_text(r);
    return r.summary.passed ? 0 : 1;
}

int oracle(const Common &o)
{
    const auto cfg = resolve(o);
    const auto p = gfm::predict_fault_state(cfg);
    const auto &s = p.solution;
    json j;
    j["scenario"] = cfg.name;
    j["mode"] = p.source.mode == gfm::IbrMode::Interoperable ? "interoperable" : "conventional";
    j["x_v1"] = p.x_v1;
    j["x_v2"] = p.x_v2;
    j["i_t1"] = p.i_t1;
    j["i_t2"] = p.i_t2;
    j["e_pre1"] = phasor(p.source.e_pre1);
    j["e_ref1"] = phasor(s.e_ref1);
    j["v_bus1"] = sequence(s.v_bus1);
    j["i_bus1"] = sequence(s.i_bus1);
    j["v_fault"] = sequence(s.v_fault);
    j["i_fault"] = sequence(s.i_fault);
    j["dv1"] = phasor(s.dv1);
    j["di1"] = phasor(s.di1);
    j["dz_e1"] = phasor(s.dz_e1);
    j["dz_e1_closed_form"] = phasor(gfm::interoperable_dz_e1(p.source));
    std::cout << j.dump(2) << "\n";
    return 0;
}

int matrix(const Common &o)
{
    const auto base = resolve(o);
    const auto rows = gfm::run_matrix(gfm::fault_matrix(base));
    const auto table = gfm::matrix_table(rows);
    write_text(std::filesystem::path(base.output_dir) / "matrix.csv", table);
    std::cout << table;
    bool ok = true;
    for (const auto &r : rows)
        ok = ok && r.ok && r.summary.passed;
    return ok ? 0 : 1;
}

int zones(const Common &o, bool text)
{
    gfm::RelaySettings s;
    if (!o.config.empty() || !o.preset.empty()) s = resolve(o).relay;
    const auto z = gfm::ZoneTable::build(s);
    if (text) {
        std::cout << z.report();
        return 0;
    }
    auto list = [](const std::vector<gfm::ZoneSector> &v) {
        json a = json::array();
        for (const auto &sec : v) {
            json labels = json::array();
            for (auto t : sec.labels)
                labels.push_back(std::string(gfm::to_string(t)));
            a.push_back({{"center_deg", sec.center}, {"half_width_deg", sec.half_width}, {"labels", labels}});
        }
        return a;
    };
    json j;
    j["directional"] = {{"forward_center_deg", z.forward_center},
                        {"reverse_center_deg", z.reverse_center},
                        {"half_width_deg", z.dir_half_width},
                        {"non_tripping_width_deg", z.non_tripping_width()}};
    j["d21"] = list(z.d21);
    j["d20"] = list(z.d20);
    if (!o.out.empty()) write_text(std::filesystem::path(o.out) / "zones.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Fault ride-through control and relay supervision scenarios"};
    app.require_subcommand(1);
    Common o;
    bool text = false;
    auto add_common = [&](CLI::App *sub) {
        sub->add_option("--config", o.config, "JSON scenario file");
        sub->add_option("--preset", o.preset, "bundled scenario: chil_table1 or lab_table2");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--seed", o.seed, "noise seed");
    };
    auto *sim = app.add_subcommand("simulate", "run one scenario and write trace.csv, relay.csv, summary.txt");
    auto *orc = app.add_subcommand("oracle", "phasor-domain steady fault state of a scenario");
    auto *mat = app.add_subcommand("matrix", "every fault type, both sides, three locations");
    auto *zon = app.add_subcommand("zones", "dump the relay zone table");
    for (auto *s : {sim, orc, mat, zon})
        add_common(s);
    zon->add_flag("--text", text, "plain-text report instead of JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        if (*sim) return simulate(o);
        if (*orc) return oracle(o);
        if (*mat) return matrix(o);
        if (*zon) return zones(o, text);
    } catch (const gfm::ConfigError &e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
