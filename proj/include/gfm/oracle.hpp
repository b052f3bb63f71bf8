#ifndef GFM_ORACLE_HPP
#define GFM_ORACLE_HPP

// Phasor-domain sequence-network solutions for a single source feeding an
// infinite bus over a line, with a shunt fault either on the line (forward)
// or on a stub behind the relay bus (reverse). All quantities are grid-side
// referred per-unit RMS phasors.

#include "gfm/fault.hpp"
#include "gfm/phasor.hpp"

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <stdexcept>
#include <variant>

namespace gfm {

struct OracleNetwork {
    Phasor z_l1{0.0062, 0.0702}; // whole line, positive sequence
    Phasor z_l0{0.0372, 0.2459};
    Phasor z_g1{0.0, 0.1298};
    Phasor z_g0{0.0, 0.1298};
    Phasor v_g1{1.0 / sqrt2, 0.0};
    double z_base_ohm = 484.0; // converts fault resistance
};

struct SgSource {
    Phasor e1{1.0 / sqrt2, 0.0};
    double x1 = 0.2, x2 = 0.2, x0 = 0.1;
    Phasor z_s1{0.0, 0.1}, z_s2{0.0, 0.1}, z_s0{0.0, 0.1}; // step-up transformer
};

enum class IbrMode { Conventional, Interoperable };

struct IbrSource {
    Phasor e_pre1{1.0 / sqrt2, 0.0}; // inverter-side internal voltage before the fault
    Phasor z_v1{}, z_v2{};           // virtual impedances during the fault (inverter side)
    double x_f = 0.1443;
    double x_t = 0.05;
    double n = 1.0;
    IbrMode mode = IbrMode::Interoperable;
};

using SourceModel = std::variant<SgSource, IbrSource>;

struct FaultLocation {
    FaultType type = FaultType::AG;
    double m = 0.5;
    double r_f_ohm = 0.0;
    FaultSide side = FaultSide::Forward;

    static FaultLocation from(const FaultSpec &f) { return {f.type, f.m, f.r_f_ohm, f.side}; }
};

struct PrefaultSolution {
    Phasor e_src;   // referred internal voltage
    Phasor z_src;   // referred positive-sequence source impedance
    Phasor i_pre1;  // bus 1 into line
    Phasor v_pre1;  // bus 1
    Phasor i_tpre1; // source-terminal current (inverter side for an IBR)
    Phasor e_fy;    // open-circuit voltage at the fault point
};

struct OracleSolution {
    PrefaultSolution pre;
    Phasor e_ref1;        // source internal voltage in the fault network (inverter side for an IBR)
    SequenceSet v_bus1, i_bus1;
    SequenceSet v_fault, i_fault; // i_fault flows from the network into the fault
    Phasor v_f1;
    Phasor dv_f1, dv1, di1;
    Phasor dz_e1;                 // -dv1/di1
    std::optional<Phasor> z_e2;   // -v2/i2
    std::optional<Phasor> z_e0;   // -v0/i0
    std::optional<Phasor> z_eq20; // v_f1/i_f1
    std::optional<Phasor> z_ad;   // IBR only
};

namespace detail {

struct SourceSide {
    Phasor pre_emf, pre_z1;
    Phasor emf1; // fault state, filled after the pre-fault solve for an IBR
    Phasor z1, z2, z0;
};

inline SourceSide source_side(const SourceModel &src)
{
    if (const auto *sg = std::get_if<SgSource>(&src)) {
        const Phasor z1 = unit_j * sg->x1 + sg->z_s1;
        return {sg->e1, z1, sg->e1, z1, unit_j * sg->x2 + sg->z_s2, unit_j * sg->x0 + sg->z_s0};
    }
    const auto &ibr = std::get<IbrSource>(src);
    const double n2 = ibr.n * ibr.n;
    SourceSide s;
    s.pre_emf = ibr.n * ibr.e_pre1;
    s.pre_z1 = n2 * unit_j * ibr.x_f + unit_j * ibr.x_t;
    s.z1 = n2 * (ibr.z_v1 + unit_j * ibr.x_f) + unit_j * ibr.x_t;
    s.z2 = n2 * (ibr.z_v2 + unit_j * ibr.x_f) + unit_j * ibr.x_t;
    s.z0 = unit_j * ibr.x_t; // delta winding: zero sequence sees only the grounded-wye leakage
    return s;
}

inline Phasor parallel(Phasor a, Phasor b) { return a * b / (a + b); }

inline Eigen::Matrix3cd fortescue_matrix() // sequence (0,1,2) -> abc
{
    const Phasor a = alpha_op, a2 = alpha_op * alpha_op;
    Eigen::Matrix3cd m;
    m << 1.0, 1.0, 1.0, 1.0, a2, a, 1.0, a, a2;
    return m;
}

inline Eigen::Matrix3cd seq_to_phase_impedance(Phasor z0, Phasor z1, Phasor z2)
{
    const Eigen::Matrix3cd A = fortescue_matrix();
    Eigen::Matrix3cd d = Eigen::Matrix3cd::Zero();
    d(0, 0) = z0;
    d(1, 1) = z1;
    d(2, 2) = z2;
    return A * d * A.inverse();
}

} // namespace detail

struct FaultInterconnection {
    SequenceSet i_fault; // network -> fault
    SequenceSet v_fault;
};

/// Solves the fault connection against a sequence Thevenin equivalent.
/// Unknowns are the three phase currents and the common-point voltage, so a
/// bolted fault (r_f = 0) needs no special casing.
inline FaultInterconnection solve_fault_interconnection(FaultType type, double r_f, Phasor v_th1,
                                                        std::array<Phasor, 3> z_th /*0,1,2*/)
{
    const auto topo = topology(type);
    const Eigen::Matrix3cd A = detail::fortescue_matrix();
    const Eigen::Matrix3cd z_abc = detail::seq_to_phase_impedance(z_th[0], z_th[1], z_th[2]);
    Eigen::Vector3cd v_th_seq(0.0, v_th1, 0.0);
    Eigen::Vector3cd v_th = A * v_th_seq;

    Eigen::Matrix4cd M = Eigen::Matrix4cd::Zero();
    Eigen::Vector4cd rhs = Eigen::Vector4cd::Zero();
    for (int k = 0; k < 3; ++k) {
        if (topo.phases[k]) {
            for (int l = 0; l < 3; ++l)
                M(k, l) = z_abc(k, l);
            M(k, k) += r_f;
            M(k, 3) = 1.0;
            rhs(k) = v_th(k);
        } else {
            M(k, k) = 1.0;
        }
    }
    if (topo.grounded) {
        M(3, 3) = 1.0;
    } else {
        M(3, 0) = M(3, 1) = M(3, 2) = 1.0;
    }
    const Eigen::Vector4cd x = M.partialPivLu().solve(rhs);
    const Eigen::Vector3cd i_seq = A.inverse() * x.head<3>();
    FaultInterconnection out;
    out.i_fault = {i_seq(0), i_seq(1), i_seq(2)};
    out.v_fault = {-z_th[0] * i_seq(0), v_th1 - z_th[1] * i_seq(1), -z_th[2] * i_seq(2)};
    return out;
}

inline PrefaultSolution prefault_solve(const SourceModel &src, const OracleNetwork &net, const FaultLocation &loc)
{
    const auto s = detail::source_side(src);
    const Phasor loop = s.pre_z1 + net.z_l1 + net.z_g1;
    if (std::abs(loop) < 1e-14) throw std::runtime_error("singular pre-fault network");
    PrefaultSolution p;
    p.e_src = s.pre_emf;
    p.z_src = s.pre_z1;
    p.i_pre1 = (s.pre_emf - net.v_g1) / loop;
    p.v_pre1 = s.pre_emf - s.pre_z1 * p.i_pre1;
    p.e_fy = loc.side == FaultSide::Forward ? p.v_pre1 - loc.m * net.z_l1 * p.i_pre1 : p.v_pre1;
    p.i_tpre1 = p.i_pre1;
    if (const auto *ibr = std::get_if<IbrSource>(&src)) p.i_tpre1 = ibr->n * p.i_pre1;
    return p;
}

/// Internal voltage the source holds during the fault: the pre-fault value for
/// a synchronous machine or a conventionally controlled inverter, and
/// e_pre1 + i_tpre1 * Z_v1 for the interoperable inverter.
inline Phasor fault_internal_voltage(const SourceModel &src, const PrefaultSolution &pre)
{
    if (const auto *sg = std::get_if<SgSource>(&src)) return sg->e1;
    const auto &ibr = std::get<IbrSource>(src);
    if (ibr.mode == IbrMode::Interoperable) return ibr.e_pre1 + pre.i_tpre1 * ibr.z_v1;
    return ibr.e_pre1;
}

inline Phasor interoperable_reference(Phasor e_pre1, Phasor i_tpre1, Phasor z_v1) { return e_pre1 + i_tpre1 * z_v1; }

inline OracleSolution fault_network_solve(const SourceModel &src, const OracleNetwork &net, const FaultLocation &loc)
{
    if (!(loc.m >= 0.0 && loc.m <= 1.0)) throw std::invalid_argument("fault location m must lie in [0, 1]");
    OracleSolution sol;
    sol.pre = prefault_solve(src, net, loc);
    auto s = detail::source_side(src);
    sol.e_ref1 = fault_internal_voltage(src, sol.pre);
    s.emf1 = sol.e_ref1;
    if (const auto *ibr = std::get_if<IbrSource>(&src)) s.emf1 = ibr->n * sol.e_ref1;

    const std::array<Phasor, 3> zs{s.z0, s.z1, s.z2};
    const std::array<Phasor, 3> zl{net.z_l0, net.z_l1, net.z_l1};
    const std::array<Phasor, 3> zg{net.z_g0, net.z_g1, net.z_g1};
    const std::array<Phasor, 3> es{0.0, s.emf1, 0.0};
    const std::array<Phasor, 3> eg{0.0, net.v_g1, 0.0};
    const double m = loc.m;

    std::array<Phasor, 3> z_th{};
    Phasor v_th1;
    if (loc.side == FaultSide::Forward) {
        for (int k = 0; k < 3; ++k)
            z_th[k] = detail::parallel(zs[k] + m * zl[k], (1.0 - m) * zl[k] + zg[k]);
        const Phasor left = zs[1] + m * zl[1], right = (1.0 - m) * zl[1] + zg[1];
        v_th1 = (es[1] * right + eg[1] * left) / (left + right);
    } else {
        for (int k = 0; k < 3; ++k)
            z_th[k] = m * zl[k] + detail::parallel(zs[k], zl[k] + zg[k]);
        v_th1 = (es[1] * (zl[1] + zg[1]) + eg[1] * zs[1]) / (zs[1] + zl[1] + zg[1]);
    }

    const double r_f = loc.r_f_ohm / net.z_base_ohm;
    const auto fi = solve_fault_interconnection(loc.type, r_f, v_th1, z_th);
    sol.i_fault = fi.i_fault;
    sol.v_fault = fi.v_fault;
    sol.v_f1 = fi.v_fault.positive;

    const std::array<Phasor, 3> i_f{fi.i_fault.zero, fi.i_fault.positive, fi.i_fault.negative};
    const std::array<Phasor, 3> v_f{fi.v_fault.zero, fi.v_fault.positive, fi.v_fault.negative};
    std::array<Phasor, 3> v1{}, i1{};
    for (int k = 0; k < 3; ++k) {
        if (loc.side == FaultSide::Forward) {
            const Phasor left = zs[k] + m * zl[k];
            i1[k] = (es[k] - v_f[k]) / left;
            v1[k] = es[k] - zs[k] * i1[k];
        } else {
            v1[k] = v_f[k] + m * zl[k] * i_f[k];
            i1[k] = (v1[k] - eg[k]) / (zl[k] + zg[k]);
        }
    }
    sol.v_bus1 = {v1[0], v1[1], v1[2]};
    sol.i_bus1 = {i1[0], i1[1], i1[2]};

    sol.dv_f1 = sol.v_f1 - sol.pre.e_fy;
    sol.dv1 = v1[1] - sol.pre.v_pre1;
    sol.di1 = i1[1] - sol.pre.i_pre1;
    sol.dz_e1 = -sol.dv1 / sol.di1;
    if (std::abs(i1[2]) > 1e-12) sol.z_e2 = -v1[2] / i1[2];
    if (std::abs(i1[0]) > 1e-12) sol.z_e0 = -v1[0] / i1[0];
    if (std::abs(i_f[1]) > 1e-12) sol.z_eq20 = v_f[1] / i_f[1];
    if (const auto *ibr = std::get_if<IbrSource>(&src)) {
        const double n = ibr->n;
        sol.z_ad = (n * ibr->e_pre1 - n * sol.e_ref1 + n * n * i1[1] * ibr->z_v1) / (i1[1] - sol.pre.i_pre1);
    }
    return sol;
}

struct PureFault {
    Phasor dv1, di1, dz_e1;
};

inline PureFault pure_fault_quantities(const PrefaultSolution &pre, const OracleSolution &fault)
{
    const Phasor dv = fault.v_bus1.positive - pre.v_pre1;
    const Phasor di = fault.i_bus1.positive - pre.i_pre1;
    if (std::abs(di) < 1e-12) throw std::domain_error("no increment: |di1| below 1e-12");
    return {dv, di, -dv / di};
}

/// Closed form of the incremental effective impedance under the
/// interoperable internal voltage: j n^2 X_f + j X_T + n^2 Z_v1.
inline Phasor interoperable_dz_e1(const IbrSource &ibr)
{
    return unit_j * ibr.n * ibr.n * ibr.x_f + unit_j * ibr.x_t + ibr.n * ibr.n * ibr.z_v1;
}

struct ZoneCenters {
    std::optional<double> d21_deg; // angle(i2) - angle(di1)
    std::optional<double> d20_deg; // angle(i2) - angle(i0), ground faults only
};

/// Phase-selection zone centres from the pure-fault sequence currents at the
/// fault point of a homogeneous, purely inductive network.
inline ZoneCenters zone_reference_angles(FaultType type)
{
    const Phasor z = unit_j;
    const auto fi = solve_fault_interconnection(type, 0.0, 1.0, {z, z, z});
    ZoneCenters c;
    const auto &i = fi.i_fault;
    if (std::abs(i.negative) > 1e-9 && std::abs(i.positive) > 1e-9)
        c.d21_deg = wrap_deg(angle_deg(i.negative) - angle_deg(i.positive));
    if (is_ground_fault(type) && std::abs(i.zero) > 1e-9 && std::abs(i.negative) > 1e-9)
        c.d20_deg = wrap_deg(angle_deg(i.negative) - angle_deg(i.zero));
    return c;
}

// ---------------------------------------------------------------------------
// Independent phase-domain route: modified nodal analysis of the same circuit
// in abc coordinates. Used to cross-check the sequence construction and the
// superposition (compensation) identity.

struct PhaseDomainResult {
    PhaseSet v_bus1, i_bus1; // i_bus1: bus 1 into the line
    PhaseSet v_fault_point;
    double kcl_residual = 0.0;
};

struct PhaseDomainOptions {
    bool with_fault = true;
    bool passive = false;                        // short all internal sources
    std::optional<Phasor> fault_branch_emf;      // positive-sequence EMF in series with each fault branch
    bool use_prefault_source = false;            // pre-fault source impedance and EMF
    std::optional<Phasor> source_emf_override;   // referred positive-sequence EMF
};

inline PhaseDomainResult phase_domain_solve(const SourceModel &src, const OracleNetwork &net,
                                            const FaultLocation &loc, const PhaseDomainOptions &opt)
{
    auto s = detail::source_side(src);
    Phasor e_src = s.pre_emf;
    Phasor zs1 = s.z1;
    if (opt.use_prefault_source) {
        zs1 = s.pre_z1;
    } else {
        const auto pre = prefault_solve(src, net, loc);
        e_src = fault_internal_voltage(src, pre);
        if (const auto *ibr = std::get_if<IbrSource>(&src)) e_src *= ibr->n;
    }
    if (opt.source_emf_override) e_src = *opt.source_emf_override;

    // logical nodes: bus1, fault point, bus2 (3 phases each); fault point may alias
    const double m = loc.m;
    const bool fwd = loc.side == FaultSide::Forward;
    int node_bus1 = 0, node_f = 1, node_bus2 = 2;
    bool left_branch = true, right_branch = true; // forward: bus1-F, F-bus2 ; reverse: bus1-F stub
    if (fwd) {
        if (m == 0.0) { node_f = node_bus1; left_branch = false; }
        if (m == 1.0) { node_f = node_bus2; right_branch = false; }
    } else if (m == 0.0) {
        node_f = node_bus1;
        left_branch = false;
    }
    // compact indices
    std::array<int, 3> idx{-1, -1, -1};
    int count = 0;
    for (int n : {node_bus1, node_f, node_bus2})
        if (idx[n] < 0) idx[n] = count++;
    const int nv = 3 * count;
    const auto topo = topology(loc.type);
    std::array<int, 3> fault_row{-1, -1, -1};
    int nf = 0;
    if (opt.with_fault)
        for (int k = 0; k < 3; ++k)
            if (topo.phases[k]) fault_row[k] = nv + nf++;
    const bool common_floating = opt.with_fault && !topo.grounded;
    const int n_unknown = nv + nf + (common_floating ? 1 : 0);
    const int common = common_floating ? nv + nf : -1;

    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n_unknown, n_unknown);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n_unknown);
    const Eigen::Matrix3cd A = detail::fortescue_matrix();

    auto stamp_branch = [&](int from, int to, const Eigen::Matrix3cd &z, Phasor emf_pos) {
        // current from -> to : Y (v_from - v_to + e), e in the branch pushing towards 'to'
        const Eigen::Matrix3cd y = z.inverse();
        Eigen::Vector3cd e = A * Eigen::Vector3cd(0.0, emf_pos, 0.0);
        const Eigen::Vector3cd inj = y * e;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                if (from >= 0) Y(3 * from + r, 3 * from + c) += y(r, c);
                if (to >= 0) Y(3 * to + r, 3 * to + c) += y(r, c);
                if (from >= 0 && to >= 0) {
                    Y(3 * from + r, 3 * to + c) -= y(r, c);
                    Y(3 * to + r, 3 * from + c) -= y(r, c);
                }
            }
            if (from >= 0) rhs(3 * from + r) -= inj(r);
            if (to >= 0) rhs(3 * to + r) += inj(r);
        }
    };

    const Phasor src_emf = opt.passive ? Phasor{} : e_src;
    const Phasor grid_emf = opt.passive ? Phasor{} : net.v_g1;
    const Eigen::Matrix3cd z_src = detail::seq_to_phase_impedance(s.z0, zs1, s.z2);
    const Eigen::Matrix3cd z_line = detail::seq_to_phase_impedance(net.z_l0, net.z_l1, net.z_l1);
    const Eigen::Matrix3cd z_grid = detail::seq_to_phase_impedance(net.z_g0, net.z_g1, net.z_g1);

    stamp_branch(-1, idx[node_bus1], z_src, src_emf);
    stamp_branch(-1, idx[node_bus2], z_grid, grid_emf);
    if (fwd) {
        if (left_branch) stamp_branch(idx[node_bus1], idx[node_f], m * z_line, 0.0);
        if (right_branch) stamp_branch(idx[node_f], idx[node_bus2], (1.0 - m) * z_line, 0.0);
    } else {
        stamp_branch(idx[node_bus1], idx[node_bus2], z_line, 0.0);
        if (left_branch) stamp_branch(idx[node_bus1], idx[node_f], m * z_line, 0.0);
    }

    const double r_f = loc.r_f_ohm / net.z_base_ohm;
    Eigen::Vector3cd e_fault = Eigen::Vector3cd::Zero();
    if (opt.fault_branch_emf) e_fault = A * Eigen::Vector3cd(0.0, *opt.fault_branch_emf, 0.0);
    for (int k = 0; k < 3; ++k) {
        const int row = fault_row[k];
        if (row < 0) continue;
        const int vnode = 3 * idx[node_f] + k;
        // branch current leaves the fault node
        Y(vnode, row) += 1.0;
        if (common >= 0) Y(common, row) -= 1.0;
        // v_node + e - v_common - r_f i = 0
        Y(row, vnode) = 1.0;
        if (common >= 0) Y(row, common) = -1.0;
        Y(row, row) = -r_f;
        rhs(row) = -e_fault(k);
    }

    const Eigen::VectorXcd x = Y.partialPivLu().solve(rhs);
    PhaseDomainResult out;
    out.kcl_residual = (Y * x - rhs).cwiseAbs().maxCoeff();
    for (int k = 0; k < 3; ++k) {
        out.v_bus1[k] = x(3 * idx[node_bus1] + k);
        out.v_fault_point[k] = x(3 * idx[node_f] + k);
    }
    // relay current = current out of the source minus the current into the reverse stub
    Eigen::Vector3cd v1(out.v_bus1[0], out.v_bus1[1], out.v_bus1[2]);
    Eigen::Vector3cd e = A * Eigen::Vector3cd(0.0, src_emf, 0.0);
    Eigen::Vector3cd i_src = z_src.inverse() * (e - v1);
    if (!fwd) {
        if (left_branch) {
            Eigen::Vector3cd vf(out.v_fault_point[0], out.v_fault_point[1], out.v_fault_point[2]);
            i_src -= (m * z_line).inverse() * (v1 - vf);
        } else if (opt.with_fault) {
            for (int k = 0; k < 3; ++k)
                if (fault_row[k] >= 0) i_src(k) -= x(fault_row[k]);
        }
    }
    for (int k = 0; k < 3; ++k)
        out.i_bus1[k] = i_src(k);
    return out;
}

} // namespace gfm

#endif
