#ifndef GFM_NETWORK_HPP
#define GFM_NETWORK_HPP

// Fixed-step trapezoidal simulation of the single-inverter infinite-bus
// circuit: averaged inverter EMF behind the filter inductance, a Dyn-style
// transformer (series leakage, zero-sequence path to ground on the grid
// side only), a lumped R-L line split at the fault point, and a Thevenin
// grid source. Everything is referred to the grid side in per-unit with a
// peak-value base (unit amplitude = rated).

#include "gfm/fault.hpp"
#include "gfm/phasor.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfm {

inline double henry_to_pu(double henry, double f1, double z_base) { return 2.0 * pi * f1 * henry / z_base; }
inline double pu_to_henry(double x_pu, double f1, double z_base) { return x_pu * z_base / (2.0 * pi * f1); }

struct NetworkParams {
    double f1 = 50.0;
    double s_base_va = 100e6;
    double v_n_inverter = 33e3; // L-L RMS
    double v_n_grid = 220e3;    // L-L RMS
    double turns_ratio = 33.0 / 220.0; // inverter side / grid side
    double x_f = 0.1443;   // filter reactance, inverter-side p.u.
    double r_filter = 0.0; // filter resistance, inverter-side p.u.
    double x_t = 0.05;     // transformer leakage, p.u.
    double line_km = 100.0;
    Phasor z_l1_ohm_per_km{0.03, 0.34};
    Phasor z_l0_ohm_per_km{0.18, 1.19};
    Phasor z_g{0.0, 0.1298}; // grid Thevenin impedance, p.u.
    double v_g = 1.0;        // grid EMF amplitude, p.u.
    double v_g_angle_deg = 0.0;

    double w1() const { return 2.0 * pi * f1; }
    double z_base_grid() const { return v_n_grid * v_n_grid / s_base_va; }
    double z_base_inverter() const { return v_n_inverter * v_n_inverter / s_base_va; }
    // off-nominal ratio in per-unit; 1 when the turns ratio matches the base voltages
    double n_pu() const { return turns_ratio * v_n_grid / v_n_inverter; }
    Phasor z_l1() const { return z_l1_ohm_per_km * line_km / z_base_grid(); }
    Phasor z_l0() const { return z_l0_ohm_per_km * line_km / z_base_grid(); }
    // line-to-line RMS grid voltage over the line-to-neutral base
    double v_g_ll_over_ln_base() const { return v_g * std::sqrt(3.0); }

    void validate() const
    {
        auto require = [](bool ok, const char *what) {
            if (!ok) throw std::invalid_argument(what);
        };
        require(f1 > 0.0, "network.f1 must be positive");
        require(s_base_va > 0.0 && v_n_inverter > 0.0 && v_n_grid > 0.0, "network bases must be positive");
        require(turns_ratio > 0.0, "network.turns_ratio must be positive");
        require(x_f > 0.0, "network.x_f must be positive");
        require(x_t > 0.0, "network.x_t must be positive");
        require(r_filter >= 0.0, "network.r_filter must be non-negative");
        require(line_km >= 0.0, "network.line_km must be non-negative");
        require(z_l1_ohm_per_km.real() >= 0.0 && z_l0_ohm_per_km.real() >= 0.0,
                "network line resistance must be non-negative");
        require(z_l1_ohm_per_km.imag() > 0.0 && z_l0_ohm_per_km.imag() > 0.0,
                "network line reactance must be positive");
        require(z_g.imag() > 0.0 && z_g.real() >= 0.0, "network.z_g must have positive reactance");
        require(v_g >= 0.0, "network.v_g must be non-negative");
    }
};

struct ThreePhaseSample {
    double t = 0.0;
    std::array<double, 3> v_poc{}, i_poc{}; // bus 1, current into the line
    std::array<double, 3> v_t{}, i_t{};     // inverter terminal (inverter side)
};

// Where the line is split for a fault. Forward: on the line at fraction m
// from bus 1. Reverse: at the end of a stub of m line lengths behind bus 1.
struct FaultPlacement {
    FaultSide side = FaultSide::Forward;
    double m = 0.5;
};

class SimulationDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Network {
public:
    Network(const NetworkParams &p, double ts, FaultPlacement placement = {})
        : p_(p), ts_(ts), placement_(placement)
    {
        p.validate();
        if (!(ts > 0.0)) throw std::invalid_argument("time step must be positive");
        if (!(placement.m >= 0.0 && placement.m <= 1.0)) throw std::invalid_argument("fault placement m outside [0, 1]");
        n_ = p.n_pu();
        build_topology();
        refactor();
    }

    const NetworkParams &params() const { return p_; }
    double ts() const { return ts_; }
    double time() const { return static_cast<double>(step_) * ts_; }
    long long step_index() const { return step_; }
    double n_pu() const { return n_; }
    const FaultPlacement &placement() const { return placement_; }

    void apply_fault(const FaultSpec &f)
    {
        f.validate();
        if (f.side != placement_.side || std::abs(f.m - placement_.m) > 1e-12)
            throw std::invalid_argument("fault location differs from the network split point");
        fault_ = f;
        refactor();
    }

    void clear_fault()
    {
        fault_.reset();
        refactor();
    }

    bool fault_active() const { return fault_.has_value(); }

    void apply_grid_disturbance(const GridDisturbance &d)
    {
        d.validate();
        disturbance_ = d;
    }

    // Grid EMF phase-a angle offset and scale at time t.
    double grid_scale(double t) const
    {
        return active(t) ? disturbance_->sag_depth : 1.0;
    }
    double grid_phase(double t) const
    {
        return rad(p_.v_g_angle_deg) + (active(t) ? rad(disturbance_->phase_jump_deg) : 0.0);
    }
    // Positive-sequence grid EMF phasor (RMS) at time t.
    Phasor grid_phasor(double t) const { return std::polar(p_.v_g * grid_scale(t) / sqrt2, grid_phase(t)); }

    std::array<double, 3> grid_emf(double t) const
    {
        const double amp = p_.v_g * grid_scale(t);
        const double th = p_.w1() * t + grid_phase(t);
        return {amp * std::cos(th), amp * std::cos(th - 2.0 * pi / 3.0), amp * std::cos(th + 2.0 * pi / 3.0)};
    }

    /// Sets all branch states to the sinusoidal steady state for a balanced
    /// inverter EMF phasor (inverter side, RMS) at the current time.
    void initialize_steady_state(Phasor inverter_emf)
    {
        const double w = p_.w1();
        const int nn = n_nodes_;
        Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(nn, nn);
        Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(nn);
        const double t = time();
        const Phasor e_inv = n_ * inverter_emf;
        const Phasor e_grid = grid_phasor(t);
        auto seq3 = [](Phasor pos) {
            return Eigen::Vector3cd(pos, pos * std::conj(alpha_op), pos * alpha_op);
        };
        std::vector<Eigen::Matrix3cd> yb(rl_.size());
        for (std::size_t b = 0; b < rl_.size(); ++b) {
            const auto &br = rl_[b];
            Eigen::Matrix3cd z = br.R.cast<std::complex<double>>() + Phasor(0.0, w) * br.L.cast<std::complex<double>>();
            yb[b] = z.inverse();
            Eigen::Vector3cd e = Eigen::Vector3cd::Zero();
            if (br.source == Source::Inverter) e = seq3(e_inv);
            if (br.source == Source::Grid) e = seq3(e_grid);
            const Eigen::Vector3cd inj = yb[b] * e;
            stamp(Y, br.from, br.to, yb[b]);
            for (int r = 0; r < 3; ++r) {
                if (br.from[r] >= 0) rhs(br.from[r]) -= inj(r);
                if (br.to[r] >= 0) rhs(br.to[r]) += inj(r);
            }
        }
        const Phasor y0 = 1.0 / (Phasor(0.0, w) * shunt_.L0);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                if (shunt_.node[r] >= 0 && shunt_.node[c] >= 0) Y(shunt_.node[r], shunt_.node[c]) += y0 / 3.0;
        for (const auto &g : conductances_)
            stamp_scalar(Y, g.a, g.b, g.g);

        const Eigen::VectorXcd v = Y.partialPivLu().solve(rhs);
        auto node_v = [&](int idx) -> Phasor { return idx >= 0 ? v(idx) : Phasor{}; };
        auto inst = [&](Phasor x) { return sqrt2 * (x * std::polar(1.0, w * t)).real(); };

        for (std::size_t b = 0; b < rl_.size(); ++b) {
            auto &br = rl_[b];
            Eigen::Vector3cd dv, e = Eigen::Vector3cd::Zero();
            for (int r = 0; r < 3; ++r)
                dv(r) = node_v(br.from[r]) - node_v(br.to[r]);
            if (br.source == Source::Inverter) e = seq3(e_inv);
            if (br.source == Source::Grid) e = seq3(e_grid);
            const Eigen::Vector3cd i = yb[b] * (dv + e);
            for (int r = 0; r < 3; ++r) {
                br.i(r) = inst(i(r));
                br.e_prev(r) = inst(e(r));
            }
        }
        Phasor v0{};
        for (int r = 0; r < 3; ++r)
            v0 += node_v(shunt_.node[r]) / 3.0;
        shunt_.i0 = inst(y0 * v0);
        v_.setZero();
        for (int k = 0; k < nn; ++k)
            v_(k) = inst(v(k));
        if (!rl_.empty()) last_u_ = {rl_[inv_].e_prev(0) / n_, rl_[inv_].e_prev(1) / n_, rl_[inv_].e_prev(2) / n_};
        refresh_sample();
    }

    /// Advances one step with the given inverter EMF (inverter side,
    /// instantaneous p.u.) applied at the end of the step.
    const ThreePhaseSample &step(const std::array<double, 3> &u)
    {
        const double t1 = static_cast<double>(step_ + 1) * ts_;
        const auto eg = grid_emf(t1);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_nodes_);
        for (auto &br : rl_) {
            Eigen::Vector3d e_new = Eigen::Vector3d::Zero();
            if (br.source == Source::Inverter) e_new = Eigen::Vector3d(n_ * u[0], n_ * u[1], n_ * u[2]);
            if (br.source == Source::Grid) e_new = Eigen::Vector3d(eg[0], eg[1], eg[2]);
            Eigen::Vector3d dv_old;
            for (int r = 0; r < 3; ++r)
                dv_old(r) = node(br.from[r]) - node(br.to[r]);
            br.hist = br.G * (br.K * br.i + dv_old + br.e_prev);
            br.e_next = e_new;
            const Eigen::Vector3d inj = br.G * e_new + br.hist;
            for (int r = 0; r < 3; ++r) {
                if (br.from[r] >= 0) rhs(br.from[r]) -= inj(r);
                if (br.to[r] >= 0) rhs(br.to[r]) += inj(r);
            }
        }
        double v0_old = 0.0;
        for (int r = 0; r < 3; ++r)
            v0_old += node(shunt_.node[r]) / 3.0;
        shunt_.hist = shunt_.g * v0_old + shunt_.i0;
        for (int r = 0; r < 3; ++r)
            if (shunt_.node[r] >= 0) rhs(shunt_.node[r]) -= shunt_.hist;

        Eigen::VectorXd v_new = lu_.solve(rhs);
        kcl_residual_ = n_nodes_ > 0 ? (Y_ * v_new - rhs).cwiseAbs().maxCoeff() : 0.0;
        if (!v_new.allFinite()) throw SimulationDiverged(diagnostics("non-finite node voltage"));
        v_ = v_new;

        for (auto &br : rl_) {
            Eigen::Vector3d dv;
            for (int r = 0; r < 3; ++r)
                dv(r) = node(br.from[r]) - node(br.to[r]);
            br.i = br.G * (dv + br.e_next) + br.hist;
            br.e_prev = br.e_next;
        }
        double v0 = 0.0;
        for (int r = 0; r < 3; ++r)
            v0 += node(shunt_.node[r]) / 3.0;
        shunt_.i0 = shunt_.g * v0 + shunt_.hist;
        last_u_ = u;
        ++step_;
        refresh_sample();
        for (double x : sample_.i_t)
            if (!std::isfinite(x)) throw SimulationDiverged(diagnostics("non-finite branch current"));
        return sample_;
    }

    const ThreePhaseSample &sample() const { return sample_; }
    double kcl_residual() const { return kcl_residual_; }

    // Magnetic energy held in all inductive branches.
    double stored_energy() const
    {
        double e = 0.0;
        for (const auto &br : rl_)
            e += 0.5 * br.i.dot(br.L * br.i);
        e += 1.5 * shunt_.L0 * shunt_.i0 * shunt_.i0;
        return e;
    }

    // Zero-sequence part of the inverter-side current (blocked by the delta winding).
    double inverter_zero_sequence_current() const { return zero_sequence(sample_.i_t); }
    // Zero-sequence current drawn by the grounded-wye winding at bus 1.
    double transformer_ground_current() const { return shunt_.i0; }

    std::string node_name(int matrix_index) const
    {
        for (int k = 0; k < kLogical; ++k)
            if (index_[k] == matrix_index) return logical_name(k);
        return "?";
    }

private:
    enum class Source { None, Inverter, Grid };

    struct RLBranch {
        std::array<int, 3> from{}, to{};
        Eigen::Matrix3d R = Eigen::Matrix3d::Zero(), L = Eigen::Matrix3d::Zero();
        Eigen::Matrix3d G, K;
        Source source = Source::None;
        Eigen::Vector3d i = Eigen::Vector3d::Zero(), hist = Eigen::Vector3d::Zero();
        Eigen::Vector3d e_prev = Eigen::Vector3d::Zero(), e_next = Eigen::Vector3d::Zero();
    };

    struct ZeroShunt {
        std::array<int, 3> node{-1, -1, -1};
        double L0 = 0.0, g = 0.0, i0 = 0.0, hist = 0.0;
    };

    struct Conductance {
        int a, b;
        double g;
    };

    // logical nodes: neutral, T abc, B1 abc, F abc, B2 abc, fault common
    static constexpr int kNeutral = 0, kT = 1, kB1 = 4, kF = 7, kB2 = 10, kCommon = 13, kLogical = 14;
    static constexpr double kMinFaultOhmPu = 1e-6;

    static std::string logical_name(int k)
    {
        if (k == kNeutral) return "inverter neutral";
        if (k == kCommon) return "fault common point";
        static const char *groups[] = {"terminal", "bus1", "fault point", "bus2"};
        const int g = (k - 1) / 3;
        return std::string(groups[g]) + "." + "abc"[(k - 1) % 3];
    }

    bool active(double t) const
    {
        return disturbance_ && t >= disturbance_->t_on && t < disturbance_->t_off;
    }

    double node(int idx) const { return idx >= 0 ? v_(idx) : 0.0; }

    static Eigen::Matrix3d sequence_matrix(double self0, double self1)
    {
        const double s = (self0 + 2.0 * self1) / 3.0, m = (self0 - self1) / 3.0;
        Eigen::Matrix3d out;
        out << s, m, m, m, s, m, m, m, s;
        return out;
    }

    void build_topology()
    {
        const double w = p_.w1();
        // aliasing of zero-length sections
        std::array<int, kLogical> parent{};
        for (int k = 0; k < kLogical; ++k)
            parent[k] = k;
        const bool fwd = placement_.side == FaultSide::Forward;
        const double m = placement_.m;
        const bool no_line = p_.line_km == 0.0;
        if (no_line)
            for (int r = 0; r < 3; ++r)
                parent[kB2 + r] = kB1 + r;
        if ((fwd && (m == 0.0 || no_line)) || (!fwd && (m == 0.0 || no_line)))
            for (int r = 0; r < 3; ++r)
                parent[kF + r] = kB1 + r;
        else if (fwd && m == 1.0)
            for (int r = 0; r < 3; ++r)
                parent[kF + r] = kB2 + r;
        int count = 0;
        index_.fill(-1);
        for (int k = 0; k < kLogical; ++k)
            if (parent[k] == k) index_[k] = count++;
        for (int k = 0; k < kLogical; ++k)
            index_[k] = index_[parent[k]];
        n_nodes_ = count;
        v_ = Eigen::VectorXd::Zero(count);

        auto idx3 = [&](int base) { return std::array<int, 3>{index_[base], index_[base + 1], index_[base + 2]}; };
        const std::array<int, 3> ground{-1, -1, -1};

        RLBranch inv;
        inv.from = {index_[kNeutral], index_[kNeutral], index_[kNeutral]};
        inv.to = idx3(kT);
        const double n2 = n_ * n_;
        inv.R = Eigen::Matrix3d::Identity() * n2 * p_.r_filter;
        inv.L = Eigen::Matrix3d::Identity() * n2 * p_.x_f / w;
        inv.source = Source::Inverter;
        inv_ = static_cast<int>(rl_.size());
        rl_.push_back(inv);

        RLBranch xfmr;
        xfmr.from = idx3(kT);
        xfmr.to = idx3(kB1);
        xfmr.L = Eigen::Matrix3d::Identity() * p_.x_t / w;
        xfmr_ = static_cast<int>(rl_.size());
        rl_.push_back(xfmr);

        shunt_.node = idx3(kB1);
        shunt_.L0 = p_.x_t / w;

        const Phasor zl1 = p_.z_l1(), zl0 = p_.z_l0();
        auto line = [&](std::array<int, 3> a, std::array<int, 3> b, double frac) {
            RLBranch br;
            br.from = a;
            br.to = b;
            br.R = sequence_matrix(frac * zl0.real(), frac * zl1.real());
            br.L = sequence_matrix(frac * zl0.imag() / w, frac * zl1.imag() / w);
            rl_.push_back(br);
        };
        if (!no_line) {
            if (fwd) {
                if (m > 0.0 && m < 1.0) {
                    line(idx3(kB1), idx3(kF), m);
                    line(idx3(kF), idx3(kB2), 1.0 - m);
                } else {
                    line(idx3(kB1), idx3(kB2), 1.0);
                }
            } else {
                line(idx3(kB1), idx3(kB2), 1.0);
                if (m > 0.0) {
                    stub_ = static_cast<int>(rl_.size());
                    line(idx3(kB1), idx3(kF), m);
                }
            }
        }

        RLBranch grid;
        grid.from = ground;
        grid.to = idx3(kB2);
        grid.R = Eigen::Matrix3d::Identity() * p_.z_g.real();
        grid.L = Eigen::Matrix3d::Identity() * p_.z_g.imag() / w;
        grid.source = Source::Grid;
        rl_.push_back(grid);

        for (auto &br : rl_) {
            const Eigen::Matrix3d A = br.R + 2.0 * br.L / ts_;
            br.G = A.inverse();
            br.K = 2.0 * br.L / ts_ - br.R;
        }
        shunt_.g = ts_ / (2.0 * shunt_.L0);
    }

    template <typename M, typename B>
    static void stamp(M &Y, const std::array<int, 3> &from, const std::array<int, 3> &to, const B &g)
    {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                if (from[r] >= 0 && from[c] >= 0) Y(from[r], from[c]) += g(r, c);
                if (to[r] >= 0 && to[c] >= 0) Y(to[r], to[c]) += g(r, c);
                if (from[r] >= 0 && to[c] >= 0) Y(from[r], to[c]) -= g(r, c);
                if (to[r] >= 0 && from[c] >= 0) Y(to[r], from[c]) -= g(r, c);
            }
    }

    template <typename M>
    static void stamp_scalar(M &Y, int a, int b, double g)
    {
        if (a >= 0) Y(a, a) += g;
        if (b >= 0) Y(b, b) += g;
        if (a >= 0 && b >= 0) {
            Y(a, b) -= g;
            Y(b, a) -= g;
        }
    }

    void refactor()
    {
        conductances_.clear();
        if (fault_) {
            const auto topo = topology(fault_->type);
            const double r = std::max(fault_->r_f_ohm / p_.z_base_grid(), kMinFaultOhmPu);
            const int common = topo.grounded ? -1 : index_[kCommon];
            for (int k = 0; k < 3; ++k)
                if (topo.phases[k]) conductances_.push_back({index_[kF + k], common, 1.0 / r});
            if (!topo.grounded) {
                // a floating common point with no branches would be singular; tie it weakly
                // only when needed (never for supported types, which use at least two phases)
            }
        }
        Y_ = Eigen::MatrixXd::Zero(n_nodes_, n_nodes_);
        for (const auto &br : rl_)
            stamp(Y_, br.from, br.to, br.G);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                if (shunt_.node[r] >= 0 && shunt_.node[c] >= 0) Y_(shunt_.node[r], shunt_.node[c]) += shunt_.g / 3.0;
        for (const auto &g : conductances_)
            stamp_scalar(Y_, g.a, g.b, g.g);
        // the fault common point is only present while an ungrounded fault is applied
        const int common = index_[kCommon];
        if (Y_(common, common) == 0.0) Y_(common, common) = 1.0;
        for (int k = 0; k < n_nodes_; ++k)
            if (!(std::abs(Y_(k, k)) > 0.0))
                throw std::runtime_error("singular conductance matrix at node '" + node_name(k) + "'");
        lu_ = Y_.partialPivLu();
        if (std::abs(lu_.determinant()) == 0.0) throw std::runtime_error("singular conductance matrix");
    }

    void refresh_sample()
    {
        sample_.t = time();
        const auto &inv = rl_[inv_];
        const auto &xf = rl_[xfmr_];
        std::array<double, 3> i_stub{};
        if (stub_ >= 0) {
            for (int r = 0; r < 3; ++r)
                i_stub[r] = rl_[stub_].i(r);
        } else if (fault_ && placement_.side == FaultSide::Reverse) {
            // reverse fault sitting on bus 1: its current does not pass the relay
            for (const auto &g : conductances_)
                for (int r = 0; r < 3; ++r)
                    if (g.a == index_[kB1 + r]) i_stub[r] += g.g * (node(g.a) - node(g.b));
        }
        for (int r = 0; r < 3; ++r) {
            sample_.v_poc[r] = node(index_[kB1 + r]);
            sample_.i_poc[r] = xf.i(r) - shunt_.i0 - i_stub[r];
            sample_.v_t[r] = node(index_[kT + r]) / n_;
            sample_.i_t[r] = n_ * inv.i(r);
        }
    }

    std::string diagnostics(const std::string &what) const
    {
        std::ostringstream os;
        os << what << " at t=" << time() << " s; last inverter command [" << last_u_[0] << ", " << last_u_[1] << ", "
           << last_u_[2] << "]; last good terminal current [" << sample_.i_t[0] << ", " << sample_.i_t[1] << ", "
           << sample_.i_t[2] << "]";
        return os.str();
    }

    NetworkParams p_;
    double ts_;
    FaultPlacement placement_;
    double n_ = 1.0;
    std::array<int, kLogical> index_{};
    int n_nodes_ = 0;
    std::vector<RLBranch> rl_;
    int inv_ = -1, xfmr_ = -1, stub_ = -1;
    ZeroShunt shunt_;
    std::vector<Conductance> conductances_;
    std::optional<FaultSpec> fault_;
    std::optional<GridDisturbance> disturbance_;
    Eigen::MatrixXd Y_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    Eigen::VectorXd v_;
    long long step_ = 0;
    double kcl_residual_ = 0.0;
    std::array<double, 3> last_u_{};
    ThreePhaseSample sample_;
};

} // namespace gfm

#endif
