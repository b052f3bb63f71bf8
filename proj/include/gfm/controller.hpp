#ifndef GFM_CONTROLLER_HPP
#define GFM_CONTROLLER_HPP

// Grid-forming inverter control with the protection-interoperable fault
// mode. Instantaneous quantities are peak-based per-unit on the inverter
// side; complex alpha-beta vectors carry the same scaling, so a rated
// balanced set has |x_ab| = 1.

#include "gfm/estimators.hpp"
#include "gfm/phasor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gfm {

enum class ControllerMode { NormalSlow, NormalFast, Interoperable };

inline std::string_view to_string(ControllerMode m)
{
    switch (m) {
    case ControllerMode::NormalSlow: return "normal_slow";
    case ControllerMode::NormalFast: return "normal_fast";
    case ControllerMode::Interoperable: return "interoperable";
    }
    return "?";
}

struct ControllerParams {
    double w1 = 2.0 * pi * 50.0;
    double p_ref = 0.8;
    double q_ref = 0.0;
    double v_n1 = 1.0;

    double k_pp = 0.01 * 2.0 * pi * 50.0; // rad/s per p.u.
    double fast_gain_factor = 10.0;
    double i_thf = 0.94;
    bool use_vsg = false;
    double d = 20.0; // p.u. power per p.u. frequency
    double h = 2.0;  // s

    double k_q = 0.05;
    double q_lpf_hz = 10.0;

    bool interoperable_enabled = true;
    double i_th1 = 1.05;
    double t1 = 0.05;
    double t_p = 1.0;
    double t_r = 0.05;
    double r_vt = 0.2;
    double r_vt_fade = 0.0; // fraction of t_r at the end over which R_vt fades linearly to zero

    double k_x1 = 4.0, k_x2 = 2.5;
    double i_thx1 = 1.0, i_thx2 = 0.1;
    double i_lim1 = 1.5, i_lim2 = 0.5;
    double lpf1_hz = 10.0, lpf2_hz = 50.0;

    double r_ad = 0.1;
    double hpf_hz = 5.0;
    bool dc_reject = true; // half-cycle DC cancellation ahead of the X_v magnitude estimates
    double hpf_interop_hz = 0.0; // damping corner in the interoperable mode after t_r, 0 keeps hpf_hz

    double x_f = 0.1443; // filter reactance seen by the virtual-impedance law

    // design point for the gain check
    double design_dv1 = 1.0;
    double design_v_t2 = 0.5;
    double design_i_tpre1 = 1.0;

    void validate() const
    {
        auto require = [](bool ok, const char *what) {
            if (!ok) throw std::invalid_argument(what);
        };
        require(w1 > 0.0, "controller.w1 must be positive");
        require(v_n1 > 0.0, "controller.v_n1 must be positive");
        require(k_pp >= 0.0 && fast_gain_factor >= 1.0, "controller APC gains out of range");
        require(!use_vsg || (h > 0.0 && d >= 0.0), "controller VSG constants out of range");
        require(k_q >= 0.0 && q_lpf_hz > 0.0, "controller RPC settings out of range");
        require(i_th1 > 1.0, "controller.i_th1 must exceed the nominal current");
        require(t1 > 0.0 && t_p > 0.0 && t_r >= 0.0, "controller timers must be positive");
        require(t1 < t_p, "controller.t1 must be shorter than controller.t_p");
        require(r_vt >= 0.0 && r_ad >= 0.0, "controller resistances must be non-negative");
        require(r_vt_fade >= 0.0 && r_vt_fade <= 1.0, "controller.r_vt_fade must lie in [0, 1]");
        require(k_x1 >= 0.0 && k_x2 >= 0.0, "controller virtual-inductance gains must be non-negative");
        require(i_thx1 <= i_lim1, "controller.i_thx1 must not exceed controller.i_lim1");
        require(i_thx2 <= i_lim2, "controller.i_thx2 must not exceed controller.i_lim2");
        require(lpf1_hz > 0.0 && lpf2_hz > 0.0 && hpf_hz > 0.0, "controller filter corners must be positive");
        require(hpf_interop_hz >= 0.0, "controller.hpf_interop_hz must be non-negative");
        require(x_f > 0.0, "controller.x_f must be positive");
    }
};

struct GainRequirement {
    double k_x1_min = 0.0;
    double k_x2_min = 0.0;
};

/// Lower bounds on the adaptive-inductance gains so that the steady
/// sequence currents stay within I_lim1/I_lim2 for the given worst-case
/// positive-sequence terminal-voltage deviation and negative-sequence
/// terminal voltage. The design current for each bound is the limit itself.
inline GainRequirement gain_requirements(double dv1, double v_t2, double i_tpre1, double x_f,
                                         const ControllerParams &p)
{
    const double d1 = (p.i_lim1 - i_tpre1) * (p.i_lim1 - p.i_thx1);
    const double d2 = p.i_lim2 * (p.i_lim2 - p.i_thx2);
    if (!(p.i_lim1 - i_tpre1 > 0.0) || !(p.i_lim1 - p.i_thx1 > 0.0))
        throw std::invalid_argument("gain requirement: I_lim1 must exceed both the pre-fault current and I_thX1");
    if (!(p.i_lim2 > 0.0) || !(p.i_lim2 - p.i_thx2 > 0.0))
        throw std::invalid_argument("gain requirement: I_lim2 must be positive and exceed I_thX2");
    return {dv1 / d1 - x_f / (p.i_lim1 - p.i_thx1), v_t2 / d2 - x_f / (p.i_lim2 - p.i_thx2)};
}

inline Phasor interoperable_reference_ab(Phasor e_pre1, Phasor i_tpre1, Phasor z_v1) { return e_pre1 + i_tpre1 * z_v1; }

/// Mode state machine driven by the peak current.
class ModeMachine {
public:
    ModeMachine(const ControllerParams &p, double ts) : p_(p), ts_(ts) {}

    ControllerMode update(double i_max, double i_t1, double t)
    {
        entered_ = false;
        s_f_ = i_max >= p_.i_th1;
        below_ = s_f_ ? 0.0 : below_ + ts_;
        const bool settled = below_ >= p_.t1 - 1e-9 * ts_;
        if (mode_ == ControllerMode::Interoperable) {
            const bool expired = t - entry_t_ >= p_.t_p - 1e-9 * ts_;
            if (settled || expired) mode_ = normal(i_t1);
        } else {
            // a new event needs the current to have settled below threshold for t1
            if (settled) armed_ = true;
            if (s_f_ && armed_) {
                armed_ = false;
                entry_t_ = t;
                transient_until_ = t + p_.t_r;
                if (p_.interoperable_enabled) {
                    mode_ = ControllerMode::Interoperable;
                    entered_ = true;
                }
            }
            if (mode_ != ControllerMode::Interoperable) mode_ = normal(i_t1);
        }
        transient_ = t < transient_until_ - 1e-9 * ts_ &&
                     (mode_ == ControllerMode::Interoperable || !p_.interoperable_enabled);
        return mode_;
    }

    ControllerMode mode() const { return mode_; }
    bool s_f() const { return s_f_; }
    bool s_p() const { return mode_ == ControllerMode::Interoperable; }
    bool transient_active() const { return transient_; }
    double transient_remaining(double t) const { return transient_until_ - t; }
    bool entered() const { return entered_; }
    double entry_time() const { return entry_t_; }

private:
    ControllerMode normal(double i_t1) const
    {
        return i_t1 >= p_.i_thf ? ControllerMode::NormalFast : ControllerMode::NormalSlow;
    }

    ControllerParams p_;
    double ts_;
    ControllerMode mode_ = ControllerMode::NormalSlow;
    bool s_f_ = false, transient_ = false, entered_ = false, armed_ = true;
    double below_ = 0.0, entry_t_ = -1.0, transient_until_ = -1e9;
};

/// Active-power loop. The phase is kept as an offset from w1*t so that
/// freezing it leaves theta advancing at exactly w1.
class ActivePowerControl {
public:
    ActivePowerControl(const ControllerParams &p, double ts) : p_(p), ts_(ts) {}

    void step(double p_meas, ControllerMode mode)
    {
        if (mode == ControllerMode::Interoperable) return; // P1 replaced by P_ref
        const double err = p_.p_ref - p_meas;
        if (p_.use_vsg && mode != ControllerMode::NormalFast) {
            // 2H d(dw)/dt = P_ref - P1 - D dw, with dw in p.u. of w1
            dw_ += ts_ * (err - p_.d * dw_) / (2.0 * p_.h);
            phase_ += ts_ * p_.w1 * dw_;
        } else {
            // the fast mode drops the inertia and runs the first-order droop
            const double k = mode == ControllerMode::NormalFast ? p_.k_pp * p_.fast_gain_factor : p_.k_pp;
            phase_ += ts_ * k * err;
            dw_ = 0.0;
        }
        phase_ = wrap_rad(phase_);
    }

    double phase() const { return phase_; }
    double theta(double t) const { return p_.w1 * t + phase_; }
    void reset(double phase) { phase_ = phase, dw_ = 0.0; }

private:
    ControllerParams p_;
    double ts_;
    double phase_ = 0.0;
    double dw_ = 0.0;
};

/// Q-droop on the filtered reactive power; output held while frozen.
class ReactivePowerControl {
public:
    ReactivePowerControl(const ControllerParams &p, double ts) : p_(p), lpf_(p.q_lpf_hz, ts, p.q_ref), e_(p.v_n1) {}

    double step(double q_meas, bool frozen)
    {
        if (frozen) return e_;
        const double qf = lpf_.step(q_meas);
        e_ = p_.v_n1 - p_.k_q * (qf - p_.q_ref);
        return e_;
    }

    double e_ref() const { return e_; }
    void reset(double q_meas)
    {
        lpf_.reset(q_meas);
        e_ = p_.v_n1 - p_.k_q * (q_meas - p_.q_ref);
    }

private:
    ControllerParams p_;
    LowPass lpf_;
    double e_;
};

/// X_vk = max(0, K_Xk (I_tk - I_thXk)) behind LPF1 on the currents and
/// LPF2 on the reactances.
class AdaptiveVirtualInductance {
public:
    AdaptiveVirtualInductance(const ControllerParams &p, double ts)
        : p_(p), i1_(p.lpf1_hz, ts), i2_(p.lpf1_hz, ts), x1_(p.lpf2_hz, ts), x2_(p.lpf2_hz, ts)
    {
    }

    void step(double i_t1, double i_t2)
    {
        const double a = i1_.step(i_t1), b = i2_.step(i_t2);
        x1_.step(std::max(0.0, p_.k_x1 * (a - p_.i_thx1)));
        x2_.step(std::max(0.0, p_.k_x2 * (b - p_.i_thx2)));
    }

    double x_v1() const { return x1_.value(); }
    double x_v2() const { return x2_.value(); }
    double i_t1() const { return i1_.value(); }
    double i_t2() const { return i2_.value(); }
    void reset(double i_t1, double i_t2)
    {
        i1_.reset(i_t1);
        i2_.reset(i_t2);
        x1_.reset(std::max(0.0, p_.k_x1 * (i_t1 - p_.i_thx1)));
        x2_.reset(std::max(0.0, p_.k_x2 * (i_t2 - p_.i_thx2)));
    }

private:
    ControllerParams p_;
    LowPass i1_, i2_, x1_, x2_;
};

struct ControllerOutput {
    std::array<double, 3> u{};
    ControllerMode mode = ControllerMode::NormalSlow;
    bool s_f = false, s_p = false, transient = false;
    double i_max = 0.0, i_t1 = 0.0, i_t2 = 0.0;
    double x_v1 = 0.0, x_v2 = 0.0;
    double r_vt = 0.0; // transient resistance in use
    double theta = 0.0, e_ref1 = 0.0;
    double p1 = 0.0, q1 = 0.0;
};

class GfmController {
public:
    GfmController(const ControllerParams &p, double ts)
        : p_(p), ts_(ts), modes_(p, ts), apc_(p, ts), rpc_(p, ts), xv_(p, ts), i_sep_(p.w1, ts), v_sep_(p.w1, ts), mag_sep_(p.w1, ts), dsc_(p.w1, ts),
          peak_(p.w1, ts), hpf_d_(p.hpf_hz, ts), hpf_q_(p.hpf_hz, ts),
          hpf_pd_(p.hpf_interop_hz > 0.0 ? p.hpf_interop_hz : p.hpf_hz, ts),
          hpf_pq_(p.hpf_interop_hz > 0.0 ? p.hpf_interop_hz : p.hpf_hz, ts),
          memory_(samples_per_cycle(p.w1, ts))
    {
        p.validate();
        if (!(ts > 0.0)) throw std::invalid_argument("controller time step must be positive");
    }

    /// Starts from a steady operating point: APC phase offset and the
    /// filtered reactive power and current magnitudes that go with it.
    void initialize(double phase, double q_meas, double i_t1 = 0.0, double i_t2 = 0.0)
    {
        apc_.reset(phase);
        rpc_.reset(q_meas);
        xv_.reset(i_t1, i_t2);
    }

    /// Consumes the terminal measurements at time t and returns the command
    /// to apply at t + Ts.
    const ControllerOutput &step(double t, const std::array<double, 3> &v_t, const std::array<double, 3> &i_t)
    {
        const Phasor i_raw = clarke(i_t).complex();
        const auto is = i_sep_.step(AlphaBeta::from(i_raw));
        const Phasor v_raw = clarke(v_t).complex();
        const auto vs = v_sep_.step(AlphaBeta::from(v_raw));
        const Phasor i1 = is.positive.complex(), i2 = is.negative.complex();
        const Phasor v1 = vs.positive.complex();
        const double p1 = (v1 * std::conj(i1)).real();
        const double q1 = (v1 * std::conj(i1)).imag();
        const double i_max = peak_.push(i_t);

        if (p_.dc_reject) {
            // a decaying DC offset leaks into both all-pass sequence estimates
            const auto ms = mag_sep_.step(dsc_.step(AlphaBeta::from(i_raw)));
            xv_.step(std::abs(ms.positive.complex()), std::abs(ms.negative.complex()));
        } else {
            xv_.step(std::abs(i1), std::abs(i2));
        }
        const auto mode = modes_.update(i_max, xv_.i_t1(), t);
        apc_.step(p1, mode);
        const bool frozen = mode == ControllerMode::Interoperable;
        const double e_mag = rpc_.step(q1, frozen);

        const double t_cmd = t + ts_;
        const Phasor rot = std::polar(1.0, p_.w1 * t_cmd);
        const Phasor step_ahead = std::polar(1.0, p_.w1 * ts_);
        const Phasor i1_cmd = i1 * step_ahead;            // positive sequence one step ahead
        double r = modes_.transient_active() ? p_.r_vt : 0.0;
        if (p_.r_vt_fade > 0.0 && p_.t_r > 0.0)
            r *= std::clamp(modes_.transient_remaining(t) / (p_.r_vt_fade * p_.t_r), 0.0, 1.0);
        const Phasor z_v1(r, xv_.x_v1());
        const Phasor z_v2(r, xv_.x_v2());

        if (modes_.entered()) {
            const auto &pre = memory_.oldest();
            e_pre1_ = pre.u1_dq;
            i_tpre1_ = pre.i1_dq;
        }

        Phasor e_ref_ab;
        if (frozen) {
            e_ref_ab = interoperable_reference_ab(e_pre1_, i_tpre1_, z_v1) * rot;
        } else {
            e_ref_ab = std::polar(e_mag, apc_.theta(t_cmd));
        }
        // u = e - Z_v i with i = (u - v_t)/Z_f, solved for u: the same output
        // impedance, fed back through the terminal voltage. The positive-sequence
        // divider acts on the raw vector so it is not delayed by the separator;
        // only the negative-sequence correction goes through it.
        // Negative-sequence phasor impedances act as their conjugates on the alpha-beta vector.
        const Phasor z_f(0.0, p_.x_f);
        const Phasor k1 = z_f / (z_f + z_v1);
        const Phasor k2 = std::conj(z_f) / (std::conj(z_f) + std::conj(z_v2));
        const Phasor v2_cmd = vs.negative.complex() * std::conj(step_ahead);
        const Phasor v1_cmd = v1 * step_ahead;
        const Phasor v_cmd = (v_raw - vs.negative.complex()) * step_ahead + v2_cmd;
        Phasor u1 = v1_cmd + k1 * (e_ref_ab - v1_cmd);
        Phasor u = k1 * e_ref_ab + (1.0 - k1) * v_cmd + (k1 - k2) * v2_cmd;

        // active damping on the positive-sequence current in the synchronous frame
        const Phasor sync = std::polar(1.0, apc_.theta(t_cmd));
        // raw current less its negative sequence, so transients are damped without the separator delay
        const Phasor i_dq = (i_raw - i2) * step_ahead * std::conj(sync);
        const Phasor hp_normal(hpf_d_.step(i_dq.real()), hpf_q_.step(i_dq.imag()));
        const Phasor hp_relay(hpf_pd_.step(i_dq.real()), hpf_pq_.step(i_dq.imag()));
        // once the relay is measuring, slow envelope damping would read as resistance
        const Phasor hp = frozen && !modes_.transient_active() ? hp_relay : hp_normal;
        u1 -= p_.r_ad * hp * sync;
        u -= p_.r_ad * hp * sync;

        memory_.push({u1 * std::conj(rot), i1_cmd * std::conj(rot)});

        const auto u_abc = inverse_clarke(AlphaBeta::from(u));
        out_.u = u_abc;
        out_.mode = mode;
        out_.s_f = modes_.s_f();
        out_.s_p = modes_.s_p();
        out_.transient = modes_.transient_active();
        out_.i_max = i_max;
        out_.i_t1 = xv_.i_t1();
        out_.i_t2 = xv_.i_t2();
        out_.x_v1 = xv_.x_v1();
        out_.x_v2 = xv_.x_v2();
        out_.r_vt = r;
        out_.theta = wrap_rad(std::arg(e_ref_ab));
        out_.e_ref1 = std::abs(e_ref_ab);
        out_.p1 = p1;
        out_.q1 = q1;
        return out_;
    }

    const ControllerOutput &output() const { return out_; }
    const ActivePowerControl &apc() const { return apc_; }
    const ModeMachine &modes() const { return modes_; }
    // Captured pre-fault internal voltage and terminal current (alpha-beta
    // amplitude in the w1*t frame).
    Phasor e_pre1() const { return e_pre1_; }
    Phasor i_tpre1() const { return i_tpre1_; }
    const ControllerParams &params() const { return p_; }

private:
    struct Memory {
        Phasor u1_dq, i1_dq;
    };

    // Fixed-depth history; oldest() is one estimator window old once full.
    class History {
    public:
        explicit History(std::size_t depth) : ring_(depth) {}
        void push(const Memory &m)
        {
            ring_[head_] = m;
            head_ = (head_ + 1) % ring_.size();
            if (count_ < ring_.size()) ++count_;
        }
        const Memory &oldest() const { return count_ < ring_.size() ? ring_[0] : ring_[head_]; }

    private:
        std::vector<Memory> ring_;
        std::size_t head_ = 0, count_ = 0;
    };

    ControllerParams p_;
    double ts_;
    ModeMachine modes_;
    ActivePowerControl apc_;
    ReactivePowerControl rpc_;
    AdaptiveVirtualInductance xv_;
    SequenceSeparator i_sep_, v_sep_, mag_sep_;
    HalfCycleCanceller dsc_;
    PeakTracker peak_;
    HighPass hpf_d_, hpf_q_, hpf_pd_, hpf_pq_;
    History memory_;
    Phasor e_pre1_{}, i_tpre1_{};
    ControllerOutput out_;
};

} // namespace gfm

#endif
