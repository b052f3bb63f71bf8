#ifndef GFM_RELAY_HPP
#define GFM_RELAY_HPP

// Supervising elements at bus 1: incremental and sequence directional
// elements and the two phase-selection comparators.

#include "gfm/estimators.hpp"
#include "gfm/fault.hpp"
#include "gfm/oracle.hpp"
#include "gfm/phasor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace gfm {

enum class Direction { Forward, Reverse, NonTripping, Inactive };

inline std::string_view to_string(Direction d)
{
    switch (d) {
    case Direction::Forward: return "forward";
    case Direction::Reverse: return "reverse";
    case Direction::NonTripping: return "non_tripping";
    case Direction::Inactive: return "inactive";
    }
    return "?";
}

struct RelaySettings {
    double w1 = 2.0 * pi * 50.0;
    double floor = 0.05;           // RMS p.u. on operating currents
    double dir_half_width = 65.0;  // degrees around +90 / -90
    double d21_half_width = 15.0;
    double d20_half_width = 30.0;
    double t_r = 0.05;
    double horizon = 1.0; // incremental memory, s

    void validate() const
    {
        if (!(floor > 0.0)) throw std::invalid_argument("relay.floor must be positive");
        if (!(dir_half_width > 0.0 && dir_half_width < 90.0))
            throw std::invalid_argument("relay.dir_half_width must lie in (0, 90)");
        if (!(d21_half_width > 0.0 && d21_half_width < 30.0))
            throw std::invalid_argument("relay.d21_half_width must lie in (0, 30)");
        if (!(d20_half_width > 0.0 && d20_half_width < 60.0))
            throw std::invalid_argument("relay.d20_half_width must lie in (0, 60)");
        if (!(t_r >= 0.0)) throw std::invalid_argument("relay.t_r must be non-negative");
        if (!(horizon > 0.0)) throw std::invalid_argument("relay.horizon must be positive");
    }
};

struct ZoneSector {
    double center = 0.0;     // degrees
    double half_width = 0.0; // degrees
    std::vector<FaultType> labels;

    bool contains(double angle) const { return std::abs(wrap_deg(angle - center)) <= half_width; }
};

struct ZoneTable {
    double forward_center = 90.0;
    double reverse_center = -90.0;
    double dir_half_width = 65.0;
    std::vector<ZoneSector> d21, d20;

    double non_tripping_width() const { return 180.0 - 2.0 * dir_half_width; }

    static ZoneTable build(const RelaySettings &s)
    {
        ZoneTable z;
        z.dir_half_width = s.dir_half_width;
        auto add = [](std::vector<ZoneSector> &out, double c, double w, FaultType t) {
            for (auto &sec : out)
                if (std::abs(wrap_deg(sec.center - c)) < 1e-6) {
                    sec.labels.push_back(t);
                    return;
                }
            out.push_back({wrap_deg(c), w, {t}});
        };
        for (auto t : all_fault_types) {
            const auto c = zone_reference_angles(t);
            if (c.d21_deg) add(z.d21, *c.d21_deg, s.d21_half_width, t);
            if (c.d20_deg) add(z.d20, *c.d20_deg, s.d20_half_width, t);
        }
        return z;
    }

    const ZoneSector *find_d21(double a) const { return find(d21, a); }
    const ZoneSector *find_d20(double a) const { return find(d20, a); }

    std::string report() const
    {
        std::ostringstream os;
        os << "directional: forward " << forward_center << " +/- " << dir_half_width << " deg, reverse "
           << reverse_center << " +/- " << dir_half_width << " deg, non-tripping gaps " << non_tripping_width()
           << " deg\n";
        auto list = [&](const char *name, const std::vector<ZoneSector> &v) {
            for (const auto &s : v) {
                os << name << " " << s.center << " +/- " << s.half_width << " deg:";
                for (auto t : s.labels)
                    os << " " << to_string(t);
                os << "\n";
            }
        };
        list("d21", d21);
        list("d20", d20);
        return os.str();
    }

private:
    static const ZoneSector *find(const std::vector<ZoneSector> &v, double a)
    {
        for (const auto &s : v)
            if (s.contains(a)) return &s;
        return nullptr;
    }
};

inline Direction classify_direction(double angle_deg_, const ZoneTable &z)
{
    if (std::abs(wrap_deg(angle_deg_ - z.forward_center)) <= z.dir_half_width) return Direction::Forward;
    if (std::abs(wrap_deg(angle_deg_ - z.reverse_center)) <= z.dir_half_width) return Direction::Reverse;
    return Direction::NonTripping;
}

// Operating angle of a ratio element: angle of -v/i, so the source-side
// impedance (inductive) appears at +90 for a forward fault.
inline double operating_angle(Phasor v, Phasor i) { return angle_deg(-v / i); }

inline Direction directional_incremental(Phasor dv1, Phasor di1, const ZoneTable &z, double floor)
{
    if (!(std::abs(di1) >= floor)) return Direction::Inactive;
    return classify_direction(operating_angle(dv1, di1), z);
}

struct SequenceDirections {
    Direction neg = Direction::Inactive;
    Direction zero = Direction::Inactive;
};

inline SequenceDirections directional_sequence(Phasor v2, Phasor i2, Phasor v0, Phasor i0, const ZoneTable &z,
                                               double floor)
{
    SequenceDirections d;
    if (std::abs(i2) >= floor) d.neg = classify_direction(operating_angle(v2, i2), z);
    if (std::abs(i0) >= floor) d.zero = classify_direction(operating_angle(v0, i0), z);
    return d;
}

/// Joint phase selection; nullopt means Unresolved.
inline std::optional<FaultType> phase_selection(Phasor di1, Phasor i2, Phasor i0, const ZoneTable &z, double floor)
{
    if (!(std::abs(i2) >= floor) || !(std::abs(di1) >= floor)) return std::nullopt;
    const auto *s21 = z.find_d21(angle_deg(i2) - angle_deg(di1));
    if (!s21) return std::nullopt;
    std::vector<FaultType> candidates;
    if (std::abs(i0) >= floor) {
        const auto *s20 = z.find_d20(angle_deg(i2) - angle_deg(i0));
        if (!s20) return std::nullopt;
        for (auto t : s21->labels)
            if (std::find(s20->labels.begin(), s20->labels.end(), t) != s20->labels.end()) candidates.push_back(t);
    } else {
        for (auto t : s21->labels)
            if (!is_ground_fault(t)) candidates.push_back(t);
    }
    if (candidates.size() != 1) return std::nullopt;
    return candidates.front();
}

struct RelayVerdict {
    double t = 0.0;
    bool pickup = false;
    Direction dir_incremental = Direction::Inactive;
    Direction dir_neg_seq = Direction::Inactive;
    Direction dir_zero_seq = Direction::Inactive;
    std::optional<FaultType> selected_fault_type; // nullopt: unresolved
    // operating angles in degrees, NaN while the element is inactive
    double dphi1 = std::numeric_limits<double>::quiet_NaN();
    double phi2 = std::numeric_limits<double>::quiet_NaN();
    double phi0 = std::numeric_limits<double>::quiet_NaN();
    double dd21 = std::numeric_limits<double>::quiet_NaN();
    double d20 = std::numeric_limits<double>::quiet_NaN();
};

/// Streaming relay on bus-1 samples: sliding DFT per channel, sequence
/// components, incremental memory, pickup and the t_r reporting delay.
class Relay {
public:
    Relay(const RelaySettings &s, double ts)
        : s_(s), ts_(ts), zones_(ZoneTable::build(s)), est_{make_est(s, ts)}, dv1_(s.horizon, ts), di1_(s.horizon, ts)
    {
        s.validate();
    }

    const ZoneTable &zones() const { return zones_; }
    const RelaySettings &settings() const { return s_; }

    const RelayVerdict &step(double t, const std::array<double, 3> &v, const std::array<double, 3> &i)
    {
        if (!first_t_) first_t_ = t;
        for (int k = 0; k < 3; ++k) {
            est_[k].push(v[k]);
            est_[3 + k].push(i[k]);
        }
        verdict_ = RelayVerdict{};
        verdict_.t = t;
        if (!est_[0].ready()) return verdict_;
        // the estimators count samples from the first push; refer to absolute time
        const Phasor ref = std::polar(1.0, -s_.w1 * *first_t_);
        const auto vs = abc_to_sequence(est_[0].phasor() * ref, est_[1].phasor() * ref, est_[2].phasor() * ref);
        const auto is = abc_to_sequence(est_[3].phasor() * ref, est_[4].phasor() * ref, est_[5].phasor() * ref);
        v_ = vs;
        i_ = is;
        const auto dv = dv1_.push(t, vs.positive);
        const auto di = di1_.push(t, is.positive);
        dv1 = dv.value_or(Phasor{});
        di1 = di.value_or(Phasor{});

        const double f = s_.floor;
        const bool any = std::abs(di1) >= f || std::abs(is.negative) >= f || std::abs(is.zero) >= f;
        if (!any) {
            pickup_t_.reset();
            return verdict_;
        }
        if (!pickup_t_) pickup_t_ = t;
        verdict_.pickup = true;
        if (t < *pickup_t_ + s_.t_r - 1e-9 * ts_) return verdict_;

        verdict_.dir_incremental = directional_incremental(dv1, di1, zones_, f);
        const auto sd = directional_sequence(vs.negative, is.negative, vs.zero, is.zero, zones_, f);
        verdict_.dir_neg_seq = sd.neg;
        verdict_.dir_zero_seq = sd.zero;
        verdict_.selected_fault_type = phase_selection(di1, is.negative, is.zero, zones_, f);
        if (verdict_.dir_incremental != Direction::Inactive) verdict_.dphi1 = operating_angle(dv1, di1);
        if (sd.neg != Direction::Inactive) verdict_.phi2 = operating_angle(vs.negative, is.negative);
        if (sd.zero != Direction::Inactive) verdict_.phi0 = operating_angle(vs.zero, is.zero);
        if (std::abs(is.negative) >= f && std::abs(di1) >= f)
            verdict_.dd21 = wrap_deg(angle_deg(is.negative) - angle_deg(di1));
        if (std::abs(is.negative) >= f && std::abs(is.zero) >= f)
            verdict_.d20 = wrap_deg(angle_deg(is.negative) - angle_deg(is.zero));
        return verdict_;
    }

    const RelayVerdict &verdict() const { return verdict_; }
    const SequenceSet &voltage() const { return v_; }
    const SequenceSet &current() const { return i_; }
    Phasor dv1{}, di1{};

private:
    static std::array<PhasorEstimator, 6> make_est(const RelaySettings &s, double ts)
    {
        return {PhasorEstimator(s.w1, ts), PhasorEstimator(s.w1, ts), PhasorEstimator(s.w1, ts),
                PhasorEstimator(s.w1, ts), PhasorEstimator(s.w1, ts), PhasorEstimator(s.w1, ts)};
    }

    RelaySettings s_;
    double ts_;
    ZoneTable zones_;
    std::array<PhasorEstimator, 6> est_;
    DeltaBuffer<Phasor> dv1_, di1_;
    std::optional<double> pickup_t_, first_t_;
    SequenceSet v_, i_;
    RelayVerdict verdict_;
};

} // namespace gfm

#endif
