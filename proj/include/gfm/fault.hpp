#ifndef GFM_FAULT_HPP
#define GFM_FAULT_HPP

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gfm {

enum class FaultType { AG, BG, CG, AB, BC, CA, ABG, BCG, CAG, ABC, ABCG };

inline constexpr std::array<FaultType, 11> all_fault_types{
    FaultType::AG,  FaultType::BG,  FaultType::CG,  FaultType::AB,  FaultType::BC,  FaultType::CA,
    FaultType::ABG, FaultType::BCG, FaultType::CAG, FaultType::ABC, FaultType::ABCG};

inline std::string_view to_string(FaultType t)
{
    switch (t) {
    case FaultType::AG: return "ag";
    case FaultType::BG: return "bg";
    case FaultType::CG: return "cg";
    case FaultType::AB: return "ab";
    case FaultType::BC: return "bc";
    case FaultType::CA: return "ca";
    case FaultType::ABG: return "abg";
    case FaultType::BCG: return "bcg";
    case FaultType::CAG: return "cag";
    case FaultType::ABC: return "abc";
    case FaultType::ABCG: return "abcg";
    }
    return "?";
}

inline FaultType parse_fault_type(std::string_view s)
{
    for (auto t : all_fault_types)
        if (to_string(t) == s) return t;
    throw std::invalid_argument("unknown fault type '" + std::string(s) + "'");
}

// Which phases are involved and whether the fault path reaches ground.
struct FaultTopology {
    std::array<bool, 3> phases{};
    bool grounded = false;
};

inline FaultTopology topology(FaultType t)
{
    switch (t) {
    case FaultType::AG: return {{true, false, false}, true};
    case FaultType::BG: return {{false, true, false}, true};
    case FaultType::CG: return {{false, false, true}, true};
    case FaultType::AB: return {{true, true, false}, false};
    case FaultType::BC: return {{false, true, true}, false};
    case FaultType::CA: return {{true, false, true}, false};
    case FaultType::ABG: return {{true, true, false}, true};
    case FaultType::BCG: return {{false, true, true}, true};
    case FaultType::CAG: return {{true, false, true}, true};
    case FaultType::ABC: return {{true, true, true}, false};
    case FaultType::ABCG: return {{true, true, true}, true};
    }
    throw std::invalid_argument("unknown fault type");
}

inline bool is_ground_fault(FaultType t) { return topology(t).grounded; }

// Forward faults sit on the protected line (F_y); reverse faults sit on a
// stub behind bus 1 (F_x).
enum class FaultSide { Forward, Reverse };

inline std::string_view to_string(FaultSide s) { return s == FaultSide::Forward ? "forward" : "reverse"; }

inline FaultSide parse_fault_side(std::string_view s)
{
    if (s == "forward") return FaultSide::Forward;
    if (s == "reverse") return FaultSide::Reverse;
    throw std::invalid_argument("unknown fault side '" + std::string(s) + "'");
}

// Each faulted phase connects through r_f to a common point, which is tied
// to ground for ground faults and left floating otherwise.
struct FaultSpec {
    FaultType type = FaultType::AG;
    double m = 0.5;      // fraction of line (or stub) length
    double r_f_ohm = 0.0;
    double t_on = 0.0;
    double t_off = 1e9;
    FaultSide side = FaultSide::Forward;

    void validate() const
    {
        if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("fault.m must lie in [0, 1]");
        if (!(r_f_ohm >= 0.0)) throw std::invalid_argument("fault.r_f_ohm must be non-negative");
        if (!(t_off > t_on)) throw std::invalid_argument("fault.t_off must exceed fault.t_on");
    }
};

struct GridDisturbance {
    double sag_depth = 1.0;   // retained voltage, p.u.
    double phase_jump_deg = 0.0;
    double t_on = 0.0;
    double t_off = 1e9;

    void validate() const
    {
        if (!(sag_depth >= 0.0 && sag_depth <= 1.0))
            throw std::invalid_argument("disturbance.sag_depth must lie in [0, 1]");
        if (!(t_off > t_on)) throw std::invalid_argument("disturbance.t_off must exceed disturbance.t_on");
    }
};

} // namespace gfm

#endif
