#ifndef GFM_PHASOR_HPP
#define GFM_PHASOR_HPP

#include <array>
#include <cmath>
#include <complex>
#include <numbers>

namespace gfm {

// Fundamental-frequency phasor in per-unit, RMS convention:
// x(t) = sqrt(2) * Re(X * exp(j*w1*t)), so a unit-peak cosine is 0.7071.
using Phasor = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double sqrt2 = std::numbers::sqrt2;
inline constexpr Phasor unit_j{0.0, 1.0};

constexpr double deg(double rad) { return rad * 180.0 / pi; }
constexpr double rad(double deg) { return deg * pi / 180.0; }

inline double magnitude(Phasor p) { return std::abs(p); }

// Angle in degrees, in (-180, 180].
inline double angle_deg(Phasor p)
{
    double a = deg(std::arg(p));
    if (a <= -180.0) a += 360.0;
    return a;
}

inline Phasor polar_deg(double mag, double angle)
{
    return std::polar(mag, rad(angle));
}

// Wrap an angle in degrees into (-180, 180].
inline double wrap_deg(double a)
{
    a = std::fmod(a, 360.0);
    if (a > 180.0) a -= 360.0;
    if (a <= -180.0) a += 360.0;
    return a;
}

inline double wrap_rad(double a)
{
    a = std::fmod(a, 2.0 * pi);
    if (a > pi) a -= 2.0 * pi;
    if (a <= -pi) a += 2.0 * pi;
    return a;
}

// The 1 at 120 degrees rotation operator.
inline const Phasor alpha_op = std::polar(1.0, 2.0 * pi / 3.0);

struct SequenceSet {
    Phasor zero{};
    Phasor positive{};
    Phasor negative{};
};

using PhaseSet = std::array<Phasor, 3>;

// Fortescue transform, phase a as reference.
inline SequenceSet abc_to_sequence(Phasor a, Phasor b, Phasor c)
{
    const Phasor a1 = alpha_op;
    const Phasor a2 = alpha_op * alpha_op;
    return {(a + b + c) / 3.0, (a + a1 * b + a2 * c) / 3.0, (a + a2 * b + a1 * c) / 3.0};
}

inline SequenceSet abc_to_sequence(const PhaseSet &p)
{
    return abc_to_sequence(p[0], p[1], p[2]);
}

inline PhaseSet sequence_to_abc(const SequenceSet &s)
{
    const Phasor a1 = alpha_op;
    const Phasor a2 = alpha_op * alpha_op;
    return {s.zero + s.positive + s.negative,
            s.zero + a2 * s.positive + a1 * s.negative,
            s.zero + a1 * s.positive + a2 * s.negative};
}

// Two-dimensional stationary-frame vector (amplitude-invariant Clarke).
struct AlphaBeta {
    double alpha = 0.0;
    double beta = 0.0;

    std::complex<double> complex() const { return {alpha, beta}; }
    static AlphaBeta from(std::complex<double> z) { return {z.real(), z.imag()}; }
};

inline AlphaBeta clarke(const std::array<double, 3> &abc)
{
    return {(2.0 * abc[0] - abc[1] - abc[2]) / 3.0, (abc[1] - abc[2]) / std::sqrt(3.0)};
}

inline std::array<double, 3> inverse_clarke(AlphaBeta ab)
{
    const double h = std::sqrt(3.0) / 2.0;
    return {ab.alpha, -0.5 * ab.alpha + h * ab.beta, -0.5 * ab.alpha - h * ab.beta};
}

inline double zero_sequence(const std::array<double, 3> &abc)
{
    return (abc[0] + abc[1] + abc[2]) / 3.0;
}

} // namespace gfm

#endif
