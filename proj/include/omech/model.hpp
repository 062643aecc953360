#ifndef OMECH_MODEL_HPP
#define OMECH_MODEL_HPP

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>

#include "omech/device.hpp"
#include "omech/errors.hpp"

// Steady-state probe response of the red-detuned, linearized cavity/membrane system
// and the closed-form quantities derived from it.
namespace omech
{
using cdouble = std::complex<double>;

// |t_z| below this value is treated as sitting on the perfect-absorption zero.
inline constexpr double kDegeneracyThreshold = 1e-10;
// Relative half-width of the band around G_c / G_b reported as "on the boundary".
inline constexpr double kBoundaryFlagWidth = 1e-6;

// Principal argument in (-pi, pi]; a real-negative value reports exactly +pi.
inline double principal_phase(cdouble z) noexcept
{
    if (z.imag() == 0.0 && z.real() < 0.0)
        return std::numbers::pi;
    const double phi = std::arg(z);
    return phi <= -std::numbers::pi ? std::numbers::pi : phi;
}

struct ComplexResponse
{
    cdouble t{1.0, 0.0};
    double amplitude_db = 0.0;   // 20 log10 |t|
    double phase = 0.0;          // arg t in (-pi, pi]
    std::optional<double> delay; // group delay, seconds

    static ComplexResponse from(cdouble value)
    {
        ComplexResponse r;
        r.t = value;
        r.amplitude_db = 20.0 * std::log10(std::abs(value));
        r.phase = principal_phase(value);
        return r;
    }

    double power() const noexcept { return std::norm(t); }
};

namespace detail
{
// Numerator and denominator of t = Num / D in angular units, with
//   D   = (i D + g/2)(i D + k/2) + G^2
//   Num = D - eta k (i D + g/2) = (i D + g/2)(i D + (1/2 - eta) k) + G^2.
// Writing Num this way keeps the resonance value free of the 1 - x cancellation.
struct TransferParts
{
    cdouble num;
    cdouble den;
    cdouble dnum; // d Num / d Delta_ang
    cdouble dden; // d D / d Delta_ang
};

inline TransferParts transfer_parts(const DeviceParams &p, double G_hz, double delta_hz)
{
    const double d = angular(delta_hz);
    const double k = angular(p.kappa);
    const double g = angular(p.gamma_m);
    const double G = angular(G_hz);
    const cdouble I{0.0, 1.0};
    const cdouble mech{g / 2.0, d};
    const cdouble cav{k / 2.0, d};
    const cdouble cav_ext{(0.5 - p.eta) * k, d};
    TransferParts parts;
    parts.den = mech * cav + G * G;
    parts.num = mech * cav_ext + G * G;
    parts.dnum = I * (mech + cav_ext);
    parts.dden = I * (mech + cav);
    return parts;
}
} // namespace detail

// Raw complex transmission t(Delta); delta is the probe detuning (omega_c - Omega_p)/2pi in Hz.
inline cdouble transmission_coefficient(const DeviceParams &p, Coupling c, double delta_hz)
{
    validate(p);
    validate(c);
    const auto parts = detail::transfer_parts(p, c.G, delta_hz);
    return parts.num / parts.den;
}

inline ComplexResponse transmission(const DeviceParams &p, Coupling c, double delta_hz)
{
    return ComplexResponse::from(transmission_coefficient(p, c, delta_hz));
}

// Zero-detuning transmission, evaluated from its own closed form (always real).
inline double transmission_at_resonance(const DeviceParams &p, Coupling c)
{
    validate(p);
    validate(c);
    const double G2 = c.G * c.G;
    const double kg = p.kappa * p.gamma_m;
    return (G2 - (p.eta - 0.5) * kg / 2.0) / (G2 + kg / 4.0);
}

// G_c: coupling at which t_z vanishes (mechanically induced coherent perfect absorption).
inline double critical_coupling(const DeviceParams &p)
{
    validate(p);
    if (!(p.eta > 0.5))
        throw NoCriticalCouplingError("critical coupling requires an over-coupled cavity (eta > 1/2); "
                                      "an under-coupled device shows only transparency");
    return std::sqrt((p.eta - 0.5) * p.kappa * p.gamma_m / 2.0);
}

// G_b: coupling separating the absorption dip from the transparency peak (|t_z| = |1 - 2 eta|).
inline double boundary_coupling(const DeviceParams &p)
{
    validate(p);
    if (!(p.eta > 0.5))
        throw NoCriticalCouplingError("boundary coupling requires eta > 1/2");
    if (p.eta > 1.0 - 1e-9)
        throw ParameterError("boundary coupling diverges as eta -> 1");
    return std::sqrt((p.eta / 2.0 - 0.25) * p.kappa * p.gamma_m / (1.0 - p.eta));
}

// pi below G_c, 0 above it.
inline double phase_at_resonance(const DeviceParams &p, Coupling c)
{
    const double tz = transmission_at_resonance(p, c);
    if (std::abs(tz) < kDegeneracyThreshold)
        throw SingularityError("phase at resonance is undefined at the critical coupling");
    return tz < 0.0 ? std::numbers::pi : 0.0;
}

// tau = -d arg t / d Delta_ang in seconds, by closed-form differentiation of Num / D.
inline double group_delay_analytic(const DeviceParams &p, Coupling c, double delta_hz)
{
    validate(p);
    validate(c);
    const auto parts = detail::transfer_parts(p, c.G, delta_hz);
    if (std::abs(parts.num / parts.den) < kDegeneracyThreshold)
        throw SingularityError("group delay is singular at a zero of the transmission");
    const cdouble log_derivative = parts.dnum / parts.num - parts.dden / parts.den;
    return -log_derivative.imag();
}

// tau_z = eta k (G^2 - g^2/4) / [(g k/4 + G^2)(G^2 - (eta - 1/2) k g / 2)], angular units.
inline double group_delay_at_resonance(const DeviceParams &p, Coupling c)
{
    validate(p);
    validate(c);
    if (std::abs(transmission_at_resonance(p, c)) < kDegeneracyThreshold)
        throw SingularityError("group delay diverges at the critical coupling");
    const double k = angular(p.kappa);
    const double g = angular(p.gamma_m);
    const double G = angular(c.G);
    const double G2 = G * G;
    return p.eta * k * (G2 - g * g / 4.0) / ((g * k / 4.0 + G2) * (G2 - (p.eta - 0.5) * k * g / 2.0));
}

// Linewidth of the mechanically induced feature, gamma_m + 4 G^2 / kappa (Hz).
inline double effective_window_width(const DeviceParams &p, Coupling c)
{
    return p.gamma_m + 4.0 * c.G * c.G / p.kappa;
}

enum class Regime
{
    AdvanceSide,        // G < G_c: partial absorption, output keeps the probe phase
    DelaySideAbsorbing, // G_c < G < G_b: dip, output pi-shifted
    Transparency        // G > G_b: peak above the bare-cavity floor
};

struct RegimeClassification
{
    Regime regime = Regime::AdvanceSide;
    bool near_critical = false;
    bool near_boundary = false;

    bool on_boundary() const noexcept { return near_critical || near_boundary; }
};

inline const char *to_string(Regime r) noexcept
{
    switch (r)
    {
    case Regime::AdvanceSide: return "advance_side";
    case Regime::DelaySideAbsorbing: return "delay_side_absorbing";
    case Regime::Transparency: return "transparency";
    }
    return "unknown";
}

inline RegimeClassification regime_classify(const DeviceParams &p, Coupling c)
{
    validate(c);
    const double Gc = critical_coupling(p);
    const double Gb = boundary_coupling(p);
    RegimeClassification out;
    out.near_critical = std::abs(c.G - Gc) <= kBoundaryFlagWidth * Gc;
    out.near_boundary = std::abs(c.G - Gb) <= kBoundaryFlagWidth * Gb;
    if (c.G < Gc)
        out.regime = Regime::AdvanceSide;
    else if (c.G < Gb)
        out.regime = Regime::DelaySideAbsorbing;
    else
        out.regime = Regime::Transparency;
    return out;
}

// G = g0 sqrt(n_c).
inline Coupling enhanced_coupling(double g0_hz, double n_cavity)
{
    if (!(g0_hz >= 0.0) || !(n_cavity >= 0.0))
        throw ParameterError("single-photon coupling and photon number must be non-negative");
    return Coupling{g0_hz * std::sqrt(n_cavity)};
}

} // namespace omech

#endif // OMECH_MODEL_HPP
