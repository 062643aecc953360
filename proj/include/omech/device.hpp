#ifndef OMECH_DEVICE_HPP
#define OMECH_DEVICE_HPP

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "omech/errors.hpp"

namespace omech
{
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Ordinary frequency (Hz, i.e. value/2pi) to angular frequency (rad/s).
constexpr double angular(double hz) noexcept { return kTwoPi * hz; }

// Static device rates. Every frequency is stored as an ordinary frequency in Hz.
struct DeviceParams
{
    double omega_c = 0.0;  // cavity resonance
    double omega_m = 0.0;  // mechanical resonance
    double kappa = 0.0;    // total cavity linewidth
    double eta = 0.0;      // kappa_e / kappa
    double gamma_m = 0.0;  // mechanical linewidth
    std::optional<double> g0;  // single-photon coupling rate, when known

    double kappa_ext() const noexcept { return eta * kappa; }
};

// Field-enhanced coupling strength G (Hz), non-negative.
struct Coupling
{
    double G = 0.0;

    constexpr Coupling() = default;
    constexpr explicit Coupling(double g_hz) : G(g_hz) {}
};

inline void validate(const DeviceParams &p)
{
    auto positive = [](double v, const char *name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw ParameterError(std::string(name) + " must be positive and finite");
    };
    positive(p.omega_c, "omega_c");
    positive(p.omega_m, "omega_m");
    positive(p.kappa, "kappa");
    positive(p.gamma_m, "gamma_m");
    if (!(p.eta > 0.0 && p.eta < 1.0))
        throw ParameterError("eta must lie in (0, 1)");
    if (p.g0 && !(*p.g0 >= 0.0))
        throw ParameterError("g0 must be non-negative");
}

inline void validate(const Coupling &c)
{
    if (!(c.G >= 0.0) || !std::isfinite(c.G))
        throw ParameterError("coupling G must be non-negative and finite");
}

// Calibrated values of the reference electromechanical device (aluminum 3D cavity + SiN membrane).
inline DeviceParams paper_device()
{
    DeviceParams p;
    p.omega_c = 5.318e9;
    p.omega_m = 755.5e3;
    p.kappa = 420e3;
    p.eta = 0.651;
    p.gamma_m = 9.7e-3;
    return p;
}

} // namespace omech

#endif // OMECH_DEVICE_HPP
