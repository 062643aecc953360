#ifndef OMECH_TWO_MODE_HPP
#define OMECH_TWO_MODE_HPP

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "omech/device.hpp"
#include "omech/errors.hpp"
#include "omech/model.hpp"

// Time-domain equations of motion of the coupled cavity (a) and mechanical (b) modes,
// written in the frame rotating at the probe carrier:
//   da/dt = -(i D + k/2) a - i G b + sqrt(eta k) s_in(t)
//   db/dt = -(i D + g/2) b - i G a
//   s_out = s_in - sqrt(eta k) a
// All rates angular, D the carrier detuning.
namespace omech
{
struct ModeState
{
    cdouble a{0.0, 0.0};
    cdouble b{0.0, 0.0};
};

struct TwoModeSystem
{
    double detuning = 0.0;  // rad/s
    double kappa = 0.0;     // rad/s
    double gamma = 0.0;     // rad/s
    double G = 0.0;         // rad/s
    double drive = 0.0;     // sqrt(eta kappa), sqrt(rad/s)

    static TwoModeSystem from(const DeviceParams &p, Coupling c, double carrier_detuning_hz)
    {
        validate(p);
        validate(c);
        TwoModeSystem s;
        s.detuning = angular(carrier_detuning_hz);
        s.kappa = angular(p.kappa);
        s.gamma = angular(p.gamma_m);
        s.G = angular(c.G);
        s.drive = std::sqrt(p.eta * s.kappa);
        return s;
    }

    ModeState derivative(const ModeState &x, cdouble s_in) const noexcept
    {
        const cdouble I{0.0, 1.0};
        ModeState d;
        d.a = -(I * detuning + kappa / 2.0) * x.a - I * G * x.b + drive * s_in;
        d.b = -(I * detuning + gamma / 2.0) * x.b - I * G * x.a;
        return d;
    }

    cdouble output(const ModeState &x, cdouble s_in) const noexcept { return s_in - drive * x.a; }
};

namespace detail
{
// phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2 without cancellation near z = 0.
inline cdouble phi1(cdouble z)
{
    if (std::abs(z) < 0.5)
    {
        cdouble term{1.0, 0.0}, sum{1.0, 0.0};
        for (int k = 2; k < 24; ++k)
        {
            term *= z / static_cast<double>(k);
            sum += term;
        }
        return sum;
    }
    return (std::exp(z) - 1.0) / z;
}

inline cdouble phi2(cdouble z)
{
    if (std::abs(z) < 0.5)
    {
        cdouble term{0.5, 0.0}, sum{0.5, 0.0};
        for (int k = 3; k < 26; ++k)
        {
            term *= z / static_cast<double>(k);
            sum += term;
        }
        return sum;
    }
    return (phi1(z) - 1.0) / z;
}

using Mat2 = std::array<cdouble, 4>;  // row-major

inline Mat2 scaled_sum(cdouble a, const Mat2 &P, cdouble b, const Mat2 &Q)
{
    return {a * P[0] + b * Q[0], a * P[1] + b * Q[1], a * P[2] + b * Q[2], a * P[3] + b * Q[3]};
}
} // namespace detail

enum class InputHold
{
    ZeroOrder,  // input constant across each sample interval
    Linear      // input linear between adjacent samples
};

// Exact discrete-time update over one sample interval h for the linear system above.
// Built from the spectral decomposition A = -i D + l1 P1 + l2 P2 of the 2x2 system matrix,
// with the eigenvalues written so the slow (mechanical) one carries no cancellation:
//   d = (k - g)/4, s = sqrt(d^2 - G^2), q = G^2/(d + s),
//   l1 = -k/2 + q, l2 = -g/2 - q.
class ExactPropagator
{
public:
    ExactPropagator(const TwoModeSystem &sys, double h, InputHold hold = InputHold::Linear) : sys_(sys), hold_(hold)
    {
        if (!(h > 0.0))
            throw NumericalError("propagator step must be positive");
        const cdouble I{0.0, 1.0};
        const double d = (sys.kappa - sys.gamma) / 4.0;
        const cdouble s = std::sqrt(cdouble{d * d - sys.G * sys.G, 0.0});
        if (std::abs(s) < 1e-9 * (sys.kappa + sys.gamma))
            throw NumericalError("propagator is degenerate at the exceptional point G = (kappa - gamma)/4");
        const cdouble q = sys.G * sys.G / (d + s);
        const cdouble l1 = -I * sys.detuning - sys.kappa / 2.0 + q;
        const cdouble l2 = -I * sys.detuning - sys.gamma / 2.0 - q;
        const cdouble two_s = 2.0 * s;
        const detail::Mat2 P1{(d + s) / two_s, I * sys.G / two_s, I * sys.G / two_s, -q / two_s};
        const detail::Mat2 P2{-q / two_s, -I * sys.G / two_s, -I * sys.G / two_s, (d + s) / two_s};

        phi_ = detail::scaled_sum(std::exp(l1 * h), P1, std::exp(l2 * h), P2);
        const detail::Mat2 g0 = detail::scaled_sum(h * detail::phi1(l1 * h), P1, h * detail::phi1(l2 * h), P2);
        const detail::Mat2 g1 = detail::scaled_sum(h * detail::phi2(l1 * h), P1, h * detail::phi2(l2 * h), P2);
        // Input enters only through a: B = (drive, 0).
        gamma0_ = {g0[0] * sys.drive, g0[2] * sys.drive};
        gamma1_ = {g1[0] * sys.drive, g1[2] * sys.drive};
    }

    // Advance from t to t + h given the input at both ends of the interval.
    ModeState step(const ModeState &x, cdouble u0, cdouble u1) const noexcept
    {
        ModeState y;
        y.a = phi_[0] * x.a + phi_[1] * x.b + gamma0_[0] * u0;
        y.b = phi_[2] * x.a + phi_[3] * x.b + gamma0_[1] * u0;
        if (hold_ == InputHold::Linear)
        {
            y.a += gamma1_[0] * (u1 - u0);
            y.b += gamma1_[1] * (u1 - u0);
        }
        return y;
    }

    const TwoModeSystem &system() const noexcept { return sys_; }

private:
    TwoModeSystem sys_;
    InputHold hold_;
    detail::Mat2 phi_{};
    std::array<cdouble, 2> gamma0_{};
    std::array<cdouble, 2> gamma1_{};
};

// Largest RK4 step accepted by the fixed-step integrator: 0.1 / kappa_ang.
inline double max_rk4_step(const TwoModeSystem &sys) noexcept { return 0.1 / sys.kappa; }

// Classical fixed-step RK4 over [0, h] with the input interpolated linearly between u0 and u1.
inline ModeState rk4_step(const TwoModeSystem &sys, const ModeState &x, cdouble u0, cdouble u1, double h) noexcept
{
    const cdouble um = 0.5 * (u0 + u1);
    auto add = [](const ModeState &s, const ModeState &d, double f) { return ModeState{s.a + f * d.a, s.b + f * d.b}; };
    const ModeState k1 = sys.derivative(x, u0);
    const ModeState k2 = sys.derivative(add(x, k1, h / 2.0), um);
    const ModeState k3 = sys.derivative(add(x, k2, h / 2.0), um);
    const ModeState k4 = sys.derivative(add(x, k3, h), u1);
    ModeState y;
    y.a = x.a + h / 6.0 * (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a);
    y.b = x.b + h / 6.0 * (k1.b + 2.0 * k2.b + 2.0 * k3.b + k4.b);
    return y;
}

} // namespace omech

#endif // OMECH_TWO_MODE_HPP
