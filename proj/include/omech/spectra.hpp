#ifndef OMECH_SPECTRA_HPP
#define OMECH_SPECTRA_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "omech/device.hpp"
#include "omech/errors.hpp"
#include "omech/model.hpp"

namespace omech
{
enum class SweepAxis
{
    Detuning,
    Coupling
};

enum class GridScale
{
    Linear,
    Log
};

struct SweepSpec
{
    SweepAxis axis = SweepAxis::Detuning;
    double start = 0.0;  // Hz
    double stop = 0.0;   // Hz
    std::size_t n_points = 2;
    double fixed_G = 0.0;      // coupling held fixed in detuning sweeps
    double fixed_delta = 0.0;  // detuning held fixed in coupling sweeps
    GridScale scale = GridScale::Linear;
};

inline void validate(const SweepSpec &s)
{
    if (!(s.start < s.stop))
        throw ParameterError("sweep requires start < stop");
    if (s.n_points < 2)
        throw ParameterError("sweep requires at least two points");
    if (s.scale == GridScale::Log && !(s.start > 0.0))
        throw ParameterError("log-spaced sweep requires start > 0");
}

// Strictly increasing grid with both endpoints hit exactly.
inline std::vector<double> sweep_grid(const SweepSpec &s)
{
    validate(s);
    std::vector<double> x(s.n_points);
    const double last = static_cast<double>(s.n_points - 1);
    if (s.scale == GridScale::Linear)
    {
        const double step = (s.stop - s.start) / last;
        for (std::size_t i = 0; i < s.n_points; ++i)
            x[i] = s.start + step * static_cast<double>(i);
    }
    else
    {
        const double l0 = std::log(s.start);
        const double l1 = std::log(s.stop);
        for (std::size_t i = 0; i < s.n_points; ++i)
            x[i] = std::exp(l0 + (l1 - l0) * static_cast<double>(i) / last);
    }
    x.front() = s.start;
    x.back() = s.stop;
    return x;
}

struct SpectrumPoint
{
    double x = 0.0;  // detuning or coupling, Hz
    ComplexResponse response;
    bool singular = false;
};

struct Spectrum
{
    std::vector<SpectrumPoint> points;
    DeviceParams device;
    SweepSpec spec;

    std::size_t size() const noexcept { return points.size(); }
};

namespace detail
{
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline SpectrumPoint flagged_point(double x)
{
    SpectrumPoint pt;
    pt.x = x;
    pt.response.t = {kNaN, kNaN};
    pt.response.amplitude_db = kNaN;
    pt.response.phase = kNaN;
    pt.singular = true;
    return pt;
}
} // namespace detail

// Amplitude and phase versus probe detuning at fixed G. The delay channel is left empty.
inline Spectrum sweep_detuning(const DeviceParams &p, const SweepSpec &spec)
{
    if (spec.axis != SweepAxis::Detuning)
        throw ParameterError("sweep_detuning needs a detuning-axis sweep");
    validate(p);
    const auto grid = sweep_grid(spec);
    Spectrum out;
    out.device = p;
    out.spec = spec;
    out.points.reserve(grid.size());
    const Coupling c{spec.fixed_G};
    for (double x : grid)
    {
        try
        {
            SpectrumPoint pt;
            pt.x = x;
            pt.response = transmission(p, c, x);
            pt.singular = std::abs(pt.response.t) < kDegeneracyThreshold;
            out.points.push_back(pt);
        }
        catch (const Error &)
        {
            out.points.push_back(detail::flagged_point(x));
        }
    }
    return out;
}

// T_z, phi_z and tau_z versus coupling, all at zero detuning.
inline Spectrum sweep_coupling_resonance(const DeviceParams &p, const SweepSpec &spec)
{
    if (spec.axis != SweepAxis::Coupling)
        throw ParameterError("sweep_coupling_resonance needs a coupling-axis sweep");
    validate(p);
    const auto grid = sweep_grid(spec);
    Spectrum out;
    out.device = p;
    out.spec = spec;
    out.points.reserve(grid.size());
    for (double G : grid)
    {
        SpectrumPoint pt;
        pt.x = G;
        try
        {
            const Coupling c{G};
            const double tz = transmission_at_resonance(p, c);
            pt.response.t = {tz, 0.0};
            pt.response.amplitude_db = 20.0 * std::log10(std::abs(tz));
            if (std::abs(tz) < kDegeneracyThreshold)
            {
                pt.singular = true;
                pt.response.phase = detail::kNaN;
            }
            else
            {
                pt.response.phase = phase_at_resonance(p, c);
                pt.response.delay = group_delay_at_resonance(p, c);
            }
        }
        catch (const Error &)
        {
            pt = detail::flagged_point(G);
        }
        out.points.push_back(pt);
    }
    return out;
}

// Adds integer multiples of 2pi so adjacent outputs differ by at most pi.
// Aliases silently when the true phase moves by more than pi between samples.
inline std::vector<double> unwrap_phase(std::span<const double> phases)
{
    std::vector<double> out(phases.begin(), phases.end());
    for (std::size_t i = 1; i < out.size(); ++i)
    {
        double step = std::remainder(phases[i] - phases[i - 1], kTwoPi);
        if (step == -std::numbers::pi)
            step = std::numbers::pi;
        out[i] = out[i - 1] + step;
    }
    return out;
}

// Second-order finite-difference derivative on a possibly non-uniform grid:
// three-point central stencil inside, three-point one-sided stencils at both ends.
inline std::vector<double> finite_difference_derivative(std::span<const double> x, std::span<const double> f)
{
    const std::size_t n = x.size();
    if (n < 3 || f.size() != n)
        throw NumericalError("finite-difference derivative needs at least three samples");
    std::vector<double> d(n);
    for (std::size_t i = 1; i + 1 < n; ++i)
    {
        const double h1 = x[i] - x[i - 1];
        const double h2 = x[i + 1] - x[i];
        d[i] = -h2 / (h1 * (h1 + h2)) * f[i - 1] + (h2 - h1) / (h1 * h2) * f[i] + h1 / (h2 * (h1 + h2)) * f[i + 1];
    }
    {
        const double h1 = x[1] - x[0];
        const double h2 = x[2] - x[1];
        d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2];
    }
    {
        const double h1 = x[n - 2] - x[n - 3];
        const double h2 = x[n - 1] - x[n - 2];
        d[n - 1] = h2 / (h1 * (h1 + h2)) * f[n - 3] - (h1 + h2) / (h1 * h2) * f[n - 2]
                   + (h1 + 2.0 * h2) / (h2 * (h1 + h2)) * f[n - 1];
    }
    return d;
}

// Fills the delay channel of a detuning spectrum with -(1/2pi) d(unwrapped phase)/d(detuning).
// Points whose stencil touches a singular sample get a NaN delay.
inline Spectrum numeric_group_delay(Spectrum s)
{
    if (s.spec.axis != SweepAxis::Detuning)
        throw ParameterError("numeric group delay needs a detuning-axis spectrum");
    const std::size_t n = s.points.size();
    if (n < 3)
        throw NumericalError("numeric group delay needs at least three points");
    std::vector<double> x(n), phase(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        x[i] = s.points[i].x;
        phase[i] = s.points[i].singular ? (i > 0 ? phase[i - 1] : 0.0) : s.points[i].response.phase;
    }
    const auto unwrapped = unwrap_phase(phase);
    const auto slope = finite_difference_derivative(x, unwrapped);
    for (std::size_t i = 0; i < n; ++i)
    {
        const std::size_t lo = i == 0 ? 0 : (i + 1 == n ? n - 3 : i - 1);
        const std::size_t hi = lo + 2;
        bool touched = false;
        for (std::size_t j = lo; j <= hi; ++j)
            touched = touched || s.points[j].singular;
        s.points[i].response.delay = touched ? detail::kNaN : -slope[i] / kTwoPi;
    }
    return s;
}

// Half-span used when no detuning window is given: 5 max(effective window width, gamma_m).
inline double default_detuning_half_span(const DeviceParams &p, Coupling c)
{
    return 5.0 * std::max(effective_window_width(p, c), p.gamma_m);
}

inline SweepSpec default_detuning_sweep(const DeviceParams &p, Coupling c, std::size_t n_points = 2001)
{
    const double half = default_detuning_half_span(p, c);
    SweepSpec s;
    s.axis = SweepAxis::Detuning;
    s.start = -half;
    s.stop = half;
    s.n_points = n_points;
    s.fixed_G = c.G;
    return s;
}

inline SweepSpec default_coupling_sweep(double start = 5.0, double stop = 60.0, std::size_t n_points = 2000)
{
    SweepSpec s;
    s.axis = SweepAxis::Coupling;
    s.start = start;
    s.stop = stop;
    s.n_points = n_points;
    s.scale = GridScale::Log;
    return s;
}

// Grid interval [x_i, x_{i+1}] across which t_z changes sign, if any.
inline std::optional<std::pair<double, double>> resonance_sign_change(const Spectrum &s)
{
    for (std::size_t i = 0; i + 1 < s.points.size(); ++i)
    {
        const double a = s.points[i].response.t.real();
        const double b = s.points[i + 1].response.t.real();
        if ((a < 0.0 && b >= 0.0) || (a <= 0.0 && b > 0.0))
            return std::pair{s.points[i].x, s.points[i + 1].x};
    }
    return std::nullopt;
}

// Index of the minimum |t|^2 over non-NaN points.
inline std::size_t argmin_power(const Spectrum &s)
{
    std::size_t best = 0;
    double best_power = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.points.size(); ++i)
    {
        const double pw = s.points[i].response.power();
        if (pw < best_power)
        {
            best_power = pw;
            best = i;
        }
    }
    return best;
}

} // namespace omech

#endif // OMECH_SPECTRA_HPP
