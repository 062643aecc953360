#ifndef OMECH_PULSE_HPP
#define OMECH_PULSE_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "omech/detail/least_squares.hpp"
#include "omech/device.hpp"
#include "omech/errors.hpp"
#include "omech/model.hpp"
#include "omech/two_mode.hpp"

namespace omech
{
enum PulseFlags : std::uint32_t
{
    kPulseNone = 0,
    kPulseBandwidthExceeded = 1u << 0,  // wider than half the effective mechanical window
    kPulseSingularBand = 1u << 1        // |t| hits the perfect-absorption zero inside the pulse band
};

// Uniformly sampled complex baseband envelope. The carrier itself is never sampled.
struct PulseWaveform
{
    double t0 = 0.0;
    double dt = 1.0;
    std::vector<cdouble> samples;
    double carrier_detuning = 0.0;  // Hz, carrier offset from cavity resonance
    std::uint32_t flags = kPulseNone;

    double time(std::size_t k) const noexcept { return t0 + dt * static_cast<double>(k); }
    std::size_t size() const noexcept { return samples.size(); }

    double energy() const noexcept
    {
        double e = 0.0;
        for (const auto &s : samples)
            e += std::norm(s);
        return e * dt;
    }
};

struct PulseConfig
{
    double sigma_t = 1.0;          // Gaussian RMS width (of the field envelope), s
    double center = 8.0;           // s
    double amplitude = 1.0;
    double carrier_detuning = 0.0; // Hz
    double record_length = 16.0;   // s, measured from t0
    double dt = 1.0 / 16.0;        // s
    double t0 = 0.0;

    std::size_t sample_count() const noexcept
    {
        return static_cast<std::size_t>(std::floor(record_length / dt + 1e-9)) + 1;
    }
};

inline void validate(const PulseConfig &cfg)
{
    if (!(cfg.sigma_t > 0.0) || !(cfg.dt > 0.0) || !(cfg.record_length > 0.0))
        throw ParameterError("pulse sigma_t, dt and record_length must be positive");
    if (cfg.record_length + 1e-12 * cfg.record_length < (cfg.center - cfg.t0) + 8.0 * cfg.sigma_t)
        throw ParameterError("pulse record must extend at least 8 sigma_t past the pulse center");
    if (cfg.sample_count() < 16)
        throw ParameterError("pulse needs at least 16 samples");
}

// Pulse-bandwidth rule: 1/(2 pi sigma_t) <= 0.5 (gamma_m + 4 G^2/kappa).
inline bool bandwidth_ok(double sigma_t, const DeviceParams &p, Coupling c)
{
    return 1.0 / (kTwoPi * sigma_t) <= 0.5 * effective_window_width(p, c);
}

inline double minimum_sigma_for_bandwidth(const DeviceParams &p, Coupling c)
{
    return 1.0 / (std::numbers::pi * effective_window_width(p, c));
}

inline PulseWaveform gaussian_pulse(const PulseConfig &cfg)
{
    validate(cfg);
    PulseWaveform w;
    w.t0 = cfg.t0;
    w.dt = cfg.dt;
    w.carrier_detuning = cfg.carrier_detuning;
    w.samples.resize(cfg.sample_count());
    const double two_var = 2.0 * cfg.sigma_t * cfg.sigma_t;
    for (std::size_t k = 0; k < w.samples.size(); ++k)
    {
        const double x = w.time(k) - cfg.center;
        w.samples[k] = cfg.amplitude * std::exp(-x * x / two_var);
    }
    return w;
}

// Same pulse, flagged when it violates the bandwidth rule for this device and coupling.
inline PulseWaveform gaussian_pulse(const PulseConfig &cfg, const DeviceParams &p, Coupling c)
{
    PulseWaveform w = gaussian_pulse(cfg);
    if (!bandwidth_ok(cfg.sigma_t, p, c))
        w.flags |= kPulseBandwidthExceeded;
    return w;
}

// Envelope RMS width inferred from |s|^2 (sqrt(2) times the power RMS width, exact for a Gaussian).
inline double estimated_sigma_t(const PulseWaveform &w)
{
    double e = 0.0, m1 = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k)
    {
        const double pw = std::norm(w.samples[k]);
        e += pw;
        m1 += pw * w.time(k);
    }
    if (!(e > 0.0))
        return 0.0;
    const double mean = m1 / e;
    double m2 = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k)
    {
        const double x = w.time(k) - mean;
        m2 += std::norm(w.samples[k]) * x * x;
    }
    return std::sqrt(2.0 * m2 / e);
}

// Chooses a Gaussian probe `narrowband_factor` times longer than the bandwidth rule's minimum,
// and places it so the advanced or delayed output stays inside the record.
inline PulseConfig narrowband_pulse_config(const DeviceParams &p, Coupling c, double carrier_detuning_hz = 0.0,
                                           double narrowband_factor = 16.0, double samples_per_sigma = 32.0)
{
    PulseConfig cfg;
    cfg.sigma_t = narrowband_factor * minimum_sigma_for_bandwidth(p, c);
    double tau = 0.0;
    try
    {
        tau = std::abs(group_delay_analytic(p, c, carrier_detuning_hz));
    }
    catch (const SingularityError &)
    {
        tau = 4.0 * cfg.sigma_t;
    }
    const double margin = 8.0 * cfg.sigma_t + 1.5 * tau;
    cfg.center = margin;
    cfg.record_length = 2.0 * margin;
    cfg.dt = cfg.sigma_t / samples_per_sigma;
    cfg.carrier_detuning = carrier_detuning_hz;
    return cfg;
}

// Y(f) = t(carrier + f) X(f), with zero padding to at least 4x the record length.
inline PulseWaveform propagate_frequency_domain(const PulseWaveform &w, const DeviceParams &p, Coupling c)
{
    validate(p);
    validate(c);
    const std::size_t n = w.size();
    if (n < 2)
        throw ParameterError("waveform must contain at least two samples");
    const std::size_t m = std::bit_ceil(4 * n);

    std::vector<cdouble> x(m, cdouble{0.0, 0.0});
    std::copy(w.samples.begin(), w.samples.end(), x.begin());
    Eigen::FFT<double> fft;
    std::vector<cdouble> spectrum;
    fft.fwd(spectrum, x);

    double peak = 0.0;
    for (const auto &s : spectrum)
        peak = std::max(peak, std::abs(s));

    PulseWaveform out = w;
    const double df = 1.0 / (static_cast<double>(m) * w.dt);
    for (std::size_t k = 0; k < m; ++k)
    {
        const double f = (k < m / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(m)) * df;
        const cdouble tf = transmission_coefficient(p, c, w.carrier_detuning + f);
        if (std::abs(tf) < kDegeneracyThreshold && std::abs(spectrum[k]) > 1e-6 * peak)
            out.flags |= kPulseSingularBand;
        spectrum[k] *= tf;
    }
    std::vector<cdouble> y;
    fft.inv(y, spectrum);
    std::copy(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n), out.samples.begin());
    if (!bandwidth_ok(estimated_sigma_t(w), p, c))
        out.flags |= kPulseBandwidthExceeded;
    return out;
}

enum class TimeDomainMethod
{
    Exact,  // matrix-exponential update per sample interval
    RK4     // fixed-step fourth-order Runge-Kutta
};

struct TimeDomainOptions
{
    TimeDomainMethod method = TimeDomainMethod::Exact;
    InputHold hold = InputHold::Linear;  // used by the exact method
    double dt_int = 0.0;                 // RK4 step; 0 selects 0.05 / kappa_ang
};

struct TimeDomainRun
{
    std::vector<cdouble> output;
    std::vector<ModeState> states;  // state at every sample time
};

// Drives the two-mode system with `input` sampled every dt, starting from `initial` at the first sample.
inline TimeDomainRun run_two_mode(const TwoModeSystem &sys, std::span<const cdouble> input, double dt,
                                  const TimeDomainOptions &opt = {}, ModeState initial = {})
{
    if (input.empty())
        throw ParameterError("time-domain input is empty");
    TimeDomainRun run;
    run.output.resize(input.size());
    run.states.resize(input.size());
    ModeState x = initial;
    run.states[0] = x;
    run.output[0] = sys.output(x, input[0]);

    if (opt.method == TimeDomainMethod::Exact)
    {
        const ExactPropagator prop(sys, dt, opt.hold);
        for (std::size_t k = 1; k < input.size(); ++k)
        {
            x = prop.step(x, input[k - 1], input[k]);
            run.states[k] = x;
            run.output[k] = sys.output(x, input[k]);
        }
        return run;
    }

    const double dt_int = opt.dt_int > 0.0 ? opt.dt_int : 0.05 / sys.kappa;
    if (dt_int > max_rk4_step(sys) * (1.0 + 1e-12))
        throw NumericalError("RK4 step exceeds 0.1 / kappa; the integration would be unstable or inaccurate");
    const auto substeps = static_cast<std::size_t>(std::ceil(dt / dt_int - 1e-9));
    const double h = dt / static_cast<double>(substeps);
    for (std::size_t k = 1; k < input.size(); ++k)
    {
        const cdouble u0 = input[k - 1];
        const cdouble du = input[k] - u0;
        for (std::size_t j = 0; j < substeps; ++j)
        {
            const double f0 = static_cast<double>(j) / static_cast<double>(substeps);
            const double f1 = static_cast<double>(j + 1) / static_cast<double>(substeps);
            x = rk4_step(sys, x, u0 + f0 * du, u0 + f1 * du, h);
        }
        run.states[k] = x;
        run.output[k] = sys.output(x, input[k]);
    }
    return run;
}

inline PulseWaveform propagate_time_domain(const PulseWaveform &w, const DeviceParams &p, Coupling c,
                                           const TimeDomainOptions &opt = {})
{
    const auto sys = TwoModeSystem::from(p, c, w.carrier_detuning);
    const auto run = run_two_mode(sys, w.samples, w.dt, opt);
    PulseWaveform out = w;
    out.samples = run.output;
    if (!bandwidth_ok(estimated_sigma_t(w), p, c))
        out.flags |= kPulseBandwidthExceeded;
    return out;
}

// Fixed-step RK4 integration of the equations of motion (dt_int <= 0.1 / kappa_ang).
inline PulseWaveform integrate_langevin(const PulseWaveform &w, const DeviceParams &p, Coupling c, double dt_int)
{
    TimeDomainOptions opt;
    opt.method = TimeDomainMethod::RK4;
    opt.dt_int = dt_int;
    return propagate_time_domain(w, p, c, opt);
}

struct CenterTime
{
    double centroid = 0.0;           // centroid of |envelope|^2 (primary)
    double gaussian_center = 0.0;    // least-squares Gaussian fit to |envelope|
    double gaussian_sigma = 0.0;
    double gaussian_amplitude = 0.0;
    bool fit_converged = false;

    double discrepancy() const noexcept { return std::abs(centroid - gaussian_center); }
    bool distorted() const noexcept { return !(discrepancy() <= gaussian_sigma / 10.0); }
};

struct CenterTimeOptions
{
    bool reject_distorted = true;  // throw when the two estimators disagree by more than sigma/10
};

inline CenterTime center_time(const PulseWaveform &w, const CenterTimeOptions &opt = {})
{
    const std::size_t n = w.size();
    if (n < 3)
        throw EstimationError("center time needs at least three samples");
    std::vector<double> mag(n);
    double peak = 0.0;
    std::size_t ipeak = 0;
    double e = 0.0, m1 = 0.0;
    for (std::size_t k = 0; k < n; ++k)
    {
        mag[k] = std::abs(w.samples[k]);
        if (mag[k] > peak)
        {
            peak = mag[k];
            ipeak = k;
        }
        const double pw = mag[k] * mag[k];
        e += pw;
        m1 += pw * w.time(k);
    }
    if (!(e > 0.0) || !(peak > std::numeric_limits<double>::min()) || !std::isfinite(e))
        throw EstimationError("waveform has no usable energy");

    // A second lobe reaching a third of the peak breaks the single-lobe assumption.
    // A lobe ends only once the envelope drops below peak/6, so noise at the threshold does not split it.
    std::size_t runs = 0;
    bool inside = false;
    for (std::size_t k = 0; k < n; ++k)
    {
        if (!inside && mag[k] >= peak / 3.0)
        {
            ++runs;
            inside = true;
        }
        else if (inside && mag[k] < peak / 6.0)
            inside = false;
    }
    if (runs > 1)
        throw EstimationError("waveform has more than one dominant lobe");

    CenterTime ct;
    ct.centroid = m1 / e;

    double m2 = 0.0;
    for (std::size_t k = 0; k < n; ++k)
    {
        const double x = w.time(k) - ct.centroid;
        m2 += mag[k] * mag[k] * x * x;
    }
    const double sigma0 = std::max(std::sqrt(2.0 * m2 / e), w.dt);

    Eigen::VectorXd x0(3);
    x0 << peak, w.time(ipeak), sigma0;
    Eigen::VectorXd scale(3);
    scale << peak, sigma0, sigma0;
    auto residuals = [&](const Eigen::VectorXd &x) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        const double two_var = 2.0 * x[2] * x[2];
        for (std::size_t k = 0; k < n; ++k)
        {
            const double d = w.time(k) - x[1];
            r[static_cast<Eigen::Index>(k)] = (x[0] * std::exp(-d * d / two_var) - mag[k]) / peak;
        }
        return r;
    };
    detail::LmOptions lm;
    lm.max_iterations = 100;
    const auto fit = detail::levenberg_marquardt(residuals, x0, scale, lm);
    ct.gaussian_amplitude = fit.x[0];
    ct.gaussian_center = fit.x[1];
    ct.gaussian_sigma = std::abs(fit.x[2]);
    ct.fit_converged = fit.converged;

    if (opt.reject_distorted && ct.distorted())
        throw EstimationError("centroid and Gaussian-fit center times disagree by more than sigma/10");
    return ct;
}

enum class PropagationMethod
{
    FrequencyDomain,
    TimeDomain
};

struct DelayOptions
{
    PropagationMethod method = PropagationMethod::FrequencyDomain;
    TimeDomainOptions time_domain{};
};

struct DelayMeasurement
{
    double delay = 0.0;           // centroid-based, seconds
    double delay_gaussian = 0.0;  // Gaussian-fit based, seconds
    CenterTime pumped;
    CenterTime reference;         // G = 0, cavity still present
    std::uint32_t flags = kPulseNone;
    bool distorted = false;
};

inline PulseWaveform propagate(const PulseWaveform &w, const DeviceParams &p, Coupling c, const DelayOptions &opt)
{
    return opt.method == PropagationMethod::FrequencyDomain ? propagate_frequency_domain(w, p, c)
                                                            : propagate_time_domain(w, p, c, opt.time_domain);
}

// Group delay as the center-time difference between the pumped and the pump-off (G = 0) transmission.
inline DelayMeasurement extract_delay(const DeviceParams &p, Coupling c, const PulseConfig &cfg,
                                      const DelayOptions &opt = {})
{
    const PulseWaveform in = gaussian_pulse(cfg, p, c);
    const PulseWaveform on = propagate(in, p, c, opt);
    const PulseWaveform off = propagate(in, p, Coupling{0.0}, opt);
    const CenterTimeOptions lax{false};
    DelayMeasurement m;
    m.pumped = center_time(on, lax);
    m.reference = center_time(off, lax);
    m.delay = m.pumped.centroid - m.reference.centroid;
    m.delay_gaussian = m.pumped.gaussian_center - m.reference.gaussian_center;
    m.flags = in.flags | on.flags;
    m.distorted = m.pumped.distorted() || m.reference.distorted();
    return m;
}

} // namespace omech

#endif // OMECH_PULSE_HPP
