#ifndef OMECH_CALIBRATE_HPP
#define OMECH_CALIBRATE_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "omech/detail/least_squares.hpp"
#include "omech/device.hpp"
#include "omech/errors.hpp"
#include "omech/model.hpp"

// Parameter estimation from measured transmission spectra: a bare-cavity Lorentzian fit for
// (omega_c, kappa, eta), an in-window fit for (gamma_m, G, window offset) with the cavity held
// fixed, and the critical coupling from a coupling sweep of T_z.
namespace omech
{
class BracketingError : public EstimationError
{
public:
    using EstimationError::EstimationError;
};

enum class FrequencyAxis
{
    Absolute,  // probe frequency, Hz
    Detuning   // omega_c - Omega_p, Hz
};

enum class DataMode
{
    Complex,       // re/im
    Polar,         // amplitude (dB) + phase
    AmplitudeOnly  // amplitude (dB) only
};

struct MeasuredSpectrum
{
    FrequencyAxis axis = FrequencyAxis::Detuning;
    DataMode mode = DataMode::Complex;
    std::vector<double> frequency;
    std::vector<cdouble> value;     // complex transmission (reconstructed for polar data)
    std::vector<double> amplitude;  // |t|
    std::vector<double> phase;      // rad, empty for amplitude-only data

    std::size_t size() const noexcept { return frequency.size(); }

    static MeasuredSpectrum from_complex(FrequencyAxis axis, std::vector<double> f, std::vector<cdouble> t)
    {
        MeasuredSpectrum s;
        s.axis = axis;
        s.mode = DataMode::Complex;
        s.frequency = std::move(f);
        s.value = std::move(t);
        for (const auto &v : s.value)
        {
            s.amplitude.push_back(std::abs(v));
            s.phase.push_back(principal_phase(v));
        }
        return s;
    }

    static MeasuredSpectrum from_polar(FrequencyAxis axis, std::vector<double> f, std::span<const double> amp_db,
                                       std::span<const double> phase_rad)
    {
        MeasuredSpectrum s;
        s.axis = axis;
        s.mode = DataMode::Polar;
        s.frequency = std::move(f);
        for (std::size_t i = 0; i < amp_db.size(); ++i)
        {
            const double a = std::pow(10.0, amp_db[i] / 20.0);
            s.amplitude.push_back(a);
            s.phase.push_back(phase_rad[i]);
            s.value.push_back(std::polar(a, phase_rad[i]));
        }
        return s;
    }

    static MeasuredSpectrum amplitude_only(FrequencyAxis axis, std::vector<double> f, std::span<const double> amp_db)
    {
        MeasuredSpectrum s;
        s.axis = axis;
        s.mode = DataMode::AmplitudeOnly;
        s.frequency = std::move(f);
        for (double db : amp_db)
            s.amplitude.push_back(std::pow(10.0, db / 20.0));
        return s;
    }
};

inline void validate(const MeasuredSpectrum &s)
{
    if (s.frequency.size() < 20)
        throw FitError("a fit needs at least 20 spectrum rows");
    if (s.amplitude.size() != s.frequency.size())
        throw FitError("spectrum columns have different lengths");
    if (s.mode != DataMode::AmplitudeOnly && (s.value.size() != s.size() || s.phase.size() != s.size()))
        throw FitError("spectrum columns have different lengths");
    for (std::size_t i = 1; i < s.size(); ++i)
        if (!(s.frequency[i] > s.frequency[i - 1]))
            throw FitError("spectrum frequencies must be strictly increasing");
}

struct Estimate
{
    std::string name;
    double value = 0.0;
    double sigma = 0.0;  // 1-sigma, local quadratic approximation
    std::string unit;
};

struct FitCandidate
{
    std::vector<Estimate> params;
    double residual_rms = 0.0;
    bool converged = false;
};

struct FitResult
{
    std::vector<Estimate> params;
    double residual_rms = 0.0;
    int n_iterations = 0;
    bool converged = false;
    std::vector<double> rms_history;        // residual rms after every accepted iterate
    std::vector<FitCandidate> alternatives; // other local solutions (e.g. opposite side of G_c)
    bool side_ambiguous = false;            // amplitude-only data: below/above G_c not resolved

    const Estimate &at(const std::string &name) const
    {
        for (const auto &e : params)
            if (e.name == name)
                return e;
        throw FitError("fit result has no parameter named " + name);
    }
    double value(const std::string &name) const { return at(name).value; }
};

// Synthetic complex spectrum generated from the model, on either axis.
inline MeasuredSpectrum synthesize_spectrum(const DeviceParams &p, Coupling c, FrequencyAxis axis,
                                            std::vector<double> frequency)
{
    std::vector<cdouble> t;
    t.reserve(frequency.size());
    for (double f : frequency)
        t.push_back(transmission_coefficient(p, c, axis == FrequencyAxis::Detuning ? f : p.omega_c - f));
    return MeasuredSpectrum::from_complex(axis, std::move(frequency), std::move(t));
}

// Adds circular complex Gaussian noise at the given SNR (mean |t|^2 over noise variance).
inline MeasuredSpectrum add_complex_noise(MeasuredSpectrum s, double snr_db, std::mt19937_64 &rng)
{
    double mean_power = 0.0;
    for (const auto &v : s.value)
        mean_power += std::norm(v);
    mean_power /= static_cast<double>(s.value.size());
    const double sigma = std::sqrt(mean_power / std::pow(10.0, snr_db / 10.0) / 2.0);
    std::normal_distribution<double> n(0.0, sigma);
    for (std::size_t i = 0; i < s.value.size(); ++i)
    {
        s.value[i] += cdouble{n(rng), n(rng)};
        s.amplitude[i] = std::abs(s.value[i]);
        s.phase[i] = principal_phase(s.value[i]);
    }
    return s;
}

namespace detail
{
inline double wrap_angle(double x) { return std::remainder(x, kTwoPi); }

// Residual vector for one model evaluation against a spectrum, by data mode.
// Polar phase residuals are weighted by the measured amplitude so the CPA zero does not dominate.
template <class Model>
Eigen::VectorXd spectrum_residuals(const MeasuredSpectrum &s, Model &&model)
{
    const auto n = static_cast<Eigen::Index>(s.size());
    Eigen::VectorXd r(s.mode == DataMode::AmplitudeOnly ? n : 2 * n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        const auto k = static_cast<std::size_t>(i);
        const cdouble m = model(k);
        switch (s.mode)
        {
        case DataMode::Complex:
            r[2 * i] = m.real() - s.value[k].real();
            r[2 * i + 1] = m.imag() - s.value[k].imag();
            break;
        case DataMode::Polar:
            r[2 * i] = std::abs(m) - s.amplitude[k];
            r[2 * i + 1] = s.amplitude[k] * wrap_angle(std::arg(m) - s.phase[k]);
            break;
        case DataMode::AmplitudeOnly:
            r[i] = std::abs(m) - s.amplitude[k];
            break;
        }
    }
    return r;
}

inline double median(std::vector<double> v)
{
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

// Point-to-point scatter estimate of additive noise on a sampled curve.
inline double scatter_sigma(std::span<const double> y)
{
    std::vector<double> d;
    for (std::size_t i = 2; i < y.size(); ++i)
        d.push_back(std::abs(y[i] - 2.0 * y[i - 1] + y[i - 2]));
    return d.empty() ? 0.0 : median(d) / (0.6745 * std::sqrt(6.0));
}

// Full width of the peak of `y` at its half maximum around index `ipeak`, linearly interpolated.
inline std::optional<double> full_width_half_max(std::span<const double> x, std::span<const double> y,
                                                  std::size_t ipeak)
{
    const double half = y[ipeak] / 2.0;
    std::optional<double> left, right;
    for (std::size_t i = ipeak; i > 0; --i)
        if (y[i - 1] < half)
        {
            const double f = (y[i] - half) / (y[i] - y[i - 1]);
            left = x[i] - f * (x[i] - x[i - 1]);
            break;
        }
    for (std::size_t i = ipeak; i + 1 < x.size(); ++i)
        if (y[i + 1] < half)
        {
            const double f = (y[i] - half) / (y[i] - y[i + 1]);
            right = x[i] + f * (x[i + 1] - x[i]);
            break;
        }
    if (!left || !right)
        return std::nullopt;
    return *right - *left;
}

inline FitCandidate as_candidate(const FitResult &r) { return FitCandidate{r.params, r.residual_rms, r.converged}; }

inline LmOptions fit_lm_options()
{
    LmOptions o;
    o.max_iterations = 200;
    o.gradient_tolerance = 1e-10;
    return o;
}
} // namespace detail

struct BareCavityGuess
{
    double omega_c = 0.0;  // Hz (absolute)
    double kappa = 0.0;
    double eta = 0.0;
};

struct BareCavityOptions
{
    std::optional<BareCavityGuess> init;
    double reference_frequency = 0.0;  // detuning data: probe frequency = reference - detuning
};

// Least-squares fit of t = 1 - eta kappa / (i Delta + kappa/2) for (omega_c, kappa, eta).
inline FitResult fit_bare_cavity(const MeasuredSpectrum &s, const BareCavityOptions &opt = {})
{
    validate(s);
    const std::size_t n = s.size();
    // Probe frequency of each row, increasing or decreasing.
    std::vector<double> probe(n);
    for (std::size_t i = 0; i < n; ++i)
        probe[i] = s.axis == FrequencyAxis::Absolute ? s.frequency[i] : opt.reference_frequency - s.frequency[i];

    std::vector<BareCavityGuess> starts;
    if (opt.init)
    {
        starts.push_back(*opt.init);
    }
    else
    {
        const auto imin = static_cast<std::size_t>(
            std::distance(s.amplitude.begin(), std::min_element(s.amplitude.begin(), s.amplitude.end())));
        const double a_min = s.amplitude[imin];
        const double baseline = detail::median(s.amplitude);
        const double noise = detail::scatter_sigma(s.amplitude);
        if (!(baseline - a_min > std::max(0.01 * baseline, 6.0 * noise)))
            throw FitError("no cavity dip found in spectrum");

        std::vector<double> absorbed(n);
        for (std::size_t i = 0; i < n; ++i)
            absorbed[i] = 1.0 - s.amplitude[i] * s.amplitude[i];
        const auto width = detail::full_width_half_max(s.frequency, absorbed, imin);
        if (!width)
            throw FitError("spectrum does not span both half-depth points of the cavity dip");

        BareCavityGuess g;
        g.omega_c = probe[imin];
        g.kappa = std::abs(*width);
        if (s.mode == DataMode::AmplitudeOnly)
        {
            g.eta = std::clamp((1.0 + a_min) / 2.0, 0.01, 0.99);
            starts.push_back(g);
            g.eta = std::clamp((1.0 - a_min) / 2.0, 0.01, 0.99);
            starts.push_back(g);
        }
        else
        {
            g.eta = std::clamp((1.0 - s.value[imin].real()) / 2.0, 0.01, 0.99);
            starts.push_back(g);
        }
    }

    std::vector<FitResult> results;
    for (const auto &g : starts)
    {
        auto model_at = [&](const Eigen::VectorXd &x) {
            return [&, x](std::size_t i) {
                const cdouble den{x[1] / 2.0, x[0] - probe[i]};
                return 1.0 - x[2] * x[1] / den;
            };
        };
        auto residuals = [&](const Eigen::VectorXd &x) { return detail::spectrum_residuals(s, model_at(x)); };
        Eigen::VectorXd x0(3), scale(3);
        x0 << g.omega_c, g.kappa, g.eta;
        scale << g.kappa, g.kappa, 0.1;
        const auto lm = detail::levenberg_marquardt(residuals, x0, scale, detail::fit_lm_options());

        FitResult r;
        r.params = {{"omega_c", lm.x[0], lm.sigma[0], "Hz"},
                    {"kappa", std::abs(lm.x[1]), lm.sigma[1], "Hz"},
                    {"eta", lm.x[2], lm.sigma[2], ""}};
        r.residual_rms = lm.residual_rms;
        r.n_iterations = lm.iterations;
        r.converged = lm.converged;
        r.rms_history = lm.rms_history;
        results.push_back(std::move(r));
    }
    std::sort(results.begin(), results.end(),
              [](const FitResult &a, const FitResult &b) { return a.residual_rms < b.residual_rms; });
    FitResult best = results.front();
    for (std::size_t i = 1; i < results.size(); ++i)
        best.alternatives.push_back(detail::as_candidate(results[i]));
    // Amplitude alone cannot tell eta from 1 - eta.
    best.side_ambiguous = s.mode == DataMode::AmplitudeOnly && results.size() > 1;
    return best;
}

struct CavityParams
{
    double omega_c = 0.0;  // Hz
    double kappa = 0.0;    // Hz
    double eta = 0.0;

    static CavityParams from(const DeviceParams &p) { return {p.omega_c, p.kappa, p.eta}; }
};

namespace detail
{
// Transmission with the mechanical resonance shifted by `offset` Hz from the cavity-referenced detuning.
inline cdouble window_model(const CavityParams &cav, double gamma_hz, double G_hz, double offset_hz,
                            double delta_hz)
{
    const double d = angular(delta_hz);
    const double k = angular(cav.kappa);
    const double g = angular(gamma_hz);
    const double G = angular(G_hz);
    const cdouble mech{g / 2.0, d - angular(offset_hz)};
    const cdouble cav_term{k / 2.0, d};
    const cdouble cav_ext{(0.5 - cav.eta) * k, d};
    return (mech * cav_ext + G * G) / (mech * cav_term + G * G);
}

inline cdouble bare_cavity(const CavityParams &cav, double delta_hz)
{
    return 1.0 - cav.eta * cav.kappa / cdouble{cav.kappa / 2.0, delta_hz};
}
} // namespace detail

// Least-squares fit of the full response for (gamma_m, G, window offset) with the cavity fixed.
// Every admissible side of G_c is tried; the lowest-residual solution wins and the others are
// kept as alternatives.
inline FitResult fit_mechanical_window(const MeasuredSpectrum &s, const CavityParams &cav)
{
    validate(s);
    if (!(cav.kappa > 0.0) || !(cav.eta > 0.0 && cav.eta < 1.0))
        throw ParameterError("fixed cavity parameters are invalid");
    const std::size_t n = s.size();
    std::vector<double> delta(n);
    for (std::size_t i = 0; i < n; ++i)
        delta[i] = s.axis == FrequencyAxis::Detuning ? s.frequency[i] : cav.omega_c - s.frequency[i];

    // Window feature relative to the bare cavity.
    std::vector<double> feature(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        const cdouble bare = detail::bare_cavity(cav, delta[i]);
        feature[i] = s.mode == DataMode::AmplitudeOnly ? std::pow(s.amplitude[i] - std::abs(bare), 2.0)
                                                       : std::norm(s.value[i] - bare);
    }
    const auto ipeak =
        static_cast<std::size_t>(std::distance(feature.begin(), std::max_element(feature.begin(), feature.end())));
    const auto width = detail::full_width_half_max(s.frequency, feature, ipeak);
    if (!width)
        throw FitError("spectrum does not span the mechanical window");
    std::vector<double> steps;
    for (std::size_t i = 1; i < n; ++i)
        steps.push_back(s.frequency[i] - s.frequency[i - 1]);
    const double grid = detail::median(std::move(steps));
    const double W = std::abs(*width);
    if (W < 2.0 * grid)
        throw FitError("mechanical window is narrower than the frequency grid");

    // t_z - t_cav = 8 eta G^2 / (kappa W) at the window center. Signed t_z candidates: the measured
    // value and its mirror through zero (same |t_z| on the other side of G_c).
    const double t_cav0 = (1.0 - 2.0 * cav.eta);
    double tz_seen = 0.0;
    if (s.mode == DataMode::AmplitudeOnly)
        tz_seen = s.amplitude[ipeak];
    else
        tz_seen = t_cav0 + (s.value[ipeak] - detail::bare_cavity(cav, delta[ipeak])).real();
    const double offset0 = delta[ipeak];
    const double gc_scale = (cav.eta - 0.5) * cav.kappa / 2.0;  // G_c^2 = gc_scale * gamma

    // Each candidate is confined to one side of G_c by G^2 = G_c(gamma)^2 exp(side e^u), so a start on
    // one side cannot drift into the other side's basin. With eta <= 1/2 there is no G_c and G is free.
    struct Start
    {
        double side;  // +1 above G_c, -1 below, 0 unconstrained
        double G0;
    };
    std::vector<Start> starts;
    for (double tz : {tz_seen, -tz_seen})
    {
        const double lift = tz - t_cav0;
        if (!(lift > 0.0))
            continue;
        const double G0 = std::sqrt(lift * cav.kappa * W / (8.0 * cav.eta));
        if (gc_scale > 0.0)
            starts.push_back({tz >= 0.0 ? 1.0 : -1.0, G0});
        else
            starts.push_back({0.0, G0});
        if (std::abs(tz_seen) < 1e-15 || gc_scale <= 0.0)
            break;
    }
    if (starts.empty())
        throw FitError("could not initialize the mechanical window fit");

    std::vector<FitResult> results;
    for (const auto &st : starts)
    {
        const double gamma0 = std::max(W - 4.0 * st.G0 * st.G0 / cav.kappa, 0.02 * W);
        // Parameters: log gamma, u (or G when unconstrained), offset.
        auto coupling = [&](const Eigen::VectorXd &x) {
            if (st.side == 0.0)
                return std::abs(x[1]);
            return std::sqrt(gc_scale * std::exp(x[0]) * std::exp(st.side * std::exp(x[1])));
        };
        auto residuals = [&](const Eigen::VectorXd &x) {
            const double gamma = std::exp(x[0]);
            const double G = coupling(x);
            return detail::spectrum_residuals(
                s, [&](std::size_t i) { return detail::window_model(cav, gamma, G, x[2], delta[i]); });
        };
        Eigen::VectorXd x0(3), scale(3);
        double u0 = st.G0;
        if (st.side != 0.0)
        {
            const double ratio = std::log(st.G0 * st.G0 / (gc_scale * gamma0));
            // A start on the wrong side of G_c is pulled just across it.
            u0 = std::log(std::max(st.side * ratio, 1e-3));
        }
        x0 << std::log(gamma0), u0, offset0;
        scale << 1.0, st.side == 0.0 ? st.G0 : 1.0, W;
        const auto lm = detail::levenberg_marquardt(residuals, x0, scale, detail::fit_lm_options());
        const double gamma = std::exp(lm.x[0]);
        const double G = coupling(lm.x);

        // First-order propagation of the parameter covariance to (gamma, G).
        Eigen::Vector3d dgamma(gamma, 0.0, 0.0);
        Eigen::Vector3d dG = Eigen::Vector3d::Zero();
        if (st.side == 0.0)
            dG[1] = lm.x[1] >= 0.0 ? 1.0 : -1.0;
        else
        {
            dG[0] = 0.5 * G;
            dG[1] = 0.5 * G * st.side * std::exp(lm.x[1]);
        }
        const Eigen::Matrix3d C = lm.covariance;
        FitResult r;
        r.params = {{"gamma_m", gamma, std::sqrt(dgamma.dot(C * dgamma)), "Hz"},
                    {"G", G, std::sqrt(dG.dot(C * dG)), "Hz"},
                    {"window_offset", lm.x[2], lm.sigma[2], "Hz"}};
        r.residual_rms = lm.residual_rms;
        r.n_iterations = lm.iterations;
        r.converged = lm.converged;
        r.rms_history = lm.rms_history;
        results.push_back(std::move(r));
    }
    std::sort(results.begin(), results.end(),
              [](const FitResult &a, const FitResult &b) { return a.residual_rms < b.residual_rms; });
    FitResult best = results.front();
    for (std::size_t i = 1; i < results.size(); ++i)
        best.alternatives.push_back(detail::as_candidate(results[i]));
    best.side_ambiguous = s.mode == DataMode::AmplitudeOnly && results.size() > 1;
    return best;
}

// G_c from (G, T_z) samples. Near the zero t_z is linear in G^2, so T_z is locally a parabola in G^2;
// the vertex through the minimum and its two neighbours gives G_c.
inline double infer_critical_from_sweep(std::span<const std::pair<double, double>> sweep)
{
    if (sweep.size() < 3)
        throw BracketingError("critical-coupling sweep needs at least three points");
    std::size_t imin = 0;
    for (std::size_t i = 1; i < sweep.size(); ++i)
        if (sweep[i].second < sweep[imin].second)
            imin = i;
    if (imin == 0 || imin + 1 == sweep.size())
        throw BracketingError("T_z minimum sits at the sweep edge; the sweep does not bracket G_c");
    const double x0 = sweep[imin - 1].first * sweep[imin - 1].first;
    const double x1 = sweep[imin].first * sweep[imin].first;
    const double x2 = sweep[imin + 1].first * sweep[imin + 1].first;
    const double y0 = sweep[imin - 1].second, y1 = sweep[imin].second, y2 = sweep[imin + 1].second;
    const double num = (x1 - x0) * (x1 - x0) * (y1 - y2) - (x1 - x2) * (x1 - x2) * (y1 - y0);
    const double den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if (den == 0.0)
        return sweep[imin].first;
    return std::sqrt(std::clamp(x1 - 0.5 * num / den, x0, x2));
}

} // namespace omech

#endif // OMECH_CALIBRATE_HPP
