#ifndef OMECH_CLI_HPP
#define OMECH_CLI_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "omech/calibrate.hpp"
#include "omech/io/config.hpp"
#include "omech/io/csv.hpp"
#include "omech/model.hpp"
#include "omech/pulse.hpp"
#include "omech/spectra.hpp"

// Command implementations behind the `omech` executable. Each command reads its block of the
// run configuration, writes its CSV/report files atomically into the output directory and
// prints one summary line per file.
namespace omech::cli
{
using io::json;

enum ExitCode : int
{
    kExitOk = 0,
    kExitConfig = 2,
    kExitNumerical = 3,
    kExitIo = 4
};

struct CliOptions
{
    std::optional<std::string> config;
    std::optional<std::string> out;
    std::uint64_t seed = 1;
    std::optional<std::size_t> points;
};

inline int exit_code_for(const std::exception &e)
{
    if (dynamic_cast<const IoError *>(&e))
        return kExitIo;
    if (dynamic_cast<const ConfigError *>(&e) || dynamic_cast<const ParameterError *>(&e))
        return kExitConfig;
    return kExitNumerical;
}

inline io::RunConfig resolve_config(const std::string &command, const CliOptions &opt)
{
    io::RunConfig rc;
    if (opt.config)
        rc = io::make_run_config(io::load_config_document(*opt.config), command);
    else
        rc.command = command;
    if (opt.out)
        rc.output = *opt.out;
    return rc;
}

namespace detail
{
inline double freq_or(const json &block, const char *key, double fallback)
{
    return block.contains(key) ? io::parse_frequency(block.at(key)) : fallback;
}

inline double time_or(const json &block, const char *key, double fallback)
{
    return block.contains(key) ? io::parse_time(block.at(key)) : fallback;
}

inline double number_or(const json &block, const char *key, double fallback)
{
    return block.contains(key) ? io::parse_number(block.at(key)) : fallback;
}

inline std::string string_or(const json &block, const char *key, const std::string &fallback)
{
    if (!block.contains(key))
        return fallback;
    if (!block.at(key).is_string())
        throw ConfigError(std::string("'") + key + "' must be a string");
    return block.at(key).get<std::string>();
}

inline std::size_t points_or(const json &block, const CliOptions &opt, std::size_t fallback)
{
    if (opt.points)
        return *opt.points;
    const double n = number_or(block, "points", static_cast<double>(fallback));
    if (!(n >= 2.0) || n != std::floor(n))
        throw ConfigError("points must be an integer >= 2");
    return static_cast<std::size_t>(n);
}

// A coupling value: a frequency, or the symbols "G_c" / "G_b".
inline double coupling_or(const json &block, const DeviceParams &p, double fallback)
{
    if (!block.contains("G"))
        return fallback;
    const auto &v = block.at("G");
    if (v.is_string() && v.get<std::string>() == "G_c")
        return critical_coupling(p);
    if (v.is_string() && v.get<std::string>() == "G_b")
        return boundary_coupling(p);
    return io::parse_frequency(v);
}

inline GridScale scale_or(const json &block, GridScale fallback)
{
    const std::string s = string_or(block, "scale", fallback == GridScale::Log ? "log" : "linear");
    if (s == "log")
        return GridScale::Log;
    if (s == "linear")
        return GridScale::Linear;
    throw ConfigError("scale must be 'linear' or 'log'");
}

inline std::filesystem::path out_path(const io::RunConfig &rc, const char *name)
{
    return std::filesystem::path(rc.output) / name;
}

inline std::string fmt(double v) { return io::format_number(v); }
} // namespace detail

// G_c, G_b, dip depth and regime at a queried coupling.
inline int cmd_critical(const io::RunConfig &rc, const CliOptions &, std::ostream &out)
{
    const DeviceParams &p = rc.device;
    const double Gc = critical_coupling(p);
    const double Gb = boundary_coupling(p);
    const double G = detail::coupling_or(rc.block, p, 17.66);
    const Coupling c{G};
    const auto regime = regime_classify(p, c);
    const double tz = transmission_at_resonance(p, c);
    out << "G_c_hz = " << detail::fmt(Gc) << '\n';
    out << "G_b_hz = " << detail::fmt(Gb) << '\n';
    out << "query_G_hz = " << detail::fmt(G) << '\n';
    out << "t_z = " << detail::fmt(tz) << '\n';
    out << "dip_depth_db = " << detail::fmt(20.0 * std::log10(std::abs(tz))) << '\n';
    out << "regime = " << to_string(regime.regime) << '\n';
    out << "boundary = " << (regime.near_critical ? "critical" : regime.near_boundary ? "boundary" : "none") << '\n';
    return kExitOk;
}

inline int cmd_spectrum(const io::RunConfig &rc, const CliOptions &opt, std::ostream &out)
{
    const DeviceParams &p = rc.device;
    const double G = detail::coupling_or(rc.block, p, 17.66);
    const Coupling c{G};
    // Without a mechanical window the natural span is the cavity line itself.
    const double half = G > 0.0 ? default_detuning_half_span(p, c) : 3.0 * p.kappa;
    SweepSpec spec;
    spec.axis = SweepAxis::Detuning;
    spec.fixed_G = G;
    spec.start = detail::freq_or(rc.block, "start", -half);
    spec.stop = detail::freq_or(rc.block, "stop", half);
    spec.n_points = detail::points_or(rc.block, opt, 2001);
    spec.scale = detail::scale_or(rc.block, GridScale::Linear);
    const std::string delay_mode = detail::string_or(rc.block, "delay", "numeric");

    Spectrum s = sweep_detuning(p, spec);
    if (delay_mode == "numeric")
    {
        s = numeric_group_delay(std::move(s));
    }
    else if (delay_mode == "analytic")
    {
        for (auto &pt : s.points)
        {
            try
            {
                pt.response.delay = group_delay_analytic(p, c, pt.x);
            }
            catch (const SingularityError &)
            {
                pt.response.delay = std::nan("");
            }
        }
    }
    else
    {
        throw ConfigError("delay must be 'numeric' or 'analytic'");
    }
    const auto path = detail::out_path(rc, "spectrum.csv");
    io::write_csv(path, io::spectrum_table(s));

    std::size_t icenter = 0;
    for (std::size_t i = 1; i < s.size(); ++i)
        if (std::abs(s.points[i].x) < std::abs(s.points[icenter].x))
            icenter = i;
    const auto &center = s.points[icenter].response;
    out << path.string() << ": rows=" << s.size() << " G_hz=" << detail::fmt(G)
        << " center_detuning_hz=" << detail::fmt(s.points[icenter].x)
        << " center_amp_db=" << detail::fmt(center.amplitude_db)
        << " min_amp_db=" << detail::fmt(s.points[argmin_power(s)].response.amplitude_db)
        << " center_delay_s=" << detail::fmt(center.delay.value_or(std::nan(""))) << '\n';
    return kExitOk;
}

inline int cmd_sweep_g(const io::RunConfig &rc, const CliOptions &opt, std::ostream &out)
{
    const DeviceParams &p = rc.device;
    SweepSpec spec = default_coupling_sweep();
    spec.start = detail::freq_or(rc.block, "start", spec.start);
    spec.stop = detail::freq_or(rc.block, "stop", spec.stop);
    spec.n_points = detail::points_or(rc.block, opt, spec.n_points);
    spec.scale = detail::scale_or(rc.block, GridScale::Log);
    const Spectrum s = sweep_coupling_resonance(p, spec);
    const auto path = detail::out_path(rc, "sweep_g.csv");
    io::write_csv(path, io::coupling_sweep_table(s));

    out << path.string() << ": rows=" << s.size();
    std::vector<std::pair<double, double>> tz;
    for (const auto &pt : s.points)
        tz.emplace_back(pt.x, pt.response.power());
    try
    {
        out << " G_c_sweep_hz=" << detail::fmt(infer_critical_from_sweep(tz));
    }
    catch (const BracketingError &)
    {
        out << " G_c_sweep_hz=unbracketed";
    }
    if (p.eta > 0.5)
        out << " G_c_hz=" << detail::fmt(critical_coupling(p));
    if (auto bracket = resonance_sign_change(s))
        out << " sign_change_hz=[" << detail::fmt(bracket->first) << "," << detail::fmt(bracket->second) << "]";
    out << '\n';
    return kExitOk;
}

inline std::string describe_flags(std::uint32_t flags)
{
    std::string s;
    if (flags & kPulseBandwidthExceeded)
        s += "bandwidth_exceeded;";
    if (flags & kPulseSingularBand)
        s += "singular_band;";
    return s.empty() ? "none" : s;
}

inline int cmd_pulse(const io::RunConfig &rc, const CliOptions &, std::ostream &out)
{
    const DeviceParams &p = rc.device;
    const double G = detail::coupling_or(rc.block, p, 155.1);
    const Coupling c{G};
    const double carrier = detail::freq_or(rc.block, "carrier_detuning", 0.0);
    PulseConfig cfg = narrowband_pulse_config(p, c, carrier, detail::number_or(rc.block, "narrowband_factor", 16.0));
    if (rc.block.contains("sigma_t"))
    {
        // An explicit width keeps the default layout rules.
        const double factor = io::parse_time(rc.block.at("sigma_t")) / minimum_sigma_for_bandwidth(p, c);
        cfg = narrowband_pulse_config(p, c, carrier, factor);
    }
    cfg.center = detail::time_or(rc.block, "center", cfg.center);
    cfg.record_length = detail::time_or(rc.block, "record_length", cfg.record_length);
    cfg.dt = detail::time_or(rc.block, "dt", cfg.dt);
    cfg.amplitude = detail::number_or(rc.block, "amplitude", cfg.amplitude);
    const std::string method = detail::string_or(rc.block, "method", "both");
    if (method != "both" && method != "fft" && method != "time_domain")
        throw ConfigError("method must be 'fft', 'time_domain' or 'both'");

    const PulseWaveform in = gaussian_pulse(cfg, p, c);
    std::vector<std::pair<std::string, std::string>> meta = {{"G_hz", detail::fmt(G)},
                                                             {"sigma_t_s", detail::fmt(cfg.sigma_t)}};
    const auto in_path = detail::out_path(rc, "pulse_input.csv");
    io::write_csv(in_path, io::waveform_table(in, p, meta));
    out << in_path.string() << ": rows=" << in.size() << " sigma_t_s=" << detail::fmt(cfg.sigma_t)
        << " flags=" << describe_flags(in.flags) << '\n';

    double analytic = std::nan("");
    try
    {
        analytic = group_delay_analytic(p, c, carrier);
    }
    catch (const SingularityError &)
    {
    }

    auto run = [&](PropagationMethod m, const char *file) {
        DelayOptions dopt;
        dopt.method = m;
        const PulseWaveform y = propagate(in, p, c, dopt);
        const auto d = extract_delay(p, c, cfg, dopt);
        const auto path = detail::out_path(rc, file);
        auto m2 = meta;
        m2.emplace_back("delay_s", detail::fmt(d.delay));
        io::write_csv(path, io::waveform_table(y, p, m2));
        out << path.string() << ": rows=" << y.size() << " tau_s=" << detail::fmt(d.delay)
            << " tau_gaussian_s=" << detail::fmt(d.delay_gaussian) << " tau_analytic_s=" << detail::fmt(analytic)
            << " distorted=" << (d.distorted ? "true" : "false") << " flags=" << describe_flags(y.flags) << '\n';
    };
    if (method == "both" || method == "fft")
        run(PropagationMethod::FrequencyDomain, "pulse_output_fft.csv");
    if (method == "both" || method == "time_domain")
        run(PropagationMethod::TimeDomain, "pulse_output_td.csv");
    return kExitOk;
}

inline json fit_to_json(const FitResult &r, const std::string &kind)
{
    auto params = [](const std::vector<Estimate> &ps) {
        json j = json::object();
        for (const auto &e : ps)
            j[e.name] = {{"value", e.value}, {"sigma", e.sigma}, {"unit", e.unit}};
        return j;
    };
    json j = {{"format", "omech-fit/1"},
              {"kind", kind},
              {"converged", r.converged},
              {"residual_rms", r.residual_rms},
              {"n_iterations", r.n_iterations},
              {"side_ambiguous", r.side_ambiguous},
              {"params", params(r.params)}};
    j["alternatives"] = json::array();
    for (const auto &a : r.alternatives)
        j["alternatives"].push_back({{"residual_rms", a.residual_rms}, {"converged", a.converged}, {"params", params(a.params)}});
    return j;
}

inline std::string fit_to_report(const FitResult &r, const std::string &kind)
{
    std::ostringstream s;
    s << "kind = " << kind << '\n';
    s << "converged = " << (r.converged ? "true" : "false") << '\n';
    s << "residual_rms = " << detail::fmt(r.residual_rms) << '\n';
    s << "n_iterations = " << r.n_iterations << '\n';
    s << "side_ambiguous = " << (r.side_ambiguous ? "true" : "false") << '\n';
    for (const auto &e : r.params)
    {
        s << e.name << " = " << detail::fmt(e.value) << '\n';
        s << e.name << ".sigma = " << detail::fmt(e.sigma) << '\n';
    }
    for (std::size_t i = 0; i < r.alternatives.size(); ++i)
        for (const auto &e : r.alternatives[i].params)
            s << "alternative" << i << '.' << e.name << " = " << detail::fmt(e.value) << '\n';
    return s.str();
}

inline int cmd_fit(const io::RunConfig &rc, const CliOptions &opt, std::ostream &out)
{
    const DeviceParams &p = rc.device;
    if (!rc.block.contains("input"))
        throw ConfigError("fit block needs an 'input' file");
    const std::string input = rc.block.at("input").get<std::string>();
    const io::CsvTable table = io::read_csv(input);

    std::string kind = detail::string_or(rc.block, "kind", "auto");
    if (kind == "auto")
    {
        if (table.has("g_hz"))
            kind = "critical";
        else if (auto g = table.meta_value("G_hz"); g && io::detail::to_number(*g).value_or(1.0) == 0.0)
            kind = "bare_cavity";
        else
            kind = "mechanical_window";
    }

    std::optional<DataMode> mode;
    const std::string mode_name = detail::string_or(rc.block, "mode", "auto");
    if (mode_name == "complex")
        mode = DataMode::Complex;
    else if (mode_name == "polar")
        mode = DataMode::Polar;
    else if (mode_name == "amplitude")
        mode = DataMode::AmplitudeOnly;
    else if (mode_name != "auto")
        throw ConfigError("mode must be auto, complex, polar or amplitude");

    FitResult result;
    if (kind == "critical")
    {
        const auto g = table.column("g_hz");
        const auto db = table.column("amp_db");
        std::vector<std::pair<double, double>> sweep;
        for (std::size_t i = 0; i < g.size(); ++i)
            sweep.emplace_back(g[i], std::pow(10.0, db[i] / 10.0));
        const double gc = infer_critical_from_sweep(sweep);
        result.params = {{"G_c", gc, std::nan(""), "Hz"}};
        result.converged = true;
    }
    else
    {
        MeasuredSpectrum s = io::measured_spectrum_from_table(table, mode);
        auto fit_once = [&](const MeasuredSpectrum &data) {
            if (kind == "bare_cavity")
            {
                BareCavityOptions bo;
                bo.reference_frequency = detail::freq_or(rc.block, "reference_frequency", p.omega_c);
                return fit_bare_cavity(data, bo);
            }
            if (kind == "mechanical_window")
                return fit_mechanical_window(data, CavityParams::from(p));
            throw ConfigError("fit kind must be bare_cavity, mechanical_window or critical");
        };
        result = fit_once(s);

        if (rc.block.contains("monte_carlo"))
        {
            const json &mc = rc.block.at("monte_carlo");
            const auto trials = static_cast<std::size_t>(detail::number_or(mc, "trials", 100));
            const double snr = detail::number_or(mc, "snr_db", 30.0);
            if (s.mode != DataMode::Complex)
                throw ConfigError("Monte-Carlo noise needs complex input data");
            std::vector<std::vector<double>> draws(result.params.size());
            for (std::size_t t = 0; t < trials; ++t)
            {
                std::mt19937_64 rng(opt.seed + t);
                const auto r = fit_once(add_complex_noise(s, snr, rng));
                for (std::size_t k = 0; k < r.params.size(); ++k)
                    draws[k].push_back(r.params[k].value);
            }
            const std::size_t n_fitted = draws.size();
            for (std::size_t k = 0; k < n_fitted; ++k)
            {
                const auto &d = draws[k];
                const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
                double var = 0.0;
                for (double x : d)
                    var += (x - mean) * (x - mean);
                var /= static_cast<double>(d.size() > 1 ? d.size() - 1 : 1);
                const Estimate e = result.params[k];
                result.params.push_back({e.name + ".mc_mean", mean, std::sqrt(var), e.unit});
            }
        }
    }

    const auto json_path = detail::out_path(rc, "fit_result.json");
    const auto report_path = detail::out_path(rc, "fit_report.txt");
    io::write_file_atomic(json_path, fit_to_json(result, kind).dump(2) + "\n");
    io::write_file_atomic(report_path, fit_to_report(result, kind));
    out << json_path.string() << ": kind=" << kind << " converged=" << (result.converged ? "true" : "false");
    for (const auto &e : result.params)
        out << ' ' << e.name << '=' << detail::fmt(e.value);
    out << '\n';
    out << report_path.string() << ": rows=" << result.params.size() << '\n';
    return kExitOk;
}

// Runs one command by name ("critical", "spectrum", "sweep-g", "pulse", "fit").
// Errors are reported on `err` and mapped to exit codes.
inline int run_command(const std::string &name, const CliOptions &opt, std::ostream &out, std::ostream &err)
{
    const std::string block = name == "sweep-g" ? "sweep_g" : name;
    try
    {
        const io::RunConfig rc = resolve_config(block, opt);
        if (block == "critical")
            return cmd_critical(rc, opt, out);
        if (block == "spectrum")
            return cmd_spectrum(rc, opt, out);
        if (block == "sweep_g")
            return cmd_sweep_g(rc, opt, out);
        if (block == "pulse")
            return cmd_pulse(rc, opt, out);
        if (block == "fit")
            return cmd_fit(rc, opt, out);
        err << "error: unknown command " << name << '\n';
        return kExitConfig;
    }
    catch (const json::exception &e)
    {
        err << "error: config: " << e.what() << '\n';
        return kExitConfig;
    }
    catch (const std::exception &e)
    {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

} // namespace omech::cli

#endif // OMECH_CLI_HPP
