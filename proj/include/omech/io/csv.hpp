#ifndef OMECH_IO_CSV_HPP
#define OMECH_IO_CSV_HPP

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "omech/calibrate.hpp"
#include "omech/device.hpp"
#include "omech/errors.hpp"
#include "omech/io/config.hpp"
#include "omech/pulse.hpp"
#include "omech/spectra.hpp"

// CSV files: a '#' comment block (format tag, command, device parameters, extra metadata),
// one header row, then rows of numbers at 17 significant digits.
namespace omech::io
{
inline constexpr const char *kCsvFormat = "omech-csv/1";

// Round-trippable, locale-independent formatting.
inline std::string format_number(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct CsvTable
{
    std::vector<std::pair<std::string, std::string>> meta;  // ordered "# key: value" lines
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::ptrdiff_t column_index(const std::string &name) const
    {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name)
                return static_cast<std::ptrdiff_t>(i);
        return -1;
    }
    bool has(const std::string &name) const { return column_index(name) >= 0; }

    std::vector<double> column(const std::string &name) const
    {
        const auto idx = column_index(name);
        if (idx < 0)
            throw IoError("CSV has no column '" + name + "'");
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto &r : rows)
            out.push_back(r[static_cast<std::size_t>(idx)]);
        return out;
    }

    std::optional<std::string> meta_value(const std::string &key) const
    {
        for (const auto &[k, v] : meta)
            if (k == key)
                return v;
        return std::nullopt;
    }
};

inline std::vector<std::pair<std::string, std::string>> device_meta(const DeviceParams &p)
{
    std::vector<std::pair<std::string, std::string>> m = {{"device.omega_c_hz", format_number(p.omega_c)},
                                                           {"device.omega_m_hz", format_number(p.omega_m)},
                                                           {"device.kappa_hz", format_number(p.kappa)},
                                                           {"device.eta", format_number(p.eta)},
                                                           {"device.gamma_m_hz", format_number(p.gamma_m)}};
    if (p.g0)
        m.emplace_back("device.g0_hz", format_number(*p.g0));
    return m;
}

inline std::string render_csv(const CsvTable &t)
{
    std::ostringstream out;
    out << "# format: " << kCsvFormat << '\n';
    for (const auto &[k, v] : t.meta)
        out << "# " << k << ": " << v << '\n';
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        out << (i ? "," : "") << t.columns[i];
    out << '\n';
    for (const auto &r : t.rows)
    {
        for (std::size_t i = 0; i < r.size(); ++i)
            out << (i ? "," : "") << format_number(r[i]);
        out << '\n';
    }
    return out.str();
}

// Writes next to the target and renames into place; nothing is left behind on failure.
inline void write_file_atomic(const std::filesystem::path &path, const std::string &contents)
{
    namespace fs = std::filesystem;
    const fs::path tmp = path.string() + ".tmp";
    try
    {
        if (path.has_parent_path())
            fs::create_directories(path.parent_path());
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out)
                throw IoError("cannot open " + tmp.string() + " for writing");
            out << contents;
            out.flush();
            if (!out)
                throw IoError("write failed for " + tmp.string());
        }
        fs::rename(tmp, path);
    }
    catch (const fs::filesystem_error &e)
    {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw IoError(e.what());
    }
    catch (...)
    {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
}

inline void write_csv(const std::filesystem::path &path, const CsvTable &t) { write_file_atomic(path, render_csv(t)); }

inline CsvTable parse_csv(const std::string &text)
{
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    auto split = [](const std::string &s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(s);
        while (std::getline(ls, cell, ','))
            cells.push_back(detail::trim(cell));
        return cells;
    };
    while (std::getline(in, line))
    {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (line.front() == '#')
        {
            const auto colon = line.find(':');
            if (colon == std::string::npos)
                continue;
            std::string key = detail::trim(line.substr(1, colon - 1));
            std::string value = detail::trim(line.substr(colon + 1));
            // The format tag is re-emitted by render_csv, so it is checked here rather than kept.
            if (key == "format")
            {
                if (value != kCsvFormat)
                    throw IoError("unsupported CSV format '" + value + "'");
                continue;
            }
            t.meta.emplace_back(std::move(key), std::move(value));
            continue;
        }
        if (!have_header)
        {
            t.columns = split(line);
            have_header = true;
            continue;
        }
        const auto cells = split(line);
        if (cells.size() != t.columns.size())
            throw IoError("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                          std::to_string(t.columns.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto &c : cells)
        {
            if (c == "nan")
                row.push_back(std::nan(""));
            else if (c == "inf" || c == "-inf")
                row.push_back(c == "inf" ? HUGE_VAL : -HUGE_VAL);
            else if (auto v = detail::to_number(c))
                row.push_back(*v);
            else
                throw IoError("CSV cell '" + c + "' is not a number");
        }
        t.rows.push_back(std::move(row));
    }
    if (!have_header)
        throw IoError("CSV has no header row");
    return t;
}

inline CsvTable read_csv(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

// spectrum -> detuning_hz, re, im, amp_db, phase_rad, delay_s
inline CsvTable spectrum_table(const Spectrum &s)
{
    CsvTable t;
    t.meta = {{"command", "spectrum"}};
    for (auto &m : device_meta(s.device))
        t.meta.push_back(m);
    t.meta.emplace_back("G_hz", format_number(s.spec.fixed_G));
    t.columns = {"detuning_hz", "re", "im", "amp_db", "phase_rad", "delay_s"};
    for (const auto &pt : s.points)
        t.rows.push_back({pt.x, pt.response.t.real(), pt.response.t.imag(), pt.response.amplitude_db,
                          pt.response.phase, pt.response.delay.value_or(std::nan(""))});
    return t;
}

// sweep-g -> g_hz, t_z, amp_db, phase_rad, delay_s
inline CsvTable coupling_sweep_table(const Spectrum &s)
{
    CsvTable t;
    t.meta = {{"command", "sweep_g"}};
    for (auto &m : device_meta(s.device))
        t.meta.push_back(m);
    t.columns = {"g_hz", "t_z", "amp_db", "phase_rad", "delay_s"};
    for (const auto &pt : s.points)
        t.rows.push_back({pt.x, pt.response.t.real(), pt.response.amplitude_db, pt.response.phase,
                          pt.response.delay.value_or(std::nan(""))});
    return t;
}

// pulse -> time_s, re, im, abs
inline CsvTable waveform_table(const PulseWaveform &w, const DeviceParams &p,
                               std::vector<std::pair<std::string, std::string>> extra = {})
{
    CsvTable t;
    t.meta = {{"command", "pulse"}};
    for (auto &m : device_meta(p))
        t.meta.push_back(m);
    t.meta.emplace_back("carrier_detuning_hz", format_number(w.carrier_detuning));
    t.meta.emplace_back("dt_s", format_number(w.dt));
    for (auto &m : extra)
        t.meta.push_back(std::move(m));
    t.columns = {"time_s", "re", "im", "abs"};
    for (std::size_t k = 0; k < w.size(); ++k)
        t.rows.push_back({w.time(k), w.samples[k].real(), w.samples[k].imag(), std::abs(w.samples[k])});
    return t;
}

inline PulseWaveform waveform_from_table(const CsvTable &t)
{
    const auto time = t.column("time_s");
    const auto re = t.column("re");
    const auto im = t.column("im");
    if (time.size() < 2)
        throw IoError("waveform needs at least two samples");
    PulseWaveform w;
    w.t0 = time.front();
    w.dt = (time.back() - time.front()) / static_cast<double>(time.size() - 1);
    if (auto dt = t.meta_value("dt_s"))
        if (auto v = detail::to_number(*dt))
            w.dt = *v;
    for (std::size_t k = 1; k < time.size(); ++k)
        if (std::abs((time[k] - time[k - 1]) - w.dt) > 1e-6 * w.dt)
            throw IoError("waveform time axis is not uniformly sampled");
    if (auto c = t.meta_value("carrier_detuning_hz"))
        if (auto v = detail::to_number(*c))
            w.carrier_detuning = *v;
    for (std::size_t k = 0; k < time.size(); ++k)
        w.samples.emplace_back(re[k], im[k]);
    return w;
}

// Reads a spectrum file: first column freq_hz (absolute) or detuning_hz, then re/im or amp_db[/phase_rad].
// `mode` forces a data mode; otherwise complex columns win over polar ones.
inline MeasuredSpectrum measured_spectrum_from_table(const CsvTable &t, std::optional<DataMode> mode = std::nullopt)
{
    FrequencyAxis axis;
    std::vector<double> f;
    if (t.has("freq_hz"))
    {
        axis = FrequencyAxis::Absolute;
        f = t.column("freq_hz");
    }
    else if (t.has("detuning_hz"))
    {
        axis = FrequencyAxis::Detuning;
        f = t.column("detuning_hz");
    }
    else
    {
        throw IoError("spectrum needs a freq_hz or detuning_hz column");
    }
    const DataMode m = mode ? *mode : (t.has("re") && t.has("im") ? DataMode::Complex
                                       : t.has("phase_rad")       ? DataMode::Polar
                                                                  : DataMode::AmplitudeOnly);
    switch (m)
    {
    case DataMode::Complex: {
        const auto re = t.column("re");
        const auto im = t.column("im");
        std::vector<cdouble> v;
        for (std::size_t i = 0; i < re.size(); ++i)
            v.emplace_back(re[i], im[i]);
        return MeasuredSpectrum::from_complex(axis, std::move(f), std::move(v));
    }
    case DataMode::Polar:
        return MeasuredSpectrum::from_polar(axis, std::move(f), t.column("amp_db"), t.column("phase_rad"));
    case DataMode::AmplitudeOnly:
        return MeasuredSpectrum::amplitude_only(axis, std::move(f), t.column("amp_db"));
    }
    throw IoError("unsupported data mode");
}

} // namespace omech::io

#endif // OMECH_IO_CSV_HPP
