#ifndef OMECH_IO_CONFIG_HPP
#define OMECH_IO_CONFIG_HPP

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "omech/device.hpp"
#include "omech/errors.hpp"

// Run configuration: a JSON document, or flat `dotted.key = value` lines, carrying a format tag,
// a device block (inline or the bundled "paper_device"), an output path and exactly one command block.
namespace omech::io
{
using json = nlohmann::json;

inline constexpr std::string_view kConfigFormat = "omech-config/1";
inline constexpr std::string_view kCommandBlocks[] = {"critical", "spectrum", "sweep_g", "pulse", "fit"};

namespace detail
{
inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> to_number(std::string_view s)
{
    double v = 0.0;
    const auto *end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        return std::nullopt;
    return v;
}

// "420 kHz" -> (420, "kHz"); "0.651" -> (0.651, "").
inline std::pair<double, std::string> split_quantity(const std::string &text)
{
    const std::string s = trim(text);
    std::size_t split = s.size();
    while (split > 0 && std::isalpha(static_cast<unsigned char>(s[split - 1])))
        --split;
    const auto number = to_number(trim(std::string_view(s).substr(0, split)));
    if (!number)
        throw ConfigError("cannot parse quantity '" + text + "'");
    return {*number, s.substr(split)};
}
} // namespace detail

// Frequency in Hz from a bare number (already Hz) or a string with Hz/kHz/MHz/GHz/mHz suffix.
// Suffixes are case-sensitive: mHz is milli-hertz, MHz mega-hertz.
inline double parse_frequency(const json &v)
{
    if (v.is_number())
        return v.get<double>();
    if (!v.is_string())
        throw ConfigError("frequency must be a number or a string with a unit");
    const auto [x, unit] = detail::split_quantity(v.get<std::string>());
    if (unit.empty() || unit == "Hz")
        return x;
    if (unit == "mHz")
        return x * 1e-3;
    if (unit == "kHz")
        return x * 1e3;
    if (unit == "MHz")
        return x * 1e6;
    if (unit == "GHz")
        return x * 1e9;
    throw ConfigError("unknown frequency unit '" + unit + "'");
}

// Time in seconds from a bare number or a string with s/ms/us/ns suffix.
inline double parse_time(const json &v)
{
    if (v.is_number())
        return v.get<double>();
    if (!v.is_string())
        throw ConfigError("time must be a number or a string with a unit");
    const auto [x, unit] = detail::split_quantity(v.get<std::string>());
    if (unit.empty() || unit == "s")
        return x;
    if (unit == "ms")
        return x * 1e-3;
    if (unit == "us")
        return x * 1e-6;
    if (unit == "ns")
        return x * 1e-9;
    throw ConfigError("unknown time unit '" + unit + "'");
}

inline double parse_number(const json &v)
{
    if (v.is_number())
        return v.get<double>();
    if (v.is_string())
        if (auto x = detail::to_number(detail::trim(v.get<std::string>())))
            return *x;
    throw ConfigError("expected a number");
}

inline DeviceParams parse_device(const json &v)
{
    if (v.is_string())
    {
        if (v.get<std::string>() == "paper_device")
            return paper_device();
        throw ConfigError("unknown bundled device '" + v.get<std::string>() + "'");
    }
    if (!v.is_object())
        throw ConfigError("device block must be an object or a bundled device name");
    DeviceParams p = v.contains("base") ? parse_device(v.at("base")) : DeviceParams{};
    auto freq = [&](const char *key, double &field) {
        if (v.contains(key))
            field = parse_frequency(v.at(key));
    };
    freq("omega_c", p.omega_c);
    freq("omega_m", p.omega_m);
    freq("kappa", p.kappa);
    freq("gamma_m", p.gamma_m);
    if (v.contains("eta"))
        p.eta = parse_number(v.at("eta"));
    if (v.contains("g0"))
        p.g0 = parse_frequency(v.at("g0"));
    try
    {
        validate(p);
    }
    catch (const ParameterError &e)
    {
        throw ConfigError(std::string("device block: ") + e.what());
    }
    return p;
}

inline json device_to_json(const DeviceParams &p)
{
    json j = {{"omega_c", p.omega_c}, {"omega_m", p.omega_m}, {"kappa", p.kappa}, {"eta", p.eta}, {"gamma_m", p.gamma_m}};
    if (p.g0)
        j["g0"] = *p.g0;
    return j;
}

// Flat `a.b.c = value` lines (# comments allowed) into a nested object.
inline json parse_key_value(std::string_view text)
{
    json root = json::object();
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        const auto hash = line.find('#');
        const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(body.substr(0, eq));
        std::string value = detail::trim(body.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        json *node = &root;
        std::size_t start = 0;
        while (true)
        {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot - start);
            if (part.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": malformed key '" + key + "'");
            if (dot == std::string::npos)
            {
                if (auto num = detail::to_number(value))
                    (*node)[part] = *num;
                else if (value == "true" || value == "false")
                    (*node)[part] = value == "true";
                else
                    (*node)[part] = value;
                break;
            }
            node = &(*node)[part];
            if (node->is_null())
                *node = json::object();
            if (!node->is_object())
                throw ConfigError("line " + std::to_string(lineno) + ": key '" + key + "' conflicts with a value");
            start = dot + 1;
        }
    }
    return root;
}

inline json parse_config_text(std::string_view text)
{
    const std::string t = detail::trim(text);
    if (!t.empty() && t.front() == '{')
    {
        try
        {
            return json::parse(t);
        }
        catch (const json::exception &e)
        {
            throw ConfigError(std::string("invalid JSON config: ") + e.what());
        }
    }
    return parse_key_value(t);
}

inline json load_config_document(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

struct RunConfig
{
    std::string version{kConfigFormat};
    DeviceParams device = paper_device();
    std::string command;     // block name: critical, spectrum, sweep_g, pulse, fit
    json block = json::object();
    std::string output = "."; // output directory
};

// Validates the document against the command being run.
inline RunConfig make_run_config(const json &doc, const std::string &command)
{
    if (!doc.is_object())
        throw ConfigError("config must be an object");
    RunConfig rc;
    rc.command = command;
    if (!doc.contains("format") || !doc.at("format").is_string() || doc.at("format").get<std::string>() != kConfigFormat)
        throw ConfigError("config format tag must be \"" + std::string(kConfigFormat) + "\"");
    if (doc.contains("device"))
        rc.device = parse_device(doc.at("device"));
    if (doc.contains("output"))
        rc.output = doc.at("output").get<std::string>();
    int blocks = 0;
    for (auto name : kCommandBlocks)
        if (doc.contains(std::string(name)))
        {
            ++blocks;
            if (name != command)
                throw ConfigError("config carries a '" + std::string(name) + "' block but the command is " + command);
        }
    if (blocks != 1)
        throw ConfigError("config must carry exactly one command block ('" + command + "')");
    rc.block = doc.at(command);
    if (!rc.block.is_object())
        throw ConfigError("command block must be an object");
    return rc;
}

} // namespace omech::io

#endif // OMECH_IO_CONFIG_HPP
