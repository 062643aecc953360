#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "omech/cli.hpp"

using namespace omech;
using Catch::Approx;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace
{
struct TempDir
{
    fs::path path;
    TempDir()
    {
        static int counter = 0;
        path = fs::temp_directory_path() / ("omech_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path &p, const std::string &text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

struct RunResult
{
    int code = -1;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string &args, const fs::path &dir)
{
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string(OMECH_CLI_BINARY) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

// value after "key = " in a key = value report
double report_value(const std::string &text, const std::string &key)
{
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(key + " = ", 0) == 0)
            return std::stod(line.substr(key.size() + 3));
    FAIL("missing key " << key);
    return 0.0;
}

std::string report_string(const std::string &text, const std::string &key)
{
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(key + " = ", 0) == 0)
            return line.substr(key.size() + 3);
    FAIL("missing key " << key);
    return {};
}
} // namespace

TEST_CASE("frequency and time units", "[io]")
{
    using io::parse_frequency;
    CHECK(parse_frequency(json(17.53)) == 17.53);
    CHECK(parse_frequency(json("9.7 mHz")) == Approx(9.7e-3));
    CHECK(parse_frequency(json("5.318 GHz")) == Approx(5.318e9));
    CHECK(parse_frequency(json("420kHz")) == Approx(420e3));
    CHECK(parse_frequency(json("1 MHz")) == Approx(1e6));
    CHECK(parse_frequency(json("3 Hz")) == 3.0);
    CHECK_THROWS_AS(parse_frequency(json("3 mhz")), ConfigError);
    CHECK_THROWS_AS(parse_frequency(json("3 rad/s")), ConfigError);
    CHECK_THROWS_AS(parse_frequency(json("abc Hz")), ConfigError);
    CHECK(io::parse_time(json("250 ms")) == Approx(0.25));
    CHECK(io::parse_time(json("3 us")) == Approx(3e-6));
    CHECK_THROWS_AS(io::parse_time(json("3 min")), ConfigError);
}

TEST_CASE("device blocks", "[io]")
{
    const auto p = io::parse_device(json("paper_device"));
    CHECK(p.omega_c == 5.318e9);
    CHECK(p.omega_m == 755.5e3);
    CHECK(p.kappa == 420e3);
    CHECK(p.eta == 0.651);
    CHECK(p.gamma_m == 9.7e-3);
    const auto q = io::parse_device(json::parse(R"({"base": "paper_device", "eta": 0.7, "gamma_m": "20 mHz"})"));
    CHECK(q.eta == 0.7);
    CHECK(q.gamma_m == Approx(0.02));
    CHECK(q.kappa == 420e3);
    CHECK_THROWS_AS(io::parse_device(json("other_device")), ConfigError);
    CHECK_THROWS_AS(io::parse_device(json::parse(R"({"base": "paper_device", "eta": 1.2})")), ConfigError);
    const auto back = io::parse_device(io::device_to_json(q));
    CHECK(back.eta == q.eta);
    CHECK(back.gamma_m == q.gamma_m);
}

TEST_CASE("key = value configs", "[io]")
{
    const auto doc = io::parse_config_text(R"(# comment
format = omech-config/1
device.base = paper_device
device.eta = 0.7
spectrum.G = 176.8 Hz   # trailing comment
spectrum.points = 11
output = "some dir"
)");
    CHECK(doc.at("device").at("eta") == 0.7);
    CHECK(doc.at("spectrum").at("G") == "176.8 Hz");
    CHECK(doc.at("spectrum").at("points") == 11);
    CHECK(doc.at("output") == "some dir");
    const auto rc = io::make_run_config(doc, "spectrum");
    CHECK(rc.device.eta == 0.7);
    CHECK(rc.output == "some dir");
    CHECK_THROWS_AS(io::parse_config_text("format omech-config/1"), ConfigError);
    CHECK_THROWS_AS(io::parse_config_text("a = 1\na.b = 2"), ConfigError);
    CHECK_THROWS_AS(io::parse_config_text("{ not json"), ConfigError);
}

TEST_CASE("run configs carry exactly one matching command block and a known version", "[io]")
{
    auto doc = json::parse(R"({"format": "omech-config/1", "device": "paper_device", "critical": {}})");
    CHECK_NOTHROW(io::make_run_config(doc, "critical"));
    CHECK_THROWS_AS(io::make_run_config(doc, "spectrum"), ConfigError);
    doc["spectrum"] = json::object();
    CHECK_THROWS_AS(io::make_run_config(doc, "critical"), ConfigError);
    doc = json::parse(R"({"format": "omech-config/2", "critical": {}})");
    CHECK_THROWS_AS(io::make_run_config(doc, "critical"), ConfigError);
    doc = json::parse(R"({"critical": {}})");
    CHECK_THROWS_AS(io::make_run_config(doc, "critical"), ConfigError);
}

TEST_CASE("CSV rendering is round-trippable and carries the header block", "[io]")
{
    const auto p = paper_device();
    SweepSpec spec = default_detuning_sweep(p, Coupling{176.8}, 51);
    const auto table = io::spectrum_table(numeric_group_delay(sweep_detuning(p, spec)));
    const std::string text = io::render_csv(table);
    CHECK(text.rfind("# format: omech-csv/1\n", 0) == 0);
    CHECK(text.find("# device.kappa_hz: 420000\n") != std::string::npos);
    CHECK(text.find("# device.gamma_m_hz: 0.0097") != std::string::npos);
    CHECK(text.find("\ndetuning_hz,re,im,amp_db,phase_rad,delay_s\n") != std::string::npos);
    const auto back = io::parse_csv(text);
    CHECK(back.columns == table.columns);
    REQUIRE(back.rows.size() == table.rows.size());
    for (std::size_t i = 0; i < back.rows.size(); ++i)
        for (std::size_t j = 0; j < back.rows[i].size(); ++j)
            CHECK(back.rows[i][j] == table.rows[i][j]);
    CHECK(io::render_csv(back) == text);
    CHECK(io::format_number(0.1) == "0.10000000000000001");
    CHECK(io::format_number(std::nan("")) == "nan");
}

TEST_CASE("atomic writes leave no partial files behind", "[io]")
{
    TempDir tmp;
    const auto target = tmp.path / "nested" / "a.csv";
    io::write_file_atomic(target, "hello\n");
    CHECK(slurp(target) == "hello\n");
    CHECK_FALSE(fs::exists(target.string() + ".tmp"));

    // Renaming onto a non-empty directory fails; the temp file must disappear.
    const auto blocker = tmp.path / "blocked";
    fs::create_directories(blocker / "inner");
    CHECK_THROWS_AS(io::write_file_atomic(blocker, "data"), IoError);
    CHECK_FALSE(fs::exists(blocker.string() + ".tmp"));
    CHECK_THROWS_AS(io::read_csv(tmp.path / "missing.csv"), IoError);
}

TEST_CASE("waveform tables round-trip", "[io]")
{
    const auto p = paper_device();
    const Coupling c{155.1};
    const auto cfg = narrowband_pulse_config(p, c, 0.01);
    const auto w = propagate_frequency_domain(gaussian_pulse(cfg), p, c);
    const auto table = io::parse_csv(io::render_csv(io::waveform_table(w, p)));
    CHECK(table.columns == std::vector<std::string>{"time_s", "re", "im", "abs"});
    const auto back = io::waveform_from_table(table);
    CHECK(back.size() == w.size());
    CHECK(back.dt == w.dt);
    CHECK(back.carrier_detuning == 0.01);
    for (std::size_t k = 0; k < w.size(); ++k)
        CHECK(back.samples[k] == w.samples[k]);
}

TEST_CASE("spectrum files load as measured spectra", "[io]")
{
    const auto p = paper_device();
    const auto table = io::spectrum_table(sweep_detuning(p, default_detuning_sweep(p, Coupling{17.66}, 101)));
    const auto s = io::measured_spectrum_from_table(table);
    CHECK(s.mode == DataMode::Complex);
    CHECK(s.axis == FrequencyAxis::Detuning);
    CHECK(s.size() == 101);
    CHECK(io::measured_spectrum_from_table(table, DataMode::Polar).mode == DataMode::Polar);
    CHECK(io::measured_spectrum_from_table(table, DataMode::AmplitudeOnly).phase.empty());
    io::CsvTable bad;
    bad.columns = {"x", "re", "im"};
    CHECK_THROWS_AS(io::measured_spectrum_from_table(bad), IoError);
}

TEST_CASE("cli critical reports the couplings", "[cli]")
{
    TempDir tmp;
    const auto r = run_cli("critical", tmp.path);
    REQUIRE(r.code == 0);
    CHECK(report_value(r.out, "G_c_hz") == Approx(17.53).margin(0.01));
    CHECK(report_value(r.out, "G_b_hz") == Approx(29.68).margin(0.01));
    CHECK(report_value(r.out, "dip_depth_db") == Approx(-49.833174595503378).epsilon(1e-12));
    CHECK(report_string(r.out, "regime") == "delay_side_absorbing");
    CHECK(report_string(r.out, "boundary") == "none");
}

TEST_CASE("cli critical flags the boundary coupling", "[cli]")
{
    TempDir tmp;
    spit(tmp.path / "c.cfg", "format = omech-config/1\ndevice = paper_device\ncritical.G = G_b\n");
    const auto r = run_cli("critical --config " + (tmp.path / "c.cfg").string(), tmp.path);
    REQUIRE(r.code == 0);
    CHECK(report_string(r.out, "boundary") == "boundary");
    spit(tmp.path / "d.cfg", "format = omech-config/1\ncritical.G = G_c\n");
    const auto r2 = run_cli("critical --config " + (tmp.path / "d.cfg").string(), tmp.path);
    REQUIRE(r2.code == 0);
    CHECK(report_string(r2.out, "boundary") == "critical");
}

TEST_CASE("cli exit codes", "[cli]")
{
    TempDir tmp;
    spit(tmp.path / "under.cfg", "format = omech-config/1\ndevice.base = paper_device\ndevice.eta = 0.4\ncritical.G = 10\n");
    auto r = run_cli("critical --config " + (tmp.path / "under.cfg").string(), tmp.path);
    CHECK(r.code == 2);
    CHECK_FALSE(r.err.empty());

    r = run_cli("critical --config " + (tmp.path / "nope.cfg").string(), tmp.path);
    CHECK(r.code == 4);

    r = run_cli("bogus", tmp.path);
    CHECK(r.code == 2);

    spit(tmp.path / "two.json", R"({"format": "omech-config/1", "critical": {}, "spectrum": {}})");
    r = run_cli("critical --config " + (tmp.path / "two.json").string(), tmp.path);
    CHECK(r.code == 2);

    spit(tmp.path / "fit.cfg", "format = omech-config/1\nfit.input = " + (tmp.path / "missing.csv").string() + "\n");
    r = run_cli("fit --config " + (tmp.path / "fit.cfg").string(), tmp.path);
    CHECK(r.code == 4);

    // Flat spectrum: no dip for the bare-cavity fit.
    std::string flat = "# format: omech-csv/1\ndetuning_hz,re,im\n";
    for (int i = 0; i < 50; ++i)
        flat += std::to_string(i) + ",1,0\n";
    spit(tmp.path / "flat.csv", flat);
    spit(tmp.path / "flat.cfg",
         "format = omech-config/1\nfit.kind = bare_cavity\nfit.input = " + (tmp.path / "flat.csv").string() + "\n");
    r = run_cli("fit --config " + (tmp.path / "flat.cfg").string() + " --out " + (tmp.path / "o").string(), tmp.path);
    CHECK(r.code == 3);
    CHECK_FALSE(fs::exists(tmp.path / "o" / "fit_result.json"));
}

TEST_CASE("cli spectrum output is byte-identical across runs", "[cli]")
{
    TempDir tmp;
    const auto a = run_cli("spectrum --points 301 --out " + (tmp.path / "a").string(), tmp.path);
    const auto b = run_cli("spectrum --points 301 --out " + (tmp.path / "b").string(), tmp.path);
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    const std::string x = slurp(tmp.path / "a" / "spectrum.csv");
    CHECK_FALSE(x.empty());
    CHECK(x == slurp(tmp.path / "b" / "spectrum.csv"));
    CHECK(io::parse_csv(x).rows.size() == 301);
    CHECK(a.out.find("rows=301") != std::string::npos);
}

TEST_CASE("cli sweep-g reproduces the phase step and the delay sign change", "[cli]")
{
    TempDir tmp;
    const auto r = run_cli("sweep-g --out " + tmp.path.string(), tmp.path);
    REQUIRE(r.code == 0);
    const auto t = io::read_csv(tmp.path / "sweep_g.csv");
    CHECK(t.columns == std::vector<std::string>{"g_hz", "t_z", "amp_db", "phase_rad", "delay_s"});
    CHECK(t.rows.size() == 2000);
    const double Gc = critical_coupling(paper_device());
    for (const auto &row : t.rows)
    {
        CHECK(row[3] == (row[0] < Gc ? std::numbers::pi : 0.0));
        CHECK((row[0] < Gc ? row[4] < 0.0 : row[4] > 0.0));
    }
    CHECK(t.meta_value("device.eta") == "0.65100000000000002");
    CHECK(r.out.find("G_c_sweep_hz=") != std::string::npos);
}

TEST_CASE("cli pulse writes the waveforms and reports the delay", "[cli]")
{
    TempDir tmp;
    const auto r = run_cli("pulse --out " + tmp.path.string(), tmp.path);
    REQUIRE(r.code == 0);
    for (const char *name : {"pulse_input.csv", "pulse_output_fft.csv", "pulse_output_td.csv"})
    {
        const auto t = io::read_csv(tmp.path / name);
        CHECK(t.columns == std::vector<std::string>{"time_s", "re", "im", "abs"});
        CHECK(t.rows.size() > 100);
    }
    const auto out = io::read_csv(tmp.path / "pulse_output_fft.csv");
    const double delay = std::stod(*out.meta_value("delay_s"));
    CHECK(delay == Approx(1.7579510380600018).epsilon(0.05));
}

TEST_CASE("cli fit recovers the generating parameters from cli spectrum output", "[cli]")
{
    TempDir tmp;
    spit(tmp.path / "spec.cfg", "format = omech-config/1\ndevice = paper_device\nspectrum.G = 176.8 Hz\n");
    auto r = run_cli("spectrum --config " + (tmp.path / "spec.cfg").string() + " --out " + tmp.path.string(), tmp.path);
    REQUIRE(r.code == 0);
    spit(tmp.path / "fit.cfg", "format = omech-config/1\ndevice = paper_device\nfit.input = " +
                                   (tmp.path / "spectrum.csv").string() + "\n");
    r = run_cli("fit --config " + (tmp.path / "fit.cfg").string() + " --out " + tmp.path.string(), tmp.path);
    REQUIRE(r.code == 0);
    const auto j = json::parse(slurp(tmp.path / "fit_result.json"));
    CHECK(j.at("kind") == "mechanical_window");
    CHECK(j.at("converged") == true);
    CHECK(j.at("params").at("G").at("value").get<double>() == Approx(176.8).epsilon(1e-6));
    CHECK(j.at("params").at("gamma_m").at("value").get<double>() == Approx(9.7e-3).epsilon(1e-6));
    const std::string report = slurp(tmp.path / "fit_report.txt");
    CHECK(report.find("converged = true") != std::string::npos);

    // Bare cavity, through the same path.
    spit(tmp.path / "bare.cfg", "format = omech-config/1\nspectrum.G = 0\nspectrum.points = 801\noutput = " +
                                    (tmp.path / "bare").string() + "\n");
    r = run_cli("spectrum --config " + (tmp.path / "bare.cfg").string(), tmp.path);
    REQUIRE(r.code == 0);
    spit(tmp.path / "fitb.cfg", "format = omech-config/1\nfit.input = " + (tmp.path / "bare" / "spectrum.csv").string() +
                                    "\noutput = " + (tmp.path / "bare").string() + "\n");
    r = run_cli("fit --config " + (tmp.path / "fitb.cfg").string(), tmp.path);
    REQUIRE(r.code == 0);
    const auto jb = json::parse(slurp(tmp.path / "bare" / "fit_result.json"));
    CHECK(jb.at("kind") == "bare_cavity");
    CHECK(jb.at("params").at("kappa").at("value").get<double>() == Approx(420e3).epsilon(1e-6));
    CHECK(jb.at("params").at("eta").at("value").get<double>() == Approx(0.651).epsilon(1e-6));
    CHECK(jb.at("params").at("omega_c").at("value").get<double>() == Approx(5.318e9).epsilon(1e-12));

    // Critical coupling from the sweep file.
    r = run_cli("sweep-g --out " + (tmp.path / "sw").string(), tmp.path);
    REQUIRE(r.code == 0);
    spit(tmp.path / "fitc.cfg", "format = omech-config/1\nfit.input = " + (tmp.path / "sw" / "sweep_g.csv").string() +
                                    "\noutput = " + (tmp.path / "sw").string() + "\n");
    r = run_cli("fit --config " + (tmp.path / "fitc.cfg").string(), tmp.path);
    REQUIRE(r.code == 0);
    const auto jc = json::parse(slurp(tmp.path / "sw" / "fit_result.json"));
    CHECK(jc.at("kind") == "critical");
    CHECK(jc.at("params").at("G_c").at("value").get<double>() == Approx(17.53).margin(0.01));
}

TEST_CASE("cli Monte-Carlo fits are seed-reproducible", "[cli]")
{
    TempDir tmp;
    spit(tmp.path / "spec.cfg", "format = omech-config/1\nspectrum.G = 176.8 Hz\nspectrum.points = 401\n");
    REQUIRE(run_cli("spectrum --config " + (tmp.path / "spec.cfg").string() + " --out " + tmp.path.string(), tmp.path)
                .code == 0);
    spit(tmp.path / "fit.cfg", "format = omech-config/1\nfit.input = " + (tmp.path / "spectrum.csv").string() +
                                   "\nfit.monte_carlo.trials = 10\nfit.monte_carlo.snr_db = 30\n");
    auto r = run_cli("fit --seed 7 --config " + (tmp.path / "fit.cfg").string() + " --out " + (tmp.path / "a").string(),
                     tmp.path);
    REQUIRE(r.code == 0);
    r = run_cli("fit --seed 7 --config " + (tmp.path / "fit.cfg").string() + " --out " + (tmp.path / "b").string(),
                tmp.path);
    REQUIRE(r.code == 0);
    const std::string a = slurp(tmp.path / "a" / "fit_result.json");
    CHECK(a == slurp(tmp.path / "b" / "fit_result.json"));
    const auto j = json::parse(a);
    CHECK(j.at("params").contains("G.mc_mean"));
    CHECK(j.at("params").at("G.mc_mean").at("value").get<double>() == Approx(176.8).epsilon(5e-3));
}

TEST_CASE("run_command maps library errors to exit codes in-process", "[cli]")
{
    std::ostringstream out, err;
    cli::CliOptions opt;
    CHECK(cli::run_command("critical", opt, out, err) == 0);
    CHECK(cli::run_command("nothing", opt, out, err) == cli::kExitConfig);
    CHECK(cli::exit_code_for(NumericalError("x")) == cli::kExitNumerical);
    CHECK(cli::exit_code_for(SingularityError("x")) == cli::kExitNumerical);
    CHECK(cli::exit_code_for(IoError("x")) == cli::kExitIo);
    CHECK(cli::exit_code_for(NoCriticalCouplingError("x")) == cli::kExitConfig);
}
