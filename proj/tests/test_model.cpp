#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "omech/model.hpp"
#include "oracles.hpp"

using namespace omech;
using Catch::Approx;

namespace
{
constexpr double kPi = std::numbers::pi;

// 20 log10 |t_z| and tau_z at the reference device, from 50-digit evaluation of the
// literal transmission formula (numerical differentiation for the delays).
constexpr double kDipDb1766 = -49.833174595503378;
constexpr double kTauZ1768 = 1.3616185253748194;
constexpr double kTauZ1551 = 1.7579510380600018;
constexpr double kTauZ1724 = -948.00054566907240;
constexpr double kTauZ1784 = 970.22061600615064;
constexpr double kTau1768At50mHz = 1.2591339384338895;
constexpr double kGcRef = 17.538158398189932;
constexpr double kGbRef = 29.687339201796474;

DeviceParams random_device(std::mt19937_64 &rng, double eta_lo = 0.02, double eta_hi = 0.98)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DeviceParams p;
    p.omega_c = 1e9 + 9e9 * u(rng);
    p.omega_m = 1e5 + 1e7 * u(rng);
    p.kappa = std::pow(10.0, 3.0 + 4.0 * u(rng));
    p.gamma_m = std::pow(10.0, -3.0 + 4.0 * u(rng));
    p.eta = eta_lo + (eta_hi - eta_lo) * u(rng);
    return p;
}
} // namespace

TEST_CASE("transmission at the critical coupling vanishes at resonance", "[model]")
{
    const auto p = paper_device();
    const Coupling c{critical_coupling(p)};
    const auto r = transmission(p, c, 0.0);
    CHECK(std::abs(r.t) < 1e-12);
    CHECK(transmission_at_resonance(p, c) == Approx(0.0).margin(1e-15));
}

TEST_CASE("bare cavity resonance is 1 - 2 eta", "[model]")
{
    const auto p = paper_device();
    const auto r = transmission(p, Coupling{0.0}, 0.0);
    CHECK(r.t.real() == Approx(1.0 - 2.0 * 0.651).epsilon(1e-15));
    CHECK(r.t.imag() == 0.0);
    CHECK(r.phase == kPi);
    CHECK(transmission_at_resonance(p, Coupling{0.0}) == Approx(-0.302).epsilon(1e-14));
}

TEST_CASE("dip depth near critical coupling", "[model]")
{
    const auto p = paper_device();
    const auto r = transmission(p, Coupling{17.66}, 0.0);
    CHECK(r.amplitude_db == Approx(kDipDb1766).epsilon(1e-12));
    CHECK(20.0 * std::log10(std::abs(transmission_at_resonance(p, Coupling{17.66}))) ==
          Approx(kDipDb1766).epsilon(1e-12));
    CHECK(r.amplitude_db > -52.0);
    CHECK(r.amplitude_db < -46.0);
}

TEST_CASE("transmission at resonance: asymptote and equal-depth pair", "[model]")
{
    const auto p = paper_device();
    CHECK(std::abs(transmission_at_resonance(p, Coupling{1e6}) - 1.0) < 1e-6);
    const double lo = transmission_at_resonance(p, Coupling{17.24});
    const double hi = transmission_at_resonance(p, Coupling{17.84});
    CHECK(lo < 0.0);
    CHECK(hi > 0.0);
    CHECK(20.0 * std::log10(std::abs(lo)) == Approx(-42.0).margin(1.0));
    CHECK(20.0 * std::log10(std::abs(hi)) == Approx(-42.0).margin(1.0));
}

TEST_CASE("critical and boundary couplings", "[model]")
{
    const auto p = paper_device();
    CHECK(critical_coupling(p) == Approx(17.53).margin(0.01));
    CHECK(boundary_coupling(p) == Approx(29.68).margin(0.01));
    CHECK(critical_coupling(p) == Approx(kGcRef).epsilon(1e-14));
    CHECK(boundary_coupling(p) == Approx(kGbRef).epsilon(1e-14));

    auto q = p;
    q.eta = 0.5 + 1e-12;
    CHECK(critical_coupling(q) < 1e-3);
    q.eta = 0.3;
    CHECK_THROWS_AS(critical_coupling(q), NoCriticalCouplingError);
    CHECK_THROWS_AS(boundary_coupling(q), NoCriticalCouplingError);
    q.eta = 1.0 - 1e-10;
    CHECK_THROWS_AS(boundary_coupling(q), ParameterError);
}

TEST_CASE("boundary over critical coupling ratio identity", "[model][property]")
{
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i)
    {
        const auto p = random_device(rng, 0.501, 0.999);
        const double ratio = boundary_coupling(p) / critical_coupling(p);
        CHECK(ratio == Approx(std::sqrt(1.0 / (1.0 - p.eta))).epsilon(1e-12));
        CHECK(boundary_coupling(p) > critical_coupling(p));
        // |t_z(G_b)| equals the bare-cavity floor |1 - 2 eta|.
        CHECK(transmission_at_resonance(p, Coupling{boundary_coupling(p)}) ==
              Approx(2.0 * p.eta - 1.0).epsilon(1e-10));
    }
}

TEST_CASE("parameter validation", "[model]")
{
    auto p = paper_device();
    p.kappa = 0.0;
    CHECK_THROWS_AS(transmission(p, Coupling{1.0}, 0.0), ParameterError);
    p = paper_device();
    p.eta = 1.0;
    CHECK_THROWS_AS(transmission(p, Coupling{1.0}, 0.0), ParameterError);
    p = paper_device();
    CHECK_THROWS_AS(transmission(p, Coupling{-1.0}, 0.0), ParameterError);
}

TEST_CASE("phase at resonance flips by pi across G_c", "[model]")
{
    const auto p = paper_device();
    CHECK(phase_at_resonance(p, Coupling{17.24}) == kPi);
    CHECK(phase_at_resonance(p, Coupling{17.84}) == 0.0);
    CHECK(phase_at_resonance(p, Coupling{176.8}) == 0.0);
    CHECK_THROWS_AS(phase_at_resonance(p, Coupling{critical_coupling(p)}), SingularityError);
    // The full response agrees with the resonance branch convention.
    CHECK(transmission(p, Coupling{17.24}, 0.0).phase == kPi);
    CHECK(transmission(p, Coupling{17.84}, 0.0).phase == 0.0);
}

TEST_CASE("principal phase branch", "[model]")
{
    CHECK(principal_phase({-1.0, 0.0}) == kPi);
    CHECK(principal_phase({-1.0, -0.0}) == kPi);
    CHECK(principal_phase({1.0, 0.0}) == 0.0);
    CHECK(principal_phase({0.0, -1.0}) == Approx(-kPi / 2));
}

TEST_CASE("group delay at resonance: closed form, general form and oracle", "[model][delay]")
{
    const auto p = paper_device();
    for (auto [G, expected] : {std::pair{176.8, kTauZ1768}, std::pair{155.1, kTauZ1551}, std::pair{17.24, kTauZ1724},
                               std::pair{17.84, kTauZ1784}})
    {
        INFO("G = " << G);
        const Coupling c{G};
        CHECK(group_delay_at_resonance(p, c) == Approx(expected).epsilon(1e-10));
        CHECK(group_delay_analytic(p, c, 0.0) == Approx(expected).epsilon(1e-10));
    }
    CHECK(group_delay_at_resonance(p, Coupling{17.24}) < 0.0);

    // Finite-difference oracle at the transparency-regime couplings (step well inside the window).
    for (double G : {176.8, 155.1})
    {
        const double fd = oracle::group_delay_fd(p.kappa, p.eta, p.gamma_m, G, 0.0L, 1e-3L);
        CHECK(group_delay_analytic(p, Coupling{G}, 0.0) == Approx(fd).epsilon(1e-6));
    }
    CHECK(group_delay_analytic(p, Coupling{176.8}, 0.05) == Approx(kTau1768At50mHz).epsilon(1e-10));
}

TEST_CASE("group delay vanishes far from resonance without coupling", "[model][delay]")
{
    const auto p = paper_device();
    const double tau = group_delay_analytic(p, Coupling{0.0}, 100.0 * p.kappa);
    CHECK(std::abs(tau) < 1e-3 * std::abs(group_delay_analytic(p, Coupling{0.0}, 0.0)));
}

TEST_CASE("group delay is singular at the perfect-absorption zero", "[model][delay]")
{
    const auto p = paper_device();
    const Coupling c{critical_coupling(p)};
    CHECK_THROWS_AS(group_delay_analytic(p, c, 0.0), SingularityError);
    CHECK_THROWS_AS(group_delay_at_resonance(p, c), SingularityError);
}

TEST_CASE("regime classification", "[model]")
{
    const auto p = paper_device();
    CHECK(regime_classify(p, Coupling{11.87}).regime == Regime::AdvanceSide);
    CHECK(regime_classify(p, Coupling{23.93}).regime == Regime::DelaySideAbsorbing);
    CHECK(regime_classify(p, Coupling{155.1}).regime == Regime::Transparency);
    CHECK_FALSE(regime_classify(p, Coupling{23.93}).on_boundary());
    CHECK(regime_classify(p, Coupling{critical_coupling(p)}).near_critical);
    CHECK(regime_classify(p, Coupling{boundary_coupling(p) * (1.0 + 5e-7)}).near_boundary);
    CHECK_FALSE(regime_classify(p, Coupling{boundary_coupling(p) * (1.0 + 5e-6)}).near_boundary);
    auto q = p;
    q.eta = 0.4;
    CHECK_THROWS_AS(regime_classify(q, Coupling{10.0}), NoCriticalCouplingError);
}

TEST_CASE("enhanced coupling follows the square-root law", "[model]")
{
    CHECK(enhanced_coupling(1.0, 0.0).G == 0.0);
    CHECK(enhanced_coupling(1.0, 4.0).G == 2.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int i = 0; i < 100; ++i)
    {
        const double g0 = u(rng), n = u(rng) * 1e4;
        CHECK(enhanced_coupling(g0, 4.0 * n).G == Approx(2.0 * enhanced_coupling(g0, n).G).epsilon(1e-14));
    }
    CHECK_THROWS_AS(enhanced_coupling(-1.0, 1.0), ParameterError);
    CHECK_THROWS_AS(enhanced_coupling(1.0, -1.0), ParameterError);
}

TEST_CASE("response properties over random draws", "[model][property]")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 2000; ++i)
    {
        const auto p = random_device(rng);
        const double G = std::pow(10.0, -1.0 + 4.0 * u(rng));
        const double delta = (2.0 * u(rng) - 1.0) * std::pow(10.0, -3.0 + 9.0 * u(rng));
        const Coupling c{G};
        const cdouble t = transmission_coefficient(p, c, delta);
        const cdouble tm = transmission_coefficient(p, c, -delta);
        CHECK(std::abs(t) <= 1.0 + 1e-12);
        CHECK(std::abs(std::abs(t) - std::abs(tm)) <= 1e-12 * std::max(1.0, std::abs(t)));
        CHECK(std::abs(principal_phase(t) + principal_phase(tm)) < 1e-9);
        CHECK(std::abs(transmission_coefficient(p, c, 0.0).imag()) < 1e-12);
        // Literal-formula oracle.
        const auto ref = oracle::transmission(p.kappa, p.eta, p.gamma_m, G, delta);
        CHECK(std::abs(t - cdouble(static_cast<double>(ref.real()), static_cast<double>(ref.imag()))) < 1e-9);
    }
}

TEST_CASE("sign law and monotone dip of T_z", "[model][property]")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 500; ++i)
    {
        const auto p = random_device(rng, 0.51, 0.99);
        const double Gc = critical_coupling(p);
        double prev = std::numeric_limits<double>::infinity();
        for (int k = 1; k < 200; ++k)
        {
            const double G = Gc * k / 200.0;
            const double Tz = std::pow(transmission_at_resonance(p, Coupling{G}), 2);
            CHECK(Tz < prev);
            CHECK(transmission_at_resonance(p, Coupling{G}) < 0.0);
            prev = Tz;
        }
        prev = 0.0;
        for (int k = 1; k < 200; ++k)
        {
            const double G = Gc * (1.0 + 10.0 * k / 200.0);
            const double Tz = std::pow(transmission_at_resonance(p, Coupling{G}), 2);
            CHECK(Tz > prev);
            CHECK(transmission_at_resonance(p, Coupling{G}) > 0.0);
            prev = Tz;
        }
    }
}

TEST_CASE("analytic delay matches the finite-difference oracle on random samples", "[model][delay][property]")
{
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int checked = 0;
    while (checked < 1000)
    {
        const auto p = random_device(rng);
        const double G = std::pow(10.0, -1.0 + 3.5 * u(rng));
        const Coupling c{G};
        const double W = effective_window_width(p, c);
        // Mix of in-window and cavity-scale detunings.
        const double scale = u(rng) < 0.5 ? W : p.kappa;
        const double delta = (2.0 * u(rng) - 1.0) * 5.0 * scale;
        const cdouble t = transmission_coefficient(p, c, delta);
        if (std::abs(t) < 1e-3)
            continue;  // guard band around zeros of t
        const double tau = group_delay_analytic(p, c, delta);
        // Step: a small fraction of the local feature width.
        const double width = std::min({std::max(W, std::abs(delta)), p.kappa, 1.0 / std::max(std::abs(tau), 1e-30)});
        const double fd = oracle::group_delay_fd(p.kappa, p.eta, p.gamma_m, G, delta, 1e-3L * width);
        INFO("G=" << G << " delta=" << delta << " tau=" << tau << " fd=" << fd);
        CHECK(std::abs(tau - fd) <= 1e-6 * std::abs(fd) + 1e-12 / p.kappa);
        ++checked;
    }
}

TEST_CASE("delay divergence law near G_c", "[model][delay][property]")
{
    const auto p = paper_device();
    const double Gc = critical_coupling(p);
    for (double sign : {1.0, -1.0})
        for (double eps = 1e-2; eps > 1.01e-4; eps /= 2.0)
        {
            const double t1 = group_delay_at_resonance(p, Coupling{Gc * (1.0 + sign * eps)});
            const double t2 = group_delay_at_resonance(p, Coupling{Gc * (1.0 + sign * eps / 2.0)});
            CHECK(std::abs(t2 / t1) == Approx(2.0).epsilon(0.05));
            CHECK(sign * t1 > 0.0);
        }
}
