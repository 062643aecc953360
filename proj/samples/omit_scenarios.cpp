// Prints dip depth, phase and delay for a handful of couplings on the reference device,
// then measures the pulse delay at one transparency-regime coupling.
#include <cstdio>

#include "omech/omech.hpp"

int main()
{
    const auto p = omech::paper_device();
    std::printf("G_c = %.4f Hz   G_b = %.4f Hz\n", omech::critical_coupling(p), omech::boundary_coupling(p));
    std::printf("%10s %12s %10s %14s  %s\n", "G [Hz]", "|t_z| [dB]", "phase", "tau_z [s]", "regime");
    for (double G : {11.87, 17.24, 17.66, 17.84, 23.93, 155.1, 176.8})
    {
        const omech::Coupling c{G};
        const auto r = omech::transmission(p, c, 0.0);
        const auto cls = omech::regime_classify(p, c);
        std::printf("%10.2f %12.3f %10.4f %14.5g  %s\n", G, r.amplitude_db, r.phase,
                    omech::group_delay_at_resonance(p, c), omech::to_string(cls.regime));
    }

    const omech::Coupling c{155.1};
    const auto cfg = omech::narrowband_pulse_config(p, c);
    const auto m = omech::extract_delay(p, c, cfg, {});
    std::printf("pulse: sigma_t = %.4g s, measured delay = %.5g s, analytic tau_z = %.5g s\n", cfg.sigma_t, m.delay,
                omech::group_delay_at_resonance(p, c));
    return 0;
}
