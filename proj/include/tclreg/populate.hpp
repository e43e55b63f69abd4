#pragma once

// Synthetic house populator: attaches randomized houses under distribution
// transformers until the simulated feeder peak sits in a band below a target.

#include <cstdint>
#include <filesystem>
#include <utility>

#include "tclreg/netmodel.hpp"
#include "tclreg/series.hpp"

namespace tclreg::netmodel {

/// Closed interval for a uniform draw.
struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct PopulatorConfig {
    std::uint64_t seed = 1;
    // Thermal envelope, uniform over each range (defaults are nominal ±20%).
    Range c_air_kj_per_c{1200.0, 1800.0};
    Range c_mass_kj_per_c{8000.0, 12000.0};
    Range ua_kw_per_c{0.24, 0.36};
    Range hm_kw_per_c{2.4, 3.6};
    double r_gain = 0.5;
    Range setpoint_c{20.0, 24.0};
    Range deadband_c{0.5, 1.5};
    Range gain_kw{0.8, 1.2};
    /// Cooling capacity = sizing × (U_a (design - setpoint) + Q_g).
    double design_temp_c = 35.0;
    Range sizing_factor{1.6, 2.4};
    double cop = 3.0;
    double ac_power_factor = 0.97;
    Range zip_kva{0.8, 1.6};
    double zip_power_factor = 0.95;
    ZipFractions zip_real{0.3, 0.3, 0.4};
    ZipFractions zip_reactive{0.3, 0.3, 0.4};
    // Sizing loop.
    double band_lo = 0.9;
    double band_hi = 1.0;
    int max_iterations = 20;
    double scan_dt_s = 30.0;
};

PopulatorConfig load_populator_config(const std::filesystem::path& path);

struct PopulateResult {
    FeederModel feeder;
    double achieved_peak_kva = 0.0;
    std::size_t houses_added = 0;
    int iterations = 0;
};

/// Adds houses so the simulated peak-hour head load lands in
/// [band_lo, band_hi] × target_peak_kva. Houses are split evenly across phases
/// and, within a phase, in proportion to transformer planning loads. Existing
/// houses are kept. Deterministic for a fixed seed. Throws SizingError when
/// the band is not reached within `max_iterations`.
PopulateResult populate_houses(const FeederModel& feeder, double target_peak_kva,
                               const PopulatorConfig& config, const TimeSeries& weather);

/// Draws one house's parameters; pure in (config.seed, key).
House draw_house(const PopulatorConfig& config, std::uint64_t key, std::string id,
                 std::string bus, Phase phase);

}  // namespace tclreg::netmodel
