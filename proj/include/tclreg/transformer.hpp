#pragma once

// Top-oil / hot-spot thermal model of single-phase distribution transformers
// with insulation aging (IEEE C57.91 clauses 5-7).

#include <optional>

namespace tclreg::transformer {

struct XfmrThermalParams {
    double rating_kva = 25.0;
    double tau_winding_min = 5.0;
    double rated_winding_rise_c = 80.0;  ///< hot-spot rise over top oil at rated load
    double rated_oil_rise_c = 60.0;      ///< top-oil rise over ambient at rated load
    double full_load_loss_pu = 0.0218;
    double no_load_loss_pu = 0.0062;
    double oil_volume_gal = 12.4;
    double core_coil_weight_lb = 107.0;
    double tank_fittings_weight_lb = 128.4;
    /// When set, the oil time constant is this value and the load-dependent
    /// correction is skipped.
    std::optional<double> fixed_tau_oil_min;

    bool operator==(const XfmrThermalParams&) const = default;
};

constexpr double kMinTableRatingKva = 5.0;
constexpr double kMaxTableRatingKva = 175.0;
constexpr double kOilExponent = 0.8;      ///< n, ONAN cooling
constexpr double kWindingExponent = 0.8;  ///< m, ONAN cooling

/// Parameters for a rating in [5, 175] kVA, linearly interpolated between the
/// endpoints of the single-phase parameter table. Throws DomainError outside.
XfmrThermalParams params_for_rating(double rating_kva);

/// Throws ModelError if any parameter is non-positive or l_fl <= l_nl.
void validate(const XfmrThermalParams& params);

/// Oil/tank/core thermal capacity, Wh/°C.
double thermal_capacity_wh_per_c(const XfmrThermalParams& params);

/// Rated top-oil time constant, minutes.
double rated_oil_time_constant_min(const XfmrThermalParams& params);

/// Oil time constant for a change from `rise_initial` toward `rise_ultimate`,
/// minutes. Reduces to the rated constant when the exponent is 1.
double oil_time_constant_min(const XfmrThermalParams& params, double rise_initial_c,
                             double rise_ultimate_c);

struct UltimateRises {
    double winding_c = 0.0;
    double oil_c = 0.0;
};

UltimateRises ultimate_rises(const XfmrThermalParams& params, double load_pu);

struct TransformerThermalState {
    double oil_rise_c = 0.0;      ///< top oil over ambient
    double winding_rise_c = 0.0;  ///< hot spot over top oil
    double minutes_aged = 0.0;
    double aging_rate = 1.0;  ///< F_AA at the latest hot spot

    bool operator==(const TransformerThermalState&) const = default;
};

/// Hot-spot temperature: ambient + top-oil rise + winding rise.
double hotspot_c(const TransformerThermalState& state, double ambient_c);

/// Aging acceleration factor; exactly 1 at a 110 °C hot spot.
double aging_rate(double hotspot_c);

/// Exact exponential relaxation of both rises toward their ultimates over
/// `dt_s` with the load held. Also refreshes `aging_rate`.
TransformerThermalState step_thermal(const XfmrThermalParams& params,
                                     const TransformerThermalState& state, double load_pu,
                                     double ambient_c, double dt_s);

/// Adds F_AA·dt/60 equivalent minutes.
TransformerThermalState accumulate_aging(const TransformerThermalState& state,
                                         double aging_rate, double dt_s);

/// Steady state at a constant load (both rises at their ultimates).
TransformerThermalState steady_state(const XfmrThermalParams& params, double load_pu,
                                     double ambient_c);

}  // namespace tclreg::transformer
