#include "tclreg/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tclreg/error.hpp"

namespace tclreg::transformer {
namespace {

// Endpoints of the single-phase parameter table at 5 and 175 kVA.
struct TableEnd {
    double full_load_loss;
    double no_load_loss;
    double oil_gal;
    double core_coil_lb;
    double tank_fittings_lb;
};
constexpr TableEnd kSmall{0.0232, 0.0065, 5.7, 56.6, 67.9};
constexpr TableEnd kLarge{0.0112, 0.0042, 62.7, 484.9, 581.9};

double lerp(double a, double b, double f) { return a + (b - a) * f; }

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

XfmrThermalParams params_for_rating(double rating_kva) {
    if (!(rating_kva >= kMinTableRatingKva && rating_kva <= kMaxTableRatingKva))
        throw DomainError("transformer rating " + std::to_string(rating_kva) +
                          " kVA is outside the 5-175 kVA parameter table");
    const double f = (rating_kva - kMinTableRatingKva) / (kMaxTableRatingKva - kMinTableRatingKva);
    XfmrThermalParams p;
    p.rating_kva = rating_kva;
    p.full_load_loss_pu = lerp(kSmall.full_load_loss, kLarge.full_load_loss, f);
    p.no_load_loss_pu = lerp(kSmall.no_load_loss, kLarge.no_load_loss, f);
    p.oil_volume_gal = lerp(kSmall.oil_gal, kLarge.oil_gal, f);
    p.core_coil_weight_lb = lerp(kSmall.core_coil_lb, kLarge.core_coil_lb, f);
    p.tank_fittings_weight_lb = lerp(kSmall.tank_fittings_lb, kLarge.tank_fittings_lb, f);
    return p;
}

void validate(const XfmrThermalParams& p) {
    const double values[] = {p.rating_kva,          p.tau_winding_min,    p.rated_winding_rise_c,
                             p.rated_oil_rise_c,    p.full_load_loss_pu,  p.no_load_loss_pu,
                             p.oil_volume_gal,      p.core_coil_weight_lb, p.tank_fittings_weight_lb};
    for (double v : values)
        if (!(v > 0.0) || !std::isfinite(v))
            throw ModelError("transformer thermal parameters must be positive and finite");
    if (!(p.full_load_loss_pu > p.no_load_loss_pu))
        throw ModelError("transformer full-load loss must exceed no-load loss");
    if (p.fixed_tau_oil_min && !(*p.fixed_tau_oil_min > 0.0))
        throw ModelError("fixed oil time constant must be positive");
}

double thermal_capacity_wh_per_c(const XfmrThermalParams& p) {
    // Self-cooled units: core/coil, tank/fittings, and oil contributions.
    return 0.06 * p.core_coil_weight_lb + 0.04 * p.tank_fittings_weight_lb + 1.33 * p.oil_volume_gal;
}

double rated_oil_time_constant_min(const XfmrThermalParams& p) {
    if (p.fixed_tau_oil_min) return *p.fixed_tau_oil_min;
    const double total_loss_w = (p.full_load_loss_pu + p.no_load_loss_pu) * p.rating_kva * 1000.0;
    const double tau_h = thermal_capacity_wh_per_c(p) * p.rated_oil_rise_c / total_loss_w;
    return 60.0 * tau_h;
}

double oil_time_constant_min(const XfmrThermalParams& p, double rise_initial_c,
                             double rise_ultimate_c) {
    const double tau_rated = rated_oil_time_constant_min(p);
    if (p.fixed_tau_oil_min) return tau_rated;
    const double n = kOilExponent;
    const double ri = std::max(rise_initial_c, 0.0) / p.rated_oil_rise_c;
    const double ru = std::max(rise_ultimate_c, 0.0) / p.rated_oil_rise_c;
    const double ri_n = std::pow(ri, 1.0 / n);
    const double ru_n = std::pow(ru, 1.0 / n);
    const double denom = ru_n - ri_n;
    const double scale = std::max(ri, ru);
    if (scale <= 0.0) return tau_rated;
    if (std::abs(ru - ri) <= 1e-9 * scale || std::abs(denom) <= 1e-12) {
        // Limit of (a - b)/(a^{1/n} - b^{1/n}) as b -> a.
        const double a = 0.5 * (ri + ru);
        return tau_rated * n * std::pow(a, 1.0 - 1.0 / n);
    }
    return tau_rated * (ru - ri) / denom;
}

UltimateRises ultimate_rises(const XfmrThermalParams& p, double load_pu) {
    require_finite(load_pu, "transformer load");
    const double l = std::max(load_pu, 0.0);
    const double ratio = p.full_load_loss_pu / p.no_load_loss_pu;
    UltimateRises u;
    u.winding_c = p.rated_winding_rise_c * std::pow(l, 2.0 * kWindingExponent);
    u.oil_c = p.rated_oil_rise_c * std::pow((l * l * ratio + 1.0) / (ratio + 1.0), kOilExponent);
    return u;
}

double hotspot_c(const TransformerThermalState& s, double ambient_c) {
    return ambient_c + s.oil_rise_c + s.winding_rise_c;
}

double aging_rate(double hotspot) {
    return std::exp(1500.0 / 383.0 - 1500.0 / (hotspot + 273.0));
}

TransformerThermalState step_thermal(const XfmrThermalParams& p,
                                     const TransformerThermalState& s, double load_pu,
                                     double ambient_c, double dt_s) {
    if (!(dt_s > 0.0)) throw NumericError("transformer step requires dt > 0");
    require_finite(ambient_c, "ambient temperature");
    require_finite(s.oil_rise_c, "oil rise");
    require_finite(s.winding_rise_c, "winding rise");
    const UltimateRises u = ultimate_rises(p, load_pu);
    const double tau_oil_s = 60.0 * oil_time_constant_min(p, s.oil_rise_c, u.oil_c);
    const double tau_w_s = 60.0 * p.tau_winding_min;

    TransformerThermalState next = s;
    next.oil_rise_c = u.oil_c + (s.oil_rise_c - u.oil_c) * std::exp(-dt_s / tau_oil_s);
    next.winding_rise_c = u.winding_c + (s.winding_rise_c - u.winding_c) * std::exp(-dt_s / tau_w_s);
    next.aging_rate = aging_rate(hotspot_c(next, ambient_c));
    return next;
}

TransformerThermalState accumulate_aging(const TransformerThermalState& s, double rate,
                                         double dt_s) {
    if (!(dt_s > 0.0)) throw NumericError("aging step requires dt > 0");
    TransformerThermalState next = s;
    next.minutes_aged += rate * dt_s / 60.0;
    next.aging_rate = rate;
    return next;
}

TransformerThermalState steady_state(const XfmrThermalParams& p, double load_pu,
                                     double ambient_c) {
    const UltimateRises u = ultimate_rises(p, load_pu);
    TransformerThermalState s;
    s.oil_rise_c = u.oil_c;
    s.winding_rise_c = u.winding_c;
    s.aging_rate = aging_rate(hotspot_c(s, ambient_c));
    return s;
}

}  // namespace tclreg::transformer
