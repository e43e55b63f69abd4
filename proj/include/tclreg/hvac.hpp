#pragma once

// Two-temperature equivalent-thermal-parameter (ETP) house with a hysteretic
// cooling thermostat.
//
//   C_a dθ/dt   = -S·Q_ac + r·Q_g - U_a(θ - θ_amb) - H_m(θ - θ_m)
//   C_m dθ_m/dt = (1 - r)·Q_g - H_m(θ_m - θ)
//
// Inputs are held constant over a step, so each step is the exact solution of
// a linear system: x(t+dt) = x_eq + Φ(dt)(x(t) - x_eq).

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

namespace tclreg::hvac {

struct HouseParams {
    double c_air_kj_per_c = 1500.0;    ///< thermal mass of indoor air
    double c_mass_kj_per_c = 10000.0;  ///< thermal mass of building contents
    double ua_kw_per_c = 0.3;          ///< envelope conductance
    double hm_kw_per_c = 3.0;          ///< air-mass coupling
    double r_gain = 0.5;               ///< share of internal gains landing in the air node
    double t_low_c = 21.5;
    double t_high_c = 22.5;
    double q_ac_kw = 9.8;  ///< thermal cooling capacity
    double p_on_kw = 3.27;  ///< electrical draw while running
    double power_factor = 0.97;

    bool operator==(const HouseParams&) const = default;
};

/// Throws ModelError when an invariant fails.
void validate(const HouseParams& params);

struct HouseState {
    double t_air_c = 22.0;
    double t_mass_c = 22.0;
    bool on = false;
    double last_switch_s = -std::numeric_limits<double>::infinity();
    double natural_duty_estimate = std::numeric_limits<double>::quiet_NaN();

    bool operator==(const HouseState&) const = default;
};

struct EtpInputs {
    double ambient_c = 30.0;
    double gain_kw = 1.0;
};

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

/// State transition matrix and equilibrium solver for one house.
class EtpModel {
public:
    explicit EtpModel(const HouseParams& params);

    const HouseParams& params() const noexcept { return params_; }
    const Mat2& system_matrix() const noexcept { return a_; }

    /// exp(A·dt), closed form for the 2x2 case. Cached for the last few dt values.
    const Mat2& transition(double dt) const;

    /// Steady state (θ, θ_m) reached if `on` and the inputs were held forever.
    Vec2 equilibrium(bool on, const EtpInputs& in) const;

    /// Exact (θ, θ_m) after `dt` seconds with the compressor state held.
    Vec2 propagate(const Vec2& x, bool on, const EtpInputs& in, double dt) const;

    /// One simulation step: exact propagation, then the thermostat rule.
    /// `now_s` is the time at the start of the step.
    HouseState step(const HouseState& state, const EtpInputs& in, double dt, double now_s) const;

private:
    HouseParams params_;
    Mat2 a_{};
    mutable std::array<double, 4> cached_dt_{};
    mutable std::array<Mat2, 4> cached_phi_{};
    mutable std::size_t cache_next_ = 0;
};

Mat2 matrix_exponential(const Mat2& a, double t);

/// Free-function form of EtpModel::step.
HouseState step_house(const HouseParams& params, const HouseState& state, double ambient_c,
                      double gain_kw, double dt, double now_s = 0.0);

struct DutyCycle {
    double duty = 0.0;      ///< fraction of the limit cycle spent on
    double period_s = 0.0;  ///< limit-cycle period; +inf when the AC never runs
    double on_s = 0.0;
    double off_s = 0.0;
};

/// Limit cycle of the uncontrolled thermostat under steady inputs. Crossing
/// times are located on the exact trajectory. Throws CapacityError when the
/// unit cannot reach its lower limit; returns duty 0 when it never needs to run.
DutyCycle natural_duty_cycle(const HouseParams& params, double ambient_c, double gain_kw);

/// Electrical demand (kW, kvar) of the compressor when on.
struct AcDemand {
    double p_kw = 0.0;
    double q_kvar = 0.0;
};
AcDemand ac_demand(const HouseParams& params, bool on);

}  // namespace tclreg::hvac
