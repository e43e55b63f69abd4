#pragma once

// Broadcast probabilistic dispatch of air conditioners and the duty-cycle
// analytics that predict which units drift toward cool or warm cycling.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tclreg/hvac.hpp"

namespace tclreg::dispatch {

constexpr double kLockoutS = 120.0;
constexpr double kPredictionHorizonS = 120.0;

struct ControllerState {
    double gain = 1.0;          ///< K_P
    double mean_on_kw = 1.0;    ///< P̄_ON, average draw of a running unit
    double desired_kw = 0.0;    ///< P_des
    double measured_kw = 0.0;   ///< P_meas
    std::size_t available = 0;  ///< N_AC
};

/// Signed switching probability: positive switches units on, negative off.
struct DispatchCommand {
    double u = 0.0;
    double time_s = 0.0;
};

/// u = K_P (P_des - P_meas) / (P̄_ON · N_AC), clamped to [-1, 1]; zero when
/// nothing is available.
DispatchCommand control_signal(const ControllerState& ctrl, double time_s = 0.0);

struct AvailabilityFlags {
    bool in_deadband = false;
    bool lockout_clear = false;
    bool predicted_safe = false;

    bool available() const noexcept { return in_deadband && lockout_clear && predicted_safe; }
};

/// Checks the three availability conditions. The prediction flips the
/// compressor state and follows the exact trajectory for two minutes.
AvailabilityFlags availability(const hvac::EtpModel& model, const hvac::HouseState& state,
                               double now_s, const hvac::EtpInputs& inputs);

AvailabilityFlags availability(const hvac::HouseParams& params, const hvac::HouseState& state,
                               double now_s, const hvac::EtpInputs& inputs);

/// One AC as seen by the dispatcher in a given step.
struct Candidate {
    std::uint64_t key = 0;  ///< stable id used to key the random draw
    bool on = false;
    bool available = false;
    double edge_distance_c = 0.0;  ///< distance to the limit it would naturally switch at
};

/// Distance from the indoor temperature to the deadband limit at which the
/// thermostat would next switch the unit (upper limit when off, lower when on).
double edge_distance(const hvac::HouseParams& params, const hvac::HouseState& state);

/// Counts available units per direction.
struct AvailableCounts {
    std::size_t off = 0;  ///< can be switched on
    std::size_t on = 0;   ///< can be switched off
};
AvailableCounts count_available(std::span<const Candidate> candidates);

/// Per-unit decision: available units in the direction of u switch iff their
/// uniform draw p_i ~ U(0,1), keyed by (seed, key, step), is below |u|.
/// Returns indices into `candidates` that switch.
std::vector<std::size_t> apply_dispatch(std::span<const Candidate> candidates,
                                        const DispatchCommand& cmd, std::uint64_t seed,
                                        std::uint64_t step);

/// Priority-stack alternative: the round(|u|·N) available units closest to
/// their natural switching point switch, ties broken by key.
std::vector<std::size_t> apply_priority_dispatch(std::span<const Candidate> candidates,
                                                 const DispatchCommand& cmd);

struct DutyCycleStats {
    double duty = 0.5;             ///< d, this unit's natural duty cycle
    double period_steps = 900.0;   ///< T_P
    double mean_duty = 0.5;        ///< D, population mean
    double population = 1000.0;    ///< N
    double switched_per_step = 0;  ///< N_S

    double on_steps() const noexcept { return duty * period_steps; }
    double off_steps() const noexcept { return (1.0 - duty) * period_steps; }
};

struct SwitchingProbabilities {
    double off = 0.0;  ///< P_S,OFF: dispatched off at least once during the on part
    double on = 0.0;   ///< P_S,ON: dispatched on at least once during the off part
};

/// Constant-command approximation of the per-cycle dispatch probabilities.
/// Throws DomainError when N_S is too large for either per-unit command.
SwitchingProbabilities switching_probabilities(const DutyCycleStats& stats);

/// True iff the unit is more likely to be dispatched on than off, i.e.
/// d/(1-d) < log(1 - N_S/((1-D)N)) / log(1 - N_S/(DN)).
bool bias_threshold(const DutyCycleStats& stats);

/// 1 - Π(1 - u_k): probability of at least one dispatch over a command trace.
double at_least_once(std::span<const double> commands);

}  // namespace tclreg::dispatch
