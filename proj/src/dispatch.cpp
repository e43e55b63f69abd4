#include "tclreg/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tclreg/error.hpp"
#include "tclreg/rng.hpp"

namespace tclreg::dispatch {

DispatchCommand control_signal(const ControllerState& ctrl, double time_s) {
    DispatchCommand cmd;
    cmd.time_s = time_s;
    if (ctrl.available == 0 || !(ctrl.mean_on_kw > 0.0)) return cmd;
    const double u = ctrl.gain * (ctrl.desired_kw - ctrl.measured_kw) /
                     (ctrl.mean_on_kw * static_cast<double>(ctrl.available));
    cmd.u = std::isfinite(u) ? std::clamp(u, -1.0, 1.0) : 0.0;
    return cmd;
}

AvailabilityFlags availability(const hvac::EtpModel& model, const hvac::HouseState& state,
                               double now_s, const hvac::EtpInputs& inputs) {
    const auto& p = model.params();
    AvailabilityFlags f;
    f.in_deadband = state.t_air_c >= p.t_low_c && state.t_air_c <= p.t_high_c;
    f.lockout_clear = now_s - state.last_switch_s > kLockoutS;
    if (!f.in_deadband) return f;

    // Flip the compressor and follow the exact trajectory over the horizon.
    constexpr double kSample = 5.0;
    const bool flipped = !state.on;
    hvac::Vec2 x{state.t_air_c, state.t_mass_c};
    bool safe = true;
    for (double t = 0.0; t < kPredictionHorizonS - 1e-9; t += kSample) {
        x = model.propagate(x, flipped, inputs, kSample);
        if (flipped ? x[0] < p.t_low_c : x[0] > p.t_high_c) {
            safe = false;
            break;
        }
    }
    f.predicted_safe = safe;
    return f;
}

AvailabilityFlags availability(const hvac::HouseParams& params, const hvac::HouseState& state,
                               double now_s, const hvac::EtpInputs& inputs) {
    return availability(hvac::EtpModel(params), state, now_s, inputs);
}

double edge_distance(const hvac::HouseParams& params, const hvac::HouseState& state) {
    return state.on ? state.t_air_c - params.t_low_c : params.t_high_c - state.t_air_c;
}

AvailableCounts count_available(std::span<const Candidate> candidates) {
    AvailableCounts c;
    for (const auto& cand : candidates) {
        if (!cand.available) continue;
        if (cand.on)
            ++c.on;
        else
            ++c.off;
    }
    return c;
}

std::vector<std::size_t> apply_dispatch(std::span<const Candidate> candidates,
                                        const DispatchCommand& cmd, std::uint64_t seed,
                                        std::uint64_t step) {
    std::vector<std::size_t> out;
    if (cmd.u == 0.0) return out;
    const bool want_on = cmd.u > 0.0;
    const double mag = std::min(std::abs(cmd.u), 1.0);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        if (!c.available || c.on == want_on) continue;
        const double p = rng::uniform(seed, rng::Stream::dispatch, c.key, step);
        if (p < mag) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> apply_priority_dispatch(std::span<const Candidate> candidates,
                                                 const DispatchCommand& cmd) {
    std::vector<std::size_t> pool;
    if (cmd.u == 0.0) return pool;
    const bool want_on = cmd.u > 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (candidates[i].available && candidates[i].on != want_on) pool.push_back(i);
    const auto n = static_cast<std::size_t>(
        std::llround(std::min(std::abs(cmd.u), 1.0) * static_cast<double>(pool.size())));
    std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        const auto& ca = candidates[a];
        const auto& cb = candidates[b];
        if (ca.edge_distance_c != cb.edge_distance_c) return ca.edge_distance_c < cb.edge_distance_c;
        return ca.key < cb.key;
    });
    pool.resize(std::min(n, pool.size()));
    std::sort(pool.begin(), pool.end());
    return pool;
}

namespace {

struct Commands {
    double u_on;
    double u_off;
};

Commands constant_commands(const DutyCycleStats& s) {
    if (!(s.duty > 0.0 && s.duty < 1.0)) throw DomainError("duty cycle d must lie in (0, 1)");
    if (!(s.mean_duty > 0.0 && s.mean_duty < 1.0)) throw DomainError("mean duty cycle D must lie in (0, 1)");
    if (!(s.population > 0.0)) throw DomainError("population N must be positive");
    if (!(s.switched_per_step >= 0.0)) throw DomainError("N_S must be non-negative");
    if (!(s.period_steps > 0.0)) throw DomainError("period T_P must be positive");
    const Commands c{s.switched_per_step / ((1.0 - s.mean_duty) * s.population),
                     s.switched_per_step / (s.mean_duty * s.population)};
    if (!(1.0 - c.u_on > 0.0) || !(1.0 - c.u_off > 0.0))
        throw DomainError("N_S too large: per-unit switching command reaches 1");
    return c;
}

}  // namespace

SwitchingProbabilities switching_probabilities(const DutyCycleStats& s) {
    const Commands c = constant_commands(s);
    // 1 - (1 - u)^T via log1p/expm1 to keep small probabilities accurate.
    SwitchingProbabilities p;
    p.off = -std::expm1(s.on_steps() * std::log1p(-c.u_off));
    p.on = -std::expm1(s.off_steps() * std::log1p(-c.u_on));
    return p;
}

bool bias_threshold(const DutyCycleStats& s) {
    const Commands c = constant_commands(s);
    if (s.switched_per_step == 0.0) return false;
    const double lhs = s.duty / (1.0 - s.duty);
    const double rhs = std::log1p(-c.u_on) / std::log1p(-c.u_off);
    return lhs < rhs;
}

double at_least_once(std::span<const double> commands) {
    double log_none = 0.0;
    for (double u : commands) {
        const double a = std::clamp(std::abs(u), 0.0, 1.0);
        if (a >= 1.0) return 1.0;
        log_none += std::log1p(-a);
    }
    return -std::expm1(log_none);
}

}  // namespace tclreg::dispatch
