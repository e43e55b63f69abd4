#include "tclreg/hvac.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "tclreg/error.hpp"

namespace tclreg::hvac {
namespace {

bool finite(double v) { return std::isfinite(v); }

Vec2 mul(const Mat2& m, const Vec2& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]};
}

}  // namespace

void validate(const HouseParams& p) {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw ModelError(std::string("house parameter ") + name + " must be positive and finite");
    };
    positive(p.c_air_kj_per_c, "c_air_kj_per_c");
    positive(p.c_mass_kj_per_c, "c_mass_kj_per_c");
    positive(p.ua_kw_per_c, "ua_kw_per_c");
    positive(p.hm_kw_per_c, "hm_kw_per_c");
    positive(p.q_ac_kw, "q_ac_kw");
    if (!(p.p_on_kw >= 0.0)) throw ModelError("house parameter p_on_kw must be non-negative");
    if (!(p.r_gain >= 0.0 && p.r_gain <= 1.0)) throw ModelError("r_gain must lie in [0, 1]");
    if (!(p.t_low_c < p.t_high_c)) throw ModelError("deadband requires t_low_c < t_high_c");
    if (!(p.power_factor > 0.0 && p.power_factor <= 1.0))
        throw ModelError("AC power factor must lie in (0, 1]");
}

Mat2 matrix_exponential(const Mat2& a, double t) {
    // exp(At) = e^{mt} [cosh(st) I + sinh(st)/s (A - mI)], m = tr/2, s^2 = m^2 - det.
    const double m = 0.5 * (a[0][0] + a[1][1]);
    const double det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    const double s2 = m * m - det;
    const double em = std::exp(m * t);
    double c = 0.0;
    double k = 0.0;  // sinh(st)/s, or sin(|s|t)/|s| for complex eigenvalues
    if (s2 > 0.0) {
        const double s = std::sqrt(s2);
        c = std::cosh(s * t);
        k = (s * t < 1e-8) ? t : std::sinh(s * t) / s;
    } else if (s2 < 0.0) {
        const double w = std::sqrt(-s2);
        c = std::cos(w * t);
        k = (w * t < 1e-8) ? t : std::sin(w * t) / w;
    } else {
        c = 1.0;
        k = t;
    }
    Mat2 out{};
    out[0][0] = em * (c + k * (a[0][0] - m));
    out[0][1] = em * (k * a[0][1]);
    out[1][0] = em * (k * a[1][0]);
    out[1][1] = em * (c + k * (a[1][1] - m));
    return out;
}

EtpModel::EtpModel(const HouseParams& params) : params_(params) {
    validate(params_);
    const double ca = params_.c_air_kj_per_c;
    const double cm = params_.c_mass_kj_per_c;
    a_[0][0] = -(params_.ua_kw_per_c + params_.hm_kw_per_c) / ca;
    a_[0][1] = params_.hm_kw_per_c / ca;
    a_[1][0] = params_.hm_kw_per_c / cm;
    a_[1][1] = -params_.hm_kw_per_c / cm;
    cached_dt_.fill(-1.0);
}

const Mat2& EtpModel::transition(double dt) const {
    for (std::size_t i = 0; i < cached_dt_.size(); ++i)
        if (cached_dt_[i] == dt) return cached_phi_[i];
    const std::size_t slot = cache_next_;
    cache_next_ = (cache_next_ + 1) % cached_dt_.size();
    cached_dt_[slot] = dt;
    cached_phi_[slot] = matrix_exponential(a_, dt);
    return cached_phi_[slot];
}

Vec2 EtpModel::equilibrium(bool on, const EtpInputs& in) const {
    // Mass node: (1-r)Q_g = H_m(θ_m - θ). Sum of both nodes: θ from the envelope balance.
    const double q_cool = on ? params_.q_ac_kw : 0.0;
    const double t_air = in.ambient_c + (in.gain_kw - q_cool) / params_.ua_kw_per_c;
    const double t_mass = t_air + (1.0 - params_.r_gain) * in.gain_kw / params_.hm_kw_per_c;
    return {t_air, t_mass};
}

Vec2 EtpModel::propagate(const Vec2& x, bool on, const EtpInputs& in, double dt) const {
    const Vec2 eq = equilibrium(on, in);
    const Vec2 dx = mul(transition(dt), {x[0] - eq[0], x[1] - eq[1]});
    return {eq[0] + dx[0], eq[1] + dx[1]};
}

HouseState EtpModel::step(const HouseState& state, const EtpInputs& in, double dt,
                          double now_s) const {
    if (!(dt > 0.0) || !finite(dt)) throw NumericError("house step requires dt > 0");
    if (!finite(state.t_air_c) || !finite(state.t_mass_c) || !finite(in.ambient_c) ||
        !finite(in.gain_kw) || !finite(now_s))
        throw NumericError("non-finite input to house step");

    HouseState next = state;
    const Vec2 x = propagate({state.t_air_c, state.t_mass_c}, state.on, in, dt);
    next.t_air_c = x[0];
    next.t_mass_c = x[1];
    if (next.t_air_c < params_.t_low_c && next.on) {
        next.on = false;
        next.last_switch_s = now_s + dt;
    } else if (next.t_air_c > params_.t_high_c && !next.on) {
        next.on = true;
        next.last_switch_s = now_s + dt;
    }
    return next;
}

HouseState step_house(const HouseParams& params, const HouseState& state, double ambient_c,
                      double gain_kw, double dt, double now_s) {
    return EtpModel(params).step(state, {ambient_c, gain_kw}, dt, now_s);
}

namespace {

// Time until the air temperature first crosses `limit` going in the
// direction implied by `on`, from state x. Coarse march then bisection on the
// exact trajectory.
double time_to_cross(const EtpModel& model, const Vec2& x, bool on, const EtpInputs& in,
                     double limit) {
    auto crossed = [&](double t_air) { return on ? t_air <= limit : t_air >= limit; };
    constexpr double kCoarse = 5.0;
    constexpr double kMaxTime = 7.0 * 86400.0;
    double t = 0.0;
    Vec2 cur = x;
    while (!crossed(cur[0])) {
        const Vec2 nxt = model.propagate(cur, on, in, kCoarse);
        if (crossed(nxt[0])) {
            double lo = 0.0;
            double hi = kCoarse;
            for (int i = 0; i < 60 && hi - lo > 1e-9; ++i) {
                const double mid = 0.5 * (lo + hi);
                if (crossed(model.propagate(cur, on, in, mid)[0]))
                    hi = mid;
                else
                    lo = mid;
            }
            return t + hi;
        }
        cur = nxt;
        t += kCoarse;
        if (t > kMaxTime) return std::numeric_limits<double>::infinity();
    }
    return t;
}

}  // namespace

DutyCycle natural_duty_cycle(const HouseParams& params, double ambient_c, double gain_kw) {
    if (!finite(ambient_c) || !finite(gain_kw)) throw NumericError("non-finite duty-cycle inputs");
    const EtpModel model(params);
    const EtpInputs in{ambient_c, gain_kw};

    const Vec2 eq_on = model.equilibrium(true, in);
    const Vec2 eq_off = model.equilibrium(false, in);
    if (eq_on[0] >= params.t_low_c)
        throw CapacityError("AC cannot hold its deadband: running equilibrium " +
                            std::to_string(eq_on[0]) + " C is above the lower limit " +
                            std::to_string(params.t_low_c) + " C");
    if (eq_off[0] <= params.t_high_c)
        return {0.0, std::numeric_limits<double>::infinity(), 0.0,
                std::numeric_limits<double>::infinity()};

    // Start at the upper limit with the compressor just switched on, mass at
    // the air temperature, and follow cycles until the period settles.
    Vec2 x{params.t_high_c, params.t_high_c};
    double prev_on = -1.0;
    double prev_off = -1.0;
    DutyCycle out;
    for (int cycle = 0; cycle < 2000; ++cycle) {
        const double t_on = time_to_cross(model, x, true, in, params.t_low_c);
        x = model.propagate(x, true, in, t_on);
        x[0] = params.t_low_c;
        const double t_off = time_to_cross(model, x, false, in, params.t_high_c);
        x = model.propagate(x, false, in, t_off);
        x[0] = params.t_high_c;
        out = {t_on / (t_on + t_off), t_on + t_off, t_on, t_off};
        if (cycle > 0 && std::abs(t_on - prev_on) < 1e-3 && std::abs(t_off - prev_off) < 1e-3)
            return out;
        prev_on = t_on;
        prev_off = t_off;
    }
    return out;
}

AcDemand ac_demand(const HouseParams& params, bool on) {
    if (!on) return {};
    const double pf = params.power_factor;
    return {params.p_on_kw, params.p_on_kw * std::tan(std::acos(pf))};
}

}  // namespace tclreg::hvac
