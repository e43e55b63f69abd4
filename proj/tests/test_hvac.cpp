#include <doctest.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

#include "support.hpp"
#include "tclreg/error.hpp"
#include "tclreg/hvac.hpp"
#include "tclreg/netmodel.hpp"

using namespace tclreg;
using namespace tclreg::hvac;

namespace {

// Independent oracle: augmented 3x3 exponential of [A b; 0 0] applied to [x; 1].
Eigen::Vector2d eigen_step(const HouseParams& p, const Eigen::Vector2d& x, bool on, double amb, double gain,
                           double dt) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    const double ca = p.c_air_kj_per_c, cm = p.c_mass_kj_per_c;
    m(0, 0) = -(p.ua_kw_per_c + p.hm_kw_per_c) / ca;
    m(0, 1) = p.hm_kw_per_c / ca;
    m(1, 0) = p.hm_kw_per_c / cm;
    m(1, 1) = -p.hm_kw_per_c / cm;
    m(0, 2) = (p.ua_kw_per_c * amb + p.r_gain * gain - (on ? p.q_ac_kw : 0.0)) / ca;
    m(1, 2) = (1.0 - p.r_gain) * gain / cm;
    const Eigen::Matrix3d phi = (m * dt).exp();
    const Eigen::Vector3d out = phi * Eigen::Vector3d(x(0), x(1), 1.0);
    return out.head<2>();
}

}  // namespace

TEST_CASE("equilibrium is a fixed point") {
    auto p = testing::house_params();
    HouseState s;
    s.t_air_c = s.t_mass_c = 30.0;
    s.on = false;
    p.t_high_c = 40.0;
    p.t_low_c = 20.0;
    const auto next = step_house(p, s, 30.0, 0.0, 120.0);
    CHECK(next.t_air_c == doctest::Approx(30.0).epsilon(1e-14));
    CHECK(next.t_mass_c == doctest::Approx(30.0).epsilon(1e-14));
    CHECK_FALSE(next.on);
}

TEST_CASE("closed-form transition matches Eigen matrix exponential") {
    const auto p = testing::house_params();
    const EtpModel m(p);
    for (double dt : {0.5, 2.0, 30.0, 600.0, 3600.0}) {
        const auto phi = m.transition(dt);
        Eigen::Matrix2d a;
        a << m.system_matrix()[0][0], m.system_matrix()[0][1], m.system_matrix()[1][0], m.system_matrix()[1][1];
        const Eigen::Matrix2d ref = (a * dt).exp();
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) CHECK(phi[i][j] == doctest::Approx(ref(i, j)).epsilon(1e-12));
    }
}

TEST_CASE("many steps under held inputs match the exact solution") {
    const auto p = testing::house_params();
    const EtpModel m(p);
    Vec2 x{22.0, 21.0};
    Eigen::Vector2d ref(22.0, 21.0);
    for (int k = 0; k < 1800; ++k) x = m.propagate(x, true, {33.0, 1.1}, 2.0);
    ref = eigen_step(p, ref, true, 33.0, 1.1, 3600.0);
    CHECK(std::abs(x[0] - ref(0)) < 1e-6);
    CHECK(std::abs(x[1] - ref(1)) < 1e-6);
}

TEST_CASE("thermostat switches on above the upper limit") {
    const auto p = testing::house_params();
    HouseState s;
    s.t_air_c = p.t_high_c + 0.001;
    s.t_mass_c = p.t_high_c;
    s.on = false;
    const auto next = step_house(p, s, 35.0, 1.0, 2.0, 100.0);
    CHECK(next.on);
    CHECK(next.last_switch_s == doctest::Approx(102.0));
}

TEST_CASE("thermostat switches off below the lower limit") {
    const auto p = testing::house_params();
    HouseState s;
    s.t_air_c = p.t_low_c + 1e-4;
    s.t_mass_c = p.t_low_c;
    s.on = true;
    const auto next = step_house(p, s, 30.0, 1.0, 2.0);
    CHECK_FALSE(next.on);
}

TEST_CASE("non-finite inputs raise a numeric error") {
    const auto p = testing::house_params();
    HouseState s;
    CHECK_THROWS_AS(step_house(p, s, std::nan(""), 1.0, 2.0), NumericError);
    CHECK_THROWS_AS(step_house(p, s, 30.0, 1.0, 0.0), NumericError);
}

TEST_CASE("invalid parameters are rejected") {
    auto p = testing::house_params();
    p.t_low_c = 23.0;
    CHECK_THROWS_AS(EtpModel{p}, ModelError);
    p = testing::house_params();
    p.r_gain = 1.5;
    CHECK_THROWS_AS(EtpModel{p}, ModelError);
    p = testing::house_params();
    p.ua_kw_per_c = 0.0;
    CHECK_THROWS_AS(EtpModel{p}, ModelError);
}

TEST_CASE("symmetric heating and cooling rates give duty 0.5") {
    // Single-node limit (tiny mass coupling): heating rate ∝ (amb + g/ua - θ), cooling adds -q/ua.
    auto p = testing::house_params();
    p.hm_kw_per_c = 1e-6;
    p.c_mass_kj_per_c = 1e6;
    p.r_gain = 1.0;
    const double mid = 0.5 * (p.t_low_c + p.t_high_c);
    // Off equilibrium mid + q/2ua, on equilibrium mid - q/2ua.
    const double amb = mid + 0.5 * p.q_ac_kw / p.ua_kw_per_c;
    const auto d = natural_duty_cycle(p, amb, 0.0);
    CHECK(d.duty == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("duty cycle increases with ambient temperature") {
    const auto p = testing::house_params();
    double prev = 0.0;
    for (double amb : {26.0, 28.0, 30.0, 32.0, 34.0}) {
        const auto d = natural_duty_cycle(p, amb, 1.0);
        CHECK(d.duty > prev);
        prev = d.duty;
    }
}

TEST_CASE("undersized unit raises a capacity error; idle unit has zero duty") {
    auto p = testing::house_params();
    p.q_ac_kw = 1.0;
    CHECK_THROWS_AS(natural_duty_cycle(p, 40.0, 1.0), CapacityError);
    const auto d = natural_duty_cycle(testing::house_params(), 15.0, 0.5);
    CHECK(d.duty == 0.0);
    CHECK(std::isinf(d.period_s));
}

TEST_CASE("duty cycle matches a long uncontrolled run for every fixture house") {
    const auto f = netmodel::load_feeder(testing::data("synth-r1.json"));
    const double amb = 32.0;
    int checked = 0;
    for (std::size_t i = 0; i < f.houses.size(); i += 7) {
        const auto& h = f.houses[i];
        const auto d = natural_duty_cycle(h.hvac, amb, h.gain_kw);
        const EtpModel m(h.hvac);
        HouseState s;
        s.t_air_c = s.t_mass_c = h.hvac.t_high_c;
        s.on = true;
        // Settle for two hours, then measure four hours.
        double t = 0.0;
        for (; t < 7200.0; t += 1.0) s = m.step(s, {amb, h.gain_kw}, 1.0, t);
        double on_s = 0.0;
        for (double u = 0.0; u < 4.0 * 3600.0; u += 1.0, t += 1.0) {
            on_s += s.on ? 1.0 : 0.0;
            s = m.step(s, {amb, h.gain_kw}, 1.0, t);
        }
        CHECK(std::abs(on_s / (4.0 * 3600.0) - d.duty) < 0.02);
        ++checked;
    }
    CHECK(checked > 10);
}

TEST_CASE("cooling lowers indoor temperature while running") {
    const auto p = testing::house_params();
    const EtpModel m(p);
    Vec2 x{24.0, 24.0};
    for (int k = 0; k < 300; ++k) {
        const auto nx = m.propagate(x, true, {20.0, 0.0}, 2.0);
        CHECK(nx[0] < x[0]);
        x = nx;
    }
}

TEST_CASE("uncontrolled day stays inside the deadband plus one step of drift") {
    const auto p = testing::house_params();
    const EtpModel m(p);
    HouseState s;
    s.t_air_c = s.t_mass_c = 22.0;
    double lo = 1e9, hi = -1e9;
    for (double t = 0.0; t < 86400.0; t += 30.0) {
        const double amb = 27.0 + 6.0 * std::sin(2.0 * 3.14159265 * t / 86400.0);
        s = m.step(s, {amb, 1.0}, 30.0, t);
        lo = std::min(lo, s.t_air_c);
        hi = std::max(hi, s.t_air_c);
    }
    // One 30 s step moves the air node by at most roughly q·dt/C_a.
    const double drift = p.q_ac_kw * 30.0 / p.c_air_kj_per_c;
    CHECK(lo > p.t_low_c - drift);
    CHECK(hi < p.t_high_c + drift);
}

TEST_CASE("halving the step leaves the held-input trajectory unchanged") {
    const auto p = testing::house_params();
    const EtpModel m(p);
    Vec2 a{23.0, 22.0}, b = a;
    for (int k = 0; k < 1800; ++k) a = m.propagate(a, false, {31.0, 1.0}, 2.0);
    for (int k = 0; k < 3600; ++k) b = m.propagate(b, false, {31.0, 1.0}, 1.0);
    CHECK(std::abs(a[0] - b[0]) < 1e-4);
}

TEST_CASE("AC demand at power factor") {
    const auto p = testing::house_params();
    const auto d = ac_demand(p, true);
    CHECK(d.p_kw == doctest::Approx(3.27));
    CHECK(d.q_kvar == doctest::Approx(3.27 * std::tan(std::acos(0.97))));
    CHECK(ac_demand(p, false).p_kw == 0.0);
}
