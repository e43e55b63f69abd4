// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// when any blocking criterion fails.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "tclreg/dispatch.hpp"
#include "tclreg/engine.hpp"
#include "tclreg/hvac.hpp"
#include "tclreg/powerflow.hpp"
#include "tclreg/results.hpp"
#include "tclreg/transformer.hpp"

namespace fs = std::filesystem;
using namespace tclreg;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, bool blocking, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= budget_s;
    const bool pass = o.pass && in_time;
    if (!pass && blocking) ++failures;
    std::printf("[%s] %2d %s: %s (%.2f s of %.0f s)%s\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs,
                budget_s, !pass && !blocking ? " [non-blocking]" : "");
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), f, a, b, c, d);
    return buf;
}

fs::path data(const std::string& rel) { return fs::path(TCLREG_DATA_DIR) / rel; }

fs::path scratch(const std::string& name) {
    auto p = fs::path(TCLREG_SCRATCH_DIR) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        out[fs::relative(e.path(), root).string()] = os.str();
    }
    return out;
}

hvac::HouseParams house() {
    hvac::HouseParams p;
    p.c_air_kj_per_c = 1500.0;
    p.c_mass_kj_per_c = 10000.0;
    p.ua_kw_per_c = 0.3;
    p.hm_kw_per_c = 3.0;
    p.r_gain = 0.5;
    p.t_low_c = 21.5;
    p.t_high_c = 22.5;
    p.q_ac_kw = 9.8;
    p.p_on_kw = 3.27;
    return p;
}

}  // namespace

int main() {
    criterion(1, "aging rate exactness", 1.0, true, [] {
        const double err = std::abs(transformer::aging_rate(110.0) - 1.0);
        bool mono = true;
        double prev = transformer::aging_rate(0.0);
        for (int k = 1; k <= 2000; ++k) {
            const double r = transformer::aging_rate(0.1 * k);
            mono = mono && r > prev;
            prev = r;
        }
        return Outcome{err <= 1e-12 && mono, fmt("|F(110)-1| = %.3g, monotone on [0, 200] C: ", err) + (mono ? "yes" : "no")};
    });

    criterion(2, "transformer winding step response", 1.0, true, [] {
        const auto p = transformer::params_for_rating(25.0);
        const double wu = transformer::ultimate_rises(p, 1.0).winding_c;
        transformer::TransformerThermalState s;
        double worst = 0.0;
        for (int minute = 1; minute <= 60; ++minute) {
            s = transformer::step_thermal(p, s, 1.0, 30.0, 60.0);
            const double ref = wu * (1.0 - std::exp(-minute / p.tau_winding_min));
            worst = std::max(worst, std::abs(s.winding_rise_c - ref));
        }
        return Outcome{worst <= 1e-9, fmt("max error %.3g C over 60 checkpoints", worst)};
    });

    criterion(3, "DistFlow oracle", 5.0, true, [] {
        std::mt19937_64 gen(3);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double v_err = 0.0, s_err = 0.0;
        for (int n = 0; n < 100; ++n) {
            const powerflow::DistFlowLine l{0.97 + 0.08 * u(gen), 0.002 + 0.02 * u(gen), 0.002 + 0.04 * u(gen),
                                            0.8 * u(gen), 0.4 * u(gen)};
            const double vdf = powerflow::distflow_voltage(l);
            // Same operating point as a two-bus single-phase network.
            netmodel::FeederModel f;
            f.name = "pair";
            f.nominal_voltage_v = 2400.0;
            f.base_kva = 1000.0;
            f.slack_bus_id = "a";
            f.slack_voltage_pu = l.v_send;
            f.buses = {{"a", {netmodel::Phase::A}, false}, {"b", {netmodel::Phase::A}, false}};
            const double zb = 2400.0 * 2400.0 / 1e6;
            netmodel::LineSegment seg;
            seg.id = "ab";
            seg.from_bus = "a";
            seg.to_bus = "b";
            seg.phases = {netmodel::Phase::A};
            seg.z_ohm[0] = netmodel::Complex(l.r, l.x) * zb;
            seg.ampacity_a = 1000.0;
            f.lines = {seg};
            auto loads = powerflow::empty_loads(f);
            loads[1][0].constant_power = {l.p * 1000.0, l.q * 1000.0};
            const auto sol = powerflow::solve(f, loads, {1e-13, 200, true});
            v_err = std::max(v_err, std::abs(std::abs(sol.voltage_pu[1][0]) - vdf));

            const double h = 1e-6, tq = std::tan(std::acos(0.97));
            auto vp = [&](double dp) {
                return powerflow::distflow_voltage({l.v_send, l.r, l.x, l.p + dp, l.q + dp * tq});
            };
            const double fd = (vp(h) - vp(-h)) / (2.0 * h);
            const double an = powerflow::voltage_sensitivity(l, 0.97).total();
            s_err = std::max(s_err, std::abs(an - fd) / std::abs(fd));
        }
        return Outcome{v_err <= 1e-6 && s_err <= 1e-4,
                       fmt("max |V| error %.3g p.u., max sensitivity relative error %.3g", v_err, s_err)};
    });

    criterion(4, "bias threshold consistency", 5.0, true, [] {
        std::mt19937_64 gen(4);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        int agree = 0, total = 0;
        for (int k = 0; k < 1000; ++k) {
            dispatch::DutyCycleStats s;
            s.duty = 0.02 + 0.96 * u(gen);
            s.mean_duty = 0.05 + 0.9 * u(gen);
            s.population = 100.0 + 5000.0 * u(gen);
            s.period_steps = 200.0 + 2000.0 * u(gen);
            s.switched_per_step = (0.001 + 0.02 * u(gen)) * s.population * std::min(s.mean_duty, 1.0 - s.mean_duty);
            const auto p = dispatch::switching_probabilities(s);
            ++total;
            if (dispatch::bias_threshold(s) == (p.on > p.off)) ++agree;
        }
        bool half = true;
        for (int k = 1; k < 100; ++k) {
            if (k == 50) continue;
            dispatch::DutyCycleStats s;
            s.mean_duty = 0.5;
            s.switched_per_step = 2.0;
            s.duty = 0.01 * k;
            half = half && dispatch::bias_threshold(s) == (s.duty < 0.5);
        }
        return Outcome{agree == total && half,
                       fmt("%.0f/%.0f grid points agree; D = 0.5 reduces to d < 0.5: ", agree, total) +
                           (half ? "yes" : "no")};
    });

    criterion(5, "dispatch binomial band", 10.0, true, [] {
        const std::size_t n = 10000;
        const double u = 0.3;
        std::vector<dispatch::Candidate> c(n);
        for (std::size_t i = 0; i < n; ++i) c[i] = {i, false, true, 0.0};
        const double sigma = std::sqrt(u * (1.0 - u) / static_cast<double>(n));
        double worst = 0.0;
        for (std::uint64_t rep = 0; rep < 20; ++rep) {
            const double frac =
                static_cast<double>(dispatch::apply_dispatch(c, {u, 0.0}, 20240 + rep, 1).size()) / static_cast<double>(n);
            worst = std::max(worst, std::abs(frac - u) / sigma);
        }
        return Outcome{worst <= 3.0, fmt("largest deviation %.2f sigma over 20 repetitions", worst)};
    });

    criterion(6, "ETP trajectory oracle", 5.0, true, [] {
        const auto p = house();
        const hvac::EtpModel m(p);
        std::mt19937_64 gen(6);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double worst = 0.0;
        for (int traj = 0; traj < 20; ++traj) {
            hvac::Vec2 x{21.0 + 2.0 * u(gen), 21.0 + 2.0 * u(gen)};
            Eigen::Vector2d ref(x[0], x[1]);
            // Twelve 5-minute segments with fresh inputs, stepped at 2 s.
            for (int seg = 0; seg < 12; ++seg) {
                const bool on = u(gen) < 0.5;
                const hvac::EtpInputs in{25.0 + 12.0 * u(gen), 0.5 + u(gen)};
                for (int k = 0; k < 150; ++k) x = m.propagate(x, on, in, 2.0);
                Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
                a(0, 0) = -(p.ua_kw_per_c + p.hm_kw_per_c) / p.c_air_kj_per_c;
                a(0, 1) = p.hm_kw_per_c / p.c_air_kj_per_c;
                a(1, 0) = p.hm_kw_per_c / p.c_mass_kj_per_c;
                a(1, 1) = -p.hm_kw_per_c / p.c_mass_kj_per_c;
                a(0, 2) = (p.ua_kw_per_c * in.ambient_c + p.r_gain * in.gain_kw - (on ? p.q_ac_kw : 0.0)) /
                          p.c_air_kj_per_c;
                a(1, 2) = (1.0 - p.r_gain) * in.gain_kw / p.c_mass_kj_per_c;
                const Eigen::Vector3d y = (a * 300.0).exp() * Eigen::Vector3d(ref(0), ref(1), 1.0);
                ref = y.head<2>();
                worst = std::max({worst, std::abs(x[0] - ref(0)), std::abs(x[1] - ref(1))});
            }
        }
        return Outcome{worst <= 1e-6, fmt("max deviation %.3g C over 20 one-hour trajectories", worst)};
    });

    const auto scenario = engine::load_scenario(data("scenario-r1.json"));
    std::optional<engine::TrialResult> trial;
    auto get_trial = [&]() -> const engine::TrialResult& {
        if (!trial) trial = engine::run_case(scenario);
        return *trial;
    };

    criterion(7, "regulation raises voltage variation", 300.0, true, [&] {
        const auto& t = get_trial();
        const auto b = results::summarize_voltage_variation(t.base);
        const auto r = results::summarize_voltage_variation(*t.regulation);
        return Outcome{r.mean_std_dev > b.mean_std_dev && r.total_range > b.total_range,
                       fmt("mean std dev %.5f -> %.5f p.u., range %.4f -> %.4f p.u.", b.mean_std_dev, r.mean_std_dev,
                           b.total_range, r.total_range)};
    });

    std::optional<engine::RandomizationResult> random;
    criterion(8, "aging change vs duty cycle correlation", 1800.0, true, [&] {
        auto sc = scenario;
        sc.config.threads = 1;
        random = engine::run_randomization_study(sc, 6);
        const double rho = random->summary.duty_correlation;
        return Outcome{rho < 0.0, fmt("Pearson r = %.4f over 6 trials", rho)};
    });

    criterion(9, "randomization distribution differs from binomial", 1800.0, false, [&] {
        if (!random) throw std::runtime_error("randomization study did not run");
        const auto& s = random->summary;
        return Outcome{s.chi_square > s.chi_square_critical_95,
                       fmt("chi-square %.3f vs critical %.3f (dof %.0f), p_hat %.4f", s.chi_square,
                           s.chi_square_critical_95, s.chi_square_dof, s.p_hat)};
    });

    criterion(10, "EV study direction", 900.0, true, [&] {
        const auto ev = engine::run_ev_study(scenario);
        const auto& plus = ev.table[0];
        const auto& none = ev.table[1];
        const bool over = plus.any_reg_pct >= plus.any_base_pct;
        const bool sens = std::abs(plus.mean_sensitivity) > std::abs(none.mean_sensitivity);
        return Outcome{over && sens, fmt("EV+ any-duration %.1f%% -> %.1f%%; |dV/dP| EV+ %.6f vs No-EV %.6f",
                                         plus.any_base_pct, plus.any_reg_pct, std::abs(plus.mean_sensitivity),
                                         std::abs(none.mean_sensitivity))};
    });

    criterion(11, "determinism across thread counts", 600.0, true, [&] {
        results::RunManifest m{"study-random", scenario.config.seed, scenario.input_hash};
        auto one = scenario, many = scenario;
        one.config.threads = 1;
        many.config.threads = 4;
        const auto a = scratch("det-1"), b = scratch("det-4");
        results::emit_randomization_study(random ? *random : engine::run_randomization_study(one, 6), m, a);
        results::emit_randomization_study(engine::run_randomization_study(many, 6), m, b);
        const auto ta = tree(a), tb = tree(b);
        std::size_t differing = 0;
        for (const auto& [k, v] : ta) {
            auto it = tb.find(k);
            if (it == tb.end() || it->second != v) ++differing;
        }
        differing += tb.size() > ta.size() ? tb.size() - ta.size() : 0;
        return Outcome{differing == 0 && ta.size() == tb.size(),
                       fmt("%.0f files compared, %.0f differ (1 vs 4 threads)", static_cast<double>(ta.size()),
                           static_cast<double>(differing))};
    });

    criterion(12, "energy neutrality", 600.0, true, [&] {
        const auto& t = get_trial();
        const double b = t.base.ac_energy_kwh, r = t.regulation->ac_energy_kwh;
        const double rel = std::abs(r - b) / b;
        return Outcome{rel <= 0.01, fmt("base %.3f kWh, regulation %.3f kWh, difference %.3f%%", b, r, 100.0 * rel)};
    });

    std::printf("%s: %d blocking criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
    return failures == 0 ? 0 : 1;
}
