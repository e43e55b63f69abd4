#include "tclreg/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <json.hpp>

#include "tclreg/error.hpp"
#include "tclreg/rng.hpp"
#include "tclreg/transformer.hpp"

namespace tclreg::engine {

using netmodel::FeederModel;
using netmodel::Phase;
using netmodel::idx;
using powerflow::BusLoads;
using powerflow::Complex;
using powerflow::NodeLoad;
using powerflow::PowerFlowSolution;

constexpr double kHour = 3600.0;
constexpr double kCapDwellS = 30.0;

std::string_view to_string(CaseKind kind) { return kind == CaseKind::base ? "base" : "regulation"; }

std::string_view to_string(EvMode mode) {
    switch (mode) {
        case EvMode::none: return "none";
        case EvMode::charge: return "charge";
        case EvMode::discharge: return "discharge";
    }
    return "none";
}

// ---------------------------------------------------------------------------
// Config

namespace {

using nlohmann::json;

double num(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw SchemaError(key, std::string("/") + key, "expected a number");
    const double v = j.at(key).get<double>();
    if (!std::isfinite(v)) throw SchemaError(key, std::string("/") + key, "expected a finite number");
    return v;
}

std::string str(const json& j, const char* key, const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) throw SchemaError(key, std::string("/") + key, "expected a string");
    return j.at(key).get<std::string>();
}

std::uint64_t seed_of(const json& j, const char* key, std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw SchemaError(key, std::string("/") + key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw SchemaError(where, where.empty() ? "/" : where, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw SchemaError(it.key(), where + "/" + it.key(), "unknown field");
    }
}

void validate_config(const ScenarioConfig& c) {
    auto bad = [](const char* field, const std::string& msg) { throw SchemaError(field, std::string("/") + field, msg); };
    if (!(c.dt_test_s > 0.0)) bad("dt_test_s", "must be positive");
    if (!(c.dt_warmup_s > 0.0)) bad("dt_warmup_s", "must be positive");
    if (!(c.warmup_coarse_h >= 0.0) || !(c.warmup_fine_h >= 0.0)) bad("warmup_coarse_h", "must be non-negative");
    const double fine = c.warmup_fine_h * kHour;
    const double k = fine / c.dt_test_s;
    if (std::abs(k - std::round(k)) > 1e-9) bad("dt_test_s", "must divide the fine warm-up window");
    const double coarse = c.warmup_coarse_h * kHour / c.dt_warmup_s;
    if (std::abs(coarse - std::round(coarse)) > 1e-9) bad("dt_warmup_s", "must divide the coarse warm-up window");
    const double per_hour = kHour / c.dt_test_s;
    if (std::abs(per_hour - std::round(per_hour)) > 1e-9) bad("dt_test_s", "must divide one hour");
    if (!(c.signal_scale > 0.0)) bad("signal_scale", "must be positive");
    if (!(c.ev_penetration >= 0.0 && c.ev_penetration <= 1.0)) bad("ev_penetration", "must lie in [0, 1]");
    if (!(c.ev_power_kw >= 0.0)) bad("ev_power_kw", "must be non-negative");
    if (!(c.kp > 0.0)) bad("kp", "must be positive");
    if (!(c.measurement_noise_kw >= 0.0)) bad("measurement_noise_kw", "must be non-negative");
    if (!(c.sensitivity_pf > 0.0 && c.sensitivity_pf <= 1.0)) bad("sensitivity_pf", "must lie in (0, 1]");
    if (c.n_trials < 2) bad("n_trials", "must be at least 2");
    monitor::validate(c.limits);
}

}  // namespace

ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open scenario config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError("", "/", std::string("invalid JSON: ") + e.what());
    }
    check_keys(j, {"feeder", "weather", "signal", "case", "test_hour_start_s", "dt_test_s", "dt_warmup_s",
                   "warmup_coarse_h", "warmup_fine_h", "signal_scale", "ev_mode", "ev_penetration",
                   "ev_power_kw", "seed", "kp", "dispatch_mode", "measurement_noise_kw", "threads",
                   "monitored_line", "monitored_phase", "sensitivity_pf", "scan_start_s", "scan_end_s",
                   "n_trials", "limits"},
               "");
    const auto dir = path.parent_path();
    auto resolve = [&](const std::string& p) -> std::filesystem::path {
        if (p.empty()) return {};
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : dir / fp;
    };
    ScenarioConfig c;
    if (!j.contains("feeder")) throw SchemaError("feeder", "/feeder", "missing required field");
    if (!j.contains("weather")) throw SchemaError("weather", "/weather", "missing required field");
    c.feeder_path = resolve(str(j, "feeder", ""));
    c.weather_path = resolve(str(j, "weather", ""));
    c.signal_path = resolve(str(j, "signal", ""));

    const auto kind = str(j, "case", "regulation");
    if (kind == "base") c.case_kind = CaseKind::base;
    else if (kind == "regulation") c.case_kind = CaseKind::regulation;
    else throw SchemaError("case", "/case", "expected \"base\" or \"regulation\"");

    if (j.contains("test_hour_start_s")) c.test_hour_start_s = num(j, "test_hour_start_s", 0.0);
    c.dt_test_s = num(j, "dt_test_s", c.dt_test_s);
    c.dt_warmup_s = num(j, "dt_warmup_s", c.dt_warmup_s);
    c.warmup_coarse_h = num(j, "warmup_coarse_h", c.warmup_coarse_h);
    c.warmup_fine_h = num(j, "warmup_fine_h", c.warmup_fine_h);
    c.signal_scale = num(j, "signal_scale", c.signal_scale);

    const auto ev = str(j, "ev_mode", "none");
    if (ev == "none") c.ev_mode = EvMode::none;
    else if (ev == "charge") c.ev_mode = EvMode::charge;
    else if (ev == "discharge") c.ev_mode = EvMode::discharge;
    else throw SchemaError("ev_mode", "/ev_mode", "expected none, charge, or discharge");
    c.ev_penetration = num(j, "ev_penetration", c.ev_penetration);
    c.ev_power_kw = num(j, "ev_power_kw", c.ev_power_kw);
    c.seed = seed_of(j, "seed", c.seed);
    c.kp = num(j, "kp", c.kp);

    const auto mode = str(j, "dispatch_mode", "probabilistic");
    if (mode == "probabilistic") c.dispatch_mode = DispatchMode::probabilistic;
    else if (mode == "priority") c.dispatch_mode = DispatchMode::priority;
    else throw SchemaError("dispatch_mode", "/dispatch_mode", "expected probabilistic or priority");
    c.measurement_noise_kw = num(j, "measurement_noise_kw", 0.0);
    c.threads = static_cast<std::size_t>(seed_of(j, "threads", 0));
    c.monitored_line = str(j, "monitored_line", "");
    {
        auto ph = netmodel::parse_phase(str(j, "monitored_phase", "A"));
        if (!ph) throw SchemaError("monitored_phase", "/monitored_phase", "expected A, B, or C");
        c.monitored_phase = *ph;
    }
    c.sensitivity_pf = num(j, "sensitivity_pf", c.sensitivity_pf);
    if (j.contains("scan_start_s")) c.scan_start_s = num(j, "scan_start_s", 0.0);
    if (j.contains("scan_end_s")) c.scan_end_s = num(j, "scan_end_s", 0.0);
    c.n_trials = static_cast<std::size_t>(seed_of(j, "n_trials", c.n_trials));
    if (j.contains("limits")) {
        const auto& l = j.at("limits");
        check_keys(l, {"v_cont_lo", "v_cont_hi", "v_cont_duration_s", "v_emerg_lo", "v_emerg_hi",
                       "unbalance_max_pct", "xfmr_power_max_pu", "xfmr_aging_avg_max", "line_current_max_pu"},
                   "/limits");
        auto& m = c.limits;
        m.v_cont_lo = num(l, "v_cont_lo", m.v_cont_lo);
        m.v_cont_hi = num(l, "v_cont_hi", m.v_cont_hi);
        m.v_cont_duration_s = num(l, "v_cont_duration_s", m.v_cont_duration_s);
        m.v_emerg_lo = num(l, "v_emerg_lo", m.v_emerg_lo);
        m.v_emerg_hi = num(l, "v_emerg_hi", m.v_emerg_hi);
        m.unbalance_max_pct = num(l, "unbalance_max_pct", m.unbalance_max_pct);
        m.xfmr_power_max_pu = num(l, "xfmr_power_max_pu", m.xfmr_power_max_pu);
        m.xfmr_aging_avg_max = num(l, "xfmr_aging_avg_max", m.xfmr_aging_avg_max);
        m.line_current_max_pu = num(l, "line_current_max_pu", m.line_current_max_pu);
    }
    validate_config(c);
    return c;
}

namespace {

std::uint64_t hash_inputs(const Scenario& s) {
    std::ostringstream os;
    os.precision(17);
    os << netmodel::feeder_to_json(s.feeder);
    for (std::size_t i = 0; i < s.weather.t_s.size(); ++i) os << s.weather.t_s[i] << ',' << s.weather.value[i] << '\n';
    os << "signal\n";
    for (std::size_t i = 0; i < s.signal.t_s.size(); ++i) os << s.signal.t_s[i] << ',' << s.signal.value[i] << '\n';
    const auto& c = s.config;
    os << to_string(c.case_kind) << ' ' << (c.test_hour_start_s ? *c.test_hour_start_s : -1.0) << ' '
       << c.dt_test_s << ' ' << c.dt_warmup_s << ' ' << c.warmup_coarse_h << ' ' << c.warmup_fine_h << ' '
       << c.signal_scale << ' ' << to_string(c.ev_mode) << ' ' << c.ev_penetration << ' ' << c.ev_power_kw
       << ' ' << c.kp << ' ' << static_cast<int>(c.dispatch_mode) << ' ' << c.measurement_noise_kw << ' '
       << c.monitored_line << ' ' << static_cast<int>(c.monitored_phase) << ' ' << c.sensitivity_pf << ' '
       << (c.scan_start_s ? *c.scan_start_s : -1.0) << ' ' << (c.scan_end_s ? *c.scan_end_s : -1.0) << ' '
       << c.n_trials;
    const auto& l = c.limits;
    os << ' ' << l.v_cont_lo << ' ' << l.v_cont_hi << ' ' << l.v_cont_duration_s << ' ' << l.v_emerg_lo << ' '
       << l.v_emerg_hi << ' ' << l.unbalance_max_pct << ' ' << l.xfmr_power_max_pu << ' '
       << l.xfmr_aging_avg_max << ' ' << l.line_current_max_pu;
    return rng::hash_string(os.str());
}

}  // namespace

Scenario make_scenario(ScenarioConfig config) {
    validate_config(config);
    Scenario s;
    s.feeder = netmodel::load_feeder(config.feeder_path);
    s.weather = load_series_csv(config.weather_path, "time_s", "temp_c");
    if (!config.signal_path.empty()) s.signal = load_series_csv(config.signal_path, "time_s", "signal_pu");
    if (!config.monitored_line.empty() && !s.feeder.line_index(config.monitored_line))
        throw SchemaError("monitored_line", "/monitored_line", "unknown line '" + config.monitored_line + "'");
    s.config = std::move(config);
    s.input_hash = hash_inputs(s);
    return s;
}

Scenario load_scenario(const std::filesystem::path& config_path) {
    return make_scenario(load_scenario_config(config_path));
}

// ---------------------------------------------------------------------------
// Signal

std::vector<double> scale_regulation_signal(std::span<const double> raw, double baseline_kw, double scale) {
    if (raw.empty()) throw ScalingError("regulation signal has no samples");
    if (!(baseline_kw > 0.0) || !std::isfinite(baseline_kw))
        throw ScalingError("baseline power must be positive to scale the regulation signal");
    if (!(scale > 0.0)) throw ScalingError("signal scale must be positive");
    bool all_zero = true;
    double mean = 0.0;
    for (double v : raw) {
        if (!std::isfinite(v)) throw ScalingError("regulation signal contains a non-finite sample");
        all_zero = all_zero && v == 0.0;
        mean += v;
    }
    if (all_zero) throw ScalingError("regulation signal is identically zero");
    mean /= static_cast<double>(raw.size());
    double peak = 0.0, size = 0.0;
    for (double v : raw) {
        peak = std::max(peak, std::abs(v - mean));
        size = std::max(size, std::abs(v));
    }
    std::vector<double> out(raw.size(), baseline_kw);
    // A constant signal leaves only rounding noise after the mean shift.
    if (peak <= 1e-12 * size) return out;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = baseline_kw * (1.0 + scale * (raw[i] - mean) / peak);
    return out;
}

std::vector<double> sample_signal(const TimeSeries& signal, double dt_s, std::size_t steps) {
    if (signal.empty()) throw ScalingError("no regulation signal configured");
    std::vector<double> out(steps);
    for (std::size_t k = 0; k < steps; ++k) out[k] = signal.hold(static_cast<double>(k) * dt_s);
    return out;
}

// ---------------------------------------------------------------------------
// Loads

namespace {

void add_zip(NodeLoad& node, double kva, double pf, const netmodel::ZipFractions& real,
             const netmodel::ZipFractions& reactive) {
    const double p = kva * pf;
    const double q = kva * std::sqrt(std::max(0.0, 1.0 - pf * pf));
    node.constant_impedance += Complex(p * real.z, q * reactive.z);
    node.constant_current += Complex(p * real.i, q * reactive.i);
    node.constant_power += Complex(p * real.p, q * reactive.p);
}

std::vector<std::size_t> house_buses(const FeederModel& f) {
    std::vector<std::size_t> out;
    out.reserve(f.houses.size());
    for (const auto& h : f.houses) {
        auto b = f.bus_index(h.bus);
        if (!b) throw ModelError("house '" + h.id + "' on unknown bus '" + h.bus + "'");
        out.push_back(*b);
    }
    return out;
}

BusLoads static_loads(const FeederModel& f, const std::vector<std::size_t>& hbus,
                      std::span<const std::size_t> ev_houses, EvMode ev_mode, double ev_kw) {
    BusLoads loads = powerflow::empty_loads(f);
    for (std::size_t i = 0; i < f.houses.size(); ++i) {
        const auto& h = f.houses[i];
        add_zip(loads[hbus[i]][idx(h.phase)], h.zip_kva, h.zip_power_factor, h.zip_real, h.zip_reactive);
    }
    for (const auto& z : f.zip_loads) {
        auto b = f.bus_index(z.bus);
        if (!b) throw ModelError("load '" + z.id + "' on unknown bus '" + z.bus + "'");
        for (Phase p : netmodel::kAllPhases)
            if (z.phases.has(p)) add_zip(loads[*b][idx(p)], z.base_kva[idx(p)], z.power_factor, z.real, z.reactive);
    }
    if (ev_mode != EvMode::none) {
        const double kw = ev_mode == EvMode::charge ? ev_kw : -ev_kw;
        for (std::size_t i : ev_houses) {
            if (i >= f.houses.size()) throw ModelError("EV house index out of range");
            loads[hbus[i]][idx(f.houses[i].phase)].constant_power += Complex(kw, 0.0);
        }
    }
    return loads;
}

}  // namespace

BusLoads compose_bus_loads(const FeederModel& feeder, std::span<const char> ac_on,
                           std::span<const std::size_t> ev_houses, EvMode ev_mode, double ev_power_kw) {
    const auto hbus = house_buses(feeder);
    BusLoads loads = static_loads(feeder, hbus, ev_houses, ev_mode, ev_power_kw);
    if (!ac_on.empty() && ac_on.size() != feeder.houses.size())
        throw ModelError("AC state vector does not match the house count");
    for (std::size_t i = 0; i < ac_on.size(); ++i) {
        if (!ac_on[i]) continue;
        const auto d = hvac::ac_demand(feeder.houses[i].hvac, true);
        loads[hbus[i]][idx(feeder.houses[i].phase)].constant_power += Complex(d.p_kw, d.q_kvar);
    }
    return loads;
}

std::vector<std::size_t> select_ev_houses(const FeederModel& feeder, double penetration, std::uint64_t seed) {
    if (!(penetration >= 0.0 && penetration <= 1.0)) throw DomainError("EV penetration must lie in [0, 1]");
    const std::size_t n = feeder.houses.size();
    const auto k = static_cast<std::size_t>(std::llround(penetration * static_cast<double>(n)));
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < n; ++i)
        order.push_back({rng::uniform(seed, rng::Stream::ev_selection, rng::hash_string(feeder.houses[i].id)), i});
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(order[i].second);
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Simulator core

namespace {

struct StepOutput {
    PowerFlowSolution solution;
    double p_ac_kw = 0.0;
    std::size_t n_on = 0;
};

class Simulator {
public:
    Simulator(const FeederModel& feeder, bool thermal)
        : net_(feeder), solver_(feeder), hbus_(house_buses(feeder)), thermal_(thermal) {
        models_.reserve(feeder.houses.size());
        for (const auto& h : feeder.houses) {
            models_.emplace_back(h.hvac);
            demand_.push_back(hvac::ac_demand(h.hvac, true));
        }
        houses_.resize(feeder.houses.size());
        for (const auto& x : feeder.transformers) xparams_.push_back(netmodel::thermal_params(x));
        xstate_.resize(feeder.transformers.size());
        cap_dwell_.assign(feeder.capacitors.size(), 0.0);
        for (const auto& c : feeder.capacitors)
            cap_sense_.push_back(c.control.mode == netmodel::CapControlMode::voltage
                                     ? *feeder.bus_index(c.control.sense_bus)
                                     : 0);
        static_ = static_loads(feeder, hbus_, {}, EvMode::none, 0.0);
        static_no_ev_ = static_;
    }

    void set_ev(std::span<const std::size_t> ev_houses, EvMode mode, double kw) {
        static_ = static_loads(net_, hbus_, ev_houses, mode, kw);
    }
    void clear_ev() { static_ = static_no_ev_; }

    void init_houses(std::uint64_t seed, rng::Stream stream, double ambient_c) {
        for (std::size_t i = 0; i < houses_.size(); ++i) {
            const auto& h = net_.houses[i];
            double d = 0.0;
            try {
                d = hvac::natural_duty_cycle(h.hvac, ambient_c, h.gain_kw).duty;
            } catch (const CapacityError&) {
                d = 1.0;
            }
            hvac::HouseState s;
            const double u0 = rng::uniform(seed, stream, rng::hash_string(h.id), 0);
            const double u1 = rng::uniform(seed, stream, rng::hash_string(h.id), 1);
            s.t_air_c = h.hvac.t_low_c + u0 * (h.hvac.t_high_c - h.hvac.t_low_c);
            s.t_mass_c = s.t_air_c;
            s.on = u1 < d;
            houses_[i] = s;
        }
    }

    StepOutput solve(double t_s) const {
        BusLoads loads = static_;
        StepOutput out;
        for (std::size_t i = 0; i < houses_.size(); ++i) {
            if (!houses_[i].on) continue;
            loads[hbus_[i]][idx(net_.houses[i].phase)].constant_power += Complex(demand_[i].p_kw, demand_[i].q_kvar);
            out.p_ac_kw += demand_[i].p_kw;
            ++out.n_on;
        }
        try {
            out.solution = solver_.solve(net_, loads);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError(std::string(e.what()) + " at t = " + std::to_string(t_s) + " s", e.worst_bus(),
                                   e.worst_mismatch(), e.iterations());
        }
        return out;
    }

    double ac_power() const {
        double p = 0.0;
        for (std::size_t i = 0; i < houses_.size(); ++i)
            if (houses_[i].on) p += demand_[i].p_kw;
        return p;
    }

    void init_thermal(const PowerFlowSolution& sol, double ambient_c) {
        for (std::size_t t = 0; t < xstate_.size(); ++t)
            xstate_[t] = transformer::steady_state(xparams_[t], load_pu(sol, t), ambient_c);
    }

    double load_pu(const PowerFlowSolution& sol, std::size_t t) const {
        return std::abs(sol.transformer_power_kva[t]) / xparams_[t].rating_kva;
    }

    void step_thermal(const PowerFlowSolution& sol, double ambient_c, double dt) {
        if (!thermal_) return;
        for (std::size_t t = 0; t < xstate_.size(); ++t) {
            auto next = transformer::step_thermal(xparams_[t], xstate_[t], load_pu(sol, t), ambient_c, dt);
            xstate_[t] = transformer::accumulate_aging(next, next.aging_rate, dt);
        }
    }

    void advance_houses(double ambient_c, double t_s, double dt) {
        for (std::size_t i = 0; i < houses_.size(); ++i)
            houses_[i] = models_[i].step(houses_[i], {ambient_c, net_.houses[i].gain_kw}, dt, t_s);
    }

    /// Voltage-controlled capacitors switch after the condition has held for the dwell time.
    void control_capacitors(const PowerFlowSolution& sol, double t_s, double dt, std::vector<Event>* events) {
        for (std::size_t i = 0; i < net_.capacitors.size(); ++i) {
            auto& c = net_.capacitors[i];
            if (c.control.mode != netmodel::CapControlMode::voltage) continue;
            const double v = std::abs(sol.voltage_pu[cap_sense_[i]][idx(c.control.sense_phase)]);
            const bool want = c.on ? v > c.control.v_off_pu : v < c.control.v_on_pu;
            if (!want) {
                cap_dwell_[i] = 0.0;
                continue;
            }
            cap_dwell_[i] += dt;
            if (cap_dwell_[i] + 1e-9 >= kCapDwellS) {
                c.on = !c.on;
                cap_dwell_[i] = 0.0;
                if (events) events->push_back({t_s + dt, c.id, c.on ? "capacitor_on" : "capacitor_off"});
            }
        }
    }

    void open_fuse(std::size_t i) { net_.fuses[i].open = true; }

    const FeederModel& net() const { return net_; }
    const powerflow::RadialSolver& solver() const { return solver_; }
    std::vector<hvac::HouseState>& houses() { return houses_; }
    const std::vector<hvac::EtpModel>& models() const { return models_; }
    const std::vector<transformer::TransformerThermalState>& xstate() const { return xstate_; }
    const std::vector<transformer::XfmrThermalParams>& xparams() const { return xparams_; }

private:
    FeederModel net_;
    powerflow::RadialSolver solver_;
    std::vector<std::size_t> hbus_;
    bool thermal_;
    std::vector<hvac::EtpModel> models_;
    std::vector<hvac::AcDemand> demand_;
    std::vector<hvac::HouseState> houses_;
    std::vector<transformer::XfmrThermalParams> xparams_;
    std::vector<transformer::TransformerThermalState> xstate_;
    std::vector<double> cap_dwell_;
    std::vector<std::size_t> cap_sense_;
    BusLoads static_;
    BusLoads static_no_ev_;
};

/// Warm-up from `start` to `test_start`; returns P̄_ON over the final hour.
double warm_up(Simulator& sim, const Scenario& sc, double test_start, std::uint64_t seed) {
    const auto& c = sc.config;
    const double coarse_s = c.warmup_coarse_h * kHour;
    const double fine_s = c.warmup_fine_h * kHour;
    const double t0 = test_start - coarse_s - fine_s;
    sim.init_houses(seed, rng::Stream::initial_state, sc.weather.linear(t0));
    {
        const auto first = sim.solve(t0);
        sim.init_thermal(first.solution, sc.weather.linear(t0));
    }
    double on_kw_s = 0.0;
    double on_units_s = 0.0;
    auto run = [&](double start, std::size_t n, double dt) {
        for (std::size_t k = 0; k < n; ++k) {
            const double t = start + static_cast<double>(k) * dt;
            const double amb = sc.weather.linear(t);
            const auto out = sim.solve(t);
            sim.step_thermal(out.solution, amb, dt);
            if (t >= test_start - kHour - 1e-9) {
                on_kw_s += out.p_ac_kw * dt;
                on_units_s += static_cast<double>(out.n_on) * dt;
            }
            sim.advance_houses(amb, t, dt);
            sim.control_capacitors(out.solution, t, dt, nullptr);
        }
    };
    const auto n_coarse = static_cast<std::size_t>(std::llround(coarse_s / c.dt_warmup_s));
    const auto n_fine = static_cast<std::size_t>(std::llround(fine_s / c.dt_test_s));
    run(t0, n_coarse, c.dt_warmup_s);
    run(t0 + coarse_s, n_fine, c.dt_test_s);
    if (on_units_s > 0.0) return on_kw_s / on_units_s;
    double sum = 0.0;
    for (const auto& h : sc.feeder.houses) sum += hvac::ac_demand(h.hvac, true).p_kw;
    return sc.feeder.houses.empty() ? 1.0 : sum / static_cast<double>(sc.feeder.houses.size());
}

/// Transformer serving each bus (nearest upstream), or npos.
std::vector<std::size_t> serving_transformer(const FeederModel& f, const netmodel::Topology& topo) {
    constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<std::size_t> out(f.buses.size(), npos);
    for (std::size_t b : topo.order) {
        const auto& e = topo.parent_edge[b];
        if (!e) continue;
        out[b] = e->kind == netmodel::EdgeRef::Kind::transformer ? e->index : out[topo.parent_bus[b]];
    }
    return out;
}

struct HourSetup {
    CaseKind kind = CaseKind::base;
    EvMode ev_mode = EvMode::none;
    double start_s = 0.0;
    std::uint64_t seed = 0;
    double mean_on_kw = 1.0;
    std::vector<double> p_des;  ///< regulation only
    const std::vector<double>* duty = nullptr;
};

CaseResult run_hour(Simulator& sim, const Scenario& sc, const HourSetup& hs) {
    const auto& c = sc.config;
    const double dt = c.dt_test_s;
    const auto steps = static_cast<std::size_t>(std::llround(kHour / dt));
    const bool regulate = hs.kind == CaseKind::regulation;
    if (regulate && hs.p_des.size() != steps) throw ScalingError("desired power series does not cover the hour");

    CaseResult r;
    r.kind = hs.kind;
    r.ev_mode = hs.ev_mode;
    monitor::Monitor mon(sim.net(), c.limits);
    for (const auto& n : mon.service_nodes()) r.node_ids.push_back(n.id);
    r.node_voltage.assign(mon.service_nodes().size(), std::vector<double>(steps));

    const std::size_t nx = sim.net().transformers.size();
    std::vector<double> load_sum(nx, 0.0), hot_max(nx, -std::numeric_limits<double>::infinity());
    std::vector<double> aged0(nx);
    for (std::size_t t = 0; t < nx; ++t) aged0[t] = sim.xstate()[t].minutes_aged;

    std::optional<std::size_t> mon_line;
    std::size_t mon_child = 0, mon_parent = 0;
    if (!c.monitored_line.empty()) {
        mon_line = sim.net().line_index(c.monitored_line);
        const auto& topo = sim.solver().topology();
        for (std::size_t b = 0; b < topo.parent_edge.size(); ++b) {
            const auto& e = topo.parent_edge[b];
            if (e && e->kind == netmodel::EdgeRef::Kind::line && e->index == *mon_line) {
                mon_child = b;
                mon_parent = topo.parent_bus[b];
            }
        }
    }

    auto& houses = sim.houses();
    const auto& models = sim.models();
    const auto& feeder = sim.net();
    std::vector<dispatch::Candidate> cand(houses.size());

    for (std::size_t k = 0; k < steps; ++k) {
        const double t = hs.start_s + static_cast<double>(k) * dt;
        const double amb = sc.weather.linear(t);
        StepRecord rec;
        rec.t_s = t;
        rec.ambient_c = amb;

        if (regulate) {
            for (std::size_t i = 0; i < houses.size(); ++i) {
                const hvac::EtpInputs in{amb, feeder.houses[i].gain_kw};
                cand[i].key = i;
                cand[i].on = houses[i].on;
                cand[i].available = dispatch::availability(models[i], houses[i], t, in).available();
                cand[i].edge_distance_c = dispatch::edge_distance(feeder.houses[i].hvac, houses[i]);
            }
            const auto counts = dispatch::count_available(cand);
            double measured = sim.ac_power();
            if (c.measurement_noise_kw > 0.0)
                measured += c.measurement_noise_kw * rng::normal(hs.seed, rng::Stream::measurement_noise, k);
            dispatch::ControllerState ctrl;
            ctrl.gain = c.kp;
            ctrl.mean_on_kw = hs.mean_on_kw;
            ctrl.desired_kw = hs.p_des[k];
            ctrl.measured_kw = measured;
            ctrl.available = ctrl.desired_kw >= measured ? counts.off : counts.on;
            const auto cmd = dispatch::control_signal(ctrl, t);
            const auto flips = c.dispatch_mode == DispatchMode::priority
                                   ? dispatch::apply_priority_dispatch(cand, cmd)
                                   : dispatch::apply_dispatch(cand, cmd, hs.seed, k);
            for (std::size_t i : flips) {
                houses[i].on = !houses[i].on;
                houses[i].last_switch_s = t;
            }
            rec.p_des_kw = hs.p_des[k];
            rec.u = cmd.u;
            rec.available = counts.off + counts.on;
            rec.switched = flips.size();
            if (cmd.u != 0.0) ++r.dispatch_commands;
        }

        const auto out = sim.solve(t);
        const auto& sol = out.solution;
        sim.step_thermal(sol, amb, dt);
        for (std::size_t x = 0; x < nx; ++x) {
            load_sum[x] += std::abs(sol.transformer_power_kva[x]) / sim.xparams()[x].rating_kva;
            hot_max[x] = std::max(hot_max[x], transformer::hotspot_c(sim.xstate()[x], amb));
        }
        for (std::size_t fuse : mon.check_all(feeder, {t, dt, sol})) {
            sim.open_fuse(fuse);
            r.events.push_back({t + dt, feeder.fuses[fuse].id, "fuse_open"});
        }
        if (c.record_frames) r.frames.push_back({t, dt, sol});

        rec.p_ac_kw = out.p_ac_kw;
        rec.head_kva = sol.head_apparent_kva();
        r.ac_energy_kwh += out.p_ac_kw * dt / kHour;
        for (std::size_t n = 0; n < mon.service_nodes().size(); ++n) {
            const auto& node = mon.service_nodes()[n];
            r.node_voltage[n][k] = std::abs(sol.voltage_pu[node.bus][idx(node.phase)]);
        }
        if (mon_line) {
            const std::size_t ph = idx(c.monitored_phase);
            const Complex i_pu = sol.line_current_a[*mon_line][ph] / sim.solver().current_base_a(mon_parent);
            const Complex s_recv = sol.voltage_pu[mon_child][ph] * std::conj(i_pu);
            const Complex z = sim.solver().line_z_pu(*mon_line, c.monitored_phase);
            r.monitored_line.push_back(
                {t, {std::abs(sol.voltage_pu[mon_parent][ph]), z.real(), z.imag(), s_recv.real(), s_recv.imag()}});
        }
        r.steps.push_back(rec);

        sim.advance_houses(amb, t, dt);
        sim.control_capacitors(sol, t, dt, &r.events);
    }

    const double end = hs.start_s + static_cast<double>(steps) * dt;
    std::vector<double> mean_rate(nx);
    const auto serving = serving_transformer(feeder, sim.solver().topology());
    std::vector<std::size_t> acs(nx, 0);
    std::vector<double> duty_sum(nx, 0.0);
    for (std::size_t i = 0; i < feeder.houses.size(); ++i) {
        const auto b = *feeder.bus_index(feeder.houses[i].bus);
        if (serving[b] >= nx) continue;
        ++acs[serving[b]];
        if (hs.duty) duty_sum[serving[b]] += (*hs.duty)[i];
    }
    for (std::size_t x = 0; x < nx; ++x) {
        TransformerSummary ts;
        ts.id = feeder.transformers[x].id;
        ts.rating_kva = feeder.transformers[x].rating_kva;
        ts.mean_load_pu = load_sum[x] / static_cast<double>(steps);
        ts.mean_aging_rate = (sim.xstate()[x].minutes_aged - aged0[x]) / ((end - hs.start_s) / 60.0);
        ts.max_hotspot_c = hot_max[x];
        ts.attached_acs = acs[x];
        if (acs[x] > 0 && hs.duty) ts.mean_duty = duty_sum[x] / static_cast<double>(acs[x]);
        mean_rate[x] = ts.mean_aging_rate;
        r.transformers.push_back(std::move(ts));
    }
    mon.check_aging(mean_rate, hs.start_s, end);
    r.violations = mon.log();
    r.node_flags = mon.node_flags();
    for (std::size_t n = 0; n < r.node_ids.size(); ++n) {
        const auto& v = r.node_voltage[n];
        NodeSummary s;
        s.id = r.node_ids[n];
        double sum = 0.0;
        for (double x : v) sum += x;
        s.mean = sum / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std_dev = std::sqrt(ss / static_cast<double>(v.size()));
        s.min = *std::min_element(v.begin(), v.end());
        s.max = *std::max_element(v.begin(), v.end());
        r.nodes.push_back(std::move(s));
    }
    return r;
}

double resolve_test_hour(const Scenario& sc) {
    if (sc.config.test_hour_start_s) return *sc.config.test_hour_start_s;
    ScanOptions opt;
    opt.start_s = sc.config.scan_start_s;
    opt.end_s = sc.config.scan_end_s;
    opt.seed = sc.config.seed;
    return find_peak_hour(sc.feeder, sc.weather, opt).start_s;
}

Scenario with_resolved_hour(const Scenario& sc) {
    Scenario out = sc;
    out.config.test_hour_start_s = resolve_test_hour(sc);
    return out;
}

}  // namespace

std::vector<double> TrialResult::delta_aging_pct() const {
    if (!regulation) throw DomainError("trial has no regulation case");
    std::vector<double> out;
    for (std::size_t t = 0; t < base.transformers.size(); ++t) {
        const double fb = base.transformers[t].mean_aging_rate;
        const double fr = regulation->transformers[t].mean_aging_rate;
        out.push_back(100.0 * (fr - fb) / fb);
    }
    return out;
}

std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t trial) {
    return rng::key(base_seed, rng::Stream::trial_seed, trial);
}

TrialResult run_trial(const Scenario& sc, CaseKind kind, std::uint64_t seed, EvMode ev_mode) {
    const auto& c = sc.config;
    TrialResult tr;
    tr.trial_seed = seed;
    tr.test_hour_start_s = resolve_test_hour(sc);
    std::vector<std::size_t> ev;
    if (ev_mode != EvMode::none) {
        ev = select_ev_houses(sc.feeder, c.ev_penetration, c.seed);
        for (std::size_t i : ev) tr.ev_houses.push_back(sc.feeder.houses[i].id);
    }

    Simulator sim(sc.feeder, true);
    tr.mean_on_kw = warm_up(sim, sc, tr.test_hour_start_s, seed);
    if (ev_mode != EvMode::none) sim.set_ev(ev, ev_mode, c.ev_power_kw);

    // Natural duty cycles at the hour-mean ambient, for transformer summaries.
    const auto steps = static_cast<std::size_t>(std::llround(kHour / c.dt_test_s));
    double amb_mean = 0.0;
    for (std::size_t k = 0; k < steps; ++k)
        amb_mean += sc.weather.linear(tr.test_hour_start_s + static_cast<double>(k) * c.dt_test_s);
    amb_mean /= static_cast<double>(steps);
    std::vector<double> duty;
    for (const auto& h : sc.feeder.houses) {
        try {
            duty.push_back(hvac::natural_duty_cycle(h.hvac, amb_mean, h.gain_kw).duty);
        } catch (const CapacityError&) {
            duty.push_back(1.0);
        }
    }

    HourSetup hs;
    hs.ev_mode = ev_mode;
    hs.start_s = tr.test_hour_start_s;
    hs.seed = seed;
    hs.mean_on_kw = tr.mean_on_kw;
    hs.duty = &duty;

    const Simulator snapshot = sim;
    hs.kind = CaseKind::base;
    tr.base = run_hour(sim, sc, hs);
    double p_sum = 0.0;
    for (const auto& s : tr.base.steps) p_sum += s.p_ac_kw;
    tr.baseline_kw = p_sum / static_cast<double>(tr.base.steps.size());

    if (kind == CaseKind::regulation) {
        sim = snapshot;
        hs.kind = CaseKind::regulation;
        hs.p_des = scale_regulation_signal(sample_signal(sc.signal, c.dt_test_s, steps), tr.baseline_kw,
                                           c.signal_scale);
        tr.regulation = run_hour(sim, sc, hs);
    }
    return tr;
}

TrialResult run_case(const Scenario& sc) {
    return run_trial(sc, sc.config.case_kind, sc.config.seed, sc.config.ev_mode);
}

// ---------------------------------------------------------------------------
// Peak scan

std::vector<double> scan_head_power(const FeederModel& feeder, const TimeSeries& weather, const ScanOptions& opt) {
    if (weather.empty()) throw DomainError("weather series is empty");
    if (!(opt.dt_s > 0.0)) throw DomainError("scan step must be positive");
    const double start = opt.start_s.value_or(weather.start_s());
    const double end = opt.end_s.value_or(weather.end_s());
    if (!(end > start)) throw DomainError("scan window is empty");
    const auto n = static_cast<std::size_t>(std::floor((end - start) / opt.dt_s + 1e-9));
    Simulator sim(feeder, false);
    sim.init_houses(opt.seed, rng::Stream::peak_scan, weather.linear(start));
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = start + static_cast<double>(k) * opt.dt_s;
        const double amb = weather.linear(t);
        const auto s = sim.solve(t);
        out.push_back(s.solution.head_apparent_kva());
        sim.advance_houses(amb, t, opt.dt_s);
        sim.control_capacitors(s.solution, t, opt.dt_s, nullptr);
    }
    return out;
}

PeakHour find_peak_hour(const FeederModel& feeder, const TimeSeries& weather, const ScanOptions& opt) {
    const auto head = scan_head_power(feeder, weather, opt);
    PeakHour p;
    p.window_start_s = opt.start_s.value_or(weather.start_s());
    const auto per_hour = static_cast<std::size_t>(std::llround(kHour / opt.dt_s));
    const std::size_t hours = head.size() / per_hour;
    if (hours == 0) throw DomainError("scan window is shorter than one hour");
    std::size_t best = 0;
    for (std::size_t h = 0; h < hours; ++h) {
        double sum = 0.0;
        for (std::size_t k = h * per_hour; k < (h + 1) * per_hour; ++k) sum += head[k];
        p.hourly_mean_kva.push_back(sum / static_cast<double>(per_hour));
        if (p.hourly_mean_kva[h] > p.hourly_mean_kva[best]) best = h;
    }
    p.start_s = p.window_start_s + static_cast<double>(best) * kHour;
    p.mean_kva = p.hourly_mean_kva[best];
    return p;
}

// ---------------------------------------------------------------------------
// Studies

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t workers = threads == 0 ? std::max<std::size_t>(1, std::thread::hardware_concurrency()) : threads;
    workers = std::min(workers, n);
    std::vector<std::exception_ptr> errors(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

double over_limit_any_pct(const CaseResult& r) {
    if (r.node_flags.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& f : r.node_flags) n += f.above_cont_hi_any;
    return 100.0 * static_cast<double>(n) / static_cast<double>(r.node_flags.size());
}

double over_limit_sustained_pct(const CaseResult& r) {
    if (r.node_flags.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& f : r.node_flags) n += f.above_cont_hi_sustained;
    return 100.0 * static_cast<double>(n) / static_cast<double>(r.node_flags.size());
}

std::vector<powerflow::SensitivityTerms> monitored_sensitivity(const CaseResult& r, double pf) {
    std::vector<powerflow::SensitivityTerms> out;
    out.reserve(r.monitored_line.size());
    for (const auto& op : r.monitored_line) out.push_back(powerflow::voltage_sensitivity(op.line, pf));
    return out;
}

EvStudyResult run_ev_study(const Scenario& scenario) {
    const Scenario sc = with_resolved_hour(scenario);
    if (sc.config.monitored_line.empty())
        throw SchemaError("monitored_line", "/monitored_line", "the EV study needs a monitored line");
    constexpr std::array<EvMode, 3> modes{EvMode::charge, EvMode::none, EvMode::discharge};
    EvStudyResult out;
    parallel_for(3, sc.config.threads, [&](std::size_t i) {
        out.trials[i] = run_trial(sc, CaseKind::regulation, sc.config.seed, modes[i]);
    });
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& t = out.trials[i];
        EvTableRow row;
        row.mode = modes[i];
        row.any_base_pct = over_limit_any_pct(t.base);
        row.any_reg_pct = over_limit_any_pct(*t.regulation);
        row.sustained_base_pct = over_limit_sustained_pct(t.base);
        row.sustained_reg_pct = over_limit_sustained_pct(*t.regulation);
        const auto sens = monitored_sensitivity(t.base, sc.config.sensitivity_pf);
        for (const auto& s : sens) {
            row.mean_sensitivity += s.total();
            row.mean_p_term += s.p_term;
            row.mean_q_term += s.q_term;
        }
        if (!sens.empty()) {
            const auto n = static_cast<double>(sens.size());
            row.mean_sensitivity /= n;
            row.mean_p_term /= n;
            row.mean_q_term /= n;
        }
        out.table[i] = row;
    }
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DomainError("pearson inputs differ in length");
    const std::size_t n = x.size();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sxy / std::sqrt(sxx * syy);
}

RandomizationSummary summarize_randomization(const std::vector<TrialResult>& trials) {
    if (trials.size() < 2) throw DomainError("randomization summary needs at least two trials");
    for (const auto& t : trials)
        if (!t.regulation) throw DomainError("randomization trials need regulation cases");
    RandomizationSummary s;
    const std::size_t nt = trials.size();
    const std::size_t nx = trials.front().base.transformers.size();
    for (const auto& t : trials[0].base.transformers) s.transformer_ids.push_back(t.id);
    s.increased_counts.assign(nx, 0);
    s.mean_delta_aging_pct.assign(nx, 0.0);
    for (const auto& t : trials) {
        const auto delta = t.delta_aging_pct();
        for (std::size_t x = 0; x < nx; ++x) {
            const double fb = t.base.transformers[x].mean_aging_rate;
            const double fr = t.regulation->transformers[x].mean_aging_rate;
            if (fr - fb > 1e-12 * std::abs(fb)) ++s.increased_counts[x];
            s.mean_delta_aging_pct[x] += delta[x] / static_cast<double>(nt);
        }
    }
    s.observed.assign(nt + 1, 0.0);
    std::size_t total = 0;
    for (int c : s.increased_counts) {
        s.observed[static_cast<std::size_t>(c)] += 1.0;
        total += static_cast<std::size_t>(c);
    }
    s.p_hat = nx == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(nx * nt);
    boost::math::binomial_distribution<double> binom(static_cast<double>(nt), s.p_hat);
    for (std::size_t k = 0; k <= nt; ++k) {
        const double pmf = boost::math::pdf(binom, static_cast<double>(k));
        s.expected_pmf.push_back(pmf);
        s.expected_counts.push_back(pmf * static_cast<double>(nx));
    }
    for (std::size_t k = 0; k <= nt; ++k) {
        const double e = s.expected_counts[k];
        if (e > 0.0) s.chi_square += (s.observed[k] - e) * (s.observed[k] - e) / e;
        else if (s.observed[k] > 0.0) s.chi_square = std::numeric_limits<double>::infinity();
    }
    s.chi_square_dof = static_cast<int>(nt) - 1;
    s.chi_square_critical_95 =
        boost::math::quantile(boost::math::chi_squared_distribution<double>(s.chi_square_dof), 0.95);

    s.mean_duty.assign(nx, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> xs, ys;
    for (std::size_t x = 0; x < nx; ++x) {
        const auto& ts = trials[0].base.transformers[x];
        if (ts.attached_acs == 0) continue;
        s.mean_duty[x] = ts.mean_duty;
        if (std::isfinite(ts.mean_duty) && std::isfinite(s.mean_delta_aging_pct[x])) {
            xs.push_back(s.mean_delta_aging_pct[x]);
            ys.push_back(ts.mean_duty);
        }
    }
    s.duty_correlation = pearson(xs, ys);
    return s;
}

RandomizationResult run_randomization_study(const Scenario& scenario, std::size_t n_trials) {
    if (n_trials < 2) throw DomainError("randomization study needs at least two trials");
    const Scenario sc = with_resolved_hour(scenario);
    RandomizationResult out;
    out.trials.resize(n_trials);
    parallel_for(n_trials, sc.config.threads, [&](std::size_t i) {
        const std::uint64_t seed =
            sc.config.identical_trial_seeds ? sc.config.seed : trial_seed(sc.config.seed, i);
        out.trials[i] = run_trial(sc, CaseKind::regulation, seed, sc.config.ev_mode);
    });
    out.summary = summarize_randomization(out.trials);
    return out;
}

}  // namespace tclreg::engine
