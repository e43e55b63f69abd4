#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "tclreg/dispatch.hpp"
#include "tclreg/engine.hpp"
#include "tclreg/error.hpp"
#include "tclreg/hvac.hpp"
#include "tclreg/netmodel.hpp"
#include "tclreg/powerflow.hpp"
#include "tclreg/results.hpp"
#include "tclreg/transformer.hpp"

namespace py = pybind11;
using namespace tclreg;

namespace {

py::dict case_summary(const engine::CaseResult& r) {
    const auto var = results::summarize_voltage_variation(r);
    py::dict d;
    d["case"] = std::string(engine::to_string(r.kind));
    d["steps"] = r.steps.size();
    d["ac_energy_kwh"] = r.ac_energy_kwh;
    d["mean_node_std_dev_pu"] = var.mean_std_dev;
    d["total_voltage_range_pu"] = var.total_range;
    d["dispatch_commands"] = r.dispatch_commands;
    d["violations"] = r.violations.size();
    d["over_limit_any_pct"] = engine::over_limit_any_pct(r);
    std::vector<double> p_ac, p_des;
    for (const auto& s : r.steps) {
        p_ac.push_back(s.p_ac_kw);
        p_des.push_back(s.p_des_kw);
    }
    d["p_ac_kw"] = p_ac;
    d["p_des_kw"] = p_des;
    return d;
}

engine::Scenario scenario(const std::filesystem::path& config, std::optional<std::uint64_t> seed,
                          std::optional<std::size_t> threads) {
    auto cfg = engine::load_scenario_config(config);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    return engine::make_scenario(std::move(cfg));
}

}  // namespace

PYBIND11_MODULE(_tclreg, m) {
    m.doc() = "Air-conditioner regulation on distribution feeders";
    m.attr("__version__") = results::kVersion;

    static py::exception<Error> base_error(m, "TclregError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(base_error, (std::string(e.kind()) + ": " + e.what()).c_str());
        }
    });

    m.def("aging_rate", &transformer::aging_rate, py::arg("hotspot_c"),
          "Aging acceleration factor at a winding hot-spot temperature.");

    py::class_<hvac::HouseParams>(m, "HouseParams")
        .def(py::init<>())
        .def_readwrite("c_air_kj_per_c", &hvac::HouseParams::c_air_kj_per_c)
        .def_readwrite("c_mass_kj_per_c", &hvac::HouseParams::c_mass_kj_per_c)
        .def_readwrite("ua_kw_per_c", &hvac::HouseParams::ua_kw_per_c)
        .def_readwrite("hm_kw_per_c", &hvac::HouseParams::hm_kw_per_c)
        .def_readwrite("r_gain", &hvac::HouseParams::r_gain)
        .def_readwrite("t_low_c", &hvac::HouseParams::t_low_c)
        .def_readwrite("t_high_c", &hvac::HouseParams::t_high_c)
        .def_readwrite("q_ac_kw", &hvac::HouseParams::q_ac_kw)
        .def_readwrite("p_on_kw", &hvac::HouseParams::p_on_kw)
        .def_readwrite("power_factor", &hvac::HouseParams::power_factor);

    m.def(
        "natural_duty_cycle",
        [](const hvac::HouseParams& p, double ambient_c, double gain_kw) {
            const auto d = hvac::natural_duty_cycle(p, ambient_c, gain_kw);
            py::dict out;
            out["duty"] = d.duty;
            out["period_s"] = d.period_s;
            out["on_s"] = d.on_s;
            out["off_s"] = d.off_s;
            return out;
        },
        py::arg("params"), py::arg("ambient_c"), py::arg("gain_kw"));

    m.def(
        "simulate_house",
        [](const hvac::HouseParams& p, double t_air_c, double t_mass_c, bool on, double ambient_c,
           double gain_kw, double dt_s, std::size_t steps) {
            const hvac::EtpModel model(p);
            hvac::HouseState s;
            s.t_air_c = t_air_c;
            s.t_mass_c = t_mass_c;
            s.on = on;
            std::vector<double> air, state;
            for (std::size_t k = 0; k < steps; ++k) {
                s = model.step(s, {ambient_c, gain_kw}, dt_s, static_cast<double>(k) * dt_s);
                air.push_back(s.t_air_c);
                state.push_back(s.on ? 1.0 : 0.0);
            }
            return py::make_tuple(air, state);
        },
        py::arg("params"), py::arg("t_air_c"), py::arg("t_mass_c"), py::arg("on"), py::arg("ambient_c"),
        py::arg("gain_kw"), py::arg("dt_s"), py::arg("steps"),
        "Uncontrolled thermostat run under held inputs; returns (indoor temperatures, on flags).");

    m.def(
        "distflow_voltage",
        [](double v_send, double r, double x, double p, double q) {
            return powerflow::distflow_voltage({v_send, r, x, p, q});
        },
        py::arg("v_send"), py::arg("r"), py::arg("x"), py::arg("p"), py::arg("q"));

    m.def(
        "voltage_sensitivity",
        [](double v_send, double r, double x, double p, double q, double pf) {
            const auto t = powerflow::voltage_sensitivity({v_send, r, x, p, q}, pf);
            py::dict out;
            out["q_term"] = t.q_term;
            out["p_term"] = t.p_term;
            out["v_term"] = t.v_term;
            out["total"] = t.total();
            return out;
        },
        py::arg("v_send"), py::arg("r"), py::arg("x"), py::arg("p"), py::arg("q"), py::arg("power_factor") = 0.97);

    m.def(
        "switching_probabilities",
        [](double duty, double period_steps, double mean_duty, double population, double switched_per_step) {
            dispatch::DutyCycleStats s{duty, period_steps, mean_duty, population, switched_per_step};
            const auto p = dispatch::switching_probabilities(s);
            return py::make_tuple(p.on, p.off);
        },
        py::arg("duty"), py::arg("period_steps"), py::arg("mean_duty"), py::arg("population"),
        py::arg("switched_per_step"), "Returns (P_on, P_off) per natural cycle.");

    m.def(
        "bias_threshold",
        [](double duty, double period_steps, double mean_duty, double population, double switched_per_step) {
            return dispatch::bias_threshold({duty, period_steps, mean_duty, population, switched_per_step});
        },
        py::arg("duty"), py::arg("period_steps"), py::arg("mean_duty"), py::arg("population"),
        py::arg("switched_per_step"));

    m.def(
        "validate_feeder",
        [](const std::filesystem::path& path) {
            const auto f = netmodel::feeder_from_json([&] {
                std::ifstream in(path, std::ios::binary);
                if (!in) throw IoError("cannot open '" + path.string() + "'");
                std::ostringstream os;
                os << in.rdbuf();
                return os.str();
            }());
            std::vector<std::pair<std::string, std::string>> issues;
            for (const auto& i : netmodel::validate(f)) issues.emplace_back(i.location, i.message);
            return issues;
        },
        py::arg("path"), "List of (location, message) invariant violations; empty when valid.");

    m.def(
        "feeder_summary",
        [](const std::filesystem::path& path) {
            const auto f = netmodel::load_feeder(path);
            py::dict d;
            d["name"] = f.name;
            d["buses"] = f.buses.size();
            d["lines"] = f.lines.size();
            d["transformers"] = f.transformers.size();
            d["houses"] = f.houses.size();
            return d;
        },
        py::arg("path"));

    m.def(
        "run_case",
        [](const std::filesystem::path& config, std::optional<std::uint64_t> seed,
           std::optional<std::filesystem::path> out_dir) {
            const auto sc = scenario(config, seed, std::nullopt);
            engine::TrialResult tr;
            {
                py::gil_scoped_release release;
                tr = engine::run_case(sc);
                if (out_dir) results::emit(tr, {"python run_case", sc.config.seed, sc.input_hash}, *out_dir);
            }
            py::dict d;
            d["test_hour_start_s"] = tr.test_hour_start_s;
            d["baseline_kw"] = tr.baseline_kw;
            d["mean_on_kw"] = tr.mean_on_kw;
            d["base"] = case_summary(tr.base);
            d["regulation"] = tr.regulation ? py::object(case_summary(*tr.regulation)) : py::object(py::none());
            return d;
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("out_dir") = py::none(),
        "Warm-up, base hour and (for regulation scenarios) the regulation hour.");

    m.def(
        "find_peak_hour",
        [](const std::filesystem::path& config) {
            const auto sc = scenario(config, std::nullopt, std::nullopt);
            engine::ScanOptions o;
            o.start_s = sc.config.scan_start_s;
            o.end_s = sc.config.scan_end_s;
            o.dt_s = sc.config.dt_warmup_s;
            o.seed = sc.config.seed;
            const auto p = engine::find_peak_hour(sc.feeder, sc.weather, o);
            return py::make_tuple(p.start_s, p.mean_kva);
        },
        py::arg("config"), "Returns (start_s, mean_kva) of the peak hour.");

    m.def(
        "randomization_study",
        [](const std::filesystem::path& config, std::size_t n_trials, std::optional<std::size_t> threads) {
            const auto sc = scenario(config, std::nullopt, threads);
            engine::RandomizationResult r;
            {
                py::gil_scoped_release release;
                r = engine::run_randomization_study(sc, n_trials);
            }
            const auto& s = r.summary;
            py::dict d;
            d["transformer_ids"] = s.transformer_ids;
            d["increased_counts"] = s.increased_counts;
            d["p_hat"] = s.p_hat;
            d["chi_square"] = s.chi_square;
            d["chi_square_dof"] = s.chi_square_dof;
            d["chi_square_critical_95"] = s.chi_square_critical_95;
            d["duty_correlation"] = s.duty_correlation;
            return d;
        },
        py::arg("config"), py::arg("n_trials") = 6, py::arg("threads") = py::none());
}
