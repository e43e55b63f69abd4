#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "tclreg/engine.hpp"
#include "tclreg/error.hpp"
#include "tclreg/populate.hpp"
#include "tclreg/results.hpp"

namespace tclreg::cli {

namespace fs = std::filesystem;

int exit_code_for(const std::string& kind) {
    if (kind == "schema" || kind == "topology" || kind == "model" || kind == "io" || kind == "domain" ||
        kind == "scaling")
        return 2;
    return 3;
}

namespace {

struct Common {
    std::string config;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
};

fs::path output_dir(const Common& c) {
    if (!c.out_dir.empty()) return c.out_dir;
    if (const char* env = std::getenv("TCLREG_OUT_DIR"); env && *env) return env;
    return "tclreg-out";
}

engine::Scenario scenario_for(const Common& c) {
    auto cfg = engine::load_scenario_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.threads) cfg.threads = *c.threads;
    return engine::make_scenario(std::move(cfg));
}

results::RunManifest manifest_for(const std::string& command, const engine::Scenario& s) {
    results::RunManifest m;
    m.command = command;
    m.seed = s.config.seed;
    m.input_hash = s.input_hash;
    return m;
}

void add_common(CLI::App* sub, Common& c, bool with_out) {
    sub->add_option("config", c.config, "Scenario config (JSON)")->required();
    if (with_out) sub->add_option("-o,--out", c.out_dir, "Output directory (default $TCLREG_OUT_DIR or ./tclreg-out)");
    sub->add_option("--seed", c.seed, "Override the config seed");
    sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
}

bool looks_like_feeder(const fs::path& path) {
    std::ifstream in(path);
    try {
        const auto j = nlohmann::json::parse(in);
        return j.is_object() && j.contains("schema_version");
    } catch (const nlohmann::json::exception&) {
        return true;  // let the feeder loader report the parse error
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Distribution feeder co-simulation of air conditioners providing regulation", "tclreg"};
    app.require_subcommand(1);
    app.set_version_flag("--version", results::kVersion);

    Common run_opts, ev_opts, rand_opts, peak_opts, sens_opts;
    std::string case_kind, ev_mode;
    std::size_t trials = 0;

    auto* run_cmd = app.add_subcommand("run", "Warm-up, base hour and (optionally) regulation hour");
    add_common(run_cmd, run_opts, true);
    run_cmd->add_option("--case", case_kind, "Override the case: base or regulation")
        ->check(CLI::IsMember({"base", "regulation"}));
    run_cmd->add_option("--ev", ev_mode, "Override the EV overlay: none, charge, discharge")
        ->check(CLI::IsMember({"none", "charge", "discharge"}));

    auto* ev_cmd = app.add_subcommand("study-ev", "EV+, No-EV and EV- trials with the over-limit table");
    add_common(ev_cmd, ev_opts, true);

    auto* rand_cmd = app.add_subcommand("study-random", "Randomized trials and the aging-count distribution");
    add_common(rand_cmd, rand_opts, true);
    rand_cmd->add_option("--trials", trials, "Number of trials (default from config)");

    auto* peak_cmd = app.add_subcommand("find-peak", "Uncontrolled scan for the peak-load hour");
    add_common(peak_cmd, peak_opts, false);

    std::string feeder_path, weather_path, pop_config, pop_out;
    double target_kva = 0.0;
    std::optional<std::uint64_t> pop_seed;
    auto* pop_cmd = app.add_subcommand("populate", "Attach randomized houses to reach a target peak");
    pop_cmd->add_option("--feeder", feeder_path, "Input feeder (JSON)")->required();
    pop_cmd->add_option("--weather", weather_path, "Weather CSV (time_s, temp_c)")->required();
    pop_cmd->add_option("--target-kva", target_kva, "Target peak feeder-head apparent power")->required();
    pop_cmd->add_option("--config", pop_config, "Populator config (JSON)");
    pop_cmd->add_option("-o,--out", pop_out, "Output feeder path")->required();
    pop_cmd->add_option("--seed", pop_seed, "Override the populator seed");

    std::string line, phase;
    double pf = 0.97;
    auto* sens_cmd = app.add_subcommand("sensitivity", "Voltage sensitivity of a line over a base-case hour");
    add_common(sens_cmd, sens_opts, false);
    sens_cmd->add_option("--line", line, "Monitored line id (default: from the config)");
    sens_cmd->add_option("--phase", phase, "Phase of the monitored line")->check(CLI::IsMember({"A", "B", "C"}));
    sens_cmd->add_option("--pf", pf, "Power factor of the regulation power")->check(CLI::Range(0.0, 1.0));

    std::string validate_path;
    auto* val_cmd = app.add_subcommand("validate", "Check a feeder or scenario config");
    val_cmd->add_option("path", validate_path, "Feeder JSON or scenario config")->required();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << results::kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error[usage]: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*run_cmd) {
            auto sc = scenario_for(run_opts);
            if (!case_kind.empty())
                sc.config.case_kind = case_kind == "base" ? engine::CaseKind::base : engine::CaseKind::regulation;
            if (ev_mode == "none") sc.config.ev_mode = engine::EvMode::none;
            if (ev_mode == "charge") sc.config.ev_mode = engine::EvMode::charge;
            if (ev_mode == "discharge") sc.config.ev_mode = engine::EvMode::discharge;
            const auto trial = engine::run_case(sc);
            const auto dir = output_dir(run_opts);
            results::emit(trial, manifest_for("run", sc), dir);
            const auto vb = results::summarize_voltage_variation(trial.base);
            out << "test hour start " << results::format_double(trial.test_hour_start_s) << " s\n";
            out << "base:       mean std dev " << results::format_double(vb.mean_std_dev) << " p.u., range "
                << results::format_double(vb.total_range) << " p.u., violations " << trial.base.violations.size()
                << "\n";
            if (trial.regulation) {
                const auto vr = results::summarize_voltage_variation(*trial.regulation);
                out << "regulation: mean std dev " << results::format_double(vr.mean_std_dev) << " p.u., range "
                    << results::format_double(vr.total_range) << " p.u., violations "
                    << trial.regulation->violations.size() << "\n";
            }
            out << "wrote " << dir.string() << "\n";
        } else if (*ev_cmd) {
            const auto sc = scenario_for(ev_opts);
            const auto study = engine::run_ev_study(sc);
            const auto dir = output_dir(ev_opts);
            results::emit_ev_study(study, manifest_for("study-ev", sc), dir);
            out << "trial   any_base  any_reg  sust_base  sust_reg  sensitivity\n";
            static const char* names[] = {"EV+", "No-EV", "EV-"};
            for (std::size_t i = 0; i < 3; ++i) {
                const auto& r = study.table[i];
                out << names[i] << "  " << results::format_double(r.any_base_pct) << "  "
                    << results::format_double(r.any_reg_pct) << "  " << results::format_double(r.sustained_base_pct)
                    << "  " << results::format_double(r.sustained_reg_pct) << "  "
                    << results::format_double(r.mean_sensitivity) << "\n";
            }
            out << "wrote " << dir.string() << "\n";
        } else if (*rand_cmd) {
            const auto sc = scenario_for(rand_opts);
            const auto study = engine::run_randomization_study(sc, trials ? trials : sc.config.n_trials);
            const auto dir = output_dir(rand_opts);
            results::emit_randomization_study(study, manifest_for("study-random", sc), dir);
            const auto& s = study.summary;
            out << "p_hat " << results::format_double(s.p_hat) << "\n";
            out << "chi_square " << results::format_double(s.chi_square) << " (dof " << s.chi_square_dof
                << ", 95% critical " << results::format_double(s.chi_square_critical_95) << ")\n";
            out << "duty_correlation " << results::format_double(s.duty_correlation) << "\n";
            out << "wrote " << dir.string() << "\n";
        } else if (*peak_cmd) {
            const auto sc = scenario_for(peak_opts);
            engine::ScanOptions opt;
            opt.start_s = sc.config.scan_start_s;
            opt.end_s = sc.config.scan_end_s;
            opt.seed = sc.config.seed;
            const auto peak = engine::find_peak_hour(sc.feeder, sc.weather, opt);
            out << "hour_start_s,mean_kva\n";
            for (std::size_t h = 0; h < peak.hourly_mean_kva.size(); ++h)
                out << results::format_double(peak.window_start_s + 3600.0 * static_cast<double>(h)) << ","
                    << results::format_double(peak.hourly_mean_kva[h]) << "\n";
            out << "peak " << results::format_double(peak.start_s) << " s, "
                << results::format_double(peak.mean_kva) << " kVA\n";
        } else if (*pop_cmd) {
            auto cfg = pop_config.empty() ? netmodel::PopulatorConfig{} : netmodel::load_populator_config(pop_config);
            if (pop_seed) cfg.seed = *pop_seed;
            const auto feeder = netmodel::load_feeder(feeder_path);
            const auto weather = load_series_csv(weather_path, "time_s", "temp_c");
            const auto res = netmodel::populate_houses(feeder, target_kva, cfg, weather);
            netmodel::save_feeder(res.feeder, pop_out);
            out << "added " << res.houses_added << " houses in " << res.iterations << " iterations; peak "
                << results::format_double(res.achieved_peak_kva) << " kVA\n";
        } else if (*sens_cmd) {
            auto cfg = engine::load_scenario_config(sens_opts.config);
            if (sens_opts.seed) cfg.seed = *sens_opts.seed;
            if (sens_opts.threads) cfg.threads = *sens_opts.threads;
            if (!line.empty()) cfg.monitored_line = line;
            if (!phase.empty()) cfg.monitored_phase = *netmodel::parse_phase(phase);
            const auto sc = engine::make_scenario(std::move(cfg));
            const auto trial = engine::run_trial(sc, engine::CaseKind::base, sc.config.seed, sc.config.ev_mode);
            const auto terms = engine::monitored_sensitivity(trial.base, pf);
            out << "t_s,q_term,p_term,v_term,total\n";
            for (std::size_t k = 0; k < terms.size(); ++k)
                out << results::format_double(trial.base.monitored_line[k].t_s) << ","
                    << results::format_double(terms[k].q_term) << "," << results::format_double(terms[k].p_term)
                    << "," << results::format_double(terms[k].v_term) << ","
                    << results::format_double(terms[k].total()) << "\n";
        } else if (*val_cmd) {
            if (looks_like_feeder(validate_path)) {
                const auto f = netmodel::load_feeder(validate_path);
                out << "ok: feeder '" << f.name << "' with " << f.buses.size() << " buses, " << f.lines.size()
                    << " lines, " << f.transformers.size() << " transformers, " << f.houses.size() << " houses\n";
            } else {
                const auto sc = engine::load_scenario(validate_path);
                out << "ok: scenario with feeder '" << sc.feeder.name << "', " << sc.weather.t_s.size()
                    << " weather samples, " << sc.signal.t_s.size() << " signal samples\n";
            }
        }
    } catch (const Error& e) {
        err << "error[" << e.kind() << "]: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error[internal]: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

}  // namespace tclreg::cli
