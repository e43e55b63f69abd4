#include "tclreg/results.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tclreg/error.hpp"

namespace tclreg::results {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw NumericError("cannot format number");
    return std::string(buf, ptr);
}

std::vector<HistogramBin> histogram(const std::vector<std::vector<double>>& series, double width) {
    if (!(width > 0.0)) throw DomainError("histogram bin width must be positive");
    std::map<long long, std::size_t> counts;
    for (const auto& s : series)
        for (double v : s)
            if (std::isfinite(v)) ++counts[static_cast<long long>(std::floor(v / width))];
    std::vector<HistogramBin> out;
    if (counts.empty()) return out;
    for (long long b = counts.begin()->first; b <= counts.rbegin()->first; ++b) {
        auto it = counts.find(b);
        out.push_back({static_cast<double>(b) * width, static_cast<double>(b + 1) * width,
                       it == counts.end() ? 0 : it->second});
    }
    return out;
}

VoltageVariation summarize_voltage_variation(const engine::CaseResult& r) {
    VoltageVariation v;
    if (r.nodes.empty()) return v;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& n : r.nodes) {
        v.mean_std_dev += n.std_dev;
        lo = std::min(lo, n.min);
        hi = std::max(hi, n.max);
    }
    v.mean_std_dev /= static_cast<double>(r.nodes.size());
    v.total_range = hi - lo;
    return v;
}

namespace {

class Csv {
public:
    explicit Csv(std::initializer_list<std::string> header) {
        bool first = true;
        for (const auto& h : header) {
            if (!first) os_ << ',';
            os_ << h;
            first = false;
        }
        os_ << '\n';
    }
    Csv& cell(const std::string& s) {
        sep();
        os_ << s;
        return *this;
    }
    Csv& cell(double v) { return cell(format_double(v)); }
    Csv& cell(std::size_t v) { return cell(std::to_string(v)); }
    Csv& cell(int v) { return cell(std::to_string(v)); }
    void end() {
        os_ << '\n';
        fresh_ = true;
    }
    std::string str() const { return os_.str(); }

private:
    void sep() {
        if (!fresh_) os_ << ',';
        fresh_ = false;
    }
    std::ostringstream os_;
    bool fresh_ = true;
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

ordered_json manifest_json(const RunManifest& m) {
    ordered_json j;
    j["command"] = m.command;
    j["seed"] = m.seed;
    j["input_hash"] = hex(m.input_hash);
    j["version"] = m.version;
    return j;
}

ordered_json jnum(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

void write_json(const fs::path& path, const ordered_json& j) { write_file(path, j.dump(2) + "\n"); }

double rms_tracking_error(const engine::CaseResult& r) {
    double ss = 0.0;
    std::size_t n = 0;
    for (const auto& s : r.steps) {
        if (std::isnan(s.p_des_kw)) continue;
        ss += (s.p_ac_kw - s.p_des_kw) * (s.p_ac_kw - s.p_des_kw);
        ++n;
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(ss / static_cast<double>(n));
}

void emit_case(const engine::CaseResult& r, const fs::path& dir) {
    make_dir(dir);
    {
        Csv c({"t_s", "ambient_c", "p_ac_kw", "p_des_kw", "u", "available", "switched", "head_kva"});
        for (const auto& s : r.steps) {
            c.cell(s.t_s).cell(s.ambient_c).cell(s.p_ac_kw).cell(s.p_des_kw).cell(s.u).cell(s.available)
                .cell(s.switched).cell(s.head_kva);
            c.end();
        }
        write_file(dir / "series.csv", c.str());
    }
    {
        Csv c({"node", "mean_pu", "std_dev_pu", "min_pu", "max_pu", "above_limit_any", "above_limit_sustained"});
        for (std::size_t i = 0; i < r.nodes.size(); ++i) {
            const auto& n = r.nodes[i];
            const auto flags = i < r.node_flags.size() ? r.node_flags[i] : monitor::NodeFlags{};
            c.cell(n.id).cell(n.mean).cell(n.std_dev).cell(n.min).cell(n.max)
                .cell(static_cast<int>(flags.above_cont_hi_any)).cell(static_cast<int>(flags.above_cont_hi_sustained));
            c.end();
        }
        write_file(dir / "node_voltages.csv", c.str());
    }
    write_file(dir / "violations.csv", violations_csv(r.violations));
    {
        Csv c({"t_s", "component_id", "event"});
        for (const auto& e : r.events) {
            c.cell(e.t_s).cell(e.component_id).cell(e.what);
            c.end();
        }
        write_file(dir / "events.csv", c.str());
    }
    {
        Csv c({"lo_pu", "hi_pu", "count", "density"});
        const auto bins = histogram(r.node_voltage, kVoltageBinWidthPu);
        std::size_t total = 0;
        for (const auto& b : bins) total += b.count;
        for (const auto& b : bins) {
            c.cell(b.lo).cell(b.hi).cell(b.count)
                .cell(static_cast<double>(b.count) / (static_cast<double>(total) * kVoltageBinWidthPu));
            c.end();
        }
        write_file(dir / "voltage_histogram.csv", c.str());
    }
    {
        Csv c({"t_s", "v_send_pu", "r_pu", "x_pu", "p_pu", "q_pu"});
        for (const auto& op : r.monitored_line) {
            c.cell(op.t_s).cell(op.line.v_send).cell(op.line.r).cell(op.line.x).cell(op.line.p).cell(op.line.q);
            c.end();
        }
        write_file(dir / "monitored_line.csv", c.str());
    }
    const auto var = summarize_voltage_variation(r);
    ordered_json s;
    s["case"] = std::string(engine::to_string(r.kind));
    s["ev_mode"] = std::string(engine::to_string(r.ev_mode));
    s["steps"] = r.steps.size();
    s["ac_energy_kwh"] = jnum(r.ac_energy_kwh);
    s["mean_node_std_dev_pu"] = jnum(var.mean_std_dev);
    s["total_voltage_range_pu"] = jnum(var.total_range);
    s["dispatch_commands"] = r.dispatch_commands;
    s["rms_tracking_error_kw"] = jnum(rms_tracking_error(r));
    s["violations"] = r.violations.size();
    s["over_limit_any_pct"] = jnum(engine::over_limit_any_pct(r));
    s["over_limit_sustained_pct"] = jnum(engine::over_limit_sustained_pct(r));
    write_json(dir / "summary.json", s);
}

}  // namespace

std::string violations_csv(const monitor::ViolationLog& log) {
    Csv c({"component_id", "kind", "start_s", "end_s", "worst_value"});
    for (const auto& v : log) {
        c.cell(v.component_id).cell(std::string(monitor::to_string(v.kind))).cell(v.start_s).cell(v.end_s)
            .cell(v.worst_value);
        c.end();
    }
    return c.str();
}

void emit(const engine::TrialResult& t, const RunManifest& m, const fs::path& out) {
    make_dir(out);
    auto j = manifest_json(m);
    j["trial_seed"] = t.trial_seed;
    j["test_hour_start_s"] = jnum(t.test_hour_start_s);
    j["baseline_kw"] = jnum(t.baseline_kw);
    j["mean_on_kw"] = jnum(t.mean_on_kw);
    j["ev_houses"] = t.ev_houses;
    write_json(out / "manifest.json", j);

    std::vector<double> delta;
    if (t.regulation) delta = t.delta_aging_pct();
    Csv c({"id", "rating_kva", "attached_acs", "mean_duty", "base_mean_load_pu", "base_mean_aging_rate",
           "base_max_hotspot_c", "reg_mean_load_pu", "reg_mean_aging_rate", "reg_max_hotspot_c", "delta_aging_pct"});
    for (std::size_t x = 0; x < t.base.transformers.size(); ++x) {
        const auto& b = t.base.transformers[x];
        c.cell(b.id).cell(b.rating_kva).cell(b.attached_acs).cell(b.mean_duty).cell(b.mean_load_pu)
            .cell(b.mean_aging_rate).cell(b.max_hotspot_c);
        if (t.regulation) {
            const auto& r = t.regulation->transformers[x];
            c.cell(r.mean_load_pu).cell(r.mean_aging_rate).cell(r.max_hotspot_c).cell(delta[x]);
        } else {
            c.cell("").cell("").cell("").cell("");
        }
        c.end();
    }
    write_file(out / "transformers.csv", c.str());
    emit_case(t.base, out / "base");
    if (t.regulation) emit_case(*t.regulation, out / "regulation");
}

void emit_ev_study(const engine::EvStudyResult& study, const RunManifest& m, const fs::path& out) {
    make_dir(out);
    write_json(out / "manifest.json", manifest_json(m));
    Csv c({"trial", "ev_mode", "any_base_pct", "any_reg_pct", "sustained_base_pct", "sustained_reg_pct",
           "mean_sensitivity", "mean_p_term", "mean_q_term", "std_dev_change_pu"});
    static const char* names[] = {"EV+", "No-EV", "EV-"};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& row = study.table[i];
        const auto& t = study.trials[i];
        const double change = t.regulation ? summarize_voltage_variation(*t.regulation).mean_std_dev -
                                                 summarize_voltage_variation(t.base).mean_std_dev
                                           : std::numeric_limits<double>::quiet_NaN();
        c.cell(names[i]).cell(std::string(engine::to_string(row.mode))).cell(row.any_base_pct).cell(row.any_reg_pct)
            .cell(row.sustained_base_pct).cell(row.sustained_reg_pct).cell(row.mean_sensitivity).cell(row.mean_p_term)
            .cell(row.mean_q_term).cell(change);
        c.end();
    }
    write_file(out / "ev_table.csv", c.str());
    for (std::size_t i = 0; i < 3; ++i)
        emit(study.trials[i], m, out / std::string(engine::to_string(study.table[i].mode)));
}

void emit_randomization_study(const engine::RandomizationResult& study, const RunManifest& m, const fs::path& out) {
    make_dir(out);
    const auto& s = study.summary;
    auto j = manifest_json(m);
    j["n_trials"] = study.trials.size();
    j["p_hat"] = jnum(s.p_hat);
    j["chi_square"] = jnum(s.chi_square);
    j["chi_square_dof"] = s.chi_square_dof;
    j["chi_square_critical_95"] = jnum(s.chi_square_critical_95);
    j["duty_correlation"] = jnum(s.duty_correlation);
    write_json(out / "manifest.json", j);
    {
        Csv c({"id", "increased_count", "mean_delta_aging_pct", "mean_duty"});
        for (std::size_t x = 0; x < s.transformer_ids.size(); ++x) {
            c.cell(s.transformer_ids[x]).cell(s.increased_counts[x]).cell(s.mean_delta_aging_pct[x]).cell(s.mean_duty[x]);
            c.end();
        }
        write_file(out / "transformers.csv", c.str());
    }
    {
        Csv c({"count", "observed", "expected_pmf", "expected"});
        for (std::size_t k = 0; k < s.observed.size(); ++k) {
            c.cell(k).cell(s.observed[k]).cell(s.expected_pmf[k]).cell(s.expected_counts[k]);
            c.end();
        }
        write_file(out / "distribution.csv", c.str());
    }
    for (std::size_t i = 0; i < study.trials.size(); ++i)
        emit(study.trials[i], m, out / ("trial_" + std::to_string(i)));
}

std::size_t CsvTable::column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(name, "csv", "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        for (char ch : line) {
            if (ch == ',') {
                cells.push_back(cell);
                cell.clear();
            } else {
                cell.push_back(ch);
            }
        }
        cells.push_back(cell);
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str());
}

}  // namespace tclreg::results
