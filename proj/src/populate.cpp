#include "tclreg/populate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tclreg/engine.hpp"
#include "tclreg/error.hpp"
#include "tclreg/rng.hpp"

namespace tclreg::netmodel {

namespace {

using nlohmann::json;

Range read_range(const json& j, const char* key, Range fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw SchemaError(key, std::string("/") + key, "expected [lo, hi]");
    Range r{v[0].get<double>(), v[1].get<double>()};
    if (!(r.lo <= r.hi)) throw SchemaError(key, std::string("/") + key, "range requires lo <= hi");
    return r;
}

double read_number(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw SchemaError(key, std::string("/") + key, "expected a number");
    return j.at(key).get<double>();
}

ZipFractions read_fractions(const json& j, const char* key, ZipFractions fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 3) throw SchemaError(key, std::string("/") + key, "expected [z, i, p]");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

double draw(rng::Sequence& s, Range r) { return s.uniform(r.lo, r.hi); }

}  // namespace

PopulatorConfig load_populator_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open populator config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError("", "/", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("", "/", "expected an object");
    static const char* known[] = {"seed", "c_air_kj_per_c", "c_mass_kj_per_c", "ua_kw_per_c", "hm_kw_per_c",
                                  "r_gain", "setpoint_c", "deadband_c", "gain_kw", "design_temp_c",
                                  "sizing_factor", "cop", "ac_power_factor", "zip_kva", "zip_power_factor",
                                  "zip_real", "zip_reactive", "band_lo", "band_hi", "max_iterations",
                                  "scan_dt_s"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) ==
            std::end(known))
            throw SchemaError(it.key(), "/" + it.key(), "unknown field");

    PopulatorConfig c;
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw SchemaError("seed", "/seed", "expected a non-negative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    c.c_air_kj_per_c = read_range(j, "c_air_kj_per_c", c.c_air_kj_per_c);
    c.c_mass_kj_per_c = read_range(j, "c_mass_kj_per_c", c.c_mass_kj_per_c);
    c.ua_kw_per_c = read_range(j, "ua_kw_per_c", c.ua_kw_per_c);
    c.hm_kw_per_c = read_range(j, "hm_kw_per_c", c.hm_kw_per_c);
    c.r_gain = read_number(j, "r_gain", c.r_gain);
    c.setpoint_c = read_range(j, "setpoint_c", c.setpoint_c);
    c.deadband_c = read_range(j, "deadband_c", c.deadband_c);
    c.gain_kw = read_range(j, "gain_kw", c.gain_kw);
    c.design_temp_c = read_number(j, "design_temp_c", c.design_temp_c);
    c.sizing_factor = read_range(j, "sizing_factor", c.sizing_factor);
    c.cop = read_number(j, "cop", c.cop);
    c.ac_power_factor = read_number(j, "ac_power_factor", c.ac_power_factor);
    c.zip_kva = read_range(j, "zip_kva", c.zip_kva);
    c.zip_power_factor = read_number(j, "zip_power_factor", c.zip_power_factor);
    c.zip_real = read_fractions(j, "zip_real", c.zip_real);
    c.zip_reactive = read_fractions(j, "zip_reactive", c.zip_reactive);
    c.band_lo = read_number(j, "band_lo", c.band_lo);
    c.band_hi = read_number(j, "band_hi", c.band_hi);
    c.max_iterations = static_cast<int>(read_number(j, "max_iterations", c.max_iterations));
    c.scan_dt_s = read_number(j, "scan_dt_s", c.scan_dt_s);
    if (!(c.band_lo > 0.0 && c.band_lo < c.band_hi)) throw SchemaError("band_lo", "/band_lo", "requires 0 < band_lo < band_hi");
    if (!(c.cop > 0.0)) throw SchemaError("cop", "/cop", "must be positive");
    if (c.max_iterations < 1) throw SchemaError("max_iterations", "/max_iterations", "must be at least 1");
    return c;
}

House draw_house(const PopulatorConfig& c, std::uint64_t key, std::string id, std::string bus, Phase phase) {
    rng::Sequence s(c.seed, rng::Stream::house_params, key);
    House h;
    h.id = std::move(id);
    h.bus = std::move(bus);
    h.phase = phase;
    auto& p = h.hvac;
    p.c_air_kj_per_c = draw(s, c.c_air_kj_per_c);
    p.c_mass_kj_per_c = draw(s, c.c_mass_kj_per_c);
    p.ua_kw_per_c = draw(s, c.ua_kw_per_c);
    p.hm_kw_per_c = draw(s, c.hm_kw_per_c);
    p.r_gain = c.r_gain;
    const double setpoint = draw(s, c.setpoint_c);
    const double band = draw(s, c.deadband_c);
    p.t_low_c = setpoint - 0.5 * band;
    p.t_high_c = setpoint + 0.5 * band;
    h.gain_kw = draw(s, c.gain_kw);
    const double sizing = draw(s, c.sizing_factor);
    p.q_ac_kw = sizing * (p.ua_kw_per_c * (c.design_temp_c - setpoint) + h.gain_kw);
    p.p_on_kw = p.q_ac_kw / c.cop;
    p.power_factor = c.ac_power_factor;
    h.zip_kva = draw(s, c.zip_kva);
    h.zip_power_factor = c.zip_power_factor;
    h.zip_real = c.zip_real;
    h.zip_reactive = c.zip_reactive;
    return h;
}

namespace {

/// Feeder with `n` generated houses added on top of the original ones.
FeederModel with_houses(const FeederModel& base, std::size_t n, const PopulatorConfig& c) {
    FeederModel f = base;
    std::array<std::vector<std::size_t>, 3> by_phase;
    for (std::size_t t = 0; t < f.transformers.size(); ++t) by_phase[idx(f.transformers[t].phase)].push_back(t);
    std::vector<Phase> phases;
    for (Phase p : kAllPhases)
        if (!by_phase[idx(p)].empty()) phases.push_back(p);
    if (phases.empty()) throw SizingError("feeder has no distribution transformers to attach houses to", 0.0);

    // Even split across phases, then largest-remainder split by planning load.
    std::vector<std::size_t> per_xfmr(f.transformers.size(), 0);
    for (std::size_t k = 0; k < phases.size(); ++k) {
        const std::size_t share = n / phases.size() + (k < n % phases.size() ? 1 : 0);
        const auto& xs = by_phase[idx(phases[k])];
        double total = 0.0;
        for (std::size_t t : xs) total += f.transformers[t].planning_kva;
        std::vector<std::pair<double, std::size_t>> rem;
        std::size_t given = 0;
        for (std::size_t t : xs) {
            const double w = total > 0.0 ? f.transformers[t].planning_kva / total : 1.0 / static_cast<double>(xs.size());
            const double exact = w * static_cast<double>(share);
            per_xfmr[t] = static_cast<std::size_t>(std::floor(exact));
            given += per_xfmr[t];
            rem.push_back({-(exact - std::floor(exact)), t});
        }
        std::sort(rem.begin(), rem.end());
        for (std::size_t r = 0; given < share; ++r, ++given) ++per_xfmr[rem[r % rem.size()].second];
    }

    const std::size_t existing = f.houses.size();
    std::size_t key = existing;
    for (std::size_t t = 0; t < f.transformers.size(); ++t) {
        const auto& x = f.transformers[t];
        for (std::size_t k = 0; k < per_xfmr[t]; ++k, ++key)
            f.houses.push_back(draw_house(c, key, "h" + std::to_string(key), x.secondary_bus, x.phase));
    }
    return f;
}

double simulated_peak(const FeederModel& f, const PopulatorConfig& c, const TimeSeries& weather) {
    engine::ScanOptions opt;
    opt.dt_s = c.scan_dt_s;
    opt.seed = c.seed;
    return engine::find_peak_hour(f, weather, opt).mean_kva;
}

}  // namespace

PopulateResult populate_houses(const FeederModel& feeder, double target, const PopulatorConfig& c,
                               const TimeSeries& weather) {
    if (!(target > 0.0)) throw SizingError("target peak must be positive", 0.0);
    require_valid(feeder);
    const double lo = c.band_lo * target;
    const double hi = c.band_hi * target;
    const double aim = 0.5 * (lo + hi);

    const double base_peak = simulated_peak(feeder, c, weather);
    if (base_peak > hi)
        throw SizingError("feeder already exceeds the target peak without added houses", base_peak);
    PopulateResult out;
    if (base_peak >= lo) {
        out.feeder = feeder;
        out.achieved_peak_kva = base_peak;
        return out;
    }

    // Secant iteration on the number of houses; the peak is close to linear in it.
    double n_prev = 0.0;
    double p_prev = base_peak;
    double n = std::max(1.0, std::round((aim - base_peak) / 4.0));
    for (int it = 1; it <= c.max_iterations; ++it) {
        const auto count = static_cast<std::size_t>(n);
        FeederModel f = with_houses(feeder, count, c);
        const double peak = simulated_peak(f, c, weather);
        out.iterations = it;
        out.achieved_peak_kva = peak;
        if (peak >= lo && peak <= hi) {
            out.feeder = std::move(f);
            out.houses_added = count;
            return out;
        }
        double slope = (peak - p_prev) / (n - n_prev);
        if (!(slope > 0.0)) slope = std::max(peak / n, 1e-3);
        double next = std::round(n + (aim - peak) / slope);
        next = std::clamp(next, 1.0, 4.0 * n + 10.0);
        if (next == n) next = peak < lo ? n + 1.0 : std::max(1.0, n - 1.0);
        n_prev = n;
        p_prev = peak;
        n = next;
    }
    throw SizingError("could not bring the simulated peak into [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "] kVA in " + std::to_string(c.max_iterations) + " iterations",
                      out.achieved_peak_kva);
}

}  // namespace tclreg::netmodel
