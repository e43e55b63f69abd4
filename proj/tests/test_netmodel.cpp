#include <doctest.h>

#include <functional>
#include <random>
#include <set>

#include "support.hpp"
#include "tclreg/engine.hpp"
#include "tclreg/error.hpp"
#include "tclreg/netmodel.hpp"
#include "tclreg/populate.hpp"

using namespace tclreg;
using namespace tclreg::netmodel;

namespace {

// Counts simple paths from the slack to every bus over the undirected graph.
// Radial iff every bus has exactly one.
bool radial_by_path_count(const FeederModel& f) {
    const std::size_t n = f.buses.size();
    std::vector<std::vector<std::size_t>> adj(n);
    auto link = [&](const std::string& a, const std::string& b) {
        const auto ia = *f.bus_index(a), ib = *f.bus_index(b);
        adj[ia].push_back(ib);
        adj[ib].push_back(ia);
    };
    for (const auto& l : f.lines) link(l.from_bus, l.to_bus);
    for (const auto& x : f.transformers) link(x.primary_bus, x.secondary_bus);
    std::vector<int> paths(n, 0);
    std::vector<char> on_path(n, 0);
    std::function<void(std::size_t)> dfs = [&](std::size_t u) {
        ++paths[u];
        on_path[u] = 1;
        for (std::size_t v : adj[u])
            if (!on_path[v]) dfs(v);
        on_path[u] = 0;
    };
    dfs(*f.bus_index(f.slack_bus_id));
    for (int p : paths)
        if (p != 1) return false;
    return true;
}

bool radial_by_solver(const FeederModel& f) {
    try {
        build_topology(f);
        return true;
    } catch (const TopologyError&) {
        return false;
    }
}

FeederModel random_graph(std::mt19937_64& gen, std::size_t n, int extra_edges, bool drop_edge) {
    FeederModel f;
    f.name = "random";
    f.nominal_voltage_v = 7200.0;
    f.slack_bus_id = "b0";
    for (std::size_t i = 0; i < n; ++i) f.buses.push_back({"b" + std::to_string(i), PhaseSet::all(), false});
    auto add = [&](std::size_t a, std::size_t b) {
        LineSegment l;
        l.id = "l" + std::to_string(f.lines.size());
        l.from_bus = "b" + std::to_string(a);
        l.to_bus = "b" + std::to_string(b);
        l.phases = PhaseSet::all();
        l.z_ohm = {Complex(0.1, 0.2), Complex(0.1, 0.2), Complex(0.1, 0.2)};
        l.ampacity_a = 100.0;
        f.lines.push_back(l);
    };
    for (std::size_t i = 1; i < n; ++i) add(std::uniform_int_distribution<std::size_t>(0, i - 1)(gen), i);
    for (int e = 0; e < extra_edges; ++e) {
        std::size_t a = gen() % n, b = gen() % n;
        if (a == b) b = (b + 1) % n;
        add(a, b);
    }
    if (drop_edge && !f.lines.empty()) f.lines.erase(f.lines.begin() + static_cast<long>(gen() % f.lines.size()));
    return f;
}

}  // namespace

TEST_CASE("two-bus feeder loads with the slack first") {
    const auto f = load_feeder(testing::data("small/two_bus.json"));
    CHECK(f.lines.size() == 1);
    CHECK(*f.bus_index(f.slack_bus_id) == 0);
    CHECK(validate(f).empty());
}

TEST_CASE("cycle is reported with its buses") {
    try {
        load_feeder(testing::data("small/cycle3.json"));
        FAIL("expected a topology error");
    } catch (const TopologyError& e) {
        const std::set<std::string> got(e.cycle().begin(), e.cycle().end());
        CHECK(got == std::set<std::string>{"src", "b1", "b2"});
    }
}

TEST_CASE("disconnected buses are reported") {
    CHECK_THROWS_AS(load_feeder(testing::data("small/islanded.json")), TopologyError);
}

TEST_CASE("shipped synthetic feeder loads cleanly") {
    const auto f = load_feeder(testing::data("synth-r1.json"));
    CHECK(f.houses.size() == 120);
    CHECK(f.transformers.size() == 40);
    CHECK(validate(f).empty());
    std::size_t service = 0;
    for (const auto& b : f.buses) service += b.is_service_node;
    CHECK(service == 40);
}

TEST_CASE("save then load gives back the same model") {
    for (const char* name : {"synth-r1.json", "small/oracle8.json", "small/tiny.json", "small/two_bus.json"}) {
        const auto f = load_feeder(testing::data(name));
        const auto dir = testing::scratch("roundtrip");
        save_feeder(f, dir / "f.json");
        const auto g = load_feeder(dir / "f.json");
        CHECK(f == g);
        CHECK(feeder_to_json(f) == feeder_to_json(g));
    }
}

TEST_CASE("radiality agrees with a path-count oracle") {
    for (const char* name : {"small/two_bus.json", "small/cycle3.json", "small/islanded.json", "small/oracle8.json",
                             "small/tiny.json"}) {
        const auto f = feeder_from_json(testing::slurp(testing::data(name)));
        CHECK_MESSAGE(radial_by_path_count(f) == radial_by_solver(f), name);
    }
    std::mt19937_64 gen(99);
    int radial = 0, meshed = 0;
    for (int k = 0; k < 200; ++k) {
        const std::size_t n = 2 + gen() % 49;
        const int extra = static_cast<int>(gen() % 3);
        const bool drop = gen() % 4 == 0;
        const auto f = random_graph(gen, n, extra, drop);
        const bool oracle = radial_by_path_count(f);
        CHECK(oracle == radial_by_solver(f));
        (oracle ? radial : meshed)++;
    }
    CHECK(radial > 20);
    CHECK(meshed > 20);
}

TEST_CASE("schema errors name the field and location") {
    auto text = testing::slurp(testing::data("small/two_bus.json"));
    const auto pos = text.find("\"ampacity_a\"");
    REQUIRE(pos != std::string::npos);
    auto bad = text;
    bad.replace(pos, 12, "\"ampacity_x\"");
    try {
        feeder_from_json(bad);
        FAIL("expected a schema error");
    } catch (const SchemaError& e) {
        CHECK(e.field() == "ampacity_x");
        CHECK(e.location() == "/lines/0/ampacity_x");
    }
    CHECK_THROWS_AS(feeder_from_json("{not json"), SchemaError);
    CHECK_THROWS_AS(feeder_from_json("{\"schema_version\": 2}"), SchemaError);
}

TEST_CASE("invariant violations are collected") {
    auto f = load_feeder(testing::data("small/two_bus.json"));
    f.lines[0].ampacity_a = 0.0;
    f.lines[0].z_ohm[0] = Complex(-1.0, 0.1);
    f.zip_loads[0].real = {0.5, 0.5, 0.5};
    const auto issues = validate(f);
    CHECK(issues.size() == 3);
    CHECK_THROWS_AS(require_valid(f), ModelError);
}

TEST_CASE("transformer ratings outside the table need explicit thermal parameters") {
    auto f = load_feeder(testing::data("small/tiny.json"));
    f.transformers[0].rating_kva = 250.0;
    CHECK_FALSE(validate(f).empty());
    f.transformers[0].thermal = transformer::XfmrThermalParams{};
    CHECK(validate(f).empty());
}

TEST_CASE("phase set parsing") {
    CHECK(PhaseSet::parse("ABC")->count() == 3);
    CHECK(PhaseSet::parse("CA")->to_string() == "AC");
    CHECK_FALSE(PhaseSet::parse("AA"));
    CHECK_FALSE(PhaseSet::parse(""));
    CHECK_FALSE(PhaseSet::parse("D"));
}

TEST_CASE("populator: target already met adds nothing") {
    const auto f = load_feeder(testing::data("small/tiny.json"));
    const auto weather = load_series_csv(testing::data("weather-3day.csv"), "time_s", "temp_c");
    PopulatorConfig c;
    const double peak = engine::find_peak_hour(f, weather, {}).mean_kva;
    const auto r = populate_houses(f, peak / 0.95, c, weather);
    CHECK(r.houses_added == 0);
    CHECK(r.feeder == f);
}

TEST_CASE("populator: empty network reaches the band and is deterministic") {
    auto f = load_feeder(testing::data("small/tiny.json"));
    f.houses.clear();
    const auto weather = load_series_csv(testing::data("weather-3day.csv"), "time_s", "temp_c");
    PopulatorConfig c;
    c.seed = 3;
    const auto r = populate_houses(f, 100.0, c, weather);
    CHECK(r.houses_added > 0);
    const double oracle = engine::find_peak_hour(r.feeder, weather, {std::nullopt, std::nullopt, 30.0, c.seed}).mean_kva;
    CHECK(oracle >= 90.0);
    CHECK(oracle <= 100.0);
    const auto again = populate_houses(f, 100.0, c, weather);
    CHECK(feeder_to_json(again.feeder) == feeder_to_json(r.feeder));
    // Even split across phases that have transformers.
    std::size_t a = 0, b = 0;
    for (const auto& h : r.feeder.houses) (h.phase == Phase::A ? a : b)++;
    CHECK((a > b ? a - b : b - a) <= 1);
}

TEST_CASE("populator: unreachable band raises a sizing error") {
    const auto f = load_feeder(testing::data("small/tiny.json"));
    const auto weather = load_series_csv(testing::data("weather-3day.csv"), "time_s", "temp_c");
    PopulatorConfig c;
    CHECK_THROWS_AS(populate_houses(f, 1.0, c, weather), SizingError);
    c.max_iterations = 1;
    c.band_lo = 0.999;
    c.band_hi = 1.0;
    CHECK_THROWS_AS(populate_houses(f, 80.0, c, weather), SizingError);
}

TEST_CASE("house draws are pure in seed and key") {
    PopulatorConfig c;
    c.seed = 17;
    const auto a = draw_house(c, 5, "h5", "s1", Phase::A);
    const auto b = draw_house(c, 5, "h5", "s1", Phase::A);
    CHECK(a == b);
    const auto d = draw_house(c, 6, "h6", "s1", Phase::A);
    CHECK_FALSE(a.hvac == d.hvac);
    CHECK(a.hvac.t_low_c < a.hvac.t_high_c);
    CHECK(a.hvac.t_high_c - a.hvac.t_low_c >= 0.5 - 1e-12);
    CHECK(a.hvac.t_high_c - a.hvac.t_low_c <= 1.5 + 1e-12);
    CHECK(a.hvac.p_on_kw == doctest::Approx(a.hvac.q_ac_kw / c.cop));
}
