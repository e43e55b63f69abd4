#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "support.hpp"
#include "tclreg/error.hpp"
#include "tclreg/results.hpp"

using namespace tclreg;
using namespace tclreg::results;

namespace {

std::map<std::string, std::string> tree(const std::filesystem::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = testing::slurp(e.path());
    return out;
}

}  // namespace

TEST_CASE("empty violation log is a header-only CSV") {
    CHECK(violations_csv({}) == "component_id,kind,start_s,end_s,worst_value\n");
    const auto t = parse_csv(violations_csv({}));
    CHECK(t.header.size() == 5);
    CHECK(t.rows.empty());
}

TEST_CASE("doubles round-trip exactly through text") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int k = 0; k < 10000; ++k) {
        const double v = u(gen) * std::pow(10.0, static_cast<int>(gen() % 20) - 10);
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.0) == "0");
    CHECK(format_double(std::nan("")) == "nan");
    CHECK(format_double(-INFINITY) == "-inf");
}

TEST_CASE("histogram counts every finite sample") {
    const std::vector<std::vector<double>> s = {{1.0, 1.001, 1.0035, 0.999}, {1.01, NAN}, {}};
    const auto bins = histogram(s, 0.002);
    std::size_t total = 0;
    for (const auto& b : bins) {
        total += b.count;
        CHECK(b.hi - b.lo == doctest::Approx(0.002));
    }
    CHECK(total == 5);
    CHECK(histogram({}, 0.002).empty());
    CHECK_THROWS_AS(histogram(s, 0.0), DomainError);
}

TEST_CASE("voltage variation summary") {
    engine::CaseResult r;
    CHECK(summarize_voltage_variation(r).mean_std_dev == 0.0);
    CHECK(summarize_voltage_variation(r).total_range == 0.0);
    r.nodes = {{"a", 1.0, 0.01, 0.98, 1.02}, {"b", 1.0, 0.03, 0.95, 1.04}};
    const auto v = summarize_voltage_variation(r);
    CHECK(v.mean_std_dev == doctest::Approx(0.02));
    CHECK(v.total_range == doctest::Approx(0.09));
}

TEST_CASE("emitted trial parses back and re-emits byte for byte") {
    const auto sc = engine::load_scenario(testing::data("small/scenario-tiny.json"));
    const auto tr = engine::run_case(sc);
    RunManifest m{"test", sc.config.seed, sc.input_hash};
    const auto a = testing::scratch("emit-a"), b = testing::scratch("emit-b");
    emit(tr, m, a);
    emit(tr, m, b);
    const auto ta = tree(a), tb = tree(b);
    CHECK(ta.size() >= 14);
    CHECK(ta == tb);
    emit(tr, m, a);  // overwrite in place
    CHECK(tree(a) == ta);

    // Series values come back exactly.
    const auto series = read_csv(a / "regulation" / "series.csv");
    REQUIRE(series.rows.size() == tr.regulation->steps.size());
    const auto col = series.column("p_ac_kw");
    double worst = 0.0;
    for (std::size_t k = 0; k < series.rows.size(); ++k)
        worst = std::max(worst, std::abs(std::stod(series.rows[k][col]) - tr.regulation->steps[k].p_ac_kw));
    CHECK(worst <= 1e-12);

    const auto nodes = read_csv(a / "base" / "node_voltages.csv");
    CHECK(nodes.rows.size() == tr.base.nodes.size());
    const auto hist = read_csv(a / "base" / "voltage_histogram.csv");
    std::size_t total = 0;
    for (const auto& row : hist.rows) total += std::stoul(row[hist.column("count")]);
    CHECK(total == tr.base.nodes.size() * tr.base.steps.size());
}

TEST_CASE("csv reader") {
    const auto t = parse_csv("a,b\n1,2\n3,4\n");
    CHECK(t.column("b") == 1);
    CHECK(t.rows.size() == 2);
    CHECK_THROWS(t.column("c"));
    CHECK_THROWS_AS(read_csv(testing::data("does-not-exist.csv")), IoError);
}
