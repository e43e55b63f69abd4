#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <random>

#include "support.hpp"
#include "tclreg/error.hpp"
#include "tclreg/netmodel.hpp"
#include "tclreg/powerflow.hpp"

using namespace tclreg;
using namespace tclreg::powerflow;
using netmodel::Complex;
using netmodel::FeederModel;
using netmodel::Phase;

namespace {

// Independent oracle: nodal current balance solved by Newton with a
// finite-difference Jacobian over real and imaginary parts.
struct NodalOracle {
    struct Node {
        std::size_t bus;
        std::size_t k;
    };
    struct Branch {
        int from = -1;  // -1: slack voltage source
        int to = 0;
        Complex z;
        double ratio = 1.0;  // V_to(open circuit) = V_from / ratio
    };

    std::vector<Node> nodes;
    std::map<std::pair<std::size_t, std::size_t>, int> node_of;
    std::vector<Branch> branches;
    std::vector<NodeLoad> loads;
    std::vector<Complex> slack_v;  // per phase

    NodalOracle(const FeederModel& f, const BusLoads& bl) {
        const auto topo = netmodel::build_topology(f);
        const double base = f.base_kva;
        const double deg = 2.0 * M_PI / 3.0;
        const Complex rot[3] = {1.0, std::polar(1.0, -deg), std::polar(1.0, deg)};
        for (int k = 0; k < 3; ++k) slack_v.push_back(f.slack_voltage_pu * rot[k]);

        // Base voltage by walking the tree.
        std::vector<double> vbase(f.buses.size(), f.nominal_voltage_v);
        std::vector<std::array<bool, 3>> fed(f.buses.size(), {false, false, false});
        for (int k = 0; k < 3; ++k) fed[topo.slack][k] = f.buses[topo.slack].phases.has(static_cast<Phase>(k));
        std::vector<std::array<int, 3>> src(f.buses.size(), {-1, -1, -1});
        for (std::size_t b : topo.order) {
            const auto& e = topo.parent_edge[b];
            if (!e) continue;
            const std::size_t up = topo.parent_bus[b];
            if (e->kind == netmodel::EdgeRef::Kind::line) {
                const auto& l = f.lines[e->index];
                if (l.from_bus != f.buses[up].id && l.to_bus != f.buses[up].id) FAIL("tree mismatch");
                bool open = false;
                for (const auto& fu : f.fuses)
                    if (fu.line == l.id && fu.open) open = true;
                vbase[b] = vbase[up];
                const double zb = vbase[up] * vbase[up] / (base * 1000.0);
                for (int k = 0; k < 3; ++k) {
                    const Phase p = static_cast<Phase>(k);
                    fed[b][k] = !open && fed[up][k] && l.phases.has(p) && f.buses[b].phases.has(p);
                    if (fed[b][k]) branches.push_back({-2 - static_cast<int>(up * 3 + k), static_cast<int>(b * 3 + k),
                                                       l.z_ohm[k] / zb, 1.0});
                }
            } else {
                const auto& x = f.transformers[e->index];
                const int k = static_cast<int>(netmodel::idx(x.phase));
                vbase[b] = x.secondary_voltage_v;
                fed[b][k] = fed[up][k];
                if (fed[b][k])
                    branches.push_back({-2 - static_cast<int>(up * 3 + k), static_cast<int>(b * 3 + k),
                                        x.z_pu * base / x.rating_kva, x.tap});
            }
        }
        for (std::size_t b = 0; b < f.buses.size(); ++b)
            for (std::size_t k = 0; k < 3; ++k)
                if (fed[b][k] && b != topo.slack) {
                    node_of[{b, k}] = static_cast<int>(nodes.size());
                    nodes.push_back({b, k});
                    NodeLoad l = bl[b][k];
                    l.constant_power /= base;
                    l.constant_current /= base;
                    l.constant_impedance /= base;
                    loads.push_back(l);
                }
        for (const auto& c : f.capacitors) {
            if (!c.on) continue;
            const std::size_t b = *f.bus_index(c.bus);
            for (std::size_t k = 0; k < 3; ++k)
                if (c.phases.has(static_cast<Phase>(k)) && node_of.count({b, k}))
                    loads[node_of[{b, k}]].constant_impedance += Complex(0.0, -c.kvar[k] / base);
        }
        // Resolve branch endpoints to node indices (-1 for slack).
        for (auto& br : branches) {
            const int code = -2 - br.from;
            const std::size_t up = static_cast<std::size_t>(code) / 3, k = static_cast<std::size_t>(code) % 3;
            br.from = up == topo.slack ? -1 - static_cast<int>(k) : node_of.at({up, k});
            const std::size_t b = static_cast<std::size_t>(br.to) / 3, kk = static_cast<std::size_t>(br.to) % 3;
            br.to = node_of.at({b, kk});
        }
    }

    Complex voltage(const std::vector<Complex>& v, int i) const { return i >= 0 ? v[i] : slack_v[-1 - i]; }

    Eigen::VectorXd residual(const Eigen::VectorXd& x) const {
        const std::size_t n = nodes.size();
        std::vector<Complex> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = {x[2 * i], x[2 * i + 1]};
        std::vector<Complex> inj(n);
        for (std::size_t i = 0; i < n; ++i) inj[i] = -std::conj(load_power_kva(loads[i], v[i]) / v[i]);
        for (const auto& br : branches) {
            const Complex i_sec = (voltage(v, br.from) / br.ratio - v[br.to]) / br.z;
            inj[br.to] += i_sec;
            if (br.from >= 0) inj[br.from] -= i_sec / br.ratio;
        }
        Eigen::VectorXd r(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            r[2 * i] = inj[i].real();
            r[2 * i + 1] = inj[i].imag();
        }
        return r;
    }

    std::vector<Complex> solve(const FeederModel& f) const {
        const std::size_t n = nodes.size();
        Eigen::VectorXd x(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            x[2 * i] = slack_v[nodes[i].k].real();
            x[2 * i + 1] = slack_v[nodes[i].k].imag();
        }
        (void)f;
        for (int it = 0; it < 50; ++it) {
            const Eigen::VectorXd r = residual(x);
            if (r.lpNorm<Eigen::Infinity>() < 1e-13) break;
            Eigen::MatrixXd j(2 * n, 2 * n);
            for (std::size_t c = 0; c < 2 * n; ++c) {
                Eigen::VectorXd xp = x, xm = x;
                xp[c] += 1e-7;
                xm[c] -= 1e-7;
                j.col(c) = (residual(xp) - residual(xm)) / 2e-7;
            }
            x -= j.fullPivLu().solve(r);
        }
        std::vector<Complex> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = {x[2 * i], x[2 * i + 1]};
        return v;
    }
};

BusLoads random_loads(const FeederModel& f, std::uint64_t seed, double scale_kva) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    BusLoads loads = empty_loads(f);
    for (std::size_t b = 0; b < f.buses.size(); ++b)
        for (std::size_t k = 0; k < 3; ++k) {
            if (!f.buses[b].phases.has(static_cast<Phase>(k))) continue;
            const double s = f.buses[b].is_service_node ? scale_kva * 0.05 : scale_kva;
            loads[b][k].constant_power = {s * u(gen), 0.4 * s * u(gen)};
            loads[b][k].constant_current = {s * u(gen), 0.3 * s * u(gen)};
            loads[b][k].constant_impedance = {s * u(gen), 0.2 * s * u(gen)};
        }
    return loads;
}

void compare_with_oracle(const FeederModel& f, const BusLoads& loads) {
    const auto sol = solve(f, loads);
    REQUIRE(sol.converged);
    const NodalOracle o(f, loads);
    const auto ref = o.solve(f);
    double worst = 0.0;
    for (std::size_t i = 0; i < o.nodes.size(); ++i)
        worst = std::max(worst, std::abs(sol.voltage_pu[o.nodes[i].bus][o.nodes[i].k] - ref[i]));
    CHECK(worst < 1e-8);

    // Residual of the swept solution in the oracle's own equations.
    Eigen::VectorXd x(2 * o.nodes.size());
    for (std::size_t i = 0; i < o.nodes.size(); ++i) {
        const Complex v = sol.voltage_pu[o.nodes[i].bus][o.nodes[i].k];
        x[2 * i] = v.real();
        x[2 * i + 1] = v.imag();
    }
    // Current residual scaled back to power at ~1 p.u.
    CHECK(o.residual(x).lpNorm<Eigen::Infinity>() < 10.0 * SolveOptions{}.tolerance_pu);
}

}  // namespace

TEST_CASE("no load gives the slack voltage everywhere") {
    const auto f = netmodel::load_feeder(testing::data("small/oracle8.json"));
    auto g = f;
    for (auto& c : g.capacitors) c.on = false;
    const auto sol = solve(g, empty_loads(g));
    const auto xa = *g.transformer_index("xa");
    for (std::size_t b = 0; b < g.buses.size(); ++b)
        for (std::size_t k = 0; k < 3; ++k) {
            const double m = std::abs(sol.voltage_pu[b][k]);
            if (m == 0.0) continue;
            const bool behind_xa = g.buses[b].id == g.transformers[xa].secondary_bus;
            const double want = g.slack_voltage_pu / (behind_xa ? g.transformers[xa].tap : 1.0);
            CHECK(m == doctest::Approx(want).epsilon(1e-12));
        }
    CHECK(sol.head_apparent_kva() < 1e-9);
}

TEST_CASE("two-bus closed form") {
    // r = x = 0.01 p.u., P = 0.5, Q = 0.1 p.u. at V_send = 1.
    const double vb = 2400.0, base = 1000.0;
    const double zb = vb * vb / (base * 1000.0);
    auto f = testing::two_bus(Complex(0.01, 0.01) * zb, vb);
    for (auto& b : f.buses) b.phases = {Phase::A};
    f.lines[0].phases = {Phase::A};
    f.slack_voltage_pu = 1.0;
    BusLoads loads = empty_loads(f);
    loads[1][0].constant_power = {500.0, 100.0};
    const auto sol = solve(f, loads, {1e-12, 100, true});
    const double v = std::abs(sol.voltage_pu[1][0]);
    // Exact receiving voltage from the quartic (no approximation of losses).
    const double b = 2.0 * (0.01 * 0.5 + 0.01 * 0.1) - 1.0;
    const double c = (0.01 * 0.01 + 0.01 * 0.01) * (0.5 * 0.5 + 0.1 * 0.1);
    const double closed = std::sqrt(0.5 * (-b + std::sqrt(b * b - 4.0 * c)));
    CHECK(v == doctest::Approx(closed).epsilon(1e-10));
    CHECK(v == doctest::Approx(0.993955).epsilon(1e-6));
    CHECK(distflow_voltage({1.0, 0.01, 0.01, 0.5, 0.1}) == doctest::Approx(closed).epsilon(1e-14));
}

TEST_CASE("sweep agrees with a nodal Newton oracle") {
    SUBCASE("oracle8 with tap, capacitor, partial phases") {
        const auto f = netmodel::load_feeder(testing::data("small/oracle8.json"));
        compare_with_oracle(f, random_loads(f, 1, 150.0));
        auto g = f;
        for (auto& c : g.capacitors) c.on = !c.on;
        compare_with_oracle(g, random_loads(g, 2, 200.0));
    }
    SUBCASE("two_bus") {
        const auto f = netmodel::load_feeder(testing::data("small/two_bus.json"));
        compare_with_oracle(f, random_loads(f, 3, 300.0));
    }
    SUBCASE("tiny") {
        const auto f = netmodel::load_feeder(testing::data("small/tiny.json"));
        compare_with_oracle(f, random_loads(f, 4, 100.0));
    }
}

TEST_CASE("open fuse de-energizes everything downstream") {
    auto f = netmodel::load_feeder(testing::data("small/oracle8.json"));
    REQUIRE(!f.fuses.empty());
    f.fuses[0].open = true;
    const auto loads = random_loads(f, 5, 100.0);
    const auto sol = solve(f, loads);
    const auto line = *f.line_index(f.fuses[0].line);
    const auto child = *f.bus_index(f.lines[line].to_bus);
    CHECK_FALSE(sol.energized[child]);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(sol.voltage_pu[child][k] == Complex{});
        CHECK(sol.line_current_a[line][k] == Complex{});
    }
    CHECK(sol.energized[*f.bus_index(f.slack_bus_id)]);
    compare_with_oracle(f, loads);
}

TEST_CASE("overload raises a convergence error naming the worst bus") {
    const auto f = testing::two_bus(Complex(1.0, 2.0), 2400.0);
    BusLoads loads = empty_loads(f);
    for (auto& l : loads[1]) l.constant_power = {5000.0, 3000.0};
    try {
        solve(f, loads);
        FAIL("expected divergence");
    } catch (const ConvergenceError& e) {
        CHECK(e.worst_bus() == "b");
        CHECK(e.iterations() > 0);
    }
    const auto sol = solve(f, loads, {1e-8, 50, false});
    CHECK_FALSE(sol.converged);
}

TEST_CASE("DistFlow identities") {
    CHECK(distflow_voltage({1.02, 0.01, 0.02, 0.0, 0.0}) == doctest::Approx(1.02).epsilon(1e-14));
    CHECK(distflow_voltage({1.0, 0.0, 0.0, 0.7, 0.3}) == doctest::Approx(1.0).epsilon(1e-14));
    // Reversed flow raises the receiving voltage.
    CHECK(distflow_voltage({1.0, 0.01, 0.02, -0.3, -0.1}) > 1.0);
    CHECK_THROWS_AS(distflow_voltage({1.0, 0.3, 0.6, 2.0, 1.0}), DomainError);
}

TEST_CASE("analytic partials match central differences") {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n = 0; n < 100; ++n) {
        const DistFlowLine l{0.95 + 0.1 * u(gen), 0.002 + 0.02 * u(gen), 0.002 + 0.04 * u(gen), 0.9 * u(gen),
                             0.4 * u(gen)};
        const auto d = distflow_partials(l);
        const double h = 1e-6;
        auto vp = [&](double dp, double dq, double dv) {
            return distflow_voltage({l.v_send + dv, l.r, l.x, l.p + dp, l.q + dq});
        };
        const double fp = (vp(h, 0, 0) - vp(-h, 0, 0)) / (2 * h);
        const double fq = (vp(0, h, 0) - vp(0, -h, 0)) / (2 * h);
        const double fv = (vp(0, 0, h) - vp(0, 0, -h)) / (2 * h);
        CHECK(std::abs(d.dv_dp - fp) <= 1e-4 * std::max(1.0, std::abs(fp)));
        CHECK(std::abs(d.dv_dq - fq) <= 1e-4 * std::max(1.0, std::abs(fq)));
        CHECK(std::abs(d.dv_dvsend - fv) <= 1e-4 * std::max(1.0, std::abs(fv)));

        // Whole sensitivity at pf 0.97 against a directional difference.
        const double tq = std::tan(std::acos(0.97));
        const double fd = (vp(h, h * tq, 0) - vp(-h, -h * tq, 0)) / (2 * h);
        CHECK(std::abs(voltage_sensitivity(l, 0.97).total() - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("unity power factor has no reactive term") {
    const auto t = voltage_sensitivity({1.0, 0.01, 0.02, 0.4, 0.1}, 1.0);
    CHECK(t.q_term == 0.0);
    CHECK(t.v_term == 0.0);
    CHECK(t.total() == t.p_term);
}

TEST_CASE("sensitivity is negative and grows in magnitude with load") {
    double prev = 0.0;
    for (double p = 0.0; p <= 0.8 + 1e-12; p += 0.1) {
        const auto t = voltage_sensitivity({1.0, 0.01, 0.02, p, 0.3 * p});
        CHECK(t.total() < 0.0);
        if (p > 0.0) CHECK(std::abs(t.total()) > prev);
        prev = std::abs(t.total());
    }
    CHECK(std::abs(voltage_sensitivity({1.0, 0.01, 0.02, 0.8, 0.2}).total()) >
          std::abs(voltage_sensitivity({1.0, 0.01, 0.02, 0.2, 0.2}).total()));
}

TEST_CASE("invalid sensitivity inputs") {
    CHECK_THROWS_AS(voltage_sensitivity({1.0, 0.01, 0.02, 0.4, 0.1}, 0.0), DomainError);
    CHECK_THROWS_AS(voltage_sensitivity({1.0, 0.01, 0.02, 0.4, 0.1}, 1.2), DomainError);
    CHECK_THROWS_AS(voltage_sensitivity({1.0, 0.3, 0.6, 2.0, 1.0}), DomainError);
    CHECK_THROWS_AS(voltage_sensitivity({std::nan(""), 0.01, 0.02, 0.4, 0.1}), DomainError);
}
