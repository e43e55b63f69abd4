#include "tclreg/powerflow.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tclreg/error.hpp"

namespace tclreg::powerflow {

using netmodel::EdgeRef;
using netmodel::FeederModel;
using netmodel::Phase;
using netmodel::PhaseSet;
using netmodel::idx;
using netmodel::kAllPhases;

constexpr std::size_t npos = static_cast<std::size_t>(-1);

BusLoads empty_loads(const FeederModel& feeder) { return BusLoads(feeder.buses.size()); }

double PowerFlowSolution::head_apparent_kva() const {
    return std::abs(head_power_kva[0] + head_power_kva[1] + head_power_kva[2]);
}

Complex load_power_kva(const NodeLoad& load, Complex v_pu) {
    const double vm = std::abs(v_pu);
    return load.constant_power + load.constant_current * vm + load.constant_impedance * (vm * vm);
}

RadialSolver::RadialSolver(const FeederModel& f)
    : topo_(netmodel::build_topology(f)), base_kva_(f.base_kva) {
    if (!(base_kva_ > 0.0)) throw ModelError("feeder base_kva must be positive");
    const std::size_t n = f.buses.size();
    current_base_a_.resize(n);
    for (std::size_t b = 0; b < n; ++b)
        current_base_a_[b] = base_kva_ * 1000.0 / topo_.base_voltage_v[b];

    line_z_pu_.resize(f.lines.size());
    line_child_.assign(f.lines.size(), npos);
    line_fuse_.assign(f.lines.size(), npos);
    xfmr_z_pu_.resize(f.transformers.size());
    for (std::size_t b = 0; b < n; ++b) {
        const auto& e = topo_.parent_edge[b];
        if (!e) continue;
        if (e->kind == EdgeRef::Kind::line) {
            line_child_[e->index] = b;
            const double vb = topo_.base_voltage_v[topo_.parent_bus[b]];
            const double zb = vb * vb / (base_kva_ * 1000.0);
            for (Phase p : kAllPhases) line_z_pu_[e->index][idx(p)] = f.lines[e->index].z_ohm[idx(p)] / zb;
        } else {
            const auto& x = f.transformers[e->index];
            xfmr_z_pu_[e->index] = x.z_pu * (base_kva_ / x.rating_kva);
        }
    }
    for (std::size_t i = 0; i < f.fuses.size(); ++i)
        if (auto l = f.line_index(f.fuses[i].line)) line_fuse_[*l] = i;
    for (const auto& c : f.capacitors) {
        auto b = f.bus_index(c.bus);
        if (!b) throw ModelError("capacitor '" + c.id + "' on unknown bus '" + c.bus + "'");
        cap_bus_.push_back(*b);
    }

    fed_.assign(n, PhaseSet{});
    for (std::size_t b : topo_.order) {
        const auto& e = topo_.parent_edge[b];
        if (!e) {
            fed_[b] = f.buses[b].phases;
            continue;
        }
        const PhaseSet up = fed_[topo_.parent_bus[b]];
        PhaseSet mine;
        if (e->kind == EdgeRef::Kind::line) {
            for (Phase p : kAllPhases)
                if (up.has(p) && f.lines[e->index].phases.has(p) && f.buses[b].phases.has(p)) mine.add(p);
        } else {
            const Phase p = f.transformers[e->index].phase;
            if (up.has(p)) mine.add(p);
        }
        fed_[b] = mine;
    }
}

Complex RadialSolver::line_z_pu(std::size_t line, Phase p) const { return line_z_pu_[line][idx(p)]; }

PowerFlowSolution RadialSolver::solve(const FeederModel& f, const BusLoads& loads,
                                      const SolveOptions& opt) const {
    const std::size_t n = f.buses.size();
    if (loads.size() != n) throw ModelError("load vector does not match the bus count");
    if (cap_bus_.size() != f.capacitors.size() || line_fuse_.size() != f.lines.size())
        throw ModelError("feeder does not match the solver's network");

    using Arr = std::array<Complex, 3>;
    PowerFlowSolution sol;
    sol.energized.assign(n, false);
    for (std::size_t b : topo_.order) {
        const auto& e = topo_.parent_edge[b];
        bool on = !fed_[b].empty();
        if (e) {
            on = on && sol.energized[topo_.parent_bus[b]];
            if (e->kind == EdgeRef::Kind::line && line_fuse_[e->index] != npos &&
                f.fuses[line_fuse_[e->index]].open)
                on = false;
        }
        sol.energized[b] = on;
    }

    // Per-unit ZIP components per bus-phase, with capacitors folded into the
    // constant-impedance part.
    std::vector<std::array<NodeLoad, 3>> pu(n);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t k = 0; k < 3; ++k) {
            pu[b][k].constant_power = loads[b][k].constant_power / base_kva_;
            pu[b][k].constant_current = loads[b][k].constant_current / base_kva_;
            pu[b][k].constant_impedance = loads[b][k].constant_impedance / base_kva_;
        }
    for (std::size_t i = 0; i < f.capacitors.size(); ++i) {
        const auto& c = f.capacitors[i];
        if (!c.on) continue;
        for (Phase p : kAllPhases)
            if (c.phases.has(p)) pu[cap_bus_[i]][idx(p)].constant_impedance += Complex(0.0, -c.kvar[idx(p)] / base_kva_);
    }

    const double deg120 = 2.0 * std::numbers::pi / 3.0;
    const Arr rot{Complex(1.0, 0.0), std::polar(1.0, -deg120), std::polar(1.0, deg120)};

    std::vector<Arr> v(n, Arr{});
    for (std::size_t b : topo_.order) {
        if (!sol.energized[b]) continue;
        const auto& e = topo_.parent_edge[b];
        for (Phase p : kAllPhases) {
            if (!fed_[b].has(p)) continue;
            if (!e) {
                v[b][idx(p)] = f.slack_voltage_pu * rot[idx(p)];
            } else if (e->kind == EdgeRef::Kind::line) {
                v[b][idx(p)] = v[topo_.parent_bus[b]][idx(p)];
            } else {
                v[b][idx(p)] = v[topo_.parent_bus[b]][idx(p)] / f.transformers[e->index].tap;
            }
        }
    }

    std::vector<Arr> i_load(n, Arr{});
    std::vector<Arr> i_bus(n, Arr{});
    std::vector<Arr> i_line(f.lines.size(), Arr{});
    std::vector<Complex> i_xfmr(f.transformers.size());

    double mismatch = 0.0;
    std::size_t worst = topo_.slack;
    int iter = 0;
    bool converged = false;
    while (iter < opt.max_iter) {
        ++iter;
        // Backward sweep: load currents at the present voltages, summed upstream.
        for (auto it = topo_.order.rbegin(); it != topo_.order.rend(); ++it) {
            const std::size_t b = *it;
            i_bus[b] = Arr{};
            if (!sol.energized[b]) continue;
            for (Phase p : kAllPhases) {
                if (!fed_[b].has(p)) continue;
                const Complex vb = v[b][idx(p)];
                if (!(std::abs(vb) > 1e-9)) throw NumericError("voltage collapsed at bus '" + f.buses[b].id + "'");
                const Complex s = load_power_kva(pu[b][idx(p)], vb);
                i_load[b][idx(p)] = std::conj(s / vb);
            }
        }
        for (auto it = topo_.order.rbegin(); it != topo_.order.rend(); ++it) {
            const std::size_t b = *it;
            if (!sol.energized[b]) continue;
            for (std::size_t k = 0; k < 3; ++k) i_bus[b][k] += i_load[b][k];
            const auto& e = topo_.parent_edge[b];
            if (!e) continue;
            const std::size_t up = topo_.parent_bus[b];
            if (e->kind == EdgeRef::Kind::line) {
                i_line[e->index] = i_bus[b];
                for (std::size_t k = 0; k < 3; ++k) i_bus[up][k] += i_bus[b][k];
            } else {
                const auto& x = f.transformers[e->index];
                i_xfmr[e->index] = i_bus[b][idx(x.phase)];
                i_bus[up][idx(x.phase)] += i_xfmr[e->index] / x.tap;
            }
        }
        // Forward sweep.
        for (std::size_t b : topo_.order) {
            const auto& e = topo_.parent_edge[b];
            if (!e || !sol.energized[b]) continue;
            const std::size_t up = topo_.parent_bus[b];
            if (e->kind == EdgeRef::Kind::line) {
                for (Phase p : kAllPhases)
                    if (fed_[b].has(p))
                        v[b][idx(p)] = v[up][idx(p)] - line_z_pu_[e->index][idx(p)] * i_line[e->index][idx(p)];
            } else {
                const auto& x = f.transformers[e->index];
                const std::size_t k = idx(x.phase);
                v[b][k] = v[up][k] / x.tap - xfmr_z_pu_[e->index] * i_xfmr[e->index];
            }
        }
        // Power mismatch: what the swept currents deliver versus what the
        // loads draw at the new voltages.
        mismatch = 0.0;
        worst = topo_.slack;
        for (std::size_t b = 0; b < n; ++b) {
            if (!sol.energized[b]) continue;
            for (Phase p : kAllPhases) {
                if (!fed_[b].has(p)) continue;
                const Complex vb = v[b][idx(p)];
                const double d = std::abs(vb * std::conj(i_load[b][idx(p)]) - load_power_kva(pu[b][idx(p)], vb));
                if (!std::isfinite(d)) {
                    mismatch = d;
                    worst = b;
                    break;
                }
                if (d > mismatch) {
                    mismatch = d;
                    worst = b;
                }
            }
        }
        if (!std::isfinite(mismatch)) break;
        if (mismatch < opt.tolerance_pu) {
            converged = true;
            break;
        }
    }

    sol.converged = converged;
    sol.iterations = iter;
    sol.max_mismatch_pu = mismatch;
    sol.worst_bus = worst;
    if (!converged && opt.throw_on_divergence)
        throw ConvergenceError("power flow did not converge in " + std::to_string(iter) +
                                   " iterations (mismatch " + std::to_string(mismatch) +
                                   " p.u. at bus '" + f.buses[worst].id + "')",
                               f.buses[worst].id, mismatch, iter);

    sol.voltage_pu = std::move(v);
    sol.line_current_a.assign(f.lines.size(), Arr{});
    for (std::size_t l = 0; l < f.lines.size(); ++l) {
        const std::size_t child = line_child_[l];
        if (child == npos || !sol.energized[child]) continue;
        const double ib = current_base_a_[topo_.parent_bus[child]];
        for (std::size_t k = 0; k < 3; ++k) sol.line_current_a[l][k] = i_line[l][k] * ib;
    }
    sol.transformer_power_kva.assign(f.transformers.size(), Complex{});
    sol.transformer_current_a.assign(f.transformers.size(), Complex{});
    for (std::size_t t = 0; t < f.transformers.size(); ++t) {
        const auto& x = f.transformers[t];
        const auto sb = f.bus_index(x.secondary_bus);
        const auto pb = f.bus_index(x.primary_bus);
        if (!sb || !pb || !sol.energized[*sb]) continue;
        const Complex i_pri = i_xfmr[t] / x.tap;
        sol.transformer_power_kva[t] = sol.voltage_pu[*pb][idx(x.phase)] * std::conj(i_pri) * base_kva_;
        sol.transformer_current_a[t] = i_xfmr[t] * current_base_a_[*sb];
    }
    for (std::size_t k = 0; k < 3; ++k)
        sol.head_power_kva[k] = sol.voltage_pu[topo_.slack][k] * std::conj(i_bus[topo_.slack][k]) * base_kva_;
    return sol;
}

PowerFlowSolution solve(const FeederModel& feeder, const BusLoads& loads, const SolveOptions& options) {
    return RadialSolver(feeder).solve(feeder, loads, options);
}

// ---------------------------------------------------------------------------
// DistFlow

namespace {

struct Quartic {
    double b;
    double c;
    double disc;
};

Quartic coefficients(const DistFlowLine& l) {
    if (!std::isfinite(l.v_send) || !std::isfinite(l.r) || !std::isfinite(l.x) || !std::isfinite(l.p) ||
        !std::isfinite(l.q))
        throw DomainError("non-finite DistFlow input");
    const double b = 2.0 * (l.r * l.p + l.x * l.q) - l.v_send * l.v_send;
    const double c = (l.r * l.r + l.x * l.x) * (l.p * l.p + l.q * l.q);
    const double disc = b * b - 4.0 * c;
    if (disc < 0.0) throw DomainError("DistFlow has no real solution: the line cannot carry this load");
    return {b, c, disc};
}

}  // namespace

double distflow_voltage(const DistFlowLine& line) {
    const Quartic q = coefficients(line);
    const double w = 0.5 * (-q.b + std::sqrt(q.disc));
    if (!(w > 0.0)) throw DomainError("DistFlow receiving voltage is not positive");
    return std::sqrt(w);
}

DistFlowPartials distflow_partials(const DistFlowLine& line) {
    const Quartic q = coefficients(line);
    const double root = std::sqrt(q.disc);
    if (!(root > 0.0)) throw DomainError("DistFlow partials are singular at the voltage-collapse point");
    const double w = 0.5 * (-q.b + root);
    if (!(w > 0.0)) throw DomainError("DistFlow receiving voltage is not positive");
    const double v = std::sqrt(w);
    const double z2 = line.r * line.r + line.x * line.x;

    // w = (-b + sqrt(b^2 - 4c)) / 2, differentiated through b and c.
    auto dw = [&](double db, double dc) { return 0.5 * (-db + (q.b * db - 2.0 * dc) / root); };
    DistFlowPartials d;
    d.dv_dp = dw(2.0 * line.r, 2.0 * z2 * line.p) / (2.0 * v);
    d.dv_dq = dw(2.0 * line.x, 2.0 * z2 * line.q) / (2.0 * v);
    d.dv_dvsend = dw(-2.0 * line.v_send, 0.0) / (2.0 * v);
    return d;
}

SensitivityTerms voltage_sensitivity(const DistFlowLine& line, double power_factor) {
    if (!(power_factor > 0.0 && power_factor <= 1.0))
        throw DomainError("power factor must lie in (0, 1]");
    const DistFlowPartials d = distflow_partials(line);
    SensitivityTerms t;
    t.power_factor = power_factor;
    t.q_term = d.dv_dq * std::tan(std::acos(power_factor));
    t.p_term = d.dv_dp;
    t.v_term = 0.0;
    return t;
}

}  // namespace tclreg::powerflow
