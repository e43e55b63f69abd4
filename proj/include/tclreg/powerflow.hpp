#pragma once

// Unbalanced radial power flow (backward/forward sweep) and the analytic
// DistFlow voltage relation used for sensitivity analysis.

#include <array>
#include <complex>
#include <cstddef>
#include <vector>

#include "tclreg/netmodel.hpp"

namespace tclreg::powerflow {

using netmodel::Complex;

/// Demand at one bus-phase, split by voltage dependence. Each component is
/// the complex power (kVA) drawn at 1 p.u. voltage.
struct NodeLoad {
    Complex constant_power{};
    Complex constant_current{};
    Complex constant_impedance{};

    NodeLoad& operator+=(const NodeLoad& o) {
        constant_power += o.constant_power;
        constant_current += o.constant_current;
        constant_impedance += o.constant_impedance;
        return *this;
    }
    bool operator==(const NodeLoad&) const = default;
};

using BusLoads = std::vector<std::array<NodeLoad, 3>>;

BusLoads empty_loads(const netmodel::FeederModel& feeder);

struct SolveOptions {
    double tolerance_pu = 1e-8;  ///< power mismatch, infinity norm
    int max_iter = 50;
    bool throw_on_divergence = true;
};

struct PowerFlowSolution {
    std::vector<std::array<Complex, 3>> voltage_pu;     ///< per bus, per phase
    std::vector<std::array<Complex, 3>> line_current_a;  ///< per line, per phase
    std::vector<Complex> transformer_power_kva;          ///< into the primary terminal
    std::vector<Complex> transformer_current_a;          ///< secondary side
    std::array<Complex, 3> head_power_kva{};             ///< leaving the slack bus
    std::vector<bool> energized;
    bool converged = false;
    int iterations = 0;
    double max_mismatch_pu = 0.0;
    std::size_t worst_bus = 0;

    double head_apparent_kva() const;
};

/// Per-unit network precomputed from a feeder; reusable across steps as long
/// as the topology does not change. Switch states (capacitors, fuses) are read
/// from the feeder passed to `solve`.
class RadialSolver {
public:
    explicit RadialSolver(const netmodel::FeederModel& feeder);

    PowerFlowSolution solve(const netmodel::FeederModel& feeder, const BusLoads& loads,
                            const SolveOptions& options = {}) const;

    const netmodel::Topology& topology() const noexcept { return topo_; }
    /// Series impedance of a line phase in system per-unit.
    Complex line_z_pu(std::size_t line, netmodel::Phase p) const;
    Complex transformer_z_pu(std::size_t xfmr) const { return xfmr_z_pu_[xfmr]; }
    double current_base_a(std::size_t bus) const { return current_base_a_[bus]; }
    double base_kva() const noexcept { return base_kva_; }

private:
    netmodel::Topology topo_;
    double base_kva_ = 1.0;
    std::vector<std::array<Complex, 3>> line_z_pu_;
    std::vector<Complex> xfmr_z_pu_;
    std::vector<double> current_base_a_;
    std::vector<std::size_t> line_child_;  ///< downstream bus of each line
    std::vector<std::size_t> line_fuse_;   ///< fuse index per line, or npos
    std::vector<std::size_t> cap_bus_;
    std::vector<netmodel::PhaseSet> fed_;  ///< phases reaching each bus
};

/// One-shot solve using the feeder's own switch states.
PowerFlowSolution solve(const netmodel::FeederModel& feeder, const BusLoads& loads,
                        const SolveOptions& options = {});

/// Complex power drawn at voltage `v` (p.u.) by a ZIP node load, in kVA.
Complex load_power_kva(const NodeLoad& load, Complex v_pu);

// ---------------------------------------------------------------------------
// DistFlow

/// Two-bus line in per unit: sending-end voltage magnitude, impedance, and
/// the real/reactive power received at the far bus.
struct DistFlowLine {
    double v_send = 1.0;
    double r = 0.0;
    double x = 0.0;
    double p = 0.0;
    double q = 0.0;
};

/// Receiving-end voltage magnitude: the high-voltage root of
///   V_k^4 + (2(rP + xQ) - V_i^2) V_k^2 + (r^2 + x^2)(P^2 + Q^2) = 0.
/// Throws DomainError when the discriminant is negative.
double distflow_voltage(const DistFlowLine& line);

struct DistFlowPartials {
    double dv_dp = 0.0;
    double dv_dq = 0.0;
    double dv_dvsend = 0.0;
};

DistFlowPartials distflow_partials(const DistFlowLine& line);

struct SensitivityTerms {
    double q_term = 0.0;  ///< via reactive flow at constant power factor
    double p_term = 0.0;  ///< via real flow
    double v_term = 0.0;  ///< via the sending-end voltage; zero for an infinite bus
    double power_factor = 0.97;

    double total() const noexcept { return q_term + p_term + v_term; }
};

/// dV_k/dP_reg for regulation power added to the received load at a
/// constant lagging power factor. Throws DomainError for pf outside (0, 1].
SensitivityTerms voltage_sensitivity(const DistFlowLine& line, double power_factor = 0.97);

}  // namespace tclreg::powerflow
