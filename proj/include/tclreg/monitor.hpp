#pragma once

// Network constraint checks with duration-aware violation records.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tclreg/netmodel.hpp"
#include "tclreg/powerflow.hpp"

namespace tclreg::monitor {

struct ConstraintLimits {
    double v_cont_lo = 0.95;
    double v_cont_hi = 1.05;
    double v_cont_duration_s = 120.0;
    double v_emerg_lo = 0.90;
    double v_emerg_hi = 1.083;
    double unbalance_max_pct = 3.0;
    double xfmr_power_max_pu = 2.0;
    double xfmr_aging_avg_max = 1.0;
    double line_current_max_pu = 1.0;
};

/// Throws ModelError unless the emergency band strictly contains the continuous one.
void validate(const ConstraintLimits& limits);

enum class ViolationKind {
    voltage_continuous_high,
    voltage_continuous_low,
    voltage_emergency_high,
    voltage_emergency_low,
    unbalance,
    transformer_power,
    transformer_aging,
    line_current,
    fuse_open,
};

std::string_view to_string(ViolationKind kind);

struct ViolationRecord {
    std::string component_id;
    ViolationKind kind = ViolationKind::voltage_continuous_high;
    double start_s = 0.0;
    double end_s = 0.0;
    double worst_value = 0.0;

    double duration_s() const noexcept { return end_s - start_s; }
    bool operator==(const ViolationRecord&) const = default;
};

using ViolationLog = std::vector<ViolationRecord>;

/// Tracks one over-limit condition through time. A sample at time t stands for
/// [t, t + dt). A record opens once the excursion has lasted longer than
/// `min_duration_s` (instantly when zero) and its end time follows the
/// excursion until the condition clears. Re-entering the band resets the dwell.
class ExcursionTracker {
public:
    ExcursionTracker(std::string component_id, ViolationKind kind, double min_duration_s,
                     bool higher_is_worse);

    void update(ViolationLog& log, double t_s, double dt_s, bool over, double value);
    double dwell_s() const noexcept { return dwell_; }

private:
    std::string component_id_;
    ViolationKind kind_;
    double min_duration_s_;
    bool higher_is_worse_;
    double dwell_ = 0.0;
    double start_ = 0.0;
    double worst_ = 0.0;
    std::optional<std::size_t> open_record_;
};

/// Voltage unbalance in percent: largest deviation of a phase magnitude from
/// the three-phase mean, divided by the mean.
double unbalance_pct(double va, double vb, double vc);

/// Identifier of a monitored bus-phase, e.g. "n12.B".
std::string node_id(const netmodel::Bus& bus, netmodel::Phase p);

/// Per-node over-limit flags used by the EV study tables.
struct NodeFlags {
    bool above_cont_hi_any = false;      ///< above the upper continuous limit for any step
    bool above_cont_hi_sustained = false;  ///< ... for more than the dwell time
};

/// Inputs the monitor needs from one step, copied out of a power-flow solution.
struct Frame {
    double t_s = 0.0;
    double dt_s = 0.0;
    powerflow::PowerFlowSolution solution;
};

class Monitor {
public:
    Monitor(const netmodel::FeederModel& feeder, ConstraintLimits limits = {});

    /// Continuous (dwell-timed) and emergency (instant) limits at service nodes.
    void check_voltages(const powerflow::PowerFlowSolution& solution, double t_s, double dt_s);
    /// Three-phase buses only.
    void check_unbalance(const powerflow::PowerFlowSolution& solution, double t_s, double dt_s);
    /// Transformer apparent power, line current, fuses. Returns the indices of
    /// fuses whose limit was exceeded and that should now open.
    std::vector<std::size_t> check_thermal(const netmodel::FeederModel& feeder,
                                           const powerflow::PowerFlowSolution& solution,
                                           double t_s, double dt_s);
    /// Runs all three checks for one step.
    std::vector<std::size_t> check_all(const netmodel::FeederModel& feeder, const Frame& frame);

    /// Hour-average aging check over the monitoring window, one value per transformer.
    void check_aging(const std::vector<double>& mean_aging_rate, double window_start_s,
                     double window_end_s);

    const ViolationLog& log() const noexcept { return log_; }
    const ConstraintLimits& limits() const noexcept { return limits_; }

    struct MonitoredNode {
        std::size_t bus = 0;
        netmodel::Phase phase = netmodel::Phase::A;
        std::string id;
    };
    const std::vector<MonitoredNode>& service_nodes() const noexcept { return nodes_; }
    const std::vector<NodeFlags>& node_flags() const noexcept { return flags_; }

private:
    ConstraintLimits limits_;
    ViolationLog log_;
    std::vector<MonitoredNode> nodes_;
    std::vector<NodeFlags> flags_;
    std::vector<ExcursionTracker> cont_hi_, cont_lo_, emerg_hi_, emerg_lo_;
    std::vector<std::size_t> three_phase_buses_;
    std::vector<ExcursionTracker> unbalance_;
    std::vector<ExcursionTracker> xfmr_power_;
    std::vector<ExcursionTracker> line_current_;
    std::vector<double> xfmr_rating_kva_;
    std::vector<std::string> xfmr_ids_;
    std::vector<double> line_ampacity_a_;
    std::vector<bool> fuse_reported_;
};

}  // namespace tclreg::monitor
