#include "tclreg/monitor.hpp"

#include <algorithm>
#include <cmath>

#include "tclreg/error.hpp"

namespace tclreg::monitor {

using netmodel::Phase;
using netmodel::idx;
using netmodel::kAllPhases;

void validate(const ConstraintLimits& l) {
    if (!(l.v_emerg_lo < l.v_cont_lo && l.v_cont_lo < l.v_cont_hi && l.v_cont_hi < l.v_emerg_hi))
        throw ModelError("emergency voltage band must strictly contain the continuous band");
    if (!(l.v_cont_duration_s >= 0.0)) throw ModelError("continuous-voltage dwell must be non-negative");
    if (!(l.unbalance_max_pct > 0.0) || !(l.xfmr_power_max_pu > 0.0) || !(l.xfmr_aging_avg_max > 0.0) ||
        !(l.line_current_max_pu > 0.0))
        throw ModelError("constraint limits must be positive");
}

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::voltage_continuous_high: return "voltage_continuous_high";
        case ViolationKind::voltage_continuous_low: return "voltage_continuous_low";
        case ViolationKind::voltage_emergency_high: return "voltage_emergency_high";
        case ViolationKind::voltage_emergency_low: return "voltage_emergency_low";
        case ViolationKind::unbalance: return "unbalance";
        case ViolationKind::transformer_power: return "transformer_power";
        case ViolationKind::transformer_aging: return "transformer_aging";
        case ViolationKind::line_current: return "line_current";
        case ViolationKind::fuse_open: return "fuse_open";
    }
    return "unknown";
}

ExcursionTracker::ExcursionTracker(std::string component_id, ViolationKind kind,
                                   double min_duration_s, bool higher_is_worse)
    : component_id_(std::move(component_id)), kind_(kind), min_duration_s_(min_duration_s),
      higher_is_worse_(higher_is_worse) {}

void ExcursionTracker::update(ViolationLog& log, double t_s, double dt_s, bool over, double value) {
    if (!over) {
        dwell_ = 0.0;
        open_record_.reset();
        return;
    }
    if (dwell_ == 0.0) {
        start_ = t_s;
        worst_ = value;
    } else {
        worst_ = higher_is_worse_ ? std::max(worst_, value) : std::min(worst_, value);
    }
    dwell_ += dt_s;
    if (open_record_) {
        auto& rec = log[*open_record_];
        rec.end_s = t_s + dt_s;
        rec.worst_value = worst_;
    } else if (min_duration_s_ <= 0.0 || dwell_ > min_duration_s_ + 1e-9) {
        open_record_ = log.size();
        log.push_back({component_id_, kind_, start_, t_s + dt_s, worst_});
    }
}

double unbalance_pct(double va, double vb, double vc) {
    const double mean = (va + vb + vc) / 3.0;
    if (!(mean > 0.0)) return 0.0;
    const double dev = std::max({std::abs(va - mean), std::abs(vb - mean), std::abs(vc - mean)});
    return 100.0 * dev / mean;
}

std::string node_id(const netmodel::Bus& bus, Phase p) {
    return bus.id + "." + std::string(1, netmodel::phase_letter(p));
}

Monitor::Monitor(const netmodel::FeederModel& f, ConstraintLimits limits) : limits_(limits) {
    validate(limits_);
    for (std::size_t b = 0; b < f.buses.size(); ++b) {
        const auto& bus = f.buses[b];
        if (bus.is_service_node)
            for (Phase p : kAllPhases)
                if (bus.phases.has(p)) nodes_.push_back({b, p, node_id(bus, p)});
        if (bus.phases.count() == 3) {
            three_phase_buses_.push_back(b);
            unbalance_.emplace_back(bus.id, ViolationKind::unbalance, 0.0, true);
        }
    }
    flags_.resize(nodes_.size());
    for (const auto& n : nodes_) {
        cont_hi_.emplace_back(n.id, ViolationKind::voltage_continuous_high, limits_.v_cont_duration_s, true);
        cont_lo_.emplace_back(n.id, ViolationKind::voltage_continuous_low, limits_.v_cont_duration_s, false);
        emerg_hi_.emplace_back(n.id, ViolationKind::voltage_emergency_high, 0.0, true);
        emerg_lo_.emplace_back(n.id, ViolationKind::voltage_emergency_low, 0.0, false);
    }
    for (const auto& x : f.transformers) {
        xfmr_power_.emplace_back(x.id, ViolationKind::transformer_power, 0.0, true);
        xfmr_rating_kva_.push_back(x.rating_kva);
        xfmr_ids_.push_back(x.id);
    }
    for (const auto& l : f.lines) {
        line_current_.emplace_back(l.id, ViolationKind::line_current, 0.0, true);
        line_ampacity_a_.push_back(l.ampacity_a);
    }
    fuse_reported_.assign(f.fuses.size(), false);
}

void Monitor::check_voltages(const powerflow::PowerFlowSolution& s, double t_s, double dt_s) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        const bool live = s.energized[n.bus];
        const double v = live ? std::abs(s.voltage_pu[n.bus][idx(n.phase)]) : 0.0;
        const bool hi = live && v > limits_.v_cont_hi;
        cont_hi_[i].update(log_, t_s, dt_s, hi, v);
        cont_lo_[i].update(log_, t_s, dt_s, live && v < limits_.v_cont_lo, v);
        emerg_hi_[i].update(log_, t_s, dt_s, live && v > limits_.v_emerg_hi, v);
        emerg_lo_[i].update(log_, t_s, dt_s, live && v < limits_.v_emerg_lo, v);
        if (hi) flags_[i].above_cont_hi_any = true;
        if (cont_hi_[i].dwell_s() > limits_.v_cont_duration_s + 1e-9) flags_[i].above_cont_hi_sustained = true;
    }
}

void Monitor::check_unbalance(const powerflow::PowerFlowSolution& s, double t_s, double dt_s) {
    for (std::size_t k = 0; k < three_phase_buses_.size(); ++k) {
        const std::size_t b = three_phase_buses_[k];
        if (!s.energized[b]) {
            unbalance_[k].update(log_, t_s, dt_s, false, 0.0);
            continue;
        }
        const auto& v = s.voltage_pu[b];
        const double pct = unbalance_pct(std::abs(v[0]), std::abs(v[1]), std::abs(v[2]));
        unbalance_[k].update(log_, t_s, dt_s, pct > limits_.unbalance_max_pct, pct);
    }
}

std::vector<std::size_t> Monitor::check_thermal(const netmodel::FeederModel& f,
                                                const powerflow::PowerFlowSolution& s, double t_s,
                                                double dt_s) {
    for (std::size_t t = 0; t < xfmr_power_.size(); ++t) {
        const double pu = std::abs(s.transformer_power_kva[t]) / xfmr_rating_kva_[t];
        xfmr_power_[t].update(log_, t_s, dt_s, pu > limits_.xfmr_power_max_pu, pu);
    }
    for (std::size_t l = 0; l < line_current_.size(); ++l) {
        double worst = 0.0;
        for (Phase p : kAllPhases) worst = std::max(worst, std::abs(s.line_current_a[l][idx(p)]));
        const double pu = worst / line_ampacity_a_[l];
        line_current_[l].update(log_, t_s, dt_s, pu > limits_.line_current_max_pu, pu);
    }
    std::vector<std::size_t> blown;
    for (std::size_t i = 0; i < f.fuses.size(); ++i) {
        const auto& fu = f.fuses[i];
        double current = 0.0;
        if (auto l = f.line_index(fu.line))
            for (Phase p : kAllPhases) current = std::max(current, std::abs(s.line_current_a[*l][idx(p)]));
        const bool opening = !fu.open && current > fu.current_limit_a;
        if ((opening || fu.open) && !fuse_reported_[i]) {
            fuse_reported_[i] = true;
            log_.push_back({fu.id, ViolationKind::fuse_open, t_s, t_s + dt_s, current});
        }
        if (opening) blown.push_back(i);
    }
    return blown;
}

std::vector<std::size_t> Monitor::check_all(const netmodel::FeederModel& feeder, const Frame& frame) {
    check_voltages(frame.solution, frame.t_s, frame.dt_s);
    check_unbalance(frame.solution, frame.t_s, frame.dt_s);
    return check_thermal(feeder, frame.solution, frame.t_s, frame.dt_s);
}

void Monitor::check_aging(const std::vector<double>& mean_aging_rate, double window_start_s,
                          double window_end_s) {
    for (std::size_t t = 0; t < mean_aging_rate.size() && t < xfmr_ids_.size(); ++t)
        if (mean_aging_rate[t] > limits_.xfmr_aging_avg_max)
            log_.push_back({xfmr_ids_[t], ViolationKind::transformer_aging, window_start_s, window_end_s,
                            mean_aging_rate[t]});
}

}  // namespace tclreg::monitor
