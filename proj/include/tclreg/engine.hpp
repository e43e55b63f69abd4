#pragma once

// Scenario orchestration: warm-up, paired base/regulation test hours, signal
// scaling, peak-hour search, EV overlays, and the randomization study.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tclreg/dispatch.hpp"
#include "tclreg/monitor.hpp"
#include "tclreg/netmodel.hpp"
#include "tclreg/powerflow.hpp"
#include "tclreg/series.hpp"

namespace tclreg::engine {

enum class CaseKind { base, regulation };
enum class EvMode { none, charge, discharge };
enum class DispatchMode { probabilistic, priority };

std::string_view to_string(CaseKind kind);
std::string_view to_string(EvMode mode);

struct ScenarioConfig {
    std::filesystem::path feeder_path;
    std::filesystem::path weather_path;
    std::filesystem::path signal_path;
    CaseKind case_kind = CaseKind::regulation;
    /// Seconds from the start of the weather series; found by a peak scan when unset.
    std::optional<double> test_hour_start_s;
    double dt_test_s = 2.0;
    double dt_warmup_s = 30.0;
    double warmup_coarse_h = 23.5;
    double warmup_fine_h = 0.5;
    double signal_scale = 0.4;
    EvMode ev_mode = EvMode::none;
    double ev_penetration = 0.2;
    double ev_power_kw = 3.3;
    std::uint64_t seed = 1;
    double kp = 1.0;
    DispatchMode dispatch_mode = DispatchMode::probabilistic;
    double measurement_noise_kw = 0.0;
    std::size_t threads = 0;  ///< 0 = hardware concurrency
    std::string monitored_line;  ///< line whose far end feeds the sensitivity analysis
    netmodel::Phase monitored_phase = netmodel::Phase::A;
    double sensitivity_pf = 0.97;
    std::optional<double> scan_start_s;
    std::optional<double> scan_end_s;
    std::size_t n_trials = 6;
    bool identical_trial_seeds = false;  ///< test hook for the randomization study
    bool record_frames = false;          ///< keep per-step monitor inputs for replay
    monitor::ConstraintLimits limits;
};

/// Reads a scenario config; relative paths resolve against the file's directory.
ScenarioConfig load_scenario_config(const std::filesystem::path& path);

/// Fully loaded inputs for one scenario.
struct Scenario {
    ScenarioConfig config;
    netmodel::FeederModel feeder;
    TimeSeries weather;
    TimeSeries signal;  ///< empty when no signal file is configured
    std::uint64_t input_hash = 0;  ///< FNV-1a over config-relevant input bytes
};

Scenario load_scenario(const std::filesystem::path& config_path);
Scenario make_scenario(ScenarioConfig config);

/// P_des(t) = baseline·(1 + scale·s(t)/max|s|), s the raw samples shifted to
/// zero mean, so the sampled hour has the base-case energy. Throws
/// ScalingError for an all-zero signal or a non-positive baseline.
std::vector<double> scale_regulation_signal(std::span<const double> raw, double baseline_kw,
                                            double scale = 0.4);

/// Samples the signal file at each test step (zero-order hold, times relative
/// to the test-hour start).
std::vector<double> sample_signal(const TimeSeries& signal, double dt_s, std::size_t steps);

struct StepRecord {
    double t_s = 0.0;
    double ambient_c = 0.0;
    double p_ac_kw = 0.0;  ///< aggregate AC draw during the step
    double p_des_kw = std::numeric_limits<double>::quiet_NaN();
    double u = 0.0;
    std::size_t available = 0;
    std::size_t switched = 0;
    double head_kva = 0.0;
};

struct NodeSummary {
    std::string id;
    double mean = 0.0;
    double std_dev = 0.0;  ///< population standard deviation over the hour
    double min = 0.0;
    double max = 0.0;
};

struct TransformerSummary {
    std::string id;
    double rating_kva = 0.0;
    double mean_load_pu = 0.0;
    double mean_aging_rate = 0.0;  ///< aged minutes / elapsed minutes over the hour
    double max_hotspot_c = 0.0;
    std::size_t attached_acs = 0;
    double mean_duty = std::numeric_limits<double>::quiet_NaN();
};

struct Event {
    double t_s = 0.0;
    std::string component_id;
    std::string what;
};

struct OperatingPoint {
    double t_s = 0.0;
    powerflow::DistFlowLine line;
};

struct CaseResult {
    CaseKind kind = CaseKind::base;
    EvMode ev_mode = EvMode::none;
    std::vector<StepRecord> steps;
    std::vector<std::string> node_ids;               ///< monitored service nodes
    std::vector<std::vector<double>> node_voltage;   ///< [node][step], |V| p.u.
    std::vector<NodeSummary> nodes;
    std::vector<TransformerSummary> transformers;
    monitor::ViolationLog violations;
    std::vector<monitor::NodeFlags> node_flags;
    std::vector<Event> events;
    std::vector<OperatingPoint> monitored_line;
    std::size_t dispatch_commands = 0;  ///< steps with a non-zero broadcast
    double ac_energy_kwh = 0.0;
    std::vector<monitor::Frame> frames;  ///< only with record_frames
};

struct TrialResult {
    std::uint64_t trial_seed = 0;
    double test_hour_start_s = 0.0;
    double baseline_kw = 0.0;  ///< base-case hour-mean AC power
    double mean_on_kw = 0.0;   ///< P̄_ON from the final warm-up hour
    std::vector<std::string> ev_houses;
    CaseResult base;
    std::optional<CaseResult> regulation;

    /// Per transformer: 100·(F_reg - F_base)/F_base. Requires the regulation case.
    std::vector<double> delta_aging_pct() const;
};

/// Warm-up followed by the base test hour, and for the regulation case a
/// second test hour from the same post-warm-up state with dispatch enabled.
/// Throws ConvergenceError (with the step time) if a power flow diverges.
TrialResult run_case(const Scenario& scenario);
TrialResult run_trial(const Scenario& scenario, CaseKind kind, std::uint64_t trial_seed,
                      EvMode ev_mode);

/// Seed of the i-th trial of a multi-trial study.
std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t trial);

struct PeakHour {
    double start_s = 0.0;
    double mean_kva = 0.0;
    std::vector<double> hourly_mean_kva;  ///< for each whole hour of the window
    double window_start_s = 0.0;
};

struct ScanOptions {
    std::optional<double> start_s;
    std::optional<double> end_s;
    double dt_s = 30.0;
    std::uint64_t seed = 1;
};

/// Uncontrolled coarse-step feeder-head apparent power (kVA), one value per step.
std::vector<double> scan_head_power(const netmodel::FeederModel& feeder, const TimeSeries& weather,
                                    const ScanOptions& options);

/// Whole hour with the greatest mean head apparent power; earliest wins ties.
PeakHour find_peak_hour(const netmodel::FeederModel& feeder, const TimeSeries& weather,
                        const ScanOptions& options = {});

struct EvTableRow {
    EvMode mode = EvMode::none;
    double any_base_pct = 0.0;
    double any_reg_pct = 0.0;
    double sustained_base_pct = 0.0;
    double sustained_reg_pct = 0.0;
    double mean_sensitivity = 0.0;  ///< time-averaged dV/dP_reg on the monitored line, base case
    double mean_p_term = 0.0;
    double mean_q_term = 0.0;
};

struct EvStudyResult {
    std::array<TrialResult, 3> trials;  ///< charge, none, discharge
    std::array<EvTableRow, 3> table;
};

/// Percent of monitored nodes above the upper continuous limit at any time /
/// for longer than the dwell time.
double over_limit_any_pct(const CaseResult& result);
double over_limit_sustained_pct(const CaseResult& result);

/// Base-case sensitivity terms at every recorded operating point of the monitored line.
std::vector<powerflow::SensitivityTerms> monitored_sensitivity(const CaseResult& result,
                                                               double power_factor);

EvStudyResult run_ev_study(const Scenario& scenario);

struct RandomizationSummary {
    std::vector<std::string> transformer_ids;
    std::vector<int> increased_counts;      ///< per transformer, 0..n_trials
    std::vector<double> observed;           ///< histogram of counts, size n_trials+1
    std::vector<double> expected_pmf;       ///< Binomial(n_trials, p_hat)
    std::vector<double> expected_counts;    ///< pmf scaled to the population
    double p_hat = 0.0;
    double chi_square = 0.0;
    int chi_square_dof = 0;
    double chi_square_critical_95 = 0.0;
    std::vector<double> mean_delta_aging_pct;  ///< per transformer, averaged over trials
    std::vector<double> mean_duty;             ///< per transformer, NaN when no ACs
    double duty_correlation = 0.0;             ///< Pearson, transformers with ACs only
};

struct RandomizationResult {
    std::vector<TrialResult> trials;
    RandomizationSummary summary;
};

/// Tallies per-transformer increased-aging outcomes across trials. A trial
/// counts as increased when F_reg > F_base beyond a 1e-12 relative tie band.
RandomizationSummary summarize_randomization(const std::vector<TrialResult>& trials);

RandomizationResult run_randomization_study(const Scenario& scenario, std::size_t n_trials = 6);

/// Pearson correlation; NaN when either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware).
/// Exceptions are rethrown in index order after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// Building blocks exposed for tests.

/// Indices of houses that carry an EV (fraction of houses, seeded).
std::vector<std::size_t> select_ev_houses(const netmodel::FeederModel& feeder, double penetration,
                                          std::uint64_t seed);

/// Per-bus demand from houses (given compressor states), standalone ZIP
/// loads, and EVs (+kW charging, -kW discharging, unity pf).
powerflow::BusLoads compose_bus_loads(const netmodel::FeederModel& feeder,
                                      std::span<const char> ac_on,
                                      std::span<const std::size_t> ev_houses, EvMode ev_mode,
                                      double ev_power_kw);

}  // namespace tclreg::engine
