#pragma once

// CSV/JSON artifacts for trials and studies. Floats are written in shortest
// round-trip form, so parsing a file recovers the exact double.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tclreg/engine.hpp"

namespace tclreg::results {

constexpr double kVoltageBinWidthPu = 0.002;
inline constexpr const char* kVersion = "0.3.0";

/// Shortest decimal that parses back to the same double; "nan"/"inf" for
/// non-finite values.
std::string format_double(double v);

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

/// Fixed-width histogram of every sample, bins aligned to multiples of
/// `width`. Empty input gives no bins.
std::vector<HistogramBin> histogram(const std::vector<std::vector<double>>& series, double width);

struct VoltageVariation {
    double mean_std_dev = 0.0;  ///< mean over nodes of each node's standard deviation
    double total_range = 0.0;   ///< max minus min over all nodes and steps
};

VoltageVariation summarize_voltage_variation(const engine::CaseResult& result);

struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    std::uint64_t input_hash = 0;
    std::string version = kVersion;
};

/// Writes one trial: manifest.json, transformers.csv, and base/ (plus
/// regulation/) with series.csv, node_voltages.csv, violations.csv,
/// events.csv, voltage_histogram.csv, monitored_line.csv. Overwrites in place.
void emit(const engine::TrialResult& trial, const RunManifest& manifest,
          const std::filesystem::path& out_dir);

void emit_ev_study(const engine::EvStudyResult& study, const RunManifest& manifest,
                   const std::filesystem::path& out_dir);

void emit_randomization_study(const engine::RandomizationResult& study,
                              const RunManifest& manifest, const std::filesystem::path& out_dir);

/// Violations CSV body (header included) for one log.
std::string violations_csv(const monitor::ViolationLog& log);

/// Minimal CSV reader used by tests and tools: header + rows of cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);

}  // namespace tclreg::results
