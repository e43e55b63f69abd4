#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tclreg {

/// Sampled scalar series (time in seconds, strictly increasing).
struct TimeSeries {
    std::vector<double> t_s;
    std::vector<double> value;

    bool empty() const noexcept { return t_s.empty(); }
    double start_s() const { return t_s.front(); }
    double end_s() const { return t_s.back(); }

    /// Linear interpolation; holds the edge value outside the sampled range.
    double linear(double t) const;
    /// Zero-order hold: the latest sample at or before t.
    double hold(double t) const;
};

/// Reads a two-column numeric CSV with a header row naming `time_column`
/// and `value_column`. Extra columns are ignored. Throws IoError/SchemaError.
TimeSeries load_series_csv(const std::filesystem::path& path, const std::string& time_column,
                           const std::string& value_column);

}  // namespace tclreg
