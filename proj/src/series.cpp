#include "tclreg/series.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "tclreg/error.hpp"

namespace tclreg {

double TimeSeries::linear(double t) const {
    if (t_s.empty()) throw DomainError("empty time series");
    if (t <= t_s.front()) return value.front();
    if (t >= t_s.back()) return value.back();
    const auto it = std::upper_bound(t_s.begin(), t_s.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - t_s.begin());
    const double f = (t - t_s[i - 1]) / (t_s[i] - t_s[i - 1]);
    return value[i - 1] + f * (value[i] - value[i - 1]);
}

double TimeSeries::hold(double t) const {
    if (t_s.empty()) throw DomainError("empty time series");
    if (t <= t_s.front()) return value.front();
    const auto it = std::upper_bound(t_s.begin(), t_s.end(), t);
    return value[static_cast<std::size_t>(it - t_s.begin()) - 1];
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cell);
            cell.clear();
        } else if (ch != '\r') {
            cell.push_back(ch);
        }
    }
    out.push_back(cell);
    for (auto& c : out) {
        const auto a = c.find_first_not_of(" \t");
        const auto b = c.find_last_not_of(" \t");
        c = a == std::string::npos ? std::string() : c.substr(a, b - a + 1);
    }
    return out;
}

double parse_number(const std::string& s, const std::string& where) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw SchemaError("value", where, "not a finite number: '" + s + "'");
    return v;
}

}  // namespace

TimeSeries load_series_csv(const std::filesystem::path& path, const std::string& time_column,
                           const std::string& value_column) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open series file '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("header", path.string(), "empty CSV file");
    const auto header = split(line);
    auto col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError(name, path.string(), "missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t tc = col(time_column);
    const std::size_t vc = col(value_column);

    TimeSeries s;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r" || line[0] == '#') continue;
        const auto cells = split(line);
        const std::string where = path.string() + ":" + std::to_string(row);
        if (cells.size() <= std::max(tc, vc)) throw SchemaError("row", where, "too few columns");
        const double t = parse_number(cells[tc], where);
        if (!s.t_s.empty() && !(t > s.t_s.back()))
            throw SchemaError(time_column, where, "time must be strictly increasing");
        s.t_s.push_back(t);
        s.value.push_back(parse_number(cells[vc], where));
    }
    if (s.t_s.empty()) throw SchemaError("rows", path.string(), "series has no samples");
    return s;
}

}  // namespace tclreg
