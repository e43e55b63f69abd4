#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "tclreg/netmodel.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return TCLREG_DATA_DIR; }
inline std::filesystem::path data(const std::string& rel) { return data_dir() / rel; }

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::path(TCLREG_SCRATCH_DIR) / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline tclreg::hvac::HouseParams house_params() {
    tclreg::hvac::HouseParams p;
    p.c_air_kj_per_c = 1500.0;
    p.c_mass_kj_per_c = 10000.0;
    p.ua_kw_per_c = 0.3;
    p.hm_kw_per_c = 3.0;
    p.r_gain = 0.5;
    p.t_low_c = 21.5;
    p.t_high_c = 22.5;
    p.q_ac_kw = 9.8;
    p.p_on_kw = 3.27;
    return p;
}

/// Two buses, one three-phase line, nothing attached.
inline tclreg::netmodel::FeederModel two_bus(std::complex<double> z_ohm, double v_nom = 2400.0) {
    using namespace tclreg::netmodel;
    FeederModel f;
    f.name = "pair";
    f.nominal_voltage_v = v_nom;
    f.base_kva = 1000.0;
    f.slack_bus_id = "a";
    f.buses = {{"a", PhaseSet::all(), false}, {"b", PhaseSet::all(), false}};
    LineSegment l;
    l.id = "ab";
    l.from_bus = "a";
    l.to_bus = "b";
    l.phases = PhaseSet::all();
    l.z_ohm = {z_ohm, z_ohm, z_ohm};
    l.ampacity_a = 400.0;
    f.lines = {l};
    return f;
}

}  // namespace testing
