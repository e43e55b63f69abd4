#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tclreg/hvac.hpp"
#include "tclreg/transformer.hpp"

namespace tclreg::netmodel {

enum class Phase : std::uint8_t { A = 0, B = 1, C = 2 };

constexpr std::array<Phase, 3> kAllPhases{Phase::A, Phase::B, Phase::C};

constexpr std::size_t idx(Phase p) noexcept { return static_cast<std::size_t>(p); }
char phase_letter(Phase p) noexcept;
std::optional<Phase> parse_phase(std::string_view s) noexcept;

class PhaseSet {
public:
    constexpr PhaseSet() = default;
    constexpr explicit PhaseSet(std::uint8_t mask) : mask_(mask & 0x7u) {}
    constexpr PhaseSet(std::initializer_list<Phase> phases) {
        for (Phase p : phases) add(p);
    }

    static constexpr PhaseSet all() { return PhaseSet(0x7u); }

    constexpr bool has(Phase p) const noexcept { return (mask_ >> idx(p)) & 1u; }
    constexpr void add(Phase p) noexcept { mask_ = static_cast<std::uint8_t>(mask_ | (1u << idx(p))); }
    constexpr std::size_t count() const noexcept {
        return static_cast<std::size_t>(has(Phase::A)) + has(Phase::B) + has(Phase::C);
    }
    constexpr bool empty() const noexcept { return mask_ == 0; }
    constexpr bool contains(PhaseSet other) const noexcept { return (other.mask_ & ~mask_) == 0; }
    constexpr std::uint8_t mask() const noexcept { return mask_; }

    std::string to_string() const;
    static std::optional<PhaseSet> parse(std::string_view s) noexcept;

    bool operator==(const PhaseSet&) const = default;

private:
    std::uint8_t mask_ = 0;
};

using Complex = std::complex<double>;

struct Bus {
    std::string id;
    PhaseSet phases;
    bool is_service_node = false;

    bool operator==(const Bus&) const = default;
};

struct LineSegment {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    PhaseSet phases;
    std::array<Complex, 3> z_ohm{};  ///< series impedance of the whole segment, per phase
    double ampacity_a = 0.0;
    double length_m = 0.0;

    bool operator==(const LineSegment&) const = default;
};

/// Single-phase distribution transformer from a primary phase to a service node.
struct DistributionTransformer {
    std::string id;
    std::string primary_bus;
    std::string secondary_bus;
    Phase phase = Phase::A;
    double rating_kva = 25.0;
    Complex z_pu{0.011, 0.018};  ///< on the transformer's own rating
    double tap = 1.0;            ///< off-nominal ratio, fixed
    double secondary_voltage_v = 240.0;
    double planning_kva = 0.0;  ///< planning-load annotation used by the populator
    /// Explicit thermal parameters; otherwise interpolated from the rating.
    std::optional<transformer::XfmrThermalParams> thermal;

    bool operator==(const DistributionTransformer&) const = default;
};

enum class CapControlMode { fixed, voltage };

struct CapacitorControl {
    CapControlMode mode = CapControlMode::fixed;
    double v_on_pu = 0.0;   ///< switch in below this
    double v_off_pu = 0.0;  ///< switch out above this
    std::string sense_bus;
    Phase sense_phase = Phase::A;

    bool operator==(const CapacitorControl&) const = default;
};

struct CapacitorBank {
    std::string id;
    std::string bus;
    PhaseSet phases;
    std::array<double, 3> kvar{};  ///< rated at nominal voltage
    CapacitorControl control;
    bool on = true;  ///< all phases switch together

    bool operator==(const CapacitorBank&) const = default;
};

struct Fuse {
    std::string id;
    std::string line;
    double current_limit_a = 0.0;
    bool open = false;

    bool operator==(const Fuse&) const = default;
};

struct ZipFractions {
    double z = 0.0;
    double i = 0.0;
    double p = 1.0;

    bool operator==(const ZipFractions&) const = default;
};

struct ZipLoad {
    std::string id;
    std::string bus;
    PhaseSet phases;
    std::array<double, 3> base_kva{};
    double power_factor = 1.0;
    ZipFractions real;
    ZipFractions reactive;

    bool operator==(const ZipLoad&) const = default;
};

/// Residential house: one AC with its thermal envelope plus a ZIP load for
/// everything else. Always single phase.
struct House {
    std::string id;
    std::string bus;
    Phase phase = Phase::A;
    hvac::HouseParams hvac;
    double gain_kw = 1.0;  ///< internal heat gain, held constant
    double zip_kva = 1.0;
    double zip_power_factor = 0.95;
    ZipFractions zip_real{0.3, 0.3, 0.4};
    ZipFractions zip_reactive{0.3, 0.3, 0.4};

    bool operator==(const House&) const = default;
};

constexpr int kSchemaVersion = 1;

/// Radial distribution feeder. Voltages are line-to-neutral.
struct FeederModel {
    std::string name;
    double nominal_voltage_v = 7200.0;
    double base_kva = 1000.0;  ///< per-phase power base for per-unit quantities
    std::string slack_bus_id;
    double slack_voltage_pu = 1.0;

    std::vector<Bus> buses;
    std::vector<LineSegment> lines;
    std::vector<DistributionTransformer> transformers;
    std::vector<CapacitorBank> capacitors;
    std::vector<Fuse> fuses;
    std::vector<ZipLoad> zip_loads;
    std::vector<House> houses;

    bool operator==(const FeederModel&) const = default;

    std::optional<std::size_t> bus_index(std::string_view id) const;
    std::optional<std::size_t> line_index(std::string_view id) const;
    std::optional<std::size_t> transformer_index(std::string_view id) const;

    /// Ids of houses and ZIP loads attached to `bus_id`.
    std::vector<std::string> attached_loads(std::string_view bus_id) const;
};

/// A branch of the tree: either a line or a transformer.
struct EdgeRef {
    enum class Kind : std::uint8_t { line, transformer } kind = Kind::line;
    std::size_t index = 0;

    bool operator==(const EdgeRef&) const = default;
};

/// Tree structure rooted at the slack bus.
struct Topology {
    std::size_t slack = 0;
    std::vector<std::size_t> order;  ///< breadth-first from the slack
    std::vector<std::optional<EdgeRef>> parent_edge;
    std::vector<std::size_t> parent_bus;
    std::vector<double> base_voltage_v;  ///< per bus, propagated through transformers
};

/// Builds the rooted tree. Throws TopologyError when the graph has a cycle
/// (the message and `cycle()` list the buses on it) or is disconnected.
Topology build_topology(const FeederModel& feeder);

struct ValidationIssue {
    std::string location;  ///< JSON-pointer-like path, e.g. /lines/3/ampacity_a
    std::string message;
};

/// Every invariant violation found; empty when the model is valid. Topology
/// problems are reported here too.
std::vector<ValidationIssue> validate(const FeederModel& feeder);

/// Throws the first problem as a ModelError or TopologyError.
void require_valid(const FeederModel& feeder);

/// Thermal parameters in effect for a transformer (explicit or by rating).
transformer::XfmrThermalParams thermal_params(const DistributionTransformer& xfmr);

FeederModel feeder_from_json(std::string_view text);
std::string feeder_to_json(const FeederModel& feeder);

/// Parse and validate. SchemaError on malformed documents, TopologyError on
/// non-radial graphs, ModelError on other invariant failures.
FeederModel load_feeder(const std::filesystem::path& path);
void save_feeder(const FeederModel& feeder, const std::filesystem::path& path);

}  // namespace tclreg::netmodel
