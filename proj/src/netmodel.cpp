#include "tclreg/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "tclreg/error.hpp"

namespace tclreg::netmodel {

using nlohmann::json;

char phase_letter(Phase p) noexcept { return static_cast<char>('A' + idx(p)); }

std::optional<Phase> parse_phase(std::string_view s) noexcept {
    if (s == "A") return Phase::A;
    if (s == "B") return Phase::B;
    if (s == "C") return Phase::C;
    return std::nullopt;
}

std::string PhaseSet::to_string() const {
    std::string out;
    for (Phase p : kAllPhases)
        if (has(p)) out.push_back(phase_letter(p));
    return out;
}

std::optional<PhaseSet> PhaseSet::parse(std::string_view s) noexcept {
    PhaseSet set;
    for (char ch : s) {
        auto p = parse_phase(std::string_view(&ch, 1));
        if (!p || set.has(*p)) return std::nullopt;
        set.add(*p);
    }
    if (set.empty()) return std::nullopt;
    return set;
}

namespace {

template <class T>
std::optional<std::size_t> find_by_id(const std::vector<T>& items, std::string_view id) {
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].id == id) return i;
    return std::nullopt;
}

}  // namespace

std::optional<std::size_t> FeederModel::bus_index(std::string_view id) const {
    return find_by_id(buses, id);
}
std::optional<std::size_t> FeederModel::line_index(std::string_view id) const {
    return find_by_id(lines, id);
}
std::optional<std::size_t> FeederModel::transformer_index(std::string_view id) const {
    return find_by_id(transformers, id);
}

std::vector<std::string> FeederModel::attached_loads(std::string_view bus_id) const {
    std::vector<std::string> out;
    for (const auto& h : houses)
        if (h.bus == bus_id) out.push_back(h.id);
    for (const auto& z : zip_loads)
        if (z.bus == bus_id) out.push_back(z.id);
    return out;
}

transformer::XfmrThermalParams thermal_params(const DistributionTransformer& xfmr) {
    if (xfmr.thermal) {
        auto p = *xfmr.thermal;
        p.rating_kva = xfmr.rating_kva;
        return p;
    }
    return transformer::params_for_rating(xfmr.rating_kva);
}

// ---------------------------------------------------------------------------
// Topology

namespace {

struct Edge {
    std::size_t a;
    std::size_t b;
    EdgeRef ref;
};

std::vector<Edge> collect_edges(const FeederModel& f,
                                const std::unordered_map<std::string, std::size_t>& bus_ix) {
    std::vector<Edge> edges;
    auto lookup = [&](const std::string& id, const std::string& where) {
        auto it = bus_ix.find(id);
        if (it == bus_ix.end()) throw TopologyError(where + " references unknown bus '" + id + "'");
        return it->second;
    };
    for (std::size_t i = 0; i < f.lines.size(); ++i)
        edges.push_back({lookup(f.lines[i].from_bus, "line " + f.lines[i].id),
                         lookup(f.lines[i].to_bus, "line " + f.lines[i].id),
                         {EdgeRef::Kind::line, i}});
    for (std::size_t i = 0; i < f.transformers.size(); ++i)
        edges.push_back({lookup(f.transformers[i].primary_bus, "transformer " + f.transformers[i].id),
                         lookup(f.transformers[i].secondary_bus, "transformer " + f.transformers[i].id),
                         {EdgeRef::Kind::transformer, i}});
    return edges;
}

// Path between two buses in a forest given as adjacency lists.
std::vector<std::size_t> forest_path(const std::vector<std::vector<std::size_t>>& adj,
                                     std::size_t from, std::size_t to) {
    std::vector<std::size_t> prev(adj.size(), SIZE_MAX);
    std::queue<std::size_t> q;
    q.push(from);
    prev[from] = from;
    while (!q.empty()) {
        const std::size_t u = q.front();
        q.pop();
        if (u == to) break;
        for (std::size_t v : adj[u])
            if (prev[v] == SIZE_MAX) {
                prev[v] = u;
                q.push(v);
            }
    }
    std::vector<std::size_t> path;
    for (std::size_t v = to; v != from; v = prev[v]) path.push_back(v);
    path.push_back(from);
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace

Topology build_topology(const FeederModel& f) {
    std::unordered_map<std::string, std::size_t> bus_ix;
    for (std::size_t i = 0; i < f.buses.size(); ++i) {
        if (!bus_ix.emplace(f.buses[i].id, i).second)
            throw TopologyError("duplicate bus id '" + f.buses[i].id + "'");
    }
    auto slack_it = bus_ix.find(f.slack_bus_id);
    if (slack_it == bus_ix.end()) throw TopologyError("slack bus '" + f.slack_bus_id + "' not found");

    const auto edges = collect_edges(f, bus_ix);
    const std::size_t n = f.buses.size();

    // Union-find to detect the first cycle; the forest built so far gives its path.
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<std::vector<std::size_t>> forest(n);
    for (const Edge& e : edges) {
        if (e.a == e.b) throw TopologyError("self-loop at bus '" + f.buses[e.a].id + "'", {f.buses[e.a].id});
        const std::size_t ra = find(e.a);
        const std::size_t rb = find(e.b);
        if (ra == rb) {
            std::vector<std::string> cycle;
            for (std::size_t b : forest_path(forest, e.a, e.b)) cycle.push_back(f.buses[b].id);
            std::string msg = "feeder is not radial; cycle through buses:";
            for (const auto& id : cycle) msg += " " + id;
            throw TopologyError(msg, cycle);
        }
        parent[ra] = rb;
        forest[e.a].push_back(e.b);
        forest[e.b].push_back(e.a);
    }

    // Rooted breadth-first tree from the slack.
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);  // (neighbor, edge)
    for (std::size_t i = 0; i < edges.size(); ++i) {
        adj[edges[i].a].push_back({edges[i].b, i});
        adj[edges[i].b].push_back({edges[i].a, i});
    }
    Topology topo;
    topo.slack = slack_it->second;
    topo.parent_edge.assign(n, std::nullopt);
    topo.parent_bus.assign(n, SIZE_MAX);
    topo.base_voltage_v.assign(n, 0.0);
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> q;
    q.push(topo.slack);
    seen[topo.slack] = true;
    topo.base_voltage_v[topo.slack] = f.nominal_voltage_v;
    while (!q.empty()) {
        const std::size_t u = q.front();
        q.pop();
        topo.order.push_back(u);
        for (auto [v, ei] : adj[u]) {
            if (seen[v]) continue;
            seen[v] = true;
            const Edge& e = edges[ei];
            topo.parent_edge[v] = e.ref;
            topo.parent_bus[v] = u;
            if (e.ref.kind == EdgeRef::Kind::transformer) {
                const auto& x = f.transformers[e.ref.index];
                if (e.a != u)
                    throw TopologyError("transformer '" + x.id +
                                        "' is reached from its secondary side");
                topo.base_voltage_v[v] = x.secondary_voltage_v;
            } else {
                topo.base_voltage_v[v] = topo.base_voltage_v[u];
            }
            q.push(v);
        }
    }
    if (topo.order.size() != n) {
        std::string msg = "feeder is disconnected; unreachable buses:";
        for (std::size_t i = 0; i < n; ++i)
            if (!seen[i]) msg += " " + f.buses[i].id;
        throw TopologyError(msg);
    }
    return topo;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

class Issues {
public:
    void add(std::string loc, std::string msg) { out_.push_back({std::move(loc), std::move(msg)}); }
    std::vector<ValidationIssue> take() { return std::move(out_); }

private:
    std::vector<ValidationIssue> out_;
};

std::string at(const char* coll, std::size_t i, const char* field = nullptr) {
    std::string s = std::string("/") + coll + "/" + std::to_string(i);
    if (field) s += std::string("/") + field;
    return s;
}

bool fractions_ok(const ZipFractions& z) {
    return std::abs(z.z + z.i + z.p - 1.0) <= 1e-9 && z.z >= -1e-12 && z.i >= -1e-12 &&
           z.p >= -1e-12;
}

template <class T>
void check_unique(const std::vector<T>& items, const char* coll, Issues& issues) {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].id.empty()) issues.add(at(coll, i, "id"), "id must be non-empty");
        if (!ids.insert(items[i].id).second)
            issues.add(at(coll, i, "id"), "duplicate id '" + items[i].id + "'");
    }
}

}  // namespace

std::vector<ValidationIssue> validate(const FeederModel& f) {
    Issues issues;
    if (!(f.nominal_voltage_v > 0.0)) issues.add("/nominal_voltage_v", "must be positive");
    if (!(f.base_kva > 0.0)) issues.add("/base_kva", "must be positive");
    if (!(f.slack_voltage_pu > 0.0)) issues.add("/slack_voltage_pu", "must be positive");

    check_unique(f.buses, "buses", issues);
    check_unique(f.lines, "lines", issues);
    check_unique(f.transformers, "transformers", issues);
    check_unique(f.capacitors, "capacitors", issues);
    check_unique(f.fuses, "fuses", issues);
    check_unique(f.zip_loads, "zip_loads", issues);
    check_unique(f.houses, "houses", issues);

    auto bus_phases = [&](const std::string& id) -> std::optional<PhaseSet> {
        if (auto i = f.bus_index(id)) return f.buses[*i].phases;
        return std::nullopt;
    };

    if (!f.bus_index(f.slack_bus_id)) issues.add("/slack_bus", "unknown bus '" + f.slack_bus_id + "'");
    for (std::size_t i = 0; i < f.buses.size(); ++i)
        if (f.buses[i].phases.empty()) issues.add(at("buses", i, "phases"), "bus has no phases");

    for (std::size_t i = 0; i < f.lines.size(); ++i) {
        const auto& l = f.lines[i];
        auto pf = bus_phases(l.from_bus);
        auto pt = bus_phases(l.to_bus);
        if (!pf) issues.add(at("lines", i, "from"), "unknown bus '" + l.from_bus + "'");
        if (!pt) issues.add(at("lines", i, "to"), "unknown bus '" + l.to_bus + "'");
        if (l.phases.empty()) issues.add(at("lines", i, "z_ohm"), "line has no phases");
        if (pf && !pf->contains(l.phases))
            issues.add(at("lines", i, "z_ohm"), "line phases not present at bus '" + l.from_bus + "'");
        if (pt && !pt->contains(l.phases))
            issues.add(at("lines", i, "z_ohm"), "line phases not present at bus '" + l.to_bus + "'");
        for (Phase p : kAllPhases) {
            if (!l.phases.has(p)) continue;
            const Complex z = l.z_ohm[idx(p)];
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
                issues.add(at("lines", i, "z_ohm"), "non-finite impedance");
            else if (z.real() < 0.0)
                issues.add(at("lines", i, "z_ohm"), "negative resistance on phase " +
                                                        std::string(1, phase_letter(p)));
        }
        if (!(l.ampacity_a > 0.0)) issues.add(at("lines", i, "ampacity_a"), "ampacity must be positive");
        if (!(l.length_m >= 0.0)) issues.add(at("lines", i, "length_m"), "length must be non-negative");
    }

    for (std::size_t i = 0; i < f.transformers.size(); ++i) {
        const auto& x = f.transformers[i];
        auto pp = bus_phases(x.primary_bus);
        auto ps = bus_phases(x.secondary_bus);
        if (!pp) issues.add(at("transformers", i, "primary"), "unknown bus '" + x.primary_bus + "'");
        else if (!pp->has(x.phase))
            issues.add(at("transformers", i, "phase"), "phase not present at primary bus");
        if (!ps) issues.add(at("transformers", i, "secondary"), "unknown bus '" + x.secondary_bus + "'");
        else if (*ps != PhaseSet{x.phase})
            issues.add(at("transformers", i, "secondary"),
                       "secondary bus must carry exactly the transformer phase");
        if (!(x.rating_kva > 0.0)) issues.add(at("transformers", i, "rating_kva"), "must be positive");
        if (!x.thermal && !(x.rating_kva >= transformer::kMinTableRatingKva &&
                            x.rating_kva <= transformer::kMaxTableRatingKva))
            issues.add(at("transformers", i, "rating_kva"),
                       "rating outside 5-175 kVA requires explicit thermal parameters");
        if (x.thermal) {
            try {
                transformer::validate(thermal_params(x));
            } catch (const Error& e) {
                issues.add(at("transformers", i, "thermal"), e.what());
            }
        }
        if (!std::isfinite(x.z_pu.real()) || !std::isfinite(x.z_pu.imag()) || x.z_pu.real() < 0.0)
            issues.add(at("transformers", i, "z_pu"), "impedance must be finite with r >= 0");
        if (!(x.tap > 0.0)) issues.add(at("transformers", i, "tap"), "must be positive");
        if (!(x.secondary_voltage_v > 0.0))
            issues.add(at("transformers", i, "secondary_voltage_v"), "must be positive");
        if (!(x.planning_kva >= 0.0))
            issues.add(at("transformers", i, "planning_kva"), "must be non-negative");
    }

    for (std::size_t i = 0; i < f.capacitors.size(); ++i) {
        const auto& c = f.capacitors[i];
        auto pb = bus_phases(c.bus);
        if (!pb) issues.add(at("capacitors", i, "bus"), "unknown bus '" + c.bus + "'");
        else if (!pb->contains(c.phases))
            issues.add(at("capacitors", i, "kvar"), "capacitor phases not present at bus");
        for (Phase p : kAllPhases)
            if (c.phases.has(p) && !(c.kvar[idx(p)] >= 0.0))
                issues.add(at("capacitors", i, "kvar"), "kvar must be non-negative");
        if (c.control.mode == CapControlMode::voltage) {
            if (!(c.control.v_on_pu < c.control.v_off_pu))
                issues.add(at("capacitors", i, "control"), "requires v_on_pu < v_off_pu");
            auto ps = bus_phases(c.control.sense_bus);
            if (!ps) issues.add(at("capacitors", i, "control"), "unknown sense bus '" + c.control.sense_bus + "'");
            else if (!ps->has(c.control.sense_phase))
                issues.add(at("capacitors", i, "control"), "sense phase not present at sense bus");
        }
    }

    for (std::size_t i = 0; i < f.fuses.size(); ++i) {
        if (!f.line_index(f.fuses[i].line))
            issues.add(at("fuses", i, "line"), "unknown line '" + f.fuses[i].line + "'");
        if (!(f.fuses[i].current_limit_a > 0.0))
            issues.add(at("fuses", i, "current_limit_a"), "must be positive");
    }

    for (std::size_t i = 0; i < f.zip_loads.size(); ++i) {
        const auto& z = f.zip_loads[i];
        auto pb = bus_phases(z.bus);
        if (!pb) issues.add(at("zip_loads", i, "bus"), "unknown bus '" + z.bus + "'");
        else if (!pb->contains(z.phases))
            issues.add(at("zip_loads", i, "base_kva"), "load phases not present at bus");
        if (!fractions_ok(z.real)) issues.add(at("zip_loads", i, "real"), "z+i+p must sum to 1");
        if (!fractions_ok(z.reactive)) issues.add(at("zip_loads", i, "reactive"), "z+i+p must sum to 1");
        if (!(z.power_factor > 0.0 && z.power_factor <= 1.0))
            issues.add(at("zip_loads", i, "power_factor"), "must lie in (0, 1]");
    }

    for (std::size_t i = 0; i < f.houses.size(); ++i) {
        const auto& h = f.houses[i];
        auto pb = bus_phases(h.bus);
        if (!pb) issues.add(at("houses", i, "bus"), "unknown bus '" + h.bus + "'");
        else if (!pb->has(h.phase)) issues.add(at("houses", i, "phase"), "phase not present at bus");
        try {
            hvac::validate(h.hvac);
        } catch (const Error& e) {
            issues.add(at("houses", i, "hvac"), e.what());
        }
        if (!std::isfinite(h.gain_kw) || h.gain_kw < 0.0)
            issues.add(at("houses", i, "gain_kw"), "must be finite and non-negative");
        if (!(h.zip_kva >= 0.0)) issues.add(at("houses", i, "zip"), "kva must be non-negative");
        if (!(h.zip_power_factor > 0.0 && h.zip_power_factor <= 1.0))
            issues.add(at("houses", i, "zip"), "power factor must lie in (0, 1]");
        if (!fractions_ok(h.zip_real) || !fractions_ok(h.zip_reactive))
            issues.add(at("houses", i, "zip"), "z+i+p must sum to 1");
    }

    try {
        build_topology(f);
    } catch (const TopologyError& e) {
        issues.add("/", std::string("topology: ") + e.what());
    }
    return issues.take();
}

void require_valid(const FeederModel& f) {
    build_topology(f);  // throws TopologyError with the cycle
    auto issues = validate(f);
    if (issues.empty()) return;
    std::string msg = "feeder '" + f.name + "' failed validation:";
    for (const auto& i : issues) msg += "\n  " + i.location + ": " + i.message;
    throw ModelError(msg);
}

// ---------------------------------------------------------------------------
// JSON schema

namespace {

class Reader {
public:
    explicit Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

    const json& raw() const { return j_; }
    const std::string& path() const { return path_; }

    void expect_object() const {
        if (!j_.is_object()) throw SchemaError(leaf(), path_, "expected an object");
    }

    void only(std::initializer_list<const char*> allowed) const {
        expect_object();
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || it.key() == a;
            if (!ok) throw SchemaError(it.key(), path_ + "/" + it.key(), "unknown field");
        }
    }

    bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    Reader child(const char* key) const {
        if (!j_.contains(key)) throw SchemaError(key, path_ + "/" + key, "missing required field");
        return Reader(j_.at(key), path_ + "/" + key);
    }

    double number(const char* key) const {
        auto c = child(key);
        if (!c.j_.is_number()) throw SchemaError(key, c.path_, "expected a number");
        const double v = c.j_.get<double>();
        if (!std::isfinite(v)) throw SchemaError(key, c.path_, "expected a finite number");
        return v;
    }
    double number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::string string(const char* key) const {
        auto c = child(key);
        if (!c.j_.is_string()) throw SchemaError(key, c.path_, "expected a string");
        return c.j_.get<std::string>();
    }
    std::string string(const char* key, std::string fallback) const {
        return has(key) ? string(key) : fallback;
    }

    bool boolean(const char* key, bool fallback) const {
        if (!has(key)) return fallback;
        auto c = child(key);
        if (!c.j_.is_boolean()) throw SchemaError(key, c.path_, "expected a boolean");
        return c.j_.get<bool>();
    }

    Phase phase(const char* key) const {
        auto s = string(key);
        auto p = parse_phase(s);
        if (!p) throw SchemaError(key, path_ + "/" + key, "expected one of A, B, C");
        return *p;
    }

    PhaseSet phases(const char* key) const {
        auto s = string(key);
        auto p = PhaseSet::parse(s);
        if (!p) throw SchemaError(key, path_ + "/" + key, "expected a phase set such as \"ABC\"");
        return *p;
    }

    Complex complex(const char* key) const {
        auto c = child(key);
        return c.as_complex(key);
    }

    Complex as_complex(const char* key) const {
        if (!j_.is_array() || j_.size() != 2 || !j_[0].is_number() || !j_[1].is_number())
            throw SchemaError(key, path_, "expected [real, imag]");
        return {j_[0].get<double>(), j_[1].get<double>()};
    }

    ZipFractions fractions(const char* key) const {
        auto c = child(key);
        if (!c.j_.is_array() || c.j_.size() != 3)
            throw SchemaError(key, c.path_, "expected [z, i, p]");
        for (const auto& v : c.j_)
            if (!v.is_number()) throw SchemaError(key, c.path_, "expected [z, i, p] numbers");
        return {c.j_[0].get<double>(), c.j_[1].get<double>(), c.j_[2].get<double>()};
    }

    /// {"A": v, ...} per-phase map of numbers; returns the phase set present.
    PhaseSet phase_numbers(const char* key, std::array<double, 3>& out) const {
        auto c = child(key);
        c.expect_object();
        PhaseSet set;
        for (auto it = c.j_.begin(); it != c.j_.end(); ++it) {
            auto p = parse_phase(it.key());
            if (!p) throw SchemaError(it.key(), c.path_ + "/" + it.key(), "expected phase key A, B, or C");
            if (!it.value().is_number())
                throw SchemaError(it.key(), c.path_ + "/" + it.key(), "expected a number");
            out[idx(*p)] = it.value().get<double>();
            set.add(*p);
        }
        if (set.empty()) throw SchemaError(key, c.path_, "at least one phase required");
        return set;
    }

    PhaseSet phase_complexes(const char* key, std::array<Complex, 3>& out) const {
        auto c = child(key);
        c.expect_object();
        PhaseSet set;
        for (auto it = c.j_.begin(); it != c.j_.end(); ++it) {
            auto p = parse_phase(it.key());
            if (!p) throw SchemaError(it.key(), c.path_ + "/" + it.key(), "expected phase key A, B, or C");
            out[idx(*p)] = Reader(it.value(), c.path_ + "/" + it.key()).as_complex(it.key().c_str());
            set.add(*p);
        }
        if (set.empty()) throw SchemaError(key, c.path_, "at least one phase required");
        return set;
    }

    template <class F>
    void each(const char* key, F&& fn) const {
        if (!has(key)) return;
        auto c = child(key);
        if (!c.j_.is_array()) throw SchemaError(key, c.path_, "expected an array");
        for (std::size_t i = 0; i < c.j_.size(); ++i)
            fn(Reader(c.j_[i], c.path_ + "/" + std::to_string(i)));
    }

private:
    std::string leaf() const {
        auto pos = path_.rfind('/');
        return pos == std::string::npos ? path_ : path_.substr(pos + 1);
    }

    const json& j_;
    std::string path_;
};

hvac::HouseParams parse_hvac(const Reader& r) {
    r.only({"c_air_kj_per_c", "c_mass_kj_per_c", "ua_kw_per_c", "hm_kw_per_c", "r_gain", "t_low_c",
            "t_high_c", "q_ac_kw", "p_on_kw", "power_factor"});
    hvac::HouseParams p;
    p.c_air_kj_per_c = r.number("c_air_kj_per_c");
    p.c_mass_kj_per_c = r.number("c_mass_kj_per_c");
    p.ua_kw_per_c = r.number("ua_kw_per_c");
    p.hm_kw_per_c = r.number("hm_kw_per_c");
    p.r_gain = r.number("r_gain");
    p.t_low_c = r.number("t_low_c");
    p.t_high_c = r.number("t_high_c");
    p.q_ac_kw = r.number("q_ac_kw");
    p.p_on_kw = r.number("p_on_kw");
    p.power_factor = r.number("power_factor", 0.97);
    return p;
}

transformer::XfmrThermalParams parse_thermal(const Reader& r) {
    r.only({"tau_winding_min", "rated_winding_rise_c", "rated_oil_rise_c", "full_load_loss_pu",
            "no_load_loss_pu", "oil_volume_gal", "core_coil_weight_lb", "tank_fittings_weight_lb",
            "fixed_tau_oil_min"});
    transformer::XfmrThermalParams p;
    p.tau_winding_min = r.number("tau_winding_min", 5.0);
    p.rated_winding_rise_c = r.number("rated_winding_rise_c", 80.0);
    p.rated_oil_rise_c = r.number("rated_oil_rise_c", 60.0);
    p.full_load_loss_pu = r.number("full_load_loss_pu");
    p.no_load_loss_pu = r.number("no_load_loss_pu");
    p.oil_volume_gal = r.number("oil_volume_gal");
    p.core_coil_weight_lb = r.number("core_coil_weight_lb");
    p.tank_fittings_weight_lb = r.number("tank_fittings_weight_lb");
    if (r.has("fixed_tau_oil_min")) p.fixed_tau_oil_min = r.number("fixed_tau_oil_min");
    return p;
}

FeederModel parse(const json& doc) {
    Reader root(doc, "");
    root.only({"schema_version", "name", "nominal_voltage_v", "base_kva", "slack_bus",
               "slack_voltage_pu", "buses", "lines", "transformers", "capacitors", "fuses",
               "zip_loads", "houses"});
    {
        auto v = root.child("schema_version");
        if (!v.raw().is_number_integer() || v.raw().get<int>() != kSchemaVersion)
            throw SchemaError("schema_version", "/schema_version",
                              "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");
    }
    FeederModel f;
    f.name = root.string("name", "");
    f.nominal_voltage_v = root.number("nominal_voltage_v");
    f.base_kva = root.number("base_kva", 1000.0);
    f.slack_bus_id = root.string("slack_bus");
    f.slack_voltage_pu = root.number("slack_voltage_pu", 1.0);

    root.each("buses", [&](const Reader& r) {
        r.only({"id", "phases", "service_node"});
        f.buses.push_back({r.string("id"), r.phases("phases"), r.boolean("service_node", false)});
    });
    root.each("lines", [&](const Reader& r) {
        r.only({"id", "from", "to", "z_ohm", "ampacity_a", "length_m"});
        LineSegment l;
        l.id = r.string("id");
        l.from_bus = r.string("from");
        l.to_bus = r.string("to");
        l.phases = r.phase_complexes("z_ohm", l.z_ohm);
        l.ampacity_a = r.number("ampacity_a");
        l.length_m = r.number("length_m", 0.0);
        f.lines.push_back(std::move(l));
    });
    root.each("transformers", [&](const Reader& r) {
        r.only({"id", "primary", "secondary", "phase", "rating_kva", "z_pu", "tap",
                "secondary_voltage_v", "planning_kva", "thermal"});
        DistributionTransformer x;
        x.id = r.string("id");
        x.primary_bus = r.string("primary");
        x.secondary_bus = r.string("secondary");
        x.phase = r.phase("phase");
        x.rating_kva = r.number("rating_kva");
        if (r.has("z_pu")) x.z_pu = r.complex("z_pu");
        x.tap = r.number("tap", 1.0);
        x.secondary_voltage_v = r.number("secondary_voltage_v", 240.0);
        x.planning_kva = r.number("planning_kva", 0.0);
        if (r.has("thermal")) x.thermal = parse_thermal(r.child("thermal"));
        f.transformers.push_back(std::move(x));
    });
    root.each("capacitors", [&](const Reader& r) {
        r.only({"id", "bus", "kvar", "control", "on"});
        CapacitorBank c;
        c.id = r.string("id");
        c.bus = r.string("bus");
        c.phases = r.phase_numbers("kvar", c.kvar);
        c.on = r.boolean("on", true);
        if (r.has("control")) {
            auto ctl = r.child("control");
            ctl.only({"mode", "v_on_pu", "v_off_pu", "sense_bus", "sense_phase"});
            const auto mode = ctl.string("mode");
            if (mode == "fixed") {
                c.control.mode = CapControlMode::fixed;
            } else if (mode == "voltage") {
                c.control.mode = CapControlMode::voltage;
                c.control.v_on_pu = ctl.number("v_on_pu");
                c.control.v_off_pu = ctl.number("v_off_pu");
                c.control.sense_bus = ctl.string("sense_bus", c.bus);
                c.control.sense_phase = ctl.has("sense_phase") ? ctl.phase("sense_phase") : Phase::A;
            } else {
                throw SchemaError("mode", ctl.path() + "/mode", "expected \"fixed\" or \"voltage\"");
            }
        }
        f.capacitors.push_back(std::move(c));
    });
    root.each("fuses", [&](const Reader& r) {
        r.only({"id", "line", "current_limit_a", "open"});
        f.fuses.push_back({r.string("id"), r.string("line"), r.number("current_limit_a"),
                           r.boolean("open", false)});
    });
    root.each("zip_loads", [&](const Reader& r) {
        r.only({"id", "bus", "base_kva", "power_factor", "real", "reactive"});
        ZipLoad z;
        z.id = r.string("id");
        z.bus = r.string("bus");
        z.phases = r.phase_numbers("base_kva", z.base_kva);
        z.power_factor = r.number("power_factor", 1.0);
        z.real = r.has("real") ? r.fractions("real") : ZipFractions{};
        z.reactive = r.has("reactive") ? r.fractions("reactive") : ZipFractions{};
        f.zip_loads.push_back(std::move(z));
    });
    root.each("houses", [&](const Reader& r) {
        r.only({"id", "bus", "phase", "hvac", "gain_kw", "zip"});
        House h;
        h.id = r.string("id");
        h.bus = r.string("bus");
        h.phase = r.phase("phase");
        h.hvac = parse_hvac(r.child("hvac"));
        h.gain_kw = r.number("gain_kw", 1.0);
        if (r.has("zip")) {
            auto z = r.child("zip");
            z.only({"kva", "power_factor", "real", "reactive"});
            h.zip_kva = z.number("kva");
            h.zip_power_factor = z.number("power_factor", 1.0);
            h.zip_real = z.has("real") ? z.fractions("real") : ZipFractions{};
            h.zip_reactive = z.has("reactive") ? z.fractions("reactive") : ZipFractions{};
        } else {
            h.zip_kva = 0.0;
        }
        f.houses.push_back(std::move(h));
    });
    return f;
}

json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }
json fractions_json(const ZipFractions& z) { return json::array({z.z, z.i, z.p}); }

json serialize(const FeederModel& f) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["name"] = f.name;
    doc["nominal_voltage_v"] = f.nominal_voltage_v;
    doc["base_kva"] = f.base_kva;
    doc["slack_bus"] = f.slack_bus_id;
    doc["slack_voltage_pu"] = f.slack_voltage_pu;

    json buses = json::array();
    for (const auto& b : f.buses)
        buses.push_back({{"id", b.id}, {"phases", b.phases.to_string()}, {"service_node", b.is_service_node}});
    doc["buses"] = std::move(buses);

    json lines = json::array();
    for (const auto& l : f.lines) {
        json z = json::object();
        for (Phase p : kAllPhases)
            if (l.phases.has(p)) z[std::string(1, phase_letter(p))] = complex_json(l.z_ohm[idx(p)]);
        lines.push_back({{"id", l.id}, {"from", l.from_bus}, {"to", l.to_bus}, {"z_ohm", std::move(z)},
                         {"ampacity_a", l.ampacity_a}, {"length_m", l.length_m}});
    }
    doc["lines"] = std::move(lines);

    json xfmrs = json::array();
    for (const auto& x : f.transformers) {
        json j = {{"id", x.id},
                  {"primary", x.primary_bus},
                  {"secondary", x.secondary_bus},
                  {"phase", std::string(1, phase_letter(x.phase))},
                  {"rating_kva", x.rating_kva},
                  {"z_pu", complex_json(x.z_pu)},
                  {"tap", x.tap},
                  {"secondary_voltage_v", x.secondary_voltage_v},
                  {"planning_kva", x.planning_kva}};
        if (x.thermal) {
            const auto& t = *x.thermal;
            json th = {{"tau_winding_min", t.tau_winding_min},
                       {"rated_winding_rise_c", t.rated_winding_rise_c},
                       {"rated_oil_rise_c", t.rated_oil_rise_c},
                       {"full_load_loss_pu", t.full_load_loss_pu},
                       {"no_load_loss_pu", t.no_load_loss_pu},
                       {"oil_volume_gal", t.oil_volume_gal},
                       {"core_coil_weight_lb", t.core_coil_weight_lb},
                       {"tank_fittings_weight_lb", t.tank_fittings_weight_lb}};
            if (t.fixed_tau_oil_min) th["fixed_tau_oil_min"] = *t.fixed_tau_oil_min;
            j["thermal"] = std::move(th);
        }
        xfmrs.push_back(std::move(j));
    }
    doc["transformers"] = std::move(xfmrs);

    json caps = json::array();
    for (const auto& c : f.capacitors) {
        json kvar = json::object();
        for (Phase p : kAllPhases)
            if (c.phases.has(p)) kvar[std::string(1, phase_letter(p))] = c.kvar[idx(p)];
        json ctl;
        if (c.control.mode == CapControlMode::fixed) {
            ctl = {{"mode", "fixed"}};
        } else {
            ctl = {{"mode", "voltage"},
                   {"v_on_pu", c.control.v_on_pu},
                   {"v_off_pu", c.control.v_off_pu},
                   {"sense_bus", c.control.sense_bus},
                   {"sense_phase", std::string(1, phase_letter(c.control.sense_phase))}};
        }
        caps.push_back({{"id", c.id}, {"bus", c.bus}, {"kvar", std::move(kvar)}, {"control", std::move(ctl)}, {"on", c.on}});
    }
    doc["capacitors"] = std::move(caps);

    json fuses = json::array();
    for (const auto& fu : f.fuses)
        fuses.push_back({{"id", fu.id}, {"line", fu.line}, {"current_limit_a", fu.current_limit_a}, {"open", fu.open}});
    doc["fuses"] = std::move(fuses);

    json zips = json::array();
    for (const auto& z : f.zip_loads) {
        json kva = json::object();
        for (Phase p : kAllPhases)
            if (z.phases.has(p)) kva[std::string(1, phase_letter(p))] = z.base_kva[idx(p)];
        zips.push_back({{"id", z.id}, {"bus", z.bus}, {"base_kva", std::move(kva)},
                        {"power_factor", z.power_factor}, {"real", fractions_json(z.real)},
                        {"reactive", fractions_json(z.reactive)}});
    }
    doc["zip_loads"] = std::move(zips);

    json houses = json::array();
    for (const auto& h : f.houses) {
        const auto& p = h.hvac;
        json hv = {{"c_air_kj_per_c", p.c_air_kj_per_c}, {"c_mass_kj_per_c", p.c_mass_kj_per_c},
                   {"ua_kw_per_c", p.ua_kw_per_c},       {"hm_kw_per_c", p.hm_kw_per_c},
                   {"r_gain", p.r_gain},                 {"t_low_c", p.t_low_c},
                   {"t_high_c", p.t_high_c},             {"q_ac_kw", p.q_ac_kw},
                   {"p_on_kw", p.p_on_kw},               {"power_factor", p.power_factor}};
        json zip = {{"kva", h.zip_kva}, {"power_factor", h.zip_power_factor},
                    {"real", fractions_json(h.zip_real)}, {"reactive", fractions_json(h.zip_reactive)}};
        houses.push_back({{"id", h.id}, {"bus", h.bus}, {"phase", std::string(1, phase_letter(h.phase))},
                          {"hvac", std::move(hv)}, {"gain_kw", h.gain_kw}, {"zip", std::move(zip)}});
    }
    doc["houses"] = std::move(houses);
    return doc;
}

}  // namespace

FeederModel feeder_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw SchemaError("", "/", std::string("invalid JSON: ") + e.what());
    }
    return parse(doc);
}

std::string feeder_to_json(const FeederModel& feeder) { return serialize(feeder).dump(1, '\t') + "\n"; }

FeederModel load_feeder(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feeder file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    FeederModel f = feeder_from_json(buf.str());
    require_valid(f);
    return f;
}

void save_feeder(const FeederModel& feeder, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write feeder file '" + path.string() + "'");
    out << feeder_to_json(feeder);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace tclreg::netmodel
