#pragma once

// Unbalanced three-phase radial feeder: buses, lines and the node indexing
// shared by every downstream model. All electrical quantities are per-unit.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cvr/error.hpp"
#include "cvr/phase.hpp"
#include "cvr/zip_load.hpp"

namespace cvr {

struct Bus {
    std::string id;
    PhaseSet phases = PhaseSet::all();
    ZipCoefficients zip;
    std::optional<PvInverter> pv;

    PhaseSet pv_phases() const {
        if (!pv) {
            return {};
        }
        return pv->phases.empty() ? phases : pv->phases;
    }
};

struct Line {
    std::string from_id;
    std::string to_id;
    Eigen::Matrix3d r = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d x = Eigen::Matrix3d::Zero();
};

enum class MeterKind { load, pv };

// Service transformer feeding one bus phase; links measurement files to the network.
struct MeterAssignment {
    std::string id;
    std::string bus;
    int phase = 0;
    MeterKind kind = MeterKind::load;
};

struct Feeder {
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::string root_id;
    std::array<double, 3> v0{1.0, 1.0, 1.0}; // squared head voltage per phase
    double base_voltage_kv = 13.8;
    double base_power_kva = 100.0;
    std::vector<MeterAssignment> meters;

    std::optional<std::size_t> find_bus(const std::string& id) const {
        for (std::size_t i = 0; i < buses.size(); ++i) {
            if (buses[i].id == id) {
                return i;
            }
        }
        return std::nullopt;
    }
};

struct Violation {
    std::string kind;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }

    bool has(const std::string& kind) const {
        for (const auto& v : violations) {
            if (v.kind == kind) {
                return true;
            }
        }
        return false;
    }

    std::string summary() const {
        std::ostringstream os;
        for (const auto& v : violations) {
            os << v.kind << ": " << v.message << '\n';
        }
        return os.str();
    }
};

namespace detail {

inline bool is_symmetric(const Eigen::Matrix3d& m, double tol = 1e-12) {
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

} // namespace detail

// Lists every violation of the radial-feeder invariants. Lines may be given in
// either direction; they are oriented away from the root.
inline ValidationReport validate_radial(const Feeder& feeder) {
    ValidationReport report;
    auto add = [&](std::string kind, std::string msg) {
        report.violations.push_back({std::move(kind), std::move(msg)});
    };

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < feeder.buses.size(); ++i) {
        const Bus& b = feeder.buses[i];
        if (!index.emplace(b.id, i).second) {
            add("duplicate-bus", "bus '" + b.id + "' defined more than once");
        }
        if (b.phases.empty()) {
            add("empty-phases", "bus '" + b.id + "' has no phases");
        }
        if (b.zip.normalized && !zip_is_normalized(b.zip)) {
            add("zip-not-normalized", "bus '" + b.id + "' ZIP coefficients do not sum to 1");
        }
        if (b.pv) {
            if (b.pv->s_cap < 0.0) {
                add("pv-rating", "bus '" + b.id + "' PV rating is negative");
            }
            if (!b.pv->phases.is_subset_of(b.phases)) {
                add("pv-phases", "bus '" + b.id + "' PV placed on a phase the bus lacks");
            }
        }
    }

    const auto root_it = index.find(feeder.root_id);
    if (root_it == index.end()) {
        add("missing-root", "root bus '" + feeder.root_id + "' not found");
    } else if (feeder.buses[root_it->second].pv) {
        add("pv-on-root", "PV inverters cannot sit on the feeder head");
    }

    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(feeder.buses.size());
    bool endpoints_ok = true;
    for (std::size_t l = 0; l < feeder.lines.size(); ++l) {
        const Line& line = feeder.lines[l];
        const std::string tag = "line " + line.from_id + "-" + line.to_id;
        const auto f = index.find(line.from_id);
        const auto t = index.find(line.to_id);
        if (f == index.end() || t == index.end()) {
            add("dangling-endpoint", tag + " references an unknown bus");
            endpoints_ok = false;
            continue;
        }
        if (f->second == t->second) {
            add("self-loop", tag + " connects a bus to itself");
            endpoints_ok = false;
            continue;
        }
        adj[f->second].push_back({t->second, l});
        adj[t->second].push_back({f->second, l});

        if (!detail::is_symmetric(line.r) || !detail::is_symmetric(line.x)) {
            add("asymmetric-impedance", tag + " has a non-symmetric r or x matrix");
        }
        for (int p = 0; p < kPhaseCount; ++p) {
            if (line.r(p, p) < 0.0) {
                add("negative-resistance", tag + " has a negative self resistance");
            }
        }
        const PhaseSet shared(feeder.buses[f->second].phases.bits() &
                              feeder.buses[t->second].phases.bits());
        for (int i = 0; i < kPhaseCount; ++i) {
            for (int j = 0; j < kPhaseCount; ++j) {
                if ((!shared.contains(i) || !shared.contains(j)) &&
                    (line.r(i, j) != 0.0 || line.x(i, j) != 0.0)) {
                    add("absent-phase-impedance", tag + " has impedance on a phase absent at an endpoint");
                    i = j = kPhaseCount;
                }
            }
        }
    }

    if (feeder.buses.empty()) {
        add("empty-feeder", "feeder has no buses");
        return report;
    }
    if (feeder.lines.size() + 1 != feeder.buses.size()) {
        add("not-radial", "not radial: |E| != |N|-1 (" + std::to_string(feeder.lines.size()) +
                              " lines, " + std::to_string(feeder.buses.size()) + " buses)");
    }

    if (root_it != index.end() && endpoints_ok) {
        std::vector<int> parent(feeder.buses.size(), -2);
        std::vector<std::size_t> via(feeder.buses.size(), 0);
        std::queue<std::size_t> frontier;
        parent[root_it->second] = -1;
        frontier.push(root_it->second);
        bool cycle = false;
        while (!frontier.empty()) {
            const std::size_t u = frontier.front();
            frontier.pop();
            for (auto [w, l] : adj[u]) {
                if (parent[u] >= 0 && l == via[u]) {
                    continue;
                }
                if (parent[w] != -2) {
                    cycle = true;
                    continue;
                }
                parent[w] = static_cast<int>(u);
                via[w] = l;
                frontier.push(w);
            }
        }
        if (cycle) {
            add("cycle", "network contains a loop");
        }
        for (std::size_t i = 0; i < feeder.buses.size(); ++i) {
            if (parent[i] == -2) {
                add("disconnected", "bus '" + feeder.buses[i].id + "' is not reachable from the root");
            } else if (parent[i] >= 0) {
                const Bus& up = feeder.buses[static_cast<std::size_t>(parent[i])];
                if (!feeder.buses[i].phases.is_subset_of(up.phases)) {
                    add("phase-mismatch", "bus '" + feeder.buses[i].id + "' has phases missing at its predecessor '" +
                                              up.id + "'");
                }
            }
        }
    }

    for (const auto& m : feeder.meters) {
        const auto it = index.find(m.bus);
        if (it == index.end()) {
            add("meter-bus", "meter '" + m.id + "' references unknown bus '" + m.bus + "'");
        } else if (!feeder.buses[it->second].phases.contains(m.phase) ||
                   (root_it != index.end() && it->second == root_it->second)) {
            add("meter-phase", "meter '" + m.id + "' is not on a served non-root bus phase");
        } else if (m.kind == MeterKind::pv && !feeder.buses[it->second].pv_phases().contains(m.phase)) {
            add("meter-pv", "PV meter '" + m.id + "' sits on a bus phase without an inverter");
        }
    }
    return report;
}

// One (bus, phase) pair of a non-root bus. The node list doubles as the line
// index: node k is also the phase row of the line entering its bus.
struct Node {
    std::size_t bus = 0;
    int phase = 0;
};

// Breadth-first ordering of a validated radial feeder.
class NetworkIndex {
public:
    static NetworkIndex build(const Feeder& feeder) {
        const ValidationReport report = validate_radial(feeder);
        if (!report.ok()) {
            throw TopologyError("invalid feeder:\n" + report.summary());
        }
        NetworkIndex ix;
        const std::size_t n = feeder.buses.size();
        ix.root_ = *feeder.find_bus(feeder.root_id);
        ix.parent_.assign(n, -1);
        ix.incoming_.assign(n, -1);
        ix.node_of_.assign(n, {-1, -1, -1});

        std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);
        for (std::size_t l = 0; l < feeder.lines.size(); ++l) {
            const std::size_t f = *feeder.find_bus(feeder.lines[l].from_id);
            const std::size_t t = *feeder.find_bus(feeder.lines[l].to_id);
            adj[f].push_back({t, l});
            adj[t].push_back({f, l});
        }
        std::vector<bool> seen(n, false);
        std::queue<std::size_t> frontier;
        frontier.push(ix.root_);
        seen[ix.root_] = true;
        while (!frontier.empty()) {
            const std::size_t u = frontier.front();
            frontier.pop();
            ix.order_.push_back(u);
            for (auto [w, l] : adj[u]) {
                if (seen[w]) {
                    continue;
                }
                seen[w] = true;
                ix.parent_[w] = static_cast<int>(u);
                ix.incoming_[w] = static_cast<int>(l);
                frontier.push(w);
            }
        }
        for (std::size_t b : ix.order_) {
            if (b == ix.root_) {
                continue;
            }
            for (int p : feeder.buses[b].phases.list()) {
                ix.node_of_[b][static_cast<std::size_t>(p)] = static_cast<int>(ix.nodes_.size());
                ix.nodes_.push_back({b, p});
            }
        }
        return ix;
    }

    std::size_t root() const { return root_; }
    const std::vector<std::size_t>& order() const { return order_; }
    int parent(std::size_t bus) const { return parent_[bus]; }
    int incoming_line(std::size_t bus) const { return incoming_[bus]; }
    const std::vector<Node>& nodes() const { return nodes_; }
    std::size_t node_count() const { return nodes_.size(); }

    // Node index of (bus, phase) or -1 when the bus is the root or lacks the phase.
    int node(std::size_t bus, int phase) const { return node_of_[bus][static_cast<std::size_t>(phase)]; }

private:
    std::size_t root_ = 0;
    std::vector<std::size_t> order_;
    std::vector<int> parent_;
    std::vector<int> incoming_;
    std::vector<std::array<int, 3>> node_of_;
    std::vector<Node> nodes_;
};

} // namespace cvr
