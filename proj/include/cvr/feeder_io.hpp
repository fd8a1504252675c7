#pragma once

// Feeder JSON format:
//   { "buses": [{"id", "phases", "zip": {"kp": [..], "kq": [..]}, "pv": {"s_cap_kva", "phases"}}],
//     "lines": [{"from", "to", "r": [[..]], "x": [[..]]}],
//     "root", "v0", "base_voltage_kv", "base_power_kva",
//     "meters": [{"id", "bus", "phase", "kind"}] }
// Matrices are row-major per-unit; PV ratings are converted to per-unit here.

#include <nlohmann/json.hpp>

#include <fstream>
#include <string>

#include "cvr/feeder.hpp"

namespace cvr {

namespace detail {

using nlohmann::json;

inline const json& require(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw SchemaError(path + "." + key + ": missing required field");
    }
    return obj.at(key);
}

inline double as_number(const json& j, const std::string& path) {
    if (!j.is_number()) {
        throw SchemaError(path + ": expected a number");
    }
    return j.get<double>();
}

inline std::string as_id(const json& j, const std::string& path) {
    if (j.is_string()) {
        return j.get<std::string>();
    }
    if (j.is_number_integer()) {
        return std::to_string(j.get<long long>());
    }
    throw SchemaError(path + ": expected a string or integer identifier");
}

inline PhaseSet as_phases(const json& j, const std::string& path) {
    try {
        if (j.is_string()) {
            return PhaseSet::parse(j.get<std::string>());
        }
        if (j.is_array()) {
            PhaseSet out;
            for (const auto& p : j) {
                out.insert(parse_phase(p.get<std::string>()));
            }
            return out;
        }
    } catch (const SchemaError& e) {
        throw SchemaError(path + ": " + e.what());
    } catch (const json::exception&) {
    }
    throw SchemaError(path + ": expected \"abc\"-style string or array of phase names");
}

inline ZipTriple as_triple(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3) {
        throw SchemaError(path + ": expected array of 3 numbers");
    }
    return {as_number(j[0], path + "[0]"), as_number(j[1], path + "[1]"), as_number(j[2], path + "[2]")};
}

inline Eigen::Matrix3d as_matrix3(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3) {
        throw SchemaError(path + ": expected 3x3 row-major matrix");
    }
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || row.size() != 3) {
            throw SchemaError(path + "[" + std::to_string(i) + "]: expected 3 numbers");
        }
        for (int k = 0; k < 3; ++k) {
            m(i, k) = as_number(row[static_cast<std::size_t>(k)],
                                path + "[" + std::to_string(i) + "][" + std::to_string(k) + "]");
        }
    }
    return m;
}

inline json to_json(const Eigen::Matrix3d& m) {
    json out = json::array();
    for (int i = 0; i < 3; ++i) {
        out.push_back({m(i, 0), m(i, 1), m(i, 2)});
    }
    return out;
}

} // namespace detail

inline Feeder feeder_from_json(const nlohmann::json& j) {
    using detail::require;
    if (!j.is_object()) {
        throw SchemaError("feeder: expected a JSON object");
    }
    Feeder f;
    f.root_id = detail::as_id(require(j, "root", "feeder"), "feeder.root");
    if (j.contains("base_voltage_kv")) {
        f.base_voltage_kv = detail::as_number(j["base_voltage_kv"], "feeder.base_voltage_kv");
    }
    if (j.contains("base_power_kva")) {
        f.base_power_kva = detail::as_number(j["base_power_kva"], "feeder.base_power_kva");
    }
    if (!(f.base_power_kva > 0.0)) {
        throw SchemaError("feeder.base_power_kva: must be positive");
    }
    if (j.contains("v0")) {
        const auto& v0 = j["v0"];
        if (v0.is_number()) {
            f.v0.fill(v0.get<double>());
        } else if (v0.is_array() && v0.size() == 3) {
            for (std::size_t p = 0; p < 3; ++p) {
                f.v0[p] = detail::as_number(v0[p], "feeder.v0[" + std::to_string(p) + "]");
            }
        } else {
            throw SchemaError("feeder.v0: expected a number or array of 3 numbers");
        }
    }

    const auto& buses = require(j, "buses", "feeder");
    if (!buses.is_array()) {
        throw SchemaError("feeder.buses: expected an array");
    }
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const std::string path = "feeder.buses[" + std::to_string(i) + "]";
        const auto& b = buses[i];
        Bus bus;
        bus.id = detail::as_id(require(b, "id", path), path + ".id");
        bus.phases = detail::as_phases(require(b, "phases", path), path + ".phases");
        if (b.contains("zip")) {
            const auto& z = b["zip"];
            if (z.contains("kp")) {
                bus.zip.kp = detail::as_triple(z["kp"], path + ".zip.kp");
            }
            if (z.contains("kq")) {
                bus.zip.kq = detail::as_triple(z["kq"], path + ".zip.kq");
            }
            if (z.contains("normalized")) {
                bus.zip.normalized = z["normalized"].get<bool>();
            }
        }
        if (b.contains("pv") && !b["pv"].is_null()) {
            const auto& pv = b["pv"];
            PvInverter inv;
            inv.s_cap = detail::as_number(require(pv, "s_cap_kva", path + ".pv"), path + ".pv.s_cap_kva") /
                        f.base_power_kva;
            if (pv.contains("phases")) {
                inv.phases = detail::as_phases(pv["phases"], path + ".pv.phases");
            }
            bus.pv = inv;
        }
        f.buses.push_back(std::move(bus));
    }

    const auto& lines = require(j, "lines", "feeder");
    if (!lines.is_array()) {
        throw SchemaError("feeder.lines: expected an array");
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string path = "feeder.lines[" + std::to_string(i) + "]";
        const auto& l = lines[i];
        Line line;
        line.from_id = detail::as_id(require(l, "from", path), path + ".from");
        line.to_id = detail::as_id(require(l, "to", path), path + ".to");
        line.r = detail::as_matrix3(require(l, "r", path), path + ".r");
        line.x = detail::as_matrix3(require(l, "x", path), path + ".x");
        f.lines.push_back(std::move(line));
    }

    if (j.contains("meters")) {
        const auto& meters = j["meters"];
        if (!meters.is_array()) {
            throw SchemaError("feeder.meters: expected an array");
        }
        for (std::size_t i = 0; i < meters.size(); ++i) {
            const std::string path = "feeder.meters[" + std::to_string(i) + "]";
            const auto& m = meters[i];
            MeterAssignment a;
            a.id = detail::as_id(require(m, "id", path), path + ".id");
            a.bus = detail::as_id(require(m, "bus", path), path + ".bus");
            try {
                a.phase = parse_phase(require(m, "phase", path).get<std::string>());
            } catch (const nlohmann::json::exception&) {
                throw SchemaError(path + ".phase: expected a phase name");
            }
            const std::string kind = m.value("kind", std::string("load"));
            if (kind == "load") {
                a.kind = MeterKind::load;
            } else if (kind == "pv") {
                a.kind = MeterKind::pv;
            } else {
                throw SchemaError(path + ".kind: expected \"load\" or \"pv\"");
            }
            f.meters.push_back(std::move(a));
        }
    }
    return f;
}

inline nlohmann::json feeder_to_json(const Feeder& f) {
    nlohmann::json j;
    j["root"] = f.root_id;
    j["v0"] = f.v0;
    j["base_voltage_kv"] = f.base_voltage_kv;
    j["base_power_kva"] = f.base_power_kva;
    j["buses"] = nlohmann::json::array();
    for (const auto& b : f.buses) {
        nlohmann::json jb{{"id", b.id},
                          {"phases", b.phases.str()},
                          {"zip",
                           {{"kp", {b.zip.kp.k1, b.zip.kp.k2, b.zip.kp.k3}},
                            {"kq", {b.zip.kq.k1, b.zip.kq.k2, b.zip.kq.k3}}}}};
        if (!b.zip.normalized) {
            jb["zip"]["normalized"] = false;
        }
        if (b.pv) {
            jb["pv"] = {{"s_cap_kva", b.pv->s_cap * f.base_power_kva}};
            if (!b.pv->phases.empty()) {
                jb["pv"]["phases"] = b.pv->phases.str();
            }
        }
        j["buses"].push_back(std::move(jb));
    }
    j["lines"] = nlohmann::json::array();
    for (const auto& l : f.lines) {
        j["lines"].push_back(
            {{"from", l.from_id}, {"to", l.to_id}, {"r", detail::to_json(l.r)}, {"x", detail::to_json(l.x)}});
    }
    if (!f.meters.empty()) {
        j["meters"] = nlohmann::json::array();
        for (const auto& m : f.meters) {
            j["meters"].push_back({{"id", m.id},
                                   {"bus", m.bus},
                                   {"phase", std::string(1, phase_name(m.phase))},
                                   {"kind", m.kind == MeterKind::pv ? "pv" : "load"}});
        }
    }
    return j;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw SchemaError(path + ": cannot open file");
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

inline Feeder load_feeder(const std::string& path) {
    const nlohmann::json j = read_json_file(path);
    try {
        return feeder_from_json(j);
    } catch (const SchemaError& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

} // namespace cvr
