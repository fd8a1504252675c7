#pragma once

// Base case vs CVR modes: substation energy at the mean over the horizon.

#include <nlohmann/json.hpp>

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cvr/drcc/dispatch.hpp"
#include "cvr/validation/monte_carlo.hpp"

namespace cvr::validation {

struct ModeRun {
    std::string name;
    drcc::DispatchOptions options;
};

struct EnergyRow {
    std::string name;
    std::string status;
    double energy_kwh = 0.0;
    double reduction_pct = 0.0;
    double solve_ms = 0.0;
    std::string hint;
};

struct EnergyReport {
    double base_kwh = 0.0;
    std::vector<EnergyRow> modes;
};

// Deter, both readings of the RO box, and DRCC at each risk level.
inline std::vector<ModeRun> default_modes(const std::vector<double>& epsilons, int horizon, double ro_fraction = 0.1) {
    std::vector<ModeRun> runs;
    drcc::DispatchOptions o;
    o.horizon = horizon;
    o.mode = drcc::Mode::deterministic;
    o.epsilon.reset();
    runs.push_back({"Deter", o});
    o.mode = drcc::Mode::robust;
    o.robust_fraction = ro_fraction;
    o.robust_width = drcc::RobustWidth::half_width;
    runs.push_back({"RO (half-width)", o});
    o.robust_width = drcc::RobustWidth::variance;
    runs.push_back({"RO (variance)", o});
    o.mode = drcc::Mode::drcc;
    for (double e : epsilons) {
        o.epsilon = e;
        char buf[48];
        std::snprintf(buf, sizeof buf, "DRCC (eps=%g)", e);
        runs.push_back({buf, o});
    }
    return runs;
}

inline double reduction_pct(double base, double mode) { return base == 0.0 ? 0.0 : 100.0 * (base - mode) / base; }

inline EnergyReport energy_report(const Feeder& feeder, const enrich::MomentAmbiguitySet& moments,
                                  const std::vector<ModeRun>& runs, int horizon,
                                  const drcc::SolverConfig& config = {}) {
    EnergyReport rep;
    drcc::DispatchOptions base_opt;
    base_opt.mode = drcc::Mode::deterministic;
    base_opt.horizon = horizon;
    const drcc::DispatchProblem base = drcc::build_problem(feeder, moments, base_opt);
    rep.base_kwh = drcc::dispatch_energy_kwh(
        base, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(base.pv_count()), horizon));
    rep.modes.push_back({"Base", "optimal", rep.base_kwh, 0.0, 0.0, {}});
    for (const ModeRun& run : runs) {
        EnergyRow row;
        row.name = run.name;
        try {
            drcc::DispatchOptions o = run.options;
            o.horizon = horizon;
            const drcc::DispatchProblem dp = drcc::build_problem(feeder, moments, o);
            const drcc::DispatchSolution sol = drcc::solve_dispatch(dp, config);
            row.status = drcc::status_name(sol.status);
            row.energy_kwh = sol.objective_kwh;
            row.reduction_pct = reduction_pct(rep.base_kwh, sol.objective_kwh);
            row.solve_ms = sol.solve_ms;
            row.hint = sol.hint;
        } catch (const Error& e) {
            row.status = "error";
            row.hint = e.what();
        }
        rep.modes.push_back(std::move(row));
    }
    return rep;
}

inline nlohmann::json energy_to_json(const EnergyReport& rep) {
    nlohmann::json modes = nlohmann::json::object();
    for (const EnergyRow& r : rep.modes) {
        nlohmann::json m = {{"status", r.status}, {"energy_kwh", nullptr}, {"reduction_pct", nullptr}};
        if (r.status == "optimal") {
            m["energy_kwh"] = r.energy_kwh;
            m["reduction_pct"] = r.reduction_pct;
        }
        if (!r.hint.empty()) {
            m["hint"] = r.hint;
        }
        modes[r.name] = std::move(m);
    }
    return {{"base", rep.base_kwh}, {"modes", std::move(modes)}};
}

inline nlohmann::json energy_timing_json(const EnergyReport& rep) {
    nlohmann::json t = nlohmann::json::object();
    for (const EnergyRow& r : rep.modes) {
        t[r.name] = r.solve_ms;
    }
    return t;
}

// Text table in the layout of the usual energy comparison.
inline std::string energy_table(const EnergyReport& rep) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-20s %-16s %14s %14s\n", "Mode", "Status", "Energy (kWh)", "Reduction (%)");
    os << buf;
    for (const EnergyRow& r : rep.modes) {
        if (r.status == "optimal") {
            std::snprintf(buf, sizeof buf, "%-20s %-16s %14.4f %14.4f\n", r.name.c_str(), r.status.c_str(),
                          r.energy_kwh, r.reduction_pct);
        } else {
            std::snprintf(buf, sizeof buf, "%-20s %-16s %14s %14s\n", r.name.c_str(), r.status.c_str(), "-", "-");
        }
        os << buf;
    }
    return os.str();
}

} // namespace cvr::validation
