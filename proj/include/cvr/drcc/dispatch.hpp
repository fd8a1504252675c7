#pragma once

// CVR reactive dispatch: per hour, choose alpha (one ratio per PV phase) to
// minimise expected substation energy subject to the voltage rows.
//
//   det  : a(alpha)^T mu + b <= 0
//   ro   : a(alpha)^T mu + b + sum_i |a_i(alpha)| h_i <= 0
//   drcc : a(alpha)^T mu + b + kappa(eps) ||Sigma^1/2 a(alpha)|| <= 0
//
// The objective is affine in xi, and every distribution in the moment set
// has mean mu, so the worst-case expectation is the value at mu.
// Hours do not interact and are solved concurrently.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cvr/drcc/affine_model.hpp"
#include "cvr/drcc/chance_rows.hpp"
#include "cvr/drcc/layout.hpp"
#include "cvr/drcc/socp.hpp"
#include "cvr/enrich/moments.hpp"
#include "cvr/sensitivity.hpp"

namespace cvr::drcc {

enum class Mode { deterministic, robust, drcc };

inline const char* mode_name(Mode m) {
    switch (m) {
    case Mode::deterministic:
        return "det";
    case Mode::robust:
        return "ro";
    case Mode::drcc:
        return "drcc";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "det" || s == "deterministic") {
        return Mode::deterministic;
    }
    if (s == "ro" || s == "robust") {
        return Mode::robust;
    }
    if (s == "drcc") {
        return Mode::drcc;
    }
    throw ParameterError("unknown mode '" + s + "' (expected det, ro or drcc)");
}

// How the robust box half-width h is read from "fraction of the prediction":
// half_width: h = f |mu|; variance: variance f mu^2, so h = sqrt(f) |mu|.
enum class RobustWidth { half_width, variance };

struct DispatchOptions {
    Mode mode = Mode::drcc;
    std::optional<double> epsilon = 0.05;
    int horizon = 24;
    double robust_fraction = 0.1;
    RobustWidth robust_width = RobustWidth::half_width;
    VoltageLimits limits;
    std::vector<int> monitored; // node indices; empty = all
    double positivity_sigmas = 6.0;
};

struct HourProblem {
    int hour = 0;
    SocpProblem socp;
    std::vector<ChanceRow> rows;     // cone i < rows.size() belongs to rows[i]
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    Eigen::VectorXd half_width;      // robust only
    double base_kwh = 0.0;           // substation energy at alpha = 0
    Eigen::VectorXd objective_kwh;   // d energy / d alpha
    PositivityReport positivity;
};

struct DispatchProblem {
    DispatchOptions options;
    double kappa = 0.0;
    double base_power_kva = 100.0;
    UncertaintyLayout layout;
    AffineVoltageModel model;
    std::vector<HourProblem> hours;
    std::vector<std::string> node_bus; // bus id per node
    std::vector<int> node_phase;

    std::size_t pv_count() const { return layout.pv_count(); }
};

// Substation energy (kWh over one hour) at xi as an affine function of alpha,
// using the exact solve of the linear model at xi.
inline std::pair<double, Eigen::VectorXd> energy_affine(const AffineVoltageModel& model, const Eigen::VectorXd& xi,
                                                        double base_kva) {
    const Eigen::Index n = model.nodes();
    const Eigen::Index g = model.pv_count();
    const auto lu = model.coupling(xi).partialPivLu();
    const Eigen::VectorXd w = xi.head(n).cwiseProduct(model.slope_p);
    const Eigen::VectorXd v0 = lu.solve(model.numerator(xi, Eigen::VectorXd::Zero(g)));
    const double base = w.dot(v0) + xi.head(n).dot(model.offset_p) - xi.segment(2 * n, g).sum();
    Eigen::VectorXd lin(g);
    for (Eigen::Index k = 0; k < g; ++k) {
        const Eigen::VectorXd dv = lu.solve(model.alpha_column(k)) * xi(model.q_cap_offset() + k);
        lin(k) = w.dot(dv);
    }
    return {base * base_kva, lin * base_kva};
}

namespace detail {

inline SocCone linear_cone(const Eigen::VectorXd& e, double f) {
    SocCone c;
    c.f_mat.resize(0, e.size());
    c.g.resize(0);
    c.e = e;
    c.f = f;
    return c;
}

inline void add_box(SocpProblem& p, Eigen::Index g, bool with_abs) {
    for (Eigen::Index k = 0; k < g; ++k) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(p.dim);
        e(k) = -1.0;
        p.cones.push_back(linear_cone(e, 1.0)); // alpha_k <= 1
        e(k) = 1.0;
        p.cones.push_back(linear_cone(e, 1.0)); // alpha_k >= -1
        if (with_abs) {
            Eigen::VectorXd z = Eigen::VectorXd::Zero(p.dim);
            z(g + k) = 1.0;
            z(k) = -1.0;
            p.cones.push_back(linear_cone(z, 0.0)); // z_k >= alpha_k
            z(k) = 1.0;
            p.cones.push_back(linear_cone(z, 0.0)); // z_k >= -alpha_k
            z.setZero();
            z(g + k) = -1.0;
            p.cones.push_back(linear_cone(z, 1.0)); // z_k <= 1
        }
    }
}

} // namespace detail

inline HourProblem build_hour(const DispatchProblem& dp, const enrich::MomentAmbiguitySet& moments, int hour) {
    const DispatchOptions& opt = dp.options;
    const AffineVoltageModel& model = dp.model;
    const Eigen::Index g = model.pv_count();
    HourProblem hp;
    hp.hour = hour;
    const HourMoments hm = hour_moments(dp.layout, moments, hour);
    hp.mu = hm.mu;
    hp.sigma = hm.sigma;
    require_model_validity(model, hp.mu);

    const Eigen::VectorXd sd = hp.sigma.diagonal().cwiseMax(0.0).cwiseSqrt();
    Eigen::VectorXd lower = hp.mu - opt.positivity_sigmas * sd;
    Eigen::VectorXd upper = hp.mu + opt.positivity_sigmas * sd;
    if (opt.mode == Mode::robust) {
        if (!(opt.robust_fraction >= 0.0)) {
            throw ParameterError("robust half-width fraction must be nonnegative");
        }
        const double scale =
            opt.robust_width == RobustWidth::half_width ? opt.robust_fraction : std::sqrt(opt.robust_fraction);
        hp.half_width = scale * hp.mu.cwiseAbs();
        lower = lower.cwiseMin(hp.mu - hp.half_width);
        upper = upper.cwiseMax(hp.mu + hp.half_width);
    }
    hp.positivity = check_denominator_positivity(model, lower, upper);
    hp.rows = assemble_chance_rows(model, hp.positivity, opt.limits, hour, opt.monitored);

    auto [base, lin] = energy_affine(model, hp.mu, dp.base_power_kva);
    hp.base_kwh = base;
    hp.objective_kwh = lin;

    SocpProblem& p = hp.socp;
    p.dim = opt.mode == Mode::robust ? 2 * g : g;
    p.c = Eigen::VectorXd::Zero(p.dim);
    p.c.head(g) = lin;

    const Eigen::Index qoff = model.q_cap_offset();
    const Eigen::VectorXd mu_q = hp.mu.segment(qoff, g);
    Eigen::MatrixXd s_half;
    if (opt.mode == Mode::drcc) {
        s_half = psd_sqrt(hp.sigma);
    }
    for (const ChanceRow& row : hp.rows) {
        // -(a(alpha)^T mu + b) = f + e^T alpha
        const double f = -(row.a_const.dot(hp.mu) + row.b);
        Eigen::VectorXd e = Eigen::VectorXd::Zero(p.dim);
        e.head(g) = -row.alpha_coef.cwiseProduct(mu_q);
        SocCone cone;
        cone.e = e;
        cone.f = f;
        switch (opt.mode) {
        case Mode::deterministic:
            cone = detail::linear_cone(e, f);
            break;
        case Mode::robust: {
            // a_const vanishes on the Q_cap block, so alpha enters through |coef_k| h_k |alpha_k|.
            cone = detail::linear_cone(e, f - row.a_const.cwiseAbs().dot(hp.half_width));
            cone.e.tail(g) = -row.alpha_coef.cwiseAbs().cwiseProduct(hp.half_width.segment(qoff, g));
            break;
        }
        case Mode::drcc:
            cone.f_mat = dp.kappa * s_half.middleCols(qoff, g) * row.alpha_coef.asDiagonal();
            cone.g = dp.kappa * s_half * row.a_const;
            break;
        }
        p.cones.push_back(std::move(cone));
    }
    detail::add_box(p, g, opt.mode == Mode::robust);
    return hp;
}

inline DispatchProblem build_problem(const Feeder& feeder, const enrich::MomentAmbiguitySet& moments,
                                     const DispatchOptions& options) {
    DispatchProblem dp;
    dp.options = options;
    if (options.mode == Mode::drcc) {
        if (!options.epsilon) {
            throw ParameterError("drcc mode needs a risk level epsilon");
        }
        dp.kappa = soc_radius(*options.epsilon);
    }
    if (options.limits.v_min > options.limits.v_max) {
        throw ParameterError("voltage limits: v_min exceeds v_max");
    }
    dp.base_power_kva = feeder.base_power_kva;
    const NetworkIndex index = NetworkIndex::build(feeder);
    const IncidencePair inc = build_incidence(index);
    const SensitivityModel sens = build_sensitivities(feeder, index, inc);
    dp.layout = UncertaintyLayout(feeder, index, options.horizon);
    dp.model = assemble_voltage_affine(feeder, dp.layout, sens);
    for (const Node& node : index.nodes()) {
        dp.node_bus.push_back(feeder.buses[node.bus].id);
        dp.node_phase.push_back(node.phase);
    }
    for (int m : options.monitored) {
        if (m < 0 || m >= static_cast<int>(index.node_count())) {
            throw ParameterError("monitored node index out of range");
        }
    }
    for (int t = 0; t < options.horizon; ++t) {
        dp.hours.push_back(build_hour(dp, moments, t));
    }
    return dp;
}

struct HourSolution {
    int hour = 0;
    SolveStatus status = SolveStatus::optimal;
    Eigen::VectorXd alpha;
    double energy_kwh = 0.0;
    std::vector<double> slacks;
    std::string hint;
    int newton_steps = 0;
};

struct DispatchSolution {
    Mode mode = Mode::drcc;
    std::optional<double> epsilon;
    int horizon = 0;
    SolveStatus status = SolveStatus::optimal;
    double objective_kwh = 0.0;
    Eigen::MatrixXd alpha; // pv_count x horizon
    std::vector<HourSolution> hours;
    double solve_ms = 0.0;
    std::string hint;
};

inline std::string cone_label(const DispatchProblem& dp, const HourProblem& hp, Eigen::Index cone) {
    const auto i = static_cast<std::size_t>(cone);
    if (i < hp.rows.size()) {
        const ChanceRow& r = hp.rows[i];
        return std::string(side_name(r.side)) + " voltage row at bus '" +
               dp.node_bus[static_cast<std::size_t>(r.node)] + "' phase " +
               phase_name(dp.node_phase[static_cast<std::size_t>(r.node)]) + " hour " + std::to_string(r.hour);
    }
    return "alpha box constraint " + std::to_string(i - hp.rows.size());
}

inline HourSolution solve_hour(const DispatchProblem& dp, const HourProblem& hp, const SolverConfig& config) {
    const SocpResult r = solve_socp(hp.socp, config);
    HourSolution hs;
    hs.hour = hp.hour;
    hs.status = r.status;
    hs.alpha = r.y.head(static_cast<Eigen::Index>(dp.pv_count()));
    hs.energy_kwh = hp.base_kwh + hp.objective_kwh.dot(hs.alpha);
    hs.slacks.assign(r.slacks.begin(), r.slacks.begin() + static_cast<std::ptrdiff_t>(std::min(r.slacks.size(), hp.rows.size())));
    hs.newton_steps = r.newton_steps;
    if (r.status != SolveStatus::optimal && r.worst_cone >= 0) {
        hs.hint = cone_label(dp, hp, r.worst_cone) + " (slack " + std::to_string(r.slacks[static_cast<std::size_t>(r.worst_cone)]) + ")";
    }
    return hs;
}

inline DispatchSolution solve_dispatch(const DispatchProblem& dp, const SolverConfig& config = {}, unsigned threads = 0) {
    const auto start = std::chrono::steady_clock::now();
    DispatchSolution sol;
    sol.mode = dp.options.mode;
    sol.epsilon = dp.options.mode == Mode::drcc ? dp.options.epsilon : std::nullopt;
    sol.horizon = static_cast<int>(dp.hours.size());
    sol.hours.resize(dp.hours.size());

    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, dp.hours.size())));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t h = next++; h < dp.hours.size(); h = next++) {
            sol.hours[h] = solve_hour(dp, dp.hours[h], config);
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    sol.alpha = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dp.pv_count()), sol.horizon);
    for (const HourSolution& hs : sol.hours) {
        sol.alpha.col(hs.hour) = hs.alpha;
        sol.objective_kwh += hs.energy_kwh;
        if (hs.status == SolveStatus::infeasible && sol.status != SolveStatus::infeasible) {
            sol.status = SolveStatus::infeasible;
            sol.hint = hs.hint;
        } else if (hs.status == SolveStatus::numerical_limit && sol.status == SolveStatus::optimal) {
            sol.status = SolveStatus::numerical_limit;
            sol.hint = hs.hint;
        }
    }
    sol.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return sol;
}

// Energy over the horizon for a fixed dispatch (alpha = 0 gives the base case).
inline double dispatch_energy_kwh(const DispatchProblem& dp, const Eigen::MatrixXd& alpha) {
    double total = 0.0;
    for (const HourProblem& hp : dp.hours) {
        total += hp.base_kwh + hp.objective_kwh.dot(alpha.col(hp.hour));
    }
    return total;
}

inline nlohmann::json dispatch_to_json(const DispatchProblem& dp, const DispatchSolution& sol) {
    nlohmann::json alpha = nlohmann::json::array();
    for (int t = 0; t < sol.horizon; ++t) {
        for (std::size_t k = 0; k < dp.pv_count(); ++k) {
            const auto node = static_cast<std::size_t>(dp.layout.pv_nodes()[k]);
            alpha.push_back({{"bus", dp.node_bus[node]},
                             {"phase", std::string(1, phase_name(dp.node_phase[node]))},
                             {"hour", t},
                             {"value", sol.alpha(static_cast<Eigen::Index>(k), t)}});
        }
    }
    nlohmann::json j = {{"mode", mode_name(sol.mode)},
                        {"epsilon", sol.epsilon ? nlohmann::json(*sol.epsilon) : nlohmann::json(nullptr)},
                        {"horizon", sol.horizon},
                        {"objective_kwh", sol.objective_kwh},
                        {"base_kwh", dispatch_energy_kwh(dp, Eigen::MatrixXd::Zero(sol.alpha.rows(), sol.horizon))},
                        {"alpha_q", std::move(alpha)},
                        {"status", status_name(sol.status)},
                        {"timing", {{"solve_ms", sol.solve_ms}}}};
    if (dp.options.mode == Mode::robust) {
        j["robust"] = {{"fraction", dp.options.robust_fraction},
                       {"width", dp.options.robust_width == RobustWidth::half_width ? "half-width" : "variance"}};
    }
    if (!sol.hint.empty()) {
        j["hint"] = sol.hint;
    }
    return j;
}

// alpha matrix (pv_count x horizon) read back from a dispatch file, matched by bus/phase/hour.
inline Eigen::MatrixXd alpha_from_json(const DispatchProblem& dp, const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("alpha_q") || !j["alpha_q"].is_array()) {
        throw SchemaError("dispatch.alpha_q: missing or not an array");
    }
    Eigen::MatrixXd alpha = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dp.pv_count()),
                                                  static_cast<Eigen::Index>(dp.hours.size()));
    const auto& arr = j["alpha_q"];
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "dispatch.alpha_q[" + std::to_string(i) + "]";
        try {
            const auto& e = arr[i];
            const std::string bus = e.at("bus").is_string() ? e.at("bus").get<std::string>()
                                                            : std::to_string(e.at("bus").get<long long>());
            const int phase = parse_phase(e.at("phase").get<std::string>());
            const int hour = e.at("hour").get<int>();
            const double value = e.at("value").get<double>();
            if (hour < 0 || hour >= static_cast<int>(dp.hours.size())) {
                throw SchemaError("hour outside the horizon");
            }
            if (!(value >= -1.0 && value <= 1.0)) {
                throw SchemaError("alpha value outside [-1, 1]");
            }
            bool found = false;
            for (std::size_t k = 0; k < dp.pv_count(); ++k) {
                const auto node = static_cast<std::size_t>(dp.layout.pv_nodes()[k]);
                if (dp.node_bus[node] == bus && dp.node_phase[node] == phase) {
                    alpha(static_cast<Eigen::Index>(k), hour) = value;
                    found = true;
                }
            }
            if (!found) {
                throw SchemaError("no PV phase at bus '" + bus + "' phase " + phase_name(phase));
            }
        } catch (const nlohmann::json::exception& ex) {
            throw SchemaError(path + ": " + ex.what());
        } catch (const SchemaError& ex) {
            throw SchemaError(path + ": " + ex.what());
        }
    }
    return alpha;
}

} // namespace cvr::drcc
