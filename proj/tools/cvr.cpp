// cvr: enrich -> solve -> validate pipeline for CVR reactive dispatch.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cvr/cvr.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kError = 1, kInfeasible = 2, kNumerical = 3, kViolations = 4 };

struct RunConfig {
    std::string feeder;
    std::vector<std::string> pmu;
    std::vector<std::string> sm;
    std::string out_dir = ".";
    std::string moments;
    std::string dispatch;
    std::string out;
    std::string mode = "drcc";
    double epsilon = 0.05;
    int horizon = 24;
    int bins = 20;
    std::string weights = "inverse";
    std::uint64_t seed = 1;
    std::size_t samples = 10000;
    std::string family = "truncated-gaussian";
    double solver_tol = 1e-8;
    unsigned threads = 0;
    double ro_fraction = 0.1;
    std::string ro_width = "half-width";
    bool sm_only = false;
    std::string correlation = "none";
    bool q_power_factor = false;
    std::vector<double> epsilons{0.02, 0.05, 0.1};
    // synth
    std::string name = "feeder13";
    int days = 3;
    int resolution = 1;
    std::size_t teachers = 8;
};

template <class T>
void take(const json& j, const char* key, T& dst) {
    if (j.contains(key)) {
        try {
            dst = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw cvr::SchemaError(std::string("config.") + key + ": " + e.what());
        }
    }
}

void load_config(const std::string& path, RunConfig& c) {
    const json j = cvr::read_json_file(path);
    if (!j.is_object()) {
        throw cvr::SchemaError(path + ": config must be a JSON object");
    }
    take(j, "feeder", c.feeder);
    take(j, "pmu", c.pmu);
    take(j, "sm", c.sm);
    take(j, "out_dir", c.out_dir);
    take(j, "moments", c.moments);
    take(j, "dispatch", c.dispatch);
    take(j, "out", c.out);
    take(j, "mode", c.mode);
    take(j, "epsilon", c.epsilon);
    take(j, "horizon", c.horizon);
    take(j, "bins", c.bins);
    take(j, "weights", c.weights);
    take(j, "seed", c.seed);
    take(j, "samples", c.samples);
    take(j, "family", c.family);
    take(j, "solver_tol", c.solver_tol);
    take(j, "threads", c.threads);
    take(j, "ro_fraction", c.ro_fraction);
    take(j, "ro_width", c.ro_width);
    take(j, "sm_only", c.sm_only);
    take(j, "correlation", c.correlation);
    take(j, "q_power_factor", c.q_power_factor);
    take(j, "epsilons", c.epsilons);
}

void require_file(const std::string& what, const std::string& path) {
    if (path.empty()) {
        throw cvr::ParameterError(what + " path is required");
    }
    if (!fs::exists(path)) {
        throw cvr::ParameterError(what + " '" + path + "' does not exist");
    }
}

void check_epsilon(double e) {
    if (!(e > 0.0 && e < 1.0)) {
        throw cvr::ParameterError("epsilon must lie in (0, 1), got " + std::to_string(e));
    }
}

cvr::drcc::SolverConfig solver_config(const RunConfig& c) {
    cvr::drcc::SolverConfig s;
    s.tolerance = c.solver_tol;
    if (const char* env = std::getenv("CVR_SOLVER_TOL")) {
        try {
            s.tolerance = std::stod(env);
        } catch (const std::exception&) {
            throw cvr::ParameterError("CVR_SOLVER_TOL is not a number");
        }
    }
    if (!(s.tolerance > 0.0)) {
        throw cvr::ParameterError("solver tolerance must be positive");
    }
    return s;
}

void write_json(const std::string& path, const json& j) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    if (fs::path(path).has_parent_path()) {
        fs::create_directories(fs::path(path).parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw cvr::DataError("cannot write " + path);
    }
    out << j.dump(2) << '\n';
}

// Files given directly, or every *.csv inside a directory (sorted).
std::vector<std::string> expand_csv(const std::vector<std::string>& paths) {
    std::vector<std::string> out;
    for (const auto& p : paths) {
        if (fs::is_directory(p)) {
            std::vector<std::string> found;
            for (const auto& e : fs::directory_iterator(p)) {
                if (e.path().extension() == ".csv") {
                    found.push_back(e.path().string());
                }
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            require_file("csv", p);
            out.push_back(p);
        }
    }
    return out;
}

int cmd_feeder_validate(const RunConfig& c) {
    require_file("feeder", c.feeder);
    const cvr::Feeder f = cvr::load_feeder(c.feeder);
    const cvr::ValidationReport rep = cvr::validate_radial(f);
    if (rep.ok()) {
        std::cout << "ok: " << f.buses.size() << " buses, " << f.lines.size() << " lines, " << f.meters.size()
                  << " meters\n";
        return kOk;
    }
    std::cout << rep.summary();
    return kError;
}

int cmd_enrich(const RunConfig& c) {
    require_file("feeder", c.feeder);
    if (c.horizon < 1 || c.horizon > 24) {
        throw cvr::ParameterError("horizon must lie in [1, 24]");
    }
    const cvr::Feeder f = cvr::load_feeder(c.feeder);
    std::map<std::string, cvr::enrich::HighResMeter> teachers;
    std::map<std::string, cvr::enrich::HourlyMeter> students;
    for (const auto& path : expand_csv(c.pmu)) {
        for (const auto& [id, rows] : cvr::enrich::read_measurement_csv(path, f.base_power_kva)) {
            teachers[id] = cvr::enrich::to_high_res(id, rows);
        }
    }
    for (const auto& path : expand_csv(c.sm)) {
        for (const auto& [id, rows] : cvr::enrich::read_measurement_csv(path, f.base_power_kva)) {
            students[id] = cvr::enrich::to_hourly(id, rows);
        }
    }
    cvr::enrich::MomentOptions mo;
    mo.horizon = c.horizon;
    if (c.correlation == "bus-hour") {
        mo.correlation = cvr::enrich::Correlation::bus_hour;
    } else if (c.correlation != "none") {
        throw cvr::ParameterError("correlation must be none or bus-hour");
    }
    fs::create_directories(c.out_dir);

    if (c.sm_only) {
        // Hourly data for every transformer, teachers reduced to their hourly means.
        for (const auto& [id, m] : teachers) {
            students[id] = {m.p.hourly_means(), m.q.hourly_means()};
        }
        cvr::enrich::MomentAmbiguitySet ms = cvr::enrich::moments_from_hourly(f, students, mo);
        write_json((fs::path(c.out_dir) / "moments.json").string(), cvr::enrich::moments_to_json(ms));
        std::cout << "SM-only moments written (low confidence)\n";
        return kOk;
    }
    if (teachers.empty()) {
        throw cvr::DataError("no teacher (micro-PMU) series given: pass --pmu, or use --sm-only to build "
                             "low-confidence moments from hourly data alone");
    }
    if (c.weights != "inverse" && c.weights != "literal") {
        throw cvr::ParameterError("weights must be inverse or literal");
    }
    cvr::enrich::EnrichOptions eo;
    eo.bins = c.bins;
    eo.literal_weights = c.weights == "literal";
    eo.seed = c.seed;
    eo.threads = c.threads;
    eo.q_from_power_factor = c.q_power_factor;
    const cvr::enrich::EnrichmentResult res = cvr::enrich::enrich_transformers(f, teachers, students, eo);
    for (const auto& [id, sw] : res.weights) {
        std::cout << id << ':';
        for (std::size_t s = 0; s < sw.teachers.size(); ++s) {
            std::printf(" %s=%.4f", sw.teachers[s].c_str(), sw.weights.w[s]);
        }
        std::cout << '\n';
    }
    {
        std::ofstream out(fs::path(c.out_dir) / "enriched.csv");
        cvr::enrich::write_high_res_csv(out, res.series, f.base_power_kva);
    }
    const cvr::enrich::MomentAmbiguitySet ms = cvr::enrich::moments_from_high_res(f, res.series, mo);
    write_json((fs::path(c.out_dir) / "moments.json").string(), cvr::enrich::moments_to_json(ms));
    std::cout << "enriched " << res.weights.size() << " students from " << teachers.size() << " teachers\n";
    return kOk;
}

cvr::drcc::DispatchOptions dispatch_options(const RunConfig& c) {
    cvr::drcc::DispatchOptions o;
    o.mode = cvr::drcc::parse_mode(c.mode);
    o.horizon = c.horizon;
    if (o.mode == cvr::drcc::Mode::drcc) {
        check_epsilon(c.epsilon);
        o.epsilon = c.epsilon;
    } else {
        o.epsilon.reset();
    }
    o.robust_fraction = c.ro_fraction;
    if (c.ro_width == "half-width") {
        o.robust_width = cvr::drcc::RobustWidth::half_width;
    } else if (c.ro_width == "variance") {
        o.robust_width = cvr::drcc::RobustWidth::variance;
    } else {
        throw cvr::ParameterError("ro-width must be half-width or variance");
    }
    return o;
}

int cmd_solve(const RunConfig& c) {
    if (c.horizon < 1) {
        throw cvr::ParameterError("horizon must be at least 1");
    }
    const cvr::drcc::DispatchOptions o = dispatch_options(c);
    require_file("feeder", c.feeder);
    require_file("moments", c.moments);
    const cvr::Feeder f = cvr::load_feeder(c.feeder);
    const cvr::enrich::MomentAmbiguitySet ms = cvr::enrich::moments_from_json(cvr::read_json_file(c.moments));
    const cvr::drcc::DispatchProblem dp = cvr::drcc::build_problem(f, ms, o);
    const cvr::drcc::DispatchSolution sol = cvr::drcc::solve_dispatch(dp, solver_config(c), c.threads);
    write_json(c.out.empty() ? (fs::path(c.out_dir) / "dispatch.json").string() : c.out,
               cvr::drcc::dispatch_to_json(dp, sol));
    std::printf("%s: status %s, objective %.6f kWh\n", cvr::drcc::mode_name(o.mode), cvr::drcc::status_name(sol.status),
                sol.objective_kwh);
    if (!sol.hint.empty()) {
        std::cerr << "hint: " << sol.hint << '\n';
    }
    switch (sol.status) {
    case cvr::drcc::SolveStatus::optimal:
        return kOk;
    case cvr::drcc::SolveStatus::infeasible:
        return kInfeasible;
    case cvr::drcc::SolveStatus::numerical_limit:
        return kNumerical;
    }
    return kError;
}

int cmd_validate(const RunConfig& c) {
    require_file("feeder", c.feeder);
    require_file("moments", c.moments);
    require_file("dispatch", c.dispatch);
    for (double e : c.epsilons) {
        check_epsilon(e);
    }
    const cvr::Feeder f = cvr::load_feeder(c.feeder);
    const cvr::enrich::MomentAmbiguitySet ms = cvr::enrich::moments_from_json(cvr::read_json_file(c.moments));
    const json dj = cvr::read_json_file(c.dispatch);
    if (!dj.contains("horizon") || !dj["horizon"].is_number_integer()) {
        throw cvr::SchemaError("dispatch.horizon: missing or not an integer");
    }
    cvr::drcc::DispatchOptions o;
    o.mode = cvr::drcc::Mode::deterministic;
    o.horizon = dj["horizon"].get<int>();
    const cvr::drcc::DispatchProblem dp = cvr::drcc::build_problem(f, ms, o);
    const Eigen::MatrixXd alpha = cvr::drcc::alpha_from_json(dp, dj);

    cvr::validation::McOptions mc;
    mc.family = cvr::validation::parse_family(c.family);
    mc.samples = c.samples;
    mc.seed = c.seed;
    mc.threads = c.threads;
    const cvr::validation::ViolationReport vr = cvr::validation::monte_carlo_violation(dp, alpha, mc);

    // Oracle: affine model vs nonlinear sweep at the mean.
    const cvr::NetworkIndex index = cvr::NetworkIndex::build(f);
    double worst_dv = 0.0;
    int worst_iter = 0;
    for (const auto& hp : dp.hours) {
        const Eigen::Index n = dp.model.nodes();
        const Eigen::Index g = dp.model.pv_count();
        auto inj = cvr::validation::NodalInjections::zeros(n);
        inj.p_load = hp.mu.head(n);
        inj.q_load = hp.mu.segment(n, n);
        for (Eigen::Index k = 0; k < g; ++k) {
            const int node = dp.model.pv_nodes[static_cast<std::size_t>(k)];
            inj.p_gen(node) += hp.mu(2 * n + k);
            inj.q_gen(node) += alpha(k, hp.hour) * hp.mu(dp.model.q_cap_offset() + k);
        }
        const auto sw = cvr::validation::nonlinear_sweep(f, index, inj);
        const Eigen::VectorXd v = dp.model.solve(hp.mu, alpha.col(hp.hour));
        worst_dv = std::max(worst_dv, (sw.magnitude() - v.cwiseMax(0.0).cwiseSqrt()).cwiseAbs().maxCoeff());
        worst_iter = std::max(worst_iter, sw.iterations);
    }

    const auto runs = cvr::validation::default_modes(c.epsilons, o.horizon, c.ro_fraction);
    const cvr::validation::EnergyReport er = cvr::validation::energy_report(f, ms, runs, o.horizon, solver_config(c));

    json report = {{"violations", cvr::validation::violations_to_json(vr)},
                   {"max_rate", vr.max_rate},
                   {"family", cvr::validation::family_name(vr.family)},
                   {"samples", vr.samples},
                   {"realized_moments",
                    {{"max_mean_gap", vr.realized_mean_gap},
                     {"std_ratio_min", vr.realized_std_ratio_min},
                     {"std_ratio_max", vr.realized_std_ratio_max}}},
                   {"warnings", vr.warnings},
                   {"oracle", {{"max_abs_v_diff", worst_dv}, {"max_iterations", worst_iter}}},
                   {"energy", cvr::validation::energy_to_json(er)},
                   {"dispatch_energy_kwh", cvr::drcc::dispatch_energy_kwh(dp, alpha)},
                   {"seeds", {{"monte_carlo", c.seed}}},
                   {"timing", {{"solve_ms", cvr::validation::energy_timing_json(er)}}}};
    write_json(c.out.empty() ? (fs::path(c.out_dir) / "report.json").string() : c.out, report);

    std::cout << cvr::validation::energy_table(er);
    std::printf("monte carlo (%s, n=%zu, seed=%llu): max violation rate %.4f",
                cvr::validation::family_name(vr.family), vr.samples, static_cast<unsigned long long>(vr.seed),
                vr.max_rate);
    if (vr.worst >= 0 && vr.max_rate > 0.0) {
        const auto& w = vr.rows[static_cast<std::size_t>(vr.worst)];
        std::printf(" at bus %s phase %c hour %d (%s)", w.bus.c_str(), cvr::phase_name(w.phase), w.hour,
                    cvr::drcc::side_name(w.side));
    }
    std::printf("\noracle: max |V| difference %.5f p.u., %d sweep iterations\n", worst_dv, worst_iter);
    return kOk;
}

int cmd_synth_feeder(const RunConfig& c) {
    cvr::Feeder f;
    if (c.name == "smoke") {
        f = cvr::synthetic::smoke_feeder();
    } else if (c.name == "two-pv") {
        f = cvr::synthetic::two_pv_feeder();
    } else if (c.name == "feeder13") {
        f = cvr::synthetic::feeder13();
    } else {
        throw cvr::ParameterError("unknown feeder '" + c.name + "' (smoke, two-pv, feeder13)");
    }
    write_json(c.out.empty() ? "-" : c.out, cvr::feeder_to_json(f));
    return kOk;
}

int cmd_synth_data(const RunConfig& c) {
    require_file("feeder", c.feeder);
    if (c.resolution <= 0 || 3600 % c.resolution != 0) {
        throw cvr::ParameterError("resolution must divide 3600 seconds");
    }
    if (c.days < 1) {
        throw cvr::ParameterError("days must be at least 1");
    }
    const cvr::Feeder f = cvr::load_feeder(c.feeder);
    cvr::synthetic::SynthOptions so;
    so.days = c.days;
    so.samples_per_hour = static_cast<std::size_t>(3600 / c.resolution);
    so.seed = c.seed;
    const cvr::synthetic::Dataset ds = cvr::synthetic::generate(f, so);
    const auto teachers = ds.teachers(c.teachers);
    std::map<std::string, cvr::enrich::HourlyMeter> sm;
    for (const auto& [id, m] : ds.hourly()) {
        if (!teachers.count(id)) {
            sm[id] = m;
        }
    }
    fs::create_directories(c.out_dir);
    {
        std::ofstream out(fs::path(c.out_dir) / "pmu.csv");
        cvr::enrich::write_high_res_csv(out, teachers, f.base_power_kva);
    }
    {
        std::ofstream out(fs::path(c.out_dir) / "sm.csv");
        cvr::enrich::write_hourly_csv(out, sm, f.base_power_kva);
    }
    std::cout << teachers.size() << " teacher and " << sm.size() << " smart-meter transformers written to "
              << c.out_dir << '\n';
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    RunConfig cfg;
    // The config file supplies defaults; explicit flags parsed afterwards win.
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            try {
                load_config(argv[i + 1], cfg);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << '\n';
                return kError;
            }
        }
    }

    CLI::App app{"CVR reactive dispatch under distributionally robust chance constraints"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags override its values)");
    app.add_option("--threads", cfg.threads, "worker threads (0 = hardware)");

    auto* feeder = app.add_subcommand("feeder", "feeder utilities");
    feeder->require_subcommand(1);
    auto* fv = feeder->add_subcommand("validate", "check radial-feeder invariants");
    fv->add_option("path", cfg.feeder, "feeder JSON")->required();

    auto* enrich = app.add_subcommand("enrich", "enrich smart-meter data and extract moments");
    enrich->add_option("--feeder", cfg.feeder, "feeder JSON");
    enrich->add_option("--pmu", cfg.pmu, "micro-PMU CSV files or directories");
    enrich->add_option("--sm", cfg.sm, "smart-meter CSV files or directories");
    enrich->add_option("--out-dir", cfg.out_dir, "output directory");
    enrich->add_option("--bins", cfg.bins, "Markov bins per hour");
    enrich->add_option("--weights", cfg.weights, "inverse | literal");
    enrich->add_option("--seed", cfg.seed, "master seed");
    enrich->add_option("--horizon", cfg.horizon, "hours of the day covered by the moments");
    enrich->add_option("--correlation", cfg.correlation, "none | bus-hour");
    enrich->add_flag("--sm-only", cfg.sm_only, "moments from hourly data only (low confidence)");
    enrich->add_flag("--q-power-factor", cfg.q_power_factor, "tie reactive samples to active by power factor");

    auto* solve = app.add_subcommand("solve", "solve the dispatch problem");
    solve->add_option("--feeder", cfg.feeder, "feeder JSON");
    solve->add_option("--moments", cfg.moments, "moments JSON");
    solve->add_option("--mode", cfg.mode, "det | ro | drcc");
    solve->add_option("--epsilon", cfg.epsilon, "risk level (drcc)");
    solve->add_option("--horizon", cfg.horizon, "hours");
    solve->add_option("--ro-fraction", cfg.ro_fraction, "robust box fraction");
    solve->add_option("--ro-width", cfg.ro_width, "half-width | variance");
    solve->add_option("--solver-tol", cfg.solver_tol, "absolute objective tolerance (kWh per hour)");
    solve->add_option("--out", cfg.out, "dispatch JSON path (default OUT_DIR/dispatch.json)");
    solve->add_option("--out-dir", cfg.out_dir, "output directory");

    auto* validate = app.add_subcommand("validate", "Monte-Carlo and oracle checks of a dispatch");
    validate->add_option("--feeder", cfg.feeder, "feeder JSON");
    validate->add_option("--moments", cfg.moments, "moments JSON");
    validate->add_option("--dispatch", cfg.dispatch, "dispatch JSON");
    validate->add_option("--samples", cfg.samples, "Monte-Carlo samples per hour");
    validate->add_option("--seed", cfg.seed, "Monte-Carlo seed");
    validate->add_option("--family", cfg.family, "gaussian | truncated-gaussian | two-point");
    validate->add_option("--epsilons", cfg.epsilons, "risk levels for the energy table");
    validate->add_option("--ro-fraction", cfg.ro_fraction, "robust box fraction");
    validate->add_option("--solver-tol", cfg.solver_tol, "absolute objective tolerance");
    validate->add_option("--out", cfg.out, "report JSON path (default OUT_DIR/report.json)");
    validate->add_option("--out-dir", cfg.out_dir, "output directory");

    auto* synth = app.add_subcommand("synth", "synthetic fixtures");
    synth->require_subcommand(1);
    auto* sf = synth->add_subcommand("feeder", "write a synthetic feeder");
    sf->add_option("--name", cfg.name, "smoke | two-pv | feeder13");
    sf->add_option("--out", cfg.out, "output path (default stdout)");
    auto* sd = synth->add_subcommand("data", "write synthetic micro-PMU and smart-meter CSVs");
    sd->add_option("--feeder", cfg.feeder, "feeder JSON with meters")->required();
    sd->add_option("--out-dir", cfg.out_dir, "output directory");
    sd->add_option("--days", cfg.days, "days of data");
    sd->add_option("--resolution", cfg.resolution, "seconds between micro-PMU samples");
    sd->add_option("--teachers", cfg.teachers, "number of micro-PMU transformers");
    sd->add_option("--seed", cfg.seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kError;
    }

    try {
        if (fv->parsed()) {
            return cmd_feeder_validate(cfg);
        }
        if (enrich->parsed()) {
            return cmd_enrich(cfg);
        }
        if (solve->parsed()) {
            return cmd_solve(cfg);
        }
        if (validate->parsed()) {
            return cmd_validate(cfg);
        }
        if (sf->parsed()) {
            return cmd_synth_feeder(cfg);
        }
        if (sd->parsed()) {
            return cmd_synth_data(cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kError;
    }
    return kError;
}
