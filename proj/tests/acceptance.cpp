// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cvr/cvr.hpp"

using namespace cvr;

namespace {

const std::vector<double> kEpsilons = {0.02, 0.05, 0.1};

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
    std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    failures += ok ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void run(int id, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        report(id, false, std::string("threw: ") + e.what());
    }
}

enrich::MomentAmbiguitySet fixture_moments(const Feeder& f) {
    synthetic::SynthOptions so;
    so.samples_per_hour = 60;
    so.days = 3;
    so.seed = 7;
    return enrich::moments_from_high_res(f, synthetic::generate(f, so).truth);
}

drcc::DispatchOptions options(drcc::Mode mode, double eps) {
    drcc::DispatchOptions o;
    o.mode = mode;
    o.epsilon = eps;
    o.horizon = 24;
    return o;
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_distance(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) {
            ++i;
        }
        while (j < b.size() && b[j] <= x) {
            ++j;
        }
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

struct Solved {
    drcc::DispatchProblem dp;
    drcc::DispatchSolution sol;
};

} // namespace

int main() {
    const Feeder f13 = synthetic::feeder13();
    const enrich::MomentAmbiguitySet m13 = fixture_moments(f13);
    std::vector<Solved> drcc_runs;

    run(1, [&] {
        const auto t0 = std::chrono::steady_clock::now();
        for (double e : kEpsilons) {
            auto dp = drcc::build_problem(f13, m13, options(drcc::Mode::drcc, e));
            auto sol = drcc::solve_dispatch(dp);
            drcc_runs.push_back({std::move(dp), std::move(sol)});
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool ok = secs < 60.0;
        std::string d;
        for (std::size_t i = 0; i < drcc_runs.size(); ++i) {
            ok = ok && drcc_runs[i].sol.status == drcc::SolveStatus::optimal;
            d += fmt("E(%.2f)=%.6f ", kEpsilons[i], drcc_runs[i].sol.objective_kwh);
        }
        for (std::size_t i = 1; i < drcc_runs.size() && ok; ++i) {
            ok = drcc_runs[i - 1].sol.objective_kwh - drcc_runs[i].sol.objective_kwh >= -1e-6;
        }
        report(1, ok, d + fmt("kWh, %.1f s", secs));
    });

    run(2, [&] {
        const auto det = drcc::solve_dispatch(drcc::build_problem(f13, m13, options(drcc::Mode::deterministic, 0.05)));
        const auto flat = m13.without_spread();
        double obj_gap = 0.0, alpha_gap = 0.0;
        bool ok = det.status == drcc::SolveStatus::optimal;
        for (double e : kEpsilons) {
            const auto dr = drcc::solve_dispatch(drcc::build_problem(f13, flat, options(drcc::Mode::drcc, e)));
            ok = ok && dr.status == drcc::SolveStatus::optimal;
            obj_gap = std::max(obj_gap, std::abs(dr.objective_kwh - det.objective_kwh));
            alpha_gap = std::max(alpha_gap, (dr.alpha - det.alpha).cwiseAbs().maxCoeff());
        }
        ok = ok && obj_gap <= 1e-6 && alpha_gap <= 1e-6;
        report(2, ok, fmt("|dobj|=%.2e kWh, max|dalpha|=%.2e", obj_gap, alpha_gap));
    });

    run(3, [&] {
        bool ok = drcc_runs.size() == kEpsilons.size();
        std::string d;
        for (std::size_t i = 0; i < drcc_runs.size(); ++i) {
            validation::McOptions mc;
            mc.family = validation::Family::gaussian;
            mc.samples = 10000;
            mc.seed = 2024;
            const auto rep = validation::monte_carlo_violation(drcc_runs[i].dp, drcc_runs[i].sol.alpha, mc);
            double worst_hi = 0.0;
            for (const auto& r : rep.rows) {
                worst_hi = std::max(worst_hi, r.ci_hi);
            }
            ok = ok && rep.max_rate <= kEpsilons[i] && worst_hi <= kEpsilons[i] + 0.01;
            d += fmt("eps %.2f: max rate %.4f, wilson hi %.4f; ", kEpsilons[i], rep.max_rate, worst_hi);
        }
        report(3, ok, d + "n=10000");
    });

    run(4, [&] {
        bool ok = drcc_runs.size() == kEpsilons.size();
        std::string d;
        for (std::size_t i = 0; i < drcc_runs.size(); ++i) {
            validation::McOptions mc;
            mc.family = validation::Family::two_point;
            mc.samples = 100000;
            mc.seed = 2024;
            const auto rep = validation::monte_carlo_violation(drcc_runs[i].dp, drcc_runs[i].sol.alpha, mc);
            // Binding row: smallest standardised margin over all hours.
            const validation::RowStat* bind = nullptr;
            for (const auto& r : rep.rows) {
                if (r.std_value > 0.0 && (!bind || -r.mean_value / r.std_value < -bind->mean_value / bind->std_value)) {
                    bind = &r;
                }
            }
            const double eps = kEpsilons[i];
            const bool row_ok = bind && bind->rate >= eps - 0.01 && bind->rate <= eps;
            ok = ok && row_ok;
            if (bind) {
                d += fmt("eps %.2f: rate %.5f (bus %s/%c hour %d, margin %.4f vs kappa %.4f); ", eps, bind->rate,
                         bind->bus.c_str(), phase_name(bind->phase), bind->hour, -bind->mean_value / bind->std_value,
                         drcc_runs[i].dp.kappa);
            }
        }
        report(4, ok, d);
    });

    run(5, [&] {
        const Solved& s = drcc_runs.at(1);
        const NetworkIndex index = NetworkIndex::build(f13);
        const Eigen::Index n = s.dp.model.nodes();
        const Eigen::Index g = s.dp.model.pv_count();
        double worst = 0.0, max_load = 0.0;
        int iters = 0;
        for (const auto& hp : s.dp.hours) {
            auto inj = validation::NodalInjections::zeros(n);
            inj.p_load = hp.mu.head(n);
            inj.q_load = hp.mu.segment(n, n);
            for (Eigen::Index k = 0; k < g; ++k) {
                const int node = s.dp.model.pv_nodes[static_cast<std::size_t>(k)];
                inj.p_gen(node) += hp.mu(2 * n + k);
                inj.q_gen(node) += s.sol.alpha(k, hp.hour) * hp.mu(s.dp.model.q_cap_offset() + k);
            }
            max_load = std::max(max_load, inj.p_load.cwiseAbs().maxCoeff());
            const auto sw = validation::nonlinear_sweep(f13, index, inj);
            iters = std::max(iters, sw.iterations);
            const Eigen::VectorXd v = s.dp.model.solve(hp.mu, s.sol.alpha.col(hp.hour));
            worst = std::max(worst, (sw.magnitude() - v.cwiseSqrt()).cwiseAbs().maxCoeff());
        }
        // ZIP surrogate error against |k2| dV^2 / 2 on a dense grid.
        double worst_ratio = 0.0;
        const int steps = 2000;
        for (const Bus& bus : f13.buses) {
            for (const ZipTriple& c : {bus.zip.kp, bus.zip.kq}) {
                for (int i = -steps; i <= steps; ++i) {
                    const double dv = 0.05 * i / steps;
                    const double vsq = (1.0 + dv) * (1.0 + dv);
                    const double err = std::abs(zip_power_exact(vsq, 1.0, c) - zip_power_linearized(vsq, 1.0, c));
                    const double bound = std::abs(c.k2) * dv * dv / 2.0;
                    if (bound > 0.0) {
                        worst_ratio = std::max(worst_ratio, err / bound);
                    } else if (err > 1e-15) {
                        worst_ratio = std::max(worst_ratio, 1e9);
                    }
                }
            }
        }
        const bool ok = max_load <= 0.5 && worst <= 0.01 && worst_ratio <= 1.01;
        report(5, ok, fmt("max |V| diff %.5f p.u. (%d sweep iterations, peak load %.3f p.u.), zip err/bound %.6f",
                          worst, iters, max_load, worst_ratio));
    });

    run(6, [&] {
        const auto runs = validation::default_modes(kEpsilons, 24);
        const auto rep = validation::energy_report(f13, m13, runs, 24);
        bool ok = true;
        std::string d = fmt("base %.3f kWh; ", rep.base_kwh);
        for (const auto& r : rep.modes) {
            if (r.status == "optimal") {
                ok = ok && r.energy_kwh <= rep.base_kwh + 1e-6;
                d += fmt("%s %.3f; ", r.name.c_str(), r.energy_kwh);
            } else {
                d += r.name + " " + r.status + "; ";
            }
        }
        const double lo = 0.95 * 0.95, hi = 1.05 * 1.05;
        double vmin = 1e9, vmax = -1e9;
        for (const Solved& s : drcc_runs) {
            for (const auto& hp : s.dp.hours) {
                const Eigen::VectorXd v = s.dp.model.solve(hp.mu, s.sol.alpha.col(hp.hour));
                vmin = std::min(vmin, v.minCoeff());
                vmax = std::max(vmax, v.maxCoeff());
            }
        }
        ok = ok && !drcc_runs.empty() && vmin >= lo - 1e-9 && vmax <= hi + 1e-9;
        report(6, ok, d + fmt("drcc v in [%.5f, %.5f]", vmin, vmax));
    });

    run(7, [&] {
        synthetic::SynthOptions so;
        so.samples_per_hour = 3600;
        so.days = 2;
        so.seed = 7;
        const auto ds = synthetic::generate(f13, so);
        std::vector<std::string> loads;
        for (const auto& id : ds.teacher_order) {
            if (enrich::meter_kind(f13, id) == MeterKind::load) {
                loads.push_back(id);
            }
        }
        const int trials = 50;
        double worst_mean = 0.0, ratio_lo = 1e9, ratio_hi = 0.0, worst_ks = 0.0;
        for (int trial = 0; trial < trials; ++trial) {
            const std::string& id = loads[static_cast<std::size_t>(trial) % loads.size()];
            const enrich::HighResMeter& truth = ds.truth.at(id);
            enrich::HighResMeter copy = truth;
            copy.p.id = copy.q.id = id + "-teacher";
            const std::map<std::string, enrich::HighResMeter> teacher{{id + "-teacher", copy}};
            const std::map<std::string, enrich::HourlyMeter> student{{id, {truth.p.hourly_means(), truth.q.hourly_means()}}};
            enrich::EnrichOptions eo;
            eo.bins = 50;
            eo.seed = 100 + static_cast<std::uint64_t>(trial);
            const auto res = enrich::enrich_transformers(f13, teacher, student, eo);
            const auto& e = res.series.at(id).p;
            const auto& t = truth.p;
            double vt = 0.0, ve = 0.0;
            std::vector<double> dt, de;
            for (std::size_t h = 0; h < t.hours(); ++h) {
                const auto a = t.hour(h);
                const auto b = e.hour(h);
                double ma = 0.0, mb = 0.0;
                for (double x : a) {
                    ma += x;
                }
                for (double x : b) {
                    mb += x;
                }
                ma /= static_cast<double>(a.size());
                mb /= static_cast<double>(b.size());
                worst_mean = std::max(worst_mean, std::abs(ma - mb));
                double va = 0.0, vb = 0.0;
                for (double x : a) {
                    va += (x - ma) * (x - ma);
                    dt.push_back(x - ma);
                }
                for (double x : b) {
                    vb += (x - mb) * (x - mb);
                    de.push_back(x - mb);
                }
                vt += va / static_cast<double>(a.size());
                ve += vb / static_cast<double>(b.size());
            }
            ratio_lo = std::min(ratio_lo, ve / vt);
            ratio_hi = std::max(ratio_hi, ve / vt);
            worst_ks = std::max(worst_ks, ks_distance(dt, de));
        }
        // Normalisation of the chains and of the learning weights.
        double row_err = 0.0;
        for (const auto& id : ds.teacher_order) {
            const auto chain = enrich::fit_transition_model(ds.truth.at(id).p, 50);
            for (int b1 = 0; b1 < chain.bins; ++b1) {
                for (int b2 = 0; b2 < chain.bins; ++b2) {
                    double s = 0.0;
                    for (double x : chain.row(b1, b2)) {
                        s += x;
                    }
                    row_err = std::max(row_err, std::abs(s - 1.0));
                }
            }
        }
        synthetic::SynthOptions small = so;
        small.samples_per_hour = 60;
        const auto ds_small = synthetic::generate(f13, small);
        const auto teachers = ds_small.teachers(8);
        std::map<std::string, enrich::HourlyMeter> students;
        for (const auto& [id, m] : ds_small.hourly()) {
            if (!teachers.count(id)) {
                students[id] = m;
            }
        }
        const auto res = enrich::enrich_transformers(f13, teachers, students, {});
        double weight_err = 0.0;
        for (const auto& [id, sw] : res.weights) {
            double s = 0.0;
            for (double w : sw.weights.w) {
                s += w;
            }
            weight_err = std::max(weight_err, std::abs(s - 1.0));
        }
        const bool ok = worst_mean <= 1e-12 && ratio_lo >= 0.75 && ratio_hi <= 1.25 && worst_ks <= 0.1 &&
                        row_err <= 1e-9 && weight_err <= 1e-9 && !res.weights.empty();
        report(7, ok,
               fmt("%d trials: mean err %.2e, variance ratio [%.3f, %.3f], KS %.4f; chain rows %.1e, weights %.1e",
                   trials, worst_mean, ratio_lo, ratio_hi, worst_ks, row_err, weight_err));
    });

    run(8, [&] {
        const int seeds = 20;
        const std::size_t counts[3] = {0, 4, 8};
        double err[3] = {0.0, 0.0, 0.0};
        for (int seed = 1; seed <= seeds; ++seed) {
            synthetic::SynthOptions so;
            so.samples_per_hour = 60;
            so.days = 3;
            so.seed = static_cast<std::uint64_t>(seed);
            const auto ds = synthetic::generate(f13, so);
            const auto truth = enrich::moments_from_high_res(f13, ds.truth);
            for (int k = 0; k < 3; ++k) {
                enrich::MomentAmbiguitySet est;
                if (counts[k] == 0) {
                    est = enrich::moments_from_hourly(f13, ds.hourly());
                } else {
                    const auto te = ds.teachers(counts[k]);
                    std::map<std::string, enrich::HourlyMeter> st;
                    for (const auto& [id, m] : ds.hourly()) {
                        if (!te.count(id)) {
                            st[id] = m;
                        }
                    }
                    enrich::EnrichOptions eo;
                    eo.seed = static_cast<std::uint64_t>(seed);
                    est = enrich::moments_from_high_res(f13, enrich::enrich_transformers(f13, te, st, eo).series);
                }
                double e = 0.0;
                for (std::size_t i = 0; i < truth.size(); ++i) {
                    const auto j = est.find(truth.keys[i]);
                    if (!j) {
                        throw std::runtime_error("estimated moments miss an entry");
                    }
                    const double d = est.var[*j] - truth.var[i];
                    e += d * d;
                }
                err[k] += std::sqrt(e) / seeds;
            }
        }
        const bool ok = err[1] <= err[0] && err[2] <= err[1];
        report(8, ok, fmt("mean Frobenius error 0:%.5f 4:%.5f 8:%.5f over %d seeds", err[0], err[1], err[2], seeds));
    });

    run(9, [&] {
        const Feeder f = synthetic::two_pv_feeder();
        const auto m = fixture_moments(f);
        const auto dp = drcc::build_problem(f, m, options(drcc::Mode::drcc, 0.05));
        const auto sol = drcc::solve_dispatch(dp);
        bool ok = sol.status == drcc::SolveStatus::optimal && dp.model.pv_count() == 2;
        double worst_gain = -1e9;
        int feasible_points = 0;
        for (const auto& hp : dp.hours) {
            const auto& p = hp.socp;
            double best = 1e300;
            for (int i = 0; i <= 200; ++i) {
                for (int j = 0; j <= 200; ++j) {
                    Eigen::VectorXd y(2);
                    y << -1.0 + 0.01 * i, -1.0 + 0.01 * j;
                    bool feasible = true;
                    for (const auto& c : p.cones) {
                        const double lhs = c.f_mat.rows() ? (c.f_mat * y + c.g).norm() : 0.0;
                        if (lhs > c.e.dot(y) + c.f) {
                            feasible = false;
                            break;
                        }
                    }
                    if (feasible) {
                        ++feasible_points;
                        best = std::min(best, p.c.dot(y));
                    }
                }
            }
            const double solver = p.c.dot(sol.alpha.col(hp.hour));
            if (best < 1e300) {
                worst_gain = std::max(worst_gain, solver - best);
            }
        }
        ok = ok && feasible_points > 0 && worst_gain <= 1e-4;
        report(9, ok, fmt("largest grid improvement %.2e kWh over %zu hours (%d feasible grid points)", worst_gain,
                          dp.hours.size(), feasible_points));
    });

    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
