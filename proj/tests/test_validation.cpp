#include <gtest/gtest.h>

#include <cmath>

#include "cvr/cvr.hpp"

using namespace cvr;
using namespace cvr::validation;

namespace {

enrich::MomentAmbiguitySet synthetic_moments(const Feeder& f, std::uint64_t seed = 7) {
    synthetic::SynthOptions so;
    so.samples_per_hour = 60;
    so.days = 2;
    so.seed = seed;
    return enrich::moments_from_high_res(f, synthetic::generate(f, so).truth);
}

drcc::DispatchOptions opts(drcc::Mode m, double eps = 0.05, int horizon = 24) {
    drcc::DispatchOptions o;
    o.mode = m;
    o.epsilon = eps;
    o.horizon = horizon;
    return o;
}

// One single-phase line feeding a constant-power load.
Feeder two_bus(double r, double x) {
    Feeder f;
    f.root_id = "0";
    f.v0.fill(1.0);
    f.buses = {synthetic::make_bus("0", "a"), synthetic::make_bus("1", "a")};
    for (Bus& b : f.buses) {
        b.zip.kp = {0.0, 0.0, 1.0};
        b.zip.kq = {0.0, 0.0, 1.0};
    }
    Line l;
    l.from_id = "0";
    l.to_id = "1";
    l.r(0, 0) = r;
    l.x(0, 0) = x;
    f.lines = {l};
    f.meters = {{"L1", "1", 0, MeterKind::load}};
    return f;
}

NodalInjections mean_injections(const drcc::DispatchProblem& dp, const drcc::HourProblem& hp,
                                const Eigen::VectorXd& alpha) {
    const Eigen::Index n = dp.model.nodes();
    const Eigen::Index g = dp.model.pv_count();
    auto inj = NodalInjections::zeros(n);
    inj.p_load = hp.mu.head(n);
    inj.q_load = hp.mu.segment(n, n);
    for (Eigen::Index k = 0; k < g; ++k) {
        const int node = dp.model.pv_nodes[static_cast<std::size_t>(k)];
        inj.p_gen(node) += hp.mu(2 * n + k);
        inj.q_gen(node) += alpha(k) * hp.mu(dp.model.q_cap_offset() + k);
    }
    return inj;
}

} // namespace

TEST(Sweep, ZeroLoadsGiveHeadVoltage) {
    const Feeder f = synthetic::feeder13();
    const NetworkIndex index = NetworkIndex::build(f);
    const auto res = nonlinear_sweep(f, index, NodalInjections::zeros(static_cast<Eigen::Index>(index.node_count())));
    for (Eigen::Index k = 0; k < res.v.size(); ++k) {
        EXPECT_NEAR(std::norm(res.v(k)), f.v0[0], 1e-14);
    }
    EXPECT_LE(res.iterations, 2);
}

TEST(Sweep, TwoBusMatchesClosedForm) {
    const double r = 0.02, x = 0.05;
    const Feeder f = two_bus(r, x);
    const NetworkIndex index = NetworkIndex::build(f);
    for (auto [p, q] : {std::pair{0.3, 0.1}, std::pair{1.0, 0.4}, std::pair{2.0, -0.5}}) {
        auto inj = NodalInjections::zeros(1);
        inj.p_load(0) = p;
        inj.q_load(0) = q;
        const auto res = nonlinear_sweep(f, index, inj);
        // |V1|^4 - (v0 - 2(rP + xQ)) |V1|^2 + |Z|^2 |S|^2 = 0, upper root.
        const double a = 1.0 - 2.0 * (r * p + x * q);
        const double zs = (r * r + x * x) * (p * p + q * q);
        const double v1 = (a + std::sqrt(a * a - 4.0 * zs)) / 2.0;
        EXPECT_NEAR(res.squared()(0), v1, 1e-9) << p << "," << q;
    }
}

TEST(Sweep, OverloadRaisesDivergence) {
    const Feeder f = two_bus(0.02, 0.05);
    const NetworkIndex index = NetworkIndex::build(f);
    auto inj = NodalInjections::zeros(1);
    inj.p_load(0) = 20.0;
    inj.q_load(0) = 10.0;
    EXPECT_THROW(nonlinear_sweep(f, index, inj), OracleDivergenceError);
}

TEST(Sweep, LinearModelWithinOneHundredthAtLightLoad) {
    for (const Feeder& f : {synthetic::smoke_feeder(), synthetic::feeder13()}) {
        const NetworkIndex index = NetworkIndex::build(f);
        const auto dp = drcc::build_problem(f, synthetic_moments(f), opts(drcc::Mode::deterministic));
        const auto sol = drcc::solve_dispatch(dp);
        for (const auto& hp : dp.hours) {
            const auto res = nonlinear_sweep(f, index, mean_injections(dp, hp, sol.alpha.col(hp.hour)));
            const Eigen::VectorXd v = dp.model.solve(hp.mu, sol.alpha.col(hp.hour));
            EXPECT_LE((res.magnitude() - v.cwiseSqrt()).cwiseAbs().maxCoeff(), 0.01);
            EXPECT_LE(res.iterations, 50);
        }
    }
}

TEST(Zip, SurrogateErrorEqualsTheBound) {
    const ZipTriple c{0.96, -1.17, 1.21};
    for (int i = -50; i <= 50; ++i) {
        const double dv = 0.001 * i;
        const double vsq = (1.0 + dv) * (1.0 + dv);
        const double err = std::abs(zip_power_exact(vsq, 0.7, c) - zip_power_linearized(vsq, 0.7, c));
        EXPECT_NEAR(err, 0.7 * 1.17 * dv * dv / 2.0, 1e-13);
        EXPECT_LE(err, zip_linearization_bound(0.7, c, std::abs(dv)) * (1.0 + 1e-9));
    }
}

TEST(MonteCarlo, Wilson) {
    const double z = 1.959963984540054;
    auto [lo0, hi0] = wilson95(0, 1000);
    EXPECT_NEAR(lo0, 0.0, 1e-15);
    EXPECT_NEAR(hi0, z * z / (1000.0 + z * z), 1e-12);
    auto [lo, hi] = wilson95(50, 100);
    EXPECT_NEAR(0.5 - lo, hi - 0.5, 1e-12);
    // Wilson centre and half-width for k = 30, n = 400.
    const double n = 400.0, p = 30.0 / n;
    const double centre = (p + z * z / (2 * n)) / (1 + z * z / n);
    const double half = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
    auto [l2, h2] = wilson95(30, 400);
    EXPECT_NEAR(l2, centre - half, 1e-12);
    EXPECT_NEAR(h2, centre + half, 1e-12);
}

TEST(MonteCarlo, NeedsAThousandSamples) {
    const Feeder f = synthetic::smoke_feeder();
    const auto dp = drcc::build_problem(f, synthetic_moments(f), opts(drcc::Mode::drcc, 0.05, 2));
    McOptions mc;
    mc.samples = 999;
    EXPECT_THROW(monte_carlo_violation(dp, Eigen::MatrixXd::Zero(dp.model.pv_count(), 2), mc), ParameterError);
}

TEST(MonteCarlo, ZeroSpreadNeverViolates) {
    const Feeder f = synthetic::feeder13();
    const auto dp = drcc::build_problem(f, synthetic_moments(f).without_spread(), opts(drcc::Mode::drcc, 0.05));
    const auto sol = drcc::solve_dispatch(dp);
    ASSERT_EQ(sol.status, drcc::SolveStatus::optimal);
    for (Family fam : {Family::gaussian, Family::truncated_gaussian, Family::two_point}) {
        McOptions mc;
        mc.family = fam;
        mc.samples = 2000;
        const auto rep = monte_carlo_violation(dp, sol.alpha, mc);
        EXPECT_EQ(rep.max_rate, 0.0) << family_name(fam);
    }
}

TEST(MonteCarlo, GaussianRatesStayBelowEpsilon) {
    const Feeder f = synthetic::smoke_feeder();
    const auto m = synthetic_moments(f);
    for (double eps : {0.02, 0.1}) {
        const auto dp = drcc::build_problem(f, m, opts(drcc::Mode::drcc, eps));
        const auto sol = drcc::solve_dispatch(dp);
        McOptions mc;
        mc.family = Family::gaussian;
        mc.samples = 10000;
        const auto rep = monte_carlo_violation(dp, sol.alpha, mc);
        for (const auto& row : rep.rows) {
            EXPECT_LE(row.rate, eps);
            EXPECT_GE(row.rate, 0.0);
            EXPECT_LE(row.ci_lo, row.rate);
            EXPECT_GE(row.ci_hi, row.rate);
        }
        EXPECT_LT(rep.realized_mean_gap, 0.01);
    }
}

TEST(MonteCarlo, SameSeedSameReport) {
    const Feeder f = synthetic::feeder13();
    const auto dp = drcc::build_problem(f, synthetic_moments(f), opts(drcc::Mode::drcc, 0.05, 6));
    const auto sol = drcc::solve_dispatch(dp);
    McOptions mc;
    mc.samples = 5000;
    mc.seed = 11;
    mc.threads = 1;
    const auto a = monte_carlo_violation(dp, sol.alpha, mc);
    mc.threads = 3;
    const auto b = monte_carlo_violation(dp, sol.alpha, mc);
    EXPECT_EQ(violations_to_json(a), violations_to_json(b));
    EXPECT_EQ(a.realized_mean_gap, b.realized_mean_gap);
    mc.seed = 12;
    const auto c = monte_carlo_violation(dp, sol.alpha, mc);
    EXPECT_NE(a.realized_mean_gap, c.realized_mean_gap);
}

TEST(MonteCarlo, TwoPointRateIsTheCantelliMass) {
    Eigen::MatrixXd s(3, 3);
    s << 2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.5;
    const Eigen::MatrixXd s_half = drcc::psd_sqrt(s);
    const Eigen::VectorXd a = Eigen::Vector3d(0.5, -1.0, 2.0);
    const Eigen::VectorXd mu = Eigen::Vector3d(0.1, 0.2, 0.3);
    const double sigma = std::sqrt(a.dot(s * a));
    const std::size_t n = 20000;
    for (double eps : {0.02, 0.05, 0.1, 0.3}) {
        const double kappa = std::sqrt((1.0 - eps) / eps);
        const double b = -a.dot(mu) - kappa * sigma;
        std::mt19937_64 rng(5);
        const std::size_t hits = validation::detail::two_point_row(a, b, mu, s_half, 0.0, n, rng);
        EXPECT_LE(static_cast<double>(hits), eps * n + 1.0);
        EXPECT_GE(static_cast<double>(hits), eps * n - 1.0);
        // A looser row is violated less often.
        std::mt19937_64 rng2(5);
        EXPECT_LT(validation::detail::two_point_row(a, b - 0.5 * sigma, mu, s_half, 0.0, n, rng2), hits);
    }
}

TEST(MonteCarlo, TruncationWarnsWhenMeanLeavesTheBox) {
    const Feeder f = synthetic::smoke_feeder();
    const auto dp = drcc::build_problem(f, synthetic_moments(f), opts(drcc::Mode::drcc, 0.05, 2));
    McOptions mc;
    mc.family = Family::truncated_gaussian;
    mc.samples = 1000;
    mc.box_lo = 0.0;
    mc.box_hi = 1e-6;
    const auto rep = monte_carlo_violation(dp, Eigen::MatrixXd::Zero(dp.model.pv_count(), 2), mc);
    EXPECT_FALSE(rep.warnings.empty());
}

TEST(Energy, ReportRowsAndReductions) {
    const Feeder f = synthetic::feeder13();
    const auto m = synthetic_moments(f);
    const auto rep = energy_report(f, m, default_modes({0.05, 0.1}, 24), 24);
    ASSERT_EQ(rep.modes.size(), 6u);
    EXPECT_EQ(rep.modes[0].name, "Base");
    EXPECT_EQ(rep.modes[0].reduction_pct, 0.0);
    const auto base = drcc::build_problem(f, m, opts(drcc::Mode::deterministic));
    EXPECT_NEAR(rep.base_kwh, drcc::dispatch_energy_kwh(base, Eigen::MatrixXd::Zero(base.pv_count(), 24)), 1e-9);
    double e05 = 0.0, e10 = 0.0;
    for (const auto& row : rep.modes) {
        if (row.status != "optimal") {
            continue;
        }
        EXPECT_LE(row.energy_kwh, rep.base_kwh + 1e-6) << row.name;
        EXPECT_NEAR(row.reduction_pct, 100.0 * (rep.base_kwh - row.energy_kwh) / rep.base_kwh, 1e-12);
        if (row.name == "DRCC (eps=0.05)") {
            e05 = row.energy_kwh;
        }
        if (row.name == "DRCC (eps=0.1)") {
            e10 = row.energy_kwh;
        }
    }
    EXPECT_GT(e05, 0.0);
    EXPECT_LE(e10, e05 + 1e-6);
}

TEST(Energy, InfeasibleModeKeepsAPartialReport) {
    const Feeder f = synthetic::smoke_feeder();
    auto runs = default_modes({0.05}, 4);
    runs.back().options.limits.v_max = 0.5;
    const auto rep = energy_report(f, synthetic_moments(f), runs, 4);
    const auto& last = rep.modes.back();
    EXPECT_NE(last.status, "optimal");
    EXPECT_EQ(rep.modes[1].status, "optimal");
    const auto j = energy_to_json(rep);
    EXPECT_TRUE(j["modes"][last.name]["energy_kwh"].is_null());
    EXPECT_NE(energy_table(rep).find(" - "), std::string::npos);
}
