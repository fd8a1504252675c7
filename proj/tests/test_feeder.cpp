#include <gtest/gtest.h>

#include <complex>
#include <fstream>
#include <random>

#include "cvr/cvr.hpp"

using namespace cvr;

namespace {

Feeder fixture(const std::string& name) { return load_feeder(std::string(FIXTURE_DIR) + "/" + name); }

// Diagonal-impedance three-phase path 0-1-2 with a lateral 1-3 on phase b.
Feeder uncoupled_feeder() {
    Feeder f;
    f.root_id = "0";
    f.buses = {synthetic::make_bus("0", "abc"), synthetic::make_bus("1", "abc"), synthetic::make_bus("2", "abc"),
               synthetic::make_bus("3", "b")};
    auto line = [](std::string a, std::string b, double r, double x, std::string phases) {
        Line l;
        l.from_id = a;
        l.to_id = b;
        for (int p : PhaseSet::parse(phases).list()) {
            l.r(p, p) = r * (1.0 + 0.1 * p);
            l.x(p, p) = x * (1.0 + 0.05 * p);
        }
        return l;
    };
    f.lines = {line("0", "1", 0.01, 0.02, "abc"), line("1", "2", 0.02, 0.03, "abc"), line("1", "3", 0.015, 0.01, "b")};
    return f;
}

// Recursive LinDistFlow on effective impedances computed with std::complex:
// v_child = v_parent - 2 (r P + x Q), flows are downstream net consumption.
Eigen::VectorXd recursive_lindistflow(const Feeder& f, const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    const NetworkIndex ix = NetworkIndex::build(f);
    const std::size_t nb = f.buses.size();
    std::vector<Eigen::Vector3d> pf(nb, Eigen::Vector3d::Zero()), qf(nb, Eigen::Vector3d::Zero());
    for (std::size_t n = 0; n < ix.node_count(); ++n) {
        const Node& node = ix.nodes()[n];
        pf[node.bus](node.phase) -= p(static_cast<Eigen::Index>(n));
        qf[node.bus](node.phase) -= q(static_cast<Eigen::Index>(n));
    }
    const auto& order = ix.order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (*it != ix.root()) {
            pf[static_cast<std::size_t>(ix.parent(*it))] += pf[*it];
            qf[static_cast<std::size_t>(ix.parent(*it))] += qf[*it];
        }
    }
    const std::complex<double> a = std::polar(1.0, -2.0 * M_PI / 3.0);
    std::vector<Eigen::Vector3d> v(nb, Eigen::Vector3d::Zero());
    v[ix.root()] = Eigen::Vector3d(f.v0[0], f.v0[1], f.v0[2]);
    for (std::size_t b : order) {
        if (b == ix.root()) {
            continue;
        }
        const Line& l = f.lines[static_cast<std::size_t>(ix.incoming_line(b))];
        const std::size_t up = static_cast<std::size_t>(ix.parent(b));
        for (int i : f.buses[b].phases.list()) {
            double drop = 0.0;
            for (int j : f.buses[b].phases.list()) {
                const std::complex<double> w = std::pow(a, i - j) * std::conj(std::complex<double>(l.r(i, j), l.x(i, j)));
                drop += w.real() * pf[b](j) - w.imag() * qf[b](j);
            }
            v[b](i) = v[up](i) - 2.0 * drop;
        }
    }
    Eigen::VectorXd out(static_cast<Eigen::Index>(ix.node_count()));
    for (std::size_t n = 0; n < ix.node_count(); ++n) {
        out(static_cast<Eigen::Index>(n)) = v[ix.nodes()[n].bus](ix.nodes()[n].phase);
    }
    return out;
}

} // namespace

TEST(Zip, SlopeAndOffsetSplitTheCurrentTerm) {
    const ZipTriple z{0.96, -1.17, 1.21};
    EXPECT_NEAR(z.slope(), 0.96 - 0.585, 1e-15);
    EXPECT_NEAR(z.offset(), 1.21 - 0.585, 1e-15);
    EXPECT_DOUBLE_EQ(zip_power_exact(1.0, 2.0, z), zip_power_linearized(1.0, 2.0, z));
}

TEST(Zip, ConstantPowerHasNoLinearizationError) {
    const ZipTriple z{0.0, 0.0, 1.0};
    for (double v = 0.8; v < 1.2; v += 0.01) {
        EXPECT_DOUBLE_EQ(zip_power_exact(v, 0.7, z), zip_power_linearized(v, 0.7, z));
    }
}

TEST(Zip, GapIsTheSquaredMagnitudeDeviation) {
    const ZipTriple z{6.28, -10.16, 4.88};
    for (double dv = -0.05; dv <= 0.05; dv += 0.001) {
        const double V = 1.0 + dv;
        const double gap = std::abs(zip_power_exact(V * V, 1.0, z) - zip_power_linearized(V * V, 1.0, z));
        EXPECT_NEAR(gap, std::abs(z.k2) * dv * dv / 2.0, 1e-12);
        EXPECT_LE(gap, zip_linearization_bound(1.0, z, std::abs(dv)) * 1.01 + 1e-15);
    }
}

TEST(Zip, NonPositiveVoltageIsRejected) {
    EXPECT_THROW(zip_power_exact(0.0, 1.0, {}), DomainError);
    EXPECT_THROW(zip_power_exact(-0.1, 1.0, {}), DomainError);
}

TEST(Pv, CapabilityIsTheRemainingApparentPower) {
    EXPECT_DOUBLE_EQ(pv_reactive_capability(5.0, 3.0), 4.0);
    EXPECT_DOUBLE_EQ(pv_reactive_capability(1.0, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(pv_reactive_capability(1.0, 1.0), 0.0);
    EXPECT_THROW(pv_reactive_capability(1.0, 1.1), InfeasibleOperatingPointError);
    EXPECT_THROW(pv_reactive_capability(-1.0, 0.0), DomainError);
    EXPECT_DOUBLE_EQ(pv_reactive_capability_clamped(1.0, 1.5), 0.0);
}

TEST(Pv, DispatchRatioBox) {
    EXPECT_DOUBLE_EQ(pv_reactive_output(-0.5, 0.4), -0.2);
    EXPECT_THROW(pv_reactive_output(1.01, 0.4), DomainError);
    EXPECT_THROW(pv_reactive_output(std::nan(""), 0.4), DomainError);
}

TEST(Phase, ParseAndList) {
    EXPECT_EQ(PhaseSet::parse("ac").list(), (std::vector<int>{0, 2}));
    EXPECT_EQ(PhaseSet::parse("cba"), PhaseSet::all());
    EXPECT_TRUE(PhaseSet::parse("b").is_subset_of(PhaseSet::parse("bc")));
    EXPECT_THROW(PhaseSet::parse("d"), Error);
}

TEST(Validate, FixturesAreRadial) {
    for (const char* name : {"smoke3.json", "two_pv.json", "feeder13.json"}) {
        const ValidationReport rep = validate_radial(fixture(name));
        EXPECT_TRUE(rep.ok()) << name << ": " << rep.summary();
    }
}

TEST(Validate, FixturesMatchTheBuilders) {
    EXPECT_EQ(feeder_to_json(fixture("smoke3.json")), feeder_to_json(synthetic::smoke_feeder()));
    EXPECT_EQ(feeder_to_json(fixture("two_pv.json")), feeder_to_json(synthetic::two_pv_feeder()));
    EXPECT_EQ(feeder_to_json(fixture("feeder13.json")), feeder_to_json(synthetic::feeder13()));
}

TEST(Validate, CycleIsReported) {
    Feeder f = synthetic::smoke_feeder();
    f.lines.push_back(synthetic::coupled_line("0", "2", 0.01));
    const auto rep = validate_radial(f);
    EXPECT_TRUE(rep.has("not-radial"));
    EXPECT_THROW(NetworkIndex::build(f), TopologyError);
}

TEST(Validate, LoopWithRightEdgeCountIsReported) {
    Feeder f = synthetic::smoke_feeder();
    f.buses.push_back(synthetic::make_bus("3", "abc"));
    f.lines.push_back(synthetic::coupled_line("1", "2", 0.01));
    const auto rep = validate_radial(f);
    EXPECT_TRUE(rep.has("cycle") || rep.has("disconnected"));
}

TEST(Validate, PhaseMismatchAndAsymmetry) {
    Feeder f = synthetic::smoke_feeder();
    f.buses[1].phases = PhaseSet::parse("ab");
    f.lines[0] = synthetic::coupled_line("0", "1", 0.02, PhaseSet::parse("ab"));
    f.lines[1].r(0, 1) += 0.01;
    const auto rep = validate_radial(f);
    EXPECT_TRUE(rep.has("phase-mismatch"));
    EXPECT_TRUE(rep.has("asymmetric-impedance"));
}

TEST(Validate, PvOnRootAndDanglingLine) {
    Feeder f = synthetic::smoke_feeder();
    f.buses[0].pv = PvInverter{0.1, {}};
    f.lines[1].to_id = "9";
    const auto rep = validate_radial(f);
    EXPECT_TRUE(rep.has("pv-on-root"));
    EXPECT_TRUE(rep.has("dangling-endpoint"));
}

TEST(Validate, ZipNormalization) {
    Feeder f = synthetic::smoke_feeder();
    f.buses[1].zip.kp = {1.0, 0.5, 0.0};
    EXPECT_TRUE(validate_radial(f).has("zip-not-normalized"));
    f.buses[1].zip.normalized = false;
    EXPECT_FALSE(validate_radial(f).has("zip-not-normalized"));
}

TEST(Io, RoundTrip) {
    const Feeder f = synthetic::feeder13();
    const Feeder g = feeder_from_json(feeder_to_json(f));
    EXPECT_EQ(feeder_to_json(g), feeder_to_json(f));
    EXPECT_EQ(g.meters.size(), 42u);
    EXPECT_DOUBLE_EQ(g.lines[3].x(1, 2), f.lines[3].x(1, 2));
}

TEST(Io, SchemaErrorsNameTheField) {
    nlohmann::json j = feeder_to_json(synthetic::smoke_feeder());
    j["buses"][1]["phases"] = 7;
    try {
        feeder_from_json(j);
        FAIL() << "expected a schema error";
    } catch (const SchemaError& e) {
        EXPECT_NE(std::string(e.what()).find("feeder.buses[1].phases"), std::string::npos) << e.what();
    }
    j = feeder_to_json(synthetic::smoke_feeder());
    j["lines"][0]["r"][2] = {1.0, 2.0};
    try {
        feeder_from_json(j);
        FAIL() << "expected a schema error";
    } catch (const SchemaError& e) {
        EXPECT_NE(std::string(e.what()).find("feeder.lines[0].r[2]"), std::string::npos) << e.what();
    }
}

TEST(Io, MissingFileIsNamedOnce) {
    try {
        load_feeder("/nonexistent/f.json");
        FAIL();
    } catch (const SchemaError& e) {
        const std::string msg = e.what();
        EXPECT_EQ(msg.find("/nonexistent/f.json"), msg.rfind("/nonexistent/f.json")) << msg;
    }
}

TEST(Index, BreadthFirstNodesOnServedPhases) {
    const Feeder f = synthetic::feeder13();
    const NetworkIndex ix = NetworkIndex::build(f);
    EXPECT_EQ(ix.node_count(), 28u);
    EXPECT_EQ(ix.order().front(), ix.root());
    for (std::size_t k = 1; k < ix.order().size(); ++k) {
        const auto b = ix.order()[k];
        const auto up = static_cast<std::size_t>(ix.parent(b));
        const auto pos = std::find(ix.order().begin(), ix.order().end(), up) - ix.order().begin();
        EXPECT_LT(static_cast<std::size_t>(pos), k);
    }
    EXPECT_EQ(ix.node(*f.find_bus("7"), 0), -1);
    EXPECT_GE(ix.node(*f.find_bus("7"), 2), 0);
}

TEST(Sensitivity, EffectiveImpedanceMatchesComplexProduct) {
    const Line l = synthetic::coupled_line("0", "1", 1.0);
    const EffectiveImpedance z = three_phase_effective_impedance(l);
    const std::complex<double> a = std::polar(1.0, -2.0 * M_PI / 3.0);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const std::complex<double> w = std::pow(a, i - j) * std::conj(std::complex<double>(l.r(i, j), l.x(i, j)));
            EXPECT_NEAR(z.r(i, j), w.real(), 1e-14);
            EXPECT_NEAR(z.x(i, j), -w.imag(), 1e-14);
        }
        EXPECT_DOUBLE_EQ(z.r(i, i), l.r(i, i));
        EXPECT_DOUBLE_EQ(z.x(i, i), l.x(i, i));
    }
}

TEST(Sensitivity, SinglePhaseDropIsTwiceZS) {
    Feeder f = synthetic::two_pv_feeder();
    f.buses.resize(2);
    f.lines.resize(1);
    f.meters.clear();
    const SensitivityModel s = build_sensitivities(f);
    ASSERT_EQ(s.r.rows(), 1);
    EXPECT_NEAR(s.r(0, 0), 0.04, 1e-15);
    EXPECT_NEAR(s.x(0, 0), 0.08, 1e-15);
    EXPECT_NEAR(s.v_tilde(0), f.v0[0], 1e-15);
}

TEST(Sensitivity, MatchesRecursiveLinDistFlow) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (const Feeder& f : {synthetic::feeder13(), synthetic::smoke_feeder(), uncoupled_feeder()}) {
        const SensitivityModel s = build_sensitivities(f);
        for (int trial = 0; trial < 5; ++trial) {
            Eigen::VectorXd p(s.r.rows()), q(s.r.rows());
            for (Eigen::Index i = 0; i < p.size(); ++i) {
                p(i) = u(rng);
                q(i) = u(rng);
            }
            const Eigen::VectorXd oracle = recursive_lindistflow(f, p, q);
            EXPECT_LT((s.voltage(p, q) - oracle).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(Sensitivity, UncoupledMatricesAreSymmetricPsd) {
    const SensitivityModel s = build_sensitivities(uncoupled_feeder());
    EXPECT_LT((s.r - s.r.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((s.x - s.x.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s.r).eigenvalues().minCoeff(), -1e-14);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s.x).eigenvalues().minCoeff(), -1e-14);
}

TEST(Sensitivity, InjectionRaisesVoltage) {
    const Feeder f = synthetic::feeder13();
    const SensitivityModel s = build_sensitivities(f);
    const Eigen::Index n = s.r.rows();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd p = zero;
        p(i) = 0.1;
        EXPECT_GT(s.voltage(p, zero)(i), s.voltage(zero, zero)(i));
    }
    EXPECT_LT((s.v_tilde.array() - f.v0[0]).abs().maxCoeff(), 1e-14);
}

TEST(Sensitivity, LateralsShareOnlyTheTrunk) {
    const Feeder f = synthetic::feeder13();
    const NetworkIndex ix = NetworkIndex::build(f);
    const SensitivityModel s = build_sensitivities(f);
    const int n7 = ix.node(*f.find_bus("7"), 2);
    const int n9 = ix.node(*f.find_bus("9"), 0);
    // bus 7 (phase c) and bus 9 (phase a) share only the trunk
    EXPECT_NE(s.r(n7, n9), 0.0);
    EXPECT_GT(s.r(n7, n7), s.r(ix.node(*f.find_bus("6"), 2), ix.node(*f.find_bus("6"), 2)));
}
