#pragma once

// Three-phase forward/backward sweep on the full complex network, with
// ZIP loads evaluated exactly at the current voltage. Used as the oracle
// for the linearised model (it keeps the branch losses LinDistFlow drops).

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "cvr/feeder.hpp"
#include "cvr/zip_load.hpp"

namespace cvr::validation {

// Per-node quantities in NetworkIndex node order (per-unit).
struct NodalInjections {
    Eigen::VectorXd p_load; // ZIP multipliers
    Eigen::VectorXd q_load;
    Eigen::VectorXd p_gen;
    Eigen::VectorXd q_gen;

    static NodalInjections zeros(Eigen::Index n) {
        return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    }
};

struct SweepResult {
    Eigen::VectorXcd v; // complex phase voltages per node
    int iterations = 0;

    Eigen::VectorXd magnitude() const { return v.cwiseAbs(); }
    Eigen::VectorXd squared() const { return v.cwiseAbs2(); }
};

struct SweepOptions {
    double tolerance = 1e-10;
    int max_iterations = 200;
};

inline SweepResult nonlinear_sweep(const Feeder& feeder, const NetworkIndex& index, const NodalInjections& inj,
                                   const SweepOptions& opt = {}) {
    using cd = std::complex<double>;
    const auto n = static_cast<Eigen::Index>(index.node_count());
    const std::size_t nb = feeder.buses.size();
    const double two_pi_3 = 2.0 * std::numbers::pi / 3.0;
    const cd head[3] = {std::polar(std::sqrt(feeder.v0[0]), 0.0), std::polar(std::sqrt(feeder.v0[1]), -two_pi_3),
                        std::polar(std::sqrt(feeder.v0[2]), two_pi_3)};

    // Bus-level 3-vectors; absent phases stay zero.
    std::vector<Eigen::Vector3cd> v(nb, Eigen::Vector3cd::Zero()), j(nb, Eigen::Vector3cd::Zero());
    std::vector<Eigen::Matrix3cd> z(nb, Eigen::Matrix3cd::Zero());
    for (std::size_t b = 0; b < nb; ++b) {
        if (b != index.root() && index.incoming_line(b) >= 0) {
            const Line& line = feeder.lines[static_cast<std::size_t>(index.incoming_line(b))];
            z[b] = line.r.cast<cd>() + cd(0.0, 1.0) * line.x.cast<cd>();
        }
    }
    // Flat start at the head voltages.
    for (std::size_t b = 0; b < nb; ++b) {
        for (int p : feeder.buses[b].phases.list()) {
            v[b](p) = head[p];
        }
    }

    SweepResult res;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        // Backward: branch currents from nodal injections.
        for (auto& x : j) {
            x.setZero();
        }
        for (auto rit = index.order().rbegin(); rit != index.order().rend(); ++rit) {
            const std::size_t b = *rit;
            if (b == index.root()) {
                continue;
            }
            const Bus& bus = feeder.buses[b];
            for (int p : bus.phases.list()) {
                const auto k = static_cast<Eigen::Index>(index.node(b, p));
                const double vsq = std::norm(v[b](p));
                if (!(vsq > 0.0) || !std::isfinite(vsq)) {
                    throw OracleDivergenceError("sweep voltage collapsed at bus '" + bus.id + "'");
                }
                const double pl = zip_power_exact(vsq, inj.p_load(k), bus.zip.kp);
                const double ql = zip_power_exact(vsq, inj.q_load(k), bus.zip.kq);
                const cd s_net(inj.p_gen(k) - pl, inj.q_gen(k) - ql);
                // Current leaving the bus into the load equals conj(S_load / V).
                j[b](p) += -std::conj(s_net / v[b](p));
            }
            const int parent = index.parent(b);
            if (parent >= 0 && static_cast<std::size_t>(parent) != index.root()) {
                for (int p : bus.phases.list()) {
                    j[static_cast<std::size_t>(parent)](p) += j[b](p);
                }
            }
        }
        // Forward: voltage drops along the tree.
        double delta = 0.0;
        for (std::size_t b : index.order()) {
            if (b == index.root()) {
                continue;
            }
            const auto parent = static_cast<std::size_t>(index.parent(b));
            Eigen::Vector3cd up = parent == index.root() ? Eigen::Vector3cd(head[0], head[1], head[2]) : v[parent];
            const Eigen::Vector3cd drop = z[b] * j[b];
            for (int p : feeder.buses[b].phases.list()) {
                const cd nv = up(p) - drop(p);
                delta = std::max(delta, std::abs(nv - v[b](p)));
                v[b](p) = nv;
            }
        }
        res.iterations = it;
        if (!std::isfinite(delta)) {
            throw OracleDivergenceError("sweep produced non-finite voltages");
        }
        if (delta < opt.tolerance) {
            res.v.resize(n);
            for (Eigen::Index k = 0; k < n; ++k) {
                const Node& node = index.nodes()[static_cast<std::size_t>(k)];
                res.v(k) = v[node.bus](node.phase);
            }
            return res;
        }
    }
    throw OracleDivergenceError("sweep did not converge within " + std::to_string(opt.max_iterations) +
                                " iterations");
}

} // namespace cvr::validation
