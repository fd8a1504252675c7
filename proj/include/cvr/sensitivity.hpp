#pragma once

// Linearised (LinDistFlow) voltage model of a radial feeder:
//
//   v = v_tilde + R p + X q
//
// with p, q the nodal net injections (generation minus load) of every
// non-root bus phase and v the squared voltage magnitudes.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <utility>

#include "cvr/feeder.hpp"

namespace cvr {

// Phase rotation Gamma(i, j) = alpha^(i - j), alpha = exp(-i 2 pi / 3).
inline Eigen::Matrix3cd phase_rotation() {
    const std::complex<double> alpha = std::polar(1.0, -2.0 * std::numbers::pi / 3.0);
    Eigen::Matrix3cd g;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            g(i, j) = std::pow(alpha, i - j);
        }
    }
    return g;
}

struct EffectiveImpedance {
    Eigen::Matrix3d r;
    Eigen::Matrix3d x;
};

// Effective matrices for the drop v_i - v_j = 2 (r_eff P + x_eff Q) under the
// small-unbalance assumption (phase voltages 120 degrees apart, near 1 p.u.).
inline EffectiveImpedance three_phase_effective_impedance(const Line& line) {
    const Eigen::Matrix3cd g = phase_rotation();
    const Eigen::Matrix3d gr = g.real();
    const Eigen::Matrix3d gi = g.imag();
    return {gr.cwiseProduct(line.r) + gi.cwiseProduct(line.x),
            gr.cwiseProduct(line.x) - gi.cwiseProduct(line.r)};
}

// Rows are lines (one per phase of the receiving bus, same order as the node
// list); entries are +1 on the sending-bus phase, -1 on the receiving phase.
struct IncidencePair {
    Eigen::MatrixXd a0; // rows x 3, columns are the root phases
    Eigen::MatrixXd a;  // rows x nodes
};

inline IncidencePair build_incidence(const NetworkIndex& index) {
    const auto n = static_cast<Eigen::Index>(index.node_count());
    IncidencePair inc{Eigen::MatrixXd::Zero(n, 3), Eigen::MatrixXd::Zero(n, n)};
    for (Eigen::Index row = 0; row < n; ++row) {
        const Node& node = index.nodes()[static_cast<std::size_t>(row)];
        inc.a(row, row) = -1.0;
        const auto up = static_cast<std::size_t>(index.parent(node.bus));
        if (up == index.root()) {
            inc.a0(row, node.phase) = 1.0;
        } else {
            inc.a(row, index.node(up, node.phase)) = 1.0;
        }
    }
    return inc;
}

inline IncidencePair build_incidence(const Feeder& feeder) {
    return build_incidence(NetworkIndex::build(feeder));
}

struct SensitivityModel {
    Eigen::MatrixXd r;
    Eigen::MatrixXd x;
    Eigen::VectorXd v_tilde;

    Eigen::VectorXd voltage(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const {
        return v_tilde + r * p + x * q;
    }
};

// Block-diagonal stacks of the effective line matrices, restricted to the
// phases of each receiving bus.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> line_impedance_blocks(const Feeder& feeder,
                                                                        const NetworkIndex& index) {
    const auto n = static_cast<Eigen::Index>(index.node_count());
    Eigen::MatrixXd dr = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index row = 0; row < n; ++row) {
        const Node& node = index.nodes()[static_cast<std::size_t>(row)];
        const Line& line = feeder.lines[static_cast<std::size_t>(index.incoming_line(node.bus))];
        const EffectiveImpedance z = three_phase_effective_impedance(line);
        for (int p : feeder.buses[node.bus].phases.list()) {
            const int col = index.node(node.bus, p);
            dr(row, col) = z.r(node.phase, p);
            dx(row, col) = z.x(node.phase, p);
        }
    }
    return {dr, dx};
}

// R = 2 A^-1 D_r A^-T, X = 2 A^-1 D_x A^-T, v_tilde = -A^-1 A0 v0 (rows of A
// are lines; see IncidencePair).
inline SensitivityModel build_sensitivities(const Feeder& feeder, const NetworkIndex& index,
                                            const IncidencePair& inc) {
    const Eigen::Index n = inc.a.rows();
    if (inc.a.cols() != n || inc.a0.rows() != n) {
        throw TopologyError("incidence matrices have inconsistent shapes");
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(inc.a);
    if (n > 0 && !lu.isInvertible()) {
        throw TopologyError("reduced incidence matrix is singular; feeder is not radial");
    }
    const Eigen::MatrixXd a_inv = n > 0 ? Eigen::MatrixXd(lu.inverse()) : Eigen::MatrixXd(0, 0);
    const auto [dr, dx] = line_impedance_blocks(feeder, index);
    const Eigen::Vector3d v0(feeder.v0[0], feeder.v0[1], feeder.v0[2]);

    SensitivityModel s;
    s.r = 2.0 * a_inv * dr * a_inv.transpose();
    s.x = 2.0 * a_inv * dx * a_inv.transpose();
    s.v_tilde = -a_inv * inc.a0 * v0;
    return s;
}

inline SensitivityModel build_sensitivities(const Feeder& feeder) {
    const NetworkIndex index = NetworkIndex::build(feeder);
    return build_sensitivities(feeder, index, build_incidence(index));
}

} // namespace cvr
