#pragma once

// Voltage as a function of the uncertainty block xi of one hour and the PV
// dispatch ratios alpha. Substituting the affine ZIP loads into the
// linearised flow equations gives
//
//   M(xi) v = num(xi, alpha)
//   M(xi)   = I + R diag(s_p o p_L) + X diag(s_q o q_L)
//   num     = v_tilde - R (o_p o p_L) - X (o_q o q_L) + R E p_g + X E (alpha o Q_cap)
//
// with (s, o) the ZIP slope/offset and E scattering PV entries onto their
// nodes. Injection raises voltage (R, X act on net injections).
//
// Row form: approximating v_m ~ v_n inside row n of M gives the scalar ratio
// v_n = num_n(xi, alpha) / d_n(xi), d_n = sum_m M_nm(xi), which is affine over
// affine in xi and is what the chance constraints use.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cvr/drcc/layout.hpp"
#include "cvr/sensitivity.hpp"

namespace cvr::drcc {

struct AffineVoltageModel {
    Eigen::MatrixXd r;
    Eigen::MatrixXd x;
    Eigen::VectorXd v_tilde;
    Eigen::VectorXd slope_p, offset_p, slope_q, offset_q; // per node
    std::vector<int> pv_nodes;

    // Numerator: num = num_const + num_xi * xi + sum_k alpha_k * Xcol(pv_k) * Q_cap_k
    Eigen::MatrixXd num_xi; // nodes x block
    // Denominator row sums: d = 1 + den_xi * xi
    Eigen::MatrixXd den_xi; // nodes x block

    Eigen::Index nodes() const { return r.rows(); }
    Eigen::Index pv_count() const { return static_cast<Eigen::Index>(pv_nodes.size()); }
    Eigen::Index block() const { return 2 * nodes() + 2 * pv_count(); }
    Eigen::Index q_cap_offset() const { return 2 * nodes() + pv_count(); }

    // Coefficient of alpha_k * Q_cap_k in the numerator of every node.
    Eigen::VectorXd alpha_column(Eigen::Index k) const { return x.col(pv_nodes[static_cast<std::size_t>(k)]); }

    Eigen::MatrixXd coupling(const Eigen::VectorXd& xi) const {
        const Eigen::Index n = nodes();
        const Eigen::VectorXd wp = slope_p.cwiseProduct(xi.head(n));
        const Eigen::VectorXd wq = slope_q.cwiseProduct(xi.segment(n, n));
        return Eigen::MatrixXd::Identity(n, n) + r * wp.asDiagonal() + x * wq.asDiagonal();
    }

    Eigen::VectorXd numerator(const Eigen::VectorXd& xi, const Eigen::VectorXd& alpha) const {
        Eigen::VectorXd num = v_tilde + num_xi * xi;
        for (Eigen::Index k = 0; k < pv_count(); ++k) {
            num += alpha_column(k) * (alpha(k) * xi(q_cap_offset() + k));
        }
        return num;
    }

    Eigen::VectorXd denominator(const Eigen::VectorXd& xi) const {
        return Eigen::VectorXd::Ones(nodes()) + den_xi * xi;
    }

    // Exact solution of the linear model, v = M(xi)^-1 num(xi, alpha).
    Eigen::VectorXd solve(const Eigen::VectorXd& xi, const Eigen::VectorXd& alpha) const {
        return coupling(xi).partialPivLu().solve(numerator(xi, alpha));
    }

    // Per-row ratio used by the chance constraints.
    Eigen::VectorXd row_voltage(const Eigen::VectorXd& xi, const Eigen::VectorXd& alpha) const {
        return numerator(xi, alpha).cwiseQuotient(denominator(xi));
    }

    // Substation active power (per-unit) at xi: total ZIP load minus PV output.
    double substation_power(const Eigen::VectorXd& xi, const Eigen::VectorXd& alpha) const {
        const Eigen::Index n = nodes();
        const Eigen::VectorXd v = solve(xi, alpha);
        const Eigen::VectorXd load = xi.head(n).cwiseProduct(slope_p.cwiseProduct(v) + offset_p);
        return load.sum() - xi.segment(2 * n, pv_count()).sum();
    }
};

inline AffineVoltageModel assemble_voltage_affine(const Feeder& feeder, const UncertaintyLayout& layout,
                                                  const SensitivityModel& sens) {
    const auto n = static_cast<Eigen::Index>(layout.node_count());
    const auto g = static_cast<Eigen::Index>(layout.pv_count());
    AffineVoltageModel m;
    m.r = sens.r;
    m.x = sens.x;
    m.v_tilde = sens.v_tilde;
    m.pv_nodes = layout.pv_nodes();
    m.slope_p.resize(n);
    m.offset_p.resize(n);
    m.slope_q.resize(n);
    m.offset_q.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Bus& bus = feeder.buses[layout.network().nodes()[static_cast<std::size_t>(i)].bus];
        m.slope_p(i) = bus.zip.kp.slope();
        m.offset_p(i) = bus.zip.kp.offset();
        m.slope_q(i) = bus.zip.kq.slope();
        m.offset_q(i) = bus.zip.kq.offset();
    }
    const Eigen::Index b = m.block();
    m.num_xi = Eigen::MatrixXd::Zero(n, b);
    m.den_xi = Eigen::MatrixXd::Zero(n, b);
    m.num_xi.leftCols(n) = -(m.r * m.offset_p.asDiagonal());
    m.num_xi.middleCols(n, n) = -(m.x * m.offset_q.asDiagonal());
    for (Eigen::Index k = 0; k < g; ++k) {
        m.num_xi.col(2 * n + k) = m.r.col(m.pv_nodes[static_cast<std::size_t>(k)]);
    }
    m.den_xi.leftCols(n) = m.r * m.slope_p.asDiagonal();
    m.den_xi.middleCols(n, n) = m.x * m.slope_q.asDiagonal();
    return m;
}

struct PositivityReport {
    bool pass = true;
    double worst_margin = 1.0; // min over rows of M_nn - sum_{m != n} |M_nm|
    Eigen::Index worst_row = -1;
};

// Row diagonal dominance of M(xi) over every vertex of the multiplier box.
// Each row's margin is concave and separable in the (p_L, q_L) pairs, so the
// worst vertex is found coordinate pair by coordinate pair.
inline PositivityReport check_denominator_positivity(const AffineVoltageModel& model, const Eigen::VectorXd& lower,
                                                     const Eigen::VectorXd& upper) {
    const Eigen::Index n = model.nodes();
    PositivityReport rep;
    rep.worst_margin = std::numeric_limits<double>::infinity();
    if (n == 0) {
        rep.worst_margin = 1.0;
        return rep;
    }
    for (Eigen::Index row = 0; row < n; ++row) {
        double margin = 1.0;
        for (Eigen::Index col = 0; col < n; ++col) {
            const double cp = model.r(row, col) * model.slope_p(col);
            const double cq = model.x(row, col) * model.slope_q(col);
            const double p_lo = lower(col), p_hi = upper(col);
            const double q_lo = lower(n + col), q_hi = upper(n + col);
            if (col == row) {
                margin += std::min(cp * p_lo, cp * p_hi) + std::min(cq * q_lo, cq * q_hi);
            } else {
                const double worst = std::max({std::abs(cp * p_lo + cq * q_lo), std::abs(cp * p_lo + cq * q_hi),
                                               std::abs(cp * p_hi + cq * q_lo), std::abs(cp * p_hi + cq * q_hi)});
                margin -= worst;
            }
        }
        if (margin < rep.worst_margin) {
            rep.worst_margin = margin;
            rep.worst_row = row;
        }
    }
    rep.pass = rep.worst_margin > 0.0;
    return rep;
}

// Validity at a single point (the mean); throws when M is not dominant.
inline void require_model_validity(const AffineVoltageModel& model, const Eigen::VectorXd& xi) {
    const PositivityReport rep = check_denominator_positivity(model, xi, xi);
    if (!rep.pass) {
        throw ModelValidityError("voltage coupling matrix is not diagonally dominant at the mean (margin " +
                                 std::to_string(rep.worst_margin) + ", row " + std::to_string(rep.worst_row) + ")");
    }
}

} // namespace cvr::drcc
