#pragma once

// Individual voltage chance constraints in the form a(alpha)^T xi + b <= 0.
// Upper side: num_n - v_max d_n <= 0; lower side: v_min d_n - num_n <= 0.
// Both follow from the row ratio v_n = num_n / d_n with d_n > 0.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "cvr/drcc/affine_model.hpp"

namespace cvr::drcc {

enum class Side { upper, lower };

inline const char* side_name(Side s) { return s == Side::upper ? "upper" : "lower"; }

struct VoltageLimits {
    double v_min = 0.95 * 0.95;
    double v_max = 1.05 * 1.05;
};

struct ChanceRow {
    int node = 0;
    int hour = 0;
    Side side = Side::upper;
    Eigen::VectorXd a_const;   // xi-block coefficients that do not depend on alpha
    Eigen::VectorXd alpha_coef; // coefficient of alpha_k on the Q_cap_k entry
    Eigen::Index q_cap_offset = 0;
    double b = 0.0;

    Eigen::VectorXd a(const Eigen::VectorXd& alpha) const {
        Eigen::VectorXd out = a_const;
        out.segment(q_cap_offset, alpha_coef.size()) += alpha_coef.cwiseProduct(alpha);
        return out;
    }

    double value(const Eigen::VectorXd& xi, const Eigen::VectorXd& alpha) const { return a(alpha).dot(xi) + b; }
};

// One upper and one lower row per node, in node order (upper first). The
// positivity report must come from check_denominator_positivity on the box the
// rows will be used over; a failed report refuses assembly.
inline std::vector<ChanceRow> assemble_chance_rows(const AffineVoltageModel& model, const PositivityReport& positivity,
                                                   const VoltageLimits& limits, int hour,
                                                   const std::vector<int>& monitored = {}) {
    if (!positivity.pass) {
        throw ModelValidityError("chance rows need a positive voltage denominator (worst margin " +
                                 std::to_string(positivity.worst_margin) + ")");
    }
    std::vector<int> rows = monitored;
    if (rows.empty()) {
        for (Eigen::Index n = 0; n < model.nodes(); ++n) {
            rows.push_back(static_cast<int>(n));
        }
    }
    std::vector<ChanceRow> out;
    out.reserve(2 * rows.size());
    Eigen::VectorXd alpha_col(model.pv_count());
    for (int n : rows) {
        for (Eigen::Index k = 0; k < model.pv_count(); ++k) {
            alpha_col(k) = model.x(n, model.pv_nodes[static_cast<std::size_t>(k)]);
        }
        const Eigen::VectorXd num = model.num_xi.row(n).transpose();
        const Eigen::VectorXd den = model.den_xi.row(n).transpose();

        ChanceRow up;
        up.node = n;
        up.hour = hour;
        up.side = Side::upper;
        up.a_const = num - limits.v_max * den;
        up.alpha_coef = alpha_col;
        up.q_cap_offset = model.q_cap_offset();
        up.b = model.v_tilde(n) - limits.v_max;
        out.push_back(std::move(up));

        ChanceRow lo;
        lo.node = n;
        lo.hour = hour;
        lo.side = Side::lower;
        lo.a_const = limits.v_min * den - num;
        lo.alpha_coef = -alpha_col;
        lo.q_cap_offset = model.q_cap_offset();
        lo.b = limits.v_min - model.v_tilde(n);
        out.push_back(std::move(lo));
    }
    return out;
}

// Cantelli factor sqrt((1 - eps) / eps).
inline double soc_radius(double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw ParameterError("risk level epsilon must lie in (0, 1)");
    }
    return std::sqrt((1.0 - epsilon) / epsilon);
}

} // namespace cvr::drcc
