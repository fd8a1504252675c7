#pragma once

// Small dense second-order cone program solver (log-barrier interior point):
//
//   minimize  c^T y
//   s.t.      || F_i y + g_i ||_2 <= e_i^T y + f_i      for every cone i
//
// Cones with zero rows in F are plain linear inequalities. Each cone uses the
// barrier -log(s^2 - ||u||^2), which is 2-self-concordant, so the duality gap
// on the central path is 2 m / t. A phase-I problem with one extra slack
// finds a strictly feasible start or certifies infeasibility.
//
// Decision dimensions here are tiny (a handful of PV phases), so every cone is
// reduced to its Gram form (F^T F, F^T g, g^T g) once and Newton steps cost
// O(m d^2).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace cvr::drcc {

struct SocCone {
    Eigen::MatrixXd f_mat; // rows x dim (rows may be 0)
    Eigen::VectorXd g;     // rows
    Eigen::VectorXd e;     // dim
    double f = 0.0;
};

struct SocpProblem {
    Eigen::Index dim = 0;
    Eigen::VectorXd c;
    std::vector<SocCone> cones;
    Eigen::VectorXd start; // optional phase-I starting point (zero when empty)
};

enum class SolveStatus { optimal, infeasible, numerical_limit };

inline const char* status_name(SolveStatus s) {
    switch (s) {
    case SolveStatus::optimal:
        return "optimal";
    case SolveStatus::infeasible:
        return "infeasible";
    case SolveStatus::numerical_limit:
        return "numerical-limit";
    }
    return "?";
}

struct SolverConfig {
    double tolerance = 1e-8; // absolute duality-gap bound, objective units
    int max_newton_steps = 4000;
    double barrier_growth = 20.0;
};

struct SocpResult {
    SolveStatus status = SolveStatus::numerical_limit;
    Eigen::VectorXd y;
    double objective = 0.0;
    int newton_steps = 0;
    // Slack e^T y + f - ||F y + g|| per cone at y (phase-I point when infeasible).
    std::vector<double> slacks;
    Eigen::Index worst_cone = -1;
};

namespace detail {

struct GramCone {
    Eigen::MatrixXd q; // F^T F
    Eigen::VectorXd r; // F^T g
    double c0 = 0.0;   // g^T g
    Eigen::VectorXd e;
    double f = 0.0;

    double s(const Eigen::VectorXd& y) const { return e.dot(y) + f; }
    double norm_sq(const Eigen::VectorXd& y) const {
        return std::max(0.0, y.dot(q * y) + 2.0 * r.dot(y) + c0);
    }
};

inline std::vector<GramCone> gram_cones(const SocpProblem& p, bool with_slack) {
    const Eigen::Index d = p.dim + (with_slack ? 1 : 0);
    std::vector<GramCone> out;
    out.reserve(p.cones.size());
    for (const auto& cone : p.cones) {
        GramCone gc;
        gc.q = Eigen::MatrixXd::Zero(d, d);
        gc.r = Eigen::VectorXd::Zero(d);
        gc.e = Eigen::VectorXd::Zero(d);
        if (cone.f_mat.rows() > 0) {
            gc.q.topLeftCorner(p.dim, p.dim) = cone.f_mat.transpose() * cone.f_mat;
            gc.r.head(p.dim) = cone.f_mat.transpose() * cone.g;
            gc.c0 = cone.g.squaredNorm();
        }
        gc.e.head(p.dim) = cone.e;
        if (with_slack) {
            gc.e(p.dim) = 1.0;
        }
        gc.f = cone.f;
        out.push_back(std::move(gc));
    }
    return out;
}

inline bool strictly_inside(const std::vector<GramCone>& cones, const Eigen::VectorXd& y) {
    for (const auto& k : cones) {
        const double s = k.s(y);
        if (!(s > 0.0) || !(s * s - k.norm_sq(y) > 0.0)) {
            return false;
        }
    }
    return true;
}

// Minimises t c^T y + sum_i -log(s_i^2 - ||u_i||^2) from a strictly feasible y.
// Returns false when the step budget runs out. stop(y) may end early.
template <class Stop>
bool center(const std::vector<GramCone>& cones, const Eigen::VectorXd& c, double t, Eigen::VectorXd& y,
            int& budget, Stop&& stop) {
    const Eigen::Index d = y.size();
    std::vector<double> dvals(cones.size());
    for (int iter = 0; iter < 200; ++iter) {
        if (budget-- <= 0) {
            return false;
        }
        Eigen::VectorXd grad = t * c;
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d, d);
        for (std::size_t i = 0; i < cones.size(); ++i) {
            const auto& k = cones[i];
            const double s = k.s(y);
            const double dv = s * s - k.norm_sq(y);
            const Eigen::VectorXd qy = k.q * y + k.r;
            const Eigen::VectorXd dgrad = 2.0 * s * k.e - 2.0 * qy;
            grad -= dgrad / dv;
            hess += (dgrad * dgrad.transpose()) / (dv * dv);
            hess -= (2.0 * k.e * k.e.transpose() - 2.0 * k.q) / dv;
            dvals[i] = dv;
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
        Eigen::VectorXd step = -ldlt.solve(grad);
        if (!step.allFinite()) {
            step = -hess.completeOrthogonalDecomposition().solve(grad);
            if (!step.allFinite()) {
                return false;
            }
        }
        const double decrement = -grad.dot(step);
        if (decrement / 2.0 <= 1e-12) {
            return true;
        }
        // Backtracking on the exact change of the barrier objective.
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            const Eigen::VectorXd trial = y + alpha * step;
            if (strictly_inside(cones, trial)) {
                double delta = t * alpha * c.dot(step);
                for (std::size_t i = 0; i < cones.size(); ++i) {
                    const double s = cones[i].s(trial);
                    delta += std::log(dvals[i] / (s * s - cones[i].norm_sq(trial)));
                }
                if (delta <= -0.25 * alpha * decrement || alpha * step.norm() <= 1e-15 * (1.0 + y.norm())) {
                    y = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            // Precision floor: the Newton step no longer produces a measurable decrease.
            return true;
        }
        if (stop(y)) {
            return true;
        }
    }
    return true;
}

} // namespace detail

inline SocpResult solve_socp(const SocpProblem& problem, const SolverConfig& config = {}) {
    SocpResult res;
    const Eigen::Index d = problem.dim;
    const auto m = static_cast<double>(problem.cones.size());
    int budget = config.max_newton_steps;
    if (d == 0) {
        // Nothing to decide; feasibility is fixed by the constant cones.
        res.y = Eigen::VectorXd::Zero(0);
        res.status = SolveStatus::optimal;
        for (std::size_t i = 0; i < problem.cones.size(); ++i) {
            const auto& cone = problem.cones[i];
            const double slack = cone.f - (cone.g.size() > 0 ? cone.g.norm() : 0.0);
            res.slacks.push_back(slack);
            if (res.worst_cone < 0 || slack < res.slacks[static_cast<std::size_t>(res.worst_cone)]) {
                res.worst_cone = static_cast<Eigen::Index>(i);
            }
            if (slack < 0.0) {
                res.status = SolveStatus::infeasible;
            }
        }
        return res;
    }

    auto fill_slacks = [&](const Eigen::VectorXd& y) {
        res.slacks.clear();
        double worst = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < problem.cones.size(); ++i) {
            const auto& cone = problem.cones[i];
            double nrm = 0.0;
            if (cone.f_mat.rows() > 0) {
                nrm = (cone.f_mat * y + cone.g).norm();
            }
            const double slack = cone.e.dot(y) + cone.f - nrm;
            res.slacks.push_back(slack);
            if (slack < worst) {
                worst = slack;
                res.worst_cone = static_cast<Eigen::Index>(i);
            }
        }
    };

    // Phase I: minimise tau subject to s_i + tau >= ||u_i||.
    Eigen::VectorXd y = problem.start.size() == d ? problem.start : Eigen::VectorXd::Zero(d);
    {
        const auto cones = detail::gram_cones(problem, false);
        if (!detail::strictly_inside(cones, y)) {
            const auto ext = detail::gram_cones(problem, true);
            double tau = 0.0;
            for (const auto& k : cones) {
                tau = std::max(tau, std::sqrt(k.norm_sq(y)) - k.s(y));
            }
            Eigen::VectorXd z(d + 1);
            z << y, tau + 1.0;
            Eigen::VectorXd cz = Eigen::VectorXd::Zero(d + 1);
            cz(d) = 1.0;
            double t = 1.0;
            bool feasible = false;
            auto below_zero = [&](const Eigen::VectorXd& zz) { return zz(d) < 0.0; };
            for (;;) {
                if (!detail::center(ext, cz, t, z, budget, below_zero)) {
                    res.status = SolveStatus::numerical_limit;
                    res.y = z.head(d);
                    res.newton_steps = config.max_newton_steps - budget;
                    fill_slacks(res.y);
                    return res;
                }
                if (z(d) < 0.0) {
                    feasible = true;
                    break;
                }
                if (2.0 * m / t < 1e-11) {
                    break;
                }
                t *= config.barrier_growth;
            }
            y = z.head(d);
            if (!feasible || !detail::strictly_inside(cones, y)) {
                res.status = SolveStatus::infeasible;
                res.y = y;
                res.objective = problem.c.dot(y);
                res.newton_steps = config.max_newton_steps - budget;
                fill_slacks(y);
                return res;
            }
        }

        // Phase II: barrier path.
        double t = 1.0;
        auto never = [](const Eigen::VectorXd&) { return false; };
        for (;;) {
            if (!detail::center(cones, problem.c, t, y, budget, never)) {
                res.status = SolveStatus::numerical_limit;
                break;
            }
            if (2.0 * m / t <= config.tolerance || m == 0.0) {
                res.status = SolveStatus::optimal;
                break;
            }
            t *= config.barrier_growth;
        }
    }
    res.y = y;
    res.objective = problem.c.dot(y);
    res.newton_steps = config.max_newton_steps - budget;
    fill_slacks(y);
    return res;
}

} // namespace cvr::drcc
