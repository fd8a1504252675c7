#pragma once

// One-dimensional Gaussian process regression used for the hourly bound
// models (hourly mean -> hourly max / min). Inputs and targets are
// standardised; an ordinary least-squares line carries the trend and the GP
// (squared-exponential kernel) models the residual. Hyperparameters maximise
// the log marginal likelihood over a fixed grid, so fits are deterministic.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <vector>

#include "cvr/error.hpp"

namespace cvr::enrich {

struct GprHyper {
    double length_scale = 1.0; // standardised input units
    double signal_var = 1.0;   // standardised residual units
    double noise_var = 1e-4;
};

struct GprGrid {
    std::vector<double> length_scales{0.1, 0.25, 0.5, 1.0, 2.0, 5.0};
    std::vector<double> signal_vars{0.1, 1.0, 10.0};
    std::vector<double> noise_vars{1e-6, 1e-4, 1e-2, 1e-1};
};

class GaussianProcess {
public:
    // Fits y ~ x; fixed hyperparameters skip the grid search.
    static GaussianProcess fit(const std::vector<double>& x, const std::vector<double>& y,
                               std::optional<GprHyper> fixed = std::nullopt, const GprGrid& grid = {}) {
        if (x.size() != y.size() || x.empty()) {
            throw ParameterError("gpr: inputs and targets must be non-empty and the same length");
        }
        if (std::set<double>(x.begin(), x.end()).size() < 2) {
            throw DegenerateInputError("gpr: fewer than 2 distinct input values");
        }
        GaussianProcess gp;
        const auto n = static_cast<Eigen::Index>(x.size());
        const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
        const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
        gp.x_mean_ = xv.mean();
        gp.x_scale_ = std::sqrt((xv.array() - gp.x_mean_).square().mean());
        gp.xs_ = (xv.array() - gp.x_mean_) / gp.x_scale_;

        // Trend line in standardised input.
        const double sxx = gp.xs_.squaredNorm();
        gp.slope_ = gp.xs_.dot(yv) / sxx;
        gp.intercept_ = yv.mean();
        Eigen::VectorXd resid = yv.array() - gp.intercept_ - gp.slope_ * gp.xs_.array();
        gp.y_scale_ = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
        if (gp.y_scale_ <= 1e-12 * std::max(1.0, yv.cwiseAbs().maxCoeff())) {
            // Trend explains the data exactly; the GP carries nothing.
            gp.y_scale_ = 0.0;
            gp.hyper_ = fixed.value_or(GprHyper{});
            return gp;
        }
        resid /= gp.y_scale_;

        if (fixed) {
            if (!gp.factor(*fixed, resid)) {
                throw DegenerateInputError("gpr: kernel matrix is not positive definite");
            }
            return gp;
        }
        double best = -std::numeric_limits<double>::infinity();
        GprHyper best_h;
        for (double l : grid.length_scales) {
            for (double s : grid.signal_vars) {
                for (double nv : grid.noise_vars) {
                    const GprHyper h{l, s, nv};
                    if (!gp.factor(h, resid)) {
                        continue;
                    }
                    const double lml = gp.log_marginal_likelihood();
                    if (lml > best) {
                        best = lml;
                        best_h = h;
                    }
                }
            }
        }
        if (!std::isfinite(best) || !gp.factor(best_h, resid)) {
            throw DegenerateInputError("gpr: no grid point gave a positive definite kernel");
        }
        return gp;
    }

    double predict(double x) const {
        const double xs = (x - x_mean_) / x_scale_;
        double out = intercept_ + slope_ * xs;
        if (y_scale_ > 0.0) {
            const Eigen::VectorXd k = kernel_column(xs);
            out += y_scale_ * k.dot(weights_);
        }
        return out;
    }

    const GprHyper& hyper() const { return hyper_; }
    double log_marginal_likelihood() const { return lml_; }

private:
    double kernel(double a, double b) const {
        const double d = (a - b) / hyper_.length_scale;
        return hyper_.signal_var * std::exp(-0.5 * d * d);
    }

    Eigen::VectorXd kernel_column(double xs) const {
        Eigen::VectorXd k(xs_.size());
        for (Eigen::Index i = 0; i < xs_.size(); ++i) {
            k(i) = kernel(xs_(i), xs);
        }
        return k;
    }

    bool factor(const GprHyper& h, const Eigen::VectorXd& resid) {
        hyper_ = h;
        const Eigen::Index n = xs_.size();
        Eigen::MatrixXd k(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                k(i, j) = kernel(xs_(i), xs_(j));
            }
            k(i, i) += h.noise_var;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() != Eigen::Success) {
            return false;
        }
        weights_ = llt.solve(resid);
        const Eigen::MatrixXd l = llt.matrixL();
        lml_ = -0.5 * resid.dot(weights_) - l.diagonal().array().log().sum() -
               0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
        return weights_.allFinite();
    }

    Eigen::VectorXd xs_;
    Eigen::VectorXd weights_;
    double x_mean_ = 0.0, x_scale_ = 1.0;
    double intercept_ = 0.0, slope_ = 0.0, y_scale_ = 0.0;
    GprHyper hyper_;
    double lml_ = 0.0;
};

// Hourly bound inference: P_a -> (P_min, P_max).
struct BoundModel {
    GaussianProcess lower;
    GaussianProcess upper;

    std::pair<double, double> predict(double p_a) const { return {lower.predict(p_a), upper.predict(p_a)}; }
};

inline constexpr std::size_t kMinTrainingHours = 24;

} // namespace cvr::enrich
