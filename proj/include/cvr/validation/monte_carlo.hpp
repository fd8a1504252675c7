#pragma once

// Monte-Carlo estimate of per-row violation probabilities for a fixed dispatch.
// Samples are drawn per hour in fixed-size blocks, each with its own seed, so
// results do not depend on the thread count.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cvr/drcc/dispatch.hpp"
#include "cvr/enrich/enrich.hpp"

namespace cvr::validation {

enum class Family { gaussian, truncated_gaussian, two_point };

inline const char* family_name(Family f) {
    switch (f) {
    case Family::gaussian:
        return "gaussian";
    case Family::truncated_gaussian:
        return "truncated-gaussian";
    case Family::two_point:
        return "two-point";
    }
    return "?";
}

inline Family parse_family(const std::string& s) {
    if (s == "gaussian") {
        return Family::gaussian;
    }
    if (s == "truncated-gaussian" || s == "truncated") {
        return Family::truncated_gaussian;
    }
    if (s == "two-point") {
        return Family::two_point;
    }
    throw ParameterError("unknown distribution family '" + s + "'");
}

struct McOptions {
    Family family = Family::truncated_gaussian;
    std::size_t samples = 10000;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    std::size_t block = 2000;
    double box_lo = 0.0; // truncation box for the truncated family
    double box_hi = 1.0;
    // Two-point family: kappa of the risk level the extremal law is built for
    // (0 = use each row's own margin, i.e. the tightest law the row admits).
    double two_point_kappa = 0.0;
};

struct RowStat {
    int node = 0;
    int hour = 0;
    drcc::Side side = drcc::Side::upper;
    std::string bus;
    int phase = 0;
    std::size_t violations = 0;
    std::size_t samples = 0;
    double rate = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double mean_value = 0.0; // a^T mu + b
    double std_value = 0.0;  // ||Sigma^1/2 a||
};

struct ViolationReport {
    Family family = Family::gaussian;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    std::vector<RowStat> rows;
    double max_rate = 0.0;
    std::ptrdiff_t worst = -1;
    double realized_mean_gap = 0.0; // max |sample mean - mu| over entries
    double realized_std_ratio_min = 1.0;
    double realized_std_ratio_max = 1.0;
    std::vector<std::string> warnings;
};

// Wilson score interval at 95 %.
inline std::pair<double, double> wilson95(std::size_t k, std::size_t n) {
    if (n == 0) {
        return {0.0, 1.0};
    }
    const double z = 1.959963984540054;
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double denom = 1.0 + z * z / nn;
    const double centre = (p + z * z / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

namespace detail {

struct HourRows {
    Eigen::MatrixXd a; // rows x block, at the fixed alpha
    Eigen::VectorXd b;
    std::vector<std::size_t> report_index;
    std::vector<Eigen::Index> row_of; // layout row behind each report entry
};

// Cantelli-extremal two-point samples for one row: the standardised row value
// takes z_hi with probability 1 / (1 + z_hi^2) and -1 / z_hi otherwise; the
// component orthogonal to the row direction is Gaussian so the covariance is
// exactly Sigma. The mixing variable is stratified so the number of z_hi draws
// is within one of n p.
inline std::size_t two_point_row(const Eigen::VectorXd& a, double b, const Eigen::VectorXd& mu,
                                 const Eigen::MatrixXd& s_half, double kappa, std::size_t n, std::mt19937_64& rng) {
    const Eigen::VectorXd sa = s_half * a;
    const double sigma = sa.norm();
    if (sigma <= 0.0) {
        return (a.dot(mu) + b > 0.0) ? n : 0;
    }
    const Eigen::VectorXd u = sa / sigma;
    const double m = a.dot(mu) + b;
    double z_hi = kappa > 0.0 ? kappa : -m / sigma;
    z_hi = std::max(z_hi, 1e-12) * (1.0 + 1e-7);
    const double z_lo = -1.0 / z_hi;
    const double p = 1.0 / (1.0 + z_hi * z_hi);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double offset = unif(rng);
    std::size_t count = 0;
    Eigen::VectorXd eta(a.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double strat = (static_cast<double>(i) + offset) / static_cast<double>(n);
        const double z = strat < p ? z_hi : z_lo;
        for (Eigen::Index k = 0; k < eta.size(); ++k) {
            eta(k) = normal(rng);
        }
        eta -= u * u.dot(eta);
        const Eigen::VectorXd xi = mu + s_half * (z * u + eta);
        if (a.dot(xi) + b > 0.0) {
            ++count;
        }
    }
    return count;
}

} // namespace detail

inline ViolationReport monte_carlo_violation(const drcc::DispatchProblem& dp, const Eigen::MatrixXd& alpha,
                                             const McOptions& opt) {
    if (opt.samples < 1000) {
        throw ParameterError("monte carlo needs at least 1000 samples");
    }
    ViolationReport rep;
    rep.family = opt.family;
    rep.samples = opt.samples;
    rep.seed = opt.seed;

    const std::size_t horizon = dp.hours.size();
    std::vector<detail::HourRows> hr(horizon);
    std::vector<Eigen::MatrixXd> s_half(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
        const drcc::HourProblem& hp = dp.hours[t];
        const Eigen::VectorXd a_t = alpha.col(static_cast<Eigen::Index>(t));
        const auto nr = static_cast<Eigen::Index>(hp.rows.size());
        hr[t].a.resize(nr, hp.mu.size());
        hr[t].b.resize(nr);
        s_half[t] = drcc::psd_sqrt(hp.sigma);
        for (Eigen::Index r = 0; r < nr; ++r) {
            const drcc::ChanceRow& row = hp.rows[static_cast<std::size_t>(r)];
            hr[t].a.row(r) = row.a(a_t).transpose();
            hr[t].b(r) = row.b;
        }
        // Two-point: only the row closest to its limit in standardised units.
        std::vector<Eigen::Index> selected;
        if (opt.family == Family::two_point) {
            Eigen::Index best = -1;
            double best_tau = std::numeric_limits<double>::infinity();
            for (Eigen::Index r = 0; r < nr; ++r) {
                const double sd = (s_half[t] * hr[t].a.row(r).transpose()).norm();
                if (sd <= 0.0) {
                    continue;
                }
                const double tau = -(hr[t].a.row(r).dot(hp.mu) + hr[t].b(r)) / sd;
                if (tau < best_tau) {
                    best_tau = tau;
                    best = r;
                }
            }
            if (best >= 0) {
                selected.push_back(best);
            }
        } else {
            for (Eigen::Index r = 0; r < nr; ++r) {
                selected.push_back(r);
            }
        }
        for (Eigen::Index r : selected) {
            const drcc::ChanceRow& row = hp.rows[static_cast<std::size_t>(r)];
            RowStat st;
            st.node = row.node;
            st.hour = row.hour;
            st.side = row.side;
            st.bus = dp.node_bus[static_cast<std::size_t>(row.node)];
            st.phase = dp.node_phase[static_cast<std::size_t>(row.node)];
            st.samples = opt.samples;
            st.mean_value = hr[t].a.row(r).dot(hp.mu) + hr[t].b(r);
            st.std_value = (s_half[t] * hr[t].a.row(r).transpose()).norm();
            hr[t].report_index.push_back(rep.rows.size());
            hr[t].row_of.push_back(r);
            rep.rows.push_back(st);
        }
        if (opt.family == Family::truncated_gaussian) {
            for (Eigen::Index i = 0; i < hp.mu.size(); ++i) {
                if (hp.mu(i) < opt.box_lo || hp.mu(i) > opt.box_hi) {
                    rep.warnings.push_back("hour " + std::to_string(t) + ": mean of entry " + std::to_string(i) +
                                           " lies outside the truncation box; entry left untruncated");
                }
            }
        }
    }

    // Work items: (hour, block) for sampling families, (report row) for two-point.
    struct Item {
        std::size_t hour;
        std::size_t block;
        std::size_t count;
    };
    std::vector<Item> items;
    if (opt.family == Family::two_point) {
        for (std::size_t t = 0; t < horizon; ++t) {
            for (std::size_t k = 0; k < hr[t].report_index.size(); ++k) {
                items.push_back({t, k, opt.samples});
            }
        }
    } else {
        for (std::size_t t = 0; t < horizon; ++t) {
            for (std::size_t start = 0, b = 0; start < opt.samples; start += opt.block, ++b) {
                items.push_back({t, b, std::min(opt.block, opt.samples - start)});
            }
        }
    }
    std::vector<std::vector<std::size_t>> counts(items.size());
    std::vector<Eigen::VectorXd> sums(items.size()), sqs(items.size());
    std::vector<std::size_t> rejected_out(items.size(), 0);

    auto run_item = [&](std::size_t idx) {
        const Item& it = items[idx];
        const drcc::HourProblem& hp = dp.hours[it.hour];
        auto rng = enrich::task_rng(opt.seed, std::string("mc-") + family_name(opt.family), it.hour, it.block);
        if (opt.family == Family::two_point) {
            const Eigen::Index row = hr[it.hour].row_of[it.block];
            counts[idx] = {detail::two_point_row(hr[it.hour].a.row(row).transpose(), hr[it.hour].b(row), hp.mu,
                                                 s_half[it.hour], opt.two_point_kappa, it.count, rng)};
            return;
        }
        const Eigen::Index d = hp.mu.size();
        const bool diag = s_half[it.hour].isDiagonal(0.0);
        const Eigen::VectorXd sd = s_half[it.hour].diagonal();
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<std::size_t> c(hr[it.hour].report_index.size(), 0);
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(d), sq = Eigen::VectorXd::Zero(d);
        Eigen::VectorXd z(d), xi(d);
        for (std::size_t s = 0; s < it.count; ++s) {
            if (opt.family == Family::truncated_gaussian && diag) {
                for (Eigen::Index i = 0; i < d; ++i) {
                    const double m = hp.mu(i);
                    if (sd(i) <= 0.0 || m < opt.box_lo || m > opt.box_hi) {
                        xi(i) = m + sd(i) * normal(rng);
                        continue;
                    }
                    double x;
                    do {
                        x = m + sd(i) * normal(rng);
                    } while (x < opt.box_lo || x > opt.box_hi);
                    xi(i) = x;
                }
            } else {
                for (Eigen::Index i = 0; i < d; ++i) {
                    z(i) = normal(rng);
                }
                xi = hp.mu + (diag ? Eigen::VectorXd(sd.cwiseProduct(z)) : Eigen::VectorXd(s_half[it.hour] * z));
                if (opt.family == Family::truncated_gaussian) {
                    for (Eigen::Index i = 0; i < d; ++i) {
                        if (hp.mu(i) >= opt.box_lo && hp.mu(i) <= opt.box_hi) {
                            if (xi(i) < opt.box_lo || xi(i) > opt.box_hi) {
                                ++rejected_out[idx];
                            }
                            xi(i) = std::clamp(xi(i), opt.box_lo, opt.box_hi);
                        }
                    }
                }
            }
            sum += xi;
            sq += xi.cwiseProduct(xi);
            const Eigen::VectorXd val = hr[it.hour].a * xi + hr[it.hour].b;
            for (Eigen::Index r = 0; r < val.size(); ++r) {
                if (val(r) > 0.0) {
                    ++c[static_cast<std::size_t>(r)];
                }
            }
        }
        counts[idx] = std::move(c);
        sums[idx] = std::move(sum);
        sqs[idx] = std::move(sq);
    };

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
            run_item(i);
        }
    };
    unsigned threads = opt.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opt.threads;
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < std::min<unsigned>(threads, static_cast<unsigned>(items.size())); ++i) {
        pool.emplace_back(work);
    }
    work();
    for (auto& t : pool) {
        t.join();
    }

    // Deterministic reduction in item order.
    std::vector<Eigen::VectorXd> hour_sum(horizon), hour_sq(horizon);
    std::size_t clamped = 0;
    for (std::size_t idx = 0; idx < items.size(); ++idx) {
        const Item& it = items[idx];
        clamped += rejected_out[idx];
        if (opt.family == Family::two_point) {
            rep.rows[hr[it.hour].report_index[it.block]].violations += counts[idx][0];
            continue;
        }
        for (std::size_t r = 0; r < counts[idx].size(); ++r) {
            rep.rows[hr[it.hour].report_index[r]].violations += counts[idx][r];
        }
        if (hour_sum[it.hour].size() == 0) {
            hour_sum[it.hour] = sums[idx];
            hour_sq[it.hour] = sqs[idx];
        } else {
            hour_sum[it.hour] += sums[idx];
            hour_sq[it.hour] += sqs[idx];
        }
    }
    if (clamped > 0) {
        rep.warnings.push_back(std::to_string(clamped) +
                               " correlated sample entries were clamped to the truncation box");
    }
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        RowStat& st = rep.rows[i];
        st.rate = static_cast<double>(st.violations) / static_cast<double>(st.samples);
        std::tie(st.ci_lo, st.ci_hi) = wilson95(st.violations, st.samples);
        if (rep.worst < 0 || st.rate > rep.max_rate) {
            rep.max_rate = st.rate;
            rep.worst = static_cast<std::ptrdiff_t>(i);
        }
    }
    if (opt.family != Family::two_point) {
        const double n = static_cast<double>(opt.samples);
        for (std::size_t t = 0; t < horizon; ++t) {
            const Eigen::VectorXd mean = hour_sum[t] / n;
            const Eigen::VectorXd var = (hour_sq[t] / n - mean.cwiseProduct(mean)).cwiseMax(0.0);
            const Eigen::VectorXd target = dp.hours[t].sigma.diagonal();
            rep.realized_mean_gap = std::max(rep.realized_mean_gap, (mean - dp.hours[t].mu).cwiseAbs().maxCoeff());
            for (Eigen::Index i = 0; i < var.size(); ++i) {
                if (target(i) > 0.0) {
                    const double ratio = std::sqrt(var(i) / target(i));
                    rep.realized_std_ratio_min = std::min(rep.realized_std_ratio_min, ratio);
                    rep.realized_std_ratio_max = std::max(rep.realized_std_ratio_max, ratio);
                }
            }
        }
    }
    return rep;
}

inline nlohmann::json violations_to_json(const ViolationReport& rep) {
    nlohmann::json rows = nlohmann::json::array();
    for (const RowStat& st : rep.rows) {
        rows.push_back({{"bus", st.bus},
                        {"phase", std::string(1, phase_name(st.phase))},
                        {"hour", st.hour},
                        {"side", drcc::side_name(st.side)},
                        {"rate", st.rate},
                        {"ci95", {st.ci_lo, st.ci_hi}}});
    }
    return rows;
}

} // namespace cvr::validation
