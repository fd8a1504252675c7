#pragma once

// Second-order Markov chain over B relative bins of the within-hour range.
// T(b1, b2, b3) = Pr(next = b3 | previous two = b1, b2).

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "cvr/enrich/series.hpp"
#include "cvr/error.hpp"

namespace cvr::enrich {

inline constexpr double kTransitionSmoothing = 1e-3;

struct TransitionModel {
    int bins = 0;
    std::vector<double> t; // bins^3, row-major

    double operator()(int b1, int b2, int b3) const {
        return t[(static_cast<std::size_t>(b1) * static_cast<std::size_t>(bins) + static_cast<std::size_t>(b2)) *
                     static_cast<std::size_t>(bins) +
                 static_cast<std::size_t>(b3)];
    }

    std::span<const double> row(int b1, int b2) const {
        const auto b = static_cast<std::size_t>(bins);
        return std::span<const double>(t).subspan((static_cast<std::size_t>(b1) * b + static_cast<std::size_t>(b2)) * b, b);
    }
    std::span<double> row(int b1, int b2) {
        const auto b = static_cast<std::size_t>(bins);
        return std::span<double>(t).subspan((static_cast<std::size_t>(b1) * b + static_cast<std::size_t>(b2)) * b, b);
    }

    void normalize_rows() {
        for (int i = 0; i < bins; ++i) {
            for (int j = 0; j < bins; ++j) {
                auto r = row(i, j);
                double s = 0.0;
                for (double v : r) {
                    s += v;
                }
                for (double& v : r) {
                    v /= s;
                }
            }
        }
    }
};

inline int bin_of(double x, double lo, double hi, int bins) {
    if (!(hi > lo)) {
        return 0;
    }
    const int b = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
    return std::clamp(b, 0, bins - 1);
}

// Counts over sequences of already discretised states; every sequence is a
// separate run (no transitions across run boundaries).
inline TransitionModel fit_transition_states(const std::vector<std::vector<int>>& runs, int bins,
                                             double smoothing = kTransitionSmoothing) {
    if (bins < 2) {
        throw ParameterError("transition model needs at least 2 bins");
    }
    TransitionModel m;
    m.bins = bins;
    const auto b = static_cast<std::size_t>(bins);
    m.t.assign(b * b * b, smoothing);
    for (const auto& run : runs) {
        for (std::size_t i = 2; i < run.size(); ++i) {
            if (run[i] < 0 || run[i] >= bins || run[i - 1] < 0 || run[i - 1] >= bins || run[i - 2] < 0 ||
                run[i - 2] >= bins) {
                throw ParameterError("state outside the bin range");
            }
            m.t[(static_cast<std::size_t>(run[i - 2]) * b + static_cast<std::size_t>(run[i - 1])) * b +
                static_cast<std::size_t>(run[i])] += 1.0;
        }
    }
    m.normalize_rows();
    return m;
}

// Each hour is binned relative to its own [min, max]; flat hours carry no
// shape information and are skipped.
inline TransitionModel fit_transition_model(const HighResSeries& teacher, int bins) {
    if (bins < 2) {
        throw ParameterError("transition model needs at least 2 bins");
    }
    if (teacher.samples_per_hour < 3) {
        throw DataError("series '" + teacher.id + "': transition fit needs at least 3 samples per hour");
    }
    std::vector<std::vector<int>> runs;
    for (std::size_t h = 0; h < teacher.hours(); ++h) {
        const auto xs = teacher.hour(h);
        const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
        const double lo = *lo_it, hi = *hi_it;
        if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(hi)))) {
            continue;
        }
        std::vector<int> run;
        run.reserve(xs.size());
        for (double x : xs) {
            run.push_back(bin_of(x, lo, hi, bins));
        }
        runs.push_back(std::move(run));
    }
    return fit_transition_states(runs, bins);
}

// Draws n states: two uniform seeds, then categorical draws from the rows.
template <class Rng>
std::vector<int> sample_chain(const TransitionModel& m, std::size_t n, Rng& rng) {
    std::vector<int> s;
    s.reserve(n);
    std::uniform_int_distribution<int> seed(0, m.bins - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < 2) {
            s.push_back(seed(rng));
            continue;
        }
        const auto r = m.row(s[i - 2], s[i - 1]);
        const double draw = u(rng);
        double acc = 0.0;
        int next = m.bins - 1;
        for (int b = 0; b < m.bins; ++b) {
            acc += r[static_cast<std::size_t>(b)];
            if (draw < acc) {
                next = b;
                break;
            }
        }
        s.push_back(next);
    }
    return s;
}

} // namespace cvr::enrich
