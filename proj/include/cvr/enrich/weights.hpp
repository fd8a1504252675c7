#pragma once

// Student-to-teacher learning weights from daily load-pattern distances.
//
//   d_s = 1 / (N_c N_c^s) sum_i sum_j || P_i - P_j^s ||
//
// Default weights are inverse distance, 1 / (d_s + delta), normalised: a
// teacher whose days look like the student's gets more say. literal = true
// uses d_s itself, normalised.

#include <cmath>
#include <vector>

#include "cvr/error.hpp"

namespace cvr::enrich {

using Pattern = std::vector<double>;

inline constexpr double kWeightDelta = 1e-6;

inline double mean_pattern_distance(const std::vector<Pattern>& a, const std::vector<Pattern>& b) {
    double total = 0.0;
    for (const auto& p : a) {
        for (const auto& q : b) {
            if (p.size() != q.size()) {
                throw ParameterError("daily patterns must have equal length");
            }
            double s = 0.0;
            for (std::size_t k = 0; k < p.size(); ++k) {
                s += (p[k] - q[k]) * (p[k] - q[k]);
            }
            total += std::sqrt(s);
        }
    }
    return total / static_cast<double>(a.size() * b.size());
}

struct LearningWeights {
    std::vector<double> w;
    std::vector<double> distance;
};

inline LearningWeights compute_learning_weights(const std::vector<Pattern>& student,
                                                const std::vector<std::vector<Pattern>>& teachers,
                                                bool literal = false) {
    if (student.empty() || teachers.empty()) {
        throw ParameterError("learning weights need student patterns and at least one teacher");
    }
    LearningWeights lw;
    for (const auto& t : teachers) {
        if (t.empty()) {
            throw ParameterError("teacher without daily patterns");
        }
        lw.distance.push_back(mean_pattern_distance(student, t));
    }
    double sum = 0.0;
    for (double d : lw.distance) {
        lw.w.push_back(literal ? d : 1.0 / (d + kWeightDelta));
        sum += lw.w.back();
    }
    if (!(sum > 0.0)) {
        // Literal mode with every distance zero: no preference.
        lw.w.assign(lw.w.size(), 1.0 / static_cast<double>(lw.w.size()));
        return lw;
    }
    for (double& v : lw.w) {
        v /= sum;
    }
    return lw;
}

} // namespace cvr::enrich
