#pragma once

// Voltage-dependent ZIP loads and PV inverter reactive capability.
//
// Voltages are squared magnitudes in per-unit^2 throughout; the ZIP model is
//   p = m * (k1 * v + k2 * sqrt(v) + k3)
// and its affine surrogate around v = 1 replaces sqrt(v) by (v + 1) / 2.

#include <algorithm>
#include <cmath>

#include "cvr/error.hpp"
#include "cvr/phase.hpp"

namespace cvr {

struct ZipTriple {
    double k1 = 0.0; // constant impedance
    double k2 = 0.0; // constant current
    double k3 = 1.0; // constant power

    double sum() const { return k1 + k2 + k3; }

    // Coefficients of the affine surrogate m * (slope * v + offset).
    double slope() const { return k1 + 0.5 * k2; }
    double offset() const { return k3 + 0.5 * k2; }

    bool operator==(const ZipTriple&) const = default;
};

struct ZipCoefficients {
    ZipTriple kp{0.96, -1.17, 1.21};
    ZipTriple kq{6.28, -10.16, 4.88};
    // When set, each triple must sum to 1 within zip_normalization_tolerance.
    bool normalized = true;

    bool operator==(const ZipCoefficients&) const = default;
};

inline constexpr double zip_normalization_tolerance = 0.05;

inline bool zip_is_normalized(const ZipCoefficients& c) {
    return std::abs(c.kp.sum() - 1.0) <= zip_normalization_tolerance &&
           std::abs(c.kq.sum() - 1.0) <= zip_normalization_tolerance;
}

inline double zip_power_exact(double v, double multiplier, const ZipTriple& c) {
    if (!(v > 0.0)) {
        throw DomainError("zip_power_exact: squared voltage must be positive");
    }
    return multiplier * (c.k1 * v + c.k2 * std::sqrt(v) + c.k3);
}

inline double zip_power_linearized(double v, double multiplier, const ZipTriple& c) {
    return multiplier * (c.slope() * v + c.offset());
}

// Worst-case gap between the exact and affine ZIP models for a magnitude
// deviation |V - 1| <= delta_v. The gap equals m*|k2|*(V-1)^2/2 exactly.
inline double zip_linearization_bound(double multiplier, const ZipTriple& c, double delta_v) {
    return std::abs(multiplier) * std::abs(c.k2) * delta_v * delta_v / 2.0;
}

struct PvInverter {
    double s_cap = 0.0; // per-unit apparent power rating, per phase
    PhaseSet phases; // empty means every phase of the host bus
};

inline double pv_reactive_capability(double s_cap, double p_g) {
    if (s_cap < 0.0 || p_g < 0.0) {
        throw DomainError("pv_reactive_capability: s_cap and p_g must be nonnegative");
    }
    if (p_g > s_cap) {
        throw InfeasibleOperatingPointError(
            "pv_reactive_capability: active output exceeds the inverter rating");
    }
    return std::sqrt((s_cap - p_g) * (s_cap + p_g));
}

// Same as pv_reactive_capability but saturates at zero when p_g > s_cap.
// Used when deriving capability samples from noisy measurements.
inline double pv_reactive_capability_clamped(double s_cap, double p_g) {
    const double p = std::min(std::max(p_g, 0.0), s_cap);
    return std::sqrt((s_cap - p) * (s_cap + p));
}

inline double pv_reactive_output(double alpha_q, double q_cap) {
    if (!(alpha_q >= -1.0 && alpha_q <= 1.0)) {
        throw DomainError("pv_reactive_output: dispatch ratio must lie in [-1, 1]");
    }
    return alpha_q * q_cap;
}

} // namespace cvr
