#pragma once

#include <compare>
#include <string>
#include <string_view>

#include "cvr/error.hpp"

namespace cvr {

// Blocks of the stacked uncertainty vector, in stacking order.
enum class Quantity { p_load = 0, q_load = 1, p_pv = 2, q_cap = 3 };

inline std::string_view quantity_name(Quantity q) {
    switch (q) {
    case Quantity::p_load:
        return "p_L";
    case Quantity::q_load:
        return "q_L";
    case Quantity::p_pv:
        return "p_g";
    case Quantity::q_cap:
        return "Q_cap";
    }
    return "?";
}

inline Quantity parse_quantity(std::string_view s) {
    if (s == "p_L") {
        return Quantity::p_load;
    }
    if (s == "q_L") {
        return Quantity::q_load;
    }
    if (s == "p_g") {
        return Quantity::p_pv;
    }
    if (s == "Q_cap") {
        return Quantity::q_cap;
    }
    throw SchemaError("unknown quantity '" + std::string(s) + "' (expected p_L, q_L, p_g or Q_cap)");
}

struct EntryKey {
    Quantity quantity = Quantity::p_load;
    std::string bus;
    int phase = 0;
    int hour = 0;

    auto operator<=>(const EntryKey&) const = default;
};

} // namespace cvr
