#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cvr/error.hpp"

namespace cvr {

inline constexpr int kPhaseCount = 3;

inline char phase_name(int phase) { return static_cast<char>('a' + phase); }

inline int parse_phase(std::string_view s) {
    if (s.size() == 1) {
        const char c = static_cast<char>(s[0] | 0x20);
        if (c >= 'a' && c <= 'c') {
            return c - 'a';
        }
    }
    throw SchemaError("unknown phase '" + std::string(s) + "' (expected a, b or c)");
}

// Subset of {a, b, c} stored as a bit mask.
class PhaseSet {
public:
    constexpr PhaseSet() = default;
    constexpr explicit PhaseSet(std::uint8_t bits) : bits_(bits & 0x7u) {}

    static constexpr PhaseSet all() { return PhaseSet(0x7u); }

    static PhaseSet parse(std::string_view s) {
        PhaseSet out;
        for (char c : s) {
            out.insert(parse_phase(std::string_view(&c, 1)));
        }
        return out;
    }

    constexpr bool contains(int phase) const { return (bits_ >> phase) & 1u; }
    constexpr void insert(int phase) { bits_ |= static_cast<std::uint8_t>(1u << phase); }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr std::uint8_t bits() const { return bits_; }

    constexpr int size() const {
        return static_cast<int>(contains(0)) + static_cast<int>(contains(1)) +
               static_cast<int>(contains(2));
    }

    constexpr bool is_subset_of(PhaseSet other) const { return (bits_ & ~other.bits_) == 0; }

    std::vector<int> list() const {
        std::vector<int> out;
        for (int p = 0; p < kPhaseCount; ++p) {
            if (contains(p)) {
                out.push_back(p);
            }
        }
        return out;
    }

    std::string str() const {
        std::string out;
        for (int p : list()) {
            out.push_back(phase_name(p));
        }
        return out;
    }

    constexpr bool operator==(const PhaseSet&) const = default;

private:
    std::uint8_t bits_ = 0;
};

} // namespace cvr
