#pragma once

// Synthetic feeders and measurement data for tests, demos and the shipped
// fixtures. Profiles are clustered (residential / commercial / industrial
// load shapes with different within-hour volatility, plus PV) so that
// teacher choice matters for enrichment.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cvr/enrich/enrich.hpp"
#include "cvr/feeder.hpp"

namespace cvr::synthetic {

// Symmetric phase-coupled line of the given length scale.
inline Line coupled_line(const std::string& from, const std::string& to, double scale, PhaseSet phases = PhaseSet::all()) {
    Eigen::Matrix3d r, x;
    r << 0.3465, 0.1560, 0.1580, 0.1560, 0.3375, 0.1535, 0.1580, 0.1535, 0.3414;
    x << 1.0179, 0.5017, 0.4236, 0.5017, 1.0478, 0.3849, 0.4236, 0.3849, 1.0348;
    Line l;
    l.from_id = from;
    l.to_id = to;
    l.r = r * scale;
    l.x = x * scale;
    for (int p = 0; p < 3; ++p) {
        if (!phases.contains(p)) {
            l.r.row(p).setZero();
            l.r.col(p).setZero();
            l.x.row(p).setZero();
            l.x.col(p).setZero();
        }
    }
    return l;
}

inline Bus make_bus(const std::string& id, const std::string& phases) {
    Bus b;
    b.id = id;
    b.phases = PhaseSet::parse(phases);
    return b;
}

// Three buses, three phases, PV at the far end.
inline Feeder smoke_feeder() {
    Feeder f;
    f.root_id = "0";
    f.v0.fill(1.03 * 1.03);
    f.buses = {make_bus("0", "abc"), make_bus("1", "abc"), make_bus("2", "abc")};
    f.buses[2].pv = PvInverter{30.0 / f.base_power_kva, {}};
    f.lines = {coupled_line("0", "1", 0.02), coupled_line("1", "2", 0.02)};
    f.meters = {{"L1a", "1", 0, MeterKind::load}, {"L1b", "1", 1, MeterKind::load}, {"L1c", "1", 2, MeterKind::load},
                {"L2a", "2", 0, MeterKind::load}, {"L2b", "2", 1, MeterKind::load}, {"L2c", "2", 2, MeterKind::load},
                {"PV2a", "2", 0, MeterKind::pv},  {"PV2b", "2", 1, MeterKind::pv},  {"PV2c", "2", 2, MeterKind::pv}};
    return f;
}

// Single-phase four-bus path with PV at buses 2 and 3 (two decisions).
inline Feeder two_pv_feeder() {
    Feeder f;
    f.root_id = "0";
    f.v0.fill(1.03 * 1.03);
    for (int i = 0; i < 4; ++i) {
        f.buses.push_back(make_bus(std::to_string(i), "a"));
    }
    f.buses[2].pv = PvInverter{40.0 / f.base_power_kva, {}};
    f.buses[3].pv = PvInverter{40.0 / f.base_power_kva, {}};
    for (int i = 0; i < 3; ++i) {
        Line l;
        l.from_id = std::to_string(i);
        l.to_id = std::to_string(i + 1);
        l.r(0, 0) = 0.02;
        l.x(0, 0) = 0.04;
        f.lines.push_back(l);
    }
    f.meters = {{"L1", "1", 0, MeterKind::load},  {"L2", "2", 0, MeterKind::load}, {"L3", "3", 0, MeterKind::load},
                {"PV2", "2", 0, MeterKind::pv}, {"PV3", "3", 0, MeterKind::pv}};
    return f;
}

// Thirteen buses (28 bus phases) with laterals of one and two phases and PV
// on buses 5 (abc), 9 (a) and 12 (b). 36 load and 6 PV transformers.
inline Feeder feeder13() {
    Feeder f;
    f.root_id = "0";
    f.v0.fill(1.03 * 1.03);
    const std::vector<std::pair<std::string, std::string>> buses = {
        {"0", "abc"}, {"1", "abc"}, {"2", "abc"}, {"3", "abc"}, {"4", "abc"}, {"5", "abc"}, {"6", "bc"},
        {"7", "c"},   {"8", "abc"}, {"9", "a"},   {"10", "abc"}, {"11", "ab"}, {"12", "b"}};
    for (const auto& [id, ph] : buses) {
        f.buses.push_back(make_bus(id, ph));
    }
    f.buses[5].pv = PvInverter{40.0 / f.base_power_kva, {}};
    f.buses[9].pv = PvInverter{35.0 / f.base_power_kva, {}};
    f.buses[12].pv = PvInverter{35.0 / f.base_power_kva, {}};
    const double s = 0.013;
    f.lines = {coupled_line("0", "1", 2 * s),
               coupled_line("1", "2", s),
               coupled_line("2", "3", s),
               coupled_line("3", "4", s),
               coupled_line("4", "5", s),
               coupled_line("2", "6", s, PhaseSet::parse("bc")),
               coupled_line("6", "7", s, PhaseSet::parse("c")),
               coupled_line("4", "8", s),
               coupled_line("8", "9", s, PhaseSet::parse("a")),
               coupled_line("5", "10", s),
               coupled_line("10", "11", s, PhaseSet::parse("ab")),
               coupled_line("11", "12", s, PhaseSet::parse("b"))};

    // One load transformer per bus phase, extras on the trunk.
    std::vector<std::pair<std::string, int>> nodes;
    for (std::size_t b = 1; b < f.buses.size(); ++b) {
        for (int p : f.buses[b].phases.list()) {
            nodes.push_back({f.buses[b].id, p});
        }
    }
    for (int i = 0; i < 36; ++i) {
        const auto& [bus, phase] = nodes[static_cast<std::size_t>(i) % nodes.size()];
        char id[16];
        std::snprintf(id, sizeof id, "T%02d", i + 1);
        f.meters.push_back({id, bus, phase, MeterKind::load});
    }
    const std::vector<std::pair<std::string, int>> pv = {{"5", 0}, {"5", 1}, {"5", 2}, {"9", 0}, {"12", 1}, {"5", 0}};
    for (std::size_t i = 0; i < pv.size(); ++i) {
        f.meters.push_back({"PV" + std::to_string(i + 1), pv[i].first, pv[i].second, MeterKind::pv});
    }
    return f;
}

struct SynthOptions {
    int days = 3;
    std::size_t samples_per_hour = 3600;
    std::uint64_t seed = 7;
    std::int64_t start = 0;     // seconds, at midnight
    double load_scale = 1.0;    // multiplies every load profile
};

// Per-meter profile parameters.
struct Profile {
    MeterKind kind = MeterKind::load;
    int cluster = 0;     // 0 residential, 1 commercial, 2 industrial, 3 PV
    double peak = 0.1;   // per-unit
    double pf_ratio = 0.4; // q / p
    double volatility = 0.05;
    double rho = 0.9;    // within-hour AR(1) coefficient
};

inline double cluster_shape(int cluster, double hour) {
    const double pi = std::numbers::pi;
    switch (cluster) {
    case 0: // residential: morning and evening peaks
        return 0.35 + 0.3 * std::exp(-std::pow((hour - 7.5) / 1.8, 2)) + 0.65 * std::exp(-std::pow((hour - 19.0) / 2.5, 2));
    case 1: // commercial: daytime plateau
        return 0.3 + 0.7 * std::pow(std::max(0.0, std::sin(pi * (hour - 6.0) / 14.0)), 0.7);
    case 2: // industrial: flat with a mild shift pattern
        return 0.75 + 0.2 * std::sin(2.0 * pi * (hour - 3.0) / 24.0);
    default: // PV clear sky
        return hour <= 6.0 || hour >= 19.0 ? 0.0 : std::pow(std::sin(pi * (hour - 6.0) / 13.0), 1.5);
    }
}

inline std::map<std::string, Profile> default_profiles(const Feeder& feeder, std::uint64_t seed) {
    std::map<std::string, Profile> out;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int load_index = 0;
    const double volatility[3] = {0.12, 0.06, 0.03};
    for (const auto& m : feeder.meters) {
        Profile p;
        p.kind = m.kind;
        if (m.kind == MeterKind::pv) {
            p.cluster = 3;
            const Bus& bus = feeder.buses[*feeder.find_bus(m.bus)];
            int sharing = 0;
            for (const auto& o : feeder.meters) {
                sharing += (o.kind == MeterKind::pv && o.bus == m.bus && o.phase == m.phase) ? 1 : 0;
            }
            p.peak = bus.pv->s_cap * (0.7 + 0.15 * u(rng)) / sharing;
            p.pf_ratio = 0.0;
            p.volatility = 0.08;
            p.rho = 0.9;
        } else {
            p.cluster = load_index % 3;
            ++load_index;
            p.peak = 0.08 + 0.08 * u(rng);
            p.pf_ratio = 0.3 + 0.15 * u(rng);
            p.volatility = volatility[p.cluster] * (0.8 + 0.4 * u(rng));
            p.rho = 0.9;
        }
        out[m.id] = p;
    }
    return out;
}

// Teacher (micro-PMU) priority: the first four cover all clusters.
inline std::vector<std::string> teacher_priority(const Feeder& feeder) {
    const auto profiles = default_profiles(feeder, 0);
    std::vector<std::string> loads[3], pv;
    for (const auto& m : feeder.meters) {
        if (m.kind == MeterKind::pv) {
            pv.push_back(m.id);
        } else {
            loads[profiles.at(m.id).cluster].push_back(m.id);
        }
    }
    std::vector<std::string> out;
    for (std::size_t round = 0; out.size() < feeder.meters.size(); ++round) {
        bool any = false;
        for (auto& c : loads) {
            if (round < c.size()) {
                out.push_back(c[round]);
                any = true;
            }
        }
        if (round < pv.size()) {
            out.push_back(pv[round]);
            any = true;
        }
        if (!any) {
            break;
        }
    }
    return out;
}

inline enrich::HighResMeter generate_meter(const std::string& id, const Profile& prof, const SynthOptions& opt) {
    auto rng = enrich::task_rng(opt.seed, id, 0, 99);
    std::normal_distribution<double> normal(0.0, 1.0);
    enrich::HighResMeter m;
    m.p.id = m.q.id = id;
    m.p.start = m.q.start = opt.start;
    m.p.samples_per_hour = m.q.samples_per_hour = opt.samples_per_hour;
    const std::size_t n = opt.samples_per_hour;
    const double innov = std::sqrt(1.0 - prof.rho * prof.rho);
    double xp = 0.0, xq = 0.0;
    const double scale = prof.kind == MeterKind::pv ? 1.0 : opt.load_scale;
    for (int d = 0; d < opt.days; ++d) {
        const double day = 1.0 + 0.06 * normal(rng);
        for (int h = 0; h < 24; ++h) {
            double hour_factor = day * (1.0 + 0.03 * normal(rng));
            if (prof.kind == MeterKind::pv) {
                hour_factor = std::clamp(0.9 + 0.08 * normal(rng), 0.5, 1.0);
            }
            for (std::size_t s = 0; s < n; ++s) {
                const double t = h + (static_cast<double>(s) + 0.5) / static_cast<double>(n);
                const double base = prof.peak * scale * hour_factor * cluster_shape(prof.cluster, t);
                xp = prof.rho * xp + innov * normal(rng);
                xq = prof.rho * xq + innov * normal(rng);
                double p = base * (1.0 + prof.volatility * xp);
                double q = base * prof.pf_ratio * (1.0 + prof.volatility * xq);
                if (prof.kind == MeterKind::pv) {
                    p = std::clamp(p, 0.0, prof.peak / 0.7);
                    q = 0.0;
                } else {
                    p = std::max(p, 0.0);
                    q = std::max(q, 0.0);
                }
                m.p.values.push_back(p);
                m.q.values.push_back(q);
            }
        }
    }
    return m;
}

struct Dataset {
    Feeder feeder;
    std::map<std::string, enrich::HighResMeter> truth;
    std::vector<std::string> teacher_order;

    std::map<std::string, enrich::HighResMeter> teachers(std::size_t count) const {
        std::map<std::string, enrich::HighResMeter> out;
        for (std::size_t i = 0; i < std::min(count, teacher_order.size()); ++i) {
            out.emplace(teacher_order[i], truth.at(teacher_order[i]));
        }
        return out;
    }

    // Hourly means of every transformer (what the smart meters report).
    std::map<std::string, enrich::HourlyMeter> hourly() const {
        std::map<std::string, enrich::HourlyMeter> out;
        for (const auto& [id, m] : truth) {
            out[id] = {m.p.hourly_means(), m.q.hourly_means()};
        }
        return out;
    }
};

inline Dataset generate(const Feeder& feeder, const SynthOptions& opt = {}) {
    Dataset ds;
    ds.feeder = feeder;
    const auto profiles = default_profiles(feeder, opt.seed);
    for (const auto& m : feeder.meters) {
        ds.truth.emplace(m.id, generate_meter(m.id, profiles.at(m.id), opt));
    }
    const auto order = teacher_priority(feeder);
    ds.teacher_order.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(8, order.size())));
    return ds;
}

} // namespace cvr::synthetic
