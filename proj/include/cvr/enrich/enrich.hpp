#pragma once

// Teacher/student enrichment of smart-meter transformers and assembly of the
// moment ambiguity set.
//
//   teachers (1 s data) -> bound models (GPR) + transition tensors
//   student  (hourly)   -> weights over teachers -> blended models
//                       -> synthetic within-hour samples, mean-matched to P_a
//   all series          -> per node / hour-of-day samples -> (mu, Sigma)

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cvr/enrich/gpr.hpp"
#include "cvr/enrich/markov.hpp"
#include "cvr/enrich/moments.hpp"
#include "cvr/enrich/series.hpp"
#include "cvr/enrich/weights.hpp"
#include "cvr/feeder.hpp"

namespace cvr::enrich {

inline BoundModel fit_bound_models(const HighResSeries& teacher, std::optional<GprHyper> fixed = std::nullopt) {
    teacher.validate();
    if (teacher.hours() < kMinTrainingHours) {
        throw DataError("series '" + teacher.id + "': bound models need at least " +
                        std::to_string(kMinTrainingHours) + " training hours");
    }
    std::vector<double> mean, hi, lo;
    for (std::size_t h = 0; h < teacher.hours(); ++h) {
        const auto xs = teacher.hour(h);
        const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
        double s = 0.0;
        for (double x : xs) {
            s += x;
        }
        mean.push_back(s / static_cast<double>(xs.size()));
        hi.push_back(*mx);
        lo.push_back(*mn);
    }
    return {GaussianProcess::fit(mean, lo, fixed), GaussianProcess::fit(mean, hi, fixed)};
}

// Bounds and chain of one quantity of one teacher.
struct QuantityModel {
    BoundModel bounds;
    TransitionModel chain;
};

struct TeacherModel {
    std::string id;
    MeterKind kind = MeterKind::load;
    std::optional<QuantityModel> p;
    std::optional<QuantityModel> q; // absent when the series is degenerate (e.g. unity power factor PV)
    std::vector<Pattern> patterns;  // daily patterns of hourly active power
};

struct EnrichOptions {
    int bins = 20;
    bool literal_weights = false;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    bool q_from_power_factor = false;
    bool same_kind_teachers = true;
    std::optional<GprHyper> gpr_hyper;
    std::size_t samples_per_hour = 0; // 0: follow the teachers
};

inline std::optional<QuantityModel> fit_quantity(const HighResSeries& s, const EnrichOptions& opt) {
    try {
        return QuantityModel{fit_bound_models(s, opt.gpr_hyper), fit_transition_model(s, opt.bins)};
    } catch (const DegenerateInputError&) {
        return std::nullopt;
    }
}

inline TeacherModel fit_teacher(const std::string& id, MeterKind kind, const HighResMeter& m, const EnrichOptions& opt) {
    TeacherModel t;
    t.id = id;
    t.kind = kind;
    t.p = fit_quantity(m.p, opt);
    t.q = fit_quantity(m.q, opt);
    t.patterns = m.p.hourly_means().daily_patterns();
    return t;
}

struct BlendedModel {
    std::vector<BoundModel> bounds;
    std::vector<double> weights;
    TransitionModel chain;

    std::pair<double, double> predict(double p_a) const {
        double lo = 0.0, hi = 0.0;
        for (std::size_t s = 0; s < bounds.size(); ++s) {
            const auto [l, h] = bounds[s].predict(p_a);
            lo += weights[s] * l;
            hi += weights[s] * h;
        }
        return {lo, hi};
    }
};

inline BlendedModel blend_teachers(const std::vector<double>& weights, const std::vector<QuantityModel>& models) {
    if (weights.size() != models.size() || models.empty()) {
        throw ParameterError("blend: one weight per teacher model required");
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) {
            throw ParameterError("blend: weights must be nonnegative");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ParameterError("blend: weights must sum to 1");
    }
    BlendedModel b;
    b.weights = weights;
    b.chain.bins = models.front().chain.bins;
    b.chain.t.assign(models.front().chain.t.size(), 0.0);
    for (std::size_t s = 0; s < models.size(); ++s) {
        if (models[s].chain.bins != b.chain.bins) {
            throw ParameterError("blend: teachers use different bin counts");
        }
        b.bounds.push_back(models[s].bounds);
        for (std::size_t i = 0; i < b.chain.t.size(); ++i) {
            b.chain.t[i] += weights[s] * models[s].chain.t[i];
        }
    }
    b.chain.normalize_rows();
    return b;
}

// Stable 64-bit FNV-1a, used to derive per-task seeds.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::mt19937_64 task_rng(std::uint64_t master, const std::string& id, std::uint64_t hour, std::uint64_t stream) {
    const std::uint64_t h = fnv1a(id);
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(hour), static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

// Chain samples mapped into [lo, hi], then pulled toward p_a so the mean is
// exactly p_a while every sample stays inside the band.
template <class Rng>
std::vector<double> enrich_hour_bounded(double p_a, double lo, double hi, const TransitionModel& chain, std::size_t n,
                                        Rng& rng) {
    if (hi < lo) {
        throw DegenerateInputError("enrich_hour: upper bound below lower bound");
    }
    if (n == 0) {
        return {};
    }
    lo = std::min(lo, p_a);
    hi = std::max(hi, p_a);
    if (hi - lo <= 0.0) {
        return std::vector<double>(n, p_a);
    }
    const std::vector<int> states = sample_chain(chain, n, rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(n);
    const double width = (hi - lo) / chain.bins;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = lo + (states[i] + u(rng)) * width;
    }
    double mean = 0.0;
    for (double v : x) {
        mean += v;
    }
    mean /= static_cast<double>(n);
    double c = 1.0;
    for (double v : x) {
        const double d = v - mean;
        if (d > 0.0) {
            c = std::min(c, (hi - p_a) / d);
        } else if (d < 0.0) {
            c = std::min(c, (p_a - lo) / -d);
        }
    }
    for (double& v : x) {
        v = std::clamp(p_a + c * (v - mean), lo, hi);
    }
    return x;
}

template <class Rng>
std::vector<double> enrich_hour(double p_a, const BlendedModel& model, std::size_t n, Rng& rng) {
    auto [lo, hi] = model.predict(p_a);
    if (p_a >= 0.0) {
        lo = std::max(lo, 0.0);
    }
    // Blended predictions may cross near the edge of the training range.
    if (hi < lo) {
        std::swap(lo, hi);
    }
    return enrich_hour_bounded(p_a, lo, hi, model.chain, n, rng);
}

struct StudentWeights {
    std::vector<std::string> teachers;
    LearningWeights weights;
};

struct EnrichmentResult {
    std::map<std::string, HighResMeter> series; // teachers pass through unchanged
    std::map<std::string, StudentWeights> weights;
};

inline MeterKind meter_kind(const Feeder& feeder, const std::string& id) {
    for (const auto& m : feeder.meters) {
        if (m.id == id) {
            return m.kind;
        }
    }
    return MeterKind::load;
}

inline EnrichmentResult enrich_transformers(const Feeder& feeder, const std::map<std::string, HighResMeter>& teachers,
                                            const std::map<std::string, HourlyMeter>& students,
                                            const EnrichOptions& opt = {}) {
    if (teachers.empty()) {
        throw DataError("no teacher (high-resolution) transformers: use SM-only mode to build moments from hourly data");
    }
    EnrichmentResult res;
    std::size_t n = opt.samples_per_hour;
    for (const auto& [id, m] : teachers) {
        m.p.validate();
        m.q.validate();
        if (n == 0) {
            n = m.p.samples_per_hour;
        }
        res.series.emplace(id, m);
    }

    std::vector<TeacherModel> models(teachers.size());
    {
        std::vector<std::pair<const std::string*, const HighResMeter*>> jobs;
        for (const auto& [id, m] : teachers) {
            jobs.push_back({&id, &m});
        }
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t i = next++; i < jobs.size(); i = next++) {
                models[i] = fit_teacher(*jobs[i].first, meter_kind(feeder, *jobs[i].first), *jobs[i].second, opt);
            }
        };
        unsigned threads = opt.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opt.threads;
        std::vector<std::thread> pool;
        for (unsigned i = 1; i < std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())); ++i) {
            pool.emplace_back(work);
        }
        work();
        for (auto& t : pool) {
            t.join();
        }
    }

    std::vector<std::pair<const std::string*, const HourlyMeter*>> jobs;
    for (const auto& [id, m] : students) {
        if (teachers.count(id)) {
            continue;
        }
        m.p.validate();
        m.q.validate();
        jobs.push_back({&id, &m});
        res.series[id];
        res.weights[id];
    }

    auto enrich_one = [&](const std::string& id, const HourlyMeter& m) {
        const MeterKind kind = meter_kind(feeder, id);
        std::vector<const TeacherModel*> pool;
        for (const auto& t : models) {
            if (t.p && (!opt.same_kind_teachers || t.kind == kind)) {
                pool.push_back(&t);
            }
        }
        if (pool.empty()) {
            for (const auto& t : models) {
                if (t.p) {
                    pool.push_back(&t);
                }
            }
        }
        if (pool.empty()) {
            throw DegenerateInputError("no teacher has a usable active-power model");
        }
        const auto patterns = m.p.daily_patterns();
        std::vector<std::vector<Pattern>> teacher_patterns;
        for (const auto* t : pool) {
            teacher_patterns.push_back(t->patterns);
        }
        StudentWeights& sw = res.weights[id];
        sw.weights = compute_learning_weights(patterns.empty() ? std::vector<Pattern>{m.p.values} : patterns,
                                              teacher_patterns, opt.literal_weights);
        std::vector<QuantityModel> pm, qm;
        std::vector<double> qw;
        for (std::size_t s = 0; s < pool.size(); ++s) {
            sw.teachers.push_back(pool[s]->id);
            pm.push_back(*pool[s]->p);
            if (pool[s]->q) {
                qm.push_back(*pool[s]->q);
                qw.push_back(sw.weights.w[s]);
            }
        }
        const BlendedModel p_blend = blend_teachers(sw.weights.w, pm);
        std::optional<BlendedModel> q_blend;
        double qsum = 0.0;
        for (double w : qw) {
            qsum += w;
        }
        if (!qm.empty() && qsum > 0.0) {
            for (double& w : qw) {
                w /= qsum;
            }
            q_blend = blend_teachers(qw, qm);
        }

        HighResMeter& out = res.series[id];
        out.p.id = out.q.id = id;
        out.p.start = out.q.start = m.p.timestamps.empty() ? 0 : m.p.timestamps.front();
        out.p.samples_per_hour = out.q.samples_per_hour = n;
        out.p.values.reserve(m.p.size() * n);
        out.q.values.reserve(m.p.size() * n);
        for (std::size_t t = 0; t < m.p.size(); ++t) {
            const auto hour = static_cast<std::uint64_t>(m.p.timestamps[t] / kSecondsPerHour);
            auto rng_p = task_rng(opt.seed, id, hour, 0);
            const auto ps = enrich_hour(m.p.values[t], p_blend, n, rng_p);
            out.p.values.insert(out.p.values.end(), ps.begin(), ps.end());
            const double qa = m.q.values[t];
            if (opt.q_from_power_factor && m.p.values[t] != 0.0) {
                for (double p : ps) {
                    out.q.values.push_back(p * qa / m.p.values[t]);
                }
            } else if (q_blend) {
                auto rng_q = task_rng(opt.seed, id, hour, 1);
                const auto qs = enrich_hour(qa, *q_blend, n, rng_q);
                out.q.values.insert(out.q.values.end(), qs.begin(), qs.end());
            } else {
                out.q.values.insert(out.q.values.end(), n, qa);
            }
        }
    };

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                enrich_one(*jobs[i].first, *jobs[i].second);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    unsigned threads = opt.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opt.threads;
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())); ++i) {
        pool.emplace_back(work);
    }
    work();
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Moments

enum class Correlation { none, bus_hour };

struct MomentOptions {
    int horizon = 24;
    Correlation correlation = Correlation::none;
};

namespace detail {

inline int hour_of_day(std::int64_t timestamp) {
    const std::int64_t h = (timestamp / kSecondsPerHour) % 24;
    return static_cast<int>(h < 0 ? h + 24 : h);
}

// Per-meter samples grouped by hour of day, in time order.
using HourSamples = std::array<std::vector<double>, 24>;

inline HourSamples by_hour(const HighResSeries& s) {
    HourSamples out;
    for (std::size_t t = 0; t < s.hours(); ++t) {
        const auto xs = s.hour(t);
        auto& dst = out[static_cast<std::size_t>(hour_of_day(s.start + static_cast<std::int64_t>(t) * kSecondsPerHour))];
        dst.insert(dst.end(), xs.begin(), xs.end());
    }
    return out;
}

inline HourSamples by_hour(const HourlySeries& s) {
    HourSamples out;
    for (std::size_t t = 0; t < s.size(); ++t) {
        out[static_cast<std::size_t>(hour_of_day(s.timestamps[t]))].push_back(s.values[t]);
    }
    return out;
}

inline void accumulate(std::vector<double>& dst, const std::vector<double>& src, const std::string& what) {
    if (dst.empty()) {
        dst = src;
        return;
    }
    if (dst.size() != src.size()) {
        throw DataError(what + ": meters at one node cover different periods");
    }
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] += src[i];
    }
}

template <class Meter>
MomentAmbiguitySet assemble_moments(const Feeder& feeder, const std::map<std::string, Meter>& series,
                                    const MomentOptions& opt) {
    if (opt.horizon < 1 || opt.horizon > 24) {
        throw ParameterError("moment horizon must lie in [1, 24]");
    }
    const NetworkIndex index = NetworkIndex::build(feeder);
    const std::size_t nodes = index.node_count();
    // node -> hour -> samples, per quantity
    std::vector<HourSamples> pl(nodes), ql(nodes), pg(nodes);
    std::vector<bool> has_load(nodes, false), has_pv(nodes, false);
    for (const auto& meter : feeder.meters) {
        const auto it = series.find(meter.id);
        if (it == series.end()) {
            throw DataError("no series for meter '" + meter.id + "'");
        }
        const int node = index.node(*feeder.find_bus(meter.bus), meter.phase);
        const auto n = static_cast<std::size_t>(node);
        const HourSamples p = by_hour(it->second.p);
        if (meter.kind == MeterKind::pv) {
            for (std::size_t h = 0; h < 24; ++h) {
                accumulate(pg[n][h], p[h], "PV at bus '" + meter.bus + "'");
            }
            has_pv[n] = true;
        } else {
            const HourSamples q = by_hour(it->second.q);
            for (std::size_t h = 0; h < 24; ++h) {
                accumulate(pl[n][h], p[h], "load at bus '" + meter.bus + "'");
                accumulate(ql[n][h], q[h], "load at bus '" + meter.bus + "'");
            }
            has_load[n] = true;
        }
    }

    std::vector<SampleSet> sets;
    std::vector<std::vector<std::size_t>> groups;
    auto key = [&](Quantity q, std::size_t n, int h) {
        const Node& node = index.nodes()[n];
        return EntryKey{q, feeder.buses[node.bus].id, node.phase, h};
    };
    auto push = [&](EntryKey k, const std::vector<double>& xs, bool present) {
        if (!present) {
            sets.push_back({std::move(k), {0.0, 0.0}});
            return;
        }
        if (xs.size() < 2) {
            throw DataError("entry " + std::string(quantity_name(k.quantity)) + " at bus '" + k.bus + "' hour " +
                            std::to_string(k.hour) + " has fewer than 2 samples");
        }
        sets.push_back({std::move(k), xs});
    };
    for (int h = 0; h < opt.horizon; ++h) {
        const auto hh = static_cast<std::size_t>(h);
        std::map<std::size_t, std::vector<std::size_t>> bus_members;
        for (std::size_t n = 0; n < nodes; ++n) {
            push(key(Quantity::p_load, n, h), pl[n][hh], has_load[n]);
            if (has_load[n]) {
                bus_members[index.nodes()[n].bus].push_back(sets.size() - 1);
            }
            push(key(Quantity::q_load, n, h), ql[n][hh], has_load[n]);
            if (has_load[n]) {
                bus_members[index.nodes()[n].bus].push_back(sets.size() - 1);
            }
        }
        for (std::size_t n = 0; n < nodes; ++n) {
            const Node& node = index.nodes()[n];
            const Bus& bus = feeder.buses[node.bus];
            if (!bus.pv_phases().contains(node.phase)) {
                continue;
            }
            push(key(Quantity::p_pv, n, h), pg[n][hh], has_pv[n]);
            if (has_pv[n]) {
                bus_members[node.bus].push_back(sets.size() - 1);
            }
            const std::vector<double> qcap = has_pv[n] ? capability_samples(pg[n][hh], bus.pv->s_cap)
                                                       : std::vector<double>(2, bus.pv->s_cap);
            if (has_pv[n]) {
                push(key(Quantity::q_cap, n, h), qcap, true);
                bus_members[node.bus].push_back(sets.size() - 1);
            } else {
                // No PV measurements: full capability, no spread.
                sets.push_back({key(Quantity::q_cap, n, h), qcap});
            }
        }
        if (opt.correlation == Correlation::bus_hour) {
            for (auto& [bus, members] : bus_members) {
                if (members.size() >= 2) {
                    groups.push_back(members);
                }
            }
        }
    }
    return estimate_moments(sets, groups);
}

} // namespace detail

// Moments from high-resolution (measured or enriched) series, pooled by hour of day.
inline MomentAmbiguitySet moments_from_high_res(const Feeder& feeder, const std::map<std::string, HighResMeter>& series,
                                                const MomentOptions& opt = {}) {
    MomentAmbiguitySet m = detail::assemble_moments(feeder, series, opt);
    m.source = "enriched";
    return m;
}

// Smart-meter-only moments: the spread of hourly values across days stands in
// for within-hour variability. Flagged low confidence.
inline MomentAmbiguitySet moments_from_hourly(const Feeder& feeder, const std::map<std::string, HourlyMeter>& series,
                                              const MomentOptions& opt = {}) {
    MomentAmbiguitySet m = detail::assemble_moments(feeder, series, opt);
    m.source = "sm-only";
    m.low_confidence = true;
    return m;
}

} // namespace cvr::enrich
