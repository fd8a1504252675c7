#pragma once

// Moment ambiguity set: mean and covariance of the uncertainty entries, fitted
// by Gaussian maximum likelihood (1/N normalisation).

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvr/error.hpp"
#include "cvr/phase.hpp"
#include "cvr/uncertainty.hpp"
#include "cvr/zip_load.hpp"

namespace cvr::enrich {

struct CovarianceGroup {
    std::vector<std::size_t> members; // indices into MomentAmbiguitySet::keys
    Eigen::MatrixXd cov;
};

struct MomentAmbiguitySet {
    std::vector<EntryKey> keys;
    std::vector<double> mu;
    std::vector<double> var;
    std::vector<CovarianceGroup> groups; // cross-covariances; entries outside groups are independent
    std::string source = "enriched";
    bool low_confidence = false;

    std::size_t size() const { return keys.size(); }

    std::optional<std::size_t> find(const EntryKey& key) const {
        if (lookup_.size() == keys.size()) {
            const auto it = lookup_.find(key);
            return it == lookup_.end() ? std::nullopt : std::optional<std::size_t>(it->second);
        }
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (keys[i] == key) {
                return i;
            }
        }
        return std::nullopt;
    }

    void add(EntryKey key, double mean, double variance) {
        lookup_.emplace(key, keys.size());
        keys.push_back(std::move(key));
        mu.push_back(mean);
        var.push_back(variance);
    }

    // Covariance between two entries (zero unless they share a group).
    double covariance(std::size_t i, std::size_t j) const {
        if (i == j) {
            return var[i];
        }
        for (const auto& g : groups) {
            std::optional<Eigen::Index> gi, gj;
            for (std::size_t k = 0; k < g.members.size(); ++k) {
                if (g.members[k] == i) {
                    gi = static_cast<Eigen::Index>(k);
                }
                if (g.members[k] == j) {
                    gj = static_cast<Eigen::Index>(k);
                }
            }
            if (gi && gj) {
                return g.cov(*gi, *gj);
            }
        }
        return 0.0;
    }

    // Copy with every variance and covariance set to zero.
    MomentAmbiguitySet without_spread() const {
        MomentAmbiguitySet out = *this;
        std::fill(out.var.begin(), out.var.end(), 0.0);
        for (auto& g : out.groups) {
            g.cov.setZero();
        }
        return out;
    }

private:
    std::map<EntryKey, std::size_t> lookup_;
};

struct SampleSet {
    EntryKey key;
    std::vector<double> samples;
};

inline double sample_mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) {
        s += x;
    }
    return s / static_cast<double>(xs.size());
}

// Gaussian MLE variance (divides by N).
inline double sample_variance_mle(std::span<const double> xs) {
    const double m = sample_mean(xs);
    double s = 0.0;
    for (double x : xs) {
        s += (x - m) * (x - m);
    }
    return s / static_cast<double>(xs.size());
}

// Reactive capability samples derived point-wise from active PV samples.
inline std::vector<double> capability_samples(std::span<const double> p_g, double s_cap) {
    std::vector<double> out;
    out.reserve(p_g.size());
    for (double p : p_g) {
        out.push_back(pv_reactive_capability_clamped(s_cap, p));
    }
    return out;
}

// Symmetric PSD projection by eigenvalue clipping. PSD input comes back
// unchanged so a write/read cycle is exact.
inline Eigen::MatrixXd project_psd(const Eigen::MatrixXd& m) {
    if (m.size() == 0) {
        return m;
    }
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.eigenvalues().minCoeff() >= -1e-12 * std::max(1e-300, es.eigenvalues().cwiseAbs().maxCoeff())) {
        return sym;
    }
    const Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// Entries listed together in a correlation group get a joint covariance;
// every other pair is treated as independent.
inline MomentAmbiguitySet estimate_moments(const std::vector<SampleSet>& sets,
                                           const std::vector<std::vector<std::size_t>>& correlation_groups = {}) {
    MomentAmbiguitySet out;
    for (const auto& s : sets) {
        if (s.samples.size() < 2) {
            throw DataError("estimate_moments: entry " + std::string(quantity_name(s.key.quantity)) + "@" +
                            s.key.bus + " needs at least 2 samples");
        }
        for (double x : s.samples) {
            if (!std::isfinite(x)) {
                throw DataError("estimate_moments: non-finite sample for " + std::string(quantity_name(s.key.quantity)) +
                                "@" + s.key.bus);
            }
        }
        out.add(s.key, sample_mean(s.samples), sample_variance_mle(s.samples));
    }
    for (const auto& members : correlation_groups) {
        if (members.size() < 2) {
            continue;
        }
        const std::size_t n = sets.at(members.front()).samples.size();
        for (std::size_t m : members) {
            if (sets.at(m).samples.size() != n) {
                throw DataError("estimate_moments: correlated entries need aligned sample counts");
            }
        }
        const auto k = static_cast<Eigen::Index>(members.size());
        Eigen::MatrixXd centered(static_cast<Eigen::Index>(n), k);
        for (Eigen::Index c = 0; c < k; ++c) {
            const auto& xs = sets[members[static_cast<std::size_t>(c)]].samples;
            const double m = out.mu[members[static_cast<std::size_t>(c)]];
            for (std::size_t r = 0; r < n; ++r) {
                centered(static_cast<Eigen::Index>(r), c) = xs[r] - m;
            }
        }
        Eigen::MatrixXd cov = project_psd(centered.transpose() * centered / static_cast<double>(n));
        for (Eigen::Index c = 0; c < k; ++c) {
            out.var[members[static_cast<std::size_t>(c)]] = cov(c, c);
        }
        out.groups.push_back({members, std::move(cov)});
    }
    return out;
}

inline nlohmann::json moments_to_json(const MomentAmbiguitySet& m) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < m.size(); ++i) {
        entries.push_back({{"quantity", quantity_name(m.keys[i].quantity)},
                           {"bus", m.keys[i].bus},
                           {"phase", std::string(1, phase_name(m.keys[i].phase))},
                           {"hour", m.keys[i].hour},
                           {"mu", m.mu[i]},
                           {"var", m.var[i]}});
    }
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : m.groups) {
        nlohmann::json cov = nlohmann::json::array();
        for (Eigen::Index r = 0; r < g.cov.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < g.cov.cols(); ++c) {
                row.push_back(g.cov(r, c));
            }
            cov.push_back(std::move(row));
        }
        groups.push_back({{"members", g.members}, {"cov", std::move(cov)}});
    }
    return {{"entries", std::move(entries)},
            {"groups", std::move(groups)},
            {"source", m.source},
            {"low_confidence", m.low_confidence}};
}

inline MomentAmbiguitySet moments_from_json(const nlohmann::json& j) {
    MomentAmbiguitySet m;
    if (!j.is_object() || !j.contains("entries") || !j["entries"].is_array()) {
        throw SchemaError("moments.entries: missing or not an array");
    }
    const auto& entries = j["entries"];
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::string path = "moments.entries[" + std::to_string(i) + "]";
        const auto& e = entries[i];
        try {
            EntryKey key;
            key.quantity = parse_quantity(e.at("quantity").get<std::string>());
            key.bus = e.at("bus").is_string() ? e.at("bus").get<std::string>()
                                               : std::to_string(e.at("bus").get<long long>());
            key.phase = parse_phase(e.at("phase").get<std::string>());
            key.hour = e.at("hour").get<int>();
            const double mu = e.at("mu").get<double>();
            const double var = e.at("var").get<double>();
            if (!std::isfinite(mu) || !std::isfinite(var) || var < 0.0) {
                throw SchemaError("mu/var must be finite and var nonnegative");
            }
            m.add(std::move(key), mu, var);
        } catch (const nlohmann::json::exception& ex) {
            throw SchemaError(path + ": " + ex.what());
        } catch (const SchemaError& ex) {
            throw SchemaError(path + ": " + ex.what());
        }
    }
    if (j.contains("groups")) {
        const auto& groups = j["groups"];
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            const std::string path = "moments.groups[" + std::to_string(gi) + "]";
            try {
                CovarianceGroup g;
                g.members = groups[gi].at("members").get<std::vector<std::size_t>>();
                const auto& cov = groups[gi].at("cov");
                const auto k = static_cast<Eigen::Index>(g.members.size());
                if (cov.size() != g.members.size()) {
                    throw SchemaError("cov size does not match members");
                }
                g.cov.resize(k, k);
                for (Eigen::Index r = 0; r < k; ++r) {
                    for (Eigen::Index c = 0; c < k; ++c) {
                        g.cov(r, c) = cov.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
                    }
                }
                for (std::size_t member : g.members) {
                    if (member >= m.size()) {
                        throw SchemaError("member index out of range");
                    }
                }
                g.cov = project_psd(g.cov);
                m.groups.push_back(std::move(g));
            } catch (const nlohmann::json::exception& ex) {
                throw SchemaError(path + ": " + ex.what());
            } catch (const SchemaError& ex) {
                throw SchemaError(path + ": " + ex.what());
            }
        }
    }
    m.source = j.value("source", std::string("enriched"));
    m.low_confidence = j.value("low_confidence", false);
    return m;
}

} // namespace cvr::enrich
