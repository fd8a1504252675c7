#pragma once

// Index map of the stacked uncertainty vector. Per hour the block is
//   [ p_L (every node) | q_L (every node) | p_g (PV nodes) | Q_cap (PV nodes) ]
// and hour blocks are concatenated.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "cvr/enrich/moments.hpp"
#include "cvr/feeder.hpp"
#include "cvr/uncertainty.hpp"

namespace cvr::drcc {

struct LayoutEntry {
    Quantity quantity;
    int node = 0;   // node index for loads, PV index for p_g / Q_cap
    int hour = 0;
};

class UncertaintyLayout {
public:
    UncertaintyLayout() = default;

    UncertaintyLayout(const Feeder& feeder, const NetworkIndex& index, int horizon)
        : index_(index), horizon_(horizon) {
        if (horizon < 1) {
            throw ParameterError("horizon must be at least 1");
        }
        for (std::size_t n = 0; n < index.node_count(); ++n) {
            const Node& node = index.nodes()[n];
            const Bus& bus = feeder.buses[node.bus];
            if (bus.pv_phases().contains(node.phase)) {
                pv_nodes_.push_back(static_cast<int>(n));
                pv_rating_.push_back(bus.pv->s_cap);
            }
        }
        for (const Node& node : index.nodes()) {
            bus_ids_.push_back(feeder.buses[node.bus].id);
        }
    }

    int horizon() const { return horizon_; }
    std::size_t node_count() const { return index_.node_count(); }
    std::size_t pv_count() const { return pv_nodes_.size(); }
    std::size_t block_size() const { return 2 * node_count() + 2 * pv_count(); }
    std::size_t size() const { return block_size() * static_cast<std::size_t>(horizon_); }

    const NetworkIndex& network() const { return index_; }
    const std::vector<int>& pv_nodes() const { return pv_nodes_; }
    double pv_rating(std::size_t k) const { return pv_rating_[k]; }

    // Offset of an entry inside its hour block.
    std::size_t block_offset(Quantity q, std::size_t i) const {
        switch (q) {
        case Quantity::p_load:
            return i;
        case Quantity::q_load:
            return node_count() + i;
        case Quantity::p_pv:
            return 2 * node_count() + i;
        case Quantity::q_cap:
            return 2 * node_count() + pv_count() + i;
        }
        return 0;
    }

    std::size_t flat(Quantity q, std::size_t i, int hour) const {
        return static_cast<std::size_t>(hour) * block_size() + block_offset(q, i);
    }

    LayoutEntry entry(std::size_t flat_index) const {
        const auto hour = static_cast<int>(flat_index / block_size());
        std::size_t off = flat_index % block_size();
        const std::size_t n = node_count();
        const std::size_t g = pv_count();
        if (off < n) {
            return {Quantity::p_load, static_cast<int>(off), hour};
        }
        off -= n;
        if (off < n) {
            return {Quantity::q_load, static_cast<int>(off), hour};
        }
        off -= n;
        if (off < g) {
            return {Quantity::p_pv, static_cast<int>(off), hour};
        }
        return {Quantity::q_cap, static_cast<int>(off - g), hour};
    }

    // Node index an entry refers to (PV entries map through pv_nodes).
    int node_of(const LayoutEntry& e) const {
        return (e.quantity == Quantity::p_pv || e.quantity == Quantity::q_cap) ? pv_nodes_[static_cast<std::size_t>(e.node)]
                                                                                : e.node;
    }

    EntryKey key(std::size_t flat_index) const {
        const LayoutEntry e = entry(flat_index);
        const int node = node_of(e);
        return {e.quantity, bus_ids_[static_cast<std::size_t>(node)],
                index_.nodes()[static_cast<std::size_t>(node)].phase, e.hour};
    }

private:
    NetworkIndex index_;
    int horizon_ = 1;
    std::vector<int> pv_nodes_;
    std::vector<double> pv_rating_;
    std::vector<std::string> bus_ids_;
};

// Mean and covariance of one hour block in layout order.
struct HourMoments {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
};

// Looks up every layout entry of the hour; a missing entry is a mismatch error.
inline HourMoments hour_moments(const UncertaintyLayout& layout, const enrich::MomentAmbiguitySet& moments, int hour) {
    const auto b = static_cast<Eigen::Index>(layout.block_size());
    HourMoments hm{Eigen::VectorXd::Zero(b), Eigen::MatrixXd::Zero(b, b)};
    std::vector<std::size_t> src(static_cast<std::size_t>(b));
    for (Eigen::Index i = 0; i < b; ++i) {
        const EntryKey key = layout.key(layout.flat(Quantity::p_load, 0, hour) + static_cast<std::size_t>(i));
        const auto found = moments.find(key);
        if (!found) {
            throw SchemaError("moments do not cover " + std::string(quantity_name(key.quantity)) + " at bus '" +
                              key.bus + "' phase " + phase_name(key.phase) + " hour " + std::to_string(hour));
        }
        src[static_cast<std::size_t>(i)] = *found;
        hm.mu(i) = moments.mu[*found];
        hm.sigma(i, i) = moments.var[*found];
    }
    if (!moments.groups.empty()) {
        std::vector<Eigen::Index> local(moments.size(), -1);
        for (Eigen::Index i = 0; i < b; ++i) {
            local[src[static_cast<std::size_t>(i)]] = i;
        }
        for (const auto& g : moments.groups) {
            for (std::size_t r = 0; r < g.members.size(); ++r) {
                for (std::size_t c = 0; c < g.members.size(); ++c) {
                    const Eigen::Index lr = local[g.members[r]];
                    const Eigen::Index lc = local[g.members[c]];
                    if (lr >= 0 && lc >= 0) {
                        hm.sigma(lr, lc) = g.cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
                    }
                }
            }
        }
        hm.sigma = enrich::project_psd(hm.sigma);
    }
    return hm;
}

// Symmetric PSD square root.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& sigma) {
    if (sigma.size() == 0) {
        return sigma;
    }
    if (sigma.isDiagonal(0.0)) {
        return sigma.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (sigma + sigma.transpose()));
    const Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace cvr::drcc
