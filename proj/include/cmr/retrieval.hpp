#pragma once
// Inference-time retrieval: exact nearest-neighbor search over knowledge
// store keys with the same-(head, relation) filter, per-target
// deduplication, the two candidate distributions, and their λ-blend.

#include "cmr/log.hpp"
#include "cmr/stores.hpp"
#include "cmr/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace cmr {

struct InferenceConfig {
    int k = 32;
    double lambda = 0.95;
    double t_inf = 1.0;           // softmax temperature for the entity-store side
    bool squared_distance = false;  // exp(-d^2) variant for engines returning squares

    void validate() const {
        if (k < 1) throw ConfigError("inference.k must be >= 1");
        if (lambda < 0.0 || lambda > 1.0) throw ConfigError("inference.lambda must lie in [0, 1]");
        if (!(t_inf > 0.0)) throw ConfigError("inference.t_inf must be > 0");
    }
};

template <typename S>
struct NeighborHit {
    S distance;        // Euclidean, non-squared (unless configured otherwise)
    EntityId target;   // stored value (the answer this key memorized)
    SourceKey source;  // stored (head, relation)
    Index row;         // store row, last tie-break key
};

// Exact k-nearest knowledge-store rows by Euclidean distance, excluding
// records whose source key equals the query's own (head, relation). Ties
// break by ascending target id, then store row. Returns fewer than k hits
// when the filtered store is smaller than k.
template <typename S>
std::vector<NeighborHit<S>> knn_search(const KnowledgeStore<S>& ks, const Vector<S>& q, int k,
                                       const SourceKey& exclude_key, bool squared = false) {
    if (k < 1) throw ConfigError("knn_search: k must be >= 1");
    std::vector<NeighborHit<S>> hits;
    hits.reserve(static_cast<std::size_t>(ks.count()));
    for (Index i = 0; i < ks.count(); ++i) {
        if (ks.sources[static_cast<std::size_t>(i)] == exclude_key) continue;
        const S d2 = (ks.keys.row(i).transpose() - q).squaredNorm();
        hits.push_back(NeighborHit<S>{squared ? d2 : std::sqrt(d2),
                                      ks.values[static_cast<std::size_t>(i)],
                                      ks.sources[static_cast<std::size_t>(i)], i});
    }
    const auto better = [](const NeighborHit<S>& a, const NeighborHit<S>& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.target != b.target) return a.target < b.target;
        return a.row < b.row;
    };
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                      better);
    hits.resize(keep);
    return hits;
}

// Keeps only the nearest hit per distinct target; input must already be
// sorted ascending.
template <typename S>
std::vector<NeighborHit<S>> dedupe_per_target(const std::vector<NeighborHit<S>>& hits) {
    std::vector<NeighborHit<S>> out;
    out.reserve(hits.size());
    for (const auto& h : hits) {
        bool seen = false;
        for (const auto& kept : out) {
            if (kept.target == h.target) {
                seen = true;
                break;
            }
        }
        if (!seen) out.push_back(h);
    }
    return out;
}

// Softmax over negative distances of the deduped hits, zero probability
// for every entity outside them. Empty hits produce the all-zero vector;
// interpolate() treats that as "no retrieval evidence" and falls back to
// the entity-store distribution.
template <typename S>
Vector<S> p_ks(const std::vector<NeighborHit<S>>& hits, Index num_entities) {
    Vector<S> p = Vector<S>::Zero(num_entities);
    if (hits.empty()) return p;
    S min_d = hits.front().distance;
    for (const auto& h : hits) min_d = std::min(min_d, h.distance);
    S denom = S(0);
    for (const auto& h : hits) denom += std::exp(-(h.distance - min_d));
    for (const auto& h : hits) {
        p[static_cast<Index>(h.target)] += std::exp(-(h.distance - min_d)) / denom;
    }
    return p;
}

// Softmax over query-entity cosine similarities across the whole store.
template <typename S>
Vector<S> p_es(const EntityStore<S>& es, const Vector<S>& q, S t_inf = S(1)) {
    Vector<S> logits = (es.keys * q) / t_inf;
    const S max_logit = logits.maxCoeff();
    Vector<S> p = (logits.array() - max_logit).exp();
    p /= p.sum();
    return p;
}

// λ·p_ks + (1−λ)·p_es, with the all-zero p_ks degradation noted above.
template <typename S>
Vector<S> interpolate(const Vector<S>& ks_dist, const Vector<S>& es_dist, S lambda) {
    if (ks_dist.size() != es_dist.size()) {
        throw InvariantError("interpolate: distribution sizes differ (" +
                             std::to_string(ks_dist.size()) + " vs " +
                             std::to_string(es_dist.size()) + ")");
    }
    if ((ks_dist.array() == S(0)).all()) {
        log_debug("empty retrieval distribution; falling back to entity-store ranking");
        return es_dist;
    }
    return lambda * ks_dist + (S(1) - lambda) * es_dist;
}

}  // namespace cmr
