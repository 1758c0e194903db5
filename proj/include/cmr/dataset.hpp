#pragma once
// Precomputed feature bundles for a loaded dataset: per-entity visual and
// text features (padding image-less entities deterministically) and a
// memoized cache of hashed query-prompt features keyed by (head, relation).

#include "cmr/contrastive.hpp"
#include "cmr/featurize.hpp"
#include "cmr/kg.hpp"
#include "cmr/types.hpp"

#include <cstdint>
#include <deque>
#include <unordered_map>
#include <vector>

namespace cmr {

template <typename S>
struct DatasetFeatures {
    Matrix<S> entity_visual;                 // |E| x visual_dim
    Matrix<S> entity_text;                   // |E| x text_dim
    std::vector<FeatureSource> visual_source;  // visual or padded, per entity
};

// Builds the per-entity feature matrices. Entities flagged as having an
// image must appear in the visual table; everything else receives a padded
// unit vector derived from (pad_seed, entity id).
template <typename S>
DatasetFeatures<S> build_dataset_features(const Vocabulary& vocab,
                                          const PromptFeaturizer& featurizer,
                                          const FeatureTable<S>* visual, int visual_dim,
                                          std::uint64_t pad_seed) {
    if (visual && visual->count() > 0 && visual->dim() != visual_dim) {
        throw ConfigError("visual feature table dimension " + std::to_string(visual->dim()) +
                          " does not match configured dimension " + std::to_string(visual_dim));
    }
    const std::size_t n = vocab.num_entities();
    const int text_dim = featurizer.config().hash_dim;
    DatasetFeatures<S> out;
    out.entity_visual.resize(static_cast<Index>(n), visual_dim);
    out.entity_text.resize(static_cast<Index>(n), text_dim);
    out.visual_source.resize(n, FeatureSource::padded);
    for (std::size_t e = 0; e < n; ++e) {
        const EntityId id = static_cast<EntityId>(e);
        const EntityInfo& info = vocab.entity(id);
        if (info.has_image) {
            if (!visual || !visual->has(id)) {
                throw InvariantError("visual feature missing for entity '" + info.name + "'");
            }
            out.entity_visual.row(static_cast<Index>(e)) = visual->row(id).transpose();
            out.visual_source[e] = FeatureSource::visual;
        } else {
            out.entity_visual.row(static_cast<Index>(e)) =
                pad_missing_visual<S>(id, visual_dim, pad_seed).transpose();
        }
        out.entity_text.row(static_cast<Index>(e)) =
            featurizer.entity_text_feature<S>(id).transpose();
    }
    return out;
}

// Memoized query-prompt features. References returned by get() stay valid
// for the cache's lifetime. warm() precomputes a triple list's queries so
// later readers can run concurrently without mutation.
template <typename S>
class QueryFeatureCache {
  public:
    explicit QueryFeatureCache(const PromptFeaturizer& featurizer) : featurizer_(&featurizer) {}

    const Vector<S>& get(EntityId head, RelationId relation) {
        const std::uint64_t key =
            (static_cast<std::uint64_t>(head) << 32) | static_cast<std::uint64_t>(relation);
        auto it = index_.find(key);
        if (it != index_.end()) return rows_[it->second];
        rows_.push_back(featurizer_->template query_feature<S>(head, relation));
        index_.emplace(key, rows_.size() - 1);
        return rows_.back();
    }

    void warm(const TripleSet& triples) {
        for (const Triple& t : triples) get(t.head, t.relation);
    }

    std::size_t size() const { return rows_.size(); }

  private:
    const PromptFeaturizer* featurizer_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
    std::deque<Vector<S>> rows_;  // deque: growth never invalidates references
};

// Row-aligned feature slices for triples[lo, hi).
template <typename S>
TripleFeatures<S> gather_triple_features(const DatasetFeatures<S>& feats,
                                         QueryFeatureCache<S>& queries, const TripleSet& triples,
                                         std::size_t lo, std::size_t hi) {
    const auto n = static_cast<Index>(hi - lo);
    TripleFeatures<S> out;
    out.query.resize(n, feats.entity_text.cols());  // prompts share the hash width
    out.tail_visual.resize(n, feats.entity_visual.cols());
    out.tail_text.resize(n, feats.entity_text.cols());
    for (std::size_t i = lo; i < hi; ++i) {
        const Index r = static_cast<Index>(i - lo);
        out.query.row(r) = queries.get(triples[i].head, triples[i].relation).transpose();
        out.tail_visual.row(r) = feats.entity_visual.row(static_cast<Index>(triples[i].tail));
        out.tail_text.row(r) = feats.entity_text.row(static_cast<Index>(triples[i].tail));
    }
    return out;
}

}  // namespace cmr
