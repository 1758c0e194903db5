#pragma once
// Deterministic featurization: signed hashed bag-of-words text features,
// the query prompt template, externally supplied visual feature tables,
// and reproducible padding vectors for image-less entities.

#include "cmr/kg.hpp"
#include "cmr/rng.hpp"
#include "cmr/types.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace cmr {

enum class FeatureSource { text, visual, padded };

struct FeaturizerConfig {
    int hash_dim = 256;
    std::uint64_t seed = 7;
    bool lowercase = true;
    std::string inverse_prefix = "inverse of ";
    std::size_t max_desc_chars = 0;  // 0 = no truncation

    void validate() const {
        if (hash_dim < 8) throw ConfigError("featurizer.hash_dim must be >= 8");
    }
};

// "[CLS] A photo of {head}'s {relation}? [SEP] {description}"
std::string render_query_template(const std::string& head_name, const std::string& head_desc,
                                  const std::string& relation_desc);

// Signed-hash token counts; exact integers, so token order never matters.
std::vector<std::int32_t> hash_bow_counts(const std::string& text, const FeaturizerConfig& cfg);

template <typename S>
Vector<S> hash_bow_featurize(const std::string& text, const FeaturizerConfig& cfg) {
    const auto counts = hash_bow_counts(text, cfg);
    Vector<S> v(cfg.hash_dim);
    for (int i = 0; i < cfg.hash_dim; ++i) v[i] = static_cast<S>(counts[i]);
    const S norm = v.norm();
    if (norm > S(0)) v /= norm;
    return v;
}

// Unit vector derived from (seed, entity id) only; identical across runs
// and machines, distinct across ids with overwhelming probability.
template <typename S>
Vector<S> pad_missing_visual(EntityId entity, int dim, std::uint64_t seed) {
    SplitMix64 rng(mix64(seed) ^ mix64(0xA11CE5ULL + entity));
    Vector<S> v(dim);
    for (int i = 0; i < dim; ++i) v[i] = static_cast<S>(rng.next_gaussian());
    const S norm = v.norm();
    if (norm > S(0)) {
        v /= norm;
    } else {
        v.setZero();
        v[0] = S(1);
    }
    return v;
}

// Row-per-entity feature matrix loaded from a CMRF file.
template <typename S>
struct FeatureTable {
    Matrix<S> rows;  // one row per listed entity
    std::vector<EntityId> ids;
    std::unordered_map<EntityId, Index> row_of;

    bool has(EntityId e) const { return row_of.count(e) > 0; }
    Vector<S> row(EntityId e) const { return rows.row(row_of.at(e)).transpose(); }
    Index count() const { return rows.rows(); }
    int dim() const { return static_cast<int>(rows.cols()); }
};

// CMRF binary feature file: magic "CMRF", u32 version, u64 row count,
// u32 dimension, then row-major dimension x f32 rows, little-endian.
// The sidecar at <path>.names lists entity names in row order.
void save_feature_file(const std::string& path, const std::vector<std::string>& names,
                       const MatrixF& rows);

struct RawFeatureFile {
    std::vector<std::string> names;
    MatrixF rows;
};
RawFeatureFile load_feature_file_raw(const std::string& path, int expected_dim);

template <typename S>
FeatureTable<S> load_feature_file(const std::string& path, int expected_dim, const Vocabulary& vocab) {
    RawFeatureFile raw = load_feature_file_raw(path, expected_dim);
    FeatureTable<S> table;
    table.rows = raw.rows.cast<S>();
    table.ids.reserve(raw.names.size());
    for (std::size_t i = 0; i < raw.names.size(); ++i) {
        if (!vocab.has_entity(raw.names[i])) {
            throw FormatError(path + ": unknown entity name '" + raw.names[i] + "' at row " +
                              std::to_string(i));
        }
        const EntityId id = vocab.entity_id(raw.names[i]);
        table.ids.push_back(id);
        table.row_of.emplace(id, static_cast<Index>(i));
    }
    if (!table.rows.allFinite()) throw FormatError(path + ": non-finite feature values");
    return table;
}

// Renders and hashes prompts against one vocabulary. Relation ids at or
// above num_base_relations are reversed and render with the configured
// inverse prefix.
class PromptFeaturizer {
  public:
    PromptFeaturizer(const Vocabulary& vocab, FeaturizerConfig cfg, std::size_t num_base_relations)
        : vocab_(&vocab), cfg_(std::move(cfg)), num_base_relations_(num_base_relations) {}

    std::string relation_text(RelationId relation) const;
    std::string query_prompt(EntityId head, RelationId relation) const;
    std::string entity_text(EntityId entity) const;

    template <typename S>
    Vector<S> query_feature(EntityId head, RelationId relation) const {
        return hash_bow_featurize<S>(query_prompt(head, relation), cfg_);
    }

    template <typename S>
    Vector<S> entity_text_feature(EntityId entity) const {
        return hash_bow_featurize<S>(entity_text(entity), cfg_);
    }

    const FeaturizerConfig& config() const { return cfg_; }
    std::size_t num_base_relations() const { return num_base_relations_; }
    const Vocabulary& vocab() const { return *vocab_; }

  private:
    std::string truncated_desc(const std::string& desc) const;

    const Vocabulary* vocab_;
    FeaturizerConfig cfg_;
    std::size_t num_base_relations_;
};

}  // namespace cmr
