#pragma once
// Knowledge-graph data model: vocabularies with dense first-appearance ids,
// triples with reversed-relation augmentation, inductive train/valid/test
// splits, and the (head, relation) -> tails filter index used by ranking
// and negative masking.

#include "cmr/types.hpp"

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace cmr {

struct EntityInfo {
    std::string name;
    std::string description;
    bool has_image = false;
};

struct RelationInfo {
    std::string name;
    std::string description;
};

// Dense, first-appearance-ordered id spaces for entities and relations.
// Names are unique; lookups by name or id are O(1).
class Vocabulary {
  public:
    EntityId add_entity(const std::string& name);
    RelationId add_relation(const std::string& name);

    bool has_entity(const std::string& name) const { return entity_ids_.count(name) > 0; }
    bool has_relation(const std::string& name) const { return relation_ids_.count(name) > 0; }
    EntityId entity_id(const std::string& name) const;
    RelationId relation_id(const std::string& name) const;

    const EntityInfo& entity(EntityId id) const { return entities_.at(id); }
    EntityInfo& entity(EntityId id) { return entities_.at(id); }
    const RelationInfo& relation(RelationId id) const { return relations_.at(id); }
    RelationInfo& relation(RelationId id) { return relations_.at(id); }

    std::size_t num_entities() const { return entities_.size(); }
    std::size_t num_relations() const { return relations_.size(); }

  private:
    std::vector<EntityInfo> entities_;
    std::vector<RelationInfo> relations_;
    std::unordered_map<std::string, EntityId> entity_ids_;
    std::unordered_map<std::string, RelationId> relation_ids_;
};

struct Triple {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;
    bool reversed = false;

    friend bool operator==(const Triple&, const Triple&) = default;
};

using TripleSet = std::vector<Triple>;

enum class SplitMode { transductive, inductive };

// Train/valid/test triples over one shared vocabulary plus the derived
// seen/unseen entity partition. Immutable after build_splits.
struct GraphSplit {
    TripleSet train;
    TripleSet valid;
    TripleSet test;
    std::vector<EntityId> seen_entities;    // sorted ascending
    std::vector<EntityId> unseen_entities;  // sorted ascending
    std::size_t num_entities = 0;
    SplitMode mode = SplitMode::inductive;
    std::vector<std::string> warnings;

    bool is_seen(EntityId e) const;
};

// Map from (head, relation) to the sorted set of known true tails.
class FilterIndex {
  public:
    static FilterIndex from_triples(const TripleSet& triples);
    // All splits together; expects reversed forms to already be included.
    static FilterIndex from_splits(const GraphSplit& splits);

    // Sorted tails for (h, r); empty set for absent keys.
    const std::vector<EntityId>& lookup(EntityId head, RelationId relation) const;
    bool contains(EntityId head, RelationId relation, EntityId tail) const;
    std::size_t num_keys() const { return tails_.size(); }

  private:
    static std::uint64_t key(EntityId head, RelationId relation) {
        return (static_cast<std::uint64_t>(head) << 32) | relation;
    }

    std::unordered_map<std::uint64_t, std::vector<EntityId>> tails_;
};

// Reads head<TAB>relation<TAB>tail lines, resolving names against (and
// extending) the vocabulary in first-appearance order. Empty lines are
// skipped; any other field count is a ParseError naming the 1-based line.
TripleSet ingest_triples(const std::string& path, Vocabulary& vocab);
TripleSet parse_triples(const std::string& text, Vocabulary& vocab, const std::string& context);

// Appends the reversed form (t, r + num_relations, h) of every forward
// triple. Relation ids at or above num_relations are an InvariantError.
TripleSet add_reversed(const TripleSet& triples, std::size_t num_relations);

// Keeps only the forward (non-reversed) triples.
TripleSet strip_reversed(const TripleSet& triples);

bool is_reversed_relation(RelationId relation, std::size_t num_relations);
RelationId base_relation(RelationId relation, std::size_t num_relations);

GraphSplit build_splits(TripleSet train, TripleSet valid, TripleSet test, SplitMode mode,
                        std::size_t num_entities);

inline FilterIndex build_filter_index(const GraphSplit& splits) {
    return FilterIndex::from_splits(splits);
}

// Reads name<TAB>free-text lines and applies them via set_fn(name, text).
// Unknown names are reported through on_unknown (typically a warning).
void parse_description_lines(const std::string& text, const std::string& context,
                             const std::function<bool(const std::string&, const std::string&)>& set_fn,
                             const std::function<void(const std::string&)>& on_unknown);

}  // namespace cmr
