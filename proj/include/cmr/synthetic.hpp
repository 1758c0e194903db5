#pragma once
// Seeded synthetic inductive dataset generator. Entities come in latent
// types partitioned into groups; half the relations connect same-group
// entities of two types pairwise (so queries sharing a target also share
// text), the other half send every entity of a type to the target type's
// first entity. The last entities of each type appear only in test
// triples, making them unseen. Output: triple/description TSVs, a visual
// feature file with sidecar names, a dataset manifest, and a starter
// experiment config.

#include "cmr/types.hpp"

#include <cstdint>
#include <string>

namespace cmr {

struct SyntheticSpec {
    int num_types = 4;
    int entities_per_type = 25;
    int num_relations = 8;        // first half group-wise, second half emblem-wise
    int triples_per_relation = 0;  // 0 = keep the full structural set; else a cap
    double noise_std = 0.1;
    double unseen_fraction = 0.2;
    int visual_dim = 64;
    int groups_per_type = 5;
    double holdout_fraction = 0.1;  // share of seen-seen triples moved to valid

    void validate() const {
        if (num_types < 1) throw ConfigError("synthetic.num_types must be >= 1");
        if (entities_per_type < 2) throw ConfigError("synthetic.entities_per_type must be >= 2");
        if (num_relations < 1) throw ConfigError("synthetic.num_relations must be >= 1");
        if (triples_per_relation < 0)
            throw ConfigError("synthetic.triples_per_relation must be >= 0");
        if (!(noise_std >= 0)) throw ConfigError("synthetic.noise_std must be >= 0");
        if (!(unseen_fraction > 0.0 && unseen_fraction < 1.0))
            throw ConfigError("synthetic.unseen_fraction must lie in (0, 1)");
        if (visual_dim < 2) throw ConfigError("synthetic.visual_dim must be >= 2");
        if (groups_per_type < 1 || groups_per_type > entities_per_type)
            throw ConfigError("synthetic.groups_per_type must lie in [1, entities_per_type]");
        if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
            throw ConfigError("synthetic.holdout_fraction must lie in [0, 1)");
    }
};

struct SyntheticResult {
    std::string manifest_path;
    std::string config_path;
    std::size_t num_entities = 0;
    std::size_t num_unseen = 0;
    std::size_t num_train = 0;
    std::size_t num_valid = 0;
    std::size_t num_test = 0;
};

// Writes the dataset under out_dir; byte-identical for identical
// (spec, seed).
SyntheticResult generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                   const std::string& out_dir);

}  // namespace cmr
