#include "cmr/synthetic.hpp"

#include "cmr/featurize.hpp"
#include "cmr/io.hpp"
#include "cmr/log.hpp"
#include "cmr/rng.hpp"
#include "cmr/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace cmr {

namespace {

struct RawTriple {
    int head = 0;      // global entity index
    int relation = 0;  // relation index
    int tail = 0;      // global entity index
};

int group_of(int local, int per_type, int groups) {
    return static_cast<int>((static_cast<long long>(local) * groups) / per_type);
}

std::string entity_name(int type, int local) {
    return "item" + std::to_string(type) + "x" + std::to_string(local);
}

std::string entity_description(int type, int group, int global) {
    const std::string t = std::to_string(type);
    const std::string g = std::to_string(group);
    const std::string u = std::to_string(global);
    return "breed" + t + " habitat" + t + " lineage" + t + " clan" + g + " river" + g + " trail" +
           g + " tag" + u + " mark" + u;
}

std::string relation_name(int rel) { return "rel" + std::to_string(rel); }

std::string relation_description(int rel, bool groupwise) {
    if (groupwise) return "kindred circle bond r" + std::to_string(rel);
    return "devoted emblem tribute r" + std::to_string(rel);
}

VectorF unit_gaussian(SplitMix64& rng, int dim) {
    VectorF v(dim);
    for (int i = 0; i < dim; ++i) v[i] = static_cast<float>(rng.next_gaussian());
    const float n = v.norm();
    if (n < 1e-12f) {
        v.setZero();
        v[0] = 1.0f;
        return v;
    }
    return v / n;
}

}  // namespace

SyntheticResult generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                   const std::string& out_dir) {
    spec.validate();

    const int T = spec.num_types;
    const int P = spec.entities_per_type;
    const int R = spec.num_relations;
    const int G = spec.groups_per_type;
    const int num_entities = T * P;
    int unseen_per_type = static_cast<int>(std::llround(P * spec.unseen_fraction));
    unseen_per_type = std::clamp(unseen_per_type, 1, P - 1);
    const int seen_locals = P - unseen_per_type;  // locals >= seen_locals are held out
    // The held-out locals split into two disjoint pools: a validation pool so
    // hyperparameter sweeps see the inductive regime, and a test pool whose
    // entities never appear outside the test split. Tiny populations give the
    // whole holdout to test.
    const int valid_pool = unseen_per_type / 2;
    const int test_start = seen_locals + valid_pool;

    const auto global_id = [P](int type, int local) { return type * P + local; };
    const auto is_unseen_local = [seen_locals](int local) { return local >= seen_locals; };
    const auto is_test_local = [test_start](int local) { return local >= test_start; };

    // Structural triples. Group-wise relations connect every same-group
    // (head, tail) pair between the source and target type; emblem-wise
    // relations send every source entity to the target type's first entity.
    std::vector<RawTriple> forward;
    const int groupwise_count = (R + 1) / 2;
    for (int r = 0; r < R; ++r) {
        const bool groupwise = r < groupwise_count;
        const int src = r % T;
        const int family_rank = groupwise ? r : r - groupwise_count;
        const int shift = 1 + family_rank / T;
        const int dst = T == 1 ? 0 : (src + shift) % T;
        std::vector<RawTriple> rel_triples;
        if (groupwise) {
            for (int g = 0; g < G; ++g) {
                for (int hi = 0; hi < P; ++hi) {
                    if (group_of(hi, P, G) != g) continue;
                    for (int ti = 0; ti < P; ++ti) {
                        if (group_of(ti, P, G) != g) continue;
                        rel_triples.push_back({global_id(src, hi), r, global_id(dst, ti)});
                    }
                }
            }
        } else {
            for (int hi = 0; hi < P; ++hi) {
                rel_triples.push_back({global_id(src, hi), r, global_id(dst, 0)});
            }
        }
        if (spec.triples_per_relation > 0 &&
            rel_triples.size() > static_cast<std::size_t>(spec.triples_per_relation)) {
            rel_triples.resize(static_cast<std::size_t>(spec.triples_per_relation));
        }
        forward.insert(forward.end(), rel_triples.begin(), rel_triples.end());
    }

    // Splits: triples touching a test-pool entity go to test, remaining
    // triples touching a validation-pool entity go to valid, and the rest are
    // train with a random held-out slice as extra valid.
    std::vector<RawTriple> train, valid, test;
    SplitMix64 holdout_rng(mix64(seed) ^ 0x5eed'0f8a'1d77'c5b3ULL);
    for (const RawTriple& t : forward) {
        const bool test_touch = is_test_local(t.head % P) || is_test_local(t.tail % P);
        const bool held_touch =
            is_unseen_local(t.head % P) || is_unseen_local(t.tail % P);
        if (test_touch) {
            test.push_back(t);
        } else if (held_touch) {
            valid.push_back(t);
        } else if (spec.holdout_fraction > 0.0 &&
                   holdout_rng.next_unit() < spec.holdout_fraction) {
            valid.push_back(t);
        } else {
            train.push_back(t);
        }
    }
    if (test.empty()) {
        throw InvariantError("synthetic spec yields no test triples touching unseen entities");
    }
    if (train.empty()) {
        throw InvariantError("synthetic spec yields no train triples");
    }
    if (valid.empty() && spec.holdout_fraction > 0.0 && train.size() > 1) {
        // Degenerate tiny specs: keep valid non-empty by moving one train
        // triple whose endpoints stay covered elsewhere in train.
        std::unordered_map<int, int> degree;
        for (const RawTriple& t : train) {
            ++degree[t.head];
            ++degree[t.tail];
        }
        std::size_t pick = 0;
        for (std::size_t i = 0; i < train.size(); ++i) {
            if (degree[train[i].head] >= 2 && degree[train[i].tail] >= 2) {
                pick = i;
                break;
            }
        }
        valid.push_back(train[pick]);
        train.erase(train.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    // Only entities that actually occur in some emitted triple get
    // described and featurized; the loaders treat stray names as errors.
    std::vector<char> used(static_cast<std::size_t>(num_entities), 0);
    for (const std::vector<RawTriple>* part : {&train, &valid, &test}) {
        for (const RawTriple& t : *part) {
            used[static_cast<std::size_t>(t.head)] = 1;
            used[static_cast<std::size_t>(t.tail)] = 1;
        }
    }

    std::filesystem::create_directories(out_dir);
    const auto path_in = [&out_dir](const std::string& name) {
        return (std::filesystem::path(out_dir) / name).string();
    };

    const auto write_triples = [&](const std::string& name, const std::vector<RawTriple>& rows) {
        std::string text;
        for (const RawTriple& t : rows) {
            text += entity_name(t.head / P, t.head % P);
            text += '\t';
            text += relation_name(t.relation);
            text += '\t';
            text += entity_name(t.tail / P, t.tail % P);
            text += '\n';
        }
        write_text_file(path_in(name), text);
    };
    write_triples("train.tsv", train);
    write_triples("valid.tsv", valid);
    write_triples("test.tsv", test);

    std::string entity_desc_text;
    std::vector<std::string> visual_names;
    std::vector<int> visual_ids;
    for (int e = 0; e < num_entities; ++e) {
        if (!used[static_cast<std::size_t>(e)]) continue;
        const int type = e / P;
        const int local = e % P;
        const std::string name = entity_name(type, local);
        entity_desc_text += name;
        entity_desc_text += '\t';
        entity_desc_text += entity_description(type, group_of(local, P, G), e);
        entity_desc_text += '\n';
        if (e % 10 != 7) {  // leave some entities imageless to exercise padding
            visual_names.push_back(name);
            visual_ids.push_back(e);
        }
    }
    write_text_file(path_in("entities.tsv"), entity_desc_text);

    std::string relation_desc_text;
    for (int r = 0; r < R; ++r) {
        relation_desc_text += relation_name(r);
        relation_desc_text += '\t';
        relation_desc_text += relation_description(r, r < groupwise_count);
        relation_desc_text += '\n';
    }
    write_text_file(path_in("relations.tsv"), relation_desc_text);

    // Visual features: a type prototype plus a weaker group prototype plus
    // per-entity noise, normalized. Each vector is drawn from its own
    // seeded stream, so output is independent of iteration order.
    const int vd = spec.visual_dim;
    MatrixF visual(static_cast<Index>(visual_ids.size()), vd);
    for (std::size_t row = 0; row < visual_ids.size(); ++row) {
        const int e = visual_ids[row];
        const int type = e / P;
        const int group = group_of(e % P, P, G);
        SplitMix64 type_rng(mix64(seed) ^ mix64(0x7e7e'0000ULL + static_cast<std::uint64_t>(type)));
        SplitMix64 group_rng(mix64(seed) ^
                             mix64(0x9a9a'0000ULL + static_cast<std::uint64_t>(group)));
        SplitMix64 ent_rng(mix64(seed) ^ mix64(0xe117'0000ULL + static_cast<std::uint64_t>(e)));
        VectorF v = unit_gaussian(type_rng, vd);
        v += 0.6f * unit_gaussian(group_rng, vd);
        for (int i = 0; i < vd; ++i) {
            v[i] += static_cast<float>(spec.noise_std * ent_rng.next_gaussian());
        }
        const float n = v.norm();
        if (n < 1e-12f) {
            v.setZero();
            v[0] = 1.0f;
        } else {
            v /= n;
        }
        visual.row(static_cast<Index>(row)) = v.transpose();
    }
    save_feature_file(path_in("visual.cmrf"), visual_names, visual);

    using ordered_json = nlohmann::ordered_json;
    ordered_json manifest;
    manifest["mode"] = "inductive";
    manifest["train"] = "train.tsv";
    manifest["valid"] = "valid.tsv";
    manifest["test"] = "test.tsv";
    manifest["entity_descriptions"] = "entities.tsv";
    manifest["relation_descriptions"] = "relations.tsv";
    manifest["visual_features"] = "visual.cmrf";
    manifest["visual_dim"] = vd;
    write_text_file(path_in("manifest.json"), manifest.dump(2) + "\n");

    ordered_json config;
    config["dataset"] = "manifest.json";
    config["seed"] = seed;
    config["featurizer"] = ordered_json{{"hash_dim", 256}};
    config["model"] = ordered_json{{"visual_dim", vd}};
    write_text_file(path_in("config.json"), config.dump(2) + "\n");

    SyntheticResult result;
    result.manifest_path = path_in("manifest.json");
    result.config_path = path_in("config.json");
    result.num_entities = static_cast<std::size_t>(
        std::count(used.begin(), used.end(), static_cast<char>(1)));
    std::size_t unseen_used = 0;
    for (int e = 0; e < num_entities; ++e) {
        if (used[static_cast<std::size_t>(e)] && is_unseen_local(e % P)) ++unseen_used;
    }
    result.num_unseen = unseen_used;
    result.num_train = train.size();
    result.num_valid = valid.size();
    result.num_test = test.size();
    log_info("synthetic dataset: " + std::to_string(result.num_entities) + " entities (" +
             std::to_string(result.num_unseen) + " unseen), train/valid/test = " +
             std::to_string(result.num_train) + "/" + std::to_string(result.num_valid) + "/" +
             std::to_string(result.num_test));
    return result;
}

}  // namespace cmr
