#include "cmr/stores.hpp"

#include "cmr/dataset.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <memory>
#include <string>
#include <vector>

using namespace cmr;
using namespace cmr::testing;

namespace {

struct StoreWorld {
    Vocabulary vocab;
    FeaturizerConfig fcfg;
    std::unique_ptr<PromptFeaturizer> featurizer;
    ModelParams<float> params;
    DatasetFeatures<float> feats;
    std::unique_ptr<QueryFeatureCache<float>> queries;
    TripleSet train;
    Sha256 hash{};

    StoreWorld(const StoreWorld&) = delete;

    explicit StoreWorld(std::uint64_t seed) {
        SplitMix64 rng(mix64(seed) ^ 0x570e'0000'0000'0002ULL);
        for (int i = 0; i < 6; ++i) {
            const EntityId id = vocab.add_entity("s" + std::to_string(i));
            vocab.entity(id).description = "word" + std::to_string(i) + " extra";
        }
        vocab.add_relation("linked");
        for (int i = 0; i < 10; ++i) {
            train.push_back(Triple{static_cast<EntityId>(rng.next_below(6)), 0,
                                   static_cast<EntityId>(rng.next_below(6))});
        }
        train = add_reversed(train, 1);

        fcfg.hash_dim = tiny_hyper().text_dim;
        featurizer = std::make_unique<PromptFeaturizer>(vocab, fcfg, 1);
        params = init_params<float>(tiny_hyper(), seed);
        feats = build_dataset_features<float>(vocab, *featurizer, nullptr,
                                              tiny_hyper().visual_dim, 11);
        queries = std::make_unique<QueryFeatureCache<float>>(*featurizer);
        for (std::size_t i = 0; i < hash.size(); ++i) hash[i] = static_cast<std::uint8_t>(i * 7);
    }
};

}  // namespace

TEST_CASE("store rows are exactly the frozen encoder outputs") {
    StoreWorld w(12);
    const KnowledgeStore<float> ks = build_knowledge_store(w.params, w.train, *w.queries, w.hash);
    REQUIRE(ks.count() == static_cast<Index>(w.train.size()));
    CHECK(ks.encoder_hash == w.hash);
    for (Index i = 0; i < ks.count(); ++i) {
        const Triple& t = w.train[static_cast<std::size_t>(i)];
        const VectorF q = encode_query(w.params, w.queries->get(t.head, t.relation));
        CHECK((ks.keys.row(i).transpose() - q).cwiseAbs().maxCoeff() == 0.0f);
        CHECK(ks.values[static_cast<std::size_t>(i)] == t.tail);
        CHECK(ks.sources[static_cast<std::size_t>(i)] == (SourceKey{t.head, t.relation}));
    }

    const EntityStore<float> es = build_entity_store(w.params, w.feats, w.hash);
    REQUIRE(es.count() == 6);
    for (Index e = 0; e < es.count(); ++e) {
        const EntityEncoding<float> enc =
            encode_entity(w.params, VectorF(w.feats.entity_visual.row(e).transpose()),
                          VectorF(w.feats.entity_text.row(e).transpose()));
        CHECK((es.keys.row(e).transpose() - enc.e_f).cwiseAbs().maxCoeff() == 0.0f);
    }
}

TEST_CASE("stores roundtrip exactly and re-save bitwise identically") {
    StoreWorld w(13);
    TempDir dir("stores");
    const KnowledgeStore<float> ks = build_knowledge_store(w.params, w.train, *w.queries, w.hash);
    const EntityStore<float> es = build_entity_store(w.params, w.feats, w.hash);

    const std::string ks_path = dir.file("ks.cmrs");
    const std::string es_path = dir.file("es.cmrs");
    save_knowledge_store(ks_path, ks);
    save_entity_store(es_path, es);

    const KnowledgeStore<float> ks2 = load_knowledge_store(ks_path, tiny_hyper().embed_dim);
    CHECK((ks2.keys - ks.keys).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(ks2.values == ks.values);
    CHECK(ks2.sources == ks.sources);
    CHECK(ks2.encoder_hash == w.hash);

    const EntityStore<float> es2 = load_entity_store(es_path);
    CHECK((es2.keys - es.keys).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(es2.encoder_hash == w.hash);

    const std::string ks_again = dir.file("ks2.cmrs");
    const std::string es_again = dir.file("es2.cmrs");
    save_knowledge_store(ks_again, ks2);
    save_entity_store(es_again, es2);
    CHECK(read_file_bytes(ks_path) == read_file_bytes(ks_again));
    CHECK(read_file_bytes(es_path) == read_file_bytes(es_again));
}

TEST_CASE("tampered or mismatched store files are rejected") {
    StoreWorld w(14);
    TempDir dir("stores_bad");
    const KnowledgeStore<float> ks = build_knowledge_store(w.params, w.train, *w.queries, w.hash);
    const EntityStore<float> es = build_entity_store(w.params, w.feats, w.hash);
    const std::string ks_path = dir.file("ks.cmrs");
    const std::string es_path = dir.file("es.cmrs");
    save_knowledge_store(ks_path, ks);
    save_entity_store(es_path, es);

    // Single flipped byte in the key block.
    auto bytes = read_file_bytes(ks_path);
    bytes[70] ^= 0xFF;
    const std::string bad = dir.file("bad.cmrs");
    write_file_bytes(bad, bytes);
    CHECK_THROWS_AS(load_knowledge_store(bad), IntegrityError);

    // Truncation invalidates the checksum too.
    bytes = read_file_bytes(ks_path);
    bytes.resize(bytes.size() - 5);
    write_file_bytes(bad, bytes);
    CHECK_THROWS_AS(load_knowledge_store(bad), IntegrityError);

    // Dimension pinning and kind bytes.
    CHECK_THROWS_AS(load_knowledge_store(ks_path, tiny_hyper().embed_dim + 1), FormatError);
    CHECK_THROWS_AS(load_knowledge_store(es_path), FormatError);  // entity file, knowledge kind
    CHECK_THROWS_AS(load_entity_store(ks_path), FormatError);
}

TEST_CASE("entity store rows must be labeled in order") {
    TempDir dir("stores_label");
    ByteWriter w;
    detail::write_store_header(w, detail::kKindEntity, Sha256{}, 2, 3);
    MatrixF keys(2, 3);
    keys << 1, 0, 0, 0, 1, 0;
    detail::write_f32_matrix(w, keys);
    w.u32(0);
    w.u32(5);  // second row claims to be entity 5
    w.hash_trailer();
    const std::string path = dir.file("mislabeled.cmrs");
    write_file_bytes(path, w.take());

    const std::string msg =
        thrown_message<FormatError>([&] { load_entity_store(path); });
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("labeled 5") != std::string::npos);
}

TEST_CASE("memorization scope controls which splits are stored, in order") {
    GraphSplit splits;
    splits.train = {{0, 0, 1}, {1, 0, 2}};
    splits.valid = {{2, 0, 3}};
    splits.test = {{3, 0, 4}, {4, 0, 0}};

    const TripleSet train_only = triples_in_scope(splits, KsScope::train_only);
    CHECK(train_only == splits.train);

    const TripleSet all = triples_in_scope(splits, KsScope::train_plus_inference_graph);
    REQUIRE(all.size() == 5);
    CHECK(all[0] == splits.train[0]);
    CHECK(all[1] == splits.train[1]);
    CHECK(all[2] == splits.valid[0]);
    CHECK(all[3] == splits.test[0]);
    CHECK(all[4] == splits.test[1]);

    CHECK(parse_ks_scope("train_only") == KsScope::train_only);
    CHECK(parse_ks_scope("train_plus_inference_graph") == KsScope::train_plus_inference_graph);
    CHECK_THROWS_AS(parse_ks_scope("everything"), ConfigError);
}

TEST_CASE("non-unit key rows are an invariant violation") {
    MatrixD keys(2, 4);
    keys.setZero();
    keys(0, 0) = 1.0;
    keys(1, 0) = 0.5;
    const std::string msg = thrown_message<InvariantError>(
        [&] { detail::check_unit_rows(keys, "test keys"); });
    CHECK(msg.find("row 1") != std::string::npos);
}
