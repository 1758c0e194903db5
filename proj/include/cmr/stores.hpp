#pragma once
// Memorization stage: with frozen encoders, build the Knowledge Store
// (one query embedding per memorized triple, valued by its tail) and the
// Entity Store (one fused embedding per vocabulary entity), plus their
// hashed on-disk format.

#include "cmr/dataset.hpp"
#include "cmr/encoders.hpp"
#include "cmr/io.hpp"
#include "cmr/kg.hpp"
#include "cmr/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cmr {

enum class KsScope { train_only, train_plus_inference_graph };

inline KsScope parse_ks_scope(const std::string& name) {
    if (name == "train_only") return KsScope::train_only;
    if (name == "train_plus_inference_graph") return KsScope::train_plus_inference_graph;
    throw ConfigError("unknown knowledge store scope '" + name + "'");
}

// Triples memorized under a scope, in split order (train, then valid and
// test when the inference graph is included). Order is part of the store's
// identity: rebuilds must be bitwise identical.
inline TripleSet triples_in_scope(const GraphSplit& splits, KsScope scope) {
    TripleSet out = splits.train;
    if (scope == KsScope::train_plus_inference_graph) {
        out.insert(out.end(), splits.valid.begin(), splits.valid.end());
        out.insert(out.end(), splits.test.begin(), splits.test.end());
    }
    return out;
}

template <typename S>
struct KnowledgeStore {
    Matrix<S> keys;                  // N x d unit rows, one per memorized triple
    std::vector<EntityId> values;    // tail entity per row
    std::vector<SourceKey> sources;  // (head, relation) per row, for leak filtering
    Sha256 encoder_hash{};

    Index count() const { return keys.rows(); }
    int dim() const { return static_cast<int>(keys.cols()); }
};

template <typename S>
struct EntityStore {
    Matrix<S> keys;  // |E| x d unit rows; row e is entity e
    Sha256 encoder_hash{};

    Index count() const { return keys.rows(); }
    int dim() const { return static_cast<int>(keys.cols()); }
};

namespace detail {
template <typename S>
void check_unit_rows(const Matrix<S>& keys, const char* what) {
    for (Index i = 0; i < keys.rows(); ++i) {
        const double norm = static_cast<double>(keys.row(i).norm());
        if (std::abs(norm - 1.0) > 1e-6) {
            throw InvariantError(std::string(what) + ": row " + std::to_string(i) +
                                 " has norm " + std::to_string(norm));
        }
    }
}
}  // namespace detail

template <typename S>
KnowledgeStore<S> build_knowledge_store(const ModelParams<S>& params, const TripleSet& triples,
                                        QueryFeatureCache<S>& queries,
                                        const Sha256& encoder_hash) {
    KnowledgeStore<S> ks;
    ks.encoder_hash = encoder_hash;
    ks.keys.resize(static_cast<Index>(triples.size()), params.hyper.embed_dim);
    ks.values.reserve(triples.size());
    ks.sources.reserve(triples.size());
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const Triple& t = triples[i];
        ks.keys.row(static_cast<Index>(i)) =
            encode_query(params, queries.get(t.head, t.relation)).transpose();
        ks.values.push_back(t.tail);
        ks.sources.push_back(SourceKey{t.head, t.relation});
    }
    detail::check_unit_rows(ks.keys, "knowledge store keys");
    return ks;
}

template <typename S>
EntityStore<S> build_entity_store(const ModelParams<S>& params, const DatasetFeatures<S>& feats,
                                  const Sha256& encoder_hash) {
    EntityStore<S> es;
    es.encoder_hash = encoder_hash;
    const Index n = feats.entity_visual.rows();
    es.keys.resize(n, params.hyper.embed_dim);
    for (Index e = 0; e < n; ++e) {
        const EntityEncoding<S> enc =
            encode_entity(params, Vector<S>(feats.entity_visual.row(e).transpose()),
                          Vector<S>(feats.entity_text.row(e).transpose()));
        es.keys.row(e) = enc.e_f.transpose();
    }
    detail::check_unit_rows(es.keys, "entity store keys");
    return es;
}

// ---------------------------------------------------------------------------
// Persistence. Format "CMRS": magic, u32 version, u8 kind (1 = knowledge,
// 2 = entity), 32-byte encoder checkpoint hash, u64 count, u32 dim, f32
// keys row-major, u32 values, (knowledge only) u32 heads + u32 relations,
// then a 32-byte SHA-256 trailer over everything before it.

namespace detail {
constexpr char kStoreMagic[4] = {'C', 'M', 'R', 'S'};
constexpr std::uint32_t kStoreVersion = 1;
constexpr std::uint8_t kKindKnowledge = 1;
constexpr std::uint8_t kKindEntity = 2;

inline void write_store_header(ByteWriter& w, std::uint8_t kind, const Sha256& encoder_hash,
                               std::uint64_t count, std::uint32_t dim) {
    w.magic(kStoreMagic);
    w.u32(kStoreVersion);
    w.u8(kind);
    w.raw(encoder_hash.data(), encoder_hash.size());
    w.u64(count);
    w.u32(dim);
}

struct StoreHeader {
    std::uint8_t kind = 0;
    Sha256 encoder_hash{};
    std::uint64_t count = 0;
    std::uint32_t dim = 0;
};

inline StoreHeader read_store_header(ByteReader& r, std::uint8_t expected_kind, int expected_dim) {
    r.expect_magic(kStoreMagic);
    const std::uint32_t version = r.u32();
    if (version != kStoreVersion) {
        throw FormatError(r.context() + ": unsupported store version " + std::to_string(version));
    }
    StoreHeader h;
    h.kind = r.u8();
    if (h.kind != expected_kind) {
        throw FormatError(r.context() + ": wrong store kind " + std::to_string(h.kind));
    }
    r.raw(h.encoder_hash.data(), h.encoder_hash.size());
    h.count = r.u64();
    h.dim = r.u32();
    if (expected_dim > 0 && h.dim != static_cast<std::uint32_t>(expected_dim)) {
        throw FormatError(r.context() + ": store dimension " + std::to_string(h.dim) +
                          ", expected " + std::to_string(expected_dim));
    }
    return h;
}

inline void write_f32_matrix(ByteWriter& w, const MatrixF& m) {
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) w.f32(m(i, j));
}

inline MatrixF read_f32_matrix(ByteReader& r, std::uint64_t rows, std::uint32_t cols) {
    MatrixF m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = r.f32();
    return m;
}
}  // namespace detail

inline void save_knowledge_store(const std::string& path, const KnowledgeStore<float>& ks) {
    ByteWriter w;
    detail::write_store_header(w, detail::kKindKnowledge, ks.encoder_hash,
                               static_cast<std::uint64_t>(ks.count()),
                               static_cast<std::uint32_t>(ks.dim()));
    detail::write_f32_matrix(w, ks.keys);
    for (const EntityId v : ks.values) w.u32(v);
    for (const SourceKey& s : ks.sources) w.u32(s.head);
    for (const SourceKey& s : ks.sources) w.u32(s.relation);
    w.hash_trailer();
    write_file_bytes(path, w.take());
}

inline void save_entity_store(const std::string& path, const EntityStore<float>& es) {
    ByteWriter w;
    detail::write_store_header(w, detail::kKindEntity, es.encoder_hash,
                               static_cast<std::uint64_t>(es.count()),
                               static_cast<std::uint32_t>(es.dim()));
    detail::write_f32_matrix(w, es.keys);
    for (Index e = 0; e < es.count(); ++e) w.u32(static_cast<std::uint32_t>(e));
    w.hash_trailer();
    write_file_bytes(path, w.take());
}

inline KnowledgeStore<float> load_knowledge_store(const std::string& path, int expected_dim = 0) {
    const auto bytes = read_file_bytes(path);
    const std::size_t payload = verify_hash_trailer(bytes, path);
    ByteReader r(bytes.data(), payload, path);
    const auto h = detail::read_store_header(r, detail::kKindKnowledge, expected_dim);
    KnowledgeStore<float> ks;
    ks.encoder_hash = h.encoder_hash;
    ks.keys = detail::read_f32_matrix(r, h.count, h.dim);
    ks.values.resize(h.count);
    for (auto& v : ks.values) v = r.u32();
    ks.sources.resize(h.count);
    for (auto& s : ks.sources) s.head = r.u32();
    for (auto& s : ks.sources) s.relation = r.u32();
    r.expect_end();
    return ks;
}

inline EntityStore<float> load_entity_store(const std::string& path, int expected_dim = 0) {
    const auto bytes = read_file_bytes(path);
    const std::size_t payload = verify_hash_trailer(bytes, path);
    ByteReader r(bytes.data(), payload, path);
    const auto h = detail::read_store_header(r, detail::kKindEntity, expected_dim);
    EntityStore<float> es;
    es.encoder_hash = h.encoder_hash;
    es.keys = detail::read_f32_matrix(r, h.count, h.dim);
    for (std::uint64_t e = 0; e < h.count; ++e) {
        const std::uint32_t v = r.u32();
        if (v != e) {
            throw FormatError(path + ": entity store row " + std::to_string(e) +
                              " labeled " + std::to_string(v));
        }
    }
    r.expect_end();
    return es;
}

}  // namespace cmr
