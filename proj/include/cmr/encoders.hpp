#pragma once
// Bi-encoder model: a text-prompt query encoder, a visual mapping network
// that turns one image feature into a row of prefix vectors, and a
// description branch producing text tokens. Entity embeddings are the
// L2-normalized mean over [prefixes; text tokens], which keeps an exact
// multiplicative split of the similarity into visual and textual parts.

#include "cmr/io.hpp"
#include "cmr/log.hpp"
#include "cmr/rng.hpp"
#include "cmr/types.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cmr {

struct HyperParams {
    int text_dim = 256;    // hashed text feature input width
    int visual_dim = 64;   // external image feature width
    int embed_dim = 64;    // shared embedding width d
    int prefix_len = 4;    // visual prefix count l
    int desc_tokens = 4;   // textual token count m
    int hidden_dim = 128;  // MLP hidden width
    float temperature = 0.05f;

    int total_tokens() const { return prefix_len + desc_tokens; }

    void validate() const {
        if (text_dim < 1 || visual_dim < 1 || embed_dim < 1 || hidden_dim < 1)
            throw ConfigError("model dims must be positive");
        if (prefix_len < 1) throw ConfigError("model.prefix_len must be >= 1");
        if (desc_tokens < 1) throw ConfigError("model.desc_tokens must be >= 1");
        if (!(temperature > 0.0f)) throw ConfigError("model.temperature must be > 0");
    }
};

// Two-layer perceptron y = W2 relu(W1 x + b1) + b2.
template <typename S>
struct MlpParams {
    Matrix<S> w1;
    Vector<S> b1;
    Matrix<S> w2;
    Vector<S> b2;
};

// Single affine map y = W x + b.
template <typename S>
struct AffineParams {
    Matrix<S> w;
    Vector<S> b;
};

template <typename S>
struct ModelParams {
    HyperParams hyper;
    MlpParams<S> query;    // text_dim -> hidden -> embed_dim
    MlpParams<S> vmn;      // visual_dim -> hidden -> prefix_len * embed_dim
    AffineParams<S> desc;  // text_dim -> desc_tokens * embed_dim
};

template <typename S, typename F>
void for_each_tensor(MlpParams<S>& p, const std::string& prefix, F&& f) {
    f(prefix + ".w1", p.w1);
    f(prefix + ".b1", p.b1);
    f(prefix + ".w2", p.w2);
    f(prefix + ".b2", p.b2);
}

template <typename S, typename F>
void for_each_tensor(const MlpParams<S>& p, const std::string& prefix, F&& f) {
    f(prefix + ".w1", p.w1);
    f(prefix + ".b1", p.b1);
    f(prefix + ".w2", p.w2);
    f(prefix + ".b2", p.b2);
}

template <typename S, typename F>
void for_each_tensor(AffineParams<S>& p, const std::string& prefix, F&& f) {
    f(prefix + ".w", p.w);
    f(prefix + ".b", p.b);
}

template <typename S, typename F>
void for_each_tensor(const AffineParams<S>& p, const std::string& prefix, F&& f) {
    f(prefix + ".w", p.w);
    f(prefix + ".b", p.b);
}

template <typename S, typename F>
void for_each_tensor(ModelParams<S>& p, F&& f) {
    for_each_tensor(p.query, "query", f);
    for_each_tensor(p.vmn, "vmn", f);
    for_each_tensor(p.desc, "desc", f);
}

template <typename S, typename F>
void for_each_tensor(const ModelParams<S>& p, F&& f) {
    for_each_tensor(p.query, "query", f);
    for_each_tensor(p.vmn, "vmn", f);
    for_each_tensor(p.desc, "desc", f);
}

namespace detail {

// Fill order is fixed (row-major) so initialization is identical across
// platforms for a given seed.
template <typename S>
void fill_gaussian(Matrix<S>& m, SplitMix64& rng, double scale) {
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<S>(scale * rng.next_gaussian());
}

template <typename S>
MlpParams<S> init_mlp(int in, int hidden, int out, std::uint64_t seed) {
    MlpParams<S> p;
    p.w1.resize(hidden, in);
    p.b1 = Vector<S>::Zero(hidden);
    p.w2.resize(out, hidden);
    p.b2 = Vector<S>::Zero(out);
    SplitMix64 rng(seed);
    fill_gaussian(p.w1, rng, std::sqrt(2.0 / in));      // He: feeds a ReLU
    fill_gaussian(p.w2, rng, std::sqrt(1.0 / hidden));  // linear output layer
    return p;
}

template <typename S>
AffineParams<S> init_affine(int in, int out, std::uint64_t seed) {
    AffineParams<S> p;
    p.w.resize(out, in);
    p.b = Vector<S>::Zero(out);
    SplitMix64 rng(seed);
    fill_gaussian(p.w, rng, std::sqrt(1.0 / in));
    return p;
}

inline std::uint64_t tensor_seed(std::uint64_t seed, const char* name) {
    return mix64(seed) ^ fnv1a64(name, std::char_traits<char>::length(name), 0x7e57'7e57ULL);
}

}  // namespace detail

template <typename S>
ModelParams<S> init_params(const HyperParams& hp, std::uint64_t seed) {
    hp.validate();
    ModelParams<S> p;
    p.hyper = hp;
    p.query = detail::init_mlp<S>(hp.text_dim, hp.hidden_dim, hp.embed_dim,
                                  detail::tensor_seed(seed, "query"));
    p.vmn = detail::init_mlp<S>(hp.visual_dim, hp.hidden_dim, hp.prefix_len * hp.embed_dim,
                                detail::tensor_seed(seed, "vmn"));
    p.desc = detail::init_affine<S>(hp.text_dim, hp.desc_tokens * hp.embed_dim,
                                    detail::tensor_seed(seed, "desc"));
    return p;
}

template <typename S>
ModelParams<S> zeros_like(const ModelParams<S>& p) {
    ModelParams<S> z;
    z.hyper = p.hyper;
    auto zero_mlp = [](const MlpParams<S>& src) {
        MlpParams<S> out;
        out.w1 = Matrix<S>::Zero(src.w1.rows(), src.w1.cols());
        out.b1 = Vector<S>::Zero(src.b1.size());
        out.w2 = Matrix<S>::Zero(src.w2.rows(), src.w2.cols());
        out.b2 = Vector<S>::Zero(src.b2.size());
        return out;
    };
    z.query = zero_mlp(p.query);
    z.vmn = zero_mlp(p.vmn);
    z.desc.w = Matrix<S>::Zero(p.desc.w.rows(), p.desc.w.cols());
    z.desc.b = Vector<S>::Zero(p.desc.b.size());
    return z;
}

// ---------------------------------------------------------------------------
// Forward passes with caches sufficient for exact backprop.

template <typename S>
struct MlpCache {
    Vector<S> x;      // input
    Vector<S> h_pre;  // W1 x + b1
    Vector<S> h;      // relu(h_pre)
};

template <typename S>
Vector<S> mlp_forward(const MlpParams<S>& p, const Vector<S>& x, MlpCache<S>* cache = nullptr) {
    Vector<S> h_pre = p.w1 * x + p.b1;
    Vector<S> h = h_pre.cwiseMax(S(0));
    Vector<S> y = p.w2 * h + p.b2;
    if (cache) {
        cache->x = x;
        cache->h_pre = std::move(h_pre);
        cache->h = std::move(h);
    }
    return y;
}

// Accumulates parameter gradients into `g` and returns dL/dx.
template <typename S>
Vector<S> mlp_backward(const MlpParams<S>& p, const MlpCache<S>& cache, const Vector<S>& dy,
                       MlpParams<S>& g) {
    g.w2.noalias() += dy * cache.h.transpose();
    g.b2 += dy;
    Vector<S> dh = p.w2.transpose() * dy;
    for (Index i = 0; i < dh.size(); ++i)
        if (cache.h_pre[i] <= S(0)) dh[i] = S(0);
    g.w1.noalias() += dh * cache.x.transpose();
    g.b1 += dh;
    return p.w1.transpose() * dh;
}

template <typename S>
struct AffineCache {
    Vector<S> x;
};

template <typename S>
Vector<S> affine_forward(const AffineParams<S>& p, const Vector<S>& x,
                         AffineCache<S>* cache = nullptr) {
    if (cache) cache->x = x;
    return p.w * x + p.b;
}

template <typename S>
Vector<S> affine_backward(const AffineParams<S>& p, const AffineCache<S>& cache,
                          const Vector<S>& dy, AffineParams<S>& g) {
    g.w.noalias() += dy * cache.x.transpose();
    g.b += dy;
    return p.w.transpose() * dy;
}

// dL/df for y = f / ||f||, given dL/dy. `y` is the normalized output.
template <typename S>
Vector<S> normalize_backward(const Vector<S>& y, S norm, const Vector<S>& dy) {
    return (dy - y * y.dot(dy)) / norm;
}

template <typename S>
struct QueryCache {
    MlpCache<S> mlp;
    Vector<S> q;  // normalized output
    S norm = S(0);
    bool degenerate = false;
};

// Unit-norm query embedding for a hashed prompt feature.
template <typename S>
Vector<S> encode_query(const ModelParams<S>& p, const Vector<S>& x, QueryCache<S>* cache = nullptr) {
    QueryCache<S> local;
    QueryCache<S>* c = cache ? cache : &local;
    Vector<S> y = mlp_forward(p.query, x, &c->mlp);
    c->norm = y.norm();
    if (c->norm > S(0) || !std::isfinite(c->norm)) {
        // Non-finite norms divide through so the garbage stays visible downstream.
        c->q = y / c->norm;
    } else {
        c->q = Vector<S>::Zero(y.size());
        c->q[0] = S(1);
        c->degenerate = true;
        log_warn("query embedding collapsed to zero norm; using fixed fallback direction");
    }
    return c->q;
}

template <typename S>
void encode_query_backward(const ModelParams<S>& p, const QueryCache<S>& cache, const Vector<S>& dq,
                           ModelParams<S>& g) {
    if (cache.degenerate) return;  // constant fallback output, no gradient
    Vector<S> dy = normalize_backward(cache.q, cache.norm, dq);
    mlp_backward(p.query, cache.mlp, dy, g.query);
}

template <typename S>
struct EntityEncoding {
    Vector<S> e_f;    // unit fused embedding
    Vector<S> e_v;    // visual share of the pre-norm mean: sum(prefixes)/L
    Vector<S> e_d;    // textual share: sum(tokens)/L
    Vector<S> v_bar;  // mean prefix vector, before fusion (pre-align target)
    S norm = S(0);    // ||e_v + e_d||
    bool degenerate = false;
};

// Visual mapping network output as a prefix matrix plus its mean row.
template <typename S>
struct VisualPrefixes {
    Matrix<S> prefixes;  // prefix_len x embed_dim
    Vector<S> v_bar;     // column mean
};

template <typename S>
VisualPrefixes<S> vmn_project(const ModelParams<S>& p, const Vector<S>& x_visual) {
    const int d = p.hyper.embed_dim;
    const int l = p.hyper.prefix_len;
    const Vector<S> z = mlp_forward(p.vmn, x_visual);
    VisualPrefixes<S> out;
    out.prefixes.resize(l, d);
    for (int k = 0; k < l; ++k) out.prefixes.row(k) = z.segment(k * d, d).transpose();
    out.v_bar = Vector<S>::Zero(d);
    for (int k = 0; k < l; ++k) out.v_bar += out.prefixes.row(k).transpose();
    out.v_bar /= S(l);
    return out;
}

template <typename S>
struct EntityCache {
    MlpCache<S> vmn;
    AffineCache<S> desc;
    EntityEncoding<S> enc;
};

// Fused entity embedding from one visual feature and one text feature.
// The pre-norm embedding is the mean over all prefix_len + desc_tokens
// token vectors, so e_f = normalize(e_v + e_d) exactly.
template <typename S>
EntityEncoding<S> encode_entity(const ModelParams<S>& p, const Vector<S>& x_visual,
                                const Vector<S>& x_text, EntityCache<S>* cache = nullptr) {
    const int d = p.hyper.embed_dim;
    const int l = p.hyper.prefix_len;
    const int m = p.hyper.desc_tokens;
    const int total = l + m;

    EntityCache<S> local;
    EntityCache<S>* c = cache ? cache : &local;

    Vector<S> z = mlp_forward(p.vmn, x_visual, &c->vmn);    // l * d
    Vector<S> u = affine_forward(p.desc, x_text, &c->desc); // m * d

    EntityEncoding<S>& enc = c->enc;
    enc.v_bar = Vector<S>::Zero(d);
    enc.e_v = Vector<S>::Zero(d);
    enc.e_d = Vector<S>::Zero(d);
    for (int k = 0; k < l; ++k) enc.v_bar += z.segment(k * d, d);
    enc.e_v = enc.v_bar / S(total);
    enc.v_bar /= S(l);
    for (int k = 0; k < m; ++k) enc.e_d += u.segment(k * d, d);
    enc.e_d /= S(total);

    Vector<S> fused = enc.e_v + enc.e_d;
    enc.norm = fused.norm();
    if (enc.norm > S(0) || !std::isfinite(enc.norm)) {
        enc.e_f = fused / enc.norm;
    } else {
        enc.e_f = Vector<S>::Zero(d);
        enc.e_f[0] = S(1);
        enc.degenerate = true;
        log_warn("entity embedding collapsed to zero norm; using fixed fallback direction");
    }
    return enc;
}

// Backprop for encode_entity. d_ef is dL/d(e_f); d_vbar is dL/d(v_bar)
// from any loss term that touches the mean prefix directly.
template <typename S>
void encode_entity_backward(const ModelParams<S>& p, const EntityCache<S>& cache,
                            const Vector<S>& d_ef, const Vector<S>& d_vbar, ModelParams<S>& g) {
    const int d = p.hyper.embed_dim;
    const int l = p.hyper.prefix_len;
    const int m = p.hyper.desc_tokens;
    const int total = l + m;
    const EntityEncoding<S>& enc = cache.enc;

    Vector<S> d_fused = Vector<S>::Zero(d);
    if (!enc.degenerate && d_ef.size() > 0) {
        d_fused = normalize_backward(enc.e_f, enc.norm, d_ef);
    }

    // fused = sum over all tokens / total; v_bar = sum over prefixes / l.
    Vector<S> dz = Vector<S>::Zero(l * d);
    for (int k = 0; k < l; ++k) {
        Vector<S> slot = d_fused / S(total);
        if (d_vbar.size() > 0) slot += d_vbar / S(l);
        dz.segment(k * d, d) = slot;
    }
    Vector<S> du = Vector<S>::Zero(m * d);
    for (int k = 0; k < m; ++k) du.segment(k * d, d) = d_fused / S(total);

    mlp_backward(p.vmn, cache.vmn, dz, g.vmn);
    affine_backward(p.desc, cache.desc, du, g.desc);
}

template <typename S>
S log_similarity(const Vector<S>& q, const Vector<S>& e, S temperature) {
    return q.dot(e) / temperature;
}

template <typename S>
S similarity(const Vector<S>& q, const Vector<S>& e, S temperature) {
    return std::exp(log_similarity(q, e, temperature));
}

// ---------------------------------------------------------------------------
// Checkpoint persistence. Format "CMRP": magic, u32 version, u32 tensor
// count, then per tensor (u32 name length, name bytes, u32 rank, u32 dims,
// f32 row-major data), closed by a 32-byte SHA-256 trailer over everything
// before it. The "hyper" tensor stores the architecture numbers.

namespace detail {
constexpr char kCheckpointMagic[4] = {'C', 'M', 'R', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr const char* kHyperTensor = "hyper";

inline void write_tensor(ByteWriter& w, const std::string& name, const float* data,
                         const std::vector<std::uint32_t>& dims) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(dims.size()));
    std::size_t n = 1;
    for (const auto dim : dims) {
        w.u32(dim);
        n *= dim;
    }
    for (std::size_t i = 0; i < n; ++i) w.f32(data[i]);
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelParams<float>& p) {
    ByteWriter w;
    w.magic(detail::kCheckpointMagic);
    w.u32(detail::kCheckpointVersion);

    std::vector<std::pair<std::string, MatrixF>> tensors;
    for_each_tensor(p, [&](const std::string& name, const auto& t) {
        MatrixF m(t.rows(), t.cols());
        m = t;
        tensors.emplace_back(name, std::move(m));
    });
    const HyperParams& h = p.hyper;
    const std::vector<float> hyper = {
        static_cast<float>(h.text_dim),   static_cast<float>(h.visual_dim),
        static_cast<float>(h.embed_dim),  static_cast<float>(h.prefix_len),
        static_cast<float>(h.desc_tokens), static_cast<float>(h.hidden_dim),
        h.temperature};

    w.u32(static_cast<std::uint32_t>(tensors.size() + 1));
    detail::write_tensor(w, detail::kHyperTensor, hyper.data(),
                         {static_cast<std::uint32_t>(hyper.size())});
    for (const auto& [name, m] : tensors) {
        std::vector<float> row_major(static_cast<std::size_t>(m.size()));
        std::size_t idx = 0;
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) row_major[idx++] = m(i, j);
        if (m.cols() == 1) {
            detail::write_tensor(w, name, row_major.data(),
                                 {static_cast<std::uint32_t>(m.rows())});
        } else {
            detail::write_tensor(w, name, row_major.data(),
                                 {static_cast<std::uint32_t>(m.rows()),
                                  static_cast<std::uint32_t>(m.cols())});
        }
    }
    w.hash_trailer();
    write_file_bytes(path, w.take());
}

inline ModelParams<float> load_checkpoint(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    const std::size_t payload = verify_hash_trailer(bytes, path);
    ByteReader r(bytes.data(), payload, path);
    r.expect_magic(detail::kCheckpointMagic);
    const std::uint32_t version = r.u32();
    if (version != detail::kCheckpointVersion)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = r.u32();

    std::map<std::string, std::pair<std::vector<std::uint32_t>, std::vector<float>>> tensors;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = r.u32();
        std::string name(name_len, '\0');
        r.raw(name.data(), name_len);
        const std::uint32_t rank = r.u32();
        std::vector<std::uint32_t> dims(rank);
        std::size_t n = 1;
        for (auto& dim : dims) {
            dim = r.u32();
            n *= dim;
        }
        std::vector<float> data(n);
        for (auto& v : data) v = r.f32();
        tensors.emplace(std::move(name), std::make_pair(std::move(dims), std::move(data)));
    }
    r.expect_end();

    auto it = tensors.find(detail::kHyperTensor);
    if (it == tensors.end()) throw FormatError(path + ": missing 'hyper' tensor");
    const auto& hyper = it->second.second;
    if (hyper.size() != 7) throw FormatError(path + ": malformed 'hyper' tensor");
    HyperParams hp;
    hp.text_dim = static_cast<int>(hyper[0]);
    hp.visual_dim = static_cast<int>(hyper[1]);
    hp.embed_dim = static_cast<int>(hyper[2]);
    hp.prefix_len = static_cast<int>(hyper[3]);
    hp.desc_tokens = static_cast<int>(hyper[4]);
    hp.hidden_dim = static_cast<int>(hyper[5]);
    hp.temperature = hyper[6];
    hp.validate();

    ModelParams<float> p = init_params<float>(hp, 0);
    for_each_tensor(p, [&](const std::string& name, auto& tensor) {
        auto found = tensors.find(name);
        if (found == tensors.end()) throw FormatError(path + ": missing tensor '" + name + "'");
        const auto& [dims, data] = found->second;
        const bool is_vector = tensor.cols() == 1;
        if (is_vector) {
            if (dims.size() != 1 || static_cast<Index>(dims[0]) != tensor.rows())
                throw FormatError(path + ": tensor '" + name + "' has unexpected shape");
        } else {
            if (dims.size() != 2 || static_cast<Index>(dims[0]) != tensor.rows() ||
                static_cast<Index>(dims[1]) != tensor.cols())
                throw FormatError(path + ": tensor '" + name + "' has unexpected shape");
        }
        std::size_t idx = 0;
        for (Index i = 0; i < tensor.rows(); ++i)
            for (Index j = 0; j < tensor.cols(); ++j) tensor(i, j) = data[idx++];
    });
    return p;
}

}  // namespace cmr
