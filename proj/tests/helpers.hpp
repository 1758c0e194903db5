#pragma once
// Shared fixtures for the unit tests: deterministic random draws, tiny
// model shapes, a scratch-directory guard, and the finite-difference
// harness used to verify analytic gradients of the batch loss.

#include "cmr/contrastive.hpp"
#include "cmr/encoders.hpp"
#include "cmr/kg.hpp"
#include "cmr/rng.hpp"
#include "cmr/types.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace cmr::testing {

template <typename S>
Vector<S> rand_vector(SplitMix64& rng, int dim) {
    Vector<S> v(dim);
    for (int i = 0; i < dim; ++i) v[i] = static_cast<S>(rng.next_gaussian());
    return v;
}

template <typename S>
Vector<S> rand_unit_vector(SplitMix64& rng, int dim) {
    Vector<S> v = rand_vector<S>(rng, dim);
    const S n = v.norm();
    if (n > S(0)) return v / n;
    v.setZero();
    v[0] = S(1);
    return v;
}

template <typename S>
Matrix<S> rand_matrix(SplitMix64& rng, Index rows, Index cols) {
    Matrix<S> m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(rng.next_gaussian());
    return m;
}

inline HyperParams tiny_hyper() {
    HyperParams hp;
    hp.text_dim = 12;
    hp.visual_dim = 6;
    hp.embed_dim = 8;
    hp.prefix_len = 2;
    hp.desc_tokens = 3;
    hp.hidden_dim = 10;
    hp.temperature = 0.05f;
    return hp;
}

// Unique scratch directory, removed on scope exit.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = (std::filesystem::temp_directory_path() /
                 ("cmr_test_" + tag + "_" + std::to_string(++counter) + "_" +
                  std::to_string(static_cast<std::uint64_t>(::getpid()))))
                    .string();
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const {
        return (std::filesystem::path(path_) / name).string();
    }

  private:
    std::string path_;
};

template <typename E>
std::string thrown_message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const E& e) {
        return e.what();
    }
    return "";
}

// Flat entry views over every tensor, in the fixed visitation order (the
// same order for parameters and their gradient twin, so index k pairs up).
inline std::vector<std::pair<double*, std::size_t>> flat_views(ModelParams<double>& p) {
    std::vector<std::pair<double*, std::size_t>> views;
    for_each_tensor(p, [&](const std::string&, auto& t) {
        views.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
    });
    return views;
}

// One randomized batch-loss instance: double-precision parameters, a
// current batch with its encodings, a frozen queue holding previous
// batches plus the current one, and both negative masks.
struct LossInstance {
    ModelParams<double> params;
    TripleSet batch;
    TripleFeatures<double> feats;
    EntityQueue<double> queue{1};
    NegativeMask mask;
    std::vector<std::vector<std::uint8_t>> rev_mask;
    FilterIndex train_filter;
};

// Smallest |W1 x + b1| pre-activation across the batch rows of both MLPs.
// Finite differences are only meaningful when no ReLU kink sits inside the
// probe interval, so instances below a margin are discarded and redrawn.
inline double min_preactivation(const ModelParams<double>& params, const TripleFeatures<double>& f) {
    double lo = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < f.rows(); ++i) {
        const VectorD hq = params.query.w1 * f.query.row(i).transpose() + params.query.b1;
        const VectorD hv = params.vmn.w1 * f.tail_visual.row(i).transpose() + params.vmn.b1;
        lo = std::min(lo, hq.cwiseAbs().minCoeff());
        lo = std::min(lo, hv.cwiseAbs().minCoeff());
    }
    return lo;
}

// Draws an instance; sizes stay within the verification envelope
// (d <= 16, batch <= 8, queue <= 16).
inline LossInstance make_loss_instance(std::uint64_t seed, int batch_size = 4,
                                       int prev_batches = 3) {
    SplitMix64 rng(mix64(seed) ^ 0x1085'7a11'f00d'5eedULL);
    LossInstance inst;
    const HyperParams hp = tiny_hyper();
    inst.params = init_params<double>(hp, rng.next_u64());

    const int num_entities = 8;
    const int num_relations = 3;
    auto draw_triples = [&](int n) {
        TripleSet out;
        for (int i = 0; i < n; ++i) {
            Triple t;
            t.head = static_cast<EntityId>(rng.next_below(num_entities));
            t.relation = static_cast<RelationId>(rng.next_below(num_relations));
            t.tail = static_cast<EntityId>(rng.next_below(num_entities));
            out.push_back(t);
        }
        return out;
    };
    auto draw_feats = [&](const TripleSet& ts) {
        TripleFeatures<double> f;
        f.query = rand_matrix<double>(rng, static_cast<Index>(ts.size()), hp.text_dim);
        f.tail_visual = rand_matrix<double>(rng, static_cast<Index>(ts.size()), hp.visual_dim);
        f.tail_text = rand_matrix<double>(rng, static_cast<Index>(ts.size()), hp.text_dim);
        return f;
    };

    // Extra filter triples beyond the batch's own, so the false-negative
    // branch of the mask gets exercised.
    inst.batch = draw_triples(batch_size);
    TripleSet filter_triples = draw_triples(12);
    filter_triples.insert(filter_triples.end(), inst.batch.begin(), inst.batch.end());
    inst.train_filter = FilterIndex::from_triples(filter_triples);

    inst.queue = EntityQueue<double>(static_cast<std::size_t>((prev_batches + 1) * batch_size));
    for (int b = 0; b < prev_batches; ++b) {
        const TripleSet prev = draw_triples(batch_size);
        const TripleFeatures<double> pf = draw_feats(prev);
        const BatchEncodings<double> penc = encode_batch(inst.params, pf);
        enqueue_batch(inst.queue, prev, penc);
    }
    inst.feats = draw_feats(inst.batch);
    const BatchEncodings<double> enc = encode_batch(inst.params, inst.feats);
    enqueue_batch(inst.queue, inst.batch, enc);
    inst.mask = build_negative_mask(inst.batch, inst.queue, inst.train_filter);
    inst.rev_mask = build_reverse_mask(inst.batch, inst.train_filter);
    return inst;
}

inline LossInstance make_safe_loss_instance(std::uint64_t seed, double kink_margin = 1e-3,
                                            int batch_size = 4, int prev_batches = 3) {
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        LossInstance inst =
            make_loss_instance(seed + attempt * 0x9e37ULL, batch_size, prev_batches);
        if (min_preactivation(inst.params, inst.feats) > kink_margin) return inst;
    }
    throw InvariantError("could not draw a kink-free loss instance");
}

// Loss at the instance's current parameters; the queue snapshot is held
// fixed, matching the detached-negative semantics of training.
inline double instance_loss(const LossInstance& inst) {
    const BatchEncodings<double> enc = encode_batch(inst.params, inst.feats);
    return loss_total(inst.params, inst.batch, enc, inst.queue, inst.mask, inst.rev_mask).total;
}

// Central finite differences over every parameter entry against the
// analytic gradients. Returns the worst scaled error.
inline double max_gradient_error(LossInstance& inst, double h = 1e-5) {
    const BatchEncodings<double> enc = encode_batch(inst.params, inst.feats);
    ModelParams<double> grads = zeros_like(inst.params);
    compute_gradients(inst.params, inst.batch, enc, inst.queue, inst.mask, inst.rev_mask, grads);

    const auto p_views = flat_views(inst.params);
    const auto g_views = flat_views(grads);
    double worst = 0.0;
    for (std::size_t k = 0; k < p_views.size(); ++k) {
        double* p = p_views[k].first;
        const double* g = g_views[k].first;
        for (std::size_t i = 0; i < p_views[k].second; ++i) {
            const double saved = p[i];
            p[i] = saved + h;
            const double up = instance_loss(inst);
            p[i] = saved - h;
            const double down = instance_loss(inst);
            p[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double scale = std::max({1e-4, std::abs(fd), std::abs(g[i])});
            worst = std::max(worst, std::abs(fd - g[i]) / scale);
        }
    }
    return worst;
}

}  // namespace cmr::testing
