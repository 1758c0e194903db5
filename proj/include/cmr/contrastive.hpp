#pragma once
// Cross-modal contrastive objective: fusion and pre-align InfoNCE terms in
// both directions, a FIFO queue of detached entity embeddings that serves
// as the negative pool, false-negative masks from the train filter, and
// exact analytic gradients for the whole batch loss.
//
// Gradient semantics: queue entries are constants (stored embeddings from
// preceding steps are never revisited), but each row's own positive is the
// live encoder output, so both encoders receive updates from the positive
// pair in every term.

#include "cmr/encoders.hpp"
#include "cmr/kg.hpp"
#include "cmr/log.hpp"
#include "cmr/types.hpp"

#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

namespace cmr {

template <typename S>
struct QueueItem {
    EntityId value;   // the tail entity this embedding answers for
    Vector<S> e_f;    // detached fused embedding
    Vector<S> v_bar;  // detached mean prefix vector
};

// Fixed-capacity FIFO over the most recent mini-batches' tail entities.
template <typename S>
class EntityQueue {
  public:
    explicit EntityQueue(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("entity queue capacity must be positive");
    }

    void push(EntityId value, Vector<S> e_f, Vector<S> v_bar) {
        items_.push_back(QueueItem<S>{value, std::move(e_f), std::move(v_bar)});
        while (items_.size() > capacity_) items_.pop_front();
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const QueueItem<S>& item(std::size_t i) const { return items_[i]; }  // 0 = oldest

  private:
    std::size_t capacity_;
    std::deque<QueueItem<S>> items_;
};

// usable[i][j] = true when queue slot j may serve as a negative for batch
// row i: false for the row's own enqueued copy and for any slot whose
// entity forms a true train triple with (h_i, r_i).
struct NegativeMask {
    std::vector<std::vector<std::uint8_t>> usable;
    std::vector<std::size_t> pos_slot;
};

// Must be called right after the current batch was enqueued, so the last
// batch.size() slots are the batch rows' own copies in order.
template <typename S>
NegativeMask build_negative_mask(const TripleSet& batch, const EntityQueue<S>& queue,
                                 const FilterIndex& train_index) {
    if (queue.size() < batch.size())
        throw InvariantError("negative mask: queue smaller than the just-enqueued batch");
    NegativeMask mask;
    const std::size_t q = queue.size();
    const std::size_t first_own = q - batch.size();
    mask.usable.assign(batch.size(), std::vector<std::uint8_t>(q, 0));
    mask.pos_slot.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        mask.pos_slot[i] = first_own + i;
        for (std::size_t j = 0; j < q; ++j) {
            if (j == mask.pos_slot[i]) continue;
            const EntityId n = queue.item(j).value;
            mask.usable[i][j] =
                train_index.contains(batch[i].head, batch[i].relation, n) ? 0 : 1;
        }
    }
    return mask;
}

// usable[i][j] = true when in-batch query j may serve as a negative for
// entity anchor i (reversed direction): j != i and (h_j, r_j, t_i) is not
// a train triple.
inline std::vector<std::vector<std::uint8_t>> build_reverse_mask(const TripleSet& batch,
                                                                 const FilterIndex& train_index) {
    std::vector<std::vector<std::uint8_t>> usable(batch.size(),
                                                  std::vector<std::uint8_t>(batch.size(), 0));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t j = 0; j < batch.size(); ++j) {
            if (j == i) continue;
            usable[i][j] =
                train_index.contains(batch[j].head, batch[j].relation, batch[i].tail) ? 0 : 1;
        }
    }
    return usable;
}

// InfoNCE over [positive, negatives...] logits via shifted log-sum-exp.
// Optionally writes the softmax distribution in the same order.
template <typename S>
S info_nce(S pos_logit, const std::vector<S>& neg_logits, std::vector<S>* probs = nullptr) {
    S max_logit = pos_logit;
    for (const S v : neg_logits) max_logit = std::max(max_logit, v);
    S sum = std::exp(pos_logit - max_logit);
    for (const S v : neg_logits) sum += std::exp(v - max_logit);
    const S lse = max_logit + std::log(sum);
    if (probs) {
        probs->clear();
        probs->reserve(neg_logits.size() + 1);
        probs->push_back(std::exp(pos_logit - lse));
        for (const S v : neg_logits) probs->push_back(std::exp(v - lse));
    }
    return lse - pos_logit;
}

// Fusion contrastive term for one anchor against the entity queue.
template <typename S>
S loss_fc(const Vector<S>& q, const Vector<S>& pos_e_f, const EntityQueue<S>& queue,
          const std::vector<std::uint8_t>& mask_row, S tau) {
    std::vector<S> negs;
    for (std::size_t j = 0; j < queue.size(); ++j)
        if (mask_row[j]) negs.push_back(q.dot(queue.item(j).e_f) / tau);
    if (negs.empty()) {
        log_debug("fusion loss row has no usable negatives; contributing 0");
        return S(0);
    }
    return info_nce(q.dot(pos_e_f) / tau, negs);
}

// Pre-align term: same shape, against the queue's mean-prefix entries.
template <typename S>
S loss_ac(const Vector<S>& q, const Vector<S>& pos_v_bar, const EntityQueue<S>& queue,
          const std::vector<std::uint8_t>& mask_row, S tau) {
    std::vector<S> negs;
    for (std::size_t j = 0; j < queue.size(); ++j)
        if (mask_row[j]) negs.push_back(q.dot(queue.item(j).v_bar) / tau);
    if (negs.empty()) {
        log_debug("pre-align loss row has no usable negatives; contributing 0");
        return S(0);
    }
    return info_nce(q.dot(pos_v_bar) / tau, negs);
}

// Partial derivative of the fusion loss w.r.t. one modality similarity of
// the positive pair, where the positive similarity factors as s_f = s_v *
// s_d and neg_sum is the summed similarity of usable negatives. Always
// negative when at least one negative exists: raising either modality
// similarity of the true pair lowers the loss.
template <typename S>
S fusion_loss_modality_partial(S s_h, S s_f, S neg_sum) {
    return -neg_sum / (s_h * (s_f + neg_sum));
}

template <typename S>
struct LossBreakdown {
    S l_fc = S(0);
    S l_ac = S(0);
    S l_fc_rev = S(0);
    S l_ac_rev = S(0);
    S total = S(0);
};

// Per-row feature slices aligned with a triple list: hashed query prompt,
// tail visual feature (real or padded), tail text feature.
template <typename S>
struct TripleFeatures {
    Matrix<S> query;
    Matrix<S> tail_visual;
    Matrix<S> tail_text;

    Index rows() const { return query.rows(); }
};

template <typename S>
struct BatchEncodings {
    std::vector<QueryCache<S>> q_cache;
    std::vector<EntityCache<S>> e_cache;
};

template <typename S>
BatchEncodings<S> encode_batch(const ModelParams<S>& params, const TripleFeatures<S>& feats) {
    BatchEncodings<S> out;
    const Index n = feats.rows();
    out.q_cache.resize(static_cast<std::size_t>(n));
    out.e_cache.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const std::size_t s = static_cast<std::size_t>(i);
        encode_query(params, Vector<S>(feats.query.row(i).transpose()), &out.q_cache[s]);
        encode_entity(params, Vector<S>(feats.tail_visual.row(i).transpose()),
                      Vector<S>(feats.tail_text.row(i).transpose()), &out.e_cache[s]);
    }
    return out;
}

// Enqueues the batch's detached tail embeddings, oldest-first eviction.
template <typename S>
void enqueue_batch(EntityQueue<S>& queue, const TripleSet& batch, const BatchEncodings<S>& enc) {
    for (std::size_t i = 0; i < batch.size(); ++i)
        queue.push(batch[i].tail, enc.e_cache[i].enc.e_f, enc.e_cache[i].enc.v_bar);
}

// Full bidirectional batch objective; all four parts are batch means.
// When `grads` is non-null, exact analytic gradients of `total` are
// accumulated into it (it must be zero-initialized by the caller).
template <typename S>
LossBreakdown<S> loss_and_gradients(const ModelParams<S>& params, const TripleSet& batch,
                                    const BatchEncodings<S>& enc, const EntityQueue<S>& queue,
                                    const NegativeMask& mask,
                                    const std::vector<std::vector<std::uint8_t>>& rev_mask,
                                    ModelParams<S>* grads) {
    const std::size_t b = batch.size();
    if (b == 0) throw InvariantError("loss: empty batch");
    const S tau = static_cast<S>(params.hyper.temperature);
    const S inv_b = S(1) / S(b);
    const int d = params.hyper.embed_dim;

    LossBreakdown<S> loss;
    std::vector<S> negs, probs;
    std::vector<std::size_t> cand;

    // The reversed terms couple rows (every in-batch query is a candidate
    // for every entity anchor), so gradients w.r.t. the embedding outputs
    // are accumulated for the whole batch first and pushed through the
    // encoders once per row afterwards.
    std::vector<Vector<S>> dq, de, dv;
    if (grads) {
        dq.assign(b, Vector<S>::Zero(d));
        de.assign(b, Vector<S>::Zero(d));
        dv.assign(b, Vector<S>::Zero(d));
    }

    for (std::size_t i = 0; i < b; ++i) {
        const Vector<S>& q = enc.q_cache[i].q;
        const EntityEncoding<S>& ei = enc.e_cache[i].enc;

        // Forward fusion term: anchor q_i, positive live e_f_i, negatives
        // from the queue.
        negs.clear();
        cand.clear();
        for (std::size_t j = 0; j < queue.size(); ++j) {
            if (!mask.usable[i][j]) continue;
            negs.push_back(q.dot(queue.item(j).e_f) / tau);
            cand.push_back(j);
        }
        if (!negs.empty()) {
            loss.l_fc += info_nce(q.dot(ei.e_f) / tau, negs, grads ? &probs : nullptr) * inv_b;
            if (grads) {
                const S g_pos = probs[0] - S(1);
                dq[i] += g_pos * ei.e_f / tau;
                de[i] += g_pos * q / tau;
                for (std::size_t c = 0; c < cand.size(); ++c)
                    dq[i] += probs[c + 1] * queue.item(cand[c]).e_f / tau;
            }
        }

        // Forward pre-align term: anchor q_i, positive live v_bar_i,
        // negatives from the queue's prefix entries.
        negs.clear();
        cand.clear();
        for (std::size_t j = 0; j < queue.size(); ++j) {
            if (!mask.usable[i][j]) continue;
            negs.push_back(q.dot(queue.item(j).v_bar) / tau);
            cand.push_back(j);
        }
        if (!negs.empty()) {
            loss.l_ac += info_nce(q.dot(ei.v_bar) / tau, negs, grads ? &probs : nullptr) * inv_b;
            if (grads) {
                const S g_pos = probs[0] - S(1);
                dq[i] += g_pos * ei.v_bar / tau;
                dv[i] += g_pos * q / tau;
                for (std::size_t c = 0; c < cand.size(); ++c)
                    dq[i] += probs[c + 1] * queue.item(cand[c]).v_bar / tau;
            }
        }

        // Reversed fusion term: anchor e_f_i, candidates are the in-batch
        // queries (all live, so gradient reaches other rows' queries).
        negs.clear();
        cand.clear();
        for (std::size_t j = 0; j < b; ++j) {
            if (!rev_mask[i][j]) continue;
            negs.push_back(ei.e_f.dot(enc.q_cache[j].q) / tau);
            cand.push_back(j);
        }
        if (!negs.empty()) {
            loss.l_fc_rev += info_nce(ei.e_f.dot(q) / tau, negs, grads ? &probs : nullptr) * inv_b;
            if (grads) {
                const S g_pos = probs[0] - S(1);
                de[i] += g_pos * q / tau;
                dq[i] += g_pos * ei.e_f / tau;
                for (std::size_t c = 0; c < cand.size(); ++c) {
                    const std::size_t j = cand[c];
                    de[i] += probs[c + 1] * enc.q_cache[j].q / tau;
                    dq[j] += probs[c + 1] * ei.e_f / tau;
                }
            }
        }

        // Reversed pre-align term: anchor v_bar_i, same candidate set.
        negs.clear();
        cand.clear();
        for (std::size_t j = 0; j < b; ++j) {
            if (!rev_mask[i][j]) continue;
            negs.push_back(ei.v_bar.dot(enc.q_cache[j].q) / tau);
            cand.push_back(j);
        }
        if (!negs.empty()) {
            loss.l_ac_rev += info_nce(ei.v_bar.dot(q) / tau, negs, grads ? &probs : nullptr) * inv_b;
            if (grads) {
                const S g_pos = probs[0] - S(1);
                dv[i] += g_pos * q / tau;
                dq[i] += g_pos * ei.v_bar / tau;
                for (std::size_t c = 0; c < cand.size(); ++c) {
                    const std::size_t j = cand[c];
                    dv[i] += probs[c + 1] * enc.q_cache[j].q / tau;
                    dq[j] += probs[c + 1] * ei.v_bar / tau;
                }
            }
        }
    }

    if (grads) {
        for (std::size_t i = 0; i < b; ++i) {
            encode_query_backward(params, enc.q_cache[i], Vector<S>(dq[i] * inv_b), *grads);
            encode_entity_backward(params, enc.e_cache[i], Vector<S>(de[i] * inv_b),
                                   Vector<S>(dv[i] * inv_b), *grads);
        }
    }

    loss.total = loss.l_fc + loss.l_ac + loss.l_fc_rev + loss.l_ac_rev;
    return loss;
}

template <typename S>
LossBreakdown<S> loss_total(const ModelParams<S>& params, const TripleSet& batch,
                            const BatchEncodings<S>& enc, const EntityQueue<S>& queue,
                            const NegativeMask& mask,
                            const std::vector<std::vector<std::uint8_t>>& rev_mask) {
    return loss_and_gradients(params, batch, enc, queue, mask, rev_mask,
                              static_cast<ModelParams<S>*>(nullptr));
}

// As loss_and_gradients, but verifies every accumulated gradient tensor is
// finite and names the offender otherwise.
template <typename S>
LossBreakdown<S> compute_gradients(const ModelParams<S>& params, const TripleSet& batch,
                                   const BatchEncodings<S>& enc, const EntityQueue<S>& queue,
                                   const NegativeMask& mask,
                                   const std::vector<std::vector<std::uint8_t>>& rev_mask,
                                   ModelParams<S>& grads) {
    for_each_tensor(params, [](const std::string& name, const auto& t) {
        if (!t.allFinite()) throw NumericError("non-finite values in parameter " + name);
    });
    const LossBreakdown<S> loss =
        loss_and_gradients(params, batch, enc, queue, mask, rev_mask, &grads);
    if (!std::isfinite(static_cast<double>(loss.total)))
        throw NumericError("non-finite batch loss");
    for_each_tensor(grads, [](const std::string& name, const auto& t) {
        if (!t.allFinite()) throw NumericError("non-finite gradient in parameter " + name);
    });
    return loss;
}

}  // namespace cmr
