#pragma once
// Full training loop: shuffled epochs over train triples, per-batch
// encode/enqueue/mask/loss/step, per-epoch validation ranking on the
// entity-store side, and patience-based early stopping that returns the
// best-validation parameters.

#include "cmr/contrastive.hpp"
#include "cmr/dataset.hpp"
#include "cmr/eval.hpp"
#include "cmr/optimizer.hpp"
#include "cmr/stores.hpp"
#include "cmr/types.hpp"

#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace cmr {

struct TrainConfig {
    int batch_size = 64;
    int queue_batches = 3;
    double learning_rate = 2e-3;
    double weight_decay = 1e-4;
    int max_epochs = 30;
    int patience = 3;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::adamw;
    bool linear_decay = true;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (queue_batches < 1) throw ConfigError("train.queue_batches must be >= 1");
        if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
        if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
        if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
        if (patience < 1) throw ConfigError("train.patience must be >= 1");
    }
};

// Strict-improvement tracker: stops after `patience` consecutive epochs
// without a new best metric.
class EarlyStopper {
  public:
    explicit EarlyStopper(int patience) : patience_(patience) {
        if (patience < 1) throw ConfigError("early stopping patience must be >= 1");
    }

    // Returns true when this epoch set a new best.
    bool observe(double metric) {
        ++epoch_;
        if (metric > best_) {
            best_ = metric;
            best_epoch_ = epoch_;
            since_best_ = 0;
            return true;
        }
        ++since_best_;
        return false;
    }

    bool should_stop() const { return since_best_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best_metric() const { return best_; }
    int epochs_observed() const { return epoch_; }

  private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    int since_best_ = 0;
    double best_ = -std::numeric_limits<double>::infinity();
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double loss_fc = 0.0;
    double loss_ac = 0.0;
    double loss_fc_rev = 0.0;
    double loss_ac_rev = 0.0;
    double loss_total = 0.0;
    double valid_hits1 = 0.0;
    double valid_mrr = 0.0;
};

template <typename S>
struct TrainResult {
    ModelParams<S> params;  // best-validation parameters
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_hits1 = 0.0;
    bool diverged = false;
    std::string note;
};

inline std::string train_history_csv(const std::vector<EpochStats>& history) {
    std::ostringstream os;
    os << "epoch,loss_fc,loss_ac,loss_fc_rev,loss_ac_rev,loss_total,valid_hits1,valid_mrr\n";
    os.precision(10);
    for (const EpochStats& e : history) {
        os << e.epoch << ',' << e.loss_fc << ',' << e.loss_ac << ',' << e.loss_fc_rev << ','
           << e.loss_ac_rev << ',' << e.loss_total << ',' << e.valid_hits1 << ',' << e.valid_mrr
           << '\n';
    }
    return os.str();
}

// Trains from `init`. The train filter masks false negatives during loss
// construction; the eval filter (usually over all splits) drives the
// validation ranking. Validation runs in es_only mode: the entity store is
// rebuilt from the current parameters each epoch and no memorization of
// validation triples takes place during training.
template <typename S>
TrainResult<S> train(const TrainConfig& cfg, const ModelParams<S>& init, const GraphSplit& splits,
                     const DatasetFeatures<S>& feats, QueryFeatureCache<S>& queries,
                     const FilterIndex& train_filter, const FilterIndex& eval_filter,
                     int threads = 1) {
    cfg.validate();
    if (splits.train.empty()) throw InvariantError("train: empty train triple set");

    TrainResult<S> result;
    ModelParams<S> params = init;
    const std::size_t batches_per_epoch =
        (splits.train.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size);
    const std::size_t total_steps = batches_per_epoch * static_cast<std::size_t>(cfg.max_epochs);

    OptimizerConfig opt_cfg;
    opt_cfg.kind = cfg.optimizer;
    opt_cfg.learning_rate = cfg.learning_rate;
    opt_cfg.weight_decay = cfg.weight_decay;
    opt_cfg.linear_decay = cfg.linear_decay;
    Optimizer<S> opt(opt_cfg, params, total_steps);

    EntityQueue<S> queue(static_cast<std::size_t>(cfg.queue_batches) *
                         static_cast<std::size_t>(cfg.batch_size));
    EarlyStopper stopper(cfg.patience);
    const bool has_valid = !splits.valid.empty();
    if (!has_valid) {
        log_warn("no validation triples; training runs all epochs and keeps the final parameters");
    }

    std::vector<std::size_t> order(splits.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    InferenceConfig valid_cfg;  // only t_inf matters in es_only mode

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        SplitMix64 shuffle_rng(mix64(cfg.seed) ^ 0x9068'3f0d'8a1b'77c5ULL ^
                               mix64(static_cast<std::uint64_t>(epoch)));
        deterministic_shuffle(order, shuffle_rng);

        const ModelParams<S> epoch_start = params;
        double sum_fc = 0, sum_ac = 0, sum_fc_rev = 0, sum_ac_rev = 0, sum_total = 0;
        std::size_t batch_count = 0;
        bool aborted = false;

        for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t hi =
                std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
            TripleSet batch;
            batch.reserve(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) batch.push_back(splits.train[order[i]]);

            const TripleFeatures<S> bf =
                gather_triple_features(feats, queries, batch, 0, batch.size());
            const BatchEncodings<S> enc = encode_batch(params, bf);
            enqueue_batch(queue, batch, enc);
            const NegativeMask mask = build_negative_mask(batch, queue, train_filter);
            const auto rev_mask = build_reverse_mask(batch, train_filter);

            ModelParams<S> grads = zeros_like(params);
            LossBreakdown<S> loss;
            try {
                loss = compute_gradients(params, batch, enc, queue, mask, rev_mask, grads);
            } catch (const NumericError& err) {
                result.diverged = true;
                result.note = err.what();
                log_error(std::string("training diverged: ") + err.what());
                if (result.best_epoch == 0) result.params = epoch_start;  // last good state
                aborted = true;
                break;
            }
            opt.step(params, grads);

            sum_fc += static_cast<double>(loss.l_fc);
            sum_ac += static_cast<double>(loss.l_ac);
            sum_fc_rev += static_cast<double>(loss.l_fc_rev);
            sum_ac_rev += static_cast<double>(loss.l_ac_rev);
            sum_total += static_cast<double>(loss.total);
            ++batch_count;
        }
        if (aborted) break;

        EpochStats stats;
        stats.epoch = epoch;
        const double nb = batch_count > 0 ? static_cast<double>(batch_count) : 1.0;
        stats.loss_fc = sum_fc / nb;
        stats.loss_ac = sum_ac / nb;
        stats.loss_fc_rev = sum_fc_rev / nb;
        stats.loss_ac_rev = sum_ac_rev / nb;
        stats.loss_total = sum_total / nb;

        if (has_valid) {
            const EntityStore<S> es = build_entity_store(params, feats, Sha256{});
            EvalContext<S> ctx;
            ctx.params = &params;
            ctx.es = &es;
            ctx.filter = &eval_filter;
            ctx.queries = &queries;
            const Metrics vm =
                evaluate(ctx, splits.valid, valid_cfg, EvalMode::es_only, threads);
            stats.valid_hits1 = vm.hits1;
            stats.valid_mrr = vm.mrr;
            if (stopper.observe(vm.hits1)) {
                result.params = params;
                result.best_epoch = epoch;
                result.best_hits1 = vm.hits1;
            }
        }
        result.history.push_back(stats);
        log_info("epoch " + std::to_string(epoch) + ": loss " + std::to_string(stats.loss_total) +
                 ", valid Hits@1 " + std::to_string(stats.valid_hits1));

        if (has_valid && stopper.should_stop()) {
            log_info("early stop after epoch " + std::to_string(epoch) + "; best epoch " +
                     std::to_string(stopper.best_epoch()));
            break;
        }
    }

    if (!result.diverged && (result.best_epoch == 0)) {
        // No validation signal (or it never improved): keep final parameters.
        result.params = params;
        result.best_epoch = result.history.empty() ? 0 : result.history.back().epoch;
    }
    return result;
}

}  // namespace cmr
