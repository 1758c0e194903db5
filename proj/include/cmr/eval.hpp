#pragma once
// Filtered ranking evaluation over tail queries (reversed triples cover
// head prediction), aggregate metrics, and the validation grid sweep over
// (k, λ).

#include "cmr/dataset.hpp"
#include "cmr/retrieval.hpp"
#include "cmr/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace cmr {

enum class TieMode { mean, optimistic, pessimistic };
enum class EvalMode { full, es_only, ks_only };

inline TieMode parse_tie_mode(const std::string& name) {
    if (name == "mean") return TieMode::mean;
    if (name == "optimistic") return TieMode::optimistic;
    if (name == "pessimistic") return TieMode::pessimistic;
    throw ConfigError("unknown tie mode '" + name + "'");
}

inline EvalMode parse_eval_mode(const std::string& name) {
    if (name == "full") return EvalMode::full;
    if (name == "es_only") return EvalMode::es_only;
    if (name == "ks_only") return EvalMode::ks_only;
    throw ConfigError("unknown eval mode '" + name + "'");
}

struct RankResult {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId target = 0;
    double rank = 0.0;  // >= 1; fractional under mean tie handling
};

struct Metrics {
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;
    double mean_rank = 0.0;
    std::size_t count = 0;
};

// Rank of the target under the filtered protocol: every other known true
// tail of (head, relation) is removed from the competition, and ties with
// surviving competitors resolve per tie mode (mean by default).
template <typename S>
double filtered_rank(const Vector<S>& dist, EntityId head, RelationId relation, EntityId target,
                     const FilterIndex& filter, TieMode tie = TieMode::mean) {
    if (static_cast<Index>(target) >= dist.size()) {
        throw InvariantError("filtered_rank: target entity out of range");
    }
    const S p_target = dist[static_cast<Index>(target)];
    if (!std::isfinite(static_cast<double>(p_target))) {
        throw NumericError("filtered_rank: non-finite probability for target entity " +
                           std::to_string(target));
    }
    const std::vector<EntityId>& known = filter.lookup(head, relation);
    std::size_t greater = 0, equal = 0;
    for (Index e = 0; e < dist.size(); ++e) {
        const auto id = static_cast<EntityId>(e);
        if (id == target) continue;
        if (std::binary_search(known.begin(), known.end(), id)) continue;
        if (dist[e] > p_target) {
            ++greater;
        } else if (dist[e] == p_target) {
            ++equal;
        }
    }
    switch (tie) {
        case TieMode::optimistic: return 1.0 + static_cast<double>(greater);
        case TieMode::pessimistic: return 1.0 + static_cast<double>(greater + equal);
        case TieMode::mean: break;
    }
    return 1.0 + static_cast<double>(greater) + static_cast<double>(equal) / 2.0;
}

inline Metrics aggregate_ranks(const std::vector<RankResult>& ranks) {
    Metrics m;
    m.count = ranks.size();
    if (ranks.empty()) return m;
    for (const RankResult& r : ranks) {
        m.mrr += 1.0 / r.rank;
        m.hits1 += r.rank <= 1.0 ? 1.0 : 0.0;
        m.hits3 += r.rank <= 3.0 ? 1.0 : 0.0;
        m.hits10 += r.rank <= 10.0 ? 1.0 : 0.0;
        m.mean_rank += r.rank;
    }
    const auto n = static_cast<double>(ranks.size());
    m.mrr /= n;
    m.hits1 /= n;
    m.hits3 /= n;
    m.hits10 /= n;
    m.mean_rank /= n;
    return m;
}

// Everything a ranking pass needs; the knowledge store may be null in
// es_only mode (the entity store is always required).
template <typename S>
struct EvalContext {
    const ModelParams<S>* params = nullptr;
    const KnowledgeStore<S>* ks = nullptr;
    const EntityStore<S>* es = nullptr;
    const FilterIndex* filter = nullptr;
    QueryFeatureCache<S>* queries = nullptr;
    TieMode tie = TieMode::mean;
};

template <typename S>
Vector<S> predict_distribution(const EvalContext<S>& ctx, const Vector<S>& q, EntityId head,
                               RelationId relation, const InferenceConfig& cfg, EvalMode mode) {
    Vector<S> es_dist = p_es(*ctx.es, q, static_cast<S>(cfg.t_inf));
    if (mode == EvalMode::es_only) return es_dist;
    if (!ctx.ks) throw InvariantError("ranking mode needs a knowledge store, none was provided");
    auto hits = knn_search(*ctx.ks, q, cfg.k, SourceKey{head, relation}, cfg.squared_distance);
    hits = dedupe_per_target(hits);
    const Vector<S> ks_dist = p_ks(hits, es_dist.size());
    const S lambda = mode == EvalMode::ks_only ? S(1) : static_cast<S>(cfg.lambda);
    return interpolate(ks_dist, es_dist, lambda);
}

// Ranks every triple (tail prediction; the triple list is expected to
// already include reversed forms). Parallel workers fill disjoint slots
// and aggregation runs in index order, so results are thread-count
// independent.
template <typename S>
Metrics evaluate(const EvalContext<S>& ctx, const TripleSet& triples, const InferenceConfig& cfg,
                 EvalMode mode, int threads = 1, std::vector<RankResult>* ranks_out = nullptr) {
    cfg.validate();
    if (!ctx.params || !ctx.es || !ctx.filter || !ctx.queries) {
        throw InvariantError("evaluate: incomplete context");
    }
    ctx.queries->warm(triples);  // single-threaded fill; workers only read

    std::vector<RankResult> ranks(triples.size());
    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Triple& t = triples[i];
            const Vector<S> q = encode_query(*ctx.params, ctx.queries->get(t.head, t.relation));
            const Vector<S> dist = predict_distribution(ctx, q, t.head, t.relation, cfg, mode);
            ranks[i] = RankResult{t.head, t.relation, t.tail,
                                  filtered_rank(dist, t.head, t.relation, t.tail, *ctx.filter,
                                                ctx.tie)};
        }
    };
    const std::size_t n = triples.size();
    if (threads <= 1 || n < 2) {
        run_range(0, n);
    } else {
        const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
        std::vector<std::thread> pool;
        pool.reserve(workers);
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(run_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    if (ranks_out) *ranks_out = ranks;
    return aggregate_ranks(ranks);
}

struct SweepEntry {
    int k = 0;
    double lambda = 0.0;
    Metrics metrics;
};

struct SweepResult {
    std::vector<SweepEntry> grid;
    int best_k = 0;
    double best_lambda = 0.0;
    Metrics best_metrics;
};

// Evaluates every (k, λ) pair on the validation triples. Neighbor lists
// are retrieved once per query at the largest k; a prefix of that list is
// exactly the smaller-k result because the sort order is identical.
template <typename S>
SweepResult sweep(const EvalContext<S>& ctx, const TripleSet& valid, const std::vector<int>& k_grid,
                  const std::vector<double>& lambda_grid, const InferenceConfig& base_cfg,
                  int threads = 1) {
    if (k_grid.empty() || lambda_grid.empty()) throw ConfigError("sweep: empty parameter grid");
    if (!ctx.ks) throw InvariantError("sweep: knowledge store required");
    for (const int k : k_grid)
        if (k < 1) throw ConfigError("sweep: k must be >= 1");
    for (const double l : lambda_grid)
        if (l < 0.0 || l > 1.0) throw ConfigError("sweep: lambda must lie in [0, 1]");
    const int k_max = *std::max_element(k_grid.begin(), k_grid.end());

    ctx.queries->warm(valid);
    const std::size_t n = valid.size();
    std::vector<std::vector<NeighborHit<S>>> all_hits(n);
    std::vector<Vector<S>> all_es(n);
    auto prep_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Triple& t = valid[i];
            const Vector<S> q = encode_query(*ctx.params, ctx.queries->get(t.head, t.relation));
            all_hits[i] = knn_search(*ctx.ks, q, k_max, SourceKey{t.head, t.relation},
                                     base_cfg.squared_distance);
            all_es[i] = p_es(*ctx.es, q, static_cast<S>(base_cfg.t_inf));
        }
    };
    if (threads <= 1 || n < 2) {
        prep_range(0, n);
    } else {
        const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(prep_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    SweepResult out;
    for (const int k : k_grid) {
        for (const double lambda : lambda_grid) {
            std::vector<RankResult> ranks(n);
            for (std::size_t i = 0; i < n; ++i) {
                const Triple& t = valid[i];
                std::vector<NeighborHit<S>> prefix(
                    all_hits[i].begin(),
                    all_hits[i].begin() +
                        std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(all_hits[i].size())));
                const auto deduped = dedupe_per_target(prefix);
                const Vector<S> dist = interpolate(p_ks(deduped, all_es[i].size()), all_es[i],
                                                   static_cast<S>(lambda));
                ranks[i] = RankResult{t.head, t.relation, t.tail,
                                      filtered_rank(dist, t.head, t.relation, t.tail, *ctx.filter,
                                                    ctx.tie)};
            }
            out.grid.push_back(SweepEntry{k, lambda, aggregate_ranks(ranks)});
        }
    }

    const SweepEntry* best = nullptr;
    for (const SweepEntry& e : out.grid) {
        if (!best || e.metrics.mrr > best->metrics.mrr ||
            (e.metrics.mrr == best->metrics.mrr &&
             (e.metrics.hits1 > best->metrics.hits1 ||
              (e.metrics.hits1 == best->metrics.hits1 &&
               (e.k < best->k || (e.k == best->k && e.lambda < best->lambda)))))) {
            best = &e;
        }
    }
    out.best_k = best->k;
    out.best_lambda = best->lambda;
    out.best_metrics = best->metrics;
    return out;
}

// Aligned text table in the conventional column order.
inline std::string format_metrics_table(const std::vector<std::pair<std::string, Metrics>>& rows,
                                        bool include_mean_rank = false) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "run" << std::right << std::setw(9) << "MRR"
       << std::setw(9) << "Hits@1" << std::setw(9) << "Hits@3" << std::setw(9) << "Hits@10";
    if (include_mean_rank) os << std::setw(10) << "MR";
    os << std::setw(9) << "queries" << '\n';
    os << std::setprecision(4) << std::fixed;
    for (const auto& [label, m] : rows) {
        os << std::left << std::setw(16) << label << std::right << std::setw(9) << m.mrr
           << std::setw(9) << m.hits1 << std::setw(9) << m.hits3 << std::setw(9) << m.hits10;
        if (include_mean_rank) os << std::setw(10) << std::setprecision(2) << m.mean_rank
                                  << std::setprecision(4);
        os << std::setw(9) << m.count << '\n';
    }
    return os.str();
}

inline std::string sweep_csv(const SweepResult& sweep_result) {
    std::ostringstream os;
    os << "k,lambda,MRR,Hits@1,Hits@3,Hits@10\n";
    os << std::setprecision(10);
    for (const SweepEntry& e : sweep_result.grid) {
        os << e.k << ',' << e.lambda << ',' << e.metrics.mrr << ',' << e.metrics.hits1 << ','
           << e.metrics.hits3 << ',' << e.metrics.hits10 << '\n';
    }
    return os.str();
}

}  // namespace cmr
