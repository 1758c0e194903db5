#include "cmr/eval.hpp"

#include "cmr/stores.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <tuple>
#include <vector>

using namespace cmr;
using namespace cmr::testing;

namespace {

// Sorting-based reference: list the surviving competitors, sort them
// descending, and read the target's position range off the sorted list.
double oracle_rank(const VectorD& dist, EntityId head, RelationId relation, EntityId target,
                   const FilterIndex& filter, TieMode tie) {
    const auto& known = filter.lookup(head, relation);
    std::vector<double> comp;
    for (Index e = 0; e < dist.size(); ++e) {
        const auto id = static_cast<EntityId>(e);
        if (id == target) continue;
        if (std::find(known.begin(), known.end(), id) != known.end()) continue;
        comp.push_back(dist[e]);
    }
    std::sort(comp.begin(), comp.end(), std::greater<double>());
    const double p = dist[static_cast<Index>(target)];
    std::size_t first = 0;
    while (first < comp.size() && comp[first] > p) ++first;
    std::size_t last = first;
    while (last < comp.size() && comp[last] == p) ++last;
    switch (tie) {
        case TieMode::optimistic: return 1.0 + static_cast<double>(first);
        case TieMode::pessimistic: return 1.0 + static_cast<double>(last);
        case TieMode::mean: break;
    }
    return 1.0 + static_cast<double>(first) + static_cast<double>(last - first) / 2.0;
}

// Small but fully real pipeline state: vocabulary, hashed features, frozen
// random encoders, both stores, and the filter over every split.
struct ToyWorld {
    Vocabulary vocab;
    FeaturizerConfig fcfg;
    std::unique_ptr<PromptFeaturizer> featurizer;
    ModelParams<double> params;
    DatasetFeatures<double> feats;
    std::unique_ptr<QueryFeatureCache<double>> queries;
    KnowledgeStore<double> ks;
    EntityStore<double> es;
    FilterIndex filter;
    TripleSet train, valid, test;

    ToyWorld(const ToyWorld&) = delete;

    explicit ToyWorld(std::uint64_t seed) {
        SplitMix64 rng(mix64(seed) ^ 0xe7a1'0000'0000'0001ULL);
        for (int i = 0; i < 12; ++i) {
            const EntityId id = vocab.add_entity("ent" + std::to_string(i));
            vocab.entity(id).description =
                "field" + std::to_string(i % 4) + " grain" + std::to_string(i);
        }
        vocab.add_relation("r0");
        vocab.relation(0).description = "ally of";
        vocab.add_relation("r1");
        vocab.relation(1).description = "rival of";

        auto draw = [&](int n) {
            TripleSet t;
            for (int i = 0; i < n; ++i) {
                t.push_back(Triple{static_cast<EntityId>(rng.next_below(12)),
                                   static_cast<RelationId>(rng.next_below(2)),
                                   static_cast<EntityId>(rng.next_below(12))});
            }
            return t;
        };
        train = add_reversed(draw(24), 2);
        valid = add_reversed(draw(8), 2);
        test = add_reversed(draw(6), 2);

        TripleSet all = train;
        all.insert(all.end(), valid.begin(), valid.end());
        all.insert(all.end(), test.begin(), test.end());
        filter = FilterIndex::from_triples(all);

        fcfg.hash_dim = tiny_hyper().text_dim;
        featurizer = std::make_unique<PromptFeaturizer>(vocab, fcfg, 2);
        params = init_params<double>(tiny_hyper(), seed);
        feats = build_dataset_features<double>(vocab, *featurizer, nullptr,
                                               tiny_hyper().visual_dim, 9);
        queries = std::make_unique<QueryFeatureCache<double>>(*featurizer);
        ks = build_knowledge_store(params, train, *queries, Sha256{});
        es = build_entity_store(params, feats, Sha256{});
    }

    EvalContext<double> ctx() {
        EvalContext<double> c;
        c.params = &params;
        c.ks = &ks;
        c.es = &es;
        c.filter = &filter;
        c.queries = queries.get();
        return c;
    }
};

bool same_metrics(const Metrics& a, const Metrics& b) {
    return a.mrr == b.mrr && a.hits1 == b.hits1 && a.hits3 == b.hits3 && a.hits10 == b.hits10 &&
           a.mean_rank == b.mean_rank && a.count == b.count;
}

}  // namespace

TEST_CASE("tie handling on a pinned distribution") {
    // Entities 0 and 4 are both known tails of (0, 0); 4 leaves the
    // competition, so target 0 races only 0.4, 0.2, and 0.1.
    VectorD dist(5);
    dist << 0.2, 0.4, 0.2, 0.1, 0.2;
    const FilterIndex with4 = FilterIndex::from_triples({{0, 0, 0}, {0, 0, 4}});
    CHECK(filtered_rank(dist, 0, 0, 0, with4, TieMode::optimistic) == 2.0);
    CHECK(filtered_rank(dist, 0, 0, 0, with4, TieMode::pessimistic) == 3.0);
    CHECK(filtered_rank(dist, 0, 0, 0, with4, TieMode::mean) == 2.5);

    // Without that filter entry, entity 4's tied probability counts again.
    const FilterIndex bare = FilterIndex::from_triples({{0, 0, 0}});
    CHECK(filtered_rank(dist, 0, 0, 0, bare, TieMode::mean) == 3.0);

    CHECK_THROWS_AS(filtered_rank(dist, 0, 0, 99, bare, TieMode::mean), InvariantError);
    VectorD poisoned = dist;
    poisoned[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(filtered_rank(poisoned, 0, 0, 0, bare, TieMode::mean), NumericError);
}

TEST_CASE("aggregates over a hand-computed rank list") {
    const std::vector<RankResult> ranks{{0, 0, 0, 1.0}, {1, 0, 1, 4.0}};
    const Metrics m = aggregate_ranks(ranks);
    CHECK(m.mrr == 0.625);
    CHECK(m.hits1 == 0.5);
    CHECK(m.hits3 == 0.5);
    CHECK(m.hits10 == 1.0);
    CHECK(m.mean_rank == 2.5);
    CHECK(m.count == 2);

    const Metrics empty = aggregate_ranks({});
    CHECK(empty.count == 0);
    CHECK(empty.mrr == 0.0);
}

TEST_CASE("filtered ranks match the sorting oracle under heavy ties") {
    SplitMix64 rng(0xc0ffee);
    const int num_entities = 50;
    TripleSet kg;
    for (int i = 0; i < 200; ++i) {
        kg.push_back(Triple{static_cast<EntityId>(rng.next_below(num_entities)),
                            static_cast<RelationId>(rng.next_below(4)),
                            static_cast<EntityId>(rng.next_below(num_entities))});
    }
    const FilterIndex filter = FilterIndex::from_triples(kg);

    for (const Triple& t : kg) {
        VectorD dist(num_entities);
        for (Index e = 0; e < num_entities; ++e) {
            dist[e] = static_cast<double>(rng.next_below(9)) / 8.0;  // eighths: exact ties abound
        }
        double mean_rank = 0.0, opt = 0.0, pes = 0.0;
        for (const TieMode tie : {TieMode::optimistic, TieMode::mean, TieMode::pessimistic}) {
            const double got = filtered_rank(dist, t.head, t.relation, t.tail, filter, tie);
            const double want = oracle_rank(dist, t.head, t.relation, t.tail, filter, tie);
            CHECK(got == want);
            if (tie == TieMode::optimistic) opt = got;
            if (tie == TieMode::mean) mean_rank = got;
            if (tie == TieMode::pessimistic) pes = got;
        }
        CHECK(opt <= mean_rank);
        CHECK(mean_rank <= pes);
        CHECK(opt >= 1.0);
    }
}

TEST_CASE("blend endpoints collapse to the single-store modes") {
    ToyWorld w(5);
    const EvalContext<double> ctx = w.ctx();

    InferenceConfig cfg;
    cfg.k = 4;

    cfg.lambda = 0.0;
    const Metrics full0 = evaluate(ctx, w.test, cfg, EvalMode::full);
    const Metrics es_only = evaluate(ctx, w.test, cfg, EvalMode::es_only);
    CHECK(same_metrics(full0, es_only));

    cfg.lambda = 1.0;
    const Metrics full1 = evaluate(ctx, w.test, cfg, EvalMode::full);
    cfg.lambda = 0.3;  // ks_only must force the blend to 1 regardless
    const Metrics ks_only = evaluate(ctx, w.test, cfg, EvalMode::ks_only);
    CHECK(same_metrics(full1, ks_only));

    CHECK(full0.count == w.test.size());
}

TEST_CASE("predicted distributions are normalized in every mode") {
    ToyWorld w(6);
    const EvalContext<double> ctx = w.ctx();
    InferenceConfig cfg;
    cfg.k = 4;
    cfg.lambda = 0.6;
    for (const EvalMode mode : {EvalMode::full, EvalMode::es_only, EvalMode::ks_only}) {
        for (std::size_t i = 0; i < w.test.size(); ++i) {
            const Triple& t = w.test[i];
            const VectorD q = encode_query(w.params, w.queries->get(t.head, t.relation));
            const VectorD dist = predict_distribution(ctx, q, t.head, t.relation, cfg, mode);
            CHECK(std::abs(dist.sum() - 1.0) < 1e-9);
            CHECK(dist.minCoeff() >= 0.0);
        }
    }
}

TEST_CASE("evaluation is independent of the worker count") {
    ToyWorld w(7);
    const EvalContext<double> ctx = w.ctx();
    InferenceConfig cfg;
    cfg.k = 6;
    cfg.lambda = 0.8;

    std::vector<RankResult> r1, r4;
    const Metrics m1 = evaluate(ctx, w.test, cfg, EvalMode::full, 1, &r1);
    const Metrics m4 = evaluate(ctx, w.test, cfg, EvalMode::full, 4, &r4);
    CHECK(same_metrics(m1, m4));
    REQUIRE(r1.size() == r4.size());
    for (std::size_t i = 0; i < r1.size(); ++i) {
        CHECK(r1[i].rank == r4[i].rank);
        CHECK(r1[i].head == w.test[i].head);
        CHECK(r1[i].target == w.test[i].tail);
    }
}

TEST_CASE("sweep cells equal direct evaluations and the best cell wins the tie-break") {
    ToyWorld w(8);
    const EvalContext<double> ctx = w.ctx();
    InferenceConfig base;

    const std::vector<int> ks{4, 8};
    const std::vector<double> lambdas{0.0, 0.5, 1.0};
    const SweepResult sw = sweep(ctx, w.valid, ks, lambdas, base);
    REQUIRE(sw.grid.size() == 6);

    std::size_t cell = 0;
    for (const int k : ks) {
        for (const double lambda : lambdas) {
            CHECK(sw.grid[cell].k == k);
            CHECK(sw.grid[cell].lambda == lambda);
            InferenceConfig cfg = base;
            cfg.k = k;
            cfg.lambda = lambda;
            const Metrics direct = evaluate(ctx, w.valid, cfg, EvalMode::full);
            CHECK(same_metrics(sw.grid[cell].metrics, direct));
            ++cell;
        }
    }

    // λ = 0 cells reproduce the pure entity-store run bit for bit.
    const Metrics es_only = evaluate(ctx, w.valid, base, EvalMode::es_only);
    CHECK(same_metrics(sw.grid[0].metrics, es_only));
    CHECK(same_metrics(sw.grid[3].metrics, es_only));

    // Independent scan with the documented preference order.
    const SweepEntry* best = nullptr;
    for (const SweepEntry& e : sw.grid) {
        if (!best) {
            best = &e;
            continue;
        }
        const auto key = [](const SweepEntry& s) {
            return std::make_tuple(s.metrics.mrr, s.metrics.hits1, -s.k, -s.lambda);
        };
        if (key(e) > key(*best)) best = &e;
    }
    CHECK(sw.best_k == best->k);
    CHECK(sw.best_lambda == best->lambda);
    CHECK(same_metrics(sw.best_metrics, best->metrics));
}

TEST_CASE("evaluation and sweep reject broken inputs") {
    ToyWorld w(9);
    InferenceConfig cfg;

    EvalContext<double> no_filter = w.ctx();
    no_filter.filter = nullptr;
    CHECK_THROWS_AS(evaluate(no_filter, w.test, cfg, EvalMode::es_only), InvariantError);

    EvalContext<double> no_ks = w.ctx();
    no_ks.ks = nullptr;
    CHECK_NOTHROW(evaluate(no_ks, w.test, cfg, EvalMode::es_only));
    CHECK_THROWS_AS(evaluate(no_ks, w.test, cfg, EvalMode::full), InvariantError);
    CHECK_THROWS_AS(sweep(no_ks, w.valid, {4}, {0.5}, cfg), InvariantError);

    const EvalContext<double> ctx = w.ctx();
    CHECK_THROWS_AS(sweep(ctx, w.valid, {}, {0.5}, cfg), ConfigError);
    CHECK_THROWS_AS(sweep(ctx, w.valid, {4}, {}, cfg), ConfigError);
    CHECK_THROWS_AS(sweep(ctx, w.valid, {0}, {0.5}, cfg), ConfigError);
    CHECK_THROWS_AS(sweep(ctx, w.valid, {4}, {1.5}, cfg), ConfigError);

    InferenceConfig bad = cfg;
    bad.lambda = 2.0;
    CHECK_THROWS_AS(evaluate(ctx, w.test, bad, EvalMode::full), ConfigError);
}

TEST_CASE("mode and tie names parse; unknown names are configuration errors") {
    CHECK(parse_tie_mode("mean") == TieMode::mean);
    CHECK(parse_tie_mode("optimistic") == TieMode::optimistic);
    CHECK(parse_tie_mode("pessimistic") == TieMode::pessimistic);
    CHECK_THROWS_AS(parse_tie_mode("median"), ConfigError);

    CHECK(parse_eval_mode("full") == EvalMode::full);
    CHECK(parse_eval_mode("es_only") == EvalMode::es_only);
    CHECK(parse_eval_mode("ks_only") == EvalMode::ks_only);
    CHECK_THROWS_AS(parse_eval_mode("hybrid"), ConfigError);
}

TEST_CASE("report tables and sweep CSV carry the expected shape") {
    Metrics m;
    m.mrr = 0.5;
    m.hits1 = 0.25;
    m.hits3 = 0.5;
    m.hits10 = 1.0;
    m.mean_rank = 3.5;
    m.count = 4;
    const std::string table = format_metrics_table({{"toy", m}}, true);
    CHECK(table.find("MRR") != std::string::npos);
    CHECK(table.find("Hits@10") != std::string::npos);
    CHECK(table.find("toy") != std::string::npos);
    CHECK(table.find("0.5000") != std::string::npos);

    SweepResult sw;
    sw.grid.push_back(SweepEntry{4, 0.25, m});
    sw.grid.push_back(SweepEntry{8, 1.0, m});
    const std::string csv = sweep_csv(sw);
    CHECK(csv.rfind("k,lambda,MRR,Hits@1,Hits@3,Hits@10\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv.find("4,0.25,") != std::string::npos);
}
