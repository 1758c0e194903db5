#include "cmr/pipeline.hpp"

#include "cmr/io.hpp"
#include "cmr/log.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <sstream>
#include <utility>
#include <vector>

namespace cmr {

namespace {

using ordered_json = nlohmann::ordered_json;

class Stopwatch {
  public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    std::int64_t ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

using HashList = std::vector<std::pair<std::string, std::string>>;

void add_hash(HashList& list, const std::string& path) {
    if (!path.empty() && file_exists(path)) list.emplace_back(path, file_content_hash(path));
}

// Every dataset file the run consumed, hashed for the run manifest.
HashList dataset_hashes(const DatasetManifest& m, const std::string& manifest_path) {
    HashList h;
    add_hash(h, manifest_path);
    add_hash(h, m.resolve(m.train));
    add_hash(h, m.resolve(m.valid));
    add_hash(h, m.resolve(m.test));
    add_hash(h, m.resolve(m.entity_descriptions));
    add_hash(h, m.resolve(m.relation_descriptions));
    add_hash(h, m.resolve(m.visual_features));
    return h;
}

void write_run_manifest(const RunPaths& paths, const std::string& command, std::uint64_t seed,
                        const HashList& inputs, const HashList& outputs, std::int64_t timing_ms) {
    ordered_json j;
    j["command"] = command;
    j["seed"] = seed;
    ordered_json in = ordered_json::object();
    for (const auto& [path, hash] : inputs) in[path] = hash;
    ordered_json out = ordered_json::object();
    for (const auto& [path, hash] : outputs) out[path] = hash;
    j["inputs"] = in;
    j["outputs"] = out;
    j["timing_ms"] = timing_ms;
    write_text_file(paths.run_manifest(command), j.dump(2) + "\n");
}

void require_artifact(const std::string& path, const std::string& what, const std::string& hint) {
    if (!file_exists(path)) {
        throw IoError(what + " missing: " + path + " (run `cmr " + hint + "` first)");
    }
}

std::string eval_mode_name(EvalMode m) {
    switch (m) {
        case EvalMode::full: return "full";
        case EvalMode::es_only: return "es_only";
        case EvalMode::ks_only: return "ks_only";
    }
    return "?";
}

std::string tie_mode_name(TieMode m) {
    switch (m) {
        case TieMode::mean: return "mean";
        case TieMode::optimistic: return "optimistic";
        case TieMode::pessimistic: return "pessimistic";
    }
    return "?";
}

std::string ks_scope_name(KsScope s) {
    return s == KsScope::train_only ? "train_only" : "train_plus_inference_graph";
}

// The checkpoint's stored shape must agree with the configured model;
// silently evaluating a different architecture would be a footgun.
void check_hyper(const HyperParams& cfg, const HyperParams& loaded, const std::string& path) {
    const auto mismatch = [&](const char* name, long a, long b) {
        throw ConfigError(path + ": checkpoint " + name + " = " + std::to_string(b) +
                          " but config says " + std::to_string(a));
    };
    if (cfg.text_dim != loaded.text_dim) mismatch("text_dim", cfg.text_dim, loaded.text_dim);
    if (cfg.visual_dim != loaded.visual_dim)
        mismatch("visual_dim", cfg.visual_dim, loaded.visual_dim);
    if (cfg.embed_dim != loaded.embed_dim) mismatch("embed_dim", cfg.embed_dim, loaded.embed_dim);
    if (cfg.prefix_len != loaded.prefix_len)
        mismatch("prefix_len", cfg.prefix_len, loaded.prefix_len);
    if (cfg.desc_tokens != loaded.desc_tokens)
        mismatch("desc_tokens", cfg.desc_tokens, loaded.desc_tokens);
    if (cfg.hidden_dim != loaded.hidden_dim)
        mismatch("hidden_dim", cfg.hidden_dim, loaded.hidden_dim);
}

Sha256 file_sha(const std::string& path) { return sha256(read_file_bytes(path)); }

struct EvalBundle {
    std::unique_ptr<LoadedDataset> dataset;
    ModelParams<float> params;
    Sha256 checkpoint_hash{};
    DatasetManifest manifest;
    std::string manifest_path;
};

EvalBundle load_eval_bundle(const ExperimentConfig& cfg, const std::string& config_path) {
    const RunPaths paths{resolve_config_relative(cfg.out_dir, config_path)};
    require_artifact(paths.checkpoint(), "model checkpoint", "train");
    EvalBundle b;
    b.manifest_path = resolve_config_relative(cfg.dataset, config_path);
    b.manifest = load_dataset_manifest(b.manifest_path);
    b.dataset = load_dataset(b.manifest, cfg.featurizer, cfg.model.visual_dim);
    b.params = load_checkpoint(paths.checkpoint());
    check_hyper(cfg.model, b.params.hyper, paths.checkpoint());
    b.checkpoint_hash = file_sha(paths.checkpoint());
    return b;
}

void check_store_hash(const Sha256& store_hash, const Sha256& checkpoint_hash,
                      const std::string& store_path, const std::string& checkpoint_path) {
    if (store_hash != checkpoint_hash) {
        throw IntegrityError(store_path + " was built from a different checkpoint than " +
                             checkpoint_path + "; rerun memorize");
    }
}

std::string relation_display(const Vocabulary& vocab, RelationId r, std::size_t num_base) {
    if (is_reversed_relation(r, num_base)) {
        return vocab.relation(base_relation(r, num_base)).name + "_inv";
    }
    return vocab.relation(r).name;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

std::string RunPaths::join(const std::string& name) const {
    return (std::filesystem::path(out_dir) / name).string();
}

std::string resolve_config_relative(const std::string& path, const std::string& config_path) {
    if (path.empty()) return path;
    std::filesystem::path p(path);
    if (p.is_absolute() || config_path.empty()) return path;
    const std::filesystem::path base = std::filesystem::path(config_path).parent_path();
    if (base.empty()) return path;
    return (base / p).string();
}

std::unique_ptr<LoadedDataset> load_dataset(const DatasetManifest& manifest,
                                            const FeaturizerConfig& fcfg, int visual_dim) {
    auto ds = std::make_unique<LoadedDataset>();

    TripleSet train = ingest_triples(manifest.resolve(manifest.train), ds->vocab);
    TripleSet valid = ingest_triples(manifest.resolve(manifest.valid), ds->vocab);
    TripleSet test = ingest_triples(manifest.resolve(manifest.test), ds->vocab);
    ds->num_base_relations = ds->vocab.num_relations();

    if (!manifest.entity_descriptions.empty()) {
        const std::string path = manifest.resolve(manifest.entity_descriptions);
        parse_description_lines(
            read_text_file(path), path,
            [&](const std::string& name, const std::string& text) {
                if (!ds->vocab.has_entity(name)) return false;
                ds->vocab.entity(ds->vocab.entity_id(name)).description = text;
                return true;
            },
            [&](const std::string& name) {
                log_warn("entity description for unknown entity '" + name + "' ignored");
            });
    }
    if (!manifest.relation_descriptions.empty()) {
        const std::string path = manifest.resolve(manifest.relation_descriptions);
        parse_description_lines(
            read_text_file(path), path,
            [&](const std::string& name, const std::string& text) {
                if (!ds->vocab.has_relation(name)) return false;
                ds->vocab.relation(ds->vocab.relation_id(name)).description = text;
                return true;
            },
            [&](const std::string& name) {
                log_warn("relation description for unknown relation '" + name + "' ignored");
            });
    }

    FeatureTable<float> visual_table;
    const FeatureTable<float>* visual_ptr = nullptr;
    if (!manifest.visual_features.empty()) {
        const std::string path = manifest.resolve(manifest.visual_features);
        visual_table = load_feature_file<float>(path, manifest.visual_dim, ds->vocab);
        for (const EntityId id : visual_table.ids) ds->vocab.entity(id).has_image = true;
        visual_ptr = &visual_table;
    }

    const std::size_t num_entities = ds->vocab.num_entities();
    ds->splits = build_splits(add_reversed(train, ds->num_base_relations),
                              add_reversed(valid, ds->num_base_relations),
                              add_reversed(test, ds->num_base_relations), manifest.mode,
                              num_entities);
    for (const std::string& w : ds->splits.warnings) log_warn(w);

    ds->featurizer_.emplace(ds->vocab, fcfg, ds->num_base_relations);
    ds->features =
        build_dataset_features<float>(ds->vocab, *ds->featurizer_, visual_ptr, visual_dim,
                                      fcfg.seed);
    ds->train_filter = FilterIndex::from_triples(ds->splits.train);
    ds->all_filter = FilterIndex::from_splits(ds->splits);
    return ds;
}

SyntheticResult cmd_gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                  const std::string& out_dir) {
    const Stopwatch timer;
    const SyntheticResult result = generate_synthetic(spec, seed, out_dir);
    const RunPaths paths{out_dir};
    HashList outputs;
    for (const char* name : {"train.tsv", "valid.tsv", "test.tsv", "entities.tsv",
                             "relations.tsv", "visual.cmrf", "visual.cmrf.names",
                             "manifest.json", "config.json"}) {
        add_hash(outputs, paths.join(name));
    }
    write_run_manifest(paths, "gen-synthetic", seed, {}, outputs, timer.ms());
    return result;
}

void cmd_featurize(const ExperimentConfig& cfg, const std::string& config_path) {
    const Stopwatch timer;
    const std::string manifest_path = resolve_config_relative(cfg.dataset, config_path);
    const DatasetManifest manifest = load_dataset_manifest(manifest_path);
    const auto ds = load_dataset(manifest, cfg.featurizer, cfg.model.visual_dim);

    const RunPaths paths{resolve_config_relative(cfg.out_dir, config_path)};
    std::filesystem::create_directories(paths.out_dir);
    std::vector<std::string> names;
    names.reserve(ds->vocab.num_entities());
    for (std::size_t e = 0; e < ds->vocab.num_entities(); ++e) {
        names.push_back(ds->vocab.entity(static_cast<EntityId>(e)).name);
    }
    save_feature_file(paths.entity_text_features(), names, ds->features.entity_text);
    save_feature_file(paths.entity_visual_features(), names, ds->features.entity_visual);

    HashList inputs = dataset_hashes(manifest, manifest_path);
    add_hash(inputs, config_path);
    HashList outputs;
    add_hash(outputs, paths.entity_text_features());
    add_hash(outputs, paths.entity_visual_features());
    write_run_manifest(paths, "featurize", cfg.seed, inputs, outputs, timer.ms());
    log_info("featurize: wrote text and visual feature tables for " +
             std::to_string(ds->vocab.num_entities()) + " entities");
}

TrainResult<float> cmd_train(const ExperimentConfig& cfg, const std::string& config_path) {
    const Stopwatch timer;
    const std::string manifest_path = resolve_config_relative(cfg.dataset, config_path);
    const DatasetManifest manifest = load_dataset_manifest(manifest_path);
    const auto ds = load_dataset(manifest, cfg.featurizer, cfg.model.visual_dim);

    const ModelParams<float> init = init_params<float>(cfg.model, cfg.seed);
    QueryFeatureCache<float> queries(ds->featurizer());
    TrainResult<float> result = train(cfg.train, init, ds->splits, ds->features, queries,
                                      ds->train_filter, ds->all_filter, cfg.threads);

    const RunPaths paths{resolve_config_relative(cfg.out_dir, config_path)};
    std::filesystem::create_directories(paths.out_dir);
    write_text_file(paths.history(), train_history_csv(result.history));
    if (result.diverged) {
        throw NumericError("training diverged: " + result.note);
    }
    save_checkpoint(paths.checkpoint(), result.params);

    HashList inputs = dataset_hashes(manifest, manifest_path);
    add_hash(inputs, config_path);
    HashList outputs;
    add_hash(outputs, paths.checkpoint());
    add_hash(outputs, paths.history());
    write_run_manifest(paths, "train", cfg.seed, inputs, outputs, timer.ms());
    log_info("train: best validation Hits@1 " + format_double(result.best_hits1) + " at epoch " +
             std::to_string(result.best_epoch));
    return result;
}

void cmd_memorize(const ExperimentConfig& cfg, const std::string& config_path) {
    const Stopwatch timer;
    EvalBundle b = load_eval_bundle(cfg, config_path);
    const RunPaths paths{resolve_config_relative(cfg.out_dir, config_path)};
    std::filesystem::create_directories(paths.out_dir);

    const EntityStore<float> es = build_entity_store(b.params, b.dataset->features,
                                                     b.checkpoint_hash);
    save_entity_store(paths.entity_store(), es);

    QueryFeatureCache<float> queries(b.dataset->featurizer());
    const TripleSet scoped = triples_in_scope(b.dataset->splits, cfg.ks_scope);
    queries.warm(scoped);
    const KnowledgeStore<float> ks = build_knowledge_store(b.params, scoped, queries,
                                                           b.checkpoint_hash);
    save_knowledge_store(paths.knowledge_store(), ks);

    if (cfg.ks_scope == KsScope::train_only) {
        // The sweep store and the main store coincide; write both names so
        // downstream stages have a single story.
        save_knowledge_store(paths.sweep_knowledge_store(), ks);
    } else {
        // Hyperparameter sweeps score validation triples, so their inference
        // graph is the validation set itself: memorize train + valid and keep
        // test invisible to tuning. The (head, relation) retrieval filter
        // stops a query from retrieving records of its own fact.
        TripleSet sweep_scoped = b.dataset->splits.train;
        sweep_scoped.insert(sweep_scoped.end(), b.dataset->splits.valid.begin(),
                            b.dataset->splits.valid.end());
        const KnowledgeStore<float> ks_sweep =
            build_knowledge_store(b.params, sweep_scoped, queries, b.checkpoint_hash);
        save_knowledge_store(paths.sweep_knowledge_store(), ks_sweep);
    }

    HashList inputs = dataset_hashes(b.manifest, b.manifest_path);
    add_hash(inputs, config_path);
    add_hash(inputs, paths.checkpoint());
    HashList outputs;
    add_hash(outputs, paths.entity_store());
    add_hash(outputs, paths.knowledge_store());
    add_hash(outputs, paths.sweep_knowledge_store());
    write_run_manifest(paths, "memorize", cfg.seed, inputs, outputs, timer.ms());
    log_info("memorize: " + std::to_string(ks.count()) + " triples (" +
             ks_scope_name(cfg.ks_scope) + "), " + std::to_string(es.count()) + " entities");
}

SweepResult cmd_sweep(const ExperimentConfig& cfg, const std::string& config_path) {
    const Stopwatch timer;
    EvalBundle b = load_eval_bundle(cfg, config_path);
    const RunPaths paths{resolve_config_relative(cfg.out_dir, config_path)};
    std::filesystem::create_directories(paths.out_dir);
    require_artifact(paths.entity_store(), "entity store", "memorize");
    require_artifact(paths.sweep_knowledge_store(), "sweep-scope knowledge store", "memorize");
    if (b.dataset->splits.valid.empty()) {
        throw ConfigError("sweep requires validation triples, the dataset has none");
    }

    const EntityStore<float> es = load_entity_store(paths.entity_store(), cfg.model.embed_dim);
    const KnowledgeStore<float> ks =
        load_knowledge_store(paths.sweep_knowledge_store(), cfg.model.embed_dim);
    check_store_hash(es.encoder_hash, b.checkpoint_hash, paths.entity_store(),
                     paths.checkpoint());
    check_store_hash(ks.encoder_hash, b.checkpoint_hash, paths.sweep_knowledge_store(),
                     paths.checkpoint());

    QueryFeatureCache<float> queries(b.dataset->featurizer());
    EvalContext<float> ctx;
    ctx.params = &b.params;
    ctx.ks = &ks;
    ctx.es = &es;
    ctx.filter = &b.dataset->all_filter;
    ctx.queries = &queries;
    ctx.tie = cfg.tie;
    const SweepResult result = sweep(ctx, b.dataset->splits.valid, cfg.sweep_k, cfg.sweep_lambda,
                                     cfg.inference, cfg.threads);

    write_text_file(paths.sweep_grid(), sweep_csv(result));
    ordered_json best;
    best["k"] = result.best_k;
    best["lambda"] = result.best_lambda;
    best["valid_mrr"] = result.best_metrics.mrr;
    best["valid_hits1"] = result.best_metrics.hits1;
    best["valid_queries"] = result.best_metrics.count;
    write_text_file(paths.sweep_best(), best.dump(2) + "\n");

    HashList inputs = dataset_hashes(b.manifest, b.manifest_path);
    add_hash(inputs, config_path);
    add_hash(inputs, paths.checkpoint());
    add_hash(inputs, paths.entity_store());
    add_hash(inputs, paths.sweep_knowledge_store());
    HashList outputs;
    add_hash(outputs, paths.sweep_grid());
    add_hash(outputs, paths.sweep_best());
    write_run_manifest(paths, "sweep", cfg.seed, inputs, outputs, timer.ms());
    log_info("sweep: best k = " + std::to_string(result.best_k) + ", lambda = " +
             format_double(result.best_lambda) + " (valid MRR " +
             format_double(result.best_metrics.mrr) + ")");
    return result;
}

Metrics cmd_eval(const ExperimentConfig& cfg, const std::string& config_path, bool use_sweep) {
    const Stopwatch timer;
    EvalBundle b = load_eval_bundle(cfg, config_path);
    const RunPaths paths{resolve_config_relative(cfg.out_dir, config_path)};
    std::filesystem::create_directories(paths.out_dir);
    require_artifact(paths.entity_store(), "entity store", "memorize");

    InferenceConfig inference = cfg.inference;
    if (use_sweep) {
        require_artifact(paths.sweep_best(), "sweep result", "sweep");
        const ordered_json best = ordered_json::parse(read_text_file(paths.sweep_best()));
        inference.k = best.at("k").get<int>();
        inference.lambda = best.at("lambda").get<double>();
    }

    const EntityStore<float> es = load_entity_store(paths.entity_store(), cfg.model.embed_dim);
    check_store_hash(es.encoder_hash, b.checkpoint_hash, paths.entity_store(),
                     paths.checkpoint());
    KnowledgeStore<float> ks;
    const bool needs_ks = cfg.eval_mode != EvalMode::es_only;
    if (needs_ks) {
        require_artifact(paths.knowledge_store(), "knowledge store", "memorize");
        ks = load_knowledge_store(paths.knowledge_store(), cfg.model.embed_dim);
        check_store_hash(ks.encoder_hash, b.checkpoint_hash, paths.knowledge_store(),
                         paths.checkpoint());
    }

    QueryFeatureCache<float> queries(b.dataset->featurizer());
    EvalContext<float> ctx;
    ctx.params = &b.params;
    ctx.ks = needs_ks ? &ks : nullptr;
    ctx.es = &es;
    ctx.filter = &b.dataset->all_filter;
    ctx.queries = &queries;
    ctx.tie = cfg.tie;

    std::vector<RankResult> ranks;
    const Metrics metrics =
        evaluate(ctx, b.dataset->splits.test, inference, cfg.eval_mode, cfg.threads, &ranks);

    ordered_json j;
    j["mode"] = eval_mode_name(cfg.eval_mode);
    j["tie"] = tie_mode_name(cfg.tie);
    j["ks_scope"] = ks_scope_name(cfg.ks_scope);
    j["k"] = inference.k;
    j["lambda"] = inference.lambda;
    j["t_inf"] = inference.t_inf;
    j["seed"] = cfg.seed;
    ordered_json m;
    m["mrr"] = metrics.mrr;
    m["hits1"] = metrics.hits1;
    m["hits3"] = metrics.hits3;
    m["hits10"] = metrics.hits10;
    m["mean_rank"] = metrics.mean_rank;
    m["count"] = metrics.count;
    j["metrics"] = m;
    write_text_file(paths.metrics(), j.dump(2) + "\n");

    std::string rank_lines = "head\trelation\ttarget\trank\n";
    for (const RankResult& r : ranks) {
        rank_lines += b.dataset->vocab.entity(r.head).name;
        rank_lines += '\t';
        rank_lines += relation_display(b.dataset->vocab, r.relation, b.dataset->num_base_relations);
        rank_lines += '\t';
        rank_lines += b.dataset->vocab.entity(r.target).name;
        rank_lines += '\t';
        rank_lines += format_double(r.rank);
        rank_lines += '\n';
    }
    write_text_file(paths.ranks(), rank_lines);

    HashList inputs = dataset_hashes(b.manifest, b.manifest_path);
    add_hash(inputs, config_path);
    add_hash(inputs, paths.checkpoint());
    add_hash(inputs, paths.entity_store());
    if (needs_ks) add_hash(inputs, paths.knowledge_store());
    if (use_sweep) add_hash(inputs, paths.sweep_best());
    HashList outputs;
    add_hash(outputs, paths.metrics());
    add_hash(outputs, paths.ranks());
    write_run_manifest(paths, "eval", cfg.seed, inputs, outputs, timer.ms());
    log_info("eval (" + eval_mode_name(cfg.eval_mode) + "): MRR " + format_double(metrics.mrr) +
             ", Hits@1 " + format_double(metrics.hits1) + " over " +
             std::to_string(metrics.count) + " queries");
    return metrics;
}

void cmd_infer(const ExperimentConfig& cfg, const std::string& config_path,
               const std::string& queries_path, int top_n) {
    const Stopwatch timer;
    if (top_n < 1) throw ConfigError("infer: top_n must be >= 1");
    require_artifact(queries_path, "query file", "infer --queries FILE");
    EvalBundle b = load_eval_bundle(cfg, config_path);
    const RunPaths paths{resolve_config_relative(cfg.out_dir, config_path)};
    std::filesystem::create_directories(paths.out_dir);
    require_artifact(paths.entity_store(), "entity store", "memorize");

    const EntityStore<float> es = load_entity_store(paths.entity_store(), cfg.model.embed_dim);
    check_store_hash(es.encoder_hash, b.checkpoint_hash, paths.entity_store(),
                     paths.checkpoint());
    KnowledgeStore<float> ks;
    const bool needs_ks = cfg.eval_mode != EvalMode::es_only;
    if (needs_ks) {
        require_artifact(paths.knowledge_store(), "knowledge store", "memorize");
        ks = load_knowledge_store(paths.knowledge_store(), cfg.model.embed_dim);
        check_store_hash(ks.encoder_hash, b.checkpoint_hash, paths.knowledge_store(),
                         paths.checkpoint());
    }

    // Query file: head <TAB> relation, with an optional third field
    // "reversed" to ask for head prediction through the reversed relation.
    struct ParsedQuery {
        EntityId head = 0;
        RelationId relation = 0;
    };
    std::vector<ParsedQuery> parsed;
    {
        const std::string text = read_text_file(queries_path);
        std::istringstream in(text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::vector<std::string> fields;
            std::size_t start = 0;
            while (true) {
                const std::size_t tab = line.find('\t', start);
                fields.push_back(line.substr(start, tab - start));
                if (tab == std::string::npos) break;
                start = tab + 1;
            }
            const std::string where = queries_path + ":" + std::to_string(line_no);
            if (fields.size() != 2 && fields.size() != 3) {
                throw ParseError(where + ": expected head<TAB>relation[<TAB>reversed]");
            }
            if (!b.dataset->vocab.has_entity(fields[0])) {
                throw ParseError(where + ": unknown entity '" + fields[0] + "'");
            }
            if (!b.dataset->vocab.has_relation(fields[1])) {
                throw ParseError(where + ": unknown relation '" + fields[1] + "'");
            }
            ParsedQuery q;
            q.head = b.dataset->vocab.entity_id(fields[0]);
            q.relation = b.dataset->vocab.relation_id(fields[1]);
            if (fields.size() == 3) {
                if (fields[2] == "reversed") {
                    q.relation = static_cast<RelationId>(q.relation + b.dataset->num_base_relations);
                } else if (fields[2] != "forward") {
                    throw ParseError(where + ": direction must be 'forward' or 'reversed'");
                }
            }
            parsed.push_back(q);
        }
    }

    QueryFeatureCache<float> queries(b.dataset->featurizer());
    EvalContext<float> ctx;
    ctx.params = &b.params;
    ctx.ks = needs_ks ? &ks : nullptr;
    ctx.es = &es;
    ctx.filter = &b.dataset->all_filter;
    ctx.queries = &queries;
    ctx.tie = cfg.tie;

    std::string out_lines = "head\trelation\trank\tentity\tprobability\n";
    for (const ParsedQuery& pq : parsed) {
        const VectorF q = encode_query(b.params, queries.get(pq.head, pq.relation));
        const VectorF dist =
            predict_distribution(ctx, q, pq.head, pq.relation, cfg.inference, cfg.eval_mode);
        std::vector<Index> order(static_cast<std::size_t>(dist.size()));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
        const auto keep = std::min<std::size_t>(static_cast<std::size_t>(top_n), order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                          order.end(), [&](Index a, Index c) {
                              if (dist[a] != dist[c]) return dist[a] > dist[c];
                              return a < c;
                          });
        const std::string head_name = b.dataset->vocab.entity(pq.head).name;
        const std::string rel_name =
            relation_display(b.dataset->vocab, pq.relation, b.dataset->num_base_relations);
        for (std::size_t r = 0; r < keep; ++r) {
            out_lines += head_name;
            out_lines += '\t';
            out_lines += rel_name;
            out_lines += '\t';
            out_lines += std::to_string(r + 1);
            out_lines += '\t';
            out_lines += b.dataset->vocab.entity(static_cast<EntityId>(order[r])).name;
            out_lines += '\t';
            out_lines += format_double(static_cast<double>(dist[order[r]]));
            out_lines += '\n';
        }
    }
    write_text_file(paths.infer_output(), out_lines);

    HashList inputs = dataset_hashes(b.manifest, b.manifest_path);
    add_hash(inputs, config_path);
    add_hash(inputs, queries_path);
    add_hash(inputs, paths.checkpoint());
    add_hash(inputs, paths.entity_store());
    if (needs_ks) add_hash(inputs, paths.knowledge_store());
    HashList outputs;
    add_hash(outputs, paths.infer_output());
    write_run_manifest(paths, "infer", cfg.seed, inputs, outputs, timer.ms());
    log_info("infer: answered " + std::to_string(parsed.size()) + " queries (top " +
             std::to_string(top_n) + ")");
}

}  // namespace cmr
