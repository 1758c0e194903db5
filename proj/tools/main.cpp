// Single binary driving the whole pipeline: dataset generation,
// featurization, contrastive training, store memorization, the (k, λ)
// validation sweep, filtered-ranking evaluation, and ad-hoc inference.

#include "cmr/log.hpp"
#include "cmr/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

namespace {

struct GlobalArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    int threads = 0;
};

cmr::ExperimentConfig load_config_or_die(const GlobalArgs& g) {
    if (g.config_path.empty()) {
        throw cmr::ConfigError("this command needs --config PATH");
    }
    cmr::ExperimentConfig cfg = cmr::load_experiment_config(g.config_path);
    if (g.seed_set) {
        cfg.seed = g.seed;
        cfg.train.seed = g.seed;
    }
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (g.threads > 0) cfg.threads = g.threads;
    cfg.validate();
    return cfg;
}

void print_metrics(const std::string& label, const cmr::Metrics& m) {
    std::cout << cmr::format_metrics_table({{label, m}}, /*include_mean_rank=*/true);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"contrast-then-memorize knowledge graph completion"};
    app.require_subcommand(1);

    GlobalArgs g;
    auto* seed_opt = app.add_option("--seed", g.seed, "override the experiment seed");
    app.add_option("--config", g.config_path, "experiment config JSON");
    app.add_option("--out", g.out_dir, "override the output directory");
    app.add_option("--threads", g.threads, "override the evaluation thread count");

    cmr::SyntheticSpec spec;
    std::string gen_out = "data/synthetic";
    auto* gen = app.add_subcommand("gen-synthetic", "generate a seeded synthetic dataset");
    gen->fallthrough();
    gen->add_option("--gen-out", gen_out, "dataset output directory");
    gen->add_option("--types", spec.num_types, "latent entity types");
    gen->add_option("--entities-per-type", spec.entities_per_type, "entities per type");
    gen->add_option("--relations", spec.num_relations, "relation count");
    gen->add_option("--triples-per-relation", spec.triples_per_relation,
                    "cap per relation (0 = full structural set)");
    gen->add_option("--noise-std", spec.noise_std, "visual feature noise");
    gen->add_option("--unseen-fraction", spec.unseen_fraction, "share of unseen entities");
    gen->add_option("--visual-dim", spec.visual_dim, "visual feature width");
    gen->add_option("--groups-per-type", spec.groups_per_type, "groups inside each type");
    gen->add_option("--holdout", spec.holdout_fraction, "train share held out as valid");

    auto* featurize = app.add_subcommand("featurize", "write per-entity feature tables");
    featurize->fallthrough();
    auto* train = app.add_subcommand("train", "contrastive bi-encoder training");
    train->fallthrough();
    auto* memorize = app.add_subcommand("memorize", "build and save the knowledge/entity stores");
    memorize->fallthrough();
    auto* sweep = app.add_subcommand("sweep", "grid-search (k, lambda) on validation");
    sweep->fallthrough();

    bool use_sweep = false;
    auto* eval = app.add_subcommand("eval", "filtered ranking on the test split");
    eval->fallthrough();
    eval->add_flag("--use-sweep", use_sweep, "take (k, lambda) from the sweep artifact");

    std::string queries_path;
    int top_n = 10;
    auto* infer = app.add_subcommand("infer", "answer head<TAB>relation queries");
    infer->fallthrough();
    infer->add_option("--queries", queries_path, "query TSV file")->required();
    infer->add_option("--top", top_n, "answers per query");

    CLI11_PARSE(app, argc, argv);
    g.seed_set = seed_opt->count() > 0;

    try {
        if (app.got_subcommand(gen)) {
            const auto r = cmr::cmd_gen_synthetic(spec, g.seed, g.out_dir.empty() ? gen_out
                                                                                  : g.out_dir);
            std::cout << "dataset: " << r.num_entities << " entities (" << r.num_unseen
                      << " unseen), train/valid/test = " << r.num_train << "/" << r.num_valid
                      << "/" << r.num_test << "\nmanifest: " << r.manifest_path
                      << "\nstarter config: " << r.config_path << "\n";
        } else if (app.got_subcommand(featurize)) {
            cmr::cmd_featurize(load_config_or_die(g), g.config_path);
        } else if (app.got_subcommand(train)) {
            const cmr::ExperimentConfig cfg = load_config_or_die(g);
            const auto r = cmr::cmd_train(cfg, g.config_path);
            std::cout << "best validation Hits@1 " << r.best_hits1 << " at epoch " << r.best_epoch
                      << "; checkpoint written under " << cfg.out_dir << "\n";
        } else if (app.got_subcommand(memorize)) {
            cmr::cmd_memorize(load_config_or_die(g), g.config_path);
        } else if (app.got_subcommand(sweep)) {
            const auto r = cmr::cmd_sweep(load_config_or_die(g), g.config_path);
            std::cout << "best k = " << r.best_k << ", lambda = " << r.best_lambda << "\n";
            print_metrics("valid@best", r.best_metrics);
        } else if (app.got_subcommand(eval)) {
            const cmr::ExperimentConfig cfg = load_config_or_die(g);
            const auto m = cmr::cmd_eval(cfg, g.config_path, use_sweep);
            print_metrics("test", m);
        } else if (app.got_subcommand(infer)) {
            const cmr::ExperimentConfig cfg = load_config_or_die(g);
            cmr::cmd_infer(cfg, g.config_path, queries_path, top_n);
            std::cout << "answers written under " << cfg.out_dir << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
