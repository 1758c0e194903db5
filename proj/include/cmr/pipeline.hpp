#pragma once
// End-to-end orchestration: dataset assembly from a manifest, and the
// command bodies behind the CLI (featurize, train, memorize, sweep, eval,
// infer, synthetic generation). Each command writes its artifacts under
// the configured output directory together with a hashed run manifest.

#include "cmr/config.hpp"
#include "cmr/dataset.hpp"
#include "cmr/eval.hpp"
#include "cmr/featurize.hpp"
#include "cmr/kg.hpp"
#include "cmr/stores.hpp"
#include "cmr/synthetic.hpp"
#include "cmr/train.hpp"
#include "cmr/types.hpp"

#include <memory>
#include <optional>
#include <string>

namespace cmr {

// A dataset with everything downstream stages need: shared vocabulary,
// reversed-extended splits, per-entity features, and filter indices. The
// featurizer points into the vocabulary, so the bundle is pinned in place.
struct LoadedDataset {
    Vocabulary vocab;
    GraphSplit splits;  // reversed forms included in every split
    std::size_t num_base_relations = 0;
    DatasetFeatures<float> features;
    FilterIndex train_filter;  // train triples only; masks false negatives
    FilterIndex all_filter;    // every split; drives filtered ranking

    LoadedDataset() = default;
    LoadedDataset(const LoadedDataset&) = delete;
    LoadedDataset& operator=(const LoadedDataset&) = delete;

    const PromptFeaturizer& featurizer() const { return *featurizer_; }

    std::optional<PromptFeaturizer> featurizer_;  // set by load_dataset
};

std::unique_ptr<LoadedDataset> load_dataset(const DatasetManifest& manifest,
                                            const FeaturizerConfig& fcfg, int visual_dim);

// Artifact locations under one output directory.
struct RunPaths {
    std::string out_dir;

    std::string checkpoint() const { return join("checkpoint.cmrp"); }
    std::string history() const { return join("train_history.csv"); }
    std::string entity_text_features() const { return join("entity_text.cmrf"); }
    std::string entity_visual_features() const { return join("entity_visual.cmrf"); }
    std::string knowledge_store() const { return join("ks.cmrs"); }
    std::string sweep_knowledge_store() const { return join("ks_sweep.cmrs"); }
    std::string entity_store() const { return join("es.cmrs"); }
    std::string metrics() const { return join("metrics.json"); }
    std::string ranks() const { return join("ranks.tsv"); }
    std::string sweep_grid() const { return join("sweep.csv"); }
    std::string sweep_best() const { return join("sweep_best.json"); }
    std::string infer_output() const { return join("infer.tsv"); }
    std::string run_manifest(const std::string& command) const {
        return join("run_" + command + ".json");
    }

    std::string join(const std::string& name) const;
};

// Resolves a possibly relative path against the directory of the config
// file it came from (current directory when no config file was involved).
std::string resolve_config_relative(const std::string& path, const std::string& config_path);

// Command bodies. They throw on failure (missing prerequisites name the
// missing artifact); the CLI maps exceptions to a nonzero exit status.
// `config_path` may be empty for programmatic use; when set it is hashed
// into the run manifest.
SyntheticResult cmd_gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                  const std::string& out_dir);
void cmd_featurize(const ExperimentConfig& cfg, const std::string& config_path);
TrainResult<float> cmd_train(const ExperimentConfig& cfg, const std::string& config_path);
void cmd_memorize(const ExperimentConfig& cfg, const std::string& config_path);
SweepResult cmd_sweep(const ExperimentConfig& cfg, const std::string& config_path);
// use_sweep pulls (k, lambda) from the sweep_best artifact.
Metrics cmd_eval(const ExperimentConfig& cfg, const std::string& config_path, bool use_sweep);
void cmd_infer(const ExperimentConfig& cfg, const std::string& config_path,
               const std::string& queries_path, int top_n);

}  // namespace cmr
