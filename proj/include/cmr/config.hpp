#pragma once
// JSON configuration: the dataset manifest naming the on-disk artifacts
// and the experiment config bundling featurizer, model, training,
// inference, and sweep settings.

#include "cmr/encoders.hpp"
#include "cmr/eval.hpp"
#include "cmr/featurize.hpp"
#include "cmr/kg.hpp"
#include "cmr/retrieval.hpp"
#include "cmr/stores.hpp"
#include "cmr/train.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cmr {

struct DatasetManifest {
    std::string dir;  // directory the manifest lives in; other paths are resolved against it
    std::string train;
    std::string valid;
    std::string test;
    std::string entity_descriptions;    // optional
    std::string relation_descriptions;  // optional
    std::string visual_features;        // optional CMRF file
    SplitMode mode = SplitMode::inductive;
    int visual_dim = 0;  // 0 = accept the feature file's dimension

    std::string resolve(const std::string& rel) const;
};

DatasetManifest load_dataset_manifest(const std::string& path);

struct ExperimentConfig {
    std::string dataset;  // manifest path
    FeaturizerConfig featurizer;
    HyperParams model;
    TrainConfig train;
    InferenceConfig inference;
    KsScope ks_scope = KsScope::train_plus_inference_graph;
    TieMode tie = TieMode::mean;
    EvalMode eval_mode = EvalMode::full;
    std::vector<int> sweep_k = {1, 8, 32};
    std::vector<double> sweep_lambda = {0.0, 0.5, 0.9, 0.95, 1.0};
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    int threads = 1;

    void validate() const;
};

// Parses and validates; unknown keys anywhere are an error so typos fail
// loudly instead of silently taking defaults.
ExperimentConfig load_experiment_config(const std::string& path);

// Hex SHA-256 of a file's bytes, used to stamp run manifests.
std::string file_content_hash(const std::string& path);

}  // namespace cmr
