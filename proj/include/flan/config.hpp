#pragma once

// Run configuration: JSON parsing with strict unknown-key rejection and
// field-path error messages, canonical re-serialization, and the config
// hash that ties checkpoints to the task/model blocks that shaped them.

#include <cstdint>
#include <string>
#include <vector>

#include "flan/data.hpp"
#include "flan/interpret.hpp"
#include "flan/model.hpp"
#include "flan/train.hpp"

namespace flan {

struct TaskConfig {
    std::string source;  // csv | idx | tokens | synthetic
    // csv / tokens
    std::string path;
    DatasetSchema schema;  // csv: declared column kinds (unfitted)
    // idx
    std::string images_path, labels_path;
    int patch_size = 0;
    // tokens
    std::string alphabet;
    int max_primary = 0, max_secondary = 0;
    // synthetic
    SyntheticSpec synthetic;

    SplitSpec split;
};

struct ModelConfig {
    EncoderSpec encoder;
    std::vector<int> predictor_hidden;
    Activation predictor_activation = Activation::Tanh;
    bool predictor_bias = true;
    std::string output = "auto";  // auto | binary-logit | class-logits
};

struct InterpretConfig {
    std::vector<Provider> providers = {Provider::FlanNorm, Provider::Saliency,
                                       Provider::InputXGradient,
                                       Provider::IntegratedGradients};
    int top_k = 3;      // features shown / partial-forward prefix depth
    int match_k = 3;    // assignment K
    int neighbors = 5;  // nearest examples per query
    int ig_steps = 64;
    std::string ig_baseline = "zero";  // zero | train-mean
};

struct MetricsConfig {
    double score_tol = 1e-6;
    double effect_tol = 1e-4;
    int prototypes = 12;
    int local_k = 5;
    bool space_original = true, space_latent = true;
    bool scope_global = true, scope_local = true;
    int max_samples = 0;  // cap on evaluated test samples; 0 = all
};

struct RunConfig {
    TaskConfig task;
    ModelConfig model;
    TrainConfig train;
    InterpretConfig interpret;
    MetricsConfig metrics;
    std::vector<std::uint64_t> seeds = {0};

    std::string resolved;     // canonical JSON with every default filled in
    std::string config_hash;  // FNV-1a (hex) over the task+model blocks
};

// Throws ConfigError with the offending field path on any problem; the
// entire file is validated before any compute happens.
RunConfig parse_run_config(const std::string& text, const std::string& origin);
RunConfig load_run_config(const std::string& path);

std::uint64_t fnv1a64(const std::string& s);
std::string hash_hex(std::uint64_t h);

// Materialize the dataset / a fresh seeded model described by the config.
Dataset build_dataset(const TaskConfig& task);
FlanModel build_model(const ModelConfig& mc, const Dataset& data, std::uint64_t seed);

}  // namespace flan
