#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "branchnet/impact.hpp"
#include "branchnet/train.hpp"

namespace branchnet {

using ojson = nlohmann::ordered_json;

struct ArchConfig {
    std::string kind = "preact_resnet";  // preact_resnet | resnet18 | custom
    int depth_n = 3;                     // preact_resnet
    int base_width = 16;                 // custom
    int blocks_per_stage = 1;            // custom

    int max_spot() const;  // last branchable spot (before global pooling)
    std::unique_ptr<Network> build(int num_classes, uint64_t seed) const;
};

struct SynthConfig {
    int n_train = 2048;
    int n_test = 512;
    int size = 32;
    int num_classes = 4;
    uint64_t gen_seed = 7;
};

struct DatasetConfig {
    std::string kind = "synth";  // synth | cifar10 | cifar100 | tensor_file
    std::string path;            // cifar dir, or dir holding train.brt/test.brt
    int per_class = 0;           // 0 = all; class-balanced train subset otherwise
    SynthConfig synth;

    int num_classes() const;
    // (train, test) with train-split normalization on both
    std::pair<Dataset, Dataset> load() const;
};

struct BranchingConfig {
    int spot = 0;  // resolved index
    std::vector<TransformSpec> transforms;
};

struct ImpactConfig {
    std::string mode = "inference";  // inference | training
    TransformSpec transform;
    std::vector<int> spots;     // inference; empty = every spot + sentinel
    int spot = 0;               // training mode
    std::string checkpoint;     // inference: load instead of training first
};

struct BenchSection {
    std::vector<std::string> configs{"vanilla", "flip-1-max", "flip-2-max", "flip-3-max",
                                     "flip-4-max", "vanilla-tta-sum"};
    int batch_size = 128;
    int warmup = 10;
    int measured = 50;
    int input_size = 16;
};

// What a shorthand experiment name ("flip-3-max,sum", "vanilla-tta-geo", ...) encodes.
struct NameScheme {
    bool recognized = false;
    bool flip_only = false;
    int n = 0;  // flip-n branching count, or only-k spot offset
    Reduction train_red = Reduction::vanilla;
    Reduction infer_red = Reduction::vanilla;
    bool tta = false;
};

NameScheme parse_name_scheme(const std::string& name);

struct ExperimentConfig {
    std::string name = "vanilla";
    ArchConfig arch;
    DatasetConfig dataset;
    std::vector<BranchingConfig> branchings;
    Reduction train_reduction = Reduction::vanilla;
    Reduction infer_reduction = Reduction::vanilla;
    bool tta = false;
    AugmentPolicy augment = AugmentPolicy::none;
    OptimConfig optim;
    std::vector<uint64_t> seeds{1};
    std::string checkpoint;  // eval subcommand input
    std::optional<ImpactConfig> impact;
    std::optional<BenchSection> bench;

    BranchedModel build_model(uint64_t seed) const;
};

// Parses and validates; unknown keys anywhere are errors with field paths.
// When name follows the shorthand scheme, absent branchings/reductions/tta are
// filled in from it and present ones must agree with it.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_json(const ojson& j, const std::string& origin);

// Complete echo: every field, defaulted or not, in stable order. The
// inference fallback (none -> geo) is recorded as infer_reduction_effective.
ojson config_echo(const ExperimentConfig& cfg);

}  // namespace branchnet
