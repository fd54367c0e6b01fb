#pragma once

#include <memory>
#include <string>
#include <vector>

#include "branchnet/train.hpp"

namespace branchnet {

struct ImpactRow {
    int spot = 0;
    std::string spot_label;
    std::string transform;
    std::string mode;  // "inference" or "training"
    double top1_err = 0.0;
    double top5_err = 0.0;
    int runs = 1;
    double stderr_top1 = 0.0;  // standard error of the mean across runs
};

// "flip_h", "rotate:15", "scale:0.9", with the training range appended when
// one is set ("rotate:15~[-20,20]").
std::string transform_desc(const TransformSpec& t);

// Every attachment point plus the trailing "no changes" sentinel.
std::vector<int> spots_with_sentinel(const Network& net);

// Applies `transform` once at each listed spot of a trained unbranched model
// and measures test error; the sentinel spot is evaluated with no transform
// at all. Deterministic transforms only (eval-mode parameters).
std::vector<ImpactRow> inference_impact(BranchedModel& model, const Dataset& test_ds,
                                        const TransformSpec& transform,
                                        const std::vector<int>& spots, int batch_size,
                                        uint64_t seed);

// Trains a fresh 2-branch model (identity + transform, random train-time
// parameters) at one spot, then evaluates with the deterministic inference
// pair. A scale transform's inference branch redraws its factor from the
// training range once per evaluation batch.
ImpactRow training_impact(std::unique_ptr<Network> net, const Dataset& train_ds,
                          const Dataset& test_ds, const OptimConfig& cfg, Reduction train_red,
                          Reduction eval_red, AugmentPolicy aug, int spot,
                          const TransformSpec& transform, uint64_t seed);

// Merges per-seed sweeps: rows are matched by (spot, transform, mode) and
// averaged; stderr_top1 is the standard error of the per-seed top-1 values.
std::vector<ImpactRow> aggregate_impact(const std::vector<std::vector<ImpactRow>>& per_seed);

struct BenchConfig {
    std::string name;
    BranchedModel* model = nullptr;
    Reduction red = Reduction::sum;
    bool tta = false;
};

struct TimingRow {
    std::string config_name;
    double ms_per_batch_median = 0.0;
    double slowdown_vs_vanilla = 1.0;
    int batch_size = 0;
    int warmup = 0;
    int measured = 0;
};

// Median eval-mode wall time per batch over `measured` batches after
// `warmup` discarded batches; slowdown is relative to the config named
// "vanilla", which must be present.
std::vector<TimingRow> benchmark(const std::vector<BenchConfig>& configs,
                                 const Tensor4& images, int warmup = 10, int measured = 50);

}  // namespace branchnet
