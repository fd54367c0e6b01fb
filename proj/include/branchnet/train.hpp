#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "branchnet/core.hpp"

namespace branchnet {

struct LrStep {
    int epoch = 1;       // 1-indexed; the divide happens at the start of this epoch
    double divisor = 10;
};

struct OptimConfig {
    double lr0 = 0.1;
    double momentum = 0.9;
    bool nesterov = false;
    double weight_decay = 0.0;
    std::vector<LrStep> schedule;
    int epochs = 1;
    int batch_size = 128;

    void validate() const;
};

// lr0 divided by every scheduled divisor whose epoch is <= the given epoch.
double lr_at_epoch(const OptimConfig& cfg, int epoch);

struct SgdState {
    std::vector<Tensor4> velocity;  // one per parameter, allocated on first step
};

// v <- m*v + (g + wd*p); classic: p -= lr*v; Nesterov: p -= lr*(g + wd*p + m*v).
// Weight decay applies to every parameter.
void sgd_step(const std::vector<Parameter*>& params, SgdState& state, const OptimConfig& cfg,
              double lr);

enum class AugmentPolicy { none, cifar_standard, imagenet_standard };

std::string to_string(AugmentPolicy p);
AugmentPolicy augment_policy_from_string(const std::string& s);

// Operates on raw [0,1] images (before normalization). cifar_standard:
// zero-pad 4 + random crop + horizontal flip (p = 0.5). imagenet_standard:
// random resized crop + flip + brightness/contrast/saturation jitter with
// coefficient 0.4 (multipliers uniform in [0.6, 1.4]).
Tensor4 input_augment(const Tensor4& images, AugmentPolicy policy, std::mt19937& rng);

struct MetricsRecord {
    std::string config_name;
    std::string seed;  // integer text, or "mean" for the aggregate row
    int epoch = 0;
    std::string split;  // "train" or "test"
    double top1_err = 0.0;
    double top5_err = 0.0;
    std::optional<double> ms_per_batch;        // blank in deterministic mode
    std::optional<double> slowdown_vs_vanilla; // filled by bench runs only
};

struct TrainHooks {
    // called after each epoch with the fresh metrics rows
    std::function<void(int epoch, const MetricsRecord& train_row, const MetricsRecord& test_row)>
        on_epoch;
    std::string divergence_dump_path;  // checkpoint written here on NaN loss
    bool log_progress = false;         // one stderr line per epoch
};

struct TrainResult {
    std::vector<MetricsRecord> metrics;  // train + test row per epoch
    std::vector<double> epoch_mean_loss;
    double final_test_top1 = 0.0, final_test_top5 = 0.0;
    double best_test_top1 = 100.0;
};

TrainResult train(BranchedModel& model, const Dataset& train_ds, const Dataset& test_ds,
                  const OptimConfig& cfg, Reduction train_red, Reduction eval_red,
                  bool eval_tta, AugmentPolicy aug, uint64_t seed,
                  const std::string& config_name, const TrainHooks& hooks = {});

}  // namespace branchnet
