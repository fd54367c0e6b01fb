#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "branchnet/data.hpp"
#include "branchnet/model.hpp"

namespace branchnet {

// How per-branch class-probability vectors combine. none averages per-branch
// losses during training; at inference it falls back to geo (the config echo
// records that substitution). vanilla takes branch 0 only.
enum class Reduction { vanilla, none, max, sum, geo };

std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& s);
// The reduction actually used at inference time (none -> geo).
Reduction inference_reduction(Reduction r);

// probs: R*B variant-major rows of distributions -> B rows. max takes the
// per-class maximum, sum the arithmetic mean, geo the geometric mean
// (log-space, clamped at 1e-12); every result is L1-renormalized.
Var reduce(Graph& g, const Var& probs, int R, Reduction kind);
Tensor4 reduce_tensor(const Tensor4& probs, int R, Reduction kind);

// labels has B entries; probs has R*B rows. none averages cross-entropy over
// all R*B rows; max/sum/geo reduce first, then take cross-entropy over the B
// reduced rows; vanilla trains branch 0 only.
Var branch_loss(Graph& g, const Var& probs, const std::vector<int>& labels, int R,
                Reduction kind);

// Eval-mode forward + reduction. images must already be normalized.
Tensor4 infer(BranchedModel& model, const Tensor4& images, Reduction kind, std::mt19937& rng,
              const std::optional<InjectedTransform>& inject = {});

// Also runs the horizontally flipped images and reduces jointly across all
// 2R branch outputs with the same reduction.
Tensor4 tta_infer(BranchedModel& model, const Tensor4& images, Reduction kind,
                  std::mt19937& rng);

struct EvalResult {
    double top1_err = 0.0;  // percent
    double top5_err = 0.0;  // percent, 0 when num_classes <= 5
    int n = 0;
};

// top-1/top-5 error over probability rows.
EvalResult score_probs(const Tensor4& probs, const std::vector<int>& labels,
                       int num_classes);

// Full-split evaluation in eval mode. pre_batch, when set, runs before each
// batch (the impact harness uses it to redraw per-batch transform parameters).
EvalResult evaluate(BranchedModel& model, const Dataset& ds, int batch_size, Reduction kind,
                    bool tta, uint64_t seed,
                    const std::optional<InjectedTransform>& inject = {},
                    const std::function<void(int)>& pre_batch = {});

}  // namespace branchnet
