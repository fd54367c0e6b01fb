#include "branchnet/core.hpp"

#include <algorithm>

namespace branchnet {

std::string to_string(Reduction r) {
    switch (r) {
        case Reduction::vanilla: return "vanilla";
        case Reduction::none: return "none";
        case Reduction::max: return "max";
        case Reduction::sum: return "sum";
        case Reduction::geo: return "geo";
    }
    return "?";
}

Reduction reduction_from_string(const std::string& s) {
    if (s == "vanilla") return Reduction::vanilla;
    if (s == "none") return Reduction::none;
    if (s == "max") return Reduction::max;
    if (s == "sum") return Reduction::sum;
    if (s == "geo") return Reduction::geo;
    throw ConfigError("unknown reduction '" + s + "'");
}

Reduction inference_reduction(Reduction r) {
    return r == Reduction::none ? Reduction::geo : r;
}

namespace {

Var combine_branches(Graph& g, const Var& probs, int R, Reduction kind) {
    switch (inference_reduction(kind)) {
        case Reduction::vanilla: return take_branch(g, probs, 0, R);
        case Reduction::max: return branch_max(g, probs, R);
        case Reduction::sum: return branch_mean(g, probs, R);
        case Reduction::geo: return branch_geo(g, probs, R);
        case Reduction::none: break;
    }
    throw ConfigError("unreachable: none maps to geo");
}

}  // namespace

Var reduce(Graph& g, const Var& probs, int R, Reduction kind) {
    if (R < 1) throw ShapeError("reduce: branch count must be >= 1");
    // renormalize each branch row first so a per-branch scale cannot tilt the combination
    Var combined = combine_branches(g, l1_normalize_channels(g, probs), R, kind);
    return l1_normalize_channels(g, combined);
}

Tensor4 reduce_tensor(const Tensor4& probs, int R, Reduction kind) {
    Graph g(false);
    return *reduce(g, g.constant(probs), R, kind).v;
}

Var branch_loss(Graph& g, const Var& probs, const std::vector<int>& labels, int R,
                Reduction kind) {
    if (probs.rows() != R * static_cast<int>(labels.size()))
        throw ShapeError("branch_loss: " + std::to_string(probs.rows()) + " rows vs " +
                         std::to_string(R) + " branches of " +
                         std::to_string(labels.size()) + " labels");
    if (kind == Reduction::none) {
        // per-branch cross-entropy averaged over all R*B rows
        std::vector<int> expanded;
        expanded.reserve(labels.size() * static_cast<size_t>(R));
        for (int v = 0; v < R; ++v) expanded.insert(expanded.end(), labels.begin(), labels.end());
        return nll_mean(g, probs, expanded);
    }
    if (kind == Reduction::vanilla)
        return nll_mean(g, take_branch(g, probs, 0, R), labels);
    // rows enter unrenormalized so max keeps routing gradients only through winning entries
    return nll_mean(g, l1_normalize_channels(g, combine_branches(g, probs, R, kind)), labels);
}

Tensor4 infer(BranchedModel& model, const Tensor4& images, Reduction kind, std::mt19937& rng,
              const std::optional<InjectedTransform>& inject) {
    Graph g(false);
    Var probs = model.forward_probs(g, images, false, rng, inject);
    return *reduce(g, probs, model.total_branches(), kind).v;
}

Tensor4 tta_infer(BranchedModel& model, const Tensor4& images, Reduction kind,
                  std::mt19937& rng) {
    Graph g(false);
    Var p_plain = model.forward_probs(g, images, false, rng);
    Var p_flip = model.forward_probs(g, flip_h_tensor(images), false, rng);
    // rows [0, R*B) then [R*B, 2R*B): still variant-major with 2R variants
    Var joint = concat_rows(g, p_plain, p_flip);
    return *reduce(g, joint, 2 * model.total_branches(), kind).v;
}

namespace {

void count_wrong(const Tensor4& probs, const std::vector<int>& labels, bool top5, int& wrong1,
                 int& wrong5) {
    const int C = probs.channels;
    for (int b = 0; b < probs.rows; ++b) {
        const float* p = probs.data.data() + static_cast<size_t>(b) * C;
        int label = labels[static_cast<size_t>(b)];
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (p[c] > p[best]) best = c;
        if (best != label) ++wrong1;
        if (top5) {
            // count of classes scoring strictly above the label
            int above = 0;
            for (int c = 0; c < C; ++c)
                if (p[c] > p[label]) ++above;
            if (above >= 5) ++wrong5;
        }
    }
}

}  // namespace

EvalResult score_probs(const Tensor4& probs, const std::vector<int>& labels,
                       int num_classes) {
    if (probs.rows != static_cast<int>(labels.size()))
        throw ShapeError("score_probs: rows vs labels mismatch");
    EvalResult r;
    r.n = probs.rows;
    int wrong1 = 0, wrong5 = 0;
    const bool top5 = num_classes > 5;
    count_wrong(probs, labels, top5, wrong1, wrong5);
    r.top1_err = 100.0 * wrong1 / std::max(r.n, 1);
    r.top5_err = top5 ? 100.0 * wrong5 / std::max(r.n, 1) : 0.0;
    return r;
}

EvalResult evaluate(BranchedModel& model, const Dataset& ds, int batch_size, Reduction kind,
                    bool tta, uint64_t seed, const std::optional<InjectedTransform>& inject,
                    const std::function<void(int)>& pre_batch) {
    if (batch_size < 1) throw ConfigError("evaluate: batch_size must be >= 1");
    std::mt19937 rng = make_rng(seed, 0xe7a1);
    int wrong1 = 0, wrong5 = 0, n = 0;
    const bool top5 = ds.num_classes > 5;
    int batch_idx = 0;
    for (int start = 0; start < ds.size(); start += batch_size, ++batch_idx) {
        int count = std::min(batch_size, ds.size() - start);
        std::vector<int> idx(static_cast<size_t>(count));
        for (int i = 0; i < count; ++i) idx[static_cast<size_t>(i)] = start + i;
        auto [images, labels] = gather_batch(ds, idx);
        if (pre_batch) pre_batch(batch_idx);
        Tensor4 probs = tta ? tta_infer(model, images, kind, rng)
                            : infer(model, images, kind, rng, inject);
        count_wrong(probs, labels, top5, wrong1, wrong5);
        n += probs.rows;
    }
    EvalResult out;
    out.n = n;
    out.top1_err = 100.0 * wrong1 / std::max(n, 1);
    out.top5_err = top5 ? 100.0 * wrong5 / std::max(n, 1) : 0.0;
    return out;
}

}  // namespace branchnet
