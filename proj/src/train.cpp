#include "branchnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "branchnet/checkpoint.hpp"

namespace branchnet {

void OptimConfig::validate() const {
    if (lr0 <= 0.0) throw ConfigError("optim: lr0 must be > 0");
    if (epochs < 1) throw ConfigError("optim: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("optim: batch_size must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("optim: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("optim: weight_decay must be >= 0");
    int prev = 0;
    for (const auto& s : schedule) {
        if (s.epoch <= prev) throw ConfigError("optim: schedule epochs must be strictly increasing");
        if (s.divisor <= 0.0) throw ConfigError("optim: schedule divisors must be > 0");
        prev = s.epoch;
    }
}

double lr_at_epoch(const OptimConfig& cfg, int epoch) {
    double lr = cfg.lr0;
    for (const auto& s : cfg.schedule)
        if (s.epoch <= epoch) lr /= s.divisor;
    return lr;
}

void sgd_step(const std::vector<Parameter*>& params, SgdState& state, const OptimConfig& cfg,
              double lr) {
    if (state.velocity.empty()) {
        state.velocity.reserve(params.size());
        for (Parameter* p : params) state.velocity.push_back(Tensor4::zeros_like(p->value));
    }
    if (state.velocity.size() != params.size())
        throw ShapeError("sgd_step: optimizer state does not match parameter list");
    const float m = static_cast<float>(cfg.momentum);
    const float wd = static_cast<float>(cfg.weight_decay);
    const float flr = static_cast<float>(lr);
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        Tensor4& v = state.velocity[i];
        if (!p.grad.all_finite())
            throw NumericError("sgd_step: non-finite gradient for " + p.name);
        for (size_t j = 0; j < p.value.data.size(); ++j) {
            float g = p.grad.data[j] + wd * p.value.data[j];
            v.data[j] = m * v.data[j] + g;
            p.value.data[j] -= cfg.nesterov ? flr * (g + m * v.data[j]) : flr * v.data[j];
        }
    }
}

std::string to_string(AugmentPolicy p) {
    switch (p) {
        case AugmentPolicy::none: return "none";
        case AugmentPolicy::cifar_standard: return "cifar_standard";
        case AugmentPolicy::imagenet_standard: return "imagenet_standard";
    }
    return "?";
}

AugmentPolicy augment_policy_from_string(const std::string& s) {
    if (s == "none") return AugmentPolicy::none;
    if (s == "cifar_standard") return AugmentPolicy::cifar_standard;
    if (s == "imagenet_standard") return AugmentPolicy::imagenet_standard;
    throw ConfigError("unknown augment policy '" + s + "'");
}

namespace {

constexpr int kCifarPad = 4;

void cifar_augment_image(const Tensor4& in, int b, Tensor4& out, std::mt19937& rng) {
    const int H = in.height, W = in.width, C = in.channels;
    std::uniform_int_distribution<int> off(0, 2 * kCifarPad);
    std::bernoulli_distribution coin(0.5);
    int dy = off(rng), dx = off(rng);
    bool flip = coin(rng);
    for (int h = 0; h < H; ++h) {
        int sh = h + dy - kCifarPad;
        for (int w = 0; w < W; ++w) {
            int sw = w + dx - kCifarPad;
            int tw = flip ? W - 1 - w : w;
            for (int c = 0; c < C; ++c)
                out.at(b, h, tw, c) = (sh >= 0 && sh < H && sw >= 0 && sw < W)
                                          ? in.at(b, sh, sw, c)
                                          : 0.0f;
        }
    }
}

void imagenet_augment_image(const Tensor4& in, int b, Tensor4& out, std::mt19937& rng) {
    const int H = in.height, W = in.width, C = in.channels;
    std::uniform_real_distribution<double> area_frac(0.3, 1.0);
    std::uniform_real_distribution<double> log_ratio(std::log(3.0 / 4.0), std::log(4.0 / 3.0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<float> jit(0.6f, 1.4f);

    // random resized crop: try a few area/aspect draws, else center crop
    int ch = H, cw = W, top = 0, left = 0;
    for (int attempt = 0; attempt < 10; ++attempt) {
        double target_area = area_frac(rng) * H * W;
        double ratio = std::exp(log_ratio(rng));
        int tw = static_cast<int>(std::lround(std::sqrt(target_area * ratio)));
        int th = static_cast<int>(std::lround(std::sqrt(target_area / ratio)));
        if (tw < 1 || th < 1 || tw > W || th > H) continue;
        ch = th;
        cw = tw;
        top = static_cast<int>(unit(rng) * (H - th + 1));
        left = static_cast<int>(unit(rng) * (W - tw + 1));
        break;
    }
    bool flip = coin(rng);
    float ub = jit(rng), uc = jit(rng), us = jit(rng);

    // bilinear resize of the crop back to H x W
    std::vector<float> pix(static_cast<size_t>(C));
    double gray_sum = 0.0;
    Tensor4 tmp(1, H, W, C);
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            double sh = top + (ch > 1 ? static_cast<double>(h) * (ch - 1) / (H - 1) : 0.0);
            double sw = left + (cw > 1 ? static_cast<double>(w) * (cw - 1) / (W - 1) : 0.0);
            int h0 = static_cast<int>(sh), w0 = static_cast<int>(sw);
            int h1 = std::min(h0 + 1, H - 1), w1 = std::min(w0 + 1, W - 1);
            double fh = sh - h0, fw = sw - w0;
            for (int c = 0; c < C; ++c) {
                double v = (1 - fh) * (1 - fw) * in.at(b, h0, w0, c) +
                           (1 - fh) * fw * in.at(b, h0, w1, c) +
                           fh * (1 - fw) * in.at(b, h1, w0, c) + fh * fw * in.at(b, h1, w1, c);
                v *= ub;  // brightness
                tmp.at(0, h, w, c) = static_cast<float>(v);
                gray_sum += v;
            }
        }
    float gray_mean = static_cast<float>(gray_sum / (static_cast<double>(H) * W * C));
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            float luma = 0.299f * tmp.at(0, h, w, 0) + 0.587f * tmp.at(0, h, w, 1) +
                         0.114f * tmp.at(0, h, w, 2);
            int tw2 = flip ? W - 1 - w : w;
            for (int c = 0; c < C; ++c) {
                float v = tmp.at(0, h, w, c);
                v = gray_mean + (v - gray_mean) * uc;  // contrast
                v = luma + (v - luma) * us;            // saturation
                out.at(b, h, tw2, c) = std::clamp(v, 0.0f, 1.0f);
            }
        }
}

}  // namespace

Tensor4 input_augment(const Tensor4& images, AugmentPolicy policy, std::mt19937& rng) {
    if (policy == AugmentPolicy::none) return images;
    Tensor4 out(images.rows, images.height, images.width, images.channels);
    for (int b = 0; b < images.rows; ++b) {
        if (policy == AugmentPolicy::cifar_standard)
            cifar_augment_image(images, b, out, rng);
        else
            imagenet_augment_image(images, b, out, rng);
    }
    return out;
}

TrainResult train(BranchedModel& model, const Dataset& train_ds, const Dataset& test_ds,
                  const OptimConfig& cfg, Reduction train_red, Reduction eval_red,
                  bool eval_tta, AugmentPolicy aug, uint64_t seed,
                  const std::string& config_name, const TrainHooks& hooks) {
    cfg.validate();
    if (train_ds.size() < 1) throw ConfigError("train: empty training set");
    const int R = model.total_branches();
    auto params = model.net->parameters();
    SgdState state;
    TrainResult result;
    const std::string seed_str = std::to_string(seed);
    const bool blank_times = deterministic_mode();

    std::vector<int> order(static_cast<size_t>(train_ds.size()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        std::mt19937 shuffle_rng = make_rng(seed, 0x500 + static_cast<uint64_t>(epoch));
        std::mt19937 aug_rng = make_rng(seed, 0xA000 + static_cast<uint64_t>(epoch));
        std::mt19937 branch_rng = make_rng(seed, 0xB000 + static_cast<uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        int nbatches = 0, train_wrong = 0, train_seen = 0;
        double t0 = now_ms();
        for (int start = 0; start < train_ds.size(); start += cfg.batch_size) {
            int count = std::min(cfg.batch_size, train_ds.size() - start);
            std::vector<int> idx(order.begin() + start, order.begin() + start + count);
            auto [raw, labels] = gather_raw(train_ds, idx);
            Tensor4 images = normalize_images(input_augment(raw, aug, aug_rng), train_ds.mean,
                                              train_ds.stddev);
            auto diverged = [&](const std::string& detail) -> NumericError {
                if (!hooks.divergence_dump_path.empty())
                    save_checkpoint(*model.net, hooks.divergence_dump_path);
                return NumericError(
                    "training diverged (" + detail + ") at epoch " + std::to_string(epoch) +
                    (hooks.divergence_dump_path.empty()
                         ? std::string()
                         : ", state dumped to " + hooks.divergence_dump_path));
            };
            Graph g(true);
            double loss_val = 0.0;
            Var probs, loss;
            try {
                probs = model.forward_probs(g, images, true, branch_rng);
                loss = branch_loss(g, probs, labels, R, train_red);
                loss_val = loss.t().data[0];
            } catch (const NumericError& e) {
                throw diverged(e.what());
            }
            if (!std::isfinite(loss_val)) throw diverged("non-finite loss");
            loss_sum += loss_val;
            ++nbatches;
            // train-split error from the same forward pass
            Tensor4 reduced = reduce_tensor(probs.t(), R, inference_reduction(train_red));
            for (int i = 0; i < reduced.rows; ++i) {
                const float* p = reduced.data.data() + static_cast<size_t>(i) * reduced.channels;
                int best = 0;
                for (int c = 1; c < reduced.channels; ++c)
                    if (p[c] > p[best]) best = c;
                if (best != labels[static_cast<size_t>(i)]) ++train_wrong;
                ++train_seen;
            }
            for (Parameter* p : params) p->zero_grad();
            g.backward(loss, Tensor4::scalar(1.0f));
            sgd_step(params, state, cfg, lr);
        }
        double epoch_ms = now_ms() - t0;
        result.epoch_mean_loss.push_back(loss_sum / std::max(nbatches, 1));

        MetricsRecord train_row;
        train_row.config_name = config_name;
        train_row.seed = seed_str;
        train_row.epoch = epoch;
        train_row.split = "train";
        train_row.top1_err = 100.0 * train_wrong / std::max(train_seen, 1);
        train_row.top5_err = 0.0;
        if (!blank_times) train_row.ms_per_batch = epoch_ms / std::max(nbatches, 1);

        double te0 = now_ms();
        EvalResult ev = evaluate(model, test_ds, cfg.batch_size, eval_red, eval_tta, seed);
        double test_ms = now_ms() - te0;
        int test_batches = (test_ds.size() + cfg.batch_size - 1) / cfg.batch_size;
        MetricsRecord test_row;
        test_row.config_name = config_name;
        test_row.seed = seed_str;
        test_row.epoch = epoch;
        test_row.split = "test";
        test_row.top1_err = ev.top1_err;
        test_row.top5_err = ev.top5_err;
        if (!blank_times) test_row.ms_per_batch = test_ms / std::max(test_batches, 1);

        result.metrics.push_back(train_row);
        result.metrics.push_back(test_row);
        result.final_test_top1 = ev.top1_err;
        result.final_test_top5 = ev.top5_err;
        result.best_test_top1 = std::min(result.best_test_top1, ev.top1_err);
        if (hooks.log_progress)
            std::fprintf(stderr, "[%s] epoch %d/%d lr %.4g loss %.4f train_err %.2f test_err %.2f\n",
                         config_name.c_str(), epoch, cfg.epochs, lr,
                         result.epoch_mean_loss.back(), train_row.top1_err, ev.top1_err);
        if (hooks.on_epoch) hooks.on_epoch(epoch, train_row, test_row);
    }
    return result;
}

}  // namespace branchnet
