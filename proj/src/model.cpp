#include "branchnet/model.hpp"

#include <cmath>

#include "branchnet/util.hpp"

namespace branchnet {

ConvLayer::ConvLayer(std::string name, int cout, int k, int cin, int stride_, int pad_,
                     std::mt19937& rng)
    : stride(stride_), pad(pad_) {
    float std = std::sqrt(2.0f / (static_cast<float>(k) * k * cout));  // fan-out
    w = Parameter(std::move(name), randn(cout, k, k, cin, rng, std));
}

Var ConvLayer::forward(Graph& g, const Var& x) {
    return conv2d(g, x, g.leaf(w), std::nullopt, stride, pad);
}

BNLayer::BNLayer(std::string prefix, int c)
    : gamma(prefix + ".gamma", Tensor4(1, 1, 1, c, 1.0f)),
      beta(prefix + ".beta", Tensor4(1, 1, 1, c, 0.0f)),
      running_mean(1, 1, 1, c, 0.0f),
      running_var(1, 1, 1, c, 1.0f) {}

Var BNLayer::forward(Graph& g, const Var& x, bool training) {
    return batchnorm(g, x, g.leaf(gamma), g.leaf(beta), running_mean, running_var, training,
                     momentum, eps);
}

LinearLayer::LinearLayer(std::string prefix, int cout, int cin, std::mt19937& rng) {
    float bound = 1.0f / std::sqrt(static_cast<float>(cin));
    w = Parameter(prefix + ".w", uniform(cout, 1, 1, cin, rng, -bound, bound));
    b = Parameter(prefix + ".b", uniform(1, 1, 1, cout, rng, -bound, bound));
}

Var LinearLayer::forward(Graph& g, const Var& x) {
    return linear(g, x, g.leaf(w), g.leaf(b));
}

PreactBlock::PreactBlock(const std::string& prefix, int cin, int cout, int stride,
                         std::mt19937& rng)
    : bn1(prefix + ".bn1", cin),
      bn2(prefix + ".bn2", cout),
      conv1(prefix + ".conv1.w", cout, 3, cin, stride, 1, rng),
      conv2(prefix + ".conv2.w", cout, 3, cout, 1, 1, rng) {
    if (stride != 1 || cin != cout)
        proj.emplace(prefix + ".proj.w", cout, 1, cin, stride, 0, rng);
}

Var PreactBlock::forward(Graph& g, const Var& x, bool training) {
    Var h = relu(g, bn1.forward(g, x, training));
    Var y = conv1.forward(g, h);
    y = relu(g, bn2.forward(g, y, training));
    y = conv2.forward(g, y);
    Var shortcut = proj ? proj->forward(g, h) : x;
    return add(g, y, shortcut);
}

BasicBlock::BasicBlock(const std::string& prefix, int cin, int cout, int stride,
                       std::mt19937& rng)
    : conv1(prefix + ".conv1.w", cout, 3, cin, stride, 1, rng),
      conv2(prefix + ".conv2.w", cout, 3, cout, 1, 1, rng),
      bn1(prefix + ".bn1", cout),
      bn2(prefix + ".bn2", cout) {
    if (stride != 1 || cin != cout) {
        proj.emplace(prefix + ".proj.w", cout, 1, cin, stride, 0, rng);
        proj_bn.emplace(prefix + ".proj_bn", cout);
    }
}

Var BasicBlock::forward(Graph& g, const Var& x, bool training) {
    Var y = relu(g, bn1.forward(g, conv1.forward(g, x), training));
    y = bn2.forward(g, conv2.forward(g, y), training);
    Var shortcut = proj ? proj_bn->forward(g, proj->forward(g, x), training) : x;
    return relu(g, add(g, y, shortcut));
}

std::vector<int> Network::all_spots() const {
    std::vector<int> s;
    for (int i = -1; i <= max_spot(); ++i) s.push_back(i);
    return s;
}

std::string Network::spot_label(int spot) const {
    if (spot == -1) return "input";
    if (spot == 0) return "stem";
    if (spot == sentinel_spot()) return "no_changes";
    return "block" + std::to_string(spot);
}

size_t Network::parameter_count() {
    size_t n = 0;
    for (Parameter* p : parameters()) n += p->value.size();
    return n;
}

namespace {

void collect_bn(std::vector<std::pair<std::string, Tensor4*>>& out, const std::string& prefix,
                BNLayer& bn) {
    out.emplace_back(prefix + ".gamma", &bn.gamma.value);
    out.emplace_back(prefix + ".beta", &bn.beta.value);
    out.emplace_back(prefix + ".running_mean", &bn.running_mean);
    out.emplace_back(prefix + ".running_var", &bn.running_var);
}

class PreactNet : public Network {
  public:
    PreactNet(int depth_n, int nc, uint64_t seed) : depth_n_(depth_n), nc_(nc) {
        if (depth_n < 1) throw ConfigError("preact_resnet: depth_n must be >= 1");
        std::mt19937 rng = make_rng(seed, 0x1a17);
        stem_ = ConvLayer("stem.w", 16, 3, 3, 1, 1, rng);
        int widths[3] = {16, 32, 64};
        int cin = 16, idx = 0;
        for (int stage = 0; stage < 3; ++stage)
            for (int j = 0; j < depth_n; ++j) {
                int stride = (stage > 0 && j == 0) ? 2 : 1;
                ++idx;
                blocks_.emplace_back("block" + std::to_string(idx), cin, widths[stage], stride,
                                     rng);
                cin = widths[stage];
            }
        final_bn_ = BNLayer("final_bn", 64);
        fc_ = LinearLayer("fc", nc, 64, rng);
    }

    Var forward_features(Graph& g, const Var& images, bool training,
                         const SpotHook& hook) override {
        Var x = hook(-1, images);
        x = stem_.forward(g, x);
        x = hook(0, x);
        for (size_t i = 0; i < blocks_.size(); ++i) {
            x = blocks_[i].forward(g, x, training);
            x = hook(static_cast<int>(i) + 1, x);
        }
        x = relu(g, final_bn_.forward(g, x, training));
        return x;
    }

    Var head(Graph& g, const Var& f) override { return fc_.forward(g, global_avgpool(g, f)); }

    std::vector<Parameter*> parameters() override {
        std::vector<Parameter*> ps{&stem_.w};
        for (auto& b : blocks_) {
            ps.push_back(&b.bn1.gamma);
            ps.push_back(&b.bn1.beta);
            ps.push_back(&b.conv1.w);
            ps.push_back(&b.bn2.gamma);
            ps.push_back(&b.bn2.beta);
            ps.push_back(&b.conv2.w);
            if (b.proj) ps.push_back(&b.proj->w);
        }
        ps.push_back(&final_bn_.gamma);
        ps.push_back(&final_bn_.beta);
        ps.push_back(&fc_.w);
        ps.push_back(&fc_.b);
        return ps;
    }

    std::vector<std::pair<std::string, Tensor4*>> state_tensors() override {
        std::vector<std::pair<std::string, Tensor4*>> out;
        out.emplace_back("stem.w", &stem_.w.value);
        for (size_t i = 0; i < blocks_.size(); ++i) {
            auto& b = blocks_[i];
            std::string p = "block" + std::to_string(i + 1);
            collect_bn(out, p + ".bn1", b.bn1);
            out.emplace_back(p + ".conv1.w", &b.conv1.w.value);
            collect_bn(out, p + ".bn2", b.bn2);
            out.emplace_back(p + ".conv2.w", &b.conv2.w.value);
            if (b.proj) out.emplace_back(p + ".proj.w", &b.proj->w.value);
        }
        collect_bn(out, "final_bn", final_bn_);
        out.emplace_back("fc.w", &fc_.w.value);
        out.emplace_back("fc.b", &fc_.b.value);
        return out;
    }

    int max_spot() const override { return 3 * depth_n_; }
    std::string arch_name() const override {
        return "preact_resnet" + std::to_string(6 * depth_n_ + 2);
    }
    int num_classes() const override { return nc_; }

  private:
    int depth_n_, nc_;
    ConvLayer stem_;
    std::vector<PreactBlock> blocks_;
    BNLayer final_bn_;
    LinearLayer fc_;
};

class Resnet18Net : public Network {
  public:
    Resnet18Net(int nc, uint64_t seed) : nc_(nc) {
        std::mt19937 rng = make_rng(seed, 0x1a18);
        stem_ = ConvLayer("stem.w", 64, 7, 3, 2, 3, rng);
        stem_bn_ = BNLayer("stem_bn", 64);
        int widths[4] = {64, 128, 256, 512};
        int cin = 64, idx = 0;
        for (int stage = 0; stage < 4; ++stage)
            for (int j = 0; j < 2; ++j) {
                int stride = (stage > 0 && j == 0) ? 2 : 1;
                ++idx;
                blocks_.emplace_back("block" + std::to_string(idx), cin, widths[stage], stride,
                                     rng);
                cin = widths[stage];
            }
        fc_ = LinearLayer("fc", nc, 512, rng);
    }

    Var forward_features(Graph& g, const Var& images, bool training,
                         const SpotHook& hook) override {
        Var x = hook(-1, images);
        x = relu(g, stem_bn_.forward(g, stem_.forward(g, x), training));
        x = hook(0, x);
        x = maxpool(g, x, 3, 2, 1);
        x = hook(1, x);
        for (size_t i = 0; i < blocks_.size(); ++i) {
            x = blocks_[i].forward(g, x, training);
            x = hook(static_cast<int>(i) + 2, x);
        }
        return x;
    }

    Var head(Graph& g, const Var& f) override { return fc_.forward(g, global_avgpool(g, f)); }

    std::vector<Parameter*> parameters() override {
        std::vector<Parameter*> ps{&stem_.w, &stem_bn_.gamma, &stem_bn_.beta};
        for (auto& b : blocks_) {
            ps.push_back(&b.conv1.w);
            ps.push_back(&b.bn1.gamma);
            ps.push_back(&b.bn1.beta);
            ps.push_back(&b.conv2.w);
            ps.push_back(&b.bn2.gamma);
            ps.push_back(&b.bn2.beta);
            if (b.proj) {
                ps.push_back(&b.proj->w);
                ps.push_back(&b.proj_bn->gamma);
                ps.push_back(&b.proj_bn->beta);
            }
        }
        ps.push_back(&fc_.w);
        ps.push_back(&fc_.b);
        return ps;
    }

    std::vector<std::pair<std::string, Tensor4*>> state_tensors() override {
        std::vector<std::pair<std::string, Tensor4*>> out;
        out.emplace_back("stem.w", &stem_.w.value);
        collect_bn(out, "stem_bn", stem_bn_);
        for (size_t i = 0; i < blocks_.size(); ++i) {
            auto& b = blocks_[i];
            std::string p = "block" + std::to_string(i + 1);
            out.emplace_back(p + ".conv1.w", &b.conv1.w.value);
            collect_bn(out, p + ".bn1", b.bn1);
            out.emplace_back(p + ".conv2.w", &b.conv2.w.value);
            collect_bn(out, p + ".bn2", b.bn2);
            if (b.proj) {
                out.emplace_back(p + ".proj.w", &b.proj->w.value);
                collect_bn(out, p + ".proj_bn", *b.proj_bn);
            }
        }
        out.emplace_back("fc.w", &fc_.w.value);
        out.emplace_back("fc.b", &fc_.b.value);
        return out;
    }

    int max_spot() const override { return 9; }  // stem, pool, 8 blocks
    std::string arch_name() const override { return "resnet18"; }
    int num_classes() const override { return nc_; }

    std::string spot_label(int spot) const override {
        if (spot == 1) return "pool";
        if (spot >= 2 && spot <= 9) return "block" + std::to_string(spot - 1);
        return Network::spot_label(spot);
    }

  private:
    int nc_;
    ConvLayer stem_;
    BNLayer stem_bn_;
    std::vector<BasicBlock> blocks_;
    LinearLayer fc_;
};

class CustomNet : public Network {
  public:
    CustomNet(int nc, int base_width, int blocks_per_stage, uint64_t seed) : nc_(nc) {
        if (base_width < 1 || blocks_per_stage < 1)
            throw ConfigError("custom net: width and blocks_per_stage must be >= 1");
        std::mt19937 rng = make_rng(seed, 0x1a19);
        stem_ = ConvLayer("stem.w", base_width, 3, 3, 1, 1, rng);
        stem_bn_ = BNLayer("stem_bn", base_width);
        int cin = base_width, idx = 0;
        for (int stage = 0; stage < 4; ++stage) {
            int wdt = base_width << stage;
            for (int j = 0; j < blocks_per_stage; ++j) {
                int stride = (stage > 0 && j == 0) ? 2 : 1;
                ++idx;
                blocks_.emplace_back("block" + std::to_string(idx), cin, wdt, stride, rng);
                cin = wdt;
            }
        }
        fc_ = LinearLayer("fc", nc, cin, rng);
        width_ = base_width;
    }

    Var forward_features(Graph& g, const Var& images, bool training,
                         const SpotHook& hook) override {
        Var x = hook(-1, images);
        x = relu(g, stem_bn_.forward(g, stem_.forward(g, x), training));
        x = hook(0, x);
        for (size_t i = 0; i < blocks_.size(); ++i) {
            x = blocks_[i].forward(g, x, training);
            x = hook(static_cast<int>(i) + 1, x);
        }
        return x;
    }

    Var head(Graph& g, const Var& f) override { return fc_.forward(g, global_avgpool(g, f)); }

    std::vector<Parameter*> parameters() override {
        std::vector<Parameter*> ps{&stem_.w, &stem_bn_.gamma, &stem_bn_.beta};
        for (auto& b : blocks_) {
            ps.push_back(&b.conv1.w);
            ps.push_back(&b.bn1.gamma);
            ps.push_back(&b.bn1.beta);
            ps.push_back(&b.conv2.w);
            ps.push_back(&b.bn2.gamma);
            ps.push_back(&b.bn2.beta);
            if (b.proj) {
                ps.push_back(&b.proj->w);
                ps.push_back(&b.proj_bn->gamma);
                ps.push_back(&b.proj_bn->beta);
            }
        }
        ps.push_back(&fc_.w);
        ps.push_back(&fc_.b);
        return ps;
    }

    std::vector<std::pair<std::string, Tensor4*>> state_tensors() override {
        std::vector<std::pair<std::string, Tensor4*>> out;
        out.emplace_back("stem.w", &stem_.w.value);
        collect_bn(out, "stem_bn", stem_bn_);
        for (size_t i = 0; i < blocks_.size(); ++i) {
            auto& b = blocks_[i];
            std::string p = "block" + std::to_string(i + 1);
            out.emplace_back(p + ".conv1.w", &b.conv1.w.value);
            collect_bn(out, p + ".bn1", b.bn1);
            out.emplace_back(p + ".conv2.w", &b.conv2.w.value);
            collect_bn(out, p + ".bn2", b.bn2);
            if (b.proj) {
                out.emplace_back(p + ".proj.w", &b.proj->w.value);
                collect_bn(out, p + ".proj_bn", *b.proj_bn);
            }
        }
        out.emplace_back("fc.w", &fc_.w.value);
        out.emplace_back("fc.b", &fc_.b.value);
        return out;
    }

    int max_spot() const override { return static_cast<int>(blocks_.size()); }
    std::string arch_name() const override { return "custom" + std::to_string(width_); }
    int num_classes() const override { return nc_; }

  private:
    int nc_, width_ = 0;
    ConvLayer stem_;
    BNLayer stem_bn_;
    std::vector<BasicBlock> blocks_;
    LinearLayer fc_;
};

}  // namespace

std::unique_ptr<Network> build_preact_resnet(int depth_n, int num_classes, uint64_t seed) {
    return std::make_unique<PreactNet>(depth_n, num_classes, seed);
}

std::unique_ptr<Network> build_resnet18(int num_classes, uint64_t seed) {
    return std::make_unique<Resnet18Net>(num_classes, seed);
}

std::unique_ptr<Network> build_custom(int num_classes, int base_width, int blocks_per_stage,
                                      uint64_t seed) {
    return std::make_unique<CustomNet>(num_classes, base_width, blocks_per_stage, seed);
}

std::unique_ptr<Network> build_network(const std::string& arch, int depth_n_or_width,
                                       int num_classes, uint64_t seed) {
    if (arch == "preact_resnet") return build_preact_resnet(depth_n_or_width, num_classes, seed);
    if (arch == "resnet18") return build_resnet18(num_classes, seed);
    if (arch == "custom") return build_custom(num_classes, depth_n_or_width, 1, seed);
    throw ConfigError("unknown arch '" + arch + "'");
}

int BranchedModel::total_branches() const {
    int r = 1;
    for (const auto& [spot, specs] : branchings) r *= static_cast<int>(specs.size());
    return r;
}

namespace {

Var apply_injected(Graph& g, const Var& v, const ResolvedTransform& t) {
    switch (t.kind) {
        case TransformKind::identity: return v;
        case TransformKind::flip_h: return flip_h(g, v);
        case TransformKind::rotate:
        case TransformKind::scale: return warp_bilinear(g, v, t.affine());
    }
    throw ConfigError("unreachable transform kind");
}

}  // namespace

Var BranchedModel::forward_logits(Graph& g, const Tensor4& images, bool training,
                                  std::mt19937& rng,
                                  const std::optional<InjectedTransform>& inject) {
    for (const auto& [spot, specs] : branchings) {
        if (spot < -1 || spot > net->max_spot())
            throw ConfigError("branching spot " + std::to_string(spot) +
                              " out of range for " + net->arch_name());
        if (specs.empty()) throw ConfigError("branching with empty transform list");
    }
    Var x = g.constant(images);
    SpotHook hook = [&](int spot, Var v) -> Var {
        if (inject && inject->spot == spot) v = apply_injected(g, v, inject->t);
        if (auto it = branchings.find(spot); it != branchings.end())
            v = apply_branching(g, v, it->second, training, rng);
        return v;
    };
    Var f = net->forward_features(g, x, training, hook);
    return net->head(g, f);
}

Var BranchedModel::forward_probs(Graph& g, const Tensor4& images, bool training,
                                 std::mt19937& rng,
                                 const std::optional<InjectedTransform>& inject) {
    return softmax_channels(g, forward_logits(g, images, training, rng, inject));
}

}  // namespace branchnet
