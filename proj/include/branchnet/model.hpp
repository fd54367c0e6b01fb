#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "branchnet/ops.hpp"
#include "branchnet/transform.hpp"

namespace branchnet {

struct ConvLayer {
    Parameter w;  // Cout x KH x KW x Cin
    int stride = 1, pad = 0;

    ConvLayer() = default;
    ConvLayer(std::string name, int cout, int k, int cin, int stride_, int pad_,
              std::mt19937& rng);
    Var forward(Graph& g, const Var& x);
};

struct BNLayer {
    Parameter gamma, beta;          // 1x1x1xC
    Tensor4 running_mean, running_var;
    float momentum = 0.1f, eps = 1e-5f;

    BNLayer() = default;
    BNLayer(std::string prefix, int c);
    Var forward(Graph& g, const Var& x, bool training);
};

struct LinearLayer {
    Parameter w;  // Cout x 1 x 1 x Cin
    Parameter b;  // 1x1x1xCout

    LinearLayer() = default;
    LinearLayer(std::string prefix, int cout, int cin, std::mt19937& rng);
    Var forward(Graph& g, const Var& x);
};

// BN-ReLU-conv3x3-BN-ReLU-conv3x3 with identity shortcut; stride-2 entry
// blocks project the pre-activated input with a 1x1 conv.
struct PreactBlock {
    BNLayer bn1, bn2;
    ConvLayer conv1, conv2;
    std::optional<ConvLayer> proj;

    PreactBlock(const std::string& prefix, int cin, int cout, int stride, std::mt19937& rng);
    Var forward(Graph& g, const Var& x, bool training);
};

// conv3x3-BN-ReLU-conv3x3-BN plus shortcut, ReLU after the sum.
struct BasicBlock {
    ConvLayer conv1, conv2;
    BNLayer bn1, bn2;
    std::optional<ConvLayer> proj;
    std::optional<BNLayer> proj_bn;

    BasicBlock(const std::string& prefix, int cin, int cout, int stride, std::mt19937& rng);
    Var forward(Graph& g, const Var& x, bool training);
};

// Called after the value at each spot is produced, in spot order starting at
// -1 (the input). May expand rows (branching) or transform in place.
using SpotHook = std::function<Var(int spot, Var v)>;

class Network {
  public:
    virtual ~Network() = default;

    // Runs everything before global average pooling, invoking hook at every
    // spot. head() is global_avgpool + the classifier; its output is logits.
    virtual Var forward_features(Graph& g, const Var& images, bool training,
                                 const SpotHook& hook) = 0;
    virtual Var head(Graph& g, const Var& features) = 0;

    virtual std::vector<Parameter*> parameters() = 0;
    // Every named tensor a checkpoint must carry: parameters plus BN running
    // statistics.
    virtual std::vector<std::pair<std::string, Tensor4*>> state_tensors() = 0;

    virtual int max_spot() const = 0;  // last spot = before global pooling
    virtual std::string arch_name() const = 0;
    virtual int num_classes() const = 0;

    int sentinel_spot() const { return max_spot() + 1; }  // "no changes"
    std::vector<int> all_spots() const;                   // -1 .. max_spot
    virtual std::string spot_label(int spot) const;

    size_t parameter_count();
};

std::unique_ptr<Network> build_preact_resnet(int depth_n, int num_classes, uint64_t seed);
std::unique_ptr<Network> build_resnet18(int num_classes, uint64_t seed);
// Small post-activation net: 3x3 stem, 4 stages of basic blocks with widths
// base_width * {1,2,4,8}, strides {1,2,2,2}. Suits 32..64 px inputs.
std::unique_ptr<Network> build_custom(int num_classes, int base_width, int blocks_per_stage,
                                      uint64_t seed);
std::unique_ptr<Network> build_network(const std::string& arch, int depth_n_or_width,
                                       int num_classes, uint64_t seed);

// Transform injected once at one spot (impact measurement; no branching).
struct InjectedTransform {
    int spot = 0;
    ResolvedTransform t;
};

// A network plus its branching functions: map spot -> variant list. Branch
// rows compose variant-major per spot, deepest branching outermost.
struct BranchedModel {
    std::unique_ptr<Network> net;
    std::map<int, std::vector<TransformSpec>> branchings;

    int total_branches() const;

    Var forward_logits(Graph& g, const Tensor4& images, bool training, std::mt19937& rng,
                       const std::optional<InjectedTransform>& inject = {});
    Var forward_probs(Graph& g, const Tensor4& images, bool training, std::mt19937& rng,
                      const std::optional<InjectedTransform>& inject = {});
};

}  // namespace branchnet
