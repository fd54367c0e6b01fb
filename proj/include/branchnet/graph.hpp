#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "branchnet/tensor.hpp"

namespace branchnet {

class Graph;

// Value on the tape. `v` is always usable; `node` is -1 when the value is not
// being tracked (eval mode, or constants).
struct Var {
    std::shared_ptr<const Tensor4> v;
    int node = -1;

    const Tensor4& t() const { return *v; }
    int rows() const { return v->rows; }
    int height() const { return v->height; }
    int width() const { return v->width; }
    int channels() const { return v->channels; }
    bool tracked() const { return node >= 0; }
};

// Reverse-mode tape built per forward pass. Nodes are appended in execution
// order, so walking ids backwards is a valid topological order for backward.
// A graph can be consumed by backward() exactly once.
class Graph {
  public:
    using BackwardFn = std::function<void(const Tensor4& grad_out, Graph& g)>;

    explicit Graph(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    // Fresh tracked input; gradient is retained and readable via grad().
    Var leaf(Tensor4 value, bool track = true);
    // Tracked view of a parameter (no copy). backward() adds into p.grad.
    Var leaf(Parameter& p);
    // Untracked value.
    Var constant(Tensor4 value);

    // Register an op result. Drops to an untracked Var when not recording or
    // when no parent is tracked, in which case `bw` is discarded.
    Var make(Tensor4 value, std::initializer_list<int> parents, BackwardFn bw);
    Var make(std::shared_ptr<const Tensor4> value, const std::vector<int>& parents,
             BackwardFn bw);

    // Add `g` into the pending gradient of `node`. No-op for node < 0.
    void accumulate(int node, const Tensor4& g);
    void accumulate(int node, Tensor4&& g);

    void backward(const Var& out, const Tensor4& seed);
    void backward(const Var& out);  // seed of ones, for scalar outputs
    // Joint backward from several roots (gradients sum where paths meet).
    void backward(const std::vector<std::pair<Var, Tensor4>>& seeds);

    // Gradient accumulated at a leaf during backward().
    const Tensor4& grad(const Var& leaf) const;

    size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        BackwardFn backward;           // empty for leaves
        std::unique_ptr<Tensor4> grad; // pending gradient, freed for interiors
        Parameter* sink = nullptr;
        bool is_leaf = false;
    };

    void run_backward(int from);

    std::vector<Node> nodes_;
    bool recording_ = true;
    bool consumed_ = false;
};

}  // namespace branchnet
