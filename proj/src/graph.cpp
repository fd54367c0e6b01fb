#include "branchnet/graph.hpp"

#include <stdexcept>

namespace branchnet {

Var Graph::leaf(Tensor4 value, bool track) {
    auto sp = std::make_shared<const Tensor4>(std::move(value));
    if (!recording_ || !track) return Var{sp, -1};
    nodes_.push_back(Node{});
    nodes_.back().is_leaf = true;
    return Var{sp, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::leaf(Parameter& p) {
    // Aliasing shared_ptr: shares nothing, just points at p.value.
    std::shared_ptr<const Tensor4> sp(std::shared_ptr<void>(), &p.value);
    if (!recording_) return Var{sp, -1};
    nodes_.push_back(Node{});
    nodes_.back().is_leaf = true;
    nodes_.back().sink = &p;
    return Var{sp, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Tensor4 value) {
    return Var{std::make_shared<const Tensor4>(std::move(value)), -1};
}

Var Graph::make(Tensor4 value, std::initializer_list<int> parents, BackwardFn bw) {
    return make(std::make_shared<const Tensor4>(std::move(value)),
                std::vector<int>(parents), std::move(bw));
}

Var Graph::make(std::shared_ptr<const Tensor4> value, const std::vector<int>& parents,
                BackwardFn bw) {
    bool any_tracked = false;
    for (int p : parents)
        if (p >= 0) any_tracked = true;
    if (!recording_ || !any_tracked) return Var{std::move(value), -1};
    if (consumed_) throw std::logic_error("graph already consumed by backward()");
    nodes_.push_back(Node{});
    nodes_.back().backward = std::move(bw);
    return Var{std::move(value), static_cast<int>(nodes_.size()) - 1};
}

void Graph::accumulate(int node, const Tensor4& g) {
    if (node < 0) return;
    Node& n = nodes_.at(static_cast<size_t>(node));
    if (!n.grad)
        n.grad = std::make_unique<Tensor4>(g);
    else
        n.grad->add_(g);
}

void Graph::accumulate(int node, Tensor4&& g) {
    if (node < 0) return;
    Node& n = nodes_.at(static_cast<size_t>(node));
    if (!n.grad)
        n.grad = std::make_unique<Tensor4>(std::move(g));
    else
        n.grad->add_(g);
}

void Graph::backward(const Var& out, const Tensor4& seed) {
    if (out.node < 0) throw std::logic_error("backward() on untracked value");
    if (!out.v->same_shape(seed))
        throw ShapeError("backward seed shape " + seed.shape_str() + " vs output " +
                         out.v->shape_str());
    if (consumed_) throw std::logic_error("graph already consumed by backward()");
    accumulate(out.node, seed);
    run_backward(out.node);
}

void Graph::backward(const Var& out) {
    Tensor4 seed = Tensor4::zeros_like(*out.v);
    seed.fill_(1.0f);
    backward(out, seed);
}

void Graph::backward(const std::vector<std::pair<Var, Tensor4>>& seeds) {
    if (seeds.empty()) throw std::logic_error("backward() with no seeds");
    if (consumed_) throw std::logic_error("graph already consumed by backward()");
    int top = -1;
    for (const auto& [var, seed] : seeds) {
        if (var.node < 0) throw std::logic_error("backward() on untracked value");
        if (!var.v->same_shape(seed))
            throw ShapeError("backward seed shape " + seed.shape_str() + " vs output " +
                             var.v->shape_str());
        accumulate(var.node, seed);
        if (var.node > top) top = var.node;
    }
    run_backward(top);
}

void Graph::run_backward(int from) {
    consumed_ = true;
    for (int id = from; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.grad) continue;  // node not on a path from the roots
        if (n.is_leaf) {
            if (n.sink) n.sink->grad.add_(*n.grad);
            continue;  // leaf grads stay readable via grad()
        }
        n.backward(*n.grad, *this);
        n.grad.reset();      // interior gradients are not needed again
        n.backward = nullptr;  // frees tensors captured for backward
    }
}

const Tensor4& Graph::grad(const Var& leaf) const {
    if (leaf.node < 0) throw std::logic_error("grad() on untracked value");
    const Node& n = nodes_.at(static_cast<size_t>(leaf.node));
    if (!n.is_leaf) throw std::logic_error("grad() is only retained for leaves");
    if (!n.grad) throw std::logic_error("no gradient reached this leaf");
    return *n.grad;
}

}  // namespace branchnet
