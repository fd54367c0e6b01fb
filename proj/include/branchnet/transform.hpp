#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "branchnet/graph.hpp"

namespace branchnet {

enum class TransformKind { identity, flip_h, rotate, scale };

std::string to_string(TransformKind k);
TransformKind transform_kind_from_string(const std::string& s);

// One in-network augmentation. rotate uses angle_deg, scale uses factor
// (<1 shrinks with a zero border, >1 enlarges and center-crops). When
// random_range is set, train-mode forwards draw the parameter from it.
struct TransformSpec {
    TransformKind kind = TransformKind::identity;
    double angle_deg = 0.0;
    double factor = 1.0;
    std::optional<std::pair<double, double>> random_range;

    void validate() const;
    static TransformSpec identity() { return {}; }
    static TransformSpec flip() { return {TransformKind::flip_h, 0.0, 1.0, {}}; }
    static TransformSpec rotation(double deg) { return {TransformKind::rotate, deg, 1.0, {}}; }
    static TransformSpec scaling(double f) { return {TransformKind::scale, 0.0, f, {}}; }
};

// Maps centered output coordinates to centered source coordinates
// (inverse mapping): src = M * out + t, rows are (h, w).
struct Affine {
    double m00 = 1, m01 = 0, t0 = 0;
    double m10 = 0, m11 = 1, t1 = 0;

    static Affine identity() { return {}; }
    static Affine rotation_deg(double angle_deg);  // source map for a rotation by angle_deg
    static Affine scaling(double factor);          // source map for a zoom by factor
};

// Plain tensor kernels (no autograd), reused by input augmentation.
Tensor4 flip_h_tensor(const Tensor4& x);
// Bilinear inverse-mapped warp; source coordinates outside
// [0,H-1]x[0,W-1] produce exactly 0. Integer source coordinates copy
// directly, so identity-like maps are bit-exact.
Tensor4 warp_tensor(const Tensor4& x, const Affine& a);
// Transpose of warp_tensor as a linear operator: scatters dy back.
Tensor4 warp_tensor_backward(const Tensor4& dy, const Affine& a);

// Differentiable wrappers.
Var flip_h(Graph& g, const Var& x);
Var warp_bilinear(Graph& g, const Var& x, const Affine& a);
Var rotate(Graph& g, const Var& x, double angle_deg);
Var scale(Graph& g, const Var& x, double factor);

// Spec with its parameter pinned for one forward pass.
struct ResolvedTransform {
    TransformKind kind = TransformKind::identity;
    double param = 0.0;  // angle_deg or factor

    Affine affine() const;  // rotate/scale only
};

// Pins the spec parameter: train mode draws from random_range when present
// (one draw, shared by every row this resolved transform is applied to).
ResolvedTransform resolve(const TransformSpec& spec, bool training, std::mt19937& rng);

Tensor4 apply_resolved(const Tensor4& x, const ResolvedTransform& t);

// Applies one transform at a spot without branching.
Var apply_transform(Graph& g, const Var& x, const TransformSpec& spec, bool training,
                    std::mt19937& rng);

// Branching function: output has specs.size() * B rows, variant-major
// (row v*B + b = specs[v] applied to input row b). Gradients of every
// variant accumulate back into x.
Var apply_branching(Graph& g, const Var& x, const std::vector<TransformSpec>& specs,
                    bool training, std::mt19937& rng);

}  // namespace branchnet
