#include "branchnet/transform.hpp"

#include <cmath>
#include <cstring>

namespace branchnet {

std::string to_string(TransformKind k) {
    switch (k) {
        case TransformKind::identity: return "identity";
        case TransformKind::flip_h: return "flip_h";
        case TransformKind::rotate: return "rotate";
        case TransformKind::scale: return "scale";
    }
    return "?";
}

TransformKind transform_kind_from_string(const std::string& s) {
    if (s == "identity") return TransformKind::identity;
    if (s == "flip_h" || s == "flip") return TransformKind::flip_h;
    if (s == "rotate") return TransformKind::rotate;
    if (s == "scale") return TransformKind::scale;
    throw ConfigError("unknown transform kind '" + s + "'");
}

void TransformSpec::validate() const {
    if (kind == TransformKind::scale && factor <= 0.0)
        throw ConfigError("scale transform: factor must be > 0");
    if (random_range) {
        if (kind == TransformKind::identity || kind == TransformKind::flip_h)
            throw ConfigError("random_range only applies to rotate/scale");
        if (random_range->first > random_range->second)
            throw ConfigError("random_range: lo > hi");
        if (kind == TransformKind::scale && random_range->first <= 0.0)
            throw ConfigError("scale random_range: lo must be > 0");
    }
}

namespace {
// cos/sin of quadrant angles pick up ~1e-16 residue; snapping keeps
// 90/180/270 degree rotations exact lattice permutations
double snap_unit(double v) {
    double r = std::round(v);
    return std::abs(v - r) < 1e-12 ? r : v;
}
}  // namespace

Affine Affine::rotation_deg(double angle_deg) {
    double rad = angle_deg * M_PI / 180.0;
    double c = snap_unit(std::cos(rad)), s = snap_unit(std::sin(rad));
    // source = R(-angle) * out, so the content appears rotated by +angle
    Affine a;
    a.m00 = c;
    a.m01 = s;
    a.m10 = -s;
    a.m11 = c;
    return a;
}

Affine Affine::scaling(double factor) {
    Affine a;
    a.m00 = 1.0 / factor;
    a.m11 = 1.0 / factor;
    return a;
}

Tensor4 flip_h_tensor(const Tensor4& x) {
    Tensor4 y(x.rows, x.height, x.width, x.channels);
    const size_t C = static_cast<size_t>(x.channels);
    for (int b = 0; b < x.rows; ++b)
        for (int h = 0; h < x.height; ++h)
            for (int w = 0; w < x.width; ++w)
                std::memcpy(&y.data[y.idx(b, h, w, 0)],
                            &x.data[x.idx(b, h, x.width - 1 - w, 0)], C * sizeof(float));
    return y;
}

Tensor4 warp_tensor(const Tensor4& x, const Affine& a) {
    const int B = x.rows, H = x.height, W = x.width, C = x.channels;
    const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
    Tensor4 y(B, H, W, C);
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            double ch = h - cy, cw = w - cx;
            double sh = a.m00 * ch + a.m01 * cw + a.t0 + cy;
            double sw = a.m10 * ch + a.m11 * cw + a.t1 + cx;
            if (sh < 0.0 || sh > H - 1 || sw < 0.0 || sw > W - 1) continue;  // zero fill
            int h0 = static_cast<int>(std::floor(sh));
            int w0 = static_cast<int>(std::floor(sw));
            double fh = sh - h0, fw = sw - w0;
            if (fh == 0.0 && fw == 0.0) {
                for (int b = 0; b < B; ++b)
                    std::memcpy(&y.data[y.idx(b, h, w, 0)], &x.data[x.idx(b, h0, w0, 0)],
                                static_cast<size_t>(C) * sizeof(float));
                continue;
            }
            int h1 = std::min(h0 + 1, H - 1), w1 = std::min(w0 + 1, W - 1);
            double w00 = (1 - fh) * (1 - fw), w01 = (1 - fh) * fw;
            double w10 = fh * (1 - fw), w11 = fh * fw;
            for (int b = 0; b < B; ++b) {
                const float* p00 = &x.data[x.idx(b, h0, w0, 0)];
                const float* p01 = &x.data[x.idx(b, h0, w1, 0)];
                const float* p10 = &x.data[x.idx(b, h1, w0, 0)];
                const float* p11 = &x.data[x.idx(b, h1, w1, 0)];
                float* out = &y.data[y.idx(b, h, w, 0)];
                for (int c = 0; c < C; ++c)
                    out[c] = static_cast<float>(w00 * p00[c] + w01 * p01[c] + w10 * p10[c] +
                                                w11 * p11[c]);
            }
        }
    return y;
}

Tensor4 warp_tensor_backward(const Tensor4& dy, const Affine& a) {
    const int B = dy.rows, H = dy.height, W = dy.width, C = dy.channels;
    const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
    Tensor4 dx(B, H, W, C);
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            double ch = h - cy, cw = w - cx;
            double sh = a.m00 * ch + a.m01 * cw + a.t0 + cy;
            double sw = a.m10 * ch + a.m11 * cw + a.t1 + cx;
            if (sh < 0.0 || sh > H - 1 || sw < 0.0 || sw > W - 1) continue;
            int h0 = static_cast<int>(std::floor(sh));
            int w0 = static_cast<int>(std::floor(sw));
            double fh = sh - h0, fw = sw - w0;
            int h1 = std::min(h0 + 1, H - 1), w1 = std::min(w0 + 1, W - 1);
            double wts[4] = {(1 - fh) * (1 - fw), (1 - fh) * fw, fh * (1 - fw), fh * fw};
            int hs[4] = {h0, h0, h1, h1};
            int ws[4] = {w0, w1, w0, w1};
            for (int b = 0; b < B; ++b) {
                const float* g = &dy.data[dy.idx(b, h, w, 0)];
                for (int t = 0; t < 4; ++t) {
                    if (wts[t] == 0.0) continue;
                    float* dst = &dx.data[dx.idx(b, hs[t], ws[t], 0)];
                    for (int c = 0; c < C; ++c)
                        dst[c] += static_cast<float>(wts[t] * g[c]);
                }
            }
        }
    return dx;
}

Var flip_h(Graph& g, const Var& x) {
    Tensor4 y = flip_h_tensor(*x.v);
    int xn = x.node;
    return g.make(std::move(y), {xn}, [xn](const Tensor4& dy, Graph& gg) {
        gg.accumulate(xn, flip_h_tensor(dy));
    });
}

Var warp_bilinear(Graph& g, const Var& x, const Affine& a) {
    Tensor4 y = warp_tensor(*x.v, a);
    check_finite("warp_bilinear", y);
    int xn = x.node;
    return g.make(std::move(y), {xn}, [xn, a](const Tensor4& dy, Graph& gg) {
        gg.accumulate(xn, warp_tensor_backward(dy, a));
    });
}

Var rotate(Graph& g, const Var& x, double angle_deg) {
    return warp_bilinear(g, x, Affine::rotation_deg(angle_deg));
}

Var scale(Graph& g, const Var& x, double factor) {
    if (factor <= 0.0) throw ConfigError("scale: factor must be > 0");
    return warp_bilinear(g, x, Affine::scaling(factor));
}

Affine ResolvedTransform::affine() const {
    switch (kind) {
        case TransformKind::rotate: return Affine::rotation_deg(param);
        case TransformKind::scale: return Affine::scaling(param);
        default: return Affine::identity();
    }
}

ResolvedTransform resolve(const TransformSpec& spec, bool training, std::mt19937& rng) {
    spec.validate();
    ResolvedTransform t;
    t.kind = spec.kind;
    switch (spec.kind) {
        case TransformKind::identity:
        case TransformKind::flip_h:
            break;
        case TransformKind::rotate:
            t.param = spec.angle_deg;
            break;
        case TransformKind::scale:
            t.param = spec.factor;
            break;
    }
    if (training && spec.random_range &&
        (spec.kind == TransformKind::rotate || spec.kind == TransformKind::scale)) {
        std::uniform_real_distribution<double> d(spec.random_range->first,
                                                 spec.random_range->second);
        t.param = d(rng);
    }
    return t;
}

Tensor4 apply_resolved(const Tensor4& x, const ResolvedTransform& t) {
    switch (t.kind) {
        case TransformKind::identity: return x;
        case TransformKind::flip_h: return flip_h_tensor(x);
        case TransformKind::rotate:
        case TransformKind::scale: return warp_tensor(x, t.affine());
    }
    throw ConfigError("unreachable transform kind");
}

Var apply_transform(Graph& g, const Var& x, const TransformSpec& spec, bool training,
                    std::mt19937& rng) {
    ResolvedTransform t = resolve(spec, training, rng);
    switch (t.kind) {
        case TransformKind::identity: return x;
        case TransformKind::flip_h: return flip_h(g, x);
        case TransformKind::rotate:
        case TransformKind::scale: return warp_bilinear(g, x, t.affine());
    }
    throw ConfigError("unreachable transform kind");
}

namespace {

Tensor4 rows_slice(const Tensor4& x, int row0, int nrows) {
    Tensor4 y(nrows, x.height, x.width, x.channels);
    size_t row = static_cast<size_t>(x.height) * x.width * x.channels;
    std::memcpy(y.data.data(), x.data.data() + static_cast<size_t>(row0) * row,
                static_cast<size_t>(nrows) * row * sizeof(float));
    return y;
}

}  // namespace

Var apply_branching(Graph& g, const Var& x, const std::vector<TransformSpec>& specs,
                    bool training, std::mt19937& rng) {
    if (specs.empty()) throw ConfigError("apply_branching: empty transform list");
    const Tensor4& xt = *x.v;
    const int B = xt.rows, R = static_cast<int>(specs.size());
    std::vector<ResolvedTransform> rt;
    rt.reserve(specs.size());
    for (const auto& s : specs) rt.push_back(resolve(s, training, rng));

    Tensor4 y(R * B, xt.height, xt.width, xt.channels);
    const size_t rowsz =
        static_cast<size_t>(xt.height) * xt.width * xt.channels * static_cast<size_t>(B);
    for (int v = 0; v < R; ++v) {
        Tensor4 variant = apply_resolved(xt, rt[v]);
        std::memcpy(y.data.data() + static_cast<size_t>(v) * rowsz, variant.data.data(),
                    rowsz * sizeof(float));
    }
    check_finite("apply_branching", y);

    int xn = x.node;
    return g.make(std::move(y), {xn},
                  [xn, rt = std::move(rt), B, R](const Tensor4& dy, Graph& gg) {
        Tensor4 dx(B, dy.height, dy.width, dy.channels);
        for (int v = 0; v < R; ++v) {
            Tensor4 dv = rows_slice(dy, v * B, B);
            switch (rt[static_cast<size_t>(v)].kind) {
                case TransformKind::identity: break;
                case TransformKind::flip_h: dv = flip_h_tensor(dv); break;
                case TransformKind::rotate:
                case TransformKind::scale:
                    dv = warp_tensor_backward(dv, rt[static_cast<size_t>(v)].affine());
                    break;
            }
            dx.add_(dv);
        }
        gg.accumulate(xn, std::move(dx));
    });
}

}  // namespace branchnet
