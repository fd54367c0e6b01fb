#include "branchnet/ops.hpp"

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <cstring>
#include <limits>

namespace branchnet {

namespace {

void require_same_shape(const char* op, const Tensor4& a, const Tensor4& b) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

constexpr double kProbFloor = 1e-12;

}  // namespace

Var add(Graph& g, const Var& a, const Var& b) {
    require_same_shape("add", *a.v, *b.v);
    Tensor4 y = *a.v;
    y.add_(*b.v);
    check_finite("add", y);
    int an = a.node, bn = b.node;
    return g.make(std::move(y), {an, bn}, [an, bn](const Tensor4& dy, Graph& gg) {
        gg.accumulate(an, dy);
        gg.accumulate(bn, dy);
    });
}

Var mul(Graph& g, const Var& a, const Var& b) {
    require_same_shape("mul", *a.v, *b.v);
    Tensor4 y = *a.v;
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= b.v->data[i];
    check_finite("mul", y);
    int an = a.node, bn = b.node;
    auto av = a.v, bv = b.v;
    return g.make(std::move(y), {an, bn}, [an, bn, av, bv](const Tensor4& dy, Graph& gg) {
        if (an >= 0) {
            Tensor4 da = dy;
            for (size_t i = 0; i < da.data.size(); ++i) da.data[i] *= bv->data[i];
            gg.accumulate(an, std::move(da));
        }
        if (bn >= 0) {
            Tensor4 db = dy;
            for (size_t i = 0; i < db.data.size(); ++i) db.data[i] *= av->data[i];
            gg.accumulate(bn, std::move(db));
        }
    });
}

Var mul_scalar(Graph& g, const Var& a, float s) {
    Tensor4 y = *a.v;
    y.scale_(s);
    check_finite("mul_scalar", y);
    int an = a.node;
    return g.make(std::move(y), {an}, [an, s](const Tensor4& dy, Graph& gg) {
        Tensor4 da = dy;
        da.scale_(s);
        gg.accumulate(an, std::move(da));
    });
}

Var relu(Graph& g, const Var& x) {
    Tensor4 y = *x.v;
    for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
    check_finite("relu", y);
    int xn = x.node;
    auto xv = x.v;
    return g.make(std::move(y), {xn}, [xn, xv](const Tensor4& dy, Graph& gg) {
        Tensor4 dx = dy;
        for (size_t i = 0; i < dx.data.size(); ++i)
            if (xv->data[i] <= 0.0f) dx.data[i] = 0.0f;
        gg.accumulate(xn, std::move(dx));
    });
}

// ---------------------------------------------------------------------------
// conv2d: im2col + SGEMM, chunked over output rows to bound the patch buffer.

namespace {

struct ConvDims {
    int B, H, W, Cin, Cout, KH, KW, stride, pad, Ho, Wo;
    size_t K() const { return static_cast<size_t>(KH) * KW * Cin; }
    size_t M() const { return static_cast<size_t>(B) * Ho * Wo; }
};

ConvDims conv_dims(const Tensor4& x, const Tensor4& w, int stride, int pad) {
    if (x.channels != w.channels)
        throw ShapeError("conv2d: input channels " + x.shape_str() + " vs weight " +
                         w.shape_str());
    if (stride < 1 || pad < 0) throw ShapeError("conv2d: bad stride/pad");
    ConvDims d{x.rows, x.height, x.width, x.channels, w.rows,
               w.height, w.width, stride,   pad,       0, 0};
    d.Ho = (x.height + 2 * pad - w.height) / stride + 1;
    d.Wo = (x.width + 2 * pad - w.width) / stride + 1;
    if (d.Ho < 1 || d.Wo < 1)
        throw ShapeError("conv2d: kernel " + w.shape_str() + " larger than padded input " +
                         x.shape_str());
    return d;
}

size_t conv_chunk_rows(const ConvDims& d) {
    size_t budget = 64u << 20;  // bytes for the patch matrix
    size_t rows = budget / (d.K() * sizeof(float));
    return std::max<size_t>(rows, 1);
}

// Fills A (mc x K) with patches for output rows [m0, m0+mc), m in sample-major
// order m = (b*Ho + ho)*Wo + wo. Out-of-image taps are zero.
void im2col_rows(const Tensor4& x, const ConvDims& d, size_t m0, size_t mc, float* A) {
    const size_t K = d.K();
    const size_t strip = static_cast<size_t>(d.KW) * d.Cin;
    for (size_t r = 0; r < mc; ++r) {
        size_t m = m0 + r;
        int b = static_cast<int>(m / (static_cast<size_t>(d.Ho) * d.Wo));
        int rem = static_cast<int>(m % (static_cast<size_t>(d.Ho) * d.Wo));
        int ho = rem / d.Wo, wo = rem % d.Wo;
        int h0 = ho * d.stride - d.pad;
        int w0 = wo * d.stride - d.pad;
        float* row = A + r * K;
        for (int kh = 0; kh < d.KH; ++kh) {
            float* dst = row + static_cast<size_t>(kh) * strip;
            int h = h0 + kh;
            if (h < 0 || h >= d.H) {
                std::memset(dst, 0, strip * sizeof(float));
                continue;
            }
            int wlo = std::clamp(-w0, 0, d.KW);            // first valid kw
            int whi = std::clamp(d.W - w0, wlo, d.KW);     // one past last valid kw
            if (wlo > 0) std::memset(dst, 0, static_cast<size_t>(wlo) * d.Cin * sizeof(float));
            if (whi < d.KW)
                std::memset(dst + static_cast<size_t>(whi) * d.Cin, 0,
                            static_cast<size_t>(d.KW - whi) * d.Cin * sizeof(float));
            if (whi > wlo)
                std::memcpy(dst + static_cast<size_t>(wlo) * d.Cin,
                            &x.data[x.idx(b, h, w0 + wlo, 0)],
                            static_cast<size_t>(whi - wlo) * d.Cin * sizeof(float));
        }
    }
}

// Scatter-add of dA (mc x K) back into dx; exact mirror of im2col_rows.
void col2im_rows(const float* dA, const ConvDims& d, size_t m0, size_t mc, Tensor4& dx) {
    const size_t K = d.K();
    for (size_t r = 0; r < mc; ++r) {
        size_t m = m0 + r;
        int b = static_cast<int>(m / (static_cast<size_t>(d.Ho) * d.Wo));
        int rem = static_cast<int>(m % (static_cast<size_t>(d.Ho) * d.Wo));
        int ho = rem / d.Wo, wo = rem % d.Wo;
        int h0 = ho * d.stride - d.pad;
        int w0 = wo * d.stride - d.pad;
        const float* row = dA + r * K;
        for (int kh = 0; kh < d.KH; ++kh) {
            int h = h0 + kh;
            if (h < 0 || h >= d.H) continue;
            int wlo = std::clamp(-w0, 0, d.KW);
            int whi = std::clamp(d.W - w0, wlo, d.KW);
            if (whi <= wlo) continue;
            const float* src = row + (static_cast<size_t>(kh) * d.KW + wlo) * d.Cin;
            float* dst = &dx.data[dx.idx(b, h, w0 + wlo, 0)];
            size_t n = static_cast<size_t>(whi - wlo) * d.Cin;
            for (size_t i = 0; i < n; ++i) dst[i] += src[i];
        }
    }
}

}  // namespace

Var conv2d(Graph& g, const Var& x, const Var& weight, const std::optional<Var>& bias,
           int stride, int pad) {
    const ConvDims d = conv_dims(*x.v, *weight.v, stride, pad);
    const size_t K = d.K(), M = d.M();
    if (bias && (bias->v->size() != static_cast<size_t>(d.Cout)))
        throw ShapeError("conv2d: bias size " + bias->v->shape_str() + " vs Cout " +
                         std::to_string(d.Cout));

    Tensor4 y(d.B, d.Ho, d.Wo, d.Cout);
    const size_t chunk = conv_chunk_rows(d);
    std::vector<float> A(std::min(chunk, M) * K);
    for (size_t m0 = 0; m0 < M; m0 += chunk) {
        size_t mc = std::min(chunk, M - m0);
        im2col_rows(*x.v, d, m0, mc, A.data());
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(mc), d.Cout,
                    static_cast<int>(K), 1.0f, A.data(), static_cast<int>(K),
                    weight.v->data.data(), static_cast<int>(K), 0.0f,
                    y.data.data() + m0 * d.Cout, d.Cout);
    }
    if (bias) {
        const float* bb = bias->v->data.data();
        float* yy = y.data.data();
        for (size_t m = 0; m < M; ++m)
            for (int c = 0; c < d.Cout; ++c) yy[m * d.Cout + c] += bb[c];
    }
    check_finite("conv2d", y);

    int xn = x.node, wn = weight.node, bn = bias ? bias->node : -1;
    auto xv = x.v, wv = weight.v;
    return g.make(std::move(y), {xn, wn, bn},
                  [xn, wn, bn, xv, wv, d](const Tensor4& dy, Graph& gg) {
        const size_t K = d.K(), M = d.M();
        const size_t chunk = conv_chunk_rows(d);
        std::vector<float> A, dA;
        Tensor4 dw, dx;
        if (wn >= 0) dw = Tensor4(d.Cout, d.KH, d.KW, d.Cin);
        if (xn >= 0) { dx = Tensor4(d.B, d.H, d.W, d.Cin); dA.resize(std::min(chunk, M) * K); }
        if (wn >= 0 || xn >= 0) A.resize(std::min(chunk, M) * K);
        for (size_t m0 = 0; m0 < M && (wn >= 0 || xn >= 0); m0 += chunk) {
            size_t mc = std::min(chunk, M - m0);
            const float* dyc = dy.data.data() + m0 * d.Cout;
            if (wn >= 0) {
                im2col_rows(*xv, d, m0, mc, A.data());
                cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, d.Cout,
                            static_cast<int>(K), static_cast<int>(mc), 1.0f, dyc, d.Cout,
                            A.data(), static_cast<int>(K), 1.0f, dw.data.data(),
                            static_cast<int>(K));
            }
            if (xn >= 0) {
                cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(mc),
                            static_cast<int>(K), d.Cout, 1.0f, dyc, d.Cout,
                            wv->data.data(), static_cast<int>(K), 0.0f, dA.data(),
                            static_cast<int>(K));
                col2im_rows(dA.data(), d, m0, mc, dx);
            }
        }
        if (bn >= 0) {
            Tensor4 db(1, 1, 1, d.Cout);
            std::vector<double> acc(static_cast<size_t>(d.Cout), 0.0);
            const float* dd = dy.data.data();
            for (size_t m = 0; m < M; ++m)
                for (int c = 0; c < d.Cout; ++c) acc[c] += dd[m * d.Cout + c];
            for (int c = 0; c < d.Cout; ++c) db.data[c] = static_cast<float>(acc[c]);
            gg.accumulate(bn, std::move(db));
        }
        if (wn >= 0) gg.accumulate(wn, std::move(dw));
        if (xn >= 0) gg.accumulate(xn, std::move(dx));
    });
}

// ---------------------------------------------------------------------------

Var batchnorm(Graph& g, const Var& x, const Var& gamma, const Var& beta,
              Tensor4& running_mean, Tensor4& running_var, bool training,
              float momentum, float eps) {
    const Tensor4& xt = *x.v;
    const int C = xt.channels;
    if (gamma.v->size() != static_cast<size_t>(C) || beta.v->size() != static_cast<size_t>(C) ||
        running_mean.size() != static_cast<size_t>(C) || running_var.size() != static_cast<size_t>(C))
        throw ShapeError("batchnorm: channel mismatch for input " + xt.shape_str());
    const size_t N = xt.size() / C;  // rows * H * W per channel
    if (N == 0) throw ShapeError("batchnorm: empty input");

    std::vector<double> mean(C, 0.0), var(C, 0.0);
    if (training) {
        const float* xd = xt.data.data();
        for (size_t i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c) mean[c] += xd[i * C + c];
        for (int c = 0; c < C; ++c) mean[c] /= static_cast<double>(N);
        for (size_t i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c) {
                double dv = xd[i * C + c] - mean[c];
                var[c] += dv * dv;
            }
        for (int c = 0; c < C; ++c) var[c] /= static_cast<double>(N);
        for (int c = 0; c < C; ++c) {
            running_mean.data[c] = (1.0f - momentum) * running_mean.data[c] +
                                   momentum * static_cast<float>(mean[c]);
            running_var.data[c] = (1.0f - momentum) * running_var.data[c] +
                                  momentum * static_cast<float>(var[c]);
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = running_mean.data[c];
            var[c] = running_var.data[c];
        }
    }

    std::vector<float> inv_std(C), mu(C);
    for (int c = 0; c < C; ++c) {
        inv_std[c] = static_cast<float>(1.0 / std::sqrt(var[c] + eps));
        mu[c] = static_cast<float>(mean[c]);
    }

    Tensor4 y = xt;
    {
        const float* gm = gamma.v->data.data();
        const float* bt = beta.v->data.data();
        float* yd = y.data.data();
        for (size_t i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c)
                yd[i * C + c] = gm[c] * (yd[i * C + c] - mu[c]) * inv_std[c] + bt[c];
    }
    check_finite("batchnorm", y);

    int xn = x.node, gn = gamma.node, bn = beta.node;
    auto xv = x.v, gv = gamma.v;
    return g.make(std::move(y), {xn, gn, bn},
                  [xn, gn, bn, xv, gv, mu, inv_std, training, C, N](const Tensor4& dy, Graph& gg) {
        const float* xd = xv->data.data();
        const float* dyd = dy.data.data();
        std::vector<double> dbeta(C, 0.0), dgamma(C, 0.0);
        for (size_t i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c) {
                double dv = dyd[i * C + c];
                dbeta[c] += dv;
                dgamma[c] += dv * (xd[i * C + c] - mu[c]) * inv_std[c];
            }
        if (gn >= 0) {
            Tensor4 dg(1, 1, 1, C);
            for (int c = 0; c < C; ++c) dg.data[c] = static_cast<float>(dgamma[c]);
            gg.accumulate(gn, std::move(dg));
        }
        if (bn >= 0) {
            Tensor4 db(1, 1, 1, C);
            for (int c = 0; c < C; ++c) db.data[c] = static_cast<float>(dbeta[c]);
            gg.accumulate(bn, std::move(db));
        }
        if (xn >= 0) {
            Tensor4 dx(xv->rows, xv->height, xv->width, xv->channels);
            float* dxd = dx.data.data();
            const float* gm = gv->data.data();
            if (training) {
                // dx = g*istd * (dy - mean(dy) - xhat * mean(dy*xhat))
                for (size_t i = 0; i < N; ++i)
                    for (int c = 0; c < C; ++c) {
                        double xhat = (xd[i * C + c] - mu[c]) * inv_std[c];
                        double t = dyd[i * C + c] - dbeta[c] / static_cast<double>(N) -
                                   xhat * dgamma[c] / static_cast<double>(N);
                        dxd[i * C + c] = static_cast<float>(gm[c] * inv_std[c] * t);
                    }
            } else {
                for (size_t i = 0; i < N; ++i)
                    for (int c = 0; c < C; ++c)
                        dxd[i * C + c] = dyd[i * C + c] * gm[c] * inv_std[c];
            }
            gg.accumulate(xn, std::move(dx));
        }
    });
}

Var maxpool(Graph& g, const Var& x, int kernel, int stride, int pad) {
    const Tensor4& xt = *x.v;
    if (kernel < 1 || stride < 1 || pad < 0) throw ShapeError("maxpool: bad kernel/stride/pad");
    int Ho = (xt.height + 2 * pad - kernel) / stride + 1;
    int Wo = (xt.width + 2 * pad - kernel) / stride + 1;
    if (Ho < 1 || Wo < 1) throw ShapeError("maxpool: window larger than input " + xt.shape_str());
    Tensor4 y(xt.rows, Ho, Wo, xt.channels);
    std::vector<int64_t> arg(y.size());
    const int C = xt.channels;
    for (int b = 0; b < xt.rows; ++b)
        for (int ho = 0; ho < Ho; ++ho)
            for (int wo = 0; wo < Wo; ++wo)
                for (int c = 0; c < C; ++c) {
                    float best = -std::numeric_limits<float>::infinity();
                    int64_t besti = -1;
                    for (int kh = 0; kh < kernel; ++kh) {
                        int h = ho * stride - pad + kh;
                        if (h < 0 || h >= xt.height) continue;
                        for (int kw = 0; kw < kernel; ++kw) {
                            int w = wo * stride - pad + kw;
                            if (w < 0 || w >= xt.width) continue;
                            float v = xt.at(b, h, w, c);
                            if (v > best) {
                                best = v;
                                besti = static_cast<int64_t>(xt.idx(b, h, w, c));
                            }
                        }
                    }
                    if (besti < 0) throw ShapeError("maxpool: window with no valid input");
                    y.at(b, ho, wo, c) = best;
                    arg[y.idx(b, ho, wo, c)] = besti;
                }
    check_finite("maxpool", y);
    int xn = x.node;
    int B = xt.rows, H = xt.height, W = xt.width;
    return g.make(std::move(y), {xn},
                  [xn, arg = std::move(arg), B, H, W, C](const Tensor4& dy, Graph& gg) {
        Tensor4 dx(B, H, W, C);
        for (size_t i = 0; i < dy.data.size(); ++i)
            dx.data[static_cast<size_t>(arg[i])] += dy.data[i];
        gg.accumulate(xn, std::move(dx));
    });
}

Var global_avgpool(Graph& g, const Var& x) {
    const Tensor4& xt = *x.v;
    const int B = xt.rows, H = xt.height, W = xt.width, C = xt.channels;
    Tensor4 y(B, 1, 1, C);
    std::vector<double> acc(static_cast<size_t>(C));
    for (int b = 0; b < B; ++b) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int h = 0; h < H; ++h) {
            // symmetric pairs first: commutative adds keep the result
            // bit-identical when the input is flipped horizontally
            for (int w = 0; w < W / 2; ++w) {
                const float* lo = &xt.data[xt.idx(b, h, w, 0)];
                const float* hi = &xt.data[xt.idx(b, h, W - 1 - w, 0)];
                for (int c = 0; c < C; ++c)
                    acc[c] += static_cast<double>(lo[c]) + static_cast<double>(hi[c]);
            }
            if (W % 2) {
                const float* mid = &xt.data[xt.idx(b, h, W / 2, 0)];
                for (int c = 0; c < C; ++c) acc[c] += mid[c];
            }
        }
        for (int c = 0; c < C; ++c)
            y.at(b, 0, 0, c) = static_cast<float>(acc[c] / (static_cast<double>(H) * W));
    }
    check_finite("global_avgpool", y);
    int xn = x.node;
    return g.make(std::move(y), {xn}, [xn, B, H, W, C](const Tensor4& dy, Graph& gg) {
        Tensor4 dx(B, H, W, C);
        float inv = 1.0f / (static_cast<float>(H) * W);
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w)
                    for (int c = 0; c < C; ++c)
                        dx.at(b, h, w, c) = dy.at(b, 0, 0, c) * inv;
        gg.accumulate(xn, std::move(dx));
    });
}

Var linear(Graph& g, const Var& x, const Var& weight, const Var& bias) {
    const Tensor4& xt = *x.v;
    const Tensor4& wt = *weight.v;
    const size_t K = static_cast<size_t>(xt.height) * xt.width * xt.channels;
    const size_t Kw = static_cast<size_t>(wt.height) * wt.width * wt.channels;
    if (K != Kw)
        throw ShapeError("linear: input features " + xt.shape_str() + " vs weight " +
                         wt.shape_str());
    const int B = xt.rows, Cout = wt.rows;
    if (bias.v->size() != static_cast<size_t>(Cout))
        throw ShapeError("linear: bias " + bias.v->shape_str() + " vs Cout " +
                         std::to_string(Cout));
    Tensor4 y(B, 1, 1, Cout);
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, B, Cout, static_cast<int>(K), 1.0f,
                xt.data.data(), static_cast<int>(K), wt.data.data(), static_cast<int>(K),
                0.0f, y.data.data(), Cout);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < Cout; ++c) y.at(b, 0, 0, c) += bias.v->data[c];
    check_finite("linear", y);
    int xn = x.node, wn = weight.node, bn = bias.node;
    auto xv = x.v, wv = weight.v;
    return g.make(std::move(y), {xn, wn, bn},
                  [xn, wn, bn, xv, wv, B, Cout, K](const Tensor4& dy, Graph& gg) {
        if (wn >= 0) {
            Tensor4 dw(wv->rows, wv->height, wv->width, wv->channels);
            cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, Cout, static_cast<int>(K), B,
                        1.0f, dy.data.data(), Cout, xv->data.data(), static_cast<int>(K),
                        0.0f, dw.data.data(), static_cast<int>(K));
            gg.accumulate(wn, std::move(dw));
        }
        if (bn >= 0) {
            Tensor4 db(1, 1, 1, Cout);
            std::vector<double> acc(static_cast<size_t>(Cout), 0.0);
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < Cout; ++c) acc[c] += dy.at(b, 0, 0, c);
            for (int c = 0; c < Cout; ++c) db.data[c] = static_cast<float>(acc[c]);
            gg.accumulate(bn, std::move(db));
        }
        if (xn >= 0) {
            Tensor4 dx(xv->rows, xv->height, xv->width, xv->channels);
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, B, static_cast<int>(K),
                        Cout, 1.0f, dy.data.data(), Cout, wv->data.data(),
                        static_cast<int>(K), 0.0f, dx.data.data(), static_cast<int>(K));
            gg.accumulate(xn, std::move(dx));
        }
    });
}

Var softmax_channels(Graph& g, const Var& x) {
    const Tensor4& xt = *x.v;
    const int C = xt.channels;
    const size_t N = xt.size() / C;
    Tensor4 y = xt;
    float* yd = y.data.data();
    for (size_t i = 0; i < N; ++i) {
        float* row = yd + i * C;
        float mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
            double e = std::exp(static_cast<double>(row[c]) - mx);
            sum += e;
            row[c] = static_cast<float>(e);
        }
        for (int c = 0; c < C; ++c) row[c] = static_cast<float>(row[c] / sum);
    }
    check_finite("softmax", y);
    int xn = x.node;
    auto ysp = std::make_shared<const Tensor4>(std::move(y));
    return g.make(ysp, {xn}, [xn, ysp, C, N](const Tensor4& dy, Graph& gg) {
        Tensor4 dx = dy;
        const float* yd = ysp->data.data();
        float* dxd = dx.data.data();
        for (size_t i = 0; i < N; ++i) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c)
                dot += static_cast<double>(dxd[i * C + c]) * yd[i * C + c];
            for (int c = 0; c < C; ++c)
                dxd[i * C + c] = static_cast<float>(
                    yd[i * C + c] * (static_cast<double>(dxd[i * C + c]) - dot));
        }
        gg.accumulate(xn, std::move(dx));
    });
}

// ---------------------------------------------------------------------------
// Branch-group ops (variant-major rows: row v*B + b).

namespace {

int branch_base(const char* op, const Tensor4& x, int R) {
    if (R < 1 || x.rows % R != 0)
        throw ShapeError(std::string(op) + ": rows " + std::to_string(x.rows) +
                         " not divisible by branch count " + std::to_string(R));
    return x.rows / R;
}

}  // namespace

Var take_branch(Graph& g, const Var& x, int v, int R) {
    const Tensor4& xt = *x.v;
    int B = branch_base("take_branch", xt, R);
    if (v < 0 || v >= R) throw ShapeError("take_branch: branch index out of range");
    Tensor4 y(B, xt.height, xt.width, xt.channels);
    const size_t row = static_cast<size_t>(xt.height) * xt.width * xt.channels;
    std::memcpy(y.data.data(), xt.data.data() + static_cast<size_t>(v) * B * row,
                static_cast<size_t>(B) * row * sizeof(float));
    int xn = x.node;
    int rows = xt.rows;
    return g.make(std::move(y), {xn}, [xn, v, B, rows, row](const Tensor4& dy, Graph& gg) {
        Tensor4 dx(rows, dy.height, dy.width, dy.channels);
        std::memcpy(dx.data.data() + static_cast<size_t>(v) * B * row, dy.data.data(),
                    static_cast<size_t>(B) * row * sizeof(float));
        gg.accumulate(xn, std::move(dx));
    });
}

Var branch_max(Graph& g, const Var& x, int R) {
    const Tensor4& xt = *x.v;
    int B = branch_base("branch_max", xt, R);
    Tensor4 y(B, xt.height, xt.width, xt.channels);
    const size_t row = static_cast<size_t>(xt.height) * xt.width * xt.channels;
    std::vector<int32_t> arg(y.size(), 0);
    for (int b = 0; b < B; ++b)
        for (size_t j = 0; j < row; ++j) {
            float best = xt.data[static_cast<size_t>(b) * row + j];
            int32_t bv = 0;
            for (int v = 1; v < R; ++v) {
                float cand = xt.data[(static_cast<size_t>(v) * B + b) * row + j];
                if (cand > best) {  // strict: ties stay with the lowest branch
                    best = cand;
                    bv = v;
                }
            }
            y.data[static_cast<size_t>(b) * row + j] = best;
            arg[static_cast<size_t>(b) * row + j] = bv;
        }
    int xn = x.node;
    int rows = xt.rows;
    return g.make(std::move(y), {xn},
                  [xn, arg = std::move(arg), B, rows, row](const Tensor4& dy, Graph& gg) {
        Tensor4 dx(rows, dy.height, dy.width, dy.channels);
        for (int b = 0; b < B; ++b)
            for (size_t j = 0; j < row; ++j) {
                size_t i = static_cast<size_t>(b) * row + j;
                dx.data[(static_cast<size_t>(arg[i]) * B + b) * row + j] += dy.data[i];
            }
        gg.accumulate(xn, std::move(dx));
    });
}

Var branch_mean(Graph& g, const Var& x, int R) {
    const Tensor4& xt = *x.v;
    int B = branch_base("branch_mean", xt, R);
    Tensor4 y(B, xt.height, xt.width, xt.channels);
    const size_t row = static_cast<size_t>(xt.height) * xt.width * xt.channels;
    for (int b = 0; b < B; ++b)
        for (size_t j = 0; j < row; ++j) {
            double s = 0.0;
            for (int v = 0; v < R; ++v) s += xt.data[(static_cast<size_t>(v) * B + b) * row + j];
            y.data[static_cast<size_t>(b) * row + j] = static_cast<float>(s / R);
        }
    int xn = x.node;
    int rows = xt.rows;
    return g.make(std::move(y), {xn}, [xn, R, B, rows, row](const Tensor4& dy, Graph& gg) {
        Tensor4 dx(rows, dy.height, dy.width, dy.channels);
        for (int v = 0; v < R; ++v)
            for (int b = 0; b < B; ++b)
                for (size_t j = 0; j < row; ++j)
                    dx.data[(static_cast<size_t>(v) * B + b) * row + j] =
                        dy.data[static_cast<size_t>(b) * row + j] / static_cast<float>(R);
        gg.accumulate(xn, std::move(dx));
    });
}

Var branch_geo(Graph& g, const Var& x, int R) {
    const Tensor4& xt = *x.v;
    int B = branch_base("branch_geo", xt, R);
    Tensor4 y(B, xt.height, xt.width, xt.channels);
    const size_t row = static_cast<size_t>(xt.height) * xt.width * xt.channels;
    for (int b = 0; b < B; ++b)
        for (size_t j = 0; j < row; ++j) {
            double s = 0.0;
            for (int v = 0; v < R; ++v)
                s += std::log(std::max(
                    static_cast<double>(xt.data[(static_cast<size_t>(v) * B + b) * row + j]),
                    kProbFloor));
            y.data[static_cast<size_t>(b) * row + j] = static_cast<float>(std::exp(s / R));
        }
    int xn = x.node;
    int rows = xt.rows;
    auto xv = x.v;
    auto ysp = std::make_shared<const Tensor4>(std::move(y));
    return g.make(ysp, {xn}, [xn, xv, ysp, R, B, rows, row](const Tensor4& dy, Graph& gg) {
        Tensor4 dx(rows, dy.height, dy.width, dy.channels);
        for (int v = 0; v < R; ++v)
            for (int b = 0; b < B; ++b)
                for (size_t j = 0; j < row; ++j) {
                    size_t src = static_cast<size_t>(b) * row + j;
                    double xval = xv->data[(static_cast<size_t>(v) * B + b) * row + j];
                    if (xval <= kProbFloor) continue;  // clamped region is flat
                    dx.data[(static_cast<size_t>(v) * B + b) * row + j] = static_cast<float>(
                        static_cast<double>(dy.data[src]) * ysp->data[src] / (R * xval));
                }
        gg.accumulate(xn, std::move(dx));
    });
}

Var l1_normalize_channels(Graph& g, const Var& x) {
    const Tensor4& xt = *x.v;
    const int C = xt.channels;
    const size_t N = xt.size() / C;
    Tensor4 y = xt;
    std::vector<float> sums(N);
    for (size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += y.data[i * C + c];
        s = std::max(s, kProbFloor);
        sums[i] = static_cast<float>(s);
        for (int c = 0; c < C; ++c)
            y.data[i * C + c] = static_cast<float>(y.data[i * C + c] / s);
    }
    check_finite("l1_normalize", y);
    int xn = x.node;
    auto ysp = std::make_shared<const Tensor4>(std::move(y));
    return g.make(ysp, {xn},
                  [xn, ysp, sums = std::move(sums), C, N](const Tensor4& dy, Graph& gg) {
        Tensor4 dx = dy;
        const float* yd = ysp->data.data();
        for (size_t i = 0; i < N; ++i) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c)
                dot += static_cast<double>(dx.data[i * C + c]) * yd[i * C + c];
            for (int c = 0; c < C; ++c)
                dx.data[i * C + c] = static_cast<float>(
                    (static_cast<double>(dx.data[i * C + c]) - dot) / sums[i]);
        }
        gg.accumulate(xn, std::move(dx));
    });
}

Var nll_mean(Graph& g, const Var& probs, const std::vector<int>& labels) {
    const Tensor4& pt = *probs.v;
    if (pt.height != 1 || pt.width != 1)
        throw ShapeError("nll_mean: expected Bx1x1xC probabilities, got " + pt.shape_str());
    if (labels.size() != static_cast<size_t>(pt.rows))
        throw ShapeError("nll_mean: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(pt.rows) + " rows");
    const int C = pt.channels, B = pt.rows;
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        int lab = labels[static_cast<size_t>(b)];
        if (lab < 0 || lab >= C)
            throw ShapeError("nll_mean: label " + std::to_string(lab) + " out of range for " +
                             std::to_string(C) + " classes");
        loss -= std::log(std::max(static_cast<double>(pt.at(b, 0, 0, lab)), kProbFloor));
    }
    Tensor4 y = Tensor4::scalar(static_cast<float>(loss / B));
    check_finite("nll_mean", y);
    int pn = probs.node;
    auto pv = probs.v;
    auto labs = labels;
    return g.make(std::move(y), {pn},
                  [pn, pv, labs = std::move(labs), B, C](const Tensor4& dy, Graph& gg) {
        Tensor4 dp(B, 1, 1, C);
        float seed = dy.data[0];
        for (int b = 0; b < B; ++b) {
            double p = pv->at(b, 0, 0, labs[static_cast<size_t>(b)]);
            if (p <= kProbFloor) continue;
            dp.at(b, 0, 0, labs[static_cast<size_t>(b)]) =
                static_cast<float>(-seed / (B * p));
        }
        gg.accumulate(pn, std::move(dp));
    });
}

Var concat_rows(Graph& g, const Var& a, const Var& b) {
    const Tensor4& at = *a.v;
    const Tensor4& bt = *b.v;
    if (at.height != bt.height || at.width != bt.width || at.channels != bt.channels)
        throw ShapeError("concat_rows: shape mismatch " + at.shape_str() + " vs " +
                         bt.shape_str());
    Tensor4 y(at.rows + bt.rows, at.height, at.width, at.channels);
    std::memcpy(y.data.data(), at.data.data(), at.size() * sizeof(float));
    std::memcpy(y.data.data() + at.size(), bt.data.data(), bt.size() * sizeof(float));
    int an = a.node, bn = b.node;
    int ar = at.rows, br = bt.rows;
    return g.make(std::move(y), {an, bn}, [an, bn, ar, br](const Tensor4& dy, Graph& gg) {
        size_t row = static_cast<size_t>(dy.height) * dy.width * dy.channels;
        if (an >= 0) {
            Tensor4 da(ar, dy.height, dy.width, dy.channels);
            std::memcpy(da.data.data(), dy.data.data(), da.size() * sizeof(float));
            gg.accumulate(an, std::move(da));
        }
        if (bn >= 0) {
            Tensor4 db(br, dy.height, dy.width, dy.channels);
            std::memcpy(db.data.data(), dy.data.data() + static_cast<size_t>(ar) * row,
                        db.size() * sizeof(float));
            gg.accumulate(bn, std::move(db));
        }
    });
}

Var sum_all(Graph& g, const Var& x) {
    double s = 0.0;
    for (float v : x.v->data) s += v;
    Tensor4 y = Tensor4::scalar(static_cast<float>(s));
    int xn = x.node;
    int B = x.v->rows, H = x.v->height, W = x.v->width, C = x.v->channels;
    return g.make(std::move(y), {xn}, [xn, B, H, W, C](const Tensor4& dy, Graph& gg) {
        Tensor4 dx(B, H, W, C, dy.data[0]);
        gg.accumulate(xn, std::move(dx));
    });
}

}  // namespace branchnet
