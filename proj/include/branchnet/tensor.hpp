#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "branchnet/util.hpp"

namespace branchnet {

// Dense rank-4 tensor, rows x height x width x channels, row-major in that
// order. The universal value flowing through the network: images and feature
// maps use rows as the (expanded) batch dimension; parameters reuse the four
// slots as documented per layer.
struct Tensor4 {
    int rows = 0;
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    Tensor4() = default;
    Tensor4(int b, int h, int w, int c, float fill = 0.0f)
        : rows(b), height(h), width(w), channels(c),
          data(static_cast<size_t>(b) * h * w * c, fill) {}

    static Tensor4 zeros_like(const Tensor4& t) {
        return Tensor4(t.rows, t.height, t.width, t.channels);
    }
    static Tensor4 scalar(float v) {
        Tensor4 t(1, 1, 1, 1);
        t.data[0] = v;
        return t;
    }

    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    size_t idx(int b, int h, int w, int c) const {
        return ((static_cast<size_t>(b) * height + h) * width + w) * channels + c;
    }
    float& at(int b, int h, int w, int c) { return data[idx(b, h, w, c)]; }
    float at(int b, int h, int w, int c) const { return data[idx(b, h, w, c)]; }

    bool same_shape(const Tensor4& o) const {
        return rows == o.rows && height == o.height && width == o.width &&
               channels == o.channels;
    }
    std::string shape_str() const;

    bool all_finite() const;

    void add_(const Tensor4& o);   // elementwise +=, shapes must match
    void scale_(float s);
    void fill_(float v) { std::fill(data.begin(), data.end(), v); }
};

Tensor4 randn(int b, int h, int w, int c, std::mt19937& rng, float stddev = 1.0f);
Tensor4 uniform(int b, int h, int w, int c, std::mt19937& rng, float lo, float hi);

// Fails fast (NumericError) when NaN scanning is enabled and t has a
// non-finite element. Called by ops on their outputs.
void check_finite(const char* op, const Tensor4& t);

// Trainable tensor with its gradient accumulator.
struct Parameter {
    std::string name;
    Tensor4 value;
    Tensor4 grad;

    Parameter() = default;
    Parameter(std::string n, Tensor4 v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor4::zeros_like(value)) {}

    void zero_grad() { grad.fill_(0.0f); }
};

}  // namespace branchnet
