#include "branchnet/tensor.hpp"

#include <cmath>
#include <sstream>

namespace branchnet {

std::string Tensor4::shape_str() const {
    std::ostringstream os;
    os << "[" << rows << "," << height << "," << width << "," << channels << "]";
    return os.str();
}

bool Tensor4::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor4::add_(const Tensor4& o) {
    if (!same_shape(o))
        throw ShapeError("add_: shape mismatch " + shape_str() + " vs " + o.shape_str());
    for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
}

void Tensor4::scale_(float s) {
    for (float& v : data) v *= s;
}

Tensor4 randn(int b, int h, int w, int c, std::mt19937& rng, float stddev) {
    Tensor4 t(b, h, w, c);
    std::normal_distribution<float> d(0.0f, stddev);
    for (float& v : t.data) v = d(rng);
    return t;
}

Tensor4 uniform(int b, int h, int w, int c, std::mt19937& rng, float lo, float hi) {
    Tensor4 t(b, h, w, c);
    std::uniform_real_distribution<float> d(lo, hi);
    for (float& v : t.data) v = d(rng);
    return t;
}

void check_finite(const char* op, const Tensor4& t) {
    if (!nan_debug_enabled()) return;
    if (!t.all_finite())
        throw NumericError(std::string(op) + ": non-finite value in output " + t.shape_str());
}

}  // namespace branchnet
