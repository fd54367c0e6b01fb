#pragma once

#include <cmath>
#include <functional>

#include "branchnet/tensor.hpp"

namespace branchnet {

// Central-difference gradient of a scalar-valued function, evaluated
// independently of the autograd machinery. The effective step is measured
// after float rounding so the quotient uses the perturbation actually applied.
inline Tensor4 finite_difference_grad(const std::function<double(const Tensor4&)>& f,
                                      const Tensor4& x, double eps) {
    if (eps <= 0.0) throw ConfigError("finite_difference_grad: eps must be > 0");
    Tensor4 g = Tensor4::zeros_like(x);
    Tensor4 xp = x;
    for (size_t i = 0; i < x.data.size(); ++i) {
        const float orig = xp.data[i];
        const float up = static_cast<float>(orig + eps);
        const float dn = static_cast<float>(orig - eps);
        xp.data[i] = up;
        double fp = f(xp);
        xp.data[i] = dn;
        double fm = f(xp);
        xp.data[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_difference_grad: non-finite function value");
        g.data[i] = static_cast<float>((fp - fm) /
                                       (static_cast<double>(up) - static_cast<double>(dn)));
    }
    return g;
}

}  // namespace branchnet
