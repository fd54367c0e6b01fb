#include <doctest.h>

#include <cmath>

#include "branchnet/model.hpp"
#include "branchnet/ops.hpp"
#include "oracles.hpp"

using namespace branchnet;
using testutil::check_unary_grad;
using testutil::grad_violation;
using testutil::max_abs_diff;
using testutil::naive_conv;
using testutil::rand_t;

TEST_CASE("conv2d 1x1 identity kernel copies the input") {
    Graph g(false);
    Tensor4 x = rand_t(2, 4, 4, 1, 1);
    Tensor4 w(1, 1, 1, 1);
    w.data[0] = 1.f;
    Var y = conv2d(g, g.constant(x), g.constant(w), {}, 1, 0);
    CHECK(testutil::bit_equal(y.t(), x));
}

TEST_CASE("all-ones 3x3 kernel on all-ones image counts taps") {
    Graph g(false);
    Tensor4 x(1, 4, 4, 1, 1.f);
    Tensor4 w(1, 3, 3, 1, 1.f);
    Var y = conv2d(g, g.constant(x), g.constant(w), {}, 1, 1);
    REQUIRE(y.height() == 4);
    REQUIRE(y.width() == 4);
    CHECK(y.t().at(0, 1, 1, 0) == 9.f);
    CHECK(y.t().at(0, 0, 0, 0) == 4.f);
    CHECK(y.t().at(0, 0, 1, 0) == 6.f);
}

TEST_CASE("conv2d matches the six-loop oracle") {
    struct Case {
        int B, H, W, Cin, Cout, K, stride, pad;
    };
    const Case cases[] = {
        {2, 7, 7, 3, 4, 3, 1, 1}, {1, 8, 6, 2, 5, 3, 2, 1}, {3, 5, 5, 4, 2, 1, 1, 0},
        {2, 9, 9, 1, 3, 5, 2, 2}, {1, 6, 6, 3, 3, 3, 3, 0}, {2, 4, 4, 8, 8, 3, 1, 1},
    };
    uint64_t s = 40;
    for (const auto& c : cases) {
        Tensor4 x = rand_t(c.B, c.H, c.W, c.Cin, ++s);
        Tensor4 w = rand_t(c.Cout, c.K, c.K, c.Cin, ++s);
        Tensor4 b = rand_t(1, 1, 1, c.Cout, ++s);
        Graph g(false);
        Var y = conv2d(g, g.constant(x), g.constant(w), Var{g.constant(b)}, c.stride, c.pad);
        Tensor4 ref = naive_conv(x, w, &b, c.stride, c.pad);
        CHECK(max_abs_diff(y.t(), ref) < 2e-4);
    }
}

TEST_CASE("conv2d output dims floor and shape errors") {
    Graph g(false);
    Tensor4 x = rand_t(1, 7, 7, 2, 70);
    Tensor4 w = rand_t(3, 3, 3, 2, 71);
    Var y = conv2d(g, g.constant(x), g.constant(w), {}, 2, 0);
    CHECK(y.height() == 3);
    CHECK(y.width() == 3);
    Tensor4 wbad = rand_t(3, 3, 3, 5, 72);
    CHECK_THROWS_AS(conv2d(g, g.constant(x), g.constant(wbad), {}, 1, 1), ShapeError);
    Tensor4 wbig = rand_t(3, 9, 9, 2, 73);
    CHECK_THROWS_AS(conv2d(g, g.constant(x), g.constant(wbig), {}, 1, 0), ShapeError);
}

TEST_CASE("conv2d gradients match finite differences") {
    Tensor4 x = rand_t(2, 5, 5, 3, 80);
    Tensor4 w = rand_t(4, 3, 3, 3, 81, -0.5f, 0.5f);
    Tensor4 b = rand_t(1, 1, 1, 4, 82);
    auto wrt_x = [&](Graph& g, const Var& v) {
        return conv2d(g, v, g.constant(w), Var{g.constant(b)}, 1, 1);
    };
    auto wrt_w = [&](Graph& g, const Var& v) {
        return conv2d(g, g.constant(x), v, Var{g.constant(b)}, 1, 1);
    };
    auto wrt_b = [&](Graph& g, const Var& v) {
        return conv2d(g, g.constant(x), g.constant(w), Var{v}, 1, 1);
    };
    CHECK(check_unary_grad(wrt_x, x, 83) <= 1.0);
    CHECK(check_unary_grad(wrt_w, w, 84) <= 1.0);
    CHECK(check_unary_grad(wrt_b, b, 85) <= 1.0);
}

TEST_CASE("batchnorm normalizes to zero mean unit variance in train mode") {
    Tensor4 x = rand_t(4, 3, 3, 2, 90, 0.f, 10.f);
    Tensor4 gamma(1, 1, 1, 2, 1.f), beta(1, 1, 1, 2, 0.f);
    Tensor4 rm(1, 1, 1, 2, 0.f), rv(1, 1, 1, 2, 1.f);
    Graph g(false);
    Var y = batchnorm(g, g.constant(x), g.constant(gamma), g.constant(beta), rm, rv, true);
    const int per_c = 4 * 3 * 3;
    for (int c = 0; c < 2; ++c) {
        double mean = 0, var = 0;
        for (int b = 0; b < 4; ++b)
            for (int h = 0; h < 3; ++h)
                for (int w = 0; w < 3; ++w) mean += y.t().at(b, h, w, c);
        mean /= per_c;
        for (int b = 0; b < 4; ++b)
            for (int h = 0; h < 3; ++h)
                for (int w = 0; w < 3; ++w) var += std::pow(y.t().at(b, h, w, c) - mean, 2);
        var /= per_c;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-3);
    }
}

TEST_CASE("batchnorm constant channel maps to beta") {
    Tensor4 x(3, 2, 2, 1, 5.f);
    Tensor4 gamma(1, 1, 1, 1, 2.f), beta(1, 1, 1, 1, 0.25f);
    Tensor4 rm(1, 1, 1, 1, 0.f), rv(1, 1, 1, 1, 1.f);
    Graph g(false);
    Var y = batchnorm(g, g.constant(x), g.constant(gamma), g.constant(beta), rm, rv, true);
    for (float v : y.t().data) CHECK(v == doctest::Approx(0.25f).epsilon(1e-4));
}

TEST_CASE("batchnorm running stats update by hand") {
    Tensor4 x(2, 1, 1, 1);
    x.data = {1.f, 3.f};  // batch mean 2, biased var 1
    Tensor4 gamma(1, 1, 1, 1, 1.f), beta(1, 1, 1, 1, 0.f);
    Tensor4 rm(1, 1, 1, 1, 10.f), rv(1, 1, 1, 1, 4.f);
    Graph g(false);
    batchnorm(g, g.constant(x), g.constant(gamma), g.constant(beta), rm, rv, true, 0.1f);
    CHECK(rm.data[0] == doctest::Approx(0.9 * 10 + 0.1 * 2).epsilon(1e-6));
    CHECK(rv.data[0] == doctest::Approx(0.9 * 4 + 0.1 * 1).epsilon(1e-6));
}

TEST_CASE("batchnorm eval mode uses running statistics") {
    Tensor4 x(1, 1, 1, 1, 7.f);
    Tensor4 gamma(1, 1, 1, 1, 3.f), beta(1, 1, 1, 1, 1.f);
    Tensor4 rm(1, 1, 1, 1, 5.f), rv(1, 1, 1, 1, 4.f);
    Graph g(false);
    Var y = batchnorm(g, g.constant(x), g.constant(gamma), g.constant(beta), rm, rv, false);
    // (7-5)/sqrt(4+eps)*3 + 1
    CHECK(y.t().data[0] == doctest::Approx(3.99999f).epsilon(1e-4));
    CHECK(rm.data[0] == 5.f);  // eval does not touch running stats
}

TEST_CASE("batchnorm gradients match finite differences, both modes") {
    Tensor4 x = rand_t(3, 4, 4, 2, 95);
    Tensor4 gamma = rand_t(1, 1, 1, 2, 96, 0.5f, 1.5f);
    Tensor4 beta = rand_t(1, 1, 1, 2, 97);
    for (bool training : {true, false}) {
        auto wrt_x = [&](Graph& g, const Var& v) {
            Tensor4 rm(1, 1, 1, 2, 0.1f), rv(1, 1, 1, 2, 0.9f);
            return batchnorm(g, v, g.constant(gamma), g.constant(beta), rm, rv, training);
        };
        auto wrt_gamma = [&](Graph& g, const Var& v) {
            Tensor4 rm(1, 1, 1, 2, 0.1f), rv(1, 1, 1, 2, 0.9f);
            return batchnorm(g, g.constant(x), v, g.constant(beta), rm, rv, training);
        };
        auto wrt_beta = [&](Graph& g, const Var& v) {
            Tensor4 rm(1, 1, 1, 2, 0.1f), rv(1, 1, 1, 2, 0.9f);
            return batchnorm(g, g.constant(x), g.constant(gamma), v, rm, rv, training);
        };
        CHECK(check_unary_grad(wrt_x, x, 98) <= 1.0);
        CHECK(check_unary_grad(wrt_gamma, gamma, 99) <= 1.0);
        CHECK(check_unary_grad(wrt_beta, beta, 100) <= 1.0);
    }
}

TEST_CASE("maxpool picks window maxima and routes gradient to argmax") {
    Tensor4 x(1, 4, 4, 1);
    for (int i = 0; i < 16; ++i) x.data[i] = static_cast<float>(i);
    Graph g;
    Var xl = g.leaf(x);
    Var y = maxpool(g, xl, 2, 2, 0);
    REQUIRE(y.height() == 2);
    CHECK(y.t().at(0, 0, 0, 0) == 5.f);
    CHECK(y.t().at(0, 0, 1, 0) == 7.f);
    CHECK(y.t().at(0, 1, 0, 0) == 13.f);
    CHECK(y.t().at(0, 1, 1, 0) == 15.f);
    g.backward(y, Tensor4(1, 2, 2, 1, 1.f));
    const Tensor4& dx = g.grad(xl);
    for (int i = 0; i < 16; ++i)
        CHECK(dx.data[i] == ((i == 5 || i == 7 || i == 13 || i == 15) ? 1.f : 0.f));
}

TEST_CASE("maxpool gradient matches finite differences") {
    Tensor4 x = rand_t(2, 6, 6, 3, 110, 0.f, 1.f);
    auto op = [](Graph& g, const Var& v) { return maxpool(g, v, 3, 2, 1); };
    CHECK(check_unary_grad(op, x, 111) <= 1.0);
}

TEST_CASE("global_avgpool averages and backpropagates uniformly") {
    Tensor4 x(1, 2, 2, 1);
    x.data = {1.f, 2.f, 3.f, 6.f};
    Graph g;
    Var xl = g.leaf(x);
    Var y = global_avgpool(g, xl);
    CHECK(y.t().data[0] == doctest::Approx(3.f));
    g.backward(y, Tensor4(1, 1, 1, 1, 8.f));
    for (float v : g.grad(xl).data) CHECK(v == 2.f);
}

TEST_CASE("global_avgpool is bit-identical under horizontal flip") {
    Tensor4 x = rand_t(3, 5, 8, 4, 115);
    Graph g(false);
    Tensor4 flipped = flip_h_tensor(x);
    Var a = global_avgpool(g, g.constant(x));
    Var b = global_avgpool(g, g.constant(flipped));
    CHECK(testutil::bit_equal(a.t(), b.t()));
}

TEST_CASE("linear computes xW^T + b") {
    Tensor4 x(1, 1, 1, 3);
    x.data = {1.f, 2.f, 3.f};
    Tensor4 w(2, 1, 1, 3);
    w.data = {1.f, 0.f, -1.f, 0.5f, 0.5f, 0.5f};
    Tensor4 b(1, 1, 1, 2);
    b.data = {10.f, -10.f};
    Graph g(false);
    Var y = linear(g, g.constant(x), g.constant(w), g.constant(b));
    CHECK(y.t().data[0] == doctest::Approx(1 - 3 + 10.f));
    CHECK(y.t().data[1] == doctest::Approx(0.5 + 1 + 1.5 - 10.f));
}

TEST_CASE("linear flattens h,w,c and checks shapes") {
    Tensor4 x = rand_t(2, 2, 2, 3, 120);
    Tensor4 w = rand_t(5, 1, 1, 12, 121);
    Tensor4 b = rand_t(1, 1, 1, 5, 122);
    Graph g(false);
    Var y = linear(g, g.constant(x), g.constant(w), g.constant(b));
    CHECK(y.rows() == 2);
    CHECK(y.channels() == 5);
    Tensor4 wbad = rand_t(5, 1, 1, 11, 123);
    CHECK_THROWS_AS(linear(g, g.constant(x), g.constant(wbad), g.constant(b)), ShapeError);
}

TEST_CASE("linear gradients match finite differences") {
    Tensor4 x = rand_t(3, 2, 2, 2, 130);
    Tensor4 w = rand_t(4, 1, 1, 8, 131);
    Tensor4 b = rand_t(1, 1, 1, 4, 132);
    CHECK(check_unary_grad(
              [&](Graph& g, const Var& v) { return linear(g, v, g.constant(w), g.constant(b)); },
              x, 133) <= 1.0);
    CHECK(check_unary_grad(
              [&](Graph& g, const Var& v) { return linear(g, g.constant(x), v, g.constant(b)); },
              w, 134) <= 1.0);
    CHECK(check_unary_grad(
              [&](Graph& g, const Var& v) { return linear(g, g.constant(x), g.constant(w), v); },
              b, 135) <= 1.0);
}

TEST_CASE("softmax rows are distributions and match hand values") {
    Tensor4 x(1, 1, 1, 3);
    x.data = {1.f, 2.f, 3.f};
    Graph g(false);
    Var y = softmax_channels(g, g.constant(x));
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(y.t().data[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-5));
    CHECK(y.t().data[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-5));
    Tensor4 big = rand_t(4, 2, 2, 7, 140, -30.f, 30.f);
    Var yb = softmax_channels(g, g.constant(big));
    for (int b = 0; b < 4; ++b)
        for (int h = 0; h < 2; ++h)
            for (int w = 0; w < 2; ++w) {
                double s = 0;
                for (int c = 0; c < 7; ++c) s += yb.t().at(b, h, w, c);
                CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
            }
}

TEST_CASE("softmax gradient matches finite differences") {
    Tensor4 x = rand_t(2, 1, 1, 5, 141, -2.f, 2.f);
    CHECK(check_unary_grad([](Graph& g, const Var& v) { return softmax_channels(g, v); }, x,
                           142) <= 1.0);
}

TEST_CASE("nll_mean value and gradient") {
    Tensor4 p(2, 1, 1, 2);
    p.data = {0.8f, 0.2f, 0.4f, 0.6f};
    std::vector<int> labels{0, 1};
    Graph g;
    Var pl = g.leaf(p);
    Var loss = nll_mean(g, pl, labels);
    CHECK(loss.t().data[0] ==
          doctest::Approx(-0.5 * (std::log(0.8) + std::log(0.6))).epsilon(1e-5));
    g.backward(loss);
    CHECK(g.grad(pl).data[0] == doctest::Approx(-0.5 / 0.8).epsilon(1e-4));
    CHECK(g.grad(pl).data[1] == 0.f);
    CHECK(g.grad(pl).data[3] == doctest::Approx(-0.5 / 0.6).epsilon(1e-4));
}

TEST_CASE("network builders report the documented layer structure") {
    auto r20 = build_preact_resnet(3, 10, 1);
    CHECK(r20->max_spot() == 9);
    CHECK(r20->arch_name() == "preact_resnet20");
    auto r18 = build_resnet18(1000, 1);
    CHECK(r18->max_spot() == 9);
    CHECK(r18->spot_label(1) == "pool");
    // conv1 7x7x3x64 + bn + 8 basic blocks + fc: about 11.7M parameters
    size_t n = r18->parameter_count();
    CHECK(n > 11'000'000);
    CHECK(n < 12'000'000);
}

TEST_CASE("preact resnet parameter names round-trip through state tensors") {
    auto net = build_preact_resnet(2, 4, 3);
    auto params = net->parameters();
    CHECK(!params.empty());
    for (auto* p : params) CHECK(!p->name.empty());
}
