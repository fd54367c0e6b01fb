#include <doctest.h>

#include <cmath>

#include "branchnet/transform.hpp"
#include "oracles.hpp"

using namespace branchnet;
using testutil::bit_equal;
using testutil::check_unary_grad;
using testutil::max_abs_diff;
using testutil::rand_t;
using testutil::warp_oracle;

TEST_CASE("flip_h is a bit-exact involution") {
    Tensor4 x = rand_t(2, 5, 7, 3, 1);
    Tensor4 once = flip_h_tensor(x);
    CHECK(!bit_equal(once, x));
    CHECK(bit_equal(flip_h_tensor(once), x));
    CHECK(once.at(0, 2, 0, 1) == x.at(0, 2, 6, 1));
}

TEST_CASE("rotate 0 and scale 1 are bit-exact identities") {
    for (int w : {6, 7}) {
        Tensor4 x = rand_t(2, w, w, 3, 10 + w);
        CHECK(bit_equal(warp_tensor(x, Affine::rotation_deg(0.0)), x));
        CHECK(bit_equal(warp_tensor(x, Affine::scaling(1.0)), x));
        CHECK(bit_equal(warp_tensor(x, Affine::identity()), x));
    }
}

TEST_CASE("rotation by 180 degrees is the exact lattice reversal") {
    for (int h : {4, 5}) {
        Tensor4 x = rand_t(1, h, h + 1, 2, 20 + h);
        Tensor4 y = warp_tensor(x, Affine::rotation_deg(180.0));
        for (int hh = 0; hh < h; ++hh)
            for (int ww = 0; ww < h + 1; ++ww)
                for (int c = 0; c < 2; ++c)
                    CHECK(y.at(0, hh, ww, c) == x.at(0, h - 1 - hh, h - ww, c));
    }
}

TEST_CASE("rotation by 90 degrees permutes the lattice on square maps") {
    Tensor4 x = rand_t(1, 5, 5, 1, 31);
    Tensor4 y = warp_tensor(x, Affine::rotation_deg(90.0));
    double m = 0;
    for (float v : y.data) m = std::max(m, static_cast<double>(std::abs(v)));
    CHECK(m > 0.1);  // not zeroed out
    CHECK(bit_equal(warp_tensor(y, Affine::rotation_deg(-90.0)), x));
}

TEST_CASE("zoom-out leaves an exactly zero border") {
    Tensor4 x = rand_t(1, 10, 10, 1, 40, 0.5f, 1.f);
    Tensor4 y = warp_tensor(x, Affine::scaling(0.5));
    // output pixel 0 maps to source -4.5 + 4.5 = 0? center 4.5: src = (0-4.5)*2+4.5 = -4.5 -> out of range
    CHECK(y.at(0, 0, 0, 0) == 0.f);
    CHECK(y.at(0, 0, 9, 0) == 0.f);
    CHECK(y.at(0, 9, 9, 0) == 0.f);
    CHECK(y.at(0, 5, 5, 0) != 0.f);
    int zeros = 0;
    for (float v : y.data) zeros += v == 0.f;
    CHECK(zeros > 50);  // wide band, not isolated pixels
}

TEST_CASE("zoom-in keeps dimensions and magnifies the center") {
    Tensor4 x = rand_t(2, 9, 9, 2, 45);
    Tensor4 y = warp_tensor(x, Affine::scaling(1.5));
    CHECK(y.rows == 2);
    CHECK(y.height == 9);
    CHECK(y.width == 9);
    // center pixel maps to itself
    CHECK(y.at(0, 4, 4, 0) == doctest::Approx(x.at(0, 4, 4, 0)));
}

TEST_CASE("warp matches the per-pixel oracle") {
    const Affine maps[] = {
        Affine::rotation_deg(15.0),  Affine::rotation_deg(-23.5), Affine::rotation_deg(97.0),
        Affine::scaling(0.8),        Affine::scaling(1.3),        Affine::scaling(0.55),
        Affine::rotation_deg(180.0), Affine::rotation_deg(45.0),
    };
    uint64_t s = 50;
    for (const Affine& a : maps) {
        Tensor4 x = rand_t(2, 8, 11, 3, ++s);
        CHECK(max_abs_diff(warp_tensor(x, a), warp_oracle(x, a)) < 1e-5);
    }
}

TEST_CASE("warp is linear in its input") {
    Tensor4 x = rand_t(1, 7, 7, 2, 60);
    Tensor4 y = rand_t(1, 7, 7, 2, 61);
    const float alpha = 0.7f, beta = -1.3f;
    Tensor4 mix = Tensor4::zeros_like(x);
    for (size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = alpha * x.data[i] + beta * y.data[i];
    Affine a = Affine::rotation_deg(33.0);
    Tensor4 wx = warp_tensor(x, a), wy = warp_tensor(y, a), wmix = warp_tensor(mix, a);
    double worst = 0;
    for (size_t i = 0; i < mix.data.size(); ++i)
        worst = std::max(
            worst, std::abs(static_cast<double>(alpha) * wx.data[i] +
                            static_cast<double>(beta) * wy.data[i] - wmix.data[i]));
    CHECK(worst < 1e-5);
}

TEST_CASE("transform specs validate their parameters") {
    CHECK_NOTHROW(TransformSpec::rotation(15).validate());
    CHECK_NOTHROW(TransformSpec::scaling(0.9).validate());
    TransformSpec bad = TransformSpec::scaling(0.0);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    TransformSpec badrange = TransformSpec::rotation(0);
    badrange.random_range = {20.0, -20.0};
    CHECK_THROWS_AS(badrange.validate(), ConfigError);
}

TEST_CASE("resolve draws from the range only in training mode") {
    TransformSpec spec = TransformSpec::rotation(15);
    spec.random_range = {{-20.0, 20.0}};
    std::mt19937 rng = make_rng(5, 5);
    ResolvedTransform eval1 = resolve(spec, false, rng);
    ResolvedTransform eval2 = resolve(spec, false, rng);
    CHECK(eval1.param == 15.0);
    CHECK(eval2.param == 15.0);
    ResolvedTransform tr1 = resolve(spec, true, rng);
    ResolvedTransform tr2 = resolve(spec, true, rng);
    CHECK(tr1.param >= -20.0);
    CHECK(tr1.param <= 20.0);
    CHECK(tr1.param != tr2.param);
}

TEST_CASE("transform op gradients match finite differences") {
    for (uint64_t k = 0; k < 20; ++k) {
        Tensor4 x = rand_t(1, 6, 6, 2, 300 + k);
        CHECK(check_unary_grad([](Graph& g, const Var& v) { return flip_h(g, v); }, x, k) <= 1.0);
        CHECK(check_unary_grad(
                  [&](Graph& g, const Var& v) { return rotate(g, v, 17.0 + double(k)); }, x,
                  k ^ 9) <= 1.0);
        CHECK(check_unary_grad(
                  [&](Graph& g, const Var& v) { return scale(g, v, 0.75 + 0.03 * double(k)); }, x,
                  k ^ 5) <= 1.0);
    }
}

TEST_CASE("apply_branching lays rows out variant-major") {
    Tensor4 x = rand_t(2, 4, 4, 3, 70);
    std::vector<TransformSpec> specs{TransformSpec::identity(), TransformSpec::flip()};
    std::mt19937 rng = make_rng(7, 7);
    Graph g(false);
    Var y = apply_branching(g, g.constant(x), specs, false, rng);
    REQUIRE(y.rows() == 4);
    Tensor4 flipped = flip_h_tensor(x);
    // [x0, x1, flip(x0), flip(x1)]
    for (int b = 0; b < 2; ++b)
        for (int h = 0; h < 4; ++h)
            for (int w = 0; w < 4; ++w)
                for (int c = 0; c < 3; ++c) {
                    CHECK(y.t().at(b, h, w, c) == x.at(b, h, w, c));
                    CHECK(y.t().at(2 + b, h, w, c) == flipped.at(b, h, w, c));
                }
}

TEST_CASE("apply_branching row count for all R and B") {
    std::mt19937 rng = make_rng(8, 8);
    for (int R = 1; R <= 4; ++R)
        for (int B = 1; B <= 3; ++B) {
            std::vector<TransformSpec> specs;
            specs.push_back(TransformSpec::identity());
            if (R > 1) specs.push_back(TransformSpec::flip());
            if (R > 2) specs.push_back(TransformSpec::rotation(15));
            if (R > 3) specs.push_back(TransformSpec::scaling(0.9));
            Tensor4 x = rand_t(B, 5, 5, 2, 80 + R * 10 + B);
            Graph g(false);
            Var y = apply_branching(g, g.constant(x), specs, false, rng);
            CHECK(y.rows() == R * B);
            CHECK(y.height() == 5);
            CHECK(y.width() == 5);
            CHECK(y.channels() == 2);
        }
}

TEST_CASE("chained flip branchings compose variant-major with sample fastest") {
    Tensor4 x = rand_t(2, 4, 4, 1, 90);
    std::mt19937 rng = make_rng(9, 9);
    std::vector<TransformSpec> fl{TransformSpec::identity(), TransformSpec::flip()};
    Graph g(false);
    Var y1 = apply_branching(g, g.constant(x), fl, false, rng);
    Var y2 = apply_branching(g, y1, fl, false, rng);
    REQUIRE(y2.rows() == 8);
    Tensor4 f = flip_h_tensor(x);
    // row v1*4 + v0*2 + b = flip^v1(flip^v0(x_b)); flip twice = identity
    const Tensor4& out = y2.t();
    auto row_eq = [&](int row, const Tensor4& src, int srow) {
        for (int h = 0; h < 4; ++h)
            for (int w = 0; w < 4; ++w)
                if (out.at(row, h, w, 0) != src.at(srow, h, w, 0)) return false;
        return true;
    };
    CHECK(row_eq(0, x, 0));
    CHECK(row_eq(1, x, 1));
    CHECK(row_eq(2, f, 0));
    CHECK(row_eq(3, f, 1));
    CHECK(row_eq(4, f, 0));
    CHECK(row_eq(5, f, 1));
    CHECK(row_eq(6, x, 0));
    CHECK(row_eq(7, x, 1));
}

TEST_CASE("apply_branching gradient matches finite differences") {
    Tensor4 x = rand_t(2, 5, 5, 2, 95);
    std::vector<TransformSpec> specs{TransformSpec::identity(), TransformSpec::flip(),
                                     TransformSpec::rotation(21.0), TransformSpec::scaling(0.85)};
    auto op = [&](Graph& g, const Var& v) {
        std::mt19937 rng = make_rng(1, 1);
        return apply_branching(g, v, specs, false, rng);
    };
    CHECK(check_unary_grad(op, x, 96) <= 1.0);
}

TEST_CASE("training-mode branching draws one parameter per variant") {
    Tensor4 x = rand_t(3, 6, 6, 1, 97);
    TransformSpec rot = TransformSpec::rotation(0);
    rot.random_range = {{-30.0, 30.0}};
    std::vector<TransformSpec> specs{rot, rot};
    std::mt19937 rng = make_rng(2, 2);
    Graph g(false);
    Var y = apply_branching(g, g.constant(x), specs, true, rng);
    // both variants use some rotation; the two draws differ, so the two
    // variant blocks differ while samples within a block come from one draw
    bool variant_blocks_differ = false;
    for (int i = 0; i < 6 * 6; ++i)
        if (y.t().data[i] != y.t().data[3 * 6 * 6 + i]) variant_blocks_differ = true;
    CHECK(variant_blocks_differ);
}
