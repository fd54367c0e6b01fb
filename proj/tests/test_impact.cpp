#include <doctest.h>

#include "branchnet/impact.hpp"
#include "branchnet/model.hpp"
#include "oracles.hpp"

using namespace branchnet;

namespace {

TransformSpec rotate_spec(double deg) {
    TransformSpec t;
    t.kind = TransformKind::rotate;
    t.angle_deg = deg;
    return t;
}

ImpactRow row_at(const std::vector<ImpactRow>& rows, int spot) {
    for (const auto& r : rows)
        if (r.spot == spot) return r;
    REQUIRE(false);
    return {};
}

}  // namespace

TEST_CASE("transform descriptions name kind, parameter, and training range") {
    CHECK(transform_desc(TransformSpec::identity()) == "identity");
    CHECK(transform_desc(TransformSpec::flip()) == "flip_h");
    CHECK(transform_desc(rotate_spec(15)) == "rotate:15");
    TransformSpec s;
    s.kind = TransformKind::scale;
    s.factor = 0.9;
    CHECK(transform_desc(s) == "scale:0.9");
    TransformSpec r = rotate_spec(15);
    r.random_range = {{-20.0, 20.0}};
    CHECK(transform_desc(r) == "rotate:15~[-20,20]");
}

TEST_CASE("spot listing covers input through last block plus the sentinel") {
    auto net = build_preact_resnet(1, 4, 50);
    std::vector<int> spots = spots_with_sentinel(*net);
    REQUIRE(spots.size() == 6);  // -1, 0, 1, 2, 3, sentinel 4
    for (size_t i = 0; i < spots.size(); ++i)
        CHECK(spots[i] == static_cast<int>(i) - 1);
    CHECK(net->spot_label(-1) == "input");
    CHECK(net->sentinel_spot() == 4);
}

TEST_CASE("sentinel row equals plain evaluation and identity injection matches it") {
    auto [train_ds, test_ds] = synth_shapes_pair(24, 16, 8, 2, 61);
    BranchedModel model;
    model.net = build_preact_resnet(1, 4, 51);
    const uint64_t seed = 9;
    EvalResult plain = evaluate(model, test_ds, 8, Reduction::sum, false, seed);

    std::vector<ImpactRow> rows = inference_impact(model, test_ds, TransformSpec::identity(),
                                                   spots_with_sentinel(*model.net), 8, seed);
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) {
        CHECK(r.mode == "inference");
        CHECK(r.top1_err == plain.top1_err);  // identity warp is exact at every spot
        CHECK_FALSE(r.spot_label.empty());
    }
    ImpactRow sentinel = row_at(rows, model.net->sentinel_spot());
    CHECK(sentinel.transform == "identity");
    CHECK(sentinel.spot_label == "no_changes");
}

TEST_CASE("a real transform can only perturb non-sentinel spots") {
    auto [train_ds, test_ds] = synth_shapes_pair(24, 16, 8, 2, 62);
    BranchedModel model;
    model.net = build_preact_resnet(1, 4, 52);
    const uint64_t seed = 10;
    EvalResult plain = evaluate(model, test_ds, 8, Reduction::sum, false, seed);
    std::vector<ImpactRow> rows = inference_impact(model, test_ds, rotate_spec(15),
                                                   spots_with_sentinel(*model.net), 8, seed);
    CHECK(row_at(rows, model.net->sentinel_spot()).top1_err == plain.top1_err);
    for (const auto& r : rows) CHECK(r.transform == "rotate:15");
}

TEST_CASE("impact rejects out-of-range spots") {
    auto [train_ds, test_ds] = synth_shapes_pair(8, 8, 8, 2, 63);
    BranchedModel model;
    model.net = build_preact_resnet(1, 4, 53);
    CHECK_THROWS_AS(
        inference_impact(model, test_ds, TransformSpec::flip(), {99}, 8, 1), ConfigError);
    CHECK_THROWS_AS(
        inference_impact(model, test_ds, TransformSpec::flip(), {-2}, 8, 1), ConfigError);
}

TEST_CASE("training impact trains a two-branch model at the requested spot") {
    auto [train_ds, test_ds] = synth_shapes_pair(32, 16, 8, 2, 64);
    OptimConfig cfg;
    cfg.lr0 = 0.05;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    ImpactRow row = training_impact(build_preact_resnet(1, 4, 54), train_ds, test_ds, cfg,
                                    Reduction::sum, Reduction::sum, AugmentPolicy::none, 0,
                                    TransformSpec::flip(), 3);
    CHECK(row.mode == "training");
    CHECK(row.spot == 0);
    CHECK(row.spot_label == "stem");
    CHECK(row.transform == "flip_h");
    CHECK(row.top1_err >= 0.0);
    CHECK(row.top1_err <= 100.0);
}

TEST_CASE("aggregation averages matching cells and reports the standard error") {
    ImpactRow a;
    a.spot = 0;
    a.spot_label = "stem";
    a.transform = "flip_h";
    a.mode = "inference";
    a.top1_err = 10.0;
    a.top5_err = 2.0;
    ImpactRow b = a;
    b.top1_err = 14.0;
    b.top5_err = 4.0;
    ImpactRow other = a;
    other.spot = 2;
    other.top1_err = 50.0;

    std::vector<ImpactRow> agg = aggregate_impact({{a, other}, {b}});
    REQUIRE(agg.size() == 2);
    CHECK(agg[0].spot == 0);
    CHECK(agg[0].runs == 2);
    CHECK(agg[0].top1_err == doctest::Approx(12.0));
    CHECK(agg[0].top5_err == doctest::Approx(3.0));
    CHECK(agg[0].stderr_top1 == doctest::Approx(2.0));  // sd 2.828 over sqrt(2)
    CHECK(agg[1].spot == 2);
    CHECK(agg[1].runs == 1);
    CHECK(agg[1].stderr_top1 == 0.0);
    CHECK(aggregate_impact({}).empty());
}

TEST_CASE("benchmark validates its configuration") {
    BranchedModel m;
    m.net = build_preact_resnet(1, 4, 55);
    Tensor4 images = testutil::rand_t(4, 8, 8, 3, 70);
    BenchConfig v{"vanilla", &m, Reduction::sum, false};
    BenchConfig f{"flip-1-sum", &m, Reduction::sum, false};
    CHECK_THROWS_AS(benchmark({v}, images, 1, 2), ConfigError);
    CHECK_THROWS_AS(benchmark({f, f}, images, 1, 2), ConfigError);
    CHECK_THROWS_AS(benchmark({v, f}, images, -1, 2), ConfigError);
    CHECK_THROWS_AS(benchmark({v, f}, images, 1, 0), ConfigError);
}

TEST_CASE("benchmark rejects batches that finish below the timer noise floor") {
    BranchedModel m;
    m.net = build_preact_resnet(1, 4, 56);
    Tensor4 images = testutil::rand_t(1, 8, 8, 3, 71);
    BenchConfig v{"vanilla", &m, Reduction::sum, false};
    BenchConfig f{"flip", &m, Reduction::sum, false};
    CHECK_THROWS_AS(benchmark({v, f}, images, 0, 3), ConfigError);
}

TEST_CASE("benchmark reports per-config medians relative to vanilla") {
    BranchedModel plain;
    plain.net = build_preact_resnet(2, 12, 57);
    BranchedModel branched;
    branched.net = build_preact_resnet(2, 12, 57);
    branched.branchings[5] = {TransformSpec::identity(), TransformSpec::flip()};
    Tensor4 images = testutil::rand_t(32, 16, 16, 3, 72);
    BenchConfig v{"vanilla", &plain, Reduction::sum, false};
    BenchConfig f{"flip-1-sum", &branched, Reduction::sum, false};
    std::vector<TimingRow> rows = benchmark({v, f}, images, 1, 5);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].config_name == "vanilla");
    CHECK(rows[0].batch_size == 32);
    CHECK(rows[0].warmup == 1);
    CHECK(rows[0].measured == 5);
    CHECK(rows[0].ms_per_batch_median > 0.0);
    CHECK(rows[0].slowdown_vs_vanilla == doctest::Approx(1.0).epsilon(0.35));
    CHECK(rows[1].slowdown_vs_vanilla > 1.0);
    CHECK(rows[1].ms_per_batch_median > rows[0].ms_per_batch_median);
}
