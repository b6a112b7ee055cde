#include <doctest.h>

#include <cmath>

#include "ppseg/feature_propagation.hpp"
#include "ppseg/synthetic.hpp"
#include "support/gradcheck.hpp"

using namespace ppseg;
using ppseg::testing::check_gradients;
using ppseg::testing::rand_tensor;

namespace {

GridLevel jittered_level(uint64_t seed, int h, int w, double spacing = 1.0) {
    GridLevel lvl;
    lvl.h = h;
    lvl.w = w;
    lvl.geom = Tensor::zeros({h, w, 5});
    lvl.valid.assign(static_cast<size_t>(h) * w, 1);
    lvl.parent_row.resize(static_cast<size_t>(h) * w);
    lvl.parent_col.resize(static_cast<size_t>(h) * w);
    lvl.pix2pt.assign(static_cast<size_t>(h) * w, -1);
    Rng rng(seed);
    double* g = lvl.geom.data();
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const int64_t p = static_cast<int64_t>(v) * w + u;
            lvl.parent_row[static_cast<size_t>(p)] = v;
            lvl.parent_col[static_cast<size_t>(p)] = u;
            g[p * 5 + 0] = spacing * u + rng.uniform(-0.2, 0.2);
            g[p * 5 + 1] = spacing * v + rng.uniform(-0.2, 0.2);
            g[p * 5 + 2] = rng.uniform(-0.2, 0.2);
            g[p * 5 + 3] = std::hypot(g[p * 5 + 0], g[p * 5 + 1]);
            g[p * 5 + 4] = rng.next_unit();
        }
    }
    return lvl;
}

} // namespace

TEST_SUITE("feature_propagation") {

TEST_CASE("hand case: two samples at distances 1 and 3, p=2, features 0 and 8 -> 0.8") {
    NeighborhoodBundle b;
    b.fine_h = 1;
    b.fine_w = 1;
    b.coarse_h = 1;
    b.coarse_w = 2;
    b.k = 1;
    b.fine_index = {0, 0}; // both centers scatter onto the single fine pixel
    b.inv_dist = Tensor::from_values({1, 2, 1, 1}, {1.0, 1.0 / 3.0});
    b.f_in = Tensor::zeros({1, 2, 1, 4});
    b.mask = Tensor::ones({1, 2, 1, 1});
    b.local_p = Tensor::zeros({1, 2, 1, 3});
    b.dist = Tensor::from_values({1, 2, 1, 1}, {1.0, 3.0});
    b.inv_density = Tensor::ones({1, 2, 1});

    GridLevel coarse;
    coarse.h = 1;
    coarse.w = 2;
    coarse.valid = {1, 1};
    coarse.parent_row = {0, 0};
    coarse.parent_col = {0, 0};

    const GatherPlan plan = build_interpolation_plan(b, 2.0, coarse);
    Tensor feats = Tensor::from_values({1, 2, 1}, {0.0, 8.0});
    Tensor out = interpolate(feats, plan, 1, 1);
    CHECK(std::abs(out.item() - 0.8) < 1e-12);
}

TEST_CASE("a fine pixel coinciding with a sample copies its feature") {
    const GridLevel fine = jittered_level(5, 8, 16);
    const GridLevel coarse = sample(fine, SampleGrid{4, 8, -1, -1});
    Tensor cfeat = Tensor::zeros({4, 8, 1});
    for (int64_t i = 0; i < 32; ++i) cfeat.data()[i] = 3.0 + static_cast<double>(i);
    const NeighborhoodBundle b =
        build_bundle(fine, coarse, Tensor::zeros({8, 16, 1}), GroupingConfig{3, 2.5, 1.0});
    const GatherPlan plan = build_interpolation_plan(b, 2.0, coarse);
    Tensor out = interpolate(cfeat, plan, 8, 16);
    for (int64_t c = 0; c < coarse.pixels(); ++c) {
        if (!coarse.valid[static_cast<size_t>(c)]) continue;
        const int64_t f = static_cast<int64_t>(coarse.parent_row[static_cast<size_t>(c)]) * 16 +
                          coarse.parent_col[static_cast<size_t>(c)];
        const double got = out.data()[f];
        const double want = cfeat.data()[c];
        CHECK(std::abs(got - want) / std::abs(want) < 1e-6);
    }
}

TEST_CASE("partition of unity and constancy on covered pixels") {
    const GridLevel fine = jittered_level(6, 8, 16);
    const GridLevel coarse = sample(fine, SampleGrid{4, 8, -1, -1});
    const NeighborhoodBundle b =
        build_bundle(fine, coarse, Tensor::zeros({8, 16, 1}), GroupingConfig{3, 3.0, 1.5});
    const GatherPlan plan = build_interpolation_plan(b, 2.0, coarse);

    // covered = receives at least one masked scatter slot
    std::vector<bool> covered(static_cast<size_t>(fine.pixels()), false);
    for (int64_t c = 0; c < b.centers(); ++c) {
        for (int64_t s = 0; s < b.slots(); ++s) {
            if (b.inv_dist.data()[c * b.slots() + s] > 0.0) {
                covered[static_cast<size_t>(b.fine_index[static_cast<size_t>(c * b.slots() + s)])] =
                    true;
            }
        }
    }
    int64_t covered_n = 0;
    for (int64_t f = 0; f < fine.pixels(); ++f) {
        const int64_t lo = plan.offsets[static_cast<size_t>(f)];
        const int64_t hi = plan.offsets[static_cast<size_t>(f) + 1];
        if (!covered[static_cast<size_t>(f)]) continue;
        ++covered_n;
        double sum = 0.0;
        for (int64_t e = lo; e < hi; ++e) sum += plan.weight[static_cast<size_t>(e)];
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    CHECK(covered_n > 0);

    // constant coarse features interpolate to the same constant
    Tensor cfeat = Tensor::full({4, 8, 2}, 2.5);
    Tensor out = interpolate(cfeat, plan, 8, 16);
    for (int64_t f = 0; f < fine.pixels(); ++f) {
        if (!covered[static_cast<size_t>(f)]) continue;
        CHECK(std::abs(out.data()[f * 2 + 0] - 2.5) < 1e-12);
        CHECK(std::abs(out.data()[f * 2 + 1] - 2.5) < 1e-12);
    }
}

TEST_CASE("locality: samples whose windows miss a pixel cannot influence it") {
    const GridLevel fine = jittered_level(7, 8, 16);
    const GridLevel coarse = sample(fine, SampleGrid{4, 8, -1, -1});
    const NeighborhoodBundle b =
        build_bundle(fine, coarse, Tensor::zeros({8, 16, 1}), GroupingConfig{3, 3.0, 1.5});
    const GatherPlan plan = build_interpolation_plan(b, 2.0, coarse);

    // fine pixel 0 and a center on the far side of the grid
    const int64_t far_center = 2 * 8 + 4;
    bool touches = false;
    for (int64_t s = 0; s < b.slots(); ++s) {
        touches |= b.fine_index[static_cast<size_t>(far_center * b.slots() + s)] == 0;
    }
    REQUIRE(!touches);

    Rng rng(9);
    Tensor cfeat = rand_tensor(rng, {4, 8, 1}, -1, 1, false);
    Tensor out1 = interpolate(cfeat, plan, 8, 16);
    cfeat.data()[far_center] += 100.0;
    Tensor out2 = interpolate(cfeat, plan, 8, 16);
    CHECK(out1.data()[0] == out2.data()[0]);
}

TEST_CASE("pixels outside every window copy the nearest valid sample") {
    // stride 4, k=1: windows cover only the chosen parent pixels
    const GridLevel fine = jittered_level(8, 4, 16);
    const GridLevel coarse = sample(fine, SampleGrid{1, 4, 0, 0}); // parents on row 0
    const NeighborhoodBundle b =
        build_bundle(fine, coarse, Tensor::zeros({4, 16, 1}), GroupingConfig{1, 2.0, 1.0});
    const GatherPlan plan = build_interpolation_plan(b, 2.0, coarse);
    Tensor cfeat = Tensor::from_values({1, 4, 1}, {10, 20, 30, 40});
    Tensor out = interpolate(cfeat, plan, 4, 16);
    // fine pixel (3, 1): nearest parent in grid coordinates is (0, 0) at
    // wrapped column distance 1 -> feature 10
    CHECK(out.data()[3 * 16 + 1] == 10.0);
    // fine pixel (3, 15): wraps to the column-0 parent (distance 1) -> 10
    CHECK(out.data()[3 * 16 + 15] == 10.0);
    // fine pixel (2, 6): parents at columns 4 and 8 tie; row-major first wins
    CHECK(out.data()[2 * 16 + 6] == 20.0);
}

TEST_CASE("plain head: identity mlp passes interpolation through, zero coarse keeps skip") {
    const GridLevel fine = jittered_level(10, 4, 8);
    const GridLevel coarse = sample(fine, SampleGrid{2, 4, -1, -1});
    const NeighborhoodBundle b =
        build_bundle(fine, coarse, Tensor::zeros({4, 8, 1}), GroupingConfig{3, 3.0, 1.5});
    const GatherPlan plan = build_interpolation_plan(b, 2.0, coarse);

    Rng rng(11);
    Tensor cfeat = rand_tensor(rng, {2, 4, 3}, -1, 1, false);
    Tensor interp = interpolate(cfeat, plan, 4, 8);

    // identity over the concatenation [interp | skip]
    FpStageConfig cfg;
    cfg.variant = FpVariant::plain;
    cfg.p = 2.0;
    cfg.mlp.widths = {5, 5};
    cfg.mlp.acts = {Activation::none};
    FpStage stage(cfg, "fp");
    {
        // identity weights
        Tensor w = stage.parameters()[0];
        std::fill(w.data(), w.data() + w.numel(), 0.0);
        for (int64_t i = 0; i < 5; ++i) w.data()[i * 5 + i] = 1.0;
    }
    Tensor skip = rand_tensor(rng, {4, 8, 2}, -1, 1, false);
    Tensor out = stage.forward(cfeat, skip, plan, fine, GroupingConfig{3, 3.0, 1.5});
    REQUIRE(out.shape() == Shape{4, 8, 5});
    for (int64_t p = 0; p < 32; ++p) {
        for (int64_t ch = 0; ch < 3; ++ch) {
            CHECK(out.data()[p * 5 + ch] == interp.data()[p * 3 + ch]);
        }
        for (int64_t ch = 0; ch < 2; ++ch) {
            CHECK(out.data()[p * 5 + 3 + ch] == skip.data()[p * 2 + ch]);
        }
    }

    // zero coarse features: the interpolated half is zero, the skip half stays
    Tensor zero_out = stage.forward(Tensor::zeros({2, 4, 3}), skip, plan, fine,
                                    GroupingConfig{3, 3.0, 1.5});
    for (int64_t p = 0; p < 32; ++p) {
        for (int64_t ch = 0; ch < 3; ++ch) CHECK(zero_out.data()[p * 5 + ch] == 0.0);
        for (int64_t ch = 0; ch < 2; ++ch) {
            CHECK(zero_out.data()[p * 5 + 3 + ch] == skip.data()[p * 2 + ch]);
        }
    }
}

TEST_CASE("finite differences through interpolate + concat + every head") {
    set_finite_check(true);
    const GridLevel fine = jittered_level(12, 4, 8);
    const GridLevel coarse = sample(fine, SampleGrid{2, 4, -1, -1});
    const NeighborhoodBundle b =
        build_bundle(fine, coarse, Tensor::zeros({4, 8, 1}), GroupingConfig{3, 3.0, 1.5});
    const GatherPlan plan = build_interpolation_plan(b, 2.0, coarse);
    Rng rng(13);
    Rng jrng(14);
    double worst = 0.0;

    for (const char* variant : {"plain", "spider", "pointconv"}) {
        Tensor cfeat = rand_tensor(rng, {2, 4, 3}, -1, 1, true);
        Tensor skip = rand_tensor(rng, {4, 8, 2}, -1, 1, true);
        FpStageConfig cfg;
        cfg.variant = fp_variant_from_string(variant);
        cfg.p = 2.0;
        cfg.c_mid = 2;
        if (cfg.variant == FpVariant::plain) {
            cfg.mlp = MlpSpec::make({5, 6, 4}, true, 71);
        } else {
            cfg.mlp_in = MlpSpec::make({8, 4}, true, 72);
            cfg.mlp_out = MlpSpec::make({8, 4}, true, 73);
            cfg.weightnet = MlpSpec::make({3, 8, 2}, false, 74);
            cfg.densitynet = MlpSpec::make({1, 6, 1}, false, 75);
        }
        FpStage stage(cfg, std::string("fp_") + variant);
        auto params = stage.parameters();
        ppseg::testing::jitter_biases(params, jrng);
        params.push_back(cfeat);
        params.push_back(skip);
        GroupingConfig fine_grp{3, 3.0, 1.5};
        auto res = check_gradients(params, [&] {
            return sum_all(stage.forward(cfeat, skip, plan, fine, fine_grp));
        });
        worst = std::max(worst, res.max_rel_err);
    }
    MESSAGE("worst fp gradient error: ", worst);
    CHECK(worst < 1e-4);
}

} // TEST_SUITE
