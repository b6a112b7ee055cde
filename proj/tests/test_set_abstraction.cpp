#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ppseg/set_abstraction.hpp"
#include "ppseg/synthetic.hpp"
#include "support/gradcheck.hpp"

using namespace ppseg;
using ppseg::testing::check_gradients;
using ppseg::testing::rand_tensor;

namespace {

Mlp identity_mlp(int64_t c, const std::string& name = "id") {
    MlpSpec s;
    s.widths = {c, c};
    s.acts = {Activation::none};
    Mlp m(s, name);
    double* w = m.weight(0).data();
    std::fill(w, w + c * c, 0.0);
    for (int64_t i = 0; i < c; ++i) w[i * c + i] = 1.0;
    return m;
}

Mlp constant_mlp(int64_t in, int64_t out, double value, const std::string& name = "const") {
    MlpSpec s;
    s.widths = {in, out};
    s.acts = {Activation::none};
    Mlp m(s, name);
    double* w = m.weight(0).data();
    std::fill(w, w + in * out, 0.0);
    double* b = m.bias(0).data();
    std::fill(b, b + out, value);
    return m;
}

// bundle with hand-set tensors; geometry fields stay empty
NeighborhoodBundle hand_bundle(int h, int w, int64_t slots, const std::vector<double>& f_in,
                               int64_t channels, const std::vector<double>& mask,
                               const std::vector<double>& local_p,
                               const std::vector<double>& inv_density) {
    NeighborhoodBundle b;
    b.coarse_h = h;
    b.coarse_w = w;
    b.fine_h = h;
    b.fine_w = w;
    b.k = 0; // slot count comes from the tensors
    b.f_in = Tensor::from_values({h, w, slots, channels}, f_in);
    b.mask = Tensor::from_values({h, w, slots, 1}, mask);
    b.local_p = Tensor::from_values({h, w, slots, 3}, local_p);
    b.dist = Tensor::zeros({h, w, slots, 1});
    b.inv_dist = Tensor::zeros({h, w, slots, 1});
    b.inv_density = Tensor::from_values({h, w, 1}, inv_density);
    return b;
}

// real bundle over a small planar level for gradient checks
struct SmallSetup {
    GridLevel fine;
    GridLevel coarse;
    Tensor features;
    GroupingConfig grp{3, 1.5, 0.75};
};

SmallSetup small_setup(uint64_t seed, int h = 3, int w = 4) {
    SmallSetup s;
    s.fine.h = h;
    s.fine.w = w;
    s.fine.geom = Tensor::zeros({h, w, 5});
    s.fine.valid.assign(static_cast<size_t>(h) * w, 1);
    s.fine.parent_row.resize(static_cast<size_t>(h) * w);
    s.fine.parent_col.resize(static_cast<size_t>(h) * w);
    s.fine.pix2pt.assign(static_cast<size_t>(h) * w, -1);
    Rng rng(seed);
    double* g = s.fine.geom.data();
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const int64_t p = static_cast<int64_t>(v) * w + u;
            s.fine.parent_row[static_cast<size_t>(p)] = v;
            s.fine.parent_col[static_cast<size_t>(p)] = u;
            g[p * 5 + 0] = u + rng.uniform(-0.3, 0.3);
            g[p * 5 + 1] = v + rng.uniform(-0.3, 0.3);
            g[p * 5 + 2] = rng.uniform(-0.2, 0.2);
            g[p * 5 + 3] = std::hypot(g[p * 5 + 0], g[p * 5 + 1]);
            g[p * 5 + 4] = rng.next_unit();
        }
    }
    s.coarse = identity_coarse(s.fine);
    s.features = rand_tensor(rng, {h, w, 2}, -1.0, 1.0, true);
    return s;
}

} // namespace

TEST_SUITE("set_abstraction") {

TEST_CASE("pointnet with identity mlp and full mask is a componentwise max") {
    const int64_t slots = 3, c = 2;
    // pixel 0: slot features (1,5), (4,2), (3,3)
    const std::vector<double> f{1, 5, 4, 2, 3, 3};
    NeighborhoodBundle b = hand_bundle(1, 1, slots, f, c, {1, 1, 1}, std::vector<double>(9, 0.0),
                                       {1});
    Tensor out = sa_pointnet(b, identity_mlp(c));
    CHECK(out.shape() == Shape{1, 1, 2});
    CHECK(out.data()[0] == 4.0);
    CHECK(out.data()[1] == 5.0);
}

TEST_CASE("pointnet with everything masked and zero bias pools to zero") {
    Rng rng(3);
    const int64_t slots = 4, c = 3;
    NeighborhoodBundle b = hand_bundle(1, 2, slots,
                                       std::vector<double>(2 * slots * c, 1.7), c,
                                       std::vector<double>(2 * slots, 0.0),
                                       std::vector<double>(2 * slots * 3, 0.0), {1, 1});
    Mlp mlp(MlpSpec::make({c, 5, 4}, true, 9), "m"); // random W, zero biases
    Tensor out = sa_pointnet(b, mlp);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0);
}

TEST_CASE("all three variants are invariant to a joint slot permutation") {
    SmallSetup s = small_setup(11);
    NeighborhoodBundle b = build_bundle(s.fine, s.coarse, s.features, s.grp);

    SaStageConfig pn;
    pn.variant = SaVariant::pointnet;
    pn.mlp = MlpSpec::make({5, 8, 6}, true, 21);
    SaStage stage_pn(pn, "pn");

    SaStageConfig sp;
    sp.variant = SaVariant::spidercnn;
    sp.c_mid = 3;
    sp.mlp_in = MlpSpec::make({5, 6}, true, 22);
    sp.mlp_out = MlpSpec::make({18, 7}, true, 23);
    sp.weightnet = MlpSpec::make({3, 16, 3}, false, 24);
    SaStage stage_sp(sp, "sp");

    SaStageConfig pc = sp;
    pc.variant = SaVariant::pointconv;
    pc.densitynet = MlpSpec::make({1, 8, 1}, false, 25);
    SaStage stage_pc(pc, "pc");

    const Tensor out_pn = stage_pn.forward(b);
    const Tensor out_sp = stage_sp.forward(b);
    const Tensor out_pc = stage_pc.forward(b);

    // permute the slot axis jointly in every slot-indexed tensor
    const int64_t k2 = b.slots();
    std::vector<int64_t> perm(static_cast<size_t>(k2));
    for (int64_t i = 0; i < k2; ++i) perm[static_cast<size_t>(i)] = (i * 4 + 2) % k2;
    auto permute_slots = [&](Tensor& t) {
        const int64_t c = t.dim(-1);
        Tensor src = t.clone();
        for (int64_t m = 0; m < b.centers(); ++m) {
            for (int64_t sidx = 0; sidx < k2; ++sidx) {
                for (int64_t ch = 0; ch < c; ++ch) {
                    t.data()[(m * k2 + sidx) * c + ch] =
                        src.data()[(m * k2 + perm[static_cast<size_t>(sidx)]) * c + ch];
                }
            }
        }
    };
    permute_slots(b.f_in);
    permute_slots(b.local_p);
    permute_slots(b.mask);
    permute_slots(b.inv_dist);
    permute_slots(b.dist);

    const Tensor out_pn2 = stage_pn.forward(b);
    const Tensor out_sp2 = stage_sp.forward(b);
    const Tensor out_pc2 = stage_pc.forward(b);
    for (int64_t i = 0; i < out_pn.numel(); ++i) CHECK(out_pn.data()[i] == out_pn2.data()[i]);
    for (int64_t i = 0; i < out_sp.numel(); ++i) {
        CHECK(out_sp.data()[i] == doctest::Approx(out_sp2.data()[i]).epsilon(1e-12));
    }
    for (int64_t i = 0; i < out_pc.numel(); ++i) {
        CHECK(out_pc.data()[i] == doctest::Approx(out_pc2.data()[i]).epsilon(1e-12));
    }
}

TEST_CASE("spidercnn: zero weightnet yields the mlp_out bias cascade") {
    SmallSetup s = small_setup(12);
    const NeighborhoodBundle b = build_bundle(s.fine, s.coarse, s.features.detach(), s.grp);
    Mlp mlp_in(MlpSpec::make({5, 4}, true, 31), "in");
    Mlp wnet = constant_mlp(3, 2, 0.0, "w0"); // WeightNet == 0
    Mlp mlp_out(MlpSpec::make({8, 3, 6}, true, 32), "out");
    Tensor out = sa_spidercnn(b, mlp_in, wnet, mlp_out);
    Tensor cascade = mlp_out.forward(Tensor::zeros({1, 8}));
    for (int64_t m = 0; m < b.centers(); ++m) {
        for (int64_t ch = 0; ch < 6; ++ch) {
            CHECK(out.data()[m * 6 + ch] == cascade.data()[ch]);
        }
    }
}

TEST_CASE("spidercnn: single slot with unit weight reduces to stacked mlps") {
    // k=1 window: the only slot is the center itself and stays masked
    SmallSetup s = small_setup(13);
    GroupingConfig grp{1, 2.0, 1.0};
    const NeighborhoodBundle b = build_bundle(s.fine, s.coarse, s.features.detach(), grp);
    Mlp mlp_in(MlpSpec::make({5, 4}, true, 33), "in");
    Mlp wnet = constant_mlp(3, 1, 1.0, "w1"); // c_mid = 1, weight 1
    Mlp mlp_out(MlpSpec::make({4, 5}, true, 34), "out");
    Tensor out = sa_spidercnn(b, mlp_in, wnet, mlp_out);
    Tensor direct = mlp_out.forward(mlp_in.forward(b.f_in.detach()).reshaped(
        {b.coarse_h, b.coarse_w, 4}));
    REQUIRE(out.shape() == direct.shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        CHECK(out.data()[i] == doctest::Approx(direct.data()[i]).epsilon(1e-13));
    }
}

TEST_CASE("hand contraction: one pixel, two slots, explicit matrices") {
    // A (slot-major) = [[1,0],[0,1]], so the contraction returns WeightNet's
    // output matrix B = [[1,2],[3,4]] flattened row-major (c_f major).
    const std::vector<double> f_in{1, 0, 0, 1};
    // local_p rows chosen so a linear WeightNet (W*p, no bias) produces B:
    // p0 = (1,0,0), p1 = (0,1,0); W columns: c0 -> (1,2), c1 -> (3,4)
    const std::vector<double> local_p{1, 0, 0, 0, 1, 0};
    NeighborhoodBundle b = hand_bundle(1, 1, 2, f_in, 2, {1, 1}, local_p, {1});
    Mlp mlp_in = identity_mlp(2, "in");
    MlpSpec ws;
    ws.widths = {3, 2};
    ws.acts = {Activation::none};
    Mlp wnet(ws, "w");
    // rows of W are output channels: B[s, cm] = W[cm, :] . p_s
    double* w = wnet.weight(0).data();
    w[0] = 1;  w[1] = 3;  w[2] = 0; // cm 0: p0 -> 1, p1 -> 3
    w[3] = 2;  w[4] = 4;  w[5] = 0; // cm 1: p0 -> 2, p1 -> 4
    Mlp mlp_out = identity_mlp(4, "out");
    Tensor out = sa_spidercnn(b, mlp_in, wnet, mlp_out);
    REQUIRE(out.shape() == Shape{1, 1, 4});
    // independent hand contraction: F'[cf, cm] = sum_s A[s, cf] * B[s, cm]
    const double A[2][2] = {{1, 0}, {0, 1}};
    const double B[2][2] = {{1, 2}, {3, 4}};
    double expect[4];
    for (int cf = 0; cf < 2; ++cf) {
        for (int cm = 0; cm < 2; ++cm) {
            double acc = 0;
            for (int sl = 0; sl < 2; ++sl) acc += A[sl][cf] * B[sl][cm];
            expect[cf * 2 + cm] = acc;
        }
    }
    for (int i = 0; i < 4; ++i) CHECK(out.data()[i] == expect[i]);
}

TEST_CASE("pointconv with unit density gate equals spidercnn bitwise") {
    SmallSetup s = small_setup(14);
    const NeighborhoodBundle b = build_bundle(s.fine, s.coarse, s.features.detach(), s.grp);
    for (uint64_t draw = 0; draw < 5; ++draw) {
        Mlp mlp_in(MlpSpec::make({5, 4}, true, 100 + draw), "in");
        Mlp wnet(MlpSpec::make({3, 16, 2}, false, 200 + draw), "w");
        Mlp mlp_out(MlpSpec::make({8, 6}, true, 300 + draw), "out");
        Mlp dnet = constant_mlp(1, 1, 1.0, "d1");
        Tensor spider = sa_spidercnn(b, mlp_in, wnet, mlp_out);
        Tensor pconv = sa_pointconv(b, mlp_in, wnet, dnet, mlp_out);
        REQUIRE(spider.numel() == pconv.numel());
        for (int64_t i = 0; i < spider.numel(); ++i) {
            CHECK(spider.data()[i] == pconv.data()[i]); // bitwise
        }
    }
}

TEST_CASE("pointconv: zero density gate annihilates, doubling the gate doubles") {
    SmallSetup s = small_setup(15);
    const NeighborhoodBundle b = build_bundle(s.fine, s.coarse, s.features.detach(), s.grp);
    Mlp mlp_in(MlpSpec::make({5, 4}, true, 41), "in");
    Mlp wnet(MlpSpec::make({3, 16, 2}, false, 42), "w");
    Mlp mlp_out_bias(MlpSpec::make({8, 6}, true, 43), "out");
    Tensor zero_out = sa_pointconv(b, mlp_in, wnet, constant_mlp(1, 1, 0.0), mlp_out_bias);
    Tensor cascade = mlp_out_bias.forward(Tensor::zeros({1, 8}));
    for (int64_t m = 0; m < b.centers(); ++m) {
        for (int64_t ch = 0; ch < 6; ++ch) {
            CHECK(zero_out.data()[m * 6 + ch] == cascade.data()[ch]);
        }
    }

    // identity mlp_out exposes the contraction: gate 2x -> output 2x
    Mlp id_out = identity_mlp(8, "idout");
    Tensor g1 = sa_pointconv(b, mlp_in, wnet, constant_mlp(1, 1, 1.0), id_out);
    Tensor g2 = sa_pointconv(b, mlp_in, wnet, constant_mlp(1, 1, 2.0), id_out);
    for (int64_t i = 0; i < g1.numel(); ++i) {
        CHECK(g2.data()[i] == doctest::Approx(2.0 * g1.data()[i]).epsilon(1e-13));
    }
}

TEST_CASE("perturbing a masked slot's features leaves every variant unchanged") {
    SmallSetup s = small_setup(16);
    GroupingConfig grp{3, 0.9, 0.45}; // tight radius: diagonal slots get masked
    NeighborhoodBundle b = build_bundle(s.fine, s.coarse, s.features.detach(), grp);
    int64_t masked_slot = -1;
    const int64_t k2 = b.slots();
    for (int64_t i = 0; i < b.mask.numel(); ++i) {
        if (b.mask.data()[i] == 0.0) {
            masked_slot = i;
            break;
        }
    }
    REQUIRE(masked_slot >= 0);

    SaStageConfig pn;
    pn.variant = SaVariant::pointnet;
    pn.mlp = MlpSpec::make({5, 6, 4}, true, 51);
    SaStage stage_pn(pn, "pn");
    SaStageConfig sp;
    sp.variant = SaVariant::spidercnn;
    sp.c_mid = 2;
    sp.mlp_in = MlpSpec::make({5, 4}, true, 52);
    sp.mlp_out = MlpSpec::make({8, 5}, true, 53);
    sp.weightnet = MlpSpec::make({3, 16, 2}, false, 54);
    SaStage stage_sp(sp, "sp");
    SaStageConfig pc = sp;
    pc.variant = SaVariant::pointconv;
    pc.densitynet = MlpSpec::make({1, 8, 1}, false, 55);
    SaStage stage_pc(pc, "pc");

    const Tensor a1 = stage_pn.forward(b);
    const Tensor b1 = stage_sp.forward(b);
    const Tensor c1 = stage_pc.forward(b);
    for (int64_t ch = 0; ch < 5; ++ch) b.f_in.data()[masked_slot * 5 + ch] += 17.0;
    const Tensor a2 = stage_pn.forward(b);
    const Tensor b2 = stage_sp.forward(b);
    const Tensor c2 = stage_pc.forward(b);
    for (int64_t i = 0; i < a1.numel(); ++i) CHECK(a1.data()[i] == a2.data()[i]);
    for (int64_t i = 0; i < b1.numel(); ++i) CHECK(b1.data()[i] == b2.data()[i]);
    for (int64_t i = 0; i < c1.numel(); ++i) CHECK(c1.data()[i] == c2.data()[i]);
    (void)k2;
}

TEST_CASE("finite differences across all variants and parameter groups") {
    set_finite_check(true);
    SmallSetup s = small_setup(17);
    Rng jrng(1234);
    double worst = 0.0;

    SaStageConfig pn;
    pn.variant = SaVariant::pointnet;
    pn.mlp = MlpSpec::make({5, 6, 4}, true, 61);
    SaStage stage_pn(pn, "pn");
    {
        auto params = stage_pn.parameters();
        ppseg::testing::jitter_biases(params, jrng);
        params.push_back(s.features);
        auto res = check_gradients(params, [&] {
            return sum_all(stage_pn.forward(build_bundle(s.fine, s.coarse, s.features, s.grp)));
        });
        worst = std::max(worst, res.max_rel_err);
    }

    SaStageConfig sp;
    sp.variant = SaVariant::spidercnn;
    sp.c_mid = 2;
    sp.mlp_in = MlpSpec::make({5, 4}, true, 62);
    sp.mlp_out = MlpSpec::make({8, 5}, true, 63);
    sp.weightnet = MlpSpec::make({3, 8, 2}, false, 64);
    SaStage stage_sp(sp, "sp");
    {
        auto params = stage_sp.parameters();
        ppseg::testing::jitter_biases(params, jrng);
        params.push_back(s.features);
        auto res = check_gradients(params, [&] {
            return sum_all(stage_sp.forward(build_bundle(s.fine, s.coarse, s.features, s.grp)));
        });
        worst = std::max(worst, res.max_rel_err);
    }

    SaStageConfig pc = sp;
    pc.variant = SaVariant::pointconv;
    pc.densitynet = MlpSpec::make({1, 6, 1}, false, 65);
    SaStage stage_pc(pc, "pc");
    {
        auto params = stage_pc.parameters();
        ppseg::testing::jitter_biases(params, jrng);
        params.push_back(s.features);
        auto res = check_gradients(params, [&] {
            return sum_all(stage_pc.forward(build_bundle(s.fine, s.coarse, s.features, s.grp)));
        });
        worst = std::max(worst, res.max_rel_err);
    }
    MESSAGE("worst variant gradient error: ", worst);
    CHECK(worst < 1e-4);
}

} // TEST_SUITE
