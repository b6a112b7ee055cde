#include <doctest.h>

#include <cmath>
#include <vector>

#include "ppseg/mlp.hpp"
#include "ppseg/simd/kernels.hpp"

// Every compiled-in kernel backend against the scalar reference. Elementwise
// kernels must match bitwise (they keep the scalar rounding sequence); the
// FMA reduction kernels (dot, affine) get a tight relative tolerance.

using namespace ppseg;

namespace {

std::vector<double> rand_vec(Rng& rng, size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// sizes around the 2/4-lane boundaries plus a large one
const std::vector<size_t> kSizes{1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 257};

bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1.0});
}

} // namespace

TEST_SUITE("simd") {

TEST_CASE("at least the scalar backend is available") {
    const auto tables = simd::available_kernel_tables();
    REQUIRE(!tables.empty());
    CHECK(std::string(tables[0]->name) == "scalar");
    MESSAGE("active backend: ", simd::kernels().name);
}

TEST_CASE("elementwise kernels match scalar bitwise") {
    const auto& ref = simd::kScalarKernels;
    for (const auto* t : simd::available_kernel_tables()) {
        if (t == &simd::kScalarKernels) continue;
        Rng rng(42);
        for (size_t n : kSizes) {
            auto a = rand_vec(rng, n);
            auto b = rand_vec(rng, n);
            std::vector<double> out_ref(n), out_t(n);

            ref.add(out_ref.data(), a.data(), b.data(), n);
            t->add(out_t.data(), a.data(), b.data(), n);
            CHECK(out_ref == out_t);

            ref.mul(out_ref.data(), a.data(), b.data(), n);
            t->mul(out_t.data(), a.data(), b.data(), n);
            CHECK(out_ref == out_t);

            ref.scale(out_ref.data(), 1.7, a.data(), n);
            t->scale(out_t.data(), 1.7, a.data(), n);
            CHECK(out_ref == out_t);

            auto y_ref = b, y_t = b;
            ref.axpy(y_ref.data(), -0.73, a.data(), n);
            t->axpy(y_t.data(), -0.73, a.data(), n);
            CHECK(y_ref == y_t);

            ref.relu(out_ref.data(), a.data(), n);
            t->relu(out_t.data(), a.data(), n);
            CHECK(out_ref == out_t);

            auto gx_ref = rand_vec(rng, n), gx_t = gx_ref;
            auto gy = rand_vec(rng, n);
            ref.relu_grad_acc(gx_ref.data(), a.data(), gy.data(), n);
            t->relu_grad_acc(gx_t.data(), a.data(), gy.data(), n);
            CHECK(gx_ref == gx_t);
        }
    }
}

TEST_CASE("reduction kernels match scalar to rounding error") {
    const auto& ref = simd::kScalarKernels;
    for (const auto* t : simd::available_kernel_tables()) {
        if (t == &simd::kScalarKernels) continue;
        Rng rng(43);
        for (size_t n : kSizes) {
            auto a = rand_vec(rng, n);
            auto b = rand_vec(rng, n);
            CHECK(close_rel(ref.dot(a.data(), b.data(), n), t->dot(a.data(), b.data(), n), 1e-13));

            const int out = 7, in = static_cast<int>(n);
            auto w = rand_vec(rng, static_cast<size_t>(out) * n);
            auto bias = rand_vec(rng, out);
            std::vector<double> y_ref(out), y_t(out);
            ref.affine(y_ref.data(), w.data(), bias.data(), a.data(), out, in);
            t->affine(y_t.data(), w.data(), bias.data(), a.data(), out, in);
            for (int o = 0; o < out; ++o) CHECK(close_rel(y_ref[o], y_t[o], 1e-13));
        }
    }
}

TEST_CASE("backward accumulation kernels match scalar bitwise") {
    const auto& ref = simd::kScalarKernels;
    for (const auto* t : simd::available_kernel_tables()) {
        if (t == &simd::kScalarKernels) continue;
        Rng rng(44);
        for (size_t n : kSizes) {
            const int out = 5, in = static_cast<int>(n);
            auto w = rand_vec(rng, static_cast<size_t>(out) * n);
            auto gy = rand_vec(rng, out);
            auto x = rand_vec(rng, n);
            auto gx_ref = rand_vec(rng, n), gx_t = gx_ref;
            ref.matvec_t_acc(gx_ref.data(), w.data(), gy.data(), out, in);
            t->matvec_t_acc(gx_t.data(), w.data(), gy.data(), out, in);
            CHECK(gx_ref == gx_t);

            auto gw_ref = rand_vec(rng, static_cast<size_t>(out) * n), gw_t = gw_ref;
            ref.outer_acc(gw_ref.data(), gy.data(), x.data(), out, in);
            t->outer_acc(gw_t.data(), gy.data(), x.data(), out, in);
            CHECK(gw_ref == gw_t);
        }
    }
}

TEST_CASE("geometry kernels match scalar bitwise") {
    const auto& ref = simd::kScalarKernels;
    for (const auto* t : simd::available_kernel_tables()) {
        if (t == &simd::kScalarKernels) continue;
        Rng rng(45);
        for (size_t n : kSizes) {
            auto nx = rand_vec(rng, n, -5.0, 5.0);
            auto ny = rand_vec(rng, n, -5.0, 5.0);
            auto nz = rand_vec(rng, n, -5.0, 5.0);
            std::vector<uint8_t> valid(n);
            for (auto& v : valid) v = rng.next_unit() < 0.8 ? 1 : 0;

            std::vector<double> px1(n), py1(n), pz1(n), d1(n), m1(n), i1(n);
            std::vector<double> px2(n), py2(n), pz2(n), d2(n), m2(n), i2(n);
            ref.localize_run(nx.data(), ny.data(), nz.data(), valid.data(), 0.3, -0.2, 0.1, true,
                             2.5, 1e-8, static_cast<int>(n), px1.data(), py1.data(), pz1.data(),
                             d1.data(), m1.data(), i1.data());
            t->localize_run(nx.data(), ny.data(), nz.data(), valid.data(), 0.3, -0.2, 0.1, true,
                            2.5, 1e-8, static_cast<int>(n), px2.data(), py2.data(), pz2.data(),
                            d2.data(), m2.data(), i2.data());
            CHECK(px1 == px2);
            CHECK(py1 == py2);
            CHECK(pz1 == pz2);
            CHECK(d1 == d2);
            CHECK(m1 == m2);
            CHECK(i1 == i2);

            CHECK(ref.density_sum(d1.data(), m1.data(), static_cast<int>(n), 0.5) ==
                  t->density_sum(d2.data(), m2.data(), static_cast<int>(n), 0.5));

            auto dist_ref = rand_vec(rng, n, 0.0, 30.0), dist_t = dist_ref;
            ref.min_sqdist_update(dist_ref.data(), nx.data(), ny.data(), nz.data(), 0.5, 0.5, 0.5, n);
            t->min_sqdist_update(dist_t.data(), nx.data(), ny.data(), nz.data(), 0.5, 0.5, 0.5, n);
            CHECK(dist_ref == dist_t);

            std::vector<int32_t> idx_ref(n), idx_t(n);
            const size_t c_ref = ref.ball_collect(nx.data(), ny.data(), nz.data(), n, 0.0, 0.0,
                                                  0.0, 9.0, idx_ref.data());
            const size_t c_t =
                t->ball_collect(nx.data(), ny.data(), nz.data(), n, 0.0, 0.0, 0.0, 9.0, idx_t.data());
            REQUIRE(c_ref == c_t);
            idx_ref.resize(c_ref);
            idx_t.resize(c_t);
            CHECK(idx_ref == idx_t);
        }
    }
}

TEST_CASE("explicit backend selection round-trips") {
    const auto tables = simd::available_kernel_tables();
    for (const auto* t : tables) {
        simd::select_kernels(t->name);
        CHECK(std::string(simd::kernels().name) == t->name);
    }
    simd::select_kernels("auto");
    CHECK_THROWS_AS(simd::select_kernels("not-a-backend"), ConfigError);
}

} // TEST_SUITE
