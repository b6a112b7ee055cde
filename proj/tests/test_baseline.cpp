#include <doctest.h>

#include <chrono>
#include <cmath>
#include <set>

#include "ppseg/baseline.hpp"
#include "ppseg/mlp.hpp"
#include "ppseg/synthetic.hpp"

using namespace ppseg;

namespace {

PointCloud cloud_from(const std::vector<std::array<double, 3>>& pts) {
    PointCloud c;
    for (const auto& p : pts) {
        c.x.push_back(p[0]);
        c.y.push_back(p[1]);
        c.z.push_back(p[2]);
        c.remission.push_back(0.0);
    }
    return c;
}

double sqdist(const PointCloud& c, int64_t i, int64_t j) {
    const double dx = c.x[static_cast<size_t>(i)] - c.x[static_cast<size_t>(j)];
    const double dy = c.y[static_cast<size_t>(i)] - c.y[static_cast<size_t>(j)];
    const double dz = c.z[static_cast<size_t>(i)] - c.z[static_cast<size_t>(j)];
    return dx * dx + dy * dy + dz * dz;
}

} // namespace

TEST_SUITE("baseline") {

TEST_CASE("fps on a line: {0, 1, 10}, m=2 picks the endpoints") {
    const PointCloud c = cloud_from({{0, 0, 0}, {1, 0, 0}, {10, 0, 0}});
    CHECK(fps(c, 2) == std::vector<int64_t>{0, 2});
    CHECK(fps(c, 1) == std::vector<int64_t>{0});
    const auto all = fps(c, 3);
    CHECK(std::set<int64_t>(all.begin(), all.end()) == std::set<int64_t>{0, 1, 2});
    CHECK_THROWS_AS(fps(c, 4), UsageError);
    CHECK_THROWS_AS(fps(c, 0), UsageError);
}

TEST_CASE("fps greedy step optimality against exhaustive search") {
    // every pick maximizes the min distance to the already selected set
    for (uint64_t seed = 1; seed <= 6; ++seed) {
        Rng rng(seed);
        const int64_t n = 6 + static_cast<int64_t>(rng.next_u64() % 5); // 6..10
        PointCloud c;
        for (int64_t i = 0; i < n; ++i) {
            c.x.push_back(rng.uniform(-5, 5));
            c.y.push_back(rng.uniform(-5, 5));
            c.z.push_back(rng.uniform(-5, 5));
            c.remission.push_back(0);
        }
        const int64_t m = 4;
        const auto picks = fps(c, m);
        for (int64_t t = 1; t < m; ++t) {
            auto min_dist_to_prefix = [&](int64_t cand) {
                double best = std::numeric_limits<double>::infinity();
                for (int64_t s = 0; s < t; ++s) best = std::min(best, sqdist(c, cand, picks[static_cast<size_t>(s)]));
                return best;
            };
            const double chosen = min_dist_to_prefix(picks[static_cast<size_t>(t)]);
            for (int64_t cand = 0; cand < n; ++cand) {
                bool taken = false;
                for (int64_t s = 0; s < t; ++s) taken |= picks[static_cast<size_t>(s)] == cand;
                if (taken) continue;
                CHECK(chosen >= min_dist_to_prefix(cand));
            }
        }
    }
}

TEST_CASE("ball query edge radii and oracle comparison") {
    const PointCloud c = cloud_from({{0, 0, 0}, {1, 0, 0}, {0, 2, 0}, {5, 5, 5}});
    // vanishing radius catches only the coincident point
    CHECK(ball_query(c, 0, 0, 0, 1e-12) == std::vector<int32_t>{0});
    // radius >= diameter catches everything
    CHECK(ball_query(c, 0, 0, 0, 100.0) == std::vector<int32_t>{0, 1, 2, 3});
    CHECK_THROWS_AS(ball_query(c, 0, 0, 0, 0.0), UsageError);

    // independent double-loop reimplementation on random clouds
    const PointCloud rc = synthetic_uniform_cloud(33, 500, 10.0);
    Rng rng(34);
    for (int rep = 0; rep < 20; ++rep) {
        const double cx = rng.uniform(-10, 10);
        const double cy = rng.uniform(-10, 10);
        const double cz = rng.uniform(-2, 1);
        const double r = rng.uniform(0.5, 6.0);
        std::vector<int32_t> expect;
        for (int64_t i = 0; i < rc.n(); ++i) {
            const double dx = rc.x[static_cast<size_t>(i)] - cx;
            const double dy = rc.y[static_cast<size_t>(i)] - cy;
            const double dz = rc.z[static_cast<size_t>(i)] - cz;
            if (std::sqrt(dx * dx + dy * dy + dz * dz) <= r) {
                expect.push_back(static_cast<int32_t>(i));
            }
        }
        CHECK(ball_query(rc, cx, cy, cz, r) == expect);
    }
}

TEST_CASE("fps cost scales at least linearly in the sample count") {
    const PointCloud c = synthetic_uniform_cloud(35, 20000, 40.0);
    auto time_fps = [&](int64_t m) {
        std::vector<double> t;
        for (int rep = 0; rep < 5; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto picks = fps(c, m);
            asm volatile("" : : "r"(picks.data()) : "memory");
            t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        std::sort(t.begin(), t.end());
        return t[t.size() / 2];
    };
    const double t1 = time_fps(100);
    const double t4 = time_fps(400);
    MESSAGE("fps t(100)=", t1, " t(400)=", t4);
    CHECK(t4 > 2.5 * t1);
}

TEST_CASE("bench_compare emits the documented schema and a faster projected path") {
    BenchConfig bc;
    bc.n = 20000;
    bc.m = 512;
    bc.k = 5;
    bc.reps = 3;
    const PointCloud c = synthetic_uniform_cloud(36, bc.n, 40.0);
    const auto rows = bench_compare(c, bc);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].method == "fps_ball");
    CHECK(rows[1].method == "projected");
    CHECK(rows[0].n == bc.n);
    CHECK(rows[1].m == 512);
    CHECK(rows[1].median_ms < rows[0].median_ms);
    CHECK(bench_csv_header() == "method,n,M,k,median_ms");
    const std::string line = bench_csv_row(rows[0]);
    CHECK(line.substr(0, 9) == "fps_ball,");
}

} // TEST_SUITE
