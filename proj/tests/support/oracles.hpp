#pragma once

#include <set>
#include <vector>

#include "ppseg/baseline.hpp"
#include "ppseg/grouping.hpp"
#include "ppseg/mlp.hpp"
#include "ppseg/synthetic.hpp"

// Shared oracle harnesses used by both the unit suites and the acceptance
// runner.

namespace ppseg::testing {

struct GroupingOracleStats {
    int64_t clouds = 0;
    int64_t centers = 0;
    int64_t subset_violations = 0;   // masked slot outside the brute-force ball
    int64_t covered_centers = 0;     // windows that contain the whole ball
    int64_t equality_violations = 0; // covered window missing a ball member
};

// Projects random scenes, builds bundles, and compares masked neighborhoods
// against brute-force ball queries over the whole cloud. Scenes are built
// ray-per-pixel so points and pixels correspond one to one.
inline GroupingOracleStats run_grouping_oracle(int n_clouds, uint64_t seed) {
    GroupingOracleStats st;
    Rng rng(seed);
    for (int ci = 0; ci < n_clouds; ++ci) {
        SceneConfig sc;
        sc.seed = seed * 1000 + static_cast<uint64_t>(ci);
        sc.rays_v = 16 + static_cast<int>(rng.next_u64() % 3) * 16; // 16/32/48
        sc.rays_u = 64;
        sc.n_spheres = 3;
        const PointCloud cloud = synthetic_scene(sc);
        if (cloud.n() > 5000) continue; // keep the n <= 5000 contract
        const auto pc = ProjectionConfig::from_degrees(sc.rays_v, sc.rays_u, sc.fov_up_deg,
                                                       sc.fov_down_deg);
        const RangeImage img = project(cloud, pc);
        const GridLevel fine = level_from_range_image(img);
        const bool strided = (rng.next_u64() & 1) != 0;
        const GridLevel coarse =
            strided ? sample(fine, SampleGrid{sc.rays_v / 2, sc.rays_u / 2, -1, -1})
                    : identity_coarse(fine);
        GroupingConfig grp;
        grp.k = 5;
        grp.radius = rng.uniform(0.4, 1.5);
        grp.sigma = grp.radius / 2.0;
        Tensor feats = Tensor::zeros({fine.h, fine.w, 1});
        const NeighborhoodBundle b = build_bundle(fine, coarse, feats, grp);

        const int64_t k2 = b.slots();
        const double* mask = b.mask.data();
        for (int64_t c = 0; c < b.centers(); ++c) {
            if (!coarse.valid[static_cast<size_t>(c)]) continue;
            ++st.centers;
            const double cx = coarse.geom.data()[c * 5 + 0];
            const double cy = coarse.geom.data()[c * 5 + 1];
            const double cz = coarse.geom.data()[c * 5 + 2];
            const auto ball = ball_query(cloud, cx, cy, cz, grp.radius);
            const std::set<int32_t> ball_set(ball.begin(), ball.end());

            std::set<int32_t> masked_points;
            std::set<int32_t> window_points;
            for (int64_t s = 0; s < k2; ++s) {
                const int32_t pix = b.fine_index[static_cast<size_t>(c * k2 + s)];
                const int32_t pt = img.pix2pt[static_cast<size_t>(pix)];
                if (pt >= 0) window_points.insert(pt);
                if (mask[c * k2 + s] > 0.5) {
                    if (pt < 0 || !ball_set.count(pt)) ++st.subset_violations;
                    if (pt >= 0) masked_points.insert(pt);
                }
            }
            bool covered = true;
            for (int32_t pt : ball_set) covered &= window_points.count(pt) > 0;
            if (covered) {
                ++st.covered_centers;
                if (masked_points != ball_set) ++st.equality_violations;
            }
        }
        ++st.clouds;
    }
    return st;
}

} // namespace ppseg::testing
