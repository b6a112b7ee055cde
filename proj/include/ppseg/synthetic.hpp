#pragma once

#include <cstdint>

#include "ppseg/lidar_io.hpp"

namespace ppseg {

// Deterministic synthetic scenes for tests and benchmarks: rays cast from the
// origin against a ground plane (class 0) and a handful of spheres (class 1),
// plus stray clutter returns on otherwise empty rays (class 2).
struct SceneConfig {
    uint64_t seed = 1;
    int rays_v = 64;              // elevation rows
    int rays_u = 512;             // azimuth columns
    double fov_up_deg = 3.0;
    double fov_down_deg = -25.0;
    double sensor_height = 1.7;   // ground plane at z = -sensor_height
    double max_range = 80.0;
    int n_spheres = 6;
    double clutter_fraction = 0.1; // share of sky rays that return clutter
    double dropout = 0.02;         // share of rays with no return
    double range_jitter = 0.002;   // relative range noise
};

constexpr int kSceneClasses = 3;

PointCloud synthetic_scene(const SceneConfig& cfg);

// n points uniform in a box of half-extent `extent` (z in [-2, extent/8]),
// unlabeled. Used by the neighbor-search benchmarks.
PointCloud synthetic_uniform_cloud(uint64_t seed, int64_t n, double extent);

} // namespace ppseg
