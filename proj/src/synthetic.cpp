#include "ppseg/synthetic.hpp"

#include <cmath>

#include "ppseg/mlp.hpp"

namespace ppseg {
namespace {

constexpr double kPi = 3.14159265358979323846;

struct Sphere {
    double cx, cy, cz, r;
};

// smallest positive t with |o + t*d - c| = r, or -1
double ray_sphere(double dx, double dy, double dz, const Sphere& s) {
    const double ocx = -s.cx, ocy = -s.cy, ocz = -s.cz; // origin at 0
    const double b = 2.0 * (dx * ocx + dy * ocy + dz * ocz);
    const double c = ocx * ocx + ocy * ocy + ocz * ocz - s.r * s.r;
    const double disc = b * b - 4.0 * c;
    if (disc < 0.0) return -1.0;
    const double sq = std::sqrt(disc);
    const double t0 = (-b - sq) * 0.5;
    if (t0 > 1e-6) return t0;
    const double t1 = (-b + sq) * 0.5;
    if (t1 > 1e-6) return t1;
    return -1.0;
}

} // namespace

PointCloud synthetic_scene(const SceneConfig& cfg) {
    Rng rng(cfg.seed);
    std::vector<Sphere> spheres;
    spheres.reserve(static_cast<size_t>(cfg.n_spheres));
    for (int s = 0; s < cfg.n_spheres; ++s) {
        const double az = rng.uniform(0.0, 2.0 * kPi);
        const double dist = rng.uniform(4.0, 22.0);
        const double r = rng.uniform(0.6, 1.6);
        spheres.push_back({dist * std::cos(az), dist * std::sin(az),
                           -cfg.sensor_height + r * 0.9, r});
    }

    const double fov_up = cfg.fov_up_deg * kPi / 180.0;
    const double fov_down = cfg.fov_down_deg * kPi / 180.0;
    PointCloud cloud;
    for (int iv = 0; iv < cfg.rays_v; ++iv) {
        // row centers, top row at fov_up
        const double pitch =
            fov_up - (static_cast<double>(iv) + 0.5) / cfg.rays_v * (fov_up - fov_down);
        for (int iu = 0; iu < cfg.rays_u; ++iu) {
            const double yaw = kPi - (static_cast<double>(iu) + 0.5) / cfg.rays_u * 2.0 * kPi;
            const double dx = std::cos(yaw) * std::cos(pitch);
            const double dy = std::sin(yaw) * std::cos(pitch);
            const double dz = std::sin(pitch);

            const double u_drop = rng.next_unit();
            const double u_clutter = rng.next_unit();
            const double u_jitter = rng.uniform(-1.0, 1.0);
            const double u_clutter_range = rng.uniform(2.0, 60.0);
            const double u_rem = rng.next_unit();
            if (u_drop < cfg.dropout) continue;

            double t_hit = -1.0;
            int32_t label = kIgnoreClass;
            if (dz < 0.0) {
                const double tg = -cfg.sensor_height / dz;
                if (tg <= cfg.max_range) {
                    t_hit = tg;
                    label = 0;
                }
            }
            for (const auto& s : spheres) {
                const double ts = ray_sphere(dx, dy, dz, s);
                if (ts > 0.0 && (t_hit < 0.0 || ts < t_hit)) {
                    t_hit = ts;
                    label = 1;
                }
            }
            if (t_hit < 0.0) {
                if (u_clutter < cfg.clutter_fraction) {
                    t_hit = u_clutter_range;
                    label = 2;
                } else {
                    continue; // empty sky ray
                }
            }
            t_hit *= 1.0 + cfg.range_jitter * u_jitter;
            cloud.x.push_back(t_hit * dx);
            cloud.y.push_back(t_hit * dy);
            cloud.z.push_back(t_hit * dz);
            cloud.remission.push_back(0.1 + 0.3 * static_cast<double>(label + 1) + 0.1 * u_rem);
            cloud.label.push_back(label);
        }
    }
    return cloud;
}

PointCloud synthetic_uniform_cloud(uint64_t seed, int64_t n, double extent) {
    Rng rng(seed);
    PointCloud cloud;
    cloud.x.resize(static_cast<size_t>(n));
    cloud.y.resize(static_cast<size_t>(n));
    cloud.z.resize(static_cast<size_t>(n));
    cloud.remission.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        cloud.x[static_cast<size_t>(i)] = rng.uniform(-extent, extent);
        cloud.y[static_cast<size_t>(i)] = rng.uniform(-extent, extent);
        cloud.z[static_cast<size_t>(i)] = rng.uniform(-2.0, extent / 8.0);
        cloud.remission[static_cast<size_t>(i)] = rng.next_unit();
    }
    return cloud;
}

} // namespace ppseg
