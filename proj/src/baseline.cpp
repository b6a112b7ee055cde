#include "ppseg/baseline.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "ppseg/parallel.hpp"
#include "ppseg/simd/kernels.hpp"

namespace ppseg {

std::vector<int64_t> fps(const PointCloud& cloud, int64_t m) {
    const int64_t n = cloud.n();
    if (m < 1 || m > n) {
        throw UsageError("fps: m=" + std::to_string(m) + " outside [1, n=" + std::to_string(n) +
                         "]");
    }
    std::vector<int64_t> picked;
    picked.reserve(static_cast<size_t>(m));
    picked.push_back(0); // deterministic seed
    std::vector<double> dist(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
    const auto& k = simd::kernels();
    int64_t last = 0;
    for (int64_t step = 1; step < m; ++step) {
        const double qx = cloud.x[static_cast<size_t>(last)];
        const double qy = cloud.y[static_cast<size_t>(last)];
        const double qz = cloud.z[static_cast<size_t>(last)];
        parallel_for(n, [&](int64_t lo, int64_t hi) {
            k.min_sqdist_update(dist.data() + lo, cloud.x.data() + lo, cloud.y.data() + lo,
                                cloud.z.data() + lo, qx, qy, qz, static_cast<size_t>(hi - lo));
        }, /*grain=*/16384);
        // argmax with ties to the lowest index
        int64_t best = 0;
        double best_d = dist[0];
        for (int64_t i = 1; i < n; ++i) {
            if (dist[static_cast<size_t>(i)] > best_d) {
                best_d = dist[static_cast<size_t>(i)];
                best = i;
            }
        }
        picked.push_back(best);
        last = best;
    }
    return picked;
}

std::vector<int32_t> ball_query(const PointCloud& cloud, double cx, double cy, double cz,
                                double radius) {
    if (radius <= 0.0) throw UsageError("ball_query: radius must be positive");
    std::vector<int32_t> out(static_cast<size_t>(cloud.n()));
    const size_t cnt = simd::kernels().ball_collect(
        cloud.x.data(), cloud.y.data(), cloud.z.data(), static_cast<size_t>(cloud.n()), cx, cy,
        cz, radius * radius, out.data());
    out.resize(cnt);
    return out;
}

namespace {

double median_ms(std::vector<double>& samples) {
    std::sort(samples.begin(), samples.end());
    const size_t n = samples.size();
    return n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

template <typename F>
double time_ms(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

// Integer grid (H', W') with H'|H, W'|W and H'*W' as close to m as possible.
std::pair<int, int> choose_grid(int h, int w, int64_t m) {
    int best_h = 1, best_w = 1;
    int64_t best_err = std::numeric_limits<int64_t>::max();
    for (int hh = 1; hh <= h; ++hh) {
        if (h % hh) continue;
        for (int ww = 1; ww <= w; ++ww) {
            if (w % ww) continue;
            const int64_t err = std::llabs(static_cast<int64_t>(hh) * ww - m);
            if (err < best_err) {
                best_err = err;
                best_h = hh;
                best_w = ww;
            }
        }
    }
    return {best_h, best_w};
}

} // namespace

std::vector<BenchRow> bench_compare(const PointCloud& cloud, const BenchConfig& cfg) {
    std::vector<BenchRow> rows;
    const int64_t n = cloud.n();

    const ProjectionConfig pc = ProjectionConfig::from_degrees(cfg.height, cfg.width, 3.0, -25.0);
    const auto [gh, gw] = choose_grid(cfg.height, cfg.width, cfg.m);
    const int64_t m_grid = static_cast<int64_t>(gh) * gw;
    GroupingConfig grp{cfg.k, cfg.radius, cfg.radius / 2.0};

    auto run_point_path = [&]() {
        const std::vector<int64_t> centers = fps(cloud, cfg.m);
        size_t total = 0;
        for (int64_t idx : centers) {
            total += ball_query(cloud, cloud.x[static_cast<size_t>(idx)],
                                cloud.y[static_cast<size_t>(idx)],
                                cloud.z[static_cast<size_t>(idx)], cfg.radius)
                         .size();
        }
        return total;
    };

    // Projection is shared input preparation; the timed region is the
    // sampling + grouping work the encoder stage repeats.
    const RangeImage img = project(cloud, pc);
    const GridLevel level0 = level_from_range_image(img);
    Tensor feats = Tensor::zeros({level0.h, level0.w, 2});
    {
        const double* g = level0.geom.data();
        double* f = feats.data();
        for (int64_t p = 0; p < level0.pixels(); ++p) {
            f[p * 2 + 0] = g[p * 5 + 3];
            f[p * 2 + 1] = g[p * 5 + 4];
        }
    }
    auto run_projected_path = [&]() {
        const GridLevel coarse = sample(level0, SampleGrid{gh, gw, -1, -1});
        const NeighborhoodBundle b = build_bundle(level0, coarse, feats, grp);
        return static_cast<size_t>(b.f_in.numel());
    };

    auto bench_one = [&](const std::string& method, int64_t m_eff, auto&& fn, int threads) {
        const int prev = thread_budget();
        set_thread_budget(threads);
        std::vector<double> samples;
        size_t sink = 0;
        for (int r = 0; r < cfg.reps; ++r) {
            samples.push_back(time_ms([&] { sink += fn(); }));
        }
        asm volatile("" : : "r"(sink) : "memory"); // keep the work observable
        set_thread_budget(prev);
        rows.push_back({method, n, m_eff, cfg.k, median_ms(samples)});
    };

    bench_one("fps_ball", cfg.m, run_point_path, 1);
    bench_one("projected", m_grid, run_projected_path, 1);
    if (cfg.threads > 1) {
        bench_one("fps_ball_mt", cfg.m, run_point_path, cfg.threads);
        bench_one("projected_mt", m_grid, run_projected_path, cfg.threads);
    }
    return rows;
}

std::string bench_csv_header() { return "method,n,M,k,median_ms"; }

std::string bench_csv_row(const BenchRow& row) {
    std::ostringstream os;
    os << row.method << "," << row.n << "," << row.m << "," << row.k << "," << row.median_ms;
    return os.str();
}

} // namespace ppseg
