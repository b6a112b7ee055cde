#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppseg/grouping.hpp"
#include "ppseg/lidar_io.hpp"
#include "ppseg/range_projection.hpp"

// Reference point-domain machinery: farthest point sampling and brute-force
// ball query. These are the correctness oracles for the projected grouping
// and the slow side of the benchmark comparison.

namespace ppseg {

// Greedy max-min selection, seeded at index 0; ties pick the lowest index.
// O(n*m). Throws UsageError if m is out of [1, n].
std::vector<int64_t> fps(const PointCloud& cloud, int64_t m);

// Exact index set { i : ||p_i - center|| <= radius }, ascending. O(n).
std::vector<int32_t> ball_query(const PointCloud& cloud, double cx, double cy, double cz,
                                double radius);

struct BenchConfig {
    int64_t n = 120000;
    int64_t m = 2048;
    int k = 5;
    double radius = 1.0;
    int reps = 5;
    int height = 64;
    int width = 512;
    uint64_t seed = 1;
    int threads = 1; // >1 adds parallel rows, reported separately
};

struct BenchRow {
    std::string method;
    int64_t n = 0;
    int64_t m = 0;
    int k = 0;
    double median_ms = 0.0;
};

// Times (a) fps + ball query over all sampled centers and (b) projection +
// grid sample + unfold + localize, on the same synthetic cloud. Medians over
// cfg.reps runs.
std::vector<BenchRow> bench_compare(const PointCloud& cloud, const BenchConfig& cfg);

std::string bench_csv_header();
std::string bench_csv_row(const BenchRow& row);

} // namespace ppseg
