#pragma once

#include <cstdint>
#include <vector>

#include "ppseg/lidar_io.hpp"
#include "ppseg/tensor.hpp"

namespace ppseg {

struct ProjectionConfig {
    int height = 64;
    int width = 512;
    double fov_up = 3.0 * 3.14159265358979323846 / 180.0;    // radians
    double fov_down = -25.0 * 3.14159265358979323846 / 180.0;

    static ProjectionConfig from_degrees(int h, int w, double up_deg, double down_deg);
    void validate() const;
};

// Spherical projection of a scan. channels is (H, W, 5) = x, y, z, range,
// remission; invalid pixels carry zeros. pix2pt maps a pixel to the winning
// (nearest) point; pt2pix maps every point to its pixel (linear v*W+u), -1
// only for skipped zero-range points.
struct RangeImage {
    int h = 0, w = 0;
    Tensor channels;
    std::vector<uint8_t> valid;
    std::vector<int32_t> pix2pt;
    std::vector<int32_t> pt2pix;
    int64_t skipped = 0;

    int64_t pixels() const { return static_cast<int64_t>(h) * w; }
};

// Pixel of one point under the projection formula (pre-collision).
// Returns false for zero-range points.
bool project_point(double x, double y, double z, const ProjectionConfig& cfg,
                   int& v, int& u);

RangeImage project(const PointCloud& cloud, const ProjectionConfig& cfg);

// Per-point predictions from per-pixel predictions via pt2pix. Skipped points
// receive kIgnoreClass.
std::vector<int32_t> unproject(const RangeImage& image, const std::vector<int32_t>& pixel_pred);

// Per-pixel train labels: winning point's label where valid, ignore elsewhere.
std::vector<int32_t> pixel_labels(const RangeImage& image, const PointCloud& cloud);

} // namespace ppseg
