#pragma once

#include <vector>

#include "ppseg/range_projection.hpp"

namespace ppseg {

struct KnnConfig {
    int window = 5;      // odd window side
    int k = 5;           // votes, <= window^2
    double sigma_r = 1.0; // range-gap bandwidth, meters
};

// Range-image k-NN refinement: each point gathers the w x w pixels around its
// own pixel, ranks valid ones by |pixel range - point range|, and takes a
// Gaussian-weighted vote of the k nearest predictions. Ties fall back to the
// point's unrefined pixel prediction; points whose window holds no valid
// pixel keep it too.
std::vector<int32_t> knn_refine(const RangeImage& image, const std::vector<int32_t>& pixel_pred,
                                const PointCloud& cloud, const KnnConfig& cfg);

} // namespace ppseg
