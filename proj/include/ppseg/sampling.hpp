#pragma once

#include <cstdint>
#include <vector>

#include "ppseg/range_projection.hpp"
#include "ppseg/tensor.hpp"

namespace ppseg {

// Uniform grid over a finer level. Strides must divide the fine extents;
// offsets default to the cell center.
struct SampleGrid {
    int out_h = 0;
    int out_w = 0;
    int off_v = -1; // -1 -> stride/2
    int off_u = -1;
};

// One resolution level of the image pyramid. geom holds the raw projection
// channels (x, y, z, range, remission) carried down from the fine image;
// parent_row/col give the chosen fine pixel for every coarse cell (the unfold
// centers; the anchor pixel when the whole cell was invalid).
struct GridLevel {
    int h = 0, w = 0;
    Tensor geom; // (h, w, 5), no grad
    std::vector<uint8_t> valid;
    std::vector<int32_t> parent_row, parent_col;
    std::vector<int32_t> pix2pt;

    int64_t pixels() const { return static_cast<int64_t>(h) * w; }
};

GridLevel level_from_range_image(const RangeImage& image);

// Picks one fine pixel per stride cell: the anchor if valid, otherwise the
// valid cell pixel nearest to the anchor (squared grid distance, row-major
// tie-break), otherwise the coarse pixel is invalid. Always yields exactly
// out_h*out_w slots.
GridLevel sample(const GridLevel& fine, const SampleGrid& grid);

// A coarse view of the level itself: every pixel is its own parent. Used by
// the decoder heads that re-group at full resolution.
GridLevel identity_coarse(const GridLevel& level);

} // namespace ppseg
