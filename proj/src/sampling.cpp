#include "ppseg/sampling.hpp"

#include <cstring>

namespace ppseg {

GridLevel level_from_range_image(const RangeImage& image) {
    GridLevel lvl;
    lvl.h = image.h;
    lvl.w = image.w;
    lvl.geom = image.channels;
    lvl.valid = image.valid;
    lvl.pix2pt = image.pix2pt;
    lvl.parent_row.resize(static_cast<size_t>(lvl.pixels()));
    lvl.parent_col.resize(static_cast<size_t>(lvl.pixels()));
    for (int v = 0; v < lvl.h; ++v) {
        for (int u = 0; u < lvl.w; ++u) {
            lvl.parent_row[static_cast<size_t>(v) * lvl.w + u] = v;
            lvl.parent_col[static_cast<size_t>(v) * lvl.w + u] = u;
        }
    }
    return lvl;
}

GridLevel sample(const GridLevel& fine, const SampleGrid& grid) {
    if (grid.out_h <= 0 || grid.out_w <= 0) {
        throw ConfigError("sample: output grid extents must be positive");
    }
    if (fine.h % grid.out_h != 0 || fine.w % grid.out_w != 0) {
        throw ConfigError("sample: strides must be integral: " + std::to_string(fine.h) + "x" +
                          std::to_string(fine.w) + " -> " + std::to_string(grid.out_h) + "x" +
                          std::to_string(grid.out_w));
    }
    const int sv = fine.h / grid.out_h;
    const int su = fine.w / grid.out_w;
    const int ov = grid.off_v >= 0 ? grid.off_v : sv / 2;
    const int ou = grid.off_u >= 0 ? grid.off_u : su / 2;
    if (ov >= sv || ou >= su) throw ConfigError("sample: anchor offset outside stride cell");

    GridLevel out;
    out.h = grid.out_h;
    out.w = grid.out_w;
    out.geom = Tensor::zeros({out.h, out.w, 5});
    out.valid.assign(static_cast<size_t>(out.pixels()), 0);
    out.parent_row.assign(static_cast<size_t>(out.pixels()), -1);
    out.parent_col.assign(static_cast<size_t>(out.pixels()), -1);
    out.pix2pt.assign(static_cast<size_t>(out.pixels()), -1);

    const double* fg = fine.geom.data();
    double* og = out.geom.data();
    for (int i = 0; i < out.h; ++i) {
        for (int j = 0; j < out.w; ++j) {
            const int av = i * sv + ov; // anchor
            const int au = j * su + ou;
            int pick_v = -1, pick_u = -1;
            if (fine.valid[static_cast<size_t>(av) * fine.w + au]) {
                pick_v = av;
                pick_u = au;
            } else {
                // nearest valid pixel inside the stride cell
                int64_t best = -1;
                for (int dv = 0; dv < sv; ++dv) {
                    for (int du = 0; du < su; ++du) {
                        const int v = i * sv + dv;
                        const int u = j * su + du;
                        if (!fine.valid[static_cast<size_t>(v) * fine.w + u]) continue;
                        const int64_t d2 = static_cast<int64_t>(v - av) * (v - av) +
                                           static_cast<int64_t>(u - au) * (u - au);
                        if (best < 0 || d2 < best) { // row-major scan breaks ties
                            best = d2;
                            pick_v = v;
                            pick_u = u;
                        }
                    }
                }
            }
            const int64_t opix = static_cast<int64_t>(i) * out.w + j;
            if (pick_v < 0) {
                // whole cell invalid: keep the anchor as the window center so
                // downstream unfolds stay well-defined; valid stays 0
                out.parent_row[static_cast<size_t>(opix)] = av;
                out.parent_col[static_cast<size_t>(opix)] = au;
                continue;
            }
            const int64_t fpix = static_cast<int64_t>(pick_v) * fine.w + pick_u;
            out.valid[static_cast<size_t>(opix)] = 1;
            out.parent_row[static_cast<size_t>(opix)] = pick_v;
            out.parent_col[static_cast<size_t>(opix)] = pick_u;
            if (!fine.pix2pt.empty()) {
                out.pix2pt[static_cast<size_t>(opix)] = fine.pix2pt[static_cast<size_t>(fpix)];
            }
            std::memcpy(og + opix * 5, fg + fpix * 5, 5 * sizeof(double));
        }
    }
    return out;
}

GridLevel identity_coarse(const GridLevel& level) {
    GridLevel out = level;
    for (int v = 0; v < out.h; ++v) {
        for (int u = 0; u < out.w; ++u) {
            out.parent_row[static_cast<size_t>(v) * out.w + u] = v;
            out.parent_col[static_cast<size_t>(v) * out.w + u] = u;
        }
    }
    return out;
}

} // namespace ppseg
