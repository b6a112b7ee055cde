#include "ppseg/grouping.hpp"

#include <cmath>
#include <cstring>

#include "ppseg/parallel.hpp"
#include "ppseg/simd/kernels.hpp"

namespace ppseg {

void GroupingConfig::validate() const {
    if (k <= 0 || k % 2 == 0) {
        throw ConfigError("grouping: window side k must be odd and positive, got " +
                          std::to_string(k));
    }
    if (radius <= 0.0) throw ConfigError("grouping: radius must be positive");
    if (sigma <= 0.0) throw ConfigError("grouping: sigma must be positive");
}

std::vector<int32_t> build_unfold_index(const GridLevel& fine, const GridLevel& coarse,
                                        int k, int dil_v, int dil_u) {
    if (k <= 0 || k % 2 == 0) {
        throw ConfigError("unfold: window side k must be odd, got " + std::to_string(k));
    }
    const int half = k / 2;
    const int64_t m = coarse.pixels();
    std::vector<int32_t> idx(static_cast<size_t>(m) * k * k);
    for (int64_t c = 0; c < m; ++c) {
        const int vc = coarse.parent_row[static_cast<size_t>(c)];
        const int uc = coarse.parent_col[static_cast<size_t>(c)];
        int32_t* out = idx.data() + c * k * k;
        for (int a = 0; a < k; ++a) {
            int v = vc + (a - half) * dil_v;
            v = v < 0 ? 0 : (v >= fine.h ? fine.h - 1 : v); // rows clamp
            for (int b = 0; b < k; ++b) {
                int u = uc + (b - half) * dil_u;
                u %= fine.w; // columns wrap: a full 360 degree ring
                if (u < 0) u += fine.w;
                out[a * k + b] = static_cast<int32_t>(v * fine.w + u);
            }
        }
    }
    return idx;
}

Tensor unfold(const Tensor& fine_feats, const std::vector<int32_t>& fine_index,
              int coarse_h, int coarse_w, int k2) {
    const int64_t c = fine_feats.dim(-1);
    const int64_t rows = fine_feats.numel() / c;
    Tensor flat = fine_feats.reshaped({rows, c});
    Tensor gathered = gather_rows(flat, fine_index);
    return gathered.reshaped({coarse_h, coarse_w, k2, c});
}

NeighborhoodBundle build_bundle(const GridLevel& fine, const GridLevel& coarse,
                                const Tensor& features, const GroupingConfig& cfg) {
    cfg.validate();
    if (fine.h % coarse.h != 0 || fine.w % coarse.w != 0) {
        throw ConfigError("build_bundle: coarse grid does not divide the fine grid");
    }
    if (features.ndim() != 3 || features.dim(0) != fine.h || features.dim(1) != fine.w) {
        throw DimensionError("build_bundle: features shape " + shape_str(features.shape()) +
                             " does not match level " + std::to_string(fine.h) + "x" +
                             std::to_string(fine.w));
    }
    const int dil_v = fine.h / coarse.h;
    const int dil_u = fine.w / coarse.w;
    const int k = cfg.k;
    const int k2 = k * k;
    const int64_t m = coarse.pixels();

    NeighborhoodBundle b;
    b.fine_h = fine.h;
    b.fine_w = fine.w;
    b.coarse_h = coarse.h;
    b.coarse_w = coarse.w;
    b.k = k;
    b.fine_index = build_unfold_index(fine, coarse, k, dil_v, dil_u);

    // xyz channels come from the level geometry; features follow.
    Tensor xyz = Tensor::zeros({fine.h, fine.w, 3});
    {
        const double* g = fine.geom.data();
        double* xd = xyz.data();
        const int64_t npix = fine.pixels();
        for (int64_t p = 0; p < npix; ++p) {
            xd[p * 3 + 0] = g[p * 5 + 0];
            xd[p * 3 + 1] = g[p * 5 + 1];
            xd[p * 3 + 2] = g[p * 5 + 2];
        }
    }
    Tensor full = concat_last(xyz, features);
    b.f_in = unfold(full, b.fine_index, coarse.h, coarse.w, k2);

    // Geometry SoA for the localize kernel.
    const int64_t nslots = m * k2;
    std::vector<double> nx(static_cast<size_t>(nslots)), ny(static_cast<size_t>(nslots)),
        nz(static_cast<size_t>(nslots));
    std::vector<uint8_t> nvalid(static_cast<size_t>(nslots));
    {
        const double* g = fine.geom.data();
        for (int64_t s = 0; s < nslots; ++s) {
            const int32_t pix = b.fine_index[static_cast<size_t>(s)];
            nx[static_cast<size_t>(s)] = g[static_cast<int64_t>(pix) * 5 + 0];
            ny[static_cast<size_t>(s)] = g[static_cast<int64_t>(pix) * 5 + 1];
            nz[static_cast<size_t>(s)] = g[static_cast<int64_t>(pix) * 5 + 2];
            nvalid[static_cast<size_t>(s)] = fine.valid[static_cast<size_t>(pix)];
        }
    }

    b.local_p = Tensor::zeros({coarse.h, coarse.w, k2, 3});
    b.dist = Tensor::zeros({coarse.h, coarse.w, k2, 1});
    b.mask = Tensor::zeros({coarse.h, coarse.w, k2, 1});
    b.inv_dist = Tensor::zeros({coarse.h, coarse.w, k2, 1});
    b.inv_density = Tensor::zeros({coarse.h, coarse.w, 1});

    std::vector<double> px(static_cast<size_t>(nslots)), py(static_cast<size_t>(nslots)),
        pz(static_cast<size_t>(nslots));
    double* distd = b.dist.data();
    double* maskd = b.mask.data();
    double* invdd = b.inv_dist.data();
    const double* cg = coarse.geom.data();
    const auto& kern = simd::kernels();
    parallel_for(m, [&](int64_t lo, int64_t hi) {
        for (int64_t c = lo; c < hi; ++c) {
            const int64_t base = c * k2;
            kern.localize_run(nx.data() + base, ny.data() + base, nz.data() + base,
                              nvalid.data() + base, cg[c * 5 + 0], cg[c * 5 + 1], cg[c * 5 + 2],
                              coarse.valid[static_cast<size_t>(c)] != 0, cfg.radius, kInvDistEps,
                              k2, px.data() + base, py.data() + base, pz.data() + base,
                              distd + base, maskd + base, invdd + base);
        }
    }, /*grain=*/64);

    {
        double* pd = b.local_p.data();
        for (int64_t s = 0; s < nslots; ++s) {
            pd[s * 3 + 0] = px[static_cast<size_t>(s)];
            pd[s * 3 + 1] = py[static_cast<size_t>(s)];
            pd[s * 3 + 2] = pz[static_cast<size_t>(s)];
        }
    }

    // Inverse kernel density, rescaled by the per-image maximum into (0, 1].
    {
        double* dd = b.inv_density.data();
        const double inv_two_sigma_sq = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
        double dmax = 0.0;
        for (int64_t c = 0; c < m; ++c) {
            if (!coarse.valid[static_cast<size_t>(c)]) {
                dd[c] = 0.0;
                continue;
            }
            const double density =
                kern.density_sum(distd + c * k2, maskd + c * k2, k2, inv_two_sigma_sq);
            dd[c] = 1.0 / density; // self-slot contributes exp(0)=1, so density >= 1
            dmax = std::max(dmax, dd[c]);
        }
        if (dmax > 0.0) {
            for (int64_t c = 0; c < m; ++c) dd[c] /= dmax;
        }
    }
    return b;
}

} // namespace ppseg
