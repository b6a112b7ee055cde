#include "ppseg/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ppseg/parallel.hpp"

namespace ppseg {

std::vector<int32_t> knn_refine(const RangeImage& image, const std::vector<int32_t>& pixel_pred,
                                const PointCloud& cloud, const KnnConfig& cfg) {
    if (cfg.window <= 0 || cfg.window % 2 == 0) {
        throw ConfigError("knn_refine: window side must be odd");
    }
    if (cfg.k < 1 || cfg.k > cfg.window * cfg.window) {
        throw ConfigError("knn_refine: vote count must be in [1, window^2]");
    }
    if (static_cast<int64_t>(pixel_pred.size()) != image.pixels()) {
        throw DimensionError("knn_refine: pixel prediction size mismatch");
    }
    const int half = cfg.window / 2;
    const double inv_two_sigma_sq = 1.0 / (2.0 * cfg.sigma_r * cfg.sigma_r);
    const double* ch = image.channels.data();
    std::vector<int32_t> out(static_cast<size_t>(cloud.n()), kIgnoreClass);

    parallel_for(cloud.n(), [&](int64_t lo, int64_t hi) {
        std::vector<std::pair<double, int64_t>> cand; // (range gap, window slot)
        std::vector<int32_t> cand_class;
        for (int64_t i = lo; i < hi; ++i) {
            const int32_t pix = image.pt2pix[static_cast<size_t>(i)];
            if (pix < 0) continue; // skipped point keeps ignore
            const int32_t unrefined = pixel_pred[static_cast<size_t>(pix)];
            const int pv = pix / image.w;
            const int pu = pix % image.w;
            const double rp = std::sqrt(cloud.x[static_cast<size_t>(i)] * cloud.x[static_cast<size_t>(i)] +
                                        cloud.y[static_cast<size_t>(i)] * cloud.y[static_cast<size_t>(i)] +
                                        cloud.z[static_cast<size_t>(i)] * cloud.z[static_cast<size_t>(i)]);
            cand.clear();
            cand_class.clear();
            for (int a = 0; a < cfg.window; ++a) {
                const int v = pv + a - half;
                if (v < 0 || v >= image.h) continue; // elevation does not wrap
                for (int b = 0; b < cfg.window; ++b) {
                    int u = pu + b - half;
                    u %= image.w;
                    if (u < 0) u += image.w;
                    const int64_t q = static_cast<int64_t>(v) * image.w + u;
                    if (!image.valid[static_cast<size_t>(q)]) continue;
                    const int32_t cls = pixel_pred[static_cast<size_t>(q)];
                    if (cls < 0) continue;
                    const double gap = std::abs(ch[q * 5 + 3] - rp);
                    cand.emplace_back(gap, static_cast<int64_t>(a) * cfg.window + b);
                    cand_class.push_back(cls);
                }
            }
            if (cand.empty()) {
                out[static_cast<size_t>(i)] = unrefined;
                continue;
            }
            // rank by range gap, window order breaking ties
            std::vector<size_t> order(cand.size());
            for (size_t j = 0; j < order.size(); ++j) order[j] = j;
            std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
                if (cand[x].first != cand[y].first) return cand[x].first < cand[y].first;
                return cand[x].second < cand[y].second;
            });
            std::map<int32_t, double> votes;
            const size_t take = std::min<size_t>(static_cast<size_t>(cfg.k), order.size());
            for (size_t j = 0; j < take; ++j) {
                const double gap = cand[order[j]].first;
                votes[cand_class[order[j]]] += std::exp(-gap * gap * inv_two_sigma_sq);
            }
            double best = -1.0;
            int32_t best_cls = unrefined;
            bool tie = false;
            for (const auto& [cls, wgt] : votes) {
                if (wgt > best) {
                    best = wgt;
                    best_cls = cls;
                    tie = false;
                } else if (wgt == best) {
                    tie = true;
                }
            }
            out[static_cast<size_t>(i)] = tie ? unrefined : best_cls;
        }
    }, /*grain=*/4096);
    return out;
}

} // namespace ppseg
