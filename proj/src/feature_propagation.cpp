#include "ppseg/feature_propagation.hpp"

#include <cmath>

namespace ppseg {

FpVariant fp_variant_from_string(const std::string& s) {
    if (s == "plain") return FpVariant::plain;
    if (s == "spider") return FpVariant::spider;
    if (s == "pointconv") return FpVariant::pointconv;
    throw ConfigError("unknown feature-propagation variant '" + s + "'");
}

const char* to_string(FpVariant v) {
    switch (v) {
        case FpVariant::plain: return "plain";
        case FpVariant::spider: return "spider";
        case FpVariant::pointconv: return "pointconv";
    }
    return "?";
}

GatherPlan build_interpolation_plan(const NeighborhoodBundle& bundle, double p,
                                    const GridLevel& coarse) {
    if (p <= 0.0) throw ConfigError("interpolation: exponent p must be positive");
    const int64_t m = bundle.centers();
    const int64_t k2 = bundle.slots();
    const int64_t npix = static_cast<int64_t>(bundle.fine_h) * bundle.fine_w;
    const double* invd = bundle.inv_dist.data();

    GatherPlan plan;
    plan.n_out = npix;
    plan.n_src = m;

    // count entries per fine pixel (slot weights already carry the mask)
    std::vector<int64_t> count(static_cast<size_t>(npix), 0);
    for (int64_t c = 0; c < m; ++c) {
        for (int64_t s = 0; s < k2; ++s) {
            if (invd[c * k2 + s] > 0.0) {
                ++count[static_cast<size_t>(bundle.fine_index[static_cast<size_t>(c * k2 + s)])];
            }
        }
    }
    plan.offsets.assign(static_cast<size_t>(npix) + 1, 0);
    for (int64_t f = 0; f < npix; ++f) {
        plan.offsets[static_cast<size_t>(f) + 1] =
            plan.offsets[static_cast<size_t>(f)] + std::max<int64_t>(count[static_cast<size_t>(f)], 1);
    }
    const int64_t total = plan.offsets.back();
    plan.src_index.assign(static_cast<size_t>(total), -1);
    plan.weight.assign(static_cast<size_t>(total), 0.0);

    std::vector<int64_t> cursor(plan.offsets.begin(), plan.offsets.end() - 1);
    for (int64_t c = 0; c < m; ++c) {
        for (int64_t s = 0; s < k2; ++s) {
            const double w = invd[c * k2 + s];
            if (w <= 0.0) continue;
            const int64_t f = bundle.fine_index[static_cast<size_t>(c * k2 + s)];
            const int64_t e = cursor[static_cast<size_t>(f)]++;
            plan.src_index[static_cast<size_t>(e)] = static_cast<int32_t>(c);
            plan.weight[static_cast<size_t>(e)] = std::pow(w, p);
        }
    }

    // normalize covered pixels; uncovered ones copy the nearest valid sample
    for (int64_t f = 0; f < npix; ++f) {
        const int64_t lo = plan.offsets[static_cast<size_t>(f)];
        const int64_t hi = plan.offsets[static_cast<size_t>(f) + 1];
        if (count[static_cast<size_t>(f)] > 0) {
            double sum = 0.0;
            for (int64_t e = lo; e < hi; ++e) sum += plan.weight[static_cast<size_t>(e)];
            for (int64_t e = lo; e < hi; ++e) plan.weight[static_cast<size_t>(e)] /= sum;
            continue;
        }
        // fallback: nearest valid coarse sample in fine-grid coordinates,
        // columns measured around the ring; ties resolve row-major
        const int fv = static_cast<int>(f / bundle.fine_w);
        const int fu = static_cast<int>(f % bundle.fine_w);
        int64_t best = -1;
        int64_t best_d2 = 0;
        for (int64_t c = 0; c < m; ++c) {
            if (!coarse.valid[static_cast<size_t>(c)]) continue;
            const int dv = fv - coarse.parent_row[static_cast<size_t>(c)];
            int du = std::abs(fu - coarse.parent_col[static_cast<size_t>(c)]);
            du = std::min(du, bundle.fine_w - du);
            const int64_t d2 = static_cast<int64_t>(dv) * dv + static_cast<int64_t>(du) * du;
            if (best < 0 || d2 < best_d2) {
                best = c;
                best_d2 = d2;
            }
        }
        if (best >= 0) {
            plan.src_index[static_cast<size_t>(lo)] = static_cast<int32_t>(best);
            plan.weight[static_cast<size_t>(lo)] = 1.0;
        }
        // else: no valid sample anywhere; the padded entry keeps index -1
    }

    // drop padded entries that stayed unused
    for (size_t e = 0; e < plan.src_index.size(); ++e) {
        if (plan.src_index[e] < 0) {
            plan.src_index[e] = 0;
            plan.weight[e] = 0.0;
        }
    }
    return plan;
}

Tensor interpolate(const Tensor& coarse_feats, const GatherPlan& plan, int fine_h, int fine_w) {
    const int64_t c = coarse_feats.dim(-1);
    Tensor flat = coarse_feats.reshaped({plan.n_src, c});
    Tensor out = weighted_gather(flat, plan);
    return out.reshaped({fine_h, fine_w, c});
}

int64_t FpStageConfig::out_channels() const {
    return variant == FpVariant::plain ? mlp.out_width() : mlp_out.out_width();
}

void FpStageConfig::validate(int64_t concat_channels) const {
    if (p <= 0.0) throw ConfigError("fp stage: p must be positive");
    if (variant == FpVariant::plain) {
        mlp.validate();
        if (mlp.in_width() != concat_channels) {
            throw ConfigError("fp stage: mlp input width " + std::to_string(mlp.in_width()) +
                              " != concatenated channels " + std::to_string(concat_channels));
        }
        return;
    }
    mlp_in.validate();
    mlp_out.validate();
    weightnet.validate();
    if (mlp_in.in_width() != concat_channels + 3) {
        throw ConfigError("fp stage: mlp_in width " + std::to_string(mlp_in.in_width()) +
                          " != concatenated channels + xyz " + std::to_string(concat_channels + 3));
    }
    if (weightnet.in_width() != 3 || weightnet.out_width() != c_mid) {
        throw ConfigError("fp stage: weightnet must map 3 -> c_mid");
    }
    if (mlp_out.in_width() != mlp_in.out_width() * c_mid) {
        throw ConfigError("fp stage: mlp_out input != c_f*c_mid");
    }
    if (variant == FpVariant::pointconv) {
        densitynet.validate();
        if (densitynet.in_width() != 1) throw ConfigError("fp stage: densitynet consumes a scalar");
    }
}

FpStage::FpStage(const FpStageConfig& cfg, const std::string& prefix) : cfg_(cfg) {
    if (cfg_.variant == FpVariant::plain) {
        mlp_ = Mlp(cfg_.mlp, prefix + ".mlp");
        return;
    }
    mlp_in_ = Mlp(cfg_.mlp_in, prefix + ".mlp_in");
    mlp_out_ = Mlp(cfg_.mlp_out, prefix + ".mlp_out");
    weightnet_ = Mlp(cfg_.weightnet, prefix + ".weightnet");
    if (cfg_.variant == FpVariant::pointconv) {
        densitynet_ = Mlp(cfg_.densitynet, prefix + ".densitynet");
    }
}

Tensor FpStage::forward(const Tensor& coarse_feats, const Tensor& skip, const GatherPlan& plan,
                        const GridLevel& fine_level, const GroupingConfig& fine_grouping) const {
    Tensor interp = interpolate(coarse_feats, plan, fine_level.h, fine_level.w);
    Tensor cat = skip.defined() ? concat_last(interp, skip) : interp;
    switch (cfg_.variant) {
        case FpVariant::plain: return mlp_.forward(cat);
        case FpVariant::spider:
        case FpVariant::pointconv: {
            NeighborhoodBundle fb =
                build_bundle(fine_level, identity_coarse(fine_level), cat, fine_grouping);
            if (cfg_.variant == FpVariant::spider) {
                return sa_spidercnn(fb, mlp_in_, weightnet_, mlp_out_);
            }
            return sa_pointconv(fb, mlp_in_, weightnet_, densitynet_, mlp_out_);
        }
    }
    throw UsageError("fp stage: bad variant");
}

std::vector<Tensor> FpStage::parameters() const {
    std::vector<Tensor> out;
    auto append = [&out](const Mlp& m) {
        if (!m.defined()) return;
        auto p = m.parameters();
        out.insert(out.end(), p.begin(), p.end());
    };
    append(mlp_);
    append(mlp_in_);
    append(mlp_out_);
    append(weightnet_);
    append(densitynet_);
    return out;
}

} // namespace ppseg
