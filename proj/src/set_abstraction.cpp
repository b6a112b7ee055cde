#include "ppseg/set_abstraction.hpp"

namespace ppseg {

SaVariant sa_variant_from_string(const std::string& s) {
    if (s == "pointnet") return SaVariant::pointnet;
    if (s == "spidercnn") return SaVariant::spidercnn;
    if (s == "pointconv") return SaVariant::pointconv;
    throw ConfigError("unknown set-abstraction variant '" + s + "'");
}

const char* to_string(SaVariant v) {
    switch (v) {
        case SaVariant::pointnet: return "pointnet";
        case SaVariant::spidercnn: return "spidercnn";
        case SaVariant::pointconv: return "pointconv";
    }
    return "?";
}

Tensor sa_pointnet(const NeighborhoodBundle& b, const Mlp& mlp) {
    // mask duplicated over channels by broadcasting
    Tensor masked = ewise_mul(b.f_in, b.mask);
    Tensor h = mlp.forward(masked);
    return max_pool_axis(h, 2).values;
}

namespace {

// Shared slot contraction of the soft variants. The density gate, when
// present, multiplies the feature branch before the contraction; gating with
// an all-ones tensor reproduces the spidercnn result bit for bit.
Tensor soft_aggregate(const NeighborhoodBundle& b, const Mlp& mlp_in, const Mlp& weightnet,
                      const Mlp* densitynet, const Mlp& mlp_out) {
    const int64_t hh = b.coarse_h, ww = b.coarse_w;
    const int64_t k2 = b.f_in.dim(2); // slot axis from the tensor, not k*k
    Tensor feats = mlp_in.forward(b.f_in); // (H', W', k2, c_f)
    if (densitynet) {
        Tensor gate = densitynet->forward(b.inv_density);      // (H', W', 1)
        gate = gate.reshaped({hh, ww, 1, 1});                  // broadcast over slots+channels
        feats = ewise_mul(feats, gate);
    }
    Tensor wts = weightnet.forward(b.local_p); // (H', W', k2, c_mid)
    wts = ewise_mul(wts, b.mask);              // out-of-radius slots contribute nothing
    const int64_t cf = feats.dim(-1);
    const int64_t cm = wts.dim(-1);
    // contract the slot axis: (c_f, k2) x (k2, c_mid) per pixel
    Tensor a = transpose_last2(feats.reshaped({hh * ww, k2, cf})); // (M, c_f, k2)
    Tensor bt = wts.reshaped({hh * ww, k2, cm});
    Tensor f = matmul(a, bt); // (M, c_f, c_mid)
    f = f.reshaped({hh, ww, cf * cm});
    return mlp_out.forward(f);
}

} // namespace

Tensor sa_spidercnn(const NeighborhoodBundle& b, const Mlp& mlp_in, const Mlp& weightnet,
                    const Mlp& mlp_out) {
    return soft_aggregate(b, mlp_in, weightnet, nullptr, mlp_out);
}

Tensor sa_pointconv(const NeighborhoodBundle& b, const Mlp& mlp_in, const Mlp& weightnet,
                    const Mlp& densitynet, const Mlp& mlp_out) {
    return soft_aggregate(b, mlp_in, weightnet, &densitynet, mlp_out);
}

int64_t SaStageConfig::out_channels() const {
    return variant == SaVariant::pointnet ? mlp.out_width() : mlp_out.out_width();
}

void SaStageConfig::validate(int64_t in_channels) const {
    if (variant == SaVariant::pointnet) {
        mlp.validate();
        if (mlp.in_width() != in_channels) {
            throw ConfigError("sa stage: mlp input width " + std::to_string(mlp.in_width()) +
                              " != grouped channel count " + std::to_string(in_channels));
        }
        return;
    }
    mlp_in.validate();
    mlp_out.validate();
    weightnet.validate();
    if (mlp_in.in_width() != in_channels) {
        throw ConfigError("sa stage: mlp_in width " + std::to_string(mlp_in.in_width()) +
                          " != grouped channel count " + std::to_string(in_channels));
    }
    if (weightnet.in_width() != 3) throw ConfigError("sa stage: weightnet must consume 3 channels");
    if (weightnet.out_width() != c_mid) {
        throw ConfigError("sa stage: weightnet output " + std::to_string(weightnet.out_width()) +
                          " != c_mid " + std::to_string(c_mid));
    }
    if (mlp_out.in_width() != mlp_in.out_width() * c_mid) {
        throw ConfigError("sa stage: mlp_out input " + std::to_string(mlp_out.in_width()) +
                          " != c_f*c_mid " + std::to_string(mlp_in.out_width() * c_mid));
    }
    if (variant == SaVariant::pointconv) {
        densitynet.validate();
        if (densitynet.in_width() != 1) {
            throw ConfigError("sa stage: densitynet consumes the scalar density");
        }
    }
}

SaStage::SaStage(const SaStageConfig& cfg, const std::string& prefix) : cfg_(cfg) {
    if (cfg_.variant == SaVariant::pointnet) {
        mlp_ = Mlp(cfg_.mlp, prefix + ".mlp");
        return;
    }
    mlp_in_ = Mlp(cfg_.mlp_in, prefix + ".mlp_in");
    mlp_out_ = Mlp(cfg_.mlp_out, prefix + ".mlp_out");
    weightnet_ = Mlp(cfg_.weightnet, prefix + ".weightnet");
    if (cfg_.variant == SaVariant::pointconv) {
        densitynet_ = Mlp(cfg_.densitynet, prefix + ".densitynet");
    }
}

Tensor SaStage::forward(const NeighborhoodBundle& b) const {
    switch (cfg_.variant) {
        case SaVariant::pointnet: return sa_pointnet(b, mlp_);
        case SaVariant::spidercnn: return sa_spidercnn(b, mlp_in_, weightnet_, mlp_out_);
        case SaVariant::pointconv:
            return sa_pointconv(b, mlp_in_, weightnet_, densitynet_, mlp_out_);
    }
    throw UsageError("sa stage: bad variant");
}

std::vector<Tensor> SaStage::parameters() const {
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
