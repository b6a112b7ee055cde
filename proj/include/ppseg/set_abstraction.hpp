#pragma once

#include <string>

#include "ppseg/grouping.hpp"
#include "ppseg/mlp.hpp"
#include "ppseg/tensor.hpp"

namespace ppseg {

enum class SaVariant { pointnet, spidercnn, pointconv };

SaVariant sa_variant_from_string(const std::string& s);
const char* to_string(SaVariant v);

// Pointwise-network aggregation over a neighborhood bundle. Three flavors:
//
//   pointnet : Pooling(MLP(F_in (x) M))           max over the k^2 slots
//   spidercnn: MLP_out(MLP_in(F_in) (*) (WeightNet(P) (x) M))
//   pointconv: as spidercnn with the feature branch gated by DensityNet(D)
//
// (x) is broadcast elementwise product, (*) contracts the slot axis.
// All return (H', W', C_out).
Tensor sa_pointnet(const NeighborhoodBundle& b, const Mlp& mlp);
Tensor sa_spidercnn(const NeighborhoodBundle& b, const Mlp& mlp_in, const Mlp& weightnet,
                    const Mlp& mlp_out);
Tensor sa_pointconv(const NeighborhoodBundle& b, const Mlp& mlp_in, const Mlp& weightnet,
                    const Mlp& densitynet, const Mlp& mlp_out);

// Network descriptors for one set-abstraction stage.
struct SaStageConfig {
    SaVariant variant = SaVariant::pointnet;
    MlpSpec mlp;        // pointnet
    MlpSpec mlp_in;     // soft variants
    MlpSpec mlp_out;
    MlpSpec weightnet;  // 3 -> c_mid
    MlpSpec densitynet; // 1 -> 1 (pointconv)
    int64_t c_mid = 0;

    int64_t out_channels() const;
    void validate(int64_t in_channels) const;
};

class SaStage {
public:
    SaStage() = default;
    SaStage(const SaStageConfig& cfg, const std::string& prefix);

    Tensor forward(const NeighborhoodBundle& b) const;
    std::vector<Tensor> parameters() const;
    const SaStageConfig& config() const { return cfg_; }
    int64_t out_channels() const { return cfg_.out_channels(); }

private:
    SaStageConfig cfg_;
    Mlp mlp_, mlp_in_, mlp_out_, weightnet_, densitynet_;
};

} // namespace ppseg
