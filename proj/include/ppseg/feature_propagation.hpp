#pragma once

#include <string>

#include "ppseg/grouping.hpp"
#include "ppseg/mlp.hpp"
#include "ppseg/set_abstraction.hpp"

namespace ppseg {

enum class FpVariant { plain, spider, pointconv };

FpVariant fp_variant_from_string(const std::string& s);
const char* to_string(FpVariant v);

// Scatter plan for inverse-distance interpolation: every coarse sample
// distributes its feature to the fine pixels of its window with weight
// inv_dist^p; weights are normalized per fine pixel. Fine pixels reached by
// no window copy the nearest valid coarse sample (weight 1).
GatherPlan build_interpolation_plan(const NeighborhoodBundle& bundle, double p,
                                    const GridLevel& coarse);

// coarse (H', W', C) -> fine (H, W, C) through the plan. Differentiable.
Tensor interpolate(const Tensor& coarse_feats, const GatherPlan& plan, int fine_h, int fine_w);

struct FpStageConfig {
    FpVariant variant = FpVariant::plain;
    double p = 2.0;  // inverse-distance exponent
    MlpSpec mlp;     // plain head
    // spider/pointconv heads re-group at the fine level and run the
    // set-abstraction pipeline on the concatenated features.
    MlpSpec mlp_in;
    MlpSpec mlp_out;
    MlpSpec weightnet;
    MlpSpec densitynet;
    int64_t c_mid = 0;

    int64_t out_channels() const;
    void validate(int64_t concat_channels) const;
};

class FpStage {
public:
    FpStage() = default;
    FpStage(const FpStageConfig& cfg, const std::string& prefix);

    // coarse_feats (H', W', C) interpolated through `plan`, concatenated with
    // skip (H, W, C_skip), then the head. The soft heads build a stride-1
    // bundle over `fine_level` with `fine_grouping`.
    Tensor forward(const Tensor& coarse_feats, const Tensor& skip, const GatherPlan& plan,
                   const GridLevel& fine_level, const GroupingConfig& fine_grouping) const;

    std::vector<Tensor> parameters() const;
    const FpStageConfig& config() const { return cfg_; }
    int64_t out_channels() const { return cfg_.out_channels(); }

private:
    FpStageConfig cfg_;
    Mlp mlp_, mlp_in_, mlp_out_, weightnet_, densitynet_;
};

} // namespace ppseg
