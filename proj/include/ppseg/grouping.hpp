#pragma once

#include <cstdint>
#include <vector>

#include "ppseg/sampling.hpp"
#include "ppseg/tensor.hpp"

namespace ppseg {

struct GroupingConfig {
    int k = 5;           // window side, odd
    double radius = 1.0; // meters
    double sigma = 0.5;  // density kernel bandwidth, meters

    void validate() const;
};

// Guard added to the center slot's zero distance before inversion.
constexpr double kInvDistEps = 1e-8;

// Unfolded k x k neighborhood tensors around every sampled point.
//
//   f_in        (H', W', k^2, 3+C)  xyz then features, tape-connected
//   local_p     (H', W', k^2, 3)    neighbor minus center
//   dist        (H', W', k^2, 1)    ||local_p||
//   mask        (H', W', k^2, 1)    1 iff dist <= radius and both pixels valid
//   inv_dist    (H', W', k^2, 1)    mask / max(dist, eps)
//   inv_density (H', W', 1)         rescaled reciprocal kernel density
//
// fine_index holds the resolved fine pixel per slot (rows clamped at the
// image border, columns wrapped modulo W).
struct NeighborhoodBundle {
    int fine_h = 0, fine_w = 0;
    int coarse_h = 0, coarse_w = 0;
    int k = 0;
    std::vector<int32_t> fine_index; // M * k^2
    Tensor f_in;
    Tensor local_p;
    Tensor dist;
    Tensor mask;
    Tensor inv_dist;
    Tensor inv_density;

    int64_t slots() const { return static_cast<int64_t>(k) * k; }
    int64_t centers() const { return static_cast<int64_t>(coarse_h) * coarse_w; }
};

// Slot -> fine pixel map for a k x k window dilated by (dil_v, dil_u) around
// each coarse center. Rows clamp at the top/bottom, columns wrap (the scan is
// a closed azimuthal ring).
std::vector<int32_t> build_unfold_index(const GridLevel& fine, const GridLevel& coarse,
                                        int k, int dil_v, int dil_u);

// Copies each center's window rows of `fine_feats` (H*W, C) into
// (H', W', k^2, C). Differentiable (gather).
Tensor unfold(const Tensor& fine_feats, const std::vector<int32_t>& fine_index,
              int coarse_h, int coarse_w, int k2);

// Full bundle: unfold geometry+features, localize, mask, invert distances,
// and estimate density. `features` is (H, W, C) without coordinates; the
// coordinate channels prepended to f_in come from `feature_xyz` (H, W, 3)
// when given, else from the raw level geometry, giving channel width 3+C.
// Distances and masks always use the raw geometry. Window dilation = the
// sampling strides between fine and coarse.
NeighborhoodBundle build_bundle(const GridLevel& fine, const GridLevel& coarse,
                                const Tensor& features, const GroupingConfig& cfg,
                                const Tensor* feature_xyz = nullptr);

} // namespace ppseg
