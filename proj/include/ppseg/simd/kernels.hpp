#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

// Data-parallel inner-loop kernels. Every kernel has a scalar reference
// implementation plus optional AVX2/NEON variants in separate translation
// units; the active table is picked once at startup from CPU features (or the
// PPSEG_SIMD environment variable) and every variant is equivalence-tested
// against the scalar reference.
//
// Two accuracy classes:
//   exact     - elementwise kernels; SIMD variants keep the scalar operation
//               order and rounding (no FMA), so results are bitwise equal.
//   reduction - dot-product style kernels; SIMD variants use FMA and multiple
//               accumulators, so results agree only to rounding error.
// The grouping geometry kernel (localize_run) is deliberately in the exact
// class: neighborhood masks are comparisons against a radius and must not
// depend on the instruction set.

namespace ppseg::simd {

struct KernelTable {
    const char* name;

    // exact: out[i] = a[i] + b[i] / a[i] * b[i] / s * x[i]
    void (*add)(double* out, const double* a, const double* b, size_t n);
    void (*mul)(double* out, const double* a, const double* b, size_t n);
    void (*scale)(double* out, double s, const double* x, size_t n);
    // exact: y[i] += a * x[i]
    void (*axpy)(double* y, double a, const double* x, size_t n);
    // reduction: sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, size_t n);
    // exact: out[i] = max(x[i], 0)
    void (*relu)(double* out, const double* x, size_t n);
    // exact: gx[i] += x[i] > 0 ? gy[i] : 0
    void (*relu_grad_acc)(double* gx, const double* x, const double* gy, size_t n);

    // reduction: y[o] = b[o] + sum_i w[o*in + i] * x[i]   (w row-major out x in)
    void (*affine)(double* y, const double* w, const double* b, const double* x,
                   int out, int in);
    // exact: gx[i] += sum_o w[o*in + i] * gy[o], accumulated in o-major order
    void (*matvec_t_acc)(double* gx, const double* w, const double* gy,
                         int out, int in);
    // exact: gw[o*in + i] += gy[o] * x[i]
    void (*outer_acc)(double* gw, const double* gy, const double* x,
                      int out, int in);

    // exact. One window run around a single center point. For each slot i:
    //   p      = neighbor - center            (written to px/py/pz)
    //   dist   = ||p||_2                      (dx*dx + dy*dy + dz*dz, no FMA)
    //   mask   = 1 if dist <= radius && nvalid[i] && center_valid else 0
    //   invd   = mask / max(dist, eps)
    void (*localize_run)(const double* nx, const double* ny, const double* nz,
                         const uint8_t* nvalid, double cx, double cy, double cz,
                         bool center_valid, double radius, double eps, int n,
                         double* px, double* py, double* pz,
                         double* dist, double* mask, double* invd);

    // exact: sum_i mask[i] * exp(-dist[i]^2 * inv_two_sigma_sq)
    // (the exp and the running sum stay scalar; only the squared-distance
    //  scaling is vectorized, so the result is bitwise stable)
    double (*density_sum)(const double* dist, const double* mask, int n,
                          double inv_two_sigma_sq);

    // exact: dist[i] = min(dist[i], ||p_i - q||^2)
    void (*min_sqdist_update)(double* dist, const double* px, const double* py,
                              const double* pz, double qx, double qy, double qz,
                              size_t n);

    // exact: append i to out for every ||p_i - c||^2 <= r2, ascending i; returns count
    size_t (*ball_collect)(const double* px, const double* py, const double* pz,
                           size_t n, double cx, double cy, double cz, double r2,
                           int32_t* out);
};

extern const KernelTable kScalarKernels;
#if PPSEG_BUILD_AVX2
extern const KernelTable kAvx2Kernels;
#endif
#if PPSEG_BUILD_NEON
extern const KernelTable kNeonKernels;
#endif

// Tables compiled in AND usable on this CPU; kScalarKernels is always first.
std::vector<const KernelTable*> available_kernel_tables();

// Active table. Resolved once: PPSEG_SIMD env (scalar/avx2/neon/auto) if set,
// otherwise the best available.
const KernelTable& kernels();

// Force a table by name; throws ConfigError if unknown or unavailable.
void select_kernels(std::string_view name);

} // namespace ppseg::simd
