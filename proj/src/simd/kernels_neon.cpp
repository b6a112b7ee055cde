#include "ppseg/simd/kernels.hpp"

#if PPSEG_BUILD_NEON

#include <arm_neon.h>

#include <algorithm>
#include <cmath>

// NEON variants (2 x f64 lanes, AArch64). Same accuracy classes as AVX2:
// exact-class kernels avoid fused ops so they match the scalar reference
// bitwise; dot/affine use vfmaq and are tolerance-tested.

namespace ppseg::simd {
namespace {

void add_neon(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_neon(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_neon(double* out, double s, const double* x, size_t n) {
    const float64x2_t vs = vdupq_n_f64(s);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vmulq_f64(vs, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) out[i] = s * x[i];
}

void axpy_neon(double* y, double a, const double* x, size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t t = vmulq_f64(va, vld1q_f64(x + i));
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), t));
    }
    for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

double dot_neon(const double* a, const double* b, size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    for (; i + 2 <= n; i += 2) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    }
    double res = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) res += a[i] * b[i];
    return res;
}

void relu_neon(double* out, const double* x, size_t n) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vmaxq_f64(vld1q_f64(x + i), zero));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_acc_neon(double* gx, const double* x, const double* gy, size_t n) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t vx = vld1q_f64(x + i);
        float64x2_t vg = vld1q_f64(gx + i);
        float64x2_t sum = vaddq_f64(vg, vld1q_f64(gy + i));
        uint64x2_t pos = vcgtq_f64(vx, zero);
        vst1q_f64(gx + i, vbslq_f64(pos, sum, vg));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0) gx[i] += gy[i];
    }
}

void affine_neon(double* y, const double* w, const double* b, const double* x,
                 int out, int in) {
    for (int o = 0; o < out; ++o) {
        const double* row = w + static_cast<size_t>(o) * in;
        float64x2_t acc0 = vdupq_n_f64(0.0);
        float64x2_t acc1 = vdupq_n_f64(0.0);
        int i = 0;
        for (; i + 4 <= in; i += 4) {
            acc0 = vfmaq_f64(acc0, vld1q_f64(row + i), vld1q_f64(x + i));
            acc1 = vfmaq_f64(acc1, vld1q_f64(row + i + 2), vld1q_f64(x + i + 2));
        }
        for (; i + 2 <= in; i += 2) {
            acc0 = vfmaq_f64(acc0, vld1q_f64(row + i), vld1q_f64(x + i));
        }
        double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
        for (; i < in; ++i) acc += row[i] * x[i];
        y[o] = b[o] + acc;
    }
}

void matvec_t_acc_neon(double* gx, const double* w, const double* gy,
                       int out, int in) {
    for (int o = 0; o < out; ++o) {
        const double* row = w + static_cast<size_t>(o) * in;
        const float64x2_t g = vdupq_n_f64(gy[o]);
        int i = 0;
        for (; i + 2 <= in; i += 2) {
            float64x2_t t = vmulq_f64(g, vld1q_f64(row + i));
            vst1q_f64(gx + i, vaddq_f64(vld1q_f64(gx + i), t));
        }
        const double gs = gy[o];
        for (; i < in; ++i) gx[i] = gx[i] + gs * row[i];
    }
}

void outer_acc_neon(double* gw, const double* gy, const double* x,
                    int out, int in) {
    for (int o = 0; o < out; ++o) {
        double* row = gw + static_cast<size_t>(o) * in;
        const float64x2_t g = vdupq_n_f64(gy[o]);
        int i = 0;
        for (; i + 2 <= in; i += 2) {
            float64x2_t t = vmulq_f64(g, vld1q_f64(x + i));
            vst1q_f64(row + i, vaddq_f64(vld1q_f64(row + i), t));
        }
        const double gs = gy[o];
        for (; i < in; ++i) row[i] = row[i] + gs * x[i];
    }
}

void localize_run_neon(const double* nx, const double* ny, const double* nz,
                       const uint8_t* nvalid, double cx, double cy, double cz,
                       bool center_valid, double radius, double eps, int n,
                       double* px, double* py, double* pz,
                       double* dist, double* mask, double* invd) {
    const float64x2_t vcx = vdupq_n_f64(cx);
    const float64x2_t vcy = vdupq_n_f64(cy);
    const float64x2_t vcz = vdupq_n_f64(cz);
    const float64x2_t vr = vdupq_n_f64(radius);
    const float64x2_t veps = vdupq_n_f64(eps);
    const float64x2_t one = vdupq_n_f64(1.0);
    const float64x2_t zero = vdupq_n_f64(0.0);
    int i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t dx = vsubq_f64(vld1q_f64(nx + i), vcx);
        float64x2_t dy = vsubq_f64(vld1q_f64(ny + i), vcy);
        float64x2_t dz = vsubq_f64(vld1q_f64(nz + i), vcz);
        vst1q_f64(px + i, dx);
        vst1q_f64(py + i, dy);
        vst1q_f64(pz + i, dz);
        float64x2_t d2 = vaddq_f64(
            vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy)), vmulq_f64(dz, dz));
        float64x2_t d = vsqrtq_f64(d2);
        vst1q_f64(dist + i, d);
        double vvv[2];
        vvv[0] = center_valid && nvalid[i + 0] ? 1.0 : 0.0;
        vvv[1] = center_valid && nvalid[i + 1] ? 1.0 : 0.0;
        float64x2_t vv = vld1q_f64(vvv);
        uint64x2_t in_ball = vandq_u64(vcleq_f64(d, vr), vcgtq_f64(vv, zero));
        vst1q_f64(mask + i, vbslq_f64(in_ball, one, zero));
        float64x2_t recip = vdivq_f64(one, vmaxq_f64(d, veps));
        vst1q_f64(invd + i, vbslq_f64(in_ball, recip, zero));
    }
    for (; i < n; ++i) {
        const double dx = nx[i] - cx;
        const double dy = ny[i] - cy;
        const double dz = nz[i] - cz;
        px[i] = dx;
        py[i] = dy;
        pz[i] = dz;
        const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
        dist[i] = d;
        const bool in_ball = center_valid && nvalid[i] != 0 && d <= radius;
        mask[i] = in_ball ? 1.0 : 0.0;
        invd[i] = in_ball ? 1.0 / std::max(d, eps) : 0.0;
    }
}

double density_sum_neon(const double* dist, const double* mask, int n,
                        double inv_two_sigma_sq) {
    const float64x2_t c = vdupq_n_f64(inv_two_sigma_sq);
    double acc = 0.0;
    int i = 0;
    double t[32];
    while (i < n) {
        const int chunk = std::min(n - i, 32);
        int j = 0;
        for (; j + 2 <= chunk; j += 2) {
            float64x2_t d = vld1q_f64(dist + i + j);
            vst1q_f64(t + j, vmulq_f64(vmulq_f64(d, d), c));
        }
        for (; j < chunk; ++j) t[j] = dist[i + j] * dist[i + j] * inv_two_sigma_sq;
        for (j = 0; j < chunk; ++j) acc += mask[i + j] * std::exp(-t[j]);
        i += chunk;
    }
    return acc;
}

void min_sqdist_update_neon(double* dist, const double* px, const double* py,
                            const double* pz, double qx, double qy, double qz,
                            size_t n) {
    const float64x2_t vqx = vdupq_n_f64(qx);
    const float64x2_t vqy = vdupq_n_f64(qy);
    const float64x2_t vqz = vdupq_n_f64(qz);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t dx = vsubq_f64(vld1q_f64(px + i), vqx);
        float64x2_t dy = vsubq_f64(vld1q_f64(py + i), vqy);
        float64x2_t dz = vsubq_f64(vld1q_f64(pz + i), vqz);
        float64x2_t d2 = vaddq_f64(
            vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy)), vmulq_f64(dz, dz));
        vst1q_f64(dist + i, vminq_f64(d2, vld1q_f64(dist + i)));
    }
    for (; i < n; ++i) {
        const double dx = px[i] - qx;
        const double dy = py[i] - qy;
        const double dz = pz[i] - qz;
        const double d2 = dx * dx + dy * dy + dz * dz;
        dist[i] = d2 < dist[i] ? d2 : dist[i];
    }
}

size_t ball_collect_neon(const double* px, const double* py, const double* pz,
                         size_t n, double cx, double cy, double cz, double r2,
                         int32_t* out) {
    const float64x2_t vcx = vdupq_n_f64(cx);
    const float64x2_t vcy = vdupq_n_f64(cy);
    const float64x2_t vcz = vdupq_n_f64(cz);
    const float64x2_t vr2 = vdupq_n_f64(r2);
    size_t cnt = 0;
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t dx = vsubq_f64(vld1q_f64(px + i), vcx);
        float64x2_t dy = vsubq_f64(vld1q_f64(py + i), vcy);
        float64x2_t dz = vsubq_f64(vld1q_f64(pz + i), vcz);
        float64x2_t d2 = vaddq_f64(
            vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy)), vmulq_f64(dz, dz));
        uint64x2_t m = vcleq_f64(d2, vr2);
        if (vgetq_lane_u64(m, 0)) out[cnt++] = static_cast<int32_t>(i);
        if (vgetq_lane_u64(m, 1)) out[cnt++] = static_cast<int32_t>(i + 1);
    }
    for (; i < n; ++i) {
        const double dx = px[i] - cx;
        const double dy = py[i] - cy;
        const double dz = pz[i] - cz;
        if (dx * dx + dy * dy + dz * dz <= r2) out[cnt++] = static_cast<int32_t>(i);
    }
    return cnt;
}

} // namespace

const KernelTable kNeonKernels = {
    "neon",
    add_neon,
    mul_neon,
    scale_neon,
    axpy_neon,
    dot_neon,
    relu_neon,
    relu_grad_acc_neon,
    affine_neon,
    matvec_t_acc_neon,
    outer_acc_neon,
    localize_run_neon,
    density_sum_neon,
    min_sqdist_update_neon,
    ball_collect_neon,
};

} // namespace ppseg::simd

#endif // PPSEG_BUILD_NEON
