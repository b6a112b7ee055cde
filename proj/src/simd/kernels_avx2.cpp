#include "ppseg/simd/kernels.hpp"

#if PPSEG_BUILD_AVX2

#include <immintrin.h>

#include <algorithm>
#include <cmath>

// AVX2 variants (4 x f64 lanes). Exact-class kernels use separate mul/add so
// every element sees the same rounding sequence as the scalar reference;
// reduction-class kernels (dot, affine) use FMA with multiple accumulators.

namespace ppseg::simd {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

void add_avx2(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_avx2(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(double* out, double s, const double* x, size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(vs, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) out[i] = s * x[i];
}

void axpy_avx2(double* y, double a, const double* x, size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d t = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), t));
    }
    for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

double dot_avx2(const double* a, const double* b, size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double res = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) res += a[i] * b[i];
    return res;
}

void relu_avx2(double* out, const double* x, size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_acc_avx2(double* gx, const double* x, const double* gy, size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d vg = _mm256_loadu_pd(gx + i);
        __m256d sum = _mm256_add_pd(vg, _mm256_loadu_pd(gy + i));
        __m256d pos = _mm256_cmp_pd(vx, zero, _CMP_GT_OQ);
        // keep original gx bits on masked lanes (skipped adds stay bitwise intact)
        _mm256_storeu_pd(gx + i, _mm256_blendv_pd(vg, sum, pos));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0) gx[i] += gy[i];
    }
}

void affine_avx2(double* y, const double* w, const double* b, const double* x,
                 int out, int in) {
    for (int o = 0; o < out; ++o) {
        const double* row = w + static_cast<size_t>(o) * in;
        __m256d acc0 = _mm256_setzero_pd();
        __m256d acc1 = _mm256_setzero_pd();
        int i = 0;
        for (; i + 8 <= in; i += 8) {
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(row + i), _mm256_loadu_pd(x + i), acc0);
            acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(row + i + 4), _mm256_loadu_pd(x + i + 4), acc1);
        }
        for (; i + 4 <= in; i += 4) {
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(row + i), _mm256_loadu_pd(x + i), acc0);
        }
        double acc = hsum(_mm256_add_pd(acc0, acc1));
        for (; i < in; ++i) acc += row[i] * x[i];
        y[o] = b[o] + acc;
    }
}

void matvec_t_acc_avx2(double* gx, const double* w, const double* gy,
                       int out, int in) {
    for (int o = 0; o < out; ++o) {
        const double* row = w + static_cast<size_t>(o) * in;
        const __m256d g = _mm256_set1_pd(gy[o]);
        int i = 0;
        for (; i + 4 <= in; i += 4) {
            __m256d t = _mm256_mul_pd(g, _mm256_loadu_pd(row + i));
            _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), t));
        }
        const double gs = gy[o];
        for (; i < in; ++i) gx[i] = gx[i] + gs * row[i];
    }
}

void outer_acc_avx2(double* gw, const double* gy, const double* x,
                    int out, int in) {
    for (int o = 0; o < out; ++o) {
        double* row = gw + static_cast<size_t>(o) * in;
        const __m256d g = _mm256_set1_pd(gy[o]);
        int i = 0;
        for (; i + 4 <= in; i += 4) {
            __m256d t = _mm256_mul_pd(g, _mm256_loadu_pd(x + i));
            _mm256_storeu_pd(row + i, _mm256_add_pd(_mm256_loadu_pd(row + i), t));
        }
        const double gs = gy[o];
        for (; i < in; ++i) row[i] = row[i] + gs * x[i];
    }
}

void localize_run_avx2(const double* nx, const double* ny, const double* nz,
                       const uint8_t* nvalid, double cx, double cy, double cz,
                       bool center_valid, double radius, double eps, int n,
                       double* px, double* py, double* pz,
                       double* dist, double* mask, double* invd) {
    const __m256d vcx = _mm256_set1_pd(cx);
    const __m256d vcy = _mm256_set1_pd(cy);
    const __m256d vcz = _mm256_set1_pd(cz);
    const __m256d vr = _mm256_set1_pd(radius);
    const __m256d veps = _mm256_set1_pd(eps);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d zero = _mm256_setzero_pd();
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(nx + i), vcx);
        __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ny + i), vcy);
        __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(nz + i), vcz);
        _mm256_storeu_pd(px + i, dx);
        _mm256_storeu_pd(py + i, dy);
        _mm256_storeu_pd(pz + i, dz);
        // dx*dx + dy*dy + dz*dz with plain mul/add: bitwise equal to scalar
        __m256d d2 = _mm256_add_pd(
            _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
            _mm256_mul_pd(dz, dz));
        __m256d d = _mm256_sqrt_pd(d2);
        _mm256_storeu_pd(dist + i, d);
        __m256d vv = _mm256_set_pd(
            center_valid && nvalid[i + 3] ? 1.0 : 0.0,
            center_valid && nvalid[i + 2] ? 1.0 : 0.0,
            center_valid && nvalid[i + 1] ? 1.0 : 0.0,
            center_valid && nvalid[i + 0] ? 1.0 : 0.0);
        __m256d in_ball = _mm256_and_pd(_mm256_cmp_pd(d, vr, _CMP_LE_OQ),
                                        _mm256_cmp_pd(vv, zero, _CMP_GT_OQ));
        _mm256_storeu_pd(mask + i, _mm256_and_pd(in_ball, one));
        __m256d recip = _mm256_div_pd(one, _mm256_max_pd(d, veps));
        _mm256_storeu_pd(invd + i, _mm256_and_pd(in_ball, recip));
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

double density_sum_avx2(const double* dist, const double* mask, int n,
                        double inv_two_sigma_sq) {
    const __m256d c = _mm256_set1_pd(inv_two_sigma_sq);
    double acc = 0.0;
    int i = 0;
    alignas(32) double t[32];
    while (i < n) {
        const int chunk = std::min(n - i, 32);
        int j = 0;
        for (; j + 4 <= chunk; j += 4) {
            __m256d d = _mm256_loadu_pd(dist + i + j);
            _mm256_store_pd(t + j, _mm256_mul_pd(_mm256_mul_pd(d, d), c));
        }
        for (; j < chunk; ++j) t[j] = dist[i + j] * dist[i + j] * inv_two_sigma_sq;
        for (j = 0; j < chunk; ++j) acc += mask[i + j] * std::exp(-t[j]);
        i += chunk;
    }
    return acc;
}

void min_sqdist_update_avx2(double* dist, const double* px, const double* py,
                            const double* pz, double qx, double qy, double qz,
                            size_t n) {
    const __m256d vqx = _mm256_set1_pd(qx);
    const __m256d vqy = _mm256_set1_pd(qy);
    const __m256d vqz = _mm256_set1_pd(qz);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(px + i), vqx);
        __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(py + i), vqy);
        __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(pz + i), vqz);
        __m256d d2 = _mm256_add_pd(
            _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
            _mm256_mul_pd(dz, dz));
        _mm256_storeu_pd(dist + i, _mm256_min_pd(d2, _mm256_loadu_pd(dist + i)));
    }
    for (; i < n; ++i) {
        const double dx = px[i] - qx;
        const double dy = py[i] - qy;
        const double dz = pz[i] - qz;
        const double d2 = dx * dx + dy * dy + dz * dz;
        dist[i] = d2 < dist[i] ? d2 : dist[i];
    }
}

size_t ball_collect_avx2(const double* px, const double* py, const double* pz,
                         size_t n, double cx, double cy, double cz, double r2,
                         int32_t* out) {
    const __m256d vcx = _mm256_set1_pd(cx);
    const __m256d vcy = _mm256_set1_pd(cy);
    const __m256d vcz = _mm256_set1_pd(cz);
    const __m256d vr2 = _mm256_set1_pd(r2);
    size_t cnt = 0;
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(px + i), vcx);
        __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(py + i), vcy);
        __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(pz + i), vcz);
        __m256d d2 = _mm256_add_pd(
            _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
            _mm256_mul_pd(dz, dz));
        int m = _mm256_movemask_pd(_mm256_cmp_pd(d2, vr2, _CMP_LE_OQ));
        if (m) {
            for (int l = 0; l < 4; ++l) {
                if (m & (1 << l)) out[cnt++] = static_cast<int32_t>(i + l);
            }
        }
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

const KernelTable kAvx2Kernels = {
    "avx2",
    add_avx2,
    mul_avx2,
    scale_avx2,
    axpy_avx2,
    dot_avx2,
    relu_avx2,
    relu_grad_acc_avx2,
    affine_avx2,
    matvec_t_acc_avx2,
    outer_acc_avx2,
    localize_run_avx2,
    density_sum_avx2,
    min_sqdist_update_avx2,
    ball_collect_avx2,
};

} // namespace ppseg::simd

#endif // PPSEG_BUILD_AVX2
