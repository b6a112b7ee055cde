#include "ppseg/simd/kernels.hpp"

#include <algorithm>
#include <cmath>

// Reference kernels. These define the semantics the SIMD variants are tested
// against; keep the loops dead simple.

namespace ppseg::simd {
namespace {

void add_scalar(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_scalar(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(double* out, double s, const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = s * x[i];
}

void axpy_scalar(double* y, double a, const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

double dot_scalar(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void relu_scalar(double* out, const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_acc_scalar(double* gx, const double* x, const double* gy, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        if (x[i] > 0.0) gx[i] += gy[i];
    }
}

void affine_scalar(double* y, const double* w, const double* b, const double* x,
                   int out, int in) {
    for (int o = 0; o < out; ++o) {
        const double* row = w + static_cast<size_t>(o) * in;
        double acc = 0.0;
        for (int i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = b[o] + acc;
    }
}

void matvec_t_acc_scalar(double* gx, const double* w, const double* gy,
                         int out, int in) {
    for (int o = 0; o < out; ++o) {
        const double* row = w + static_cast<size_t>(o) * in;
        const double g = gy[o];
        for (int i = 0; i < in; ++i) gx[i] = gx[i] + g * row[i];
    }
}

void outer_acc_scalar(double* gw, const double* gy, const double* x,
                      int out, int in) {
    for (int o = 0; o < out; ++o) {
        double* row = gw + static_cast<size_t>(o) * in;
        const double g = gy[o];
        for (int i = 0; i < in; ++i) row[i] = row[i] + g * x[i];
    }
}

void localize_run_scalar(const double* nx, const double* ny, const double* nz,
                         const uint8_t* nvalid, double cx, double cy, double cz,
                         bool center_valid, double radius, double eps, int n,
                         double* px, double* py, double* pz,
                         double* dist, double* mask, double* invd) {
    for (int i = 0; i < n; ++i) {
        const double dx = nx[i] - cx;
        const double dy = ny[i] - cy;
        const double dz = nz[i] - cz;
        px[i] = dx;
        py[i] = dy;
        pz[i] = dz;
        const double d2 = dx * dx + dy * dy + dz * dz;
        const double d = std::sqrt(d2);
        dist[i] = d;
        const bool in_ball = center_valid && nvalid[i] != 0 && d <= radius;
        mask[i] = in_ball ? 1.0 : 0.0;
        invd[i] = in_ball ? 1.0 / std::max(d, eps) : 0.0;
    }
}

double density_sum_scalar(const double* dist, const double* mask, int n,
                          double inv_two_sigma_sq) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = dist[i] * dist[i] * inv_two_sigma_sq;
        acc += mask[i] * std::exp(-t);
    }
    return acc;
}

void min_sqdist_update_scalar(double* dist, const double* px, const double* py,
                              const double* pz, double qx, double qy, double qz,
                              size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const double dx = px[i] - qx;
        const double dy = py[i] - qy;
        const double dz = pz[i] - qz;
        const double d2 = dx * dx + dy * dy + dz * dz;
        dist[i] = d2 < dist[i] ? d2 : dist[i];
    }
}

size_t ball_collect_scalar(const double* px, const double* py, const double* pz,
                           size_t n, double cx, double cy, double cz, double r2,
                           int32_t* out) {
    size_t cnt = 0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = px[i] - cx;
        const double dy = py[i] - cy;
        const double dz = pz[i] - cz;
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (d2 <= r2) out[cnt++] = static_cast<int32_t>(i);
    }
    return cnt;
}

} // namespace

const KernelTable kScalarKernels = {
    "scalar",
    add_scalar,
    mul_scalar,
    scale_scalar,
    axpy_scalar,
    dot_scalar,
    relu_scalar,
    relu_grad_acc_scalar,
    affine_scalar,
    matvec_t_acc_scalar,
    outer_acc_scalar,
    localize_run_scalar,
    density_sum_scalar,
    min_sqdist_update_scalar,
    ball_collect_scalar,
};

} // namespace ppseg::simd
