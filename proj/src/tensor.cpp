#include "ppseg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

#include "ppseg/parallel.hpp"
#include "ppseg/simd/kernels.hpp"

namespace ppseg {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

namespace {

std::atomic<bool> g_finite_check{
#ifdef NDEBUG
    false
#else
    true
#endif
};

void check_finite(const Tensor& t, const char* op) {
    if (!g_finite_check.load(std::memory_order_relaxed)) return;
    const double* d = t.data();
    const int64_t n = t.numel();
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(d[i])) {
            throw TrainingError(std::string(op) + ": non-finite output at flat index " +
                                std::to_string(i));
        }
    }
}

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> values) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::make_shared<std::vector<double>>(std::move(values));
    return impl;
}

thread_local Tape* t_active_tape = nullptr;

} // namespace

void set_finite_check(bool enabled) { g_finite_check.store(enabled, std::memory_order_relaxed); }
bool finite_check_enabled() { return g_finite_check.load(std::memory_order_relaxed); }

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape) {
    const int64_t n = shape_numel(shape);
    return Tensor(make_impl(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
    const int64_t n = shape_numel(shape);
    return Tensor(make_impl(std::move(shape), std::vector<double>(static_cast<size_t>(n), value)));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
        throw DimensionError("from_values: shape " + shape_str(shape) + " wants " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    return Tensor(make_impl(std::move(shape), std::move(values)));
}

Tensor Tensor::param(Shape shape, std::vector<double> values, std::string name) {
    Tensor t = from_values(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    t.set_name(std::move(name));
    t.ensure_grad();
    return t;
}

int64_t Tensor::dim(int axis) const {
    const int nd = ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_str(shape()));
    }
    return impl_->shape[static_cast<size_t>(axis)];
}

double Tensor::item() const {
    if (numel() != 1) {
        throw UsageError("item(): tensor has " + std::to_string(numel()) + " elements");
    }
    return (*impl_->data)[0];
}

double* Tensor::ensure_grad() const {
    if (!impl_->grad) {
        impl_->grad = std::make_shared<std::vector<double>>(impl_->data->size(), 0.0);
    }
    return impl_->grad->data();
}

void Tensor::zero_grad() const {
    if (impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw DimensionError("reshape: " + shape_str(this->shape()) + " -> " + shape_str(shape) +
                             " changes element count");
    }
    // materialize the grad buffer first so the alias and the source keep
    // sharing it no matter which side accumulates first
    if (impl_->requires_grad) ensure_grad();
    auto impl = std::make_shared<TensorImpl>(*impl_);
    impl->shape = std::move(shape);
    return Tensor(impl);
}

Tensor Tensor::clone() const {
    Tensor t = from_values(impl_->shape, *impl_->data);
    t.set_name(impl_->name);
    return t;
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<TensorImpl>(*impl_);
    impl->requires_grad = false;
    impl->grad.reset();
    return Tensor(impl);
}

// ---------------------------------------------------------------------------
// Tape

Tape* Tape::active() { return t_active_tape; }

void Tape::record(std::function<void()> backward_fn) { fns_.push_back(std::move(backward_fn)); }

void Tape::backward(Tensor& loss) {
    if (loss.numel() != 1) {
        throw UsageError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    loss.ensure_grad()[0] = 1.0;
    for (auto it = fns_.rbegin(); it != fns_.rend(); ++it) (*it)();
}

TapeScope::TapeScope(Tape& tape) : prev_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = prev_; }

// ---------------------------------------------------------------------------
// Broadcast machinery

namespace {

struct BroadcastPlan {
    Shape out;
    // Right-aligned to out rank; stride 0 where the input extent is 1.
    std::vector<int64_t> a_ext, b_ext;
    std::vector<int64_t> a_stride, b_stride, out_stride;
    // Longest suffix run usable as a contiguous inner loop.
    enum class RunKind { both_full, a_full_b_one, b_full_a_one, elementwise };
    RunKind kind = RunKind::elementwise;
    int64_t run = 1;       // elements per inner run
    int split_dim = 0;     // dims [0, split_dim) are iterated by the odometer
};

std::vector<int64_t> contiguous_strides(const std::vector<int64_t>& ext) {
    std::vector<int64_t> st(ext.size(), 0);
    int64_t acc = 1;
    for (int d = static_cast<int>(ext.size()) - 1; d >= 0; --d) {
        st[static_cast<size_t>(d)] = ext[static_cast<size_t>(d)] == 1 ? 0 : acc;
        acc *= ext[static_cast<size_t>(d)];
    }
    return st;
}

BroadcastPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
    BroadcastPlan p;
    const int nd = static_cast<int>(std::max(a.size(), b.size()));
    p.out.assign(static_cast<size_t>(nd), 1);
    p.a_ext.assign(static_cast<size_t>(nd), 1);
    p.b_ext.assign(static_cast<size_t>(nd), 1);
    for (int d = 0; d < nd; ++d) {
        const int ai = d - (nd - static_cast<int>(a.size()));
        const int bi = d - (nd - static_cast<int>(b.size()));
        const int64_t ae = ai >= 0 ? a[static_cast<size_t>(ai)] : 1;
        const int64_t be = bi >= 0 ? b[static_cast<size_t>(bi)] : 1;
        if (ae != be && ae != 1 && be != 1) {
            throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                                 shape_str(b) + " are not broadcast-compatible");
        }
        p.a_ext[static_cast<size_t>(d)] = ae;
        p.b_ext[static_cast<size_t>(d)] = be;
        p.out[static_cast<size_t>(d)] = std::max(ae, be);
    }
    p.a_stride = contiguous_strides(p.a_ext);
    p.b_stride = contiguous_strides(p.b_ext);
    p.out_stride = contiguous_strides(p.out);

    auto suffix_run = [&](auto pred) {
        int64_t run = 1;
        int d = nd;
        while (d > 0 && pred(d - 1)) {
            --d;
            run *= p.out[static_cast<size_t>(d)];
        }
        return std::pair<int64_t, int>(run, d);
    };
    auto [rb, db] = suffix_run([&](int d) {
        return p.a_ext[static_cast<size_t>(d)] == p.out[static_cast<size_t>(d)] &&
               p.b_ext[static_cast<size_t>(d)] == p.out[static_cast<size_t>(d)];
    });
    auto [ra, da] = suffix_run([&](int d) {
        return p.a_ext[static_cast<size_t>(d)] == p.out[static_cast<size_t>(d)] &&
               p.b_ext[static_cast<size_t>(d)] == 1;
    });
    auto [rbf, dbf] = suffix_run([&](int d) {
        return p.b_ext[static_cast<size_t>(d)] == p.out[static_cast<size_t>(d)] &&
               p.a_ext[static_cast<size_t>(d)] == 1;
    });
    p.kind = BroadcastPlan::RunKind::both_full;
    p.run = rb;
    p.split_dim = db;
    if (ra > p.run) {
        p.kind = BroadcastPlan::RunKind::a_full_b_one;
        p.run = ra;
        p.split_dim = da;
    }
    if (rbf > p.run) {
        p.kind = BroadcastPlan::RunKind::b_full_a_one;
        p.run = rbf;
        p.split_dim = dbf;
    }
    if (p.run <= 1) {
        p.kind = BroadcastPlan::RunKind::elementwise;
        p.run = 1;
        p.split_dim = nd;
    }
    return p;
}

// Calls fn(out_off, a_off, b_off) for every outer position (runs excluded).
template <typename Fn>
void for_each_outer(const BroadcastPlan& p, Fn&& fn) {
    const int nd = p.split_dim;
    std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
    int64_t ao = 0, bo = 0, oo = 0;
    for (;;) {
        fn(oo, ao, bo);
        int d = nd - 1;
        for (; d >= 0; --d) {
            idx[static_cast<size_t>(d)]++;
            ao += p.a_stride[static_cast<size_t>(d)];
            bo += p.b_stride[static_cast<size_t>(d)];
            oo += p.out_stride[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < p.out[static_cast<size_t>(d)]) break;
            ao -= p.a_stride[static_cast<size_t>(d)] * p.out[static_cast<size_t>(d)];
            bo -= p.b_stride[static_cast<size_t>(d)] * p.out[static_cast<size_t>(d)];
            oo -= p.out_stride[static_cast<size_t>(d)] * p.out[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
        }
        if (d < 0) break;
    }
}

enum class EwiseOp { mul, add };

Tensor ewise_binary(const Tensor& a, const Tensor& b, EwiseOp op, const char* name) {
    const BroadcastPlan p = broadcast_plan(a.shape(), b.shape(), name);
    Tensor out = Tensor::zeros(p.out);
    const auto& k = simd::kernels();
    const double* ad = a.data();
    const double* bd = b.data();
    double* od = out.data();
    const int64_t run = p.run;

    for_each_outer(p, [&](int64_t oo, int64_t ao, int64_t bo) {
        switch (p.kind) {
            case BroadcastPlan::RunKind::both_full:
                if (op == EwiseOp::mul) k.mul(od + oo, ad + ao, bd + bo, static_cast<size_t>(run));
                else k.add(od + oo, ad + ao, bd + bo, static_cast<size_t>(run));
                break;
            case BroadcastPlan::RunKind::a_full_b_one:
                if (op == EwiseOp::mul) k.scale(od + oo, bd[bo], ad + ao, static_cast<size_t>(run));
                else {
                    const double s = bd[bo];
                    for (int64_t i = 0; i < run; ++i) od[oo + i] = ad[ao + i] + s;
                }
                break;
            case BroadcastPlan::RunKind::b_full_a_one:
                if (op == EwiseOp::mul) k.scale(od + oo, ad[ao], bd + bo, static_cast<size_t>(run));
                else {
                    const double s = ad[ao];
                    for (int64_t i = 0; i < run; ++i) od[oo + i] = s + bd[bo + i];
                }
                break;
            case BroadcastPlan::RunKind::elementwise:
                od[oo] = op == EwiseOp::mul ? ad[ao] * bd[bo] : ad[ao] + bd[bo];
                break;
        }
    });

    out.set_requires_grad(a.requires_grad() || b.requires_grad());
    check_finite(out, name);

    if (Tape::active() && out.requires_grad()) {
        Tape::active()->record([a, b, out, p, op]() mutable {
            const double* g = out.grad();
            if (!g) return;
            const auto& kk = simd::kernels();
            const int64_t run = p.run;
            double* ga = a.requires_grad() ? a.ensure_grad() : nullptr;
            double* gb = b.requires_grad() ? b.ensure_grad() : nullptr;
            const double* ad = a.data();
            const double* bd = b.data();
            for_each_outer(p, [&](int64_t oo, int64_t ao, int64_t bo) {
                if (op == EwiseOp::add) {
                    if (ga) {
                        if (p.kind == BroadcastPlan::RunKind::both_full ||
                            p.kind == BroadcastPlan::RunKind::a_full_b_one) {
                            kk.axpy(ga + ao, 1.0, g + oo, static_cast<size_t>(run));
                        } else {
                            double s = 0.0;
                            for (int64_t i = 0; i < run; ++i) s += g[oo + i];
                            ga[ao] += s;
                        }
                    }
                    if (gb) {
                        if (p.kind == BroadcastPlan::RunKind::both_full ||
                            p.kind == BroadcastPlan::RunKind::b_full_a_one) {
                            kk.axpy(gb + bo, 1.0, g + oo, static_cast<size_t>(run));
                        } else {
                            double s = 0.0;
                            for (int64_t i = 0; i < run; ++i) s += g[oo + i];
                            gb[bo] += s;
                        }
                    }
                    return;
                }
                // mul
                switch (p.kind) {
                    case BroadcastPlan::RunKind::both_full:
                        if (ga)
                            for (int64_t i = 0; i < run; ++i) ga[ao + i] += g[oo + i] * bd[bo + i];
                        if (gb)
                            for (int64_t i = 0; i < run; ++i) gb[bo + i] += g[oo + i] * ad[ao + i];
                        break;
                    case BroadcastPlan::RunKind::a_full_b_one:
                        if (ga) kk.axpy(ga + ao, bd[bo], g + oo, static_cast<size_t>(run));
                        if (gb) gb[bo] += kk.dot(g + oo, ad + ao, static_cast<size_t>(run));
                        break;
                    case BroadcastPlan::RunKind::b_full_a_one:
                        if (gb) kk.axpy(gb + bo, ad[ao], g + oo, static_cast<size_t>(run));
                        if (ga) ga[ao] += kk.dot(g + oo, bd + bo, static_cast<size_t>(run));
                        break;
                    case BroadcastPlan::RunKind::elementwise:
                        if (ga) ga[ao] += g[oo] * bd[bo];
                        if (gb) gb[bo] += g[oo] * ad[ao];
                        break;
                }
            });
        });
    }
    return out;
}

} // namespace

Tensor ewise_mul(const Tensor& a, const Tensor& b) { return ewise_binary(a, b, EwiseOp::mul, "ewise_mul"); }
Tensor ewise_add(const Tensor& a, const Tensor& b) { return ewise_binary(a, b, EwiseOp::add, "ewise_add"); }

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2) {
        throw DimensionError("matmul: operands must have rank >= 2, got " +
                             shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const int64_t p = a.dim(-2), q = a.dim(-1);
    const int64_t q2 = b.dim(-2), r = b.dim(-1);
    if (q != q2) {
        throw DimensionError("matmul: inner extents disagree: " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
    }
    Shape a_batch(a.shape().begin(), a.shape().end() - 2);
    Shape b_batch(b.shape().begin(), b.shape().end() - 2);
    const BroadcastPlan bp = broadcast_plan(a_batch, b_batch, "matmul");

    Shape out_shape = bp.out;
    out_shape.push_back(p);
    out_shape.push_back(r);
    Tensor out = Tensor::zeros(out_shape);

    // Batch strides in units of whole matrices.
    const int nd = static_cast<int>(bp.out.size());
    std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
    const auto& k = simd::kernels();
    const double* ad = a.data();
    const double* bd = b.data();
    double* od = out.data();
    const int64_t a_mat = p * q, b_mat = q * r, o_mat = p * r;

    auto for_each_batch = [&](auto&& fn) {
        std::vector<int64_t> ix(static_cast<size_t>(nd), 0);
        int64_t ao = 0, bo = 0, oo = 0;
        for (;;) {
            fn(oo, ao, bo);
            int d = nd - 1;
            for (; d >= 0; --d) {
                ix[static_cast<size_t>(d)]++;
                ao += bp.a_stride[static_cast<size_t>(d)];
                bo += bp.b_stride[static_cast<size_t>(d)];
                oo += bp.out_stride[static_cast<size_t>(d)];
                if (ix[static_cast<size_t>(d)] < bp.out[static_cast<size_t>(d)]) break;
                ao -= bp.a_stride[static_cast<size_t>(d)] * bp.out[static_cast<size_t>(d)];
                bo -= bp.b_stride[static_cast<size_t>(d)] * bp.out[static_cast<size_t>(d)];
                oo -= bp.out_stride[static_cast<size_t>(d)] * bp.out[static_cast<size_t>(d)];
                ix[static_cast<size_t>(d)] = 0;
            }
            if (d < 0) break;
        }
    };

    for_each_batch([&](int64_t oo, int64_t ao, int64_t bo) {
        const double* am = ad + ao * a_mat;
        const double* bm = bd + bo * b_mat;
        double* om = od + oo * o_mat;
        for (int64_t i = 0; i < p; ++i) {
            double* orow = om + i * r;
            const double* arow = am + i * q;
            for (int64_t kk2 = 0; kk2 < q; ++kk2) {
                k.axpy(orow, arow[kk2], bm + kk2 * r, static_cast<size_t>(r));
            }
        }
    });

    out.set_requires_grad(a.requires_grad() || b.requires_grad());
    check_finite(out, "matmul");

    if (Tape::active() && out.requires_grad()) {
        Tape::active()->record([a, b, out, bp, p, q, r, nd]() mutable {
            const double* g = out.grad();
            if (!g) return;
            const auto& kk = simd::kernels();
            const double* ad = a.data();
            const double* bd = b.data();
            double* ga = a.requires_grad() ? a.ensure_grad() : nullptr;
            double* gb = b.requires_grad() ? b.ensure_grad() : nullptr;
            const int64_t a_mat = p * q, b_mat = q * r, o_mat = p * r;
            std::vector<int64_t> ix(static_cast<size_t>(nd), 0);
            int64_t ao = 0, bo = 0, oo = 0;
            for (;;) {
                const double* am = ad + ao * a_mat;
                const double* bm = bd + bo * b_mat;
                const double* gm = g + oo * o_mat;
                if (ga) {
                    double* gam = ga + ao * a_mat;
                    for (int64_t i = 0; i < p; ++i) {
                        const double* grow = gm + i * r;
                        double* garow = gam + i * q;
                        for (int64_t k2 = 0; k2 < q; ++k2) {
                            garow[k2] += kk.dot(grow, bm + k2 * r, static_cast<size_t>(r));
                        }
                    }
                }
                if (gb) {
                    double* gbm = gb + bo * b_mat;
                    for (int64_t i = 0; i < p; ++i) {
                        const double* grow = gm + i * r;
                        const double* arow = am + i * q;
                        for (int64_t k2 = 0; k2 < q; ++k2) {
                            kk.axpy(gbm + k2 * r, arow[k2], grow, static_cast<size_t>(r));
                        }
                    }
                }
                int d = nd - 1;
                for (; d >= 0; --d) {
                    ix[static_cast<size_t>(d)]++;
                    ao += bp.a_stride[static_cast<size_t>(d)];
                    bo += bp.b_stride[static_cast<size_t>(d)];
                    oo += bp.out_stride[static_cast<size_t>(d)];
                    if (ix[static_cast<size_t>(d)] < bp.out[static_cast<size_t>(d)]) break;
                    ao -= bp.a_stride[static_cast<size_t>(d)] * bp.out[static_cast<size_t>(d)];
                    bo -= bp.b_stride[static_cast<size_t>(d)] * bp.out[static_cast<size_t>(d)];
                    oo -= bp.out_stride[static_cast<size_t>(d)] * bp.out[static_cast<size_t>(d)];
                    ix[static_cast<size_t>(d)] = 0;
                }
                if (d < 0) break;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// relu / linear

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    simd::kernels().relu(out.data(), x.data(), static_cast<size_t>(x.numel()));
    out.set_requires_grad(x.requires_grad());
    if (Tape::active() && out.requires_grad()) {
        Tape::active()->record([x, out]() mutable {
            const double* g = out.grad();
            if (!g) return;
            simd::kernels().relu_grad_acc(x.ensure_grad(), x.data(), g,
                                          static_cast<size_t>(x.numel()));
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.ndim() != 2 || b.ndim() != 1) {
        throw DimensionError("linear: weight must be rank 2 and bias rank 1");
    }
    const int64_t in = w.dim(1), outw = w.dim(0);
    if (x.dim(-1) != in) {
        throw DimensionError("linear: input width " + std::to_string(x.dim(-1)) +
                             " != layer fan-in " + std::to_string(in) + " (weight " +
                             shape_str(w.shape()) + ")");
    }
    if (b.dim(0) != outw) {
        throw DimensionError("linear: bias width " + std::to_string(b.dim(0)) +
                             " != fan-out " + std::to_string(outw));
    }
    Shape out_shape = x.shape();
    out_shape.back() = outw;
    Tensor out = Tensor::zeros(out_shape);
    const int64_t npos = x.numel() / in;
    {
        const double* xd = x.data();
        const double* wd = w.data();
        const double* bd = b.data();
        double* od = out.data();
        const auto& k = simd::kernels();
        parallel_for(npos, [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i) {
                k.affine(od + i * outw, wd, bd, xd + i * in,
                         static_cast<int>(outw), static_cast<int>(in));
            }
        }, /*grain=*/256);
    }
    out.set_requires_grad(x.requires_grad() || w.requires_grad() || b.requires_grad());
    check_finite(out, "linear");

    if (Tape::active() && out.requires_grad()) {
        Tape::active()->record([x, w, b, out, npos, in, outw]() mutable {
            const double* g = out.grad();
            if (!g) return;
            const auto& k = simd::kernels();
            const double* xd = x.data();
            const double* wd = w.data();
            if (x.requires_grad()) {
                double* gx = x.ensure_grad();
                parallel_for(npos, [&](int64_t lo, int64_t hi) {
                    for (int64_t i = lo; i < hi; ++i) {
                        k.matvec_t_acc(gx + i * in, wd, g + i * outw,
                                       static_cast<int>(outw), static_cast<int>(in));
                    }
                }, /*grain=*/256);
            }
            if (w.requires_grad()) {
                double* gw = w.ensure_grad();
                for (int64_t i = 0; i < npos; ++i) {
                    k.outer_acc(gw, g + i * outw, xd + i * in,
                                static_cast<int>(outw), static_cast<int>(in));
                }
            }
            if (b.requires_grad()) {
                double* gb = b.ensure_grad();
                for (int64_t i = 0; i < npos; ++i) {
                    k.axpy(gb, 1.0, g + i * outw, static_cast<size_t>(outw));
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// max pool

MaxPoolResult max_pool_axis(const Tensor& x, int axis) {
    const int nd = x.ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) {
        throw DimensionError("max_pool_axis: axis out of range for " + shape_str(x.shape()));
    }
    const int64_t n = x.dim(axis);
    if (n < 1) {
        throw DimensionError("max_pool_axis: empty axis " + std::to_string(axis) + " in " +
                             shape_str(x.shape()));
    }
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= x.dim(d);
    for (int d = axis + 1; d < nd; ++d) inner *= x.dim(d);

    Shape out_shape;
    for (int d = 0; d < nd; ++d) {
        if (d != axis) out_shape.push_back(x.dim(d));
    }
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor values = Tensor::zeros(out_shape);
    Tensor argmax = Tensor::zeros(out_shape);

    const double* xd = x.data();
    double* vd = values.data();
    double* am = argmax.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t i = 0; i < inner; ++i) {
            double best = xd[(o * n) * inner + i];
            int64_t best_k = 0;
            for (int64_t k = 1; k < n; ++k) {
                const double v = xd[(o * n + k) * inner + i];
                if (v > best) { // ties keep the lowest index
                    best = v;
                    best_k = k;
                }
            }
            vd[o * inner + i] = best;
            am[o * inner + i] = static_cast<double>(best_k);
        }
    }
    values.set_requires_grad(x.requires_grad());
    if (Tape::active() && values.requires_grad()) {
        Tape::active()->record([x, values, argmax, outer, inner, n]() mutable {
            const double* g = values.grad();
            if (!g) return;
            double* gx = x.ensure_grad();
            const double* am = argmax.data();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t i = 0; i < inner; ++i) {
                    const int64_t k = static_cast<int64_t>(am[o * inner + i]);
                    gx[(o * n + k) * inner + i] += g[o * inner + i];
                }
            }
        });
    }
    return {values, argmax};
}

// ---------------------------------------------------------------------------
// structural ops

Tensor reshape(const Tensor& x, Shape shape) { return x.reshaped(std::move(shape)); }

Tensor transpose_last2(const Tensor& x) {
    if (x.ndim() < 2) {
        throw DimensionError("transpose_last2: rank must be >= 2, got " + shape_str(x.shape()));
    }
    const int64_t p = x.dim(-2), q = x.dim(-1);
    Shape out_shape = x.shape();
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    Tensor out = Tensor::zeros(out_shape);
    const int64_t nbatch = x.numel() / (p * q);
    const double* xd = x.data();
    double* od = out.data();
    for (int64_t m = 0; m < nbatch; ++m) {
        const double* xm = xd + m * p * q;
        double* om = od + m * p * q;
        for (int64_t i = 0; i < p; ++i) {
            for (int64_t j = 0; j < q; ++j) om[j * p + i] = xm[i * q + j];
        }
    }
    out.set_requires_grad(x.requires_grad());
    if (Tape::active() && out.requires_grad()) {
        Tape::active()->record([x, out, nbatch, p, q]() mutable {
            const double* g = out.grad();
            if (!g) return;
            double* gx = x.ensure_grad();
            for (int64_t m = 0; m < nbatch; ++m) {
                const double* gm = g + m * p * q;
                double* gxm = gx + m * p * q;
                for (int64_t i = 0; i < p; ++i) {
                    for (int64_t j = 0; j < q; ++j) gxm[i * q + j] += gm[j * p + i];
                }
            }
        });
    }
    return out;
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
    if (a.ndim() != b.ndim()) {
        throw DimensionError("concat_last: rank mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    for (int d = 0; d + 1 < a.ndim(); ++d) {
        if (a.dim(d) != b.dim(d)) {
            throw DimensionError("concat_last: leading extents differ: " + shape_str(a.shape()) +
                                 " vs " + shape_str(b.shape()));
        }
    }
    const int64_t ca = a.dim(-1), cb = b.dim(-1);
    Shape out_shape = a.shape();
    out_shape.back() = ca + cb;
    Tensor out = Tensor::zeros(out_shape);
    const int64_t rows = a.numel() / ca;
    const double* ad = a.data();
    const double* bd = b.data();
    double* od = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        std::memcpy(od + r * (ca + cb), ad + r * ca, static_cast<size_t>(ca) * sizeof(double));
        std::memcpy(od + r * (ca + cb) + ca, bd + r * cb, static_cast<size_t>(cb) * sizeof(double));
    }
    out.set_requires_grad(a.requires_grad() || b.requires_grad());
    if (Tape::active() && out.requires_grad()) {
        Tape::active()->record([a, b, out, rows, ca, cb]() mutable {
            const double* g = out.grad();
            if (!g) return;
            const auto& k = simd::kernels();
            if (a.requires_grad()) {
                double* ga = a.ensure_grad();
                for (int64_t r = 0; r < rows; ++r) {
                    k.axpy(ga + r * ca, 1.0, g + r * (ca + cb), static_cast<size_t>(ca));
                }
            }
            if (b.requires_grad()) {
                double* gb = b.ensure_grad();
                for (int64_t r = 0; r < rows; ++r) {
                    k.axpy(gb + r * cb, 1.0, g + r * (ca + cb) + ca, static_cast<size_t>(cb));
                }
            }
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    const double* xd = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) acc += xd[i];
    Tensor out = Tensor::from_values({1}, {acc});
    out.set_requires_grad(x.requires_grad());
    if (Tape::active() && out.requires_grad()) {
        Tape::active()->record([x, out]() mutable {
            const double* g = out.grad();
            if (!g) return;
            double* gx = x.ensure_grad();
            const double gv = g[0];
            for (int64_t i = 0; i < x.numel(); ++i) gx[i] += gv;
        });
    }
    return out;
}

Tensor gather_rows(const Tensor& src, const std::vector<int32_t>& idx) {
    if (src.ndim() != 2) {
        throw DimensionError("gather_rows: source must be rank 2, got " + shape_str(src.shape()));
    }
    const int64_t n_src = src.dim(0), c = src.dim(1);
    Tensor out = Tensor::zeros({static_cast<int64_t>(idx.size()), c});
    const double* sd = src.data();
    double* od = out.data();
    for (size_t i = 0; i < idx.size(); ++i) {
        const int32_t j = idx[i];
        if (j < 0) continue; // stays zero
        if (j >= n_src) {
            throw DimensionError("gather_rows: index " + std::to_string(j) + " out of range " +
                                 std::to_string(n_src));
        }
        std::memcpy(od + static_cast<int64_t>(i) * c, sd + static_cast<int64_t>(j) * c,
                    static_cast<size_t>(c) * sizeof(double));
    }
    out.set_requires_grad(src.requires_grad());
    if (Tape::active() && out.requires_grad()) {
        auto idx_copy = std::make_shared<std::vector<int32_t>>(idx);
        Tape::active()->record([src, out, idx_copy, c]() mutable {
            const double* g = out.grad();
            if (!g) return;
            double* gs = src.ensure_grad();
            const auto& k = simd::kernels();
            for (size_t i = 0; i < idx_copy->size(); ++i) {
                const int32_t j = (*idx_copy)[i];
                if (j < 0) continue;
                k.axpy(gs + static_cast<int64_t>(j) * c, 1.0, g + static_cast<int64_t>(i) * c,
                       static_cast<size_t>(c));
            }
        });
    }
    return out;
}

Tensor weighted_gather(const Tensor& src, const GatherPlan& plan) {
    if (src.ndim() != 2 || src.dim(0) != plan.n_src) {
        throw DimensionError("weighted_gather: source shape " + shape_str(src.shape()) +
                             " does not match plan rows " + std::to_string(plan.n_src));
    }
    if (plan.offsets.size() != static_cast<size_t>(plan.n_out) + 1) {
        throw DimensionError("weighted_gather: offsets size mismatch");
    }
    const int64_t c = src.dim(1);
    Tensor out = Tensor::zeros({plan.n_out, c});
    const double* sd = src.data();
    double* od = out.data();
    const auto& k = simd::kernels();
    for (int64_t r = 0; r < plan.n_out; ++r) {
        double* orow = od + r * c;
        for (int64_t e = plan.offsets[static_cast<size_t>(r)];
             e < plan.offsets[static_cast<size_t>(r) + 1]; ++e) {
            k.axpy(orow, plan.weight[static_cast<size_t>(e)],
                   sd + static_cast<int64_t>(plan.src_index[static_cast<size_t>(e)]) * c,
                   static_cast<size_t>(c));
        }
    }
    out.set_requires_grad(src.requires_grad());
    check_finite(out, "weighted_gather");
    if (Tape::active() && out.requires_grad()) {
        auto plan_copy = std::make_shared<GatherPlan>(plan);
        Tape::active()->record([src, out, plan_copy, c]() mutable {
            const double* g = out.grad();
            if (!g) return;
            double* gs = src.ensure_grad();
            const auto& k = simd::kernels();
            for (int64_t r = 0; r < plan_copy->n_out; ++r) {
                const double* grow = g + r * c;
                for (int64_t e = plan_copy->offsets[static_cast<size_t>(r)];
                     e < plan_copy->offsets[static_cast<size_t>(r) + 1]; ++e) {
                    k.axpy(gs + static_cast<int64_t>(plan_copy->src_index[static_cast<size_t>(e)]) * c,
                           plan_copy->weight[static_cast<size_t>(e)], grow, static_cast<size_t>(c));
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax cross entropy

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int32_t>& target,
                             int32_t ignore_index) {
    const int64_t c = logits.dim(-1);
    const int64_t npos = logits.numel() / c;
    if (static_cast<int64_t>(target.size()) != npos) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(target.size()) +
                             " targets for " + std::to_string(npos) + " positions");
    }
    const double* ld = logits.data();
    auto probs = std::make_shared<std::vector<double>>(logits.numel(), 0.0);
    double loss = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i < npos; ++i) {
        const int32_t t = target[static_cast<size_t>(i)];
        if (t == ignore_index) continue;
        if (t < 0 || t >= c) {
            throw UsageError("softmax_cross_entropy: target " + std::to_string(t) +
                             " outside [0," + std::to_string(c) + ") at position " +
                             std::to_string(i));
        }
        const double* row = ld + i * c;
        double mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        double* prow = probs->data() + i * c;
        for (int64_t j = 0; j < c; ++j) {
            prow[j] = std::exp(row[j] - mx);
            sum += prow[j];
        }
        for (int64_t j = 0; j < c; ++j) prow[j] /= sum;
        loss += std::log(sum) - (row[t] - mx);
        ++count;
    }
    Tensor out = Tensor::from_values({1}, {count > 0 ? loss / static_cast<double>(count) : 0.0});
    out.set_requires_grad(logits.requires_grad());
    check_finite(out, "softmax_cross_entropy");
    if (Tape::active() && out.requires_grad() && count > 0) {
        auto tgt = std::make_shared<std::vector<int32_t>>(target);
        Tape::active()->record([logits, out, probs, tgt, ignore_index, c, npos, count]() mutable {
            const double* g = out.grad();
            if (!g) return;
            const double scale = g[0] / static_cast<double>(count);
            double* gl = logits.ensure_grad();
            for (int64_t i = 0; i < npos; ++i) {
                const int32_t t = (*tgt)[static_cast<size_t>(i)];
                if (t == ignore_index) continue;
                const double* prow = probs->data() + i * c;
                double* grow = gl + i * c;
                for (int64_t j = 0; j < c; ++j) {
                    grow[j] += scale * (prow[j] - (j == t ? 1.0 : 0.0));
                }
            }
        });
    }
    return out;
}

} // namespace ppseg
