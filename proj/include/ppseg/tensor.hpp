#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ppseg/errors.hpp"

// Minimal dense f64 tensor with tape-based reverse-mode differentiation.
// The op set is exactly what the projected networks need; everything is
// row-major and CPU-only. Tensors are immutable once produced by an op;
// parameters are the only tensors mutated in place (by the optimizer).

namespace ppseg {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::shared_ptr<std::vector<double>> data;
    std::shared_ptr<std::vector<double>> grad; // null until first needed
    bool requires_grad = false;
    std::string name;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
    static Tensor from_values(Shape shape, std::vector<double> values);
    // Named, requires_grad tensor (a trainable parameter).
    static Tensor param(Shape shape, std::vector<double> values, std::string name);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(impl_->data->size()); }
    int64_t dim(int axis) const; // negative axis counts from the back

    double* data() { return impl_->data->data(); }
    const double* data() const { return impl_->data->data(); }
    double item() const; // scalar tensors only

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    // Gradient buffer; ensure_grad allocates (zeroed) on first use.
    double* grad() { return impl_->grad ? impl_->grad->data() : nullptr; }
    const double* grad() const { return impl_->grad ? impl_->grad->data() : nullptr; }
    double* ensure_grad() const;
    void zero_grad() const;

    const std::string& name() const { return impl_->name; }
    void set_name(std::string n) { impl_->name = std::move(n); }

    // Same storage (data and grad), new shape. numel must match.
    Tensor reshaped(Shape shape) const;
    // Deep copy of the data, no grad, no tape link.
    Tensor clone() const;
    // Shares data, drops the requires_grad flag.
    Tensor detach() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Tape

// Records backward closures during the forward pass of one graph. Ops append
// to the thread's active tape when any input requires grad. backward() must
// be called with a scalar loss reachable from the recorded ops.
class Tape {
public:
    static Tape* active();

    void record(std::function<void()> backward_fn);
    void backward(Tensor& loss);
    size_t size() const { return fns_.size(); }
    void clear() { fns_.clear(); }

private:
    friend struct TapeScope;
    std::vector<std::function<void()>> fns_;
};

// Makes a tape the active one for the current thread while in scope.
struct TapeScope {
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// Post-op NaN/Inf screening. Defaults to on in debug builds, off in release;
// tests flip it explicitly.
void set_finite_check(bool enabled);
bool finite_check_enabled();

// ---------------------------------------------------------------------------
// Ops

// Batched matrix product a[..., p, q] x b[..., q, r] -> [..., p, r].
// Leading batch extents broadcast (an extent of 1 stretches).
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise product/sum with right-aligned broadcasting.
Tensor ewise_mul(const Tensor& a, const Tensor& b);
Tensor ewise_add(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);

// Pointwise affine layer: x[..., in] x w[out, in]^T + b[out] -> [..., out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

struct MaxPoolResult {
    Tensor values;
    Tensor argmax; // same shape as values; index along the pooled axis
};
// Max over one axis; ties resolve to the lowest index, and the gradient
// flows only to the recorded argmax.
MaxPoolResult max_pool_axis(const Tensor& x, int axis);

Tensor reshape(const Tensor& x, Shape shape);

// Swaps the last two axes (data is copied; gradient is the inverse swap).
Tensor transpose_last2(const Tensor& x);

// Concatenates along the last axis; all leading extents must match.
Tensor concat_last(const Tensor& a, const Tensor& b);

Tensor sum_all(const Tensor& x);

// Row gather: out[i, :] = src[idx[i], :], idx -1 -> zero row (no gradient).
Tensor gather_rows(const Tensor& src, const std::vector<int32_t>& idx);

// Fixed sparse row combination: out[r, :] = sum_e weight[e] * src[src_index[e], :]
// over e in [offsets[r], offsets[r+1]). Differentiable w.r.t. src.
struct GatherPlan {
    int64_t n_out = 0;
    int64_t n_src = 0;
    std::vector<int64_t> offsets;   // n_out + 1
    std::vector<int32_t> src_index;
    std::vector<double> weight;
};
Tensor weighted_gather(const Tensor& src, const GatherPlan& plan);

// Mean negative log-softmax over positions whose target != ignore_index.
// logits: [..., n_classes]; target: flattened position-major class indices.
// All positions ignored -> zero loss, zero gradient.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int32_t>& target,
                             int32_t ignore_index);

} // namespace ppseg
