#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ppseg/mlp.hpp"
#include "ppseg/tensor.hpp"

// Central finite-difference gradient oracle. loss_fn must rebuild the graph
// from the current parameter values on every call and return a scalar.

namespace ppseg::testing {

inline Tensor rand_tensor(Rng& rng, Shape shape, double lo, double hi, bool requires_grad) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (double& x : v) x = rng.uniform(lo, hi);
    Tensor t = Tensor::from_values(std::move(shape), std::move(v));
    t.set_requires_grad(requires_grad);
    if (requires_grad) t.ensure_grad();
    return t;
}

struct GradCheck {
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

// Zero-initialized biases put relu preactivations exactly on the kink for
// all-zero inputs (masked slots, self-slot coordinates), where central
// differences are invalid. Shifting biases off zero keeps the check honest.
inline void jitter_biases(const std::vector<Tensor>& params, Rng& rng) {
    for (Tensor p : params) {
        if (p.name().find(".b") == std::string::npos) continue;
        for (int64_t i = 0; i < p.numel(); ++i) {
            const double sign = rng.next_unit() < 0.5 ? -1.0 : 1.0;
            p.data()[i] = sign * rng.uniform(0.05, 0.2);
        }
    }
}

// Compares tape gradients of `params` against central differences of
// `loss_fn`. `stride` checks every stride-th element of each parameter.
inline GradCheck check_gradients(const std::vector<Tensor>& params,
                                 const std::function<Tensor()>& loss_fn, double step = 1e-5,
                                 int64_t stride = 1) {
    for (const auto& p : params) p.zero_grad();
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = loss_fn();
        tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) {
        analytic.emplace_back(p.grad(), p.grad() + p.numel());
    }
    GradCheck res;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        double* d = p.data();
        for (int64_t i = 0; i < p.numel(); i += stride) {
            const double keep = d[i];
            d[i] = keep + step;
            const double fp = loss_fn().item();
            d[i] = keep - step;
            const double fm = loss_fn().item();
            d[i] = keep;
            const double fd = (fp - fm) / (2.0 * step);
            const double g = analytic[pi][static_cast<size_t>(i)];
            const double denom = std::max({std::abs(fd), std::abs(g), 1e-6});
            const double rel = std::abs(fd - g) / denom;
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.checked;
        }
    }
    return res;
}

} // namespace ppseg::testing
