#include "ppseg/optim.hpp"

#include <cmath>

namespace ppseg {

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    if (lr < 0.0) throw UsageError("sgd: learning rate must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw UsageError("sgd: momentum must be in [0,1)");
    velocity_.reserve(params_.size());
    for (auto& p : params_) {
        p.ensure_grad();
        velocity_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
}

void SgdOptimizer::step() {
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        const double* g = p.grad();
        double* v = velocity_[pi].data();
        double* d = p.data();
        const int64_t n = p.numel();
        for (int64_t i = 0; i < n; ++i) {
            if (!std::isfinite(g[i])) {
                throw TrainingError("sgd: non-finite gradient in parameter '" +
                                    (p.name().empty() ? std::string("<unnamed>") : p.name()) +
                                    "'");
            }
            v[i] = momentum_ * v[i] + g[i];
            d[i] -= lr_ * v[i];
        }
    }
}

void SgdOptimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

} // namespace ppseg
