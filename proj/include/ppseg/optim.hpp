#pragma once

#include <vector>

#include "ppseg/tensor.hpp"

namespace ppseg {

// Classical momentum SGD: v = momentum*v + g; p -= lr*v.
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<Tensor> params, double lr, double momentum);

    // Throws TrainingError naming the parameter if its gradient is not finite.
    void step();
    void zero_grad();

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> velocity_;
    double lr_;
    double momentum_;
};

} // namespace ppseg
