#include "ppseg/mlp.hpp"

#include <cmath>

namespace ppseg {

// splitmix64
uint64_t Rng::next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

void MlpSpec::validate() const {
    if (widths.size() < 2) {
        throw ConfigError("MlpSpec: needs at least one layer (got " +
                          std::to_string(widths.size()) + " widths)");
    }
    for (int64_t w : widths) {
        if (w <= 0) throw ConfigError("MlpSpec: widths must be positive");
    }
    if (acts.size() != widths.size() - 1) {
        throw ConfigError("MlpSpec: " + std::to_string(acts.size()) + " activations for " +
                          std::to_string(widths.size() - 1) + " layers");
    }
}

MlpSpec MlpSpec::make(std::vector<int64_t> widths, bool relu_last, uint64_t seed) {
    MlpSpec s;
    s.widths = std::move(widths);
    s.seed = seed;
    if (s.widths.size() >= 2) {
        s.acts.assign(s.widths.size() - 1, Activation::relu);
        if (!relu_last) s.acts.back() = Activation::none;
    }
    s.validate();
    return s;
}

Mlp::Mlp(MlpSpec spec, const std::string& prefix) : spec_(std::move(spec)) {
    spec_.validate();
    Rng rng(spec_.seed);
    for (size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
        const int64_t in = spec_.widths[l];
        const int64_t out = spec_.widths[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::vector<double> w(static_cast<size_t>(in * out));
        for (double& v : w) v = rng.uniform(-limit, limit);
        weights_.push_back(Tensor::param({out, in}, std::move(w),
                                         prefix + ".w" + std::to_string(l)));
        biases_.push_back(Tensor::param({out}, std::vector<double>(static_cast<size_t>(out), 0.0),
                                        prefix + ".b" + std::to_string(l)));
    }
}

Tensor Mlp::forward(const Tensor& x) const {
    if (x.dim(-1) != spec_.in_width()) {
        throw DimensionError("mlp_forward: input width " + std::to_string(x.dim(-1)) +
                             " != spec width " + std::to_string(spec_.in_width()));
    }
    Tensor h = x;
    for (size_t l = 0; l < weights_.size(); ++l) {
        h = linear(h, weights_[l], biases_[l]);
        if (spec_.acts[l] == Activation::relu) h = relu(h);
    }
    return h;
}

std::vector<Tensor> Mlp::parameters() const {
    std::vector<Tensor> params;
    for (size_t l = 0; l < weights_.size(); ++l) {
        params.push_back(weights_[l]);
        params.push_back(biases_[l]);
    }
    return params;
}

Tensor mlp_forward(const Mlp& mlp, const Tensor& x) { return mlp.forward(x); }

} // namespace ppseg
