#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppseg/tensor.hpp"

namespace ppseg {

enum class Activation { relu, none };

// Shared (pointwise) affine+activation stack. widths = [in, ..., out];
// acts has one entry per transition.
struct MlpSpec {
    std::vector<int64_t> widths;
    std::vector<Activation> acts;
    uint64_t seed = 0;

    void validate() const;
    int64_t in_width() const { return widths.front(); }
    int64_t out_width() const { return widths.back(); }
    size_t layers() const { return widths.size() - 1; }

    // widths with relu on every transition except optionally the last.
    static MlpSpec make(std::vector<int64_t> widths, bool relu_last, uint64_t seed);
};

class Mlp {
public:
    Mlp() = default;
    // Initializes weights uniform in +-sqrt(6/(fan_in+fan_out)) from spec.seed,
    // biases zero. Parameters are named "<prefix>.w<i>" / "<prefix>.b<i>".
    Mlp(MlpSpec spec, const std::string& prefix);

    bool defined() const { return !weights_.empty(); }
    const MlpSpec& spec() const { return spec_; }
    int64_t in_width() const { return spec_.in_width(); }
    int64_t out_width() const { return spec_.out_width(); }

    // Applies the stack independently at every leading-index position.
    Tensor forward(const Tensor& x) const;

    std::vector<Tensor> parameters() const;
    Tensor weight(size_t layer) const { return weights_.at(layer); }
    Tensor bias(size_t layer) const { return biases_.at(layer); }

private:
    MlpSpec spec_;
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

Tensor mlp_forward(const Mlp& mlp, const Tensor& x);

// Deterministic [0,1) doubles from a seeded generator, stable across
// standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}
    uint64_t next_u64();
    double next_unit(); // [0, 1)
    double uniform(double lo, double hi);

private:
    uint64_t state_;
};

} // namespace ppseg
