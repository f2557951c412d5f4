#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vegn/param_store.hpp"
#include "vegn/tensor.hpp"

namespace vegn {

// Fully connected network: SiLU between layers, identity at the output.
// Weights live in a ParamStore under "<prefix>.w<i>" / "<prefix>.b<i>".
// An input width of 0 is legal; the first layer then reduces to its bias.
struct Mlp {
    std::vector<int> widths;   // [in, hidden..., out]
    std::vector<Tensor> w;     // per layer, in x out
    std::vector<Tensor> b;     // per layer, 1 x out

    // Weight init: uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)),
    // seeded per layer from (seed, parameter name); biases zero.
    static Mlp create(ParamStore& store, const std::string& prefix, const std::vector<int>& widths,
                      std::uint64_t seed);

    // Rebinds to existing entries (e.g. after ParamStore::clone).
    static Mlp attach(ParamStore& store, const std::string& prefix, const std::vector<int>& widths);

    Tensor apply(const Tensor& x) const;

    int in_width() const { return widths.front(); }
    int out_width() const { return widths.back(); }
};

}  // namespace vegn
