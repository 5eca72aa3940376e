#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sft/autodiff.hpp"
#include "sft/tensor.hpp"

namespace sft {

using NamedParams = std::vector<std::pair<std::string, Parameter*>>;

enum class Act { None, Relu, Gelu, Sigmoid };

Var apply_act(Tape& t, Act a, Var x);

// Uniform(-limit, limit) with the fan-based limit; biases start at zero.
Tensor xavier_uniform(int fan_in, int fan_out, std::mt19937_64& rng);

// One fully connected layer.
struct Fc {
    Parameter w;  // d_in x d_out
    Parameter b;  // 1 x d_out

    Fc() = default;
    Fc(int d_in, int d_out, std::mt19937_64& rng);

    Var apply(Tape& t, Var x);
    void collect(const std::string& prefix, NamedParams& out);
};

// Stack of FC layers with an activation between them (none after the last).
struct Mlp {
    std::vector<Fc> layers;
    Act hidden_act = Act::Relu;

    Mlp() = default;
    Mlp(const std::vector<int>& widths, Act hidden, std::mt19937_64& rng);

    Var apply(Tape& t, Var x);
    void collect(const std::string& prefix, NamedParams& out);
};

// Gain/shift pair for layer normalization over a given feature width.
struct LayerNormParams {
    Parameter gain;   // 1 x width, ones
    Parameter shift;  // 1 x width, zeros

    LayerNormParams() = default;
    explicit LayerNormParams(int width);

    Var apply(Tape& t, Var x);
    void collect(const std::string& prefix, NamedParams& out);
};

}  // namespace sft
