#include "sft/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace sft {

Var apply_act(Tape& t, Act a, Var x) {
    switch (a) {
        case Act::None: return x;
        case Act::Relu: return t.relu(x);
        case Act::Gelu: return t.gelu(x);
        case Act::Sigmoid: return t.sigmoid(x);
    }
    throw std::logic_error("unreachable activation");
}

Tensor xavier_uniform(int fan_in, int fan_out, std::mt19937_64& rng) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor w({fan_in, fan_out});
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = u(rng);
    return w;
}

Fc::Fc(int d_in, int d_out, std::mt19937_64& rng)
    : w(xavier_uniform(d_in, d_out, rng)), b(Tensor::zeros({1, d_out})) {}

Var Fc::apply(Tape& t, Var x) {
    return linear(t, x, w, b);
}

void Fc::collect(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
}

Mlp::Mlp(const std::vector<int>& widths, Act hidden, std::mt19937_64& rng) : hidden_act(hidden) {
    if (widths.size() < 2) throw std::invalid_argument("mlp needs at least input and output width");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        layers.emplace_back(widths[i], widths[i + 1], rng);
    }
}

Var Mlp::apply(Tape& t, Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = layers[i].apply(t, x);
        if (i + 1 < layers.size()) x = apply_act(t, hidden_act, x);
    }
    return x;
}

void Mlp::collect(const std::string& prefix, NamedParams& out) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].collect(prefix + ".fc" + std::to_string(i), out);
    }
}

LayerNormParams::LayerNormParams(int width)
    : gain(Tensor::full({1, width}, 1.0)), shift(Tensor::zeros({1, width})) {}

Var LayerNormParams::apply(Tape& t, Var x) {
    return t.layer_norm(x, t.param(gain), t.param(shift));
}

void LayerNormParams::collect(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".gain", &gain);
    out.emplace_back(prefix + ".shift", &shift);
}

}  // namespace sft
