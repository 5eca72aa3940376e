#include "sft/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace sft {

GgnHeads::GgnHeads(int n_heads, int d, std::mt19937_64& rng)
    : heads(n_heads),
      center({d, d, 2 * n_heads}, Act::Relu, rng),
      bias({d, d, 2 * n_heads}, Act::Relu, rng),
      sigma({d, d, 2 * n_heads}, Act::Relu, rng) {
    if (n_heads < 1) throw std::invalid_argument("head count must be positive");
}

void GgnHeads::collect(const std::string& prefix, NamedParams& out) {
    center.collect(prefix + ".center", out);
    bias.collect(prefix + ".bias", out);
    sigma.collect(prefix + ".sigma", out);
}

namespace {

GgnVars split_heads(Tape& t, Var raw, int heads) {
    GgnVars v;
    v.x.reserve(static_cast<std::size_t>(heads));
    v.y.reserve(static_cast<std::size_t>(heads));
    for (int n = 0; n < heads; ++n) {
        v.x.push_back(t.slice_cols(raw, 2 * n, 1));
        v.y.push_back(t.slice_cols(raw, 2 * n + 1, 1));
    }
    return v;
}

}  // namespace

GgnVars ggn_base_center_vars(Tape& t, Var pooled, GgnHeads& ggn) {
    Var raw = t.sigmoid(ggn.center.apply(t, pooled));
    return split_heads(t, raw, ggn.heads);
}

GgnVars ggn_bias_vars(Tape& t, Var pooled, GgnHeads& ggn) {
    return split_heads(t, ggn.bias.apply(t, pooled), ggn.heads);
}

GgnVars ggn_sigma_vars(Tape& t, Var pooled, GgnHeads& ggn) {
    Var raw = t.add_scalar(t.softplus(ggn.sigma.apply(t, pooled)), kSigmaFloor);
    return split_heads(t, raw, ggn.heads);
}

std::vector<std::pair<double, double>> ggn_base_center(const PatchSequence& search,
                                                       GgnHeads& ggn) {
    Tape t;
    Var pooled = t.mean_rows(t.constant(search.tokens));
    GgnVars v = ggn_base_center_vars(t, pooled, ggn);
    std::vector<std::pair<double, double>> out;
    out.reserve(v.x.size());
    for (std::size_t n = 0; n < v.x.size(); ++n) {
        out.emplace_back(t.value(v.x[n])[0], t.value(v.y[n])[0]);
    }
    return out;
}

std::pair<std::vector<std::pair<double, double>>, std::vector<std::pair<double, double>>>
ggn_bias_and_sigma(const PatchSequence& search, GgnHeads& ggn, int layer) {
    Tape t;
    Var pooled = t.mean_rows(t.constant(search.tokens));
    GgnVars bias = ggn_bias_vars(t, pooled, ggn);
    GgnVars sigma = ggn_sigma_vars(t, pooled, ggn);
    std::vector<std::pair<double, double>> biases, sigmas;
    for (std::size_t n = 0; n < bias.x.size(); ++n) {
        if (layer >= 1) {
            biases.emplace_back(t.value(bias.x[n])[0], t.value(bias.y[n])[0]);
        } else {
            biases.emplace_back(0.0, 0.0);
        }
        sigmas.emplace_back(t.value(sigma.x[n])[0], t.value(sigma.y[n])[0]);
    }
    return {std::move(biases), std::move(sigmas)};
}

Tensor gaussian_map(double center_x, double center_y, double sigma_w, double sigma_h, double alpha,
                    int grid_h, int grid_w) {
    if (sigma_w <= 0.0 || sigma_h <= 0.0) throw std::domain_error("sigma must be positive");
    if (alpha <= 0.0) throw std::domain_error("alpha must be positive");
    if (grid_h < 1 || grid_w < 1) throw std::invalid_argument("grid must be non-empty");
    Tensor map({grid_h, grid_w});
    for (int i = 0; i < grid_h; ++i) {
        double y = (i + 0.5) / grid_h;
        double dy = y - center_y;
        for (int j = 0; j < grid_w; ++j) {
            double x = (j + 0.5) / grid_w;
            double dx = x - center_x;
            map.at(i, j) = std::exp(
                -alpha * (dx * dx / (2.0 * sigma_w * sigma_w) + dy * dy / (2.0 * sigma_h * sigma_h)));
        }
    }
    return map;
}

Tensor log_gaussian_bias(const Tensor& map) {
    if (map.rank() != 2) throw std::invalid_argument("log_gaussian_bias expects a 2-D map");
    Tensor out({1, static_cast<int>(map.size())});
    for (std::int64_t i = 0; i < map.size(); ++i) {
        if (map[i] <= 0.0) {
            throw std::domain_error("log_gaussian_bias: map values must be strictly positive");
        }
        out[i] = std::log(map[i]);
    }
    return out;
}

void write_pgm(const Tensor& map, const std::string& path) {
    if (map.rank() != 2) throw std::invalid_argument("write_pgm expects a 2-D map");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "P5\n" << map.cols() << " " << map.rows() << "\n255\n";
    for (std::int64_t i = 0; i < map.size(); ++i) {
        double v = std::clamp(map[i] * 255.0, 0.0, 255.0);
        os.put(static_cast<char>(static_cast<int>(std::lround(v))));
    }
    if (!os) throw std::runtime_error("short write to " + path);
}

}  // namespace sft
