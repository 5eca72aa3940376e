#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sft/fusion.hpp"
#include "sft/layers.hpp"

namespace sft {

// Per-head Gaussian parameters in normalized grid coordinates. Base centers
// live in (0,1)^2 by construction (sigmoid); biased centers may leave the
// unit square and are deliberately not clamped so gradients keep flowing.
struct GaussianParams {
    std::vector<std::pair<double, double>> centers;  // (x_c, y_c) per head
    std::vector<std::pair<double, double>> sigmas;   // (sigma_w, sigma_h) per head
    double alpha = 1.0;
};

// Three parallel MLP branches, each with one hidden relu layer of width D and
// 2N outputs: center (squashed to (0,1), first attention layer only), center
// bias (unbounded, later layers), and deviation (softplus + 1e-3 floor).
// Output layout per branch: [x_0, y_0, x_1, y_1, ...].
struct GgnHeads {
    int heads = 0;
    Mlp center;
    Mlp bias;
    Mlp sigma;

    GgnHeads() = default;
    GgnHeads(int n_heads, int d, std::mt19937_64& rng);

    void collect(const std::string& prefix, NamedParams& out);
};

constexpr double kSigmaFloor = 1e-3;

// Tape-side GGN evaluation; every entry is a 1x1 var.
struct GgnVars {
    std::vector<Var> x;  // per head
    std::vector<Var> y;
};

// Mean-pool the sequence and run one branch.
GgnVars ggn_base_center_vars(Tape& t, Var pooled, GgnHeads& ggn);
GgnVars ggn_bias_vars(Tape& t, Var pooled, GgnHeads& ggn);
GgnVars ggn_sigma_vars(Tape& t, Var pooled, GgnHeads& ggn);  // softplus + floor applied

// --- value-level operations ---

// Per-head base centers, each strictly inside (0,1)^2.
std::vector<std::pair<double, double>> ggn_base_center(const PatchSequence& search, GgnHeads& ggn);

// Center biases (unbounded) and deviations (> kSigmaFloor). Biases are only
// meaningful for layer >= 1; the first layer uses a zero bias by definition.
std::pair<std::vector<std::pair<double, double>>, std::vector<std::pair<double, double>>>
ggn_bias_and_sigma(const PatchSequence& search, GgnHeads& ggn, int layer);

// G over a grid of patch centers ((j+0.5)/gw, (i+0.5)/gh); values in (0, 1],
// peak 1 where the grid hits the center exactly.
Tensor gaussian_map(double center_x, double center_y, double sigma_w, double sigma_h, double alpha,
                    int grid_h, int grid_w);

// Flattened elementwise log of a Gaussian map; entries <= 0, broadcastable
// along the query axis of attention logits.
Tensor log_gaussian_bias(const Tensor& map);

// 8-bit binary PGM (P5), values scaled by 255.
void write_pgm(const Tensor& map, const std::string& path);

}  // namespace sft
