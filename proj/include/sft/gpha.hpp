#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sft/gaussian.hpp"
#include "sft/mhca.hpp"

namespace sft {

// Post-softmax attention weights split into their uniform (DC) part and the
// zero-sum high-frequency residual. w_hat stays empty until emphasize fills
// it; its rows sum to one for any beta because the residual rows sum to zero.
struct AttnDecomposition {
    Tensor w;      // N x S_q x S_k, row-stochastic per head
    Tensor w_dc;   // every entry 1/S_k
    Tensor w_hf;   // w - w_dc
    Tensor w_hat;  // w_dc + (1 + beta_n) * w_hf
};

// Gaussian-prior high-frequency-emphasis attention block. Q/K/V projections
// and a three-layer FFN (D -> 4D -> 4D -> D, relu between), a per-head
// emphasis vector beta initialized to zero, and this block's own GGN. The
// center branch of block 0's GGN doubles as the shared base-center network
// for the whole stack; later blocks only use their bias/sigma branches.
struct GphaBlock {
    int heads = 0;
    int width = 0;
    Fc q_proj, k_proj, v_proj;
    Fc ffn1, ffn2, ffn3;
    Parameter beta;  // 1 x N, zero-initialized
    GgnHeads ggn;

    GphaBlock() = default;
    GphaBlock(int n_heads, int d, std::mt19937_64& rng);

    void collect(const std::string& prefix, NamedParams& out);
};

// Runtime behavior switches. The residual wrapping is part of the tracking
// model; spectral measurements run without it so that beta = -1 collapses a
// layer to exact uniform averaging.
struct GphaOptions {
    double alpha = 1.0;         // Gaussian scale factor
    bool use_gaussian = true;   // false = flat prior (zero logit bias)
    bool use_residual = true;
};

// Per-head forward capture for attention-map export and inspection.
struct GphaHeadCapture {
    Tensor weights;       // S_q x S_k, post-softmax
    Tensor weights_emph;  // after DC/HF recombination
    Tensor gauss_map;     // grid over the key sequence; empty when flat
};
struct GphaLayerCapture {
    std::vector<GphaHeadCapture> heads;
};
struct GphaCapture {
    std::vector<GphaLayerCapture> layers;
};

// One block application. Layer 0 uses the given base centers with zero bias;
// layers >= 1 add this block's predicted center bias. Deviations always come
// from this block's sigma branch. The Gaussian is defined over the key grid
// and broadcast across queries.
SeqVar gpha_block(Tape& t, const SeqVar& q_seq, const SeqVar& kv_seq, GphaBlock& block,
                  const GgnVars& base_centers, int layer, const GphaOptions& opts,
                  const RunMode& mode, GphaLayerCapture* capture = nullptr);

// L stacked blocks as self-attention over the search sequence. Base centers
// come from block 0's center branch applied to the pooled layer-0 keys.
struct SfFormer {
    std::vector<GphaBlock> blocks;

    SfFormer() = default;
    SfFormer(int layers, int n_heads, int d, std::mt19937_64& rng);

    int layers() const { return static_cast<int>(blocks.size()); }
    void collect(const std::string& prefix, NamedParams& out);
};

SeqVar sfformer_forward(Tape& t, const SeqVar& search, SfFormer& sf, const GphaOptions& opts,
                        const RunMode& mode, GphaCapture* capture = nullptr);

// Unverified cross-attention variant: queries update layer to layer while the
// keys/values stay pinned to the template sequence (prior over the key grid).
SeqVar sfformer_forward_cross(Tape& t, const SeqVar& search, const SeqVar& tmpl, SfFormer& sf,
                              const GphaOptions& opts, const RunMode& mode,
                              GphaCapture* capture = nullptr);

// --- value-level operations ---

// Row-stochastic weights from scaled dot-product logits plus a log-Gaussian
// bias broadcast along the key axis; scale is 1/sqrt(q width).
Tensor gaussian_biased_softmax(const Tensor& q, const Tensor& k, const Tensor& log_bias);

// Split per-head weights into DC and high-frequency parts. Rejects input
// whose rows deviate from sum 1 by more than 1e-6.
AttnDecomposition decompose_dc_hf(const Tensor& w);

// Scale each head's high-frequency part by (1 + beta_n) and recombine.
AttnDecomposition emphasize(AttnDecomposition d, const Tensor& beta);

}  // namespace sft
