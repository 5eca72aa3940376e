#pragma once

#include <random>
#include <utility>
#include <vector>

#include "sft/fusion.hpp"
#include "sft/layers.hpp"

namespace sft {

// Per-pass execution context. Dropout only fires when training with a rate
// above zero; evaluation passes are exactly deterministic.
struct RunMode {
    bool training = false;
    double dropout = 0.0;
    std::mt19937_64* rng = nullptr;

    bool drops() const { return training && dropout > 0.0 && rng != nullptr; }
};

// One direction of multi-head cross-attention. Heads use scaled dot-product
// (1/sqrt(c)) with layer norm on each head's aggregated values, then the
// concatenated heads pass through a two-layer FFN. Residuals wrap both the
// attention and the FFN with a post-norm after the FFN; the head-internal
// norm plays the attention sublayer's norm role.
struct MhcaBlock {
    int heads = 0;
    int width = 0;  // D, divisible by heads
    Fc q_proj, k_proj, v_proj;
    std::vector<LayerNormParams> head_norm;  // one per head, width D/heads
    Fc ffn1, ffn2;                           // D -> 4D -> D, gelu between
    LayerNormParams out_norm;

    MhcaBlock() = default;
    MhcaBlock(int n_heads, int d, std::mt19937_64& rng);

    void collect(const std::string& prefix, NamedParams& out);
};

// Query sequence attends into the key/value sequence; output keeps the query
// grid and length.
SeqVar cross_attention(Tape& t, const SeqVar& q_seq, const SeqVar& kv_seq, MhcaBlock& block,
                       const RunMode& mode);

// One bidirectional round: both outputs are computed from the pre-round
// inputs, so swapping the branch inputs swaps the outputs when the two
// blocks share weights.
std::pair<SeqVar, SeqVar> mhca_bidirectional(Tape& t, const SeqVar& search, const SeqVar& tmpl,
                                             MhcaBlock& search_block, MhcaBlock& tmpl_block,
                                             const RunMode& mode);

// Stacked rounds with non-shared blocks per round.
struct MhcaStack {
    std::vector<MhcaBlock> search_blocks;
    std::vector<MhcaBlock> tmpl_blocks;

    MhcaStack() = default;
    MhcaStack(int rounds, int n_heads, int d, std::mt19937_64& rng);

    int rounds() const { return static_cast<int>(search_blocks.size()); }
    std::pair<SeqVar, SeqVar> apply(Tape& t, const SeqVar& search, const SeqVar& tmpl,
                                    const RunMode& mode);
    void collect(const std::string& prefix, NamedParams& out);
};

}  // namespace sft
