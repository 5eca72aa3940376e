#pragma once

#include <string>

#include "sft/autodiff.hpp"
#include "sft/layers.hpp"
#include "sft/tensor.hpp"

namespace sft {

// Channel-major 2-D feature map, data laid out as [channels x height x width].
struct FeatureMap {
    Tensor data;

    FeatureMap() = default;
    explicit FeatureMap(Tensor t);

    int channels() const { return data.extent(0); }
    int height() const { return data.extent(1); }
    int width() const { return data.extent(2); }
};

// Flattened feature map: one row per spatial position (row-major over the
// grid), one column per channel. The grid shape is retained for everything
// that needs 2-D structure back (Gaussian maps, labels, rearrange).
struct PatchSequence {
    Tensor tokens;  // S x D
    int grid_h = 0;
    int grid_w = 0;

    PatchSequence() = default;
    PatchSequence(Tensor t, int gh, int gw);
};

// Tape-side twin of PatchSequence used while a forward pass is recording.
struct SeqVar {
    Var tokens;
    int grid_h = 0;
    int grid_w = 0;
};

enum class EmbedStage { Fine, Coarse };

// Two-stage patch-flatten feature extractor standing in for a pretrained
// backbone. Fine stage: stride 8, 2C channels; coarse stage: stride 16,
// 4C channels. One linear layer plus one gelu per stage; weights are shared
// between the template and search branches by construction (one instance).
struct PatchEmbed {
    int base_channels = 0;  // C
    Fc fine;                // (3*8*8) -> 2C
    Fc coarse;              // (3*16*16) -> 4C

    PatchEmbed() = default;
    PatchEmbed(int c, std::mt19937_64& rng);

    void collect(const std::string& prefix, NamedParams& out);
};

// Cross-scale fusion projection, two FC layers 3C -> D with a gelu between.
struct CsfProj {
    Mlp mlp;

    CsfProj() = default;
    CsfProj(int c, int d, std::mt19937_64& rng);

    void collect(const std::string& prefix, NamedParams& out);
};

// --- tape-side pipeline (used by the model so gradients reach the embedder) ---

// Image (3 x H x W) -> token matrix ((H/p * W/p) x channels) for one stage.
SeqVar embed_stage(Tape& t, const Tensor& image, EmbedStage stage, PatchEmbed& pe);

// Channel-to-space relocation on token matrices: (h*w) x 4c -> (2h*2w) x c
// with output(c', 2y+dy, 2x+dx) = input(4c' + 2dy + dx, y, x). Lossless.
SeqVar rearrange_upscale(Tape& t, const SeqVar& coarse, int channels);

// Concatenate fine (2C) with rearranged coarse (C) and project 3C -> D.
SeqVar csf_fuse(Tape& t, const SeqVar& fine, const SeqVar& coarse_rearranged, CsfProj& proj);

// --- value-level operations (spec surface; each runs a throwaway tape) ---

FeatureMap toy_patch_embed(const Tensor& image, EmbedStage stage, PatchEmbed& pe);
FeatureMap rearrange_upscale(const FeatureMap& coarse);
FeatureMap rearrange_downscale(const FeatureMap& fine);  // exact inverse
PatchSequence csf_fuse(const FeatureMap& fine, const FeatureMap& coarse, CsfProj& proj);

// Fixed 2-D sine/cosine embedding, S x D, D divisible by 4.
Tensor sinusoidal_pe(int grid_h, int grid_w, int d);

// Conversions between channel-major maps and position-major token matrices.
Tensor map_to_tokens(const FeatureMap& fm);             // (H*W) x C
FeatureMap tokens_to_map(const Tensor& tokens, int gh, int gw);

// Feature file format: magic "SFTF", u32 version=1, u32 channels, u32 height,
// u32 width, then channels*height*width float64 values row-major.
void save_feature_map(const FeatureMap& fm, const std::string& path);
FeatureMap load_feature_map(const std::string& path);

}  // namespace sft
