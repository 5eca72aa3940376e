#pragma once

#include <cstdint>
#include <vector>

#include "sft/config.hpp"
#include "sft/fusion.hpp"
#include "sft/gpha.hpp"
#include "sft/heads.hpp"
#include "sft/mhca.hpp"

namespace sft {

// Full tracking model: shared two-stage patch embedder, cross-scale fusion,
// sinusoidal position embedding, bidirectional MHCA rounds, the GPHA stack
// over the search sequence, and the dual prediction heads.
struct Model {
    ModelConfig cfg;
    PatchEmbed embed;
    CsfProj csf;
    MhcaStack mhca;
    SfFormer sfformer;
    TrackingHeads heads;

    int encode_calls = 0;  // counts full image encodings (template cache checks)

    Model(const ModelConfig& config, std::uint64_t seed);

    NamedParams named_params();

    // Image -> fused token sequence with position embedding added.
    SeqVar encode(Tape& t, const Tensor& image);
    PatchSequence encode_value(const Tensor& image);

    struct Output {
        Var scores;      // S_I x 1
        Var boxes;       // S_I x 4
        SeqVar search;   // final search sequence
    };

    Output forward(Tape& t, const SeqVar& tmpl, const SeqVar& search, const RunMode& mode,
                   GphaCapture* capture = nullptr);

    std::vector<MhcaBlock*> mhca_blocks();

    GphaOptions gpha_options() const {
        return GphaOptions{cfg.alpha, cfg.use_gaussian, /*use_residual=*/true};
    }
};

}  // namespace sft
