#pragma once

#include <cstdint>
#include <vector>

#include "sft/heads.hpp"
#include "sft/tensor.hpp"

namespace sft {

enum class Difficulty { Plain, Distractor, Occlusion };

Difficulty difficulty_from_string(const std::string& s);

// Textured square target over a textured background following a smooth random
// walk. Distractor adds a second square with the identical texture; occlusion
// overdraws the target with background color for a contiguous frame window.
// Bit-identical for a given seed.
struct SynthSequence {
    std::vector<Tensor> frames;  // 3 x H x W, values in [0,1]
    std::vector<BBox> gt_boxes;  // image pixels
    std::uint64_t seed = 0;
};

SynthSequence gen_sequence(std::uint64_t seed, int length, Difficulty difficulty, int frame_h = 64,
                           int frame_w = 64);

}  // namespace sft
