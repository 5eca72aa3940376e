#pragma once

#include <vector>

#include "sft/heads.hpp"

namespace sft {

struct EvalResult {
    double sr = 0.0;    // mean success over IoU thresholds 0, 0.05, ..., 1.0
    double sr50 = 0.0;  // success at IoU >= 0.5
    double sr75 = 0.0;
    double pr = 0.0;    // center error below 20 pixels
    double ao = 0.0;    // mean IoU
};

// Frame-aligned comparison of predictions against ground truth, both in image
// pixels. Success at threshold t means IoU >= t.
EvalResult evaluate(const std::vector<BBox>& results, const std::vector<BBox>& gts);

}  // namespace sft
