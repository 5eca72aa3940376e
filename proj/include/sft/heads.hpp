#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sft/fusion.hpp"
#include "sft/layers.hpp"

namespace sft {

// Axis-aligned box, center plus extents. Coordinates are normalized to the
// search crop for head outputs and labels, and are plain pixels elsewhere;
// the struct itself is unit-agnostic.
struct BBox {
    double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;

    double x1() const { return cx - 0.5 * w; }
    double y1() const { return cy - 0.5 * h; }
    double x2() const { return cx + 0.5 * w; }
    double y2() const { return cy + 0.5 * h; }
    double area() const { return w * h; }
    bool valid() const { return w > 0.0 && h > 0.0; }
};

double iou(const BBox& a, const BBox& b);

// Dual three-FC-layer heads over the final search sequence: per-token
// foreground probability and per-token direct box prediction, all squashed
// through sigmoid.
struct TrackingHeads {
    Mlp cls;  // D -> D -> D -> 1
    Mlp reg;  // D -> D -> D -> 4

    TrackingHeads() = default;
    TrackingHeads(int d, std::mt19937_64& rng);

    void collect(const std::string& prefix, NamedParams& out);
};

// scores: S x 1 in (0,1); boxes: S x 4 as (cx, cy, w, h) in (0,1).
std::pair<Var, Var> tracking_heads(Tape& t, const SeqVar& seq, TrackingHeads& heads);

// Binary map over grid tokens: 1 iff the patch center lies inside the axis-
// aligned ellipse inscribed in the ground-truth box. S x 1.
Tensor ellipse_labels(const BBox& gt, int grid_h, int grid_w);

std::vector<int> positive_indices(const Tensor& labels);

// Positive-term cross-entropy, normalized by the positive count so the scale
// is grid-size independent. Empty positive set returns 0 and warns once.
Var bce_loss(Tape& t, Var scores, const Tensor& labels);

// Complete-IoU loss for one predicted box (1 x 4 var) against a fixed box.
Var ciou_loss(Tape& t, Var pred_box, const BBox& gt);
// Generalized-IoU alternative, kept behind the loss.use_giou config flag.
Var giou_loss(Tape& t, Var pred_box, const BBox& gt);
// Sum of coordinate absolute differences.
Var l1_box_loss(Tape& t, Var pred_box, const BBox& gt);

// Scalar convenience wrappers.
double ciou_loss(const BBox& pred, const BBox& gt);
double giou_loss(const BBox& pred, const BBox& gt);

struct LossWeights {
    double lambda_iou = 5.0;  // CIOU (or GIOU when use_giou)
    double lambda_l1 = 2.0;
    double lambda_bce = 10.0;
    bool use_giou = false;
};

// lambda1 * iou-loss + lambda2 * L1 + lambda3 * BCE, with the regression
// terms averaged over positive-label tokens.
Var total_loss(Tape& t, Var scores, Var boxes, const Tensor& labels, const BBox& gt,
               const LossWeights& lw = {});

int argmax_score(const Tensor& scores);

}  // namespace sft
