#include "sft/heads.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>

namespace sft {

double iou(const BBox& a, const BBox& b) {
    // Areas come from the same corner values as the intersection so that
    // identical boxes give exactly 1.
    double ax1 = a.x1(), ax2 = a.x2(), ay1 = a.y1(), ay2 = a.y2();
    double bx1 = b.x1(), bx2 = b.x2(), by1 = b.y1(), by2 = b.y2();
    double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
    double ih = std::min(ay2, by2) - std::max(ay1, by1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    double inter = iw * ih;
    double area_a = (ax2 - ax1) * (ay2 - ay1);
    double area_b = (bx2 - bx1) * (by2 - by1);
    return inter / (area_a + area_b - inter);
}

TrackingHeads::TrackingHeads(int d, std::mt19937_64& rng)
    : cls({d, d, d, 1}, Act::Relu, rng), reg({d, d, d, 4}, Act::Relu, rng) {
    // Start the foreground probability low. The positive-only cross-entropy
    // has no push on negatives, so a neutral start saturates every score to 1
    // within a handful of steps and freezes the ranking; a negative prior
    // keeps the logits in the responsive range while the prototype forms.
    cls.layers.back().b.value.fill(-4.0);
}

void TrackingHeads::collect(const std::string& prefix, NamedParams& out) {
    cls.collect(prefix + ".cls", out);
    reg.collect(prefix + ".reg", out);
}

std::pair<Var, Var> tracking_heads(Tape& t, const SeqVar& seq, TrackingHeads& heads) {
    Var scores = t.sigmoid(heads.cls.apply(t, seq.tokens));
    Var boxes = t.sigmoid(heads.reg.apply(t, seq.tokens));
    return {scores, boxes};
}

Tensor ellipse_labels(const BBox& gt, int grid_h, int grid_w) {
    if (!gt.valid()) throw std::invalid_argument("ellipse_labels: box extents must be positive");
    Tensor labels({grid_h * grid_w, 1});
    double rx = 0.5 * gt.w, ry = 0.5 * gt.h;
    for (int i = 0; i < grid_h; ++i) {
        double py = (i + 0.5) / grid_h;
        for (int j = 0; j < grid_w; ++j) {
            double px = (j + 0.5) / grid_w;
            double dx = (px - gt.cx) / rx;
            double dy = (py - gt.cy) / ry;
            labels.at(i * grid_w + j, 0) = (dx * dx + dy * dy <= 1.0) ? 1.0 : 0.0;
        }
    }
    return labels;
}

std::vector<int> positive_indices(const Tensor& labels) {
    std::vector<int> pos;
    for (std::int64_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1.0) pos.push_back(static_cast<int>(i));
    }
    return pos;
}

Var bce_loss(Tape& t, Var scores, const Tensor& labels) {
    const Tensor& s = t.value(scores);
    if (s.size() != labels.size()) {
        throw std::invalid_argument("bce_loss: score and label counts differ");
    }
    std::vector<int> pos = positive_indices(labels);
    if (pos.empty()) {
        std::cerr << "warning: bce_loss with no positive labels, returning 0\n";
        return t.constant(Tensor::scalar(0.0));
    }
    Var picked = t.gather_rows(scores, pos);
    Var loss = t.neg(t.sum_all(t.log(picked)));
    return t.scale(loss, 1.0 / static_cast<double>(pos.size()));
}

namespace {

struct BoxVars {
    Var cx, cy, w, h, x1, y1, x2, y2, area;
};

BoxVars split_box(Tape& t, Var pred_box) {
    const Tensor& b = t.value(pred_box);
    if (b.rank() != 2 || b.rows() != 1 || b.cols() != 4) {
        throw std::invalid_argument("box var must be 1 x 4");
    }
    BoxVars v;
    v.cx = t.slice_cols(pred_box, 0, 1);
    v.cy = t.slice_cols(pred_box, 1, 1);
    v.w = t.slice_cols(pred_box, 2, 1);
    v.h = t.slice_cols(pred_box, 3, 1);
    v.x1 = t.sub(v.cx, t.scale(v.w, 0.5));
    v.y1 = t.sub(v.cy, t.scale(v.h, 0.5));
    v.x2 = t.add(v.cx, t.scale(v.w, 0.5));
    v.y2 = t.add(v.cy, t.scale(v.h, 0.5));
    v.area = t.mul(v.w, v.h);
    return v;
}

void check_boxes(Tape& t, Var pred_box, const BBox& gt) {
    const Tensor& b = t.value(pred_box);
    if (!gt.valid() || b[2] <= 0.0 || b[3] <= 0.0) {
        throw std::domain_error("iou loss: boxes must have positive area");
    }
}

// Shared IoU-with-enclosing-box scaffolding for CIOU/GIOU.
struct IouVars {
    Var iou;
    Var uni;
    Var enclose_w, enclose_h;
    BoxVars p;
};

IouVars iou_vars(Tape& t, Var pred_box, const BBox& gt) {
    IouVars r;
    r.p = split_box(t, pred_box);
    Var gx1 = t.constant(Tensor::scalar(gt.x1()));
    Var gy1 = t.constant(Tensor::scalar(gt.y1()));
    Var gx2 = t.constant(Tensor::scalar(gt.x2()));
    Var gy2 = t.constant(Tensor::scalar(gt.y2()));
    Var iw = t.relu(t.sub(t.minimum(r.p.x2, gx2), t.maximum(r.p.x1, gx1)));
    Var ih = t.relu(t.sub(t.minimum(r.p.y2, gy2), t.maximum(r.p.y1, gy1)));
    Var inter = t.mul(iw, ih);
    r.uni = t.sub(t.add_scalar(r.p.area, gt.area()), inter);
    r.iou = t.div(inter, r.uni);
    r.enclose_w = t.sub(t.maximum(r.p.x2, gx2), t.minimum(r.p.x1, gx1));
    r.enclose_h = t.sub(t.maximum(r.p.y2, gy2), t.minimum(r.p.y1, gy1));
    return r;
}

}  // namespace

Var ciou_loss(Tape& t, Var pred_box, const BBox& gt) {
    check_boxes(t, pred_box, gt);
    IouVars r = iou_vars(t, pred_box, gt);
    // Center distance over enclosing-diagonal squared.
    Var dx = t.add_scalar(r.p.cx, -gt.cx);
    Var dy = t.add_scalar(r.p.cy, -gt.cy);
    Var rho2 = t.add(t.mul(dx, dx), t.mul(dy, dy));
    Var c2 = t.add(t.mul(r.enclose_w, r.enclose_w), t.mul(r.enclose_h, r.enclose_h));
    Var loss = t.add(t.add_scalar(t.neg(r.iou), 1.0), t.div(rho2, c2));
    // Aspect-ratio term: v = (4/pi^2) (atan(wg/hg) - atan(w/h))^2,
    // alpha = v / ((1 - IoU) + v). When both v and 1-IoU are exactly zero
    // (identical boxes) the alpha*v term is identically zero; skip it so the
    // division stays defined.
    Var ratio_diff = t.add_scalar(t.neg(t.atan(t.div(r.p.w, r.p.h))), std::atan(gt.w / gt.h));
    double four_over_pi2 = 4.0 / (std::numbers::pi * std::numbers::pi);
    Var v = t.scale(t.mul(ratio_diff, ratio_diff), four_over_pi2);
    Var denom = t.add(t.add_scalar(t.neg(r.iou), 1.0), v);
    if (t.value(denom)[0] > 0.0) {
        Var alpha = t.div(v, denom);
        loss = t.add(loss, t.mul(alpha, v));
    }
    return loss;
}

Var giou_loss(Tape& t, Var pred_box, const BBox& gt) {
    check_boxes(t, pred_box, gt);
    IouVars r = iou_vars(t, pred_box, gt);
    Var enclose_area = t.mul(r.enclose_w, r.enclose_h);
    Var hole = t.div(t.sub(enclose_area, r.uni), enclose_area);
    return t.add(t.add_scalar(t.neg(r.iou), 1.0), hole);
}

Var l1_box_loss(Tape& t, Var pred_box, const BBox& gt) {
    const Tensor& b = t.value(pred_box);
    if (b.rank() != 2 || b.rows() != 1 || b.cols() != 4) {
        throw std::invalid_argument("box var must be 1 x 4");
    }
    Var target = t.constant(Tensor::row({gt.cx, gt.cy, gt.w, gt.h}));
    return t.sum_all(t.abs(t.sub(pred_box, target)));
}

double ciou_loss(const BBox& pred, const BBox& gt) {
    Tape t;
    Var p = t.constant(Tensor::row({pred.cx, pred.cy, pred.w, pred.h}));
    return t.value(ciou_loss(t, p, gt))[0];
}

double giou_loss(const BBox& pred, const BBox& gt) {
    Tape t;
    Var p = t.constant(Tensor::row({pred.cx, pred.cy, pred.w, pred.h}));
    return t.value(giou_loss(t, p, gt))[0];
}

Var total_loss(Tape& t, Var scores, Var boxes, const Tensor& labels, const BBox& gt,
               const LossWeights& lw) {
    Var bce = bce_loss(t, scores, labels);
    Var loss = t.scale(bce, lw.lambda_bce);
    std::vector<int> pos = positive_indices(labels);
    if (!pos.empty()) {
        Var iou_sum = t.constant(Tensor::scalar(0.0));
        Var l1_sum = t.constant(Tensor::scalar(0.0));
        for (int idx : pos) {
            Var box = t.gather_rows(boxes, {idx});
            Var il = lw.use_giou ? giou_loss(t, box, gt) : ciou_loss(t, box, gt);
            iou_sum = t.add(iou_sum, il);
            l1_sum = t.add(l1_sum, l1_box_loss(t, box, gt));
        }
        double inv = 1.0 / static_cast<double>(pos.size());
        loss = t.add(loss, t.scale(iou_sum, lw.lambda_iou * inv));
        loss = t.add(loss, t.scale(l1_sum, lw.lambda_l1 * inv));
    }
    return loss;
}

int argmax_score(const Tensor& scores) {
    int best = 0;
    for (std::int64_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = static_cast<int>(i);
    }
    return best;
}

}  // namespace sft
