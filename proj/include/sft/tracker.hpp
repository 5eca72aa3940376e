#pragma once

#include <deque>
#include <string>
#include <vector>

#include "sft/heads.hpp"
#include "sft/model.hpp"

namespace sft {

enum class SearchMode { Local, Global };

struct TrackerConfig {
    double tau_c = 0.98;  // confidence failure threshold
    int tau_f = 5;        // consecutive low-confidence frames before going global
};

// Axis-aligned crop region in image pixels plus both mapping directions
// between image coordinates and normalized crop coordinates.
struct CropTransform {
    double x0 = 0.0, y0 = 0.0;       // region top-left, image pixels
    double region_w = 0.0, region_h = 0.0;

    BBox to_image(const BBox& crop_norm) const;
    BBox to_crop(const BBox& image_box) const;
};

// Bilinear crop-and-resize of a 3 x H x W frame. Samples outside the frame
// take the frame's per-channel mean value.
Tensor crop_region(const Tensor& frame, double x0, double y0, double region_w, double region_h,
                   int out_h, int out_w);

struct TrackState {
    PatchSequence template_seq;       // cached first-frame features
    BBox prev_box;                    // image pixels
    std::deque<double> conf_history;  // most recent tau_f confidences
    SearchMode mode = SearchMode::Local;
    int frame_index = 0;
    TrackerConfig cfg;
};

// Template crop at 2x box scale resized to the configured template size;
// features are extracted once and cached.
TrackState tracker_init(Model& model, const Tensor& first_frame, const BBox& init_box,
                        const TrackerConfig& cfg = {});

// Local mode: square region of side 2*sqrt(4*w*h) centered on the previous
// box. Global mode: the whole frame (aspect not preserved by the resize).
std::pair<Tensor, CropTransform> crop_search(const Tensor& frame, const TrackState& state,
                                             const ModelConfig& mcfg);

struct StepResult {
    BBox box;           // image pixels, clamped into the frame
    double confidence;  // selected token's classification score
    SearchMode mode;    // mode after the switch policy ran
};

StepResult tracker_step(Model& model, TrackState& state, const Tensor& frame,
                        GphaCapture* capture = nullptr);

// Local -> global after tau_f consecutive confidences below tau_c; global ->
// local on the first confidence at or above tau_c. Pure function of the
// history and current mode.
SearchMode switch_policy(const TrackState& state);

// Result line format: frame_idx,x,y,w,h,confidence,mode (x,y = top-left).
std::string format_result_line(int frame_idx, const BBox& box, double confidence, SearchMode mode);

}  // namespace sft
