#include "sft/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

namespace sft {

BBox CropTransform::to_image(const BBox& b) const {
    return {x0 + b.cx * region_w, y0 + b.cy * region_h, b.w * region_w, b.h * region_h};
}

BBox CropTransform::to_crop(const BBox& b) const {
    return {(b.cx - x0) / region_w, (b.cy - y0) / region_h, b.w / region_w, b.h / region_h};
}

Tensor crop_region(const Tensor& frame, double x0, double y0, double region_w, double region_h,
                   int out_h, int out_w) {
    if (frame.rank() != 3 || frame.extent(0) != 3) {
        throw std::invalid_argument("frame must be 3 x H x W");
    }
    int h = frame.extent(1), w = frame.extent(2);
    double mean[3];
    for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) acc += frame.at3(ch, i, j);
        }
        mean[ch] = acc / (static_cast<double>(h) * w);
    }
    auto sample = [&](int ch, double y, double x) -> double {
        // Bilinear with out-of-frame taps replaced by the channel mean.
        int x_lo = static_cast<int>(std::floor(x));
        int y_lo = static_cast<int>(std::floor(y));
        double fx = x - x_lo, fy = y - y_lo;
        auto tap = [&](int yy, int xx) -> double {
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) return mean[ch];
            return frame.at3(ch, yy, xx);
        };
        double top = tap(y_lo, x_lo) * (1.0 - fx) + tap(y_lo, x_lo + 1) * fx;
        double bot = tap(y_lo + 1, x_lo) * (1.0 - fx) + tap(y_lo + 1, x_lo + 1) * fx;
        return top * (1.0 - fy) + bot * fy;
    };
    Tensor out({3, out_h, out_w});
    double sx = region_w / out_w, sy = region_h / out_h;
    for (int ch = 0; ch < 3; ++ch) {
        for (int i = 0; i < out_h; ++i) {
            double y = y0 + (i + 0.5) * sy - 0.5;
            for (int j = 0; j < out_w; ++j) {
                double x = x0 + (j + 0.5) * sx - 0.5;
                out.at3(ch, i, j) = std::clamp(sample(ch, y, x), 0.0, 1.0);
            }
        }
    }
    return out;
}

namespace {

BBox clamp_into_frame(BBox b, int frame_h, int frame_w) {
    double x1 = std::clamp(b.x1(), 0.0, static_cast<double>(frame_w));
    double y1 = std::clamp(b.y1(), 0.0, static_cast<double>(frame_h));
    double x2 = std::clamp(b.x2(), 0.0, static_cast<double>(frame_w));
    double y2 = std::clamp(b.y2(), 0.0, static_cast<double>(frame_h));
    BBox out{0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
    if (out.w < 1.0) {
        out.w = 1.0;
        out.cx = std::clamp(out.cx, 0.5, frame_w - 0.5);
    }
    if (out.h < 1.0) {
        out.h = 1.0;
        out.cy = std::clamp(out.cy, 0.5, frame_h - 0.5);
    }
    return out;
}

}  // namespace

TrackState tracker_init(Model& model, const Tensor& first_frame, const BBox& init_box,
                        const TrackerConfig& cfg) {
    int h = first_frame.extent(1), w = first_frame.extent(2);
    BBox box = init_box;
    if (box.x1() < 0.0 || box.y1() < 0.0 || box.x2() > w || box.y2() > h) {
        std::cerr << "warning: init box exceeds frame, clamping\n";
        box = clamp_into_frame(box, h, w);
    }
    // Template region at 2x the box's linear scale (square over the box area).
    double side = 2.0 * std::sqrt(box.w * box.h);
    int ts = model.cfg.template_size;
    Tensor crop = crop_region(first_frame, box.cx - 0.5 * side, box.cy - 0.5 * side, side, side,
                              ts, ts);
    TrackState state;
    state.template_seq = model.encode_value(crop);
    state.prev_box = box;
    state.mode = SearchMode::Local;
    state.frame_index = 0;
    state.cfg = cfg;
    return state;
}

std::pair<Tensor, CropTransform> crop_search(const Tensor& frame, const TrackState& state,
                                             const ModelConfig& mcfg) {
    int h = frame.extent(1), w = frame.extent(2);
    CropTransform tf;
    if (state.mode == SearchMode::Global) {
        tf = {0.0, 0.0, static_cast<double>(w), static_cast<double>(h)};
    } else {
        const BBox& b = state.prev_box;
        double side = 2.0 * std::sqrt(4.0 * b.w * b.h);
        tf = {b.cx - 0.5 * side, b.cy - 0.5 * side, side, side};
    }
    Tensor crop = crop_region(frame, tf.x0, tf.y0, tf.region_w, tf.region_h, mcfg.search_size,
                              mcfg.search_size);
    return {std::move(crop), tf};
}

SearchMode switch_policy(const TrackState& state) {
    const auto& hist = state.conf_history;
    bool all_low = static_cast<int>(hist.size()) >= state.cfg.tau_f;
    if (all_low) {
        for (double c : hist) {
            if (c >= state.cfg.tau_c) {
                all_low = false;
                break;
            }
        }
    }
    if (all_low) return SearchMode::Global;
    if (state.mode == SearchMode::Global && !hist.empty() && hist.back() >= state.cfg.tau_c) {
        return SearchMode::Local;
    }
    return state.mode;
}

StepResult tracker_step(Model& model, TrackState& state, const Tensor& frame,
                        GphaCapture* capture) {
    auto [crop, tf] = crop_search(frame, state, model.cfg);
    Tape t;
    SeqVar tmpl{t.constant(state.template_seq.tokens), state.template_seq.grid_h,
                state.template_seq.grid_w};
    SeqVar search = model.encode(t, crop);
    RunMode mode;  // evaluation: no dropout
    Model::Output out = model.forward(t, tmpl, search, mode, capture);

    const Tensor& scores = t.value(out.scores);
    const Tensor& boxes = t.value(out.boxes);
    int best = argmax_score(scores);
    double confidence = scores[best];
    BBox crop_box{boxes.at(best, 0), boxes.at(best, 1), boxes.at(best, 2), boxes.at(best, 3)};
    BBox img_box = clamp_into_frame(tf.to_image(crop_box), frame.extent(1), frame.extent(2));

    state.prev_box = img_box;
    state.conf_history.push_back(confidence);
    while (static_cast<int>(state.conf_history.size()) > state.cfg.tau_f) {
        state.conf_history.pop_front();
    }
    state.mode = switch_policy(state);
    ++state.frame_index;
    return {img_box, confidence, state.mode};
}

std::string format_result_line(int frame_idx, const BBox& box, double confidence,
                               SearchMode mode) {
    std::ostringstream os;
    os.precision(17);
    os << frame_idx << ',' << box.x1() << ',' << box.y1() << ',' << box.w << ',' << box.h << ','
       << confidence << ',' << (mode == SearchMode::Local ? "local" : "global");
    return os.str();
}

}  // namespace sft
