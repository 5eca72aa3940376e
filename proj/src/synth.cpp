#include "sft/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sft {

Difficulty difficulty_from_string(const std::string& s) {
    if (s == "plain") return Difficulty::Plain;
    if (s == "distractor") return Difficulty::Distractor;
    if (s == "occlusion") return Difficulty::Occlusion;
    throw std::runtime_error("config error: unknown difficulty " + s);
}

namespace {

struct Walker {
    double cx, cy, vx, vy, half;

    void step(std::mt19937_64& rng, int frame_h, int frame_w) {
        std::normal_distribution<double> accel(0.0, 0.6);
        vx = std::clamp(vx + accel(rng), -2.5, 2.5);
        vy = std::clamp(vy + accel(rng), -2.5, 2.5);
        cx += vx;
        cy += vy;
        // Reflect so the square stays fully inside the frame.
        if (cx < half) {
            cx = 2.0 * half - cx;
            vx = -vx;
        }
        if (cx > frame_w - half) {
            cx = 2.0 * (frame_w - half) - cx;
            vx = -vx;
        }
        if (cy < half) {
            cy = 2.0 * half - cy;
            vy = -vy;
        }
        if (cy > frame_h - half) {
            cy = 2.0 * (frame_h - half) - cy;
            vy = -vy;
        }
        cx = std::clamp(cx, half, frame_w - half);
        cy = std::clamp(cy, half, frame_h - half);
    }
};

// Smooth background: coarse random lattice, bilinearly upsampled.
Tensor make_background(std::mt19937_64& rng, int h, int w) {
    std::uniform_real_distribution<double> u(0.15, 0.6);
    const int g = 5;
    double lattice[3][g][g];
    for (int ch = 0; ch < 3; ++ch) {
        for (int i = 0; i < g; ++i) {
            for (int j = 0; j < g; ++j) lattice[ch][i][j] = u(rng);
        }
    }
    Tensor frame({3, h, w});
    for (int ch = 0; ch < 3; ++ch) {
        for (int i = 0; i < h; ++i) {
            double y = static_cast<double>(i) / h * (g - 1);
            int yl = static_cast<int>(y);
            double fy = y - yl;
            int yh = std::min(yl + 1, g - 1);
            for (int j = 0; j < w; ++j) {
                double x = static_cast<double>(j) / w * (g - 1);
                int xl = static_cast<int>(x);
                double fx = x - xl;
                int xh = std::min(xl + 1, g - 1);
                double top = lattice[ch][yl][xl] * (1 - fx) + lattice[ch][yl][xh] * fx;
                double bot = lattice[ch][yh][xl] * (1 - fx) + lattice[ch][yh][xh] * fx;
                frame.at3(ch, i, j) = top * (1 - fy) + bot * fy;
            }
        }
    }
    return frame;
}

struct SquareTexture {
    double color_a[3];
    double color_b[3];
    double freq_y = 0.12, freq_x = 0.12;  // cycles per pixel
    double phase_y = 0.0, phase_x = 0.0;
    bool flat = false;
};

// Two-axis wave product: every region of the square looks different, so a
// patch of the target tells which part of the target it is.
void draw_square(Tensor& frame, const Walker& wk, const SquareTexture& tex) {
    int h = frame.extent(1), w = frame.extent(2);
    int x1 = static_cast<int>(std::lround(wk.cx - wk.half));
    int y1 = static_cast<int>(std::lround(wk.cy - wk.half));
    int side = static_cast<int>(std::lround(2.0 * wk.half));
    const double two_pi = 6.283185307179586;
    for (int i = 0; i < side; ++i) {
        int y = y1 + i;
        if (y < 0 || y >= h) continue;
        for (int j = 0; j < side; ++j) {
            int x = x1 + j;
            if (x < 0 || x >= w) continue;
            double u = tex.flat ? 0.0
                                : (0.5 + 0.5 * std::sin(two_pi * tex.freq_y * i + tex.phase_y)) *
                                      (0.5 + 0.5 * std::sin(two_pi * tex.freq_x * j + tex.phase_x));
            for (int ch = 0; ch < 3; ++ch) {
                frame.at3(ch, y, x) = tex.color_a[ch] * u + tex.color_b[ch] * (1.0 - u);
            }
        }
    }
}

}  // namespace

SynthSequence gen_sequence(std::uint64_t seed, int length, Difficulty difficulty, int frame_h,
                           int frame_w) {
    if (length < 2) throw std::invalid_argument("sequence length must be at least 2");
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    SynthSequence seq;
    seq.seed = seed;

    std::uniform_real_distribution<double> size_u(0.22, 0.34);
    double side = size_u(rng) * std::min(frame_h, frame_w);
    double half = 0.5 * side;

    std::uniform_real_distribution<double> pos_u(0.3, 0.7);
    std::uniform_real_distribution<double> vel_u(-1.5, 1.5);
    Walker target{pos_u(rng) * frame_w, pos_u(rng) * frame_h, vel_u(rng), vel_u(rng), half};
    Walker distractor{pos_u(rng) * frame_w, pos_u(rng) * frame_h, vel_u(rng), vel_u(rng), half};

    // Bright high-contrast checker so the target separates from the muted
    // background lattice.
    std::uniform_real_distribution<double> bright(0.75, 1.0);
    std::uniform_real_distribution<double> dark(0.0, 0.2);
    std::uniform_real_distribution<double> freq(0.07, 0.16);
    std::uniform_real_distribution<double> phase(0.0, 6.28);
    SquareTexture tex{};
    for (int ch = 0; ch < 3; ++ch) {
        tex.color_a[ch] = bright(rng);
        tex.color_b[ch] = dark(rng);
    }
    tex.freq_y = freq(rng);
    tex.freq_x = freq(rng);
    tex.phase_y = phase(rng);
    tex.phase_x = phase(rng);

    int occl_start = length / 3;
    int occl_end = occl_start + std::max(2, length / 5);

    Tensor background = make_background(rng, frame_h, frame_w);

    for (int f = 0; f < length; ++f) {
        if (f > 0) {
            target.step(rng, frame_h, frame_w);
            distractor.step(rng, frame_h, frame_w);
        }
        Tensor frame = background;
        if (difficulty == Difficulty::Distractor) draw_square(frame, distractor, tex);
        draw_square(frame, target, tex);
        if (difficulty == Difficulty::Occlusion && f >= occl_start && f < occl_end) {
            // Overdraw the target area with a flat background-like patch.
            Walker cover = target;
            SquareTexture flat{};
            for (int ch = 0; ch < 3; ++ch) {
                flat.color_a[ch] = flat.color_b[ch] = 0.35;
            }
            flat.flat = true;
            draw_square(frame, cover, flat);
        }
        seq.frames.push_back(std::move(frame));
        seq.gt_boxes.push_back(BBox{target.cx, target.cy, 2.0 * target.half, 2.0 * target.half});
    }
    return seq;
}

}  // namespace sft
