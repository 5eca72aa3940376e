#include "sft/fusion.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sft/binio.hpp"

namespace sft {

namespace {

constexpr int kFineStride = 8;
constexpr int kCoarseStride = 16;

[[noreturn]] void dim_error(const std::string& what) {
    throw std::invalid_argument("dimension error: " + what);
}

}  // namespace

FeatureMap::FeatureMap(Tensor t) : data(std::move(t)) {
    if (data.rank() != 3) dim_error("feature map must be channels x height x width");
}

PatchSequence::PatchSequence(Tensor t, int gh, int gw) : tokens(std::move(t)), grid_h(gh), grid_w(gw) {
    if (tokens.rank() != 2 || tokens.rows() != gh * gw) {
        dim_error("patch sequence token count must equal grid_h * grid_w");
    }
}

PatchEmbed::PatchEmbed(int c, std::mt19937_64& rng)
    : base_channels(c),
      fine(3 * kFineStride * kFineStride, 2 * c, rng),
      coarse(3 * kCoarseStride * kCoarseStride, 4 * c, rng) {
    if (c < 1) throw std::invalid_argument("base channel count must be positive");
}

void PatchEmbed::collect(const std::string& prefix, NamedParams& out) {
    fine.collect(prefix + ".fine", out);
    coarse.collect(prefix + ".coarse", out);
}

CsfProj::CsfProj(int c, int d, std::mt19937_64& rng) : mlp({3 * c, d, d}, Act::Gelu, rng) {}

void CsfProj::collect(const std::string& prefix, NamedParams& out) {
    mlp.collect(prefix + ".proj", out);
}

SeqVar embed_stage(Tape& t, const Tensor& image, EmbedStage stage, PatchEmbed& pe) {
    if (image.rank() != 3 || image.extent(0) != 3) dim_error("image must be 3 x H x W");
    int h = image.extent(1), w = image.extent(2);
    int p = stage == EmbedStage::Fine ? kFineStride : kCoarseStride;
    if (h % p != 0 || w % p != 0) {
        dim_error("image extents must be divisible by the stage stride");
    }
    int gh = h / p, gw = w / p;
    int cols = 3 * p * p;
    Tensor patches({gh * gw, cols});
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            double* row = patches.data() + static_cast<std::size_t>(gy * gw + gx) * cols;
            int k = 0;
            for (int ch = 0; ch < 3; ++ch) {
                for (int py = 0; py < p; ++py) {
                    for (int px = 0; px < p; ++px) {
                        row[k++] = image.at3(ch, gy * p + py, gx * p + px);
                    }
                }
            }
        }
    }
    Fc& fc = stage == EmbedStage::Fine ? pe.fine : pe.coarse;
    Var tokens = t.gelu(fc.apply(t, t.constant(std::move(patches))));
    return {tokens, gh, gw};
}

namespace {

// Flat index map for the token-layout rearrange; shared by the tape op and
// the value-level op so the two can never disagree.
std::vector<std::int64_t> rearrange_src_indices(int c4, int h, int w) {
    int c = c4 / 4;
    std::vector<std::int64_t> src(static_cast<std::size_t>(2 * h * 2 * w) * c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    int out_row = (2 * y + dy) * (2 * w) + (2 * x + dx);
                    for (int cc = 0; cc < c; ++cc) {
                        src[static_cast<std::size_t>(out_row) * c + cc] =
                            static_cast<std::int64_t>(y * w + x) * c4 + (4 * cc + 2 * dy + dx);
                    }
                }
            }
        }
    }
    return src;
}

}  // namespace

SeqVar rearrange_upscale(Tape& t, const SeqVar& coarse, int channels) {
    if (channels % 4 != 0) dim_error("rearrange_upscale needs channels divisible by 4");
    const Tensor& tok = t.value(coarse.tokens);
    if (tok.cols() != channels) dim_error("rearrange_upscale channel mismatch");
    int h = coarse.grid_h, w = coarse.grid_w;
    auto src = rearrange_src_indices(channels, h, w);
    Var out = t.gather_flat(coarse.tokens, {2 * h * 2 * w, channels / 4}, std::move(src));
    return {out, 2 * h, 2 * w};
}

SeqVar csf_fuse(Tape& t, const SeqVar& fine, const SeqVar& coarse_rearranged, CsfProj& proj) {
    if (fine.grid_h != coarse_rearranged.grid_h || fine.grid_w != coarse_rearranged.grid_w) {
        dim_error("csf_fuse grids must match after rearrange");
    }
    Var cat = t.concat_cols({fine.tokens, coarse_rearranged.tokens});
    Var out = proj.mlp.apply(t, cat);
    return {out, fine.grid_h, fine.grid_w};
}

FeatureMap toy_patch_embed(const Tensor& image, EmbedStage stage, PatchEmbed& pe) {
    Tape t;
    SeqVar sv = embed_stage(t, image, stage, pe);
    return tokens_to_map(t.value(sv.tokens), sv.grid_h, sv.grid_w);
}

FeatureMap rearrange_upscale(const FeatureMap& coarse) {
    int c4 = coarse.channels();
    if (c4 % 4 != 0) dim_error("rearrange_upscale needs channels divisible by 4");
    int c = c4 / 4, h = coarse.height(), w = coarse.width();
    Tensor out({c, 2 * h, 2 * w});
    for (int cc = 0; cc < c; ++cc) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        out.at3(cc, 2 * y + dy, 2 * x + dx) =
                            coarse.data.at3(4 * cc + 2 * dy + dx, y, x);
                    }
                }
            }
        }
    }
    return FeatureMap(std::move(out));
}

FeatureMap rearrange_downscale(const FeatureMap& fine) {
    int c = fine.channels(), h2 = fine.height(), w2 = fine.width();
    if (h2 % 2 != 0 || w2 % 2 != 0) dim_error("rearrange_downscale needs even extents");
    int h = h2 / 2, w = w2 / 2;
    Tensor out({4 * c, h, w});
    for (int cc = 0; cc < c; ++cc) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        out.at3(4 * cc + 2 * dy + dx, y, x) =
                            fine.data.at3(cc, 2 * y + dy, 2 * x + dx);
                    }
                }
            }
        }
    }
    return FeatureMap(std::move(out));
}

PatchSequence csf_fuse(const FeatureMap& fine, const FeatureMap& coarse, CsfProj& proj) {
    if (coarse.height() * 2 != fine.height() || coarse.width() * 2 != fine.width()) {
        dim_error("coarse extents must be exactly half of fine extents");
    }
    if (coarse.channels() != 2 * fine.channels()) {
        dim_error("expected 2C fine channels and 4C coarse channels");
    }
    Tape t;
    SeqVar f{t.constant(map_to_tokens(fine)), fine.height(), fine.width()};
    SeqVar cr = rearrange_upscale(
        t, SeqVar{t.constant(map_to_tokens(coarse)), coarse.height(), coarse.width()},
        coarse.channels());
    SeqVar fused = csf_fuse(t, f, cr, proj);
    return PatchSequence(t.value(fused.tokens), fused.grid_h, fused.grid_w);
}

Tensor sinusoidal_pe(int grid_h, int grid_w, int d) {
    if (d % 4 != 0) dim_error("positional embedding width must be divisible by 4");
    if (grid_h < 1 || grid_w < 1) dim_error("positional embedding grid must be non-empty");
    int half = d / 2;  // per axis
    Tensor pe({grid_h * grid_w, d});
    const double temperature = 10000.0;
    for (int y = 0; y < grid_h; ++y) {
        for (int x = 0; x < grid_w; ++x) {
            int row = y * grid_w + x;
            for (int i = 0; i < half / 2; ++i) {
                double div = std::pow(temperature, (2.0 * i) / half);
                pe.at(row, 2 * i) = std::sin(y / div);
                pe.at(row, 2 * i + 1) = std::cos(y / div);
                pe.at(row, half + 2 * i) = std::sin(x / div);
                pe.at(row, half + 2 * i + 1) = std::cos(x / div);
            }
        }
    }
    return pe;
}

Tensor map_to_tokens(const FeatureMap& fm) {
    int c = fm.channels(), h = fm.height(), w = fm.width();
    Tensor out({h * w, c});
    for (int cc = 0; cc < c; ++cc) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) out.at(y * w + x, cc) = fm.data.at3(cc, y, x);
        }
    }
    return out;
}

FeatureMap tokens_to_map(const Tensor& tokens, int gh, int gw) {
    if (tokens.rank() != 2 || tokens.rows() != gh * gw) dim_error("tokens_to_map shape mismatch");
    int c = tokens.cols();
    Tensor out({c, gh, gw});
    for (int cc = 0; cc < c; ++cc) {
        for (int y = 0; y < gh; ++y) {
            for (int x = 0; x < gw; ++x) out.at3(cc, y, x) = tokens.at(y * gw + x, cc);
        }
    }
    return FeatureMap(std::move(out));
}

void save_feature_map(const FeatureMap& fm, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write("SFTF", 4);
    binio::put_u32(os, 1);
    binio::put_u32(os, static_cast<std::uint32_t>(fm.channels()));
    binio::put_u32(os, static_cast<std::uint32_t>(fm.height()));
    binio::put_u32(os, static_cast<std::uint32_t>(fm.width()));
    for (std::int64_t i = 0; i < fm.data.size(); ++i) binio::put_f64(os, fm.data[i]);
    if (!os) throw std::runtime_error("short write to " + path);
}

FeatureMap load_feature_map(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::string(magic, 4) != "SFTF") {
        throw std::runtime_error(path + " is not a feature file");
    }
    std::uint32_t version = binio::get_u32(is);
    if (version != 1) throw std::runtime_error("unsupported feature file version");
    int c = static_cast<int>(binio::get_u32(is));
    int h = static_cast<int>(binio::get_u32(is));
    int w = static_cast<int>(binio::get_u32(is));
    if (c < 1 || h < 1 || w < 1) throw std::runtime_error("corrupt feature file header");
    Tensor data({c, h, w});
    for (std::int64_t i = 0; i < data.size(); ++i) data[i] = binio::get_f64(is);
    return FeatureMap(std::move(data));
}

}  // namespace sft
