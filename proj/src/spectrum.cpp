#include "sft/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sft/gpha.hpp"

namespace sft {

double dc_ratio(const Tensor& tokens) {
    int s = tokens.rows(), d = tokens.cols();
    double fro = 0.0;
    for (std::int64_t i = 0; i < tokens.size(); ++i) fro += tokens[i] * tokens[i];
    if (fro == 0.0) return 1.0;  // the zero sequence is all DC
    double mean_norm = 0.0;
    for (int j = 0; j < d; ++j) {
        double m = 0.0;
        for (int i = 0; i < s; ++i) m += tokens.at(i, j);
        m /= s;
        mean_norm += m * m;
    }
    double r = mean_norm * s / fro;
    // fp artifacts on fully collapsed sequences can push r a hair past 1
    return std::clamp(r, 0.0, 1.0);
}

namespace {

// HF share trace for one seed and one configuration; index 0 is the input.
std::vector<double> run_stack(SfFormer& sf, const Tensor& input, int grid_h, int grid_w,
                              double beta, const GphaOptions& opts) {
    for (GphaBlock& b : sf.blocks) b.beta.value.fill(beta);
    std::vector<double> ratios;
    ratios.push_back(dc_ratio(input));
    Tape t;
    SeqVar x{t.constant(input), grid_h, grid_w};
    GgnVars base;
    if (opts.use_gaussian) {
        base = ggn_base_center_vars(t, t.mean_rows(x.tokens), sf.blocks[0].ggn);
    }
    RunMode mode;  // evaluation
    for (std::size_t l = 0; l < sf.blocks.size(); ++l) {
        x = gpha_block(t, x, x, sf.blocks[l], base, static_cast<int>(l), opts, mode);
        ratios.push_back(dc_ratio(t.value(x.tokens)));
    }
    return ratios;
}

std::string config_name(bool vanilla, double beta) {
    if (vanilla) return "vanilla";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "gpha_beta=%g", beta);
    return buf;
}

}  // namespace

SpectrumReport spectrum_experiment(const SpectrumConfig& cfg) {
    if (cfg.layers < 1 || cfg.seeds < 1) {
        throw std::invalid_argument("config error: spectrum needs layers >= 1 and seeds >= 1");
    }
    int grid_w = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cfg.tokens))));
    int grid_h = cfg.tokens / grid_w;
    if (grid_h * grid_w != cfg.tokens) {
        throw std::invalid_argument("config error: spectrum.tokens must factor into a grid");
    }

    // One run per (config, seed); config 0 is the flat-prior baseline.
    const int n_cfg = 1 + static_cast<int>(cfg.betas.size());
    std::vector<std::vector<double>> sums(
        static_cast<std::size_t>(n_cfg), std::vector<double>(static_cast<std::size_t>(cfg.layers + 1), 0.0));

    // Seeds are independent; results are reduced in seed order afterwards so
    // the report does not depend on scheduling.
    std::vector<std::vector<std::vector<double>>> per_seed(
        static_cast<std::size_t>(cfg.seeds));
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < cfg.seeds; ++s) {
        std::mt19937_64 rng(cfg.seed0 + static_cast<std::uint64_t>(s));
        SfFormer sf(cfg.layers, cfg.heads, cfg.width, rng);
        if (cfg.weight_scale != 1.0) {
            NamedParams np;
            sf.collect("sf", np);
            for (auto& [name, p] : np) {
                for (std::int64_t i = 0; i < p->value.size(); ++i) {
                    p->value[i] *= cfg.weight_scale;
                }
            }
        }
        Tensor input({cfg.tokens, cfg.width});
        std::normal_distribution<double> gauss(0.0, cfg.token_scale);
        for (std::int64_t i = 0; i < input.size(); ++i) input[i] = gauss(rng);

        std::vector<std::vector<double>> traces;
        GphaOptions vanilla{cfg.alpha, /*use_gaussian=*/false, cfg.residual};
        traces.push_back(run_stack(sf, input, grid_h, grid_w, 0.0, vanilla));
        for (double beta : cfg.betas) {
            GphaOptions opts{cfg.alpha, /*use_gaussian=*/true, cfg.residual};
            traces.push_back(run_stack(sf, input, grid_h, grid_w, beta, opts));
        }
        per_seed[static_cast<std::size_t>(s)] = std::move(traces);
    }
    for (int s = 0; s < cfg.seeds; ++s) {
        for (int c = 0; c < n_cfg; ++c) {
            for (int l = 0; l <= cfg.layers; ++l) {
                sums[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)] +=
                    per_seed[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)]
                            [static_cast<std::size_t>(l)];
            }
        }
    }

    SpectrumReport report;
    report.cfg = cfg;
    for (int c = 0; c < n_cfg; ++c) {
        std::string name = c == 0 ? config_name(true, 0.0)
                                  : config_name(false, cfg.betas[static_cast<std::size_t>(c - 1)]);
        for (int l = 0; l <= cfg.layers; ++l) {
            double r = sums[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)] / cfg.seeds;
            report.rows.push_back({l, name, r, 1.0 - r});
        }
    }
    return report;
}

double SpectrumReport::hf_share_at(const std::string& config, int layer) const {
    for (const SpectrumRow& r : rows) {
        if (r.config == config && r.layer == layer) return r.hf_share;
    }
    throw std::invalid_argument("no spectrum row for " + config + " at layer " +
                                std::to_string(layer));
}

void write_spectrum_csv(const SpectrumReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "layer,config,dc_ratio,hf_share\n";
    os.precision(17);
    for (const SpectrumRow& r : report.rows) {
        os << r.layer << ',' << r.config << ',' << r.dc_ratio << ',' << r.hf_share << '\n';
    }
    if (!os) throw std::runtime_error("short write to " + path);
}

}  // namespace sft
