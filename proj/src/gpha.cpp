#include "sft/gpha.hpp"

#include <cmath>
#include <stdexcept>

#include "sft/kernels.hpp"

namespace sft {

GphaBlock::GphaBlock(int n_heads, int d, std::mt19937_64& rng)
    : heads(n_heads),
      width(d),
      q_proj(d, d, rng),
      k_proj(d, d, rng),
      v_proj(d, d, rng),
      ffn1(d, 4 * d, rng),
      ffn2(4 * d, 4 * d, rng),
      ffn3(4 * d, d, rng),
      beta(Tensor::zeros({1, n_heads})),
      ggn(n_heads, d, rng) {
    if (n_heads < 1 || d % n_heads != 0) {
        throw std::invalid_argument("attention width must be divisible by the head count");
    }
}

void GphaBlock::collect(const std::string& prefix, NamedParams& out) {
    q_proj.collect(prefix + ".q", out);
    k_proj.collect(prefix + ".k", out);
    v_proj.collect(prefix + ".v", out);
    ffn1.collect(prefix + ".ffn1", out);
    ffn2.collect(prefix + ".ffn2", out);
    ffn3.collect(prefix + ".ffn3", out);
    out.emplace_back(prefix + ".beta", &beta);
    ggn.collect(prefix + ".ggn", out);
}

SeqVar gpha_block(Tape& t, const SeqVar& q_seq, const SeqVar& kv_seq, GphaBlock& block,
                  const GgnVars& base_centers, int layer, const GphaOptions& opts,
                  const RunMode& mode, GphaLayerCapture* capture) {
    const int s_q = t.value(q_seq.tokens).rows();
    const int s_k = t.value(kv_seq.tokens).rows();
    if (t.value(q_seq.tokens).cols() != block.width ||
        t.value(kv_seq.tokens).cols() != block.width) {
        throw std::invalid_argument("dimension error: sequence width does not match block width");
    }
    if (kv_seq.grid_h * kv_seq.grid_w != s_k) {
        throw std::invalid_argument("key sequence must carry its grid shape");
    }
    int c = block.width / block.heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(c));

    // Per-head Gaussian scalars from this block's GGN over the pooled keys.
    std::vector<Var> log_bias;
    if (opts.use_gaussian) {
        Var pooled = t.mean_rows(kv_seq.tokens);
        GgnVars sigmas = ggn_sigma_vars(t, pooled, block.ggn);
        GgnVars centers;
        if (layer == 0) {
            centers = base_centers;
        } else {
            GgnVars biases = ggn_bias_vars(t, pooled, block.ggn);
            for (int n = 0; n < block.heads; ++n) {
                centers.x.push_back(t.add(base_centers.x[static_cast<std::size_t>(n)],
                                          biases.x[static_cast<std::size_t>(n)]));
                centers.y.push_back(t.add(base_centers.y[static_cast<std::size_t>(n)],
                                          biases.y[static_cast<std::size_t>(n)]));
            }
        }
        for (int n = 0; n < block.heads; ++n) {
            log_bias.push_back(t.log_gaussian_map(
                centers.x[static_cast<std::size_t>(n)], centers.y[static_cast<std::size_t>(n)],
                sigmas.x[static_cast<std::size_t>(n)], sigmas.y[static_cast<std::size_t>(n)],
                kv_seq.grid_h, kv_seq.grid_w, opts.alpha));
        }
    }

    Var q = block.q_proj.apply(t, q_seq.tokens);
    Var k = block.k_proj.apply(t, kv_seq.tokens);
    Var v = block.v_proj.apply(t, kv_seq.tokens);
    Var beta_var = t.param(block.beta);
    Var dc = t.constant(Tensor::full({s_q, s_k}, 1.0 / s_k));

    if (capture) capture->heads.assign(static_cast<std::size_t>(block.heads), {});

    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(block.heads));
    for (int n = 0; n < block.heads; ++n) {
        Var qn = t.slice_cols(q, n * c, c);
        Var kn = t.slice_cols(k, n * c, c);
        Var vn = t.slice_cols(v, n * c, c);
        Var logits = t.scale(t.matmul_nt(qn, kn), scale);
        if (opts.use_gaussian) logits = t.add_rowvec(logits, log_bias[static_cast<std::size_t>(n)]);
        Var w = t.softmax_rows(logits);
        Var hf = t.sub(w, dc);
        Var one_plus_beta = t.add_scalar(t.slice_cols(beta_var, n, 1), 1.0);
        Var w_hat = t.add(dc, t.mul_scalar_var(hf, one_plus_beta));
        if (capture) {
            GphaHeadCapture& hc = capture->heads[static_cast<std::size_t>(n)];
            hc.weights = t.value(w);
            hc.weights_emph = t.value(w_hat);
            if (opts.use_gaussian) {
                Tensor g({kv_seq.grid_h, kv_seq.grid_w});
                const Tensor& lb = t.value(log_bias[static_cast<std::size_t>(n)]);
                for (std::int64_t i = 0; i < g.size(); ++i) g[i] = std::exp(lb[i]);
                hc.gauss_map = std::move(g);
            }
        }
        if (mode.drops()) w_hat = t.dropout(w_hat, mode.dropout, *mode.rng);
        heads.push_back(t.matmul(w_hat, vn));
    }

    Var cat = t.concat_cols(heads);
    Var y = opts.use_residual ? t.add(q_seq.tokens, cat) : cat;
    Var h1 = t.relu(block.ffn1.apply(t, y));
    if (mode.drops()) h1 = t.dropout(h1, mode.dropout, *mode.rng);
    Var h2 = t.relu(block.ffn2.apply(t, h1));
    Var f = block.ffn3.apply(t, h2);
    Var out = opts.use_residual ? t.add(y, f) : f;
    return {out, q_seq.grid_h, q_seq.grid_w};
}

SfFormer::SfFormer(int layers, int n_heads, int d, std::mt19937_64& rng) {
    if (layers < 1) throw std::invalid_argument("config error: need at least one layer");
    for (int l = 0; l < layers; ++l) blocks.emplace_back(n_heads, d, rng);
}

void SfFormer::collect(const std::string& prefix, NamedParams& out) {
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        blocks[l].collect(prefix + ".layer" + std::to_string(l), out);
    }
}

namespace {

SeqVar sfformer_run(Tape& t, const SeqVar& search, const SeqVar* kv_pin, SfFormer& sf,
                    const GphaOptions& opts, const RunMode& mode, GphaCapture* capture) {
    if (sf.blocks.empty()) throw std::invalid_argument("config error: empty SFFormer");
    const SeqVar& kv0 = kv_pin ? *kv_pin : search;
    GgnVars base;
    if (opts.use_gaussian) {
        Var pooled0 = t.mean_rows(kv0.tokens);
        base = ggn_base_center_vars(t, pooled0, sf.blocks[0].ggn);
    }
    if (capture) capture->layers.assign(sf.blocks.size(), {});
    SeqVar x = search;
    for (std::size_t l = 0; l < sf.blocks.size(); ++l) {
        const SeqVar& kv = kv_pin ? *kv_pin : x;
        x = gpha_block(t, x, kv, sf.blocks[l], base, static_cast<int>(l), opts, mode,
                       capture ? &capture->layers[l] : nullptr);
    }
    return x;
}

}  // namespace

SeqVar sfformer_forward(Tape& t, const SeqVar& search, SfFormer& sf, const GphaOptions& opts,
                        const RunMode& mode, GphaCapture* capture) {
    return sfformer_run(t, search, nullptr, sf, opts, mode, capture);
}

SeqVar sfformer_forward_cross(Tape& t, const SeqVar& search, const SeqVar& tmpl, SfFormer& sf,
                              const GphaOptions& opts, const RunMode& mode, GphaCapture* capture) {
    return sfformer_run(t, search, &tmpl, sf, opts, mode, capture);
}

Tensor gaussian_biased_softmax(const Tensor& q, const Tensor& k, const Tensor& log_bias) {
    if (q.rank() != 2 || k.rank() != 2 || q.cols() != k.cols()) {
        throw std::invalid_argument("dimension error: q and k widths must match");
    }
    if (log_bias.rank() != 2 || log_bias.rows() != 1 || log_bias.cols() != k.rows()) {
        throw std::invalid_argument("dimension error: bias must be 1 x (key count)");
    }
    int m = q.rows(), n = k.rows(), c = q.cols();
    double scale = 1.0 / std::sqrt(static_cast<double>(c));
    Tensor logits({m, n});
    kernels::gemm_nt(m, n, c, q.data(), k.data(), logits.data(), false);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) logits.at(i, j) = logits.at(i, j) * scale + log_bias.at(0, j);
    }
    Tensor w({m, n});
    kernels::softmax_rows(m, n, logits.data(), w.data());
    return w;
}

AttnDecomposition decompose_dc_hf(const Tensor& w) {
    if (w.rank() != 3) {
        throw std::invalid_argument("decompose_dc_hf expects heads x queries x keys");
    }
    int heads = w.extent(0), s_q = w.extent(1), s_k = w.extent(2);
    for (int n = 0; n < heads; ++n) {
        for (int i = 0; i < s_q; ++i) {
            double sum = 0.0;
            for (int j = 0; j < s_k; ++j) sum += w.at3(n, i, j);
            if (std::fabs(sum - 1.0) > 1e-6) {
                throw std::logic_error("decompose_dc_hf: input rows must be stochastic");
            }
        }
    }
    AttnDecomposition d;
    d.w = w;
    d.w_dc = Tensor::full(w.shape(), 1.0 / s_k);
    d.w_hf = Tensor(w.shape());
    for (std::int64_t i = 0; i < w.size(); ++i) d.w_hf[i] = w[i] - d.w_dc[i];
    return d;
}

AttnDecomposition emphasize(AttnDecomposition d, const Tensor& beta) {
    if (d.w.empty() || d.w_hf.empty()) {
        throw std::logic_error("emphasize: decomposition not filled");
    }
    int heads = d.w.extent(0);
    if (beta.size() != heads) {
        throw std::invalid_argument("emphasize: beta length must equal head count");
    }
    int s_q = d.w.extent(1), s_k = d.w.extent(2);
    d.w_hat = Tensor(d.w.shape());
    for (int n = 0; n < heads; ++n) {
        double factor = 1.0 + beta[n];
        for (int i = 0; i < s_q; ++i) {
            for (int j = 0; j < s_k; ++j) {
                // beta 0 recombines to the original weights; keep that exact
                // rather than through the round trip dc + (w - dc).
                d.w_hat.at3(n, i, j) = beta[n] == 0.0
                                           ? d.w.at3(n, i, j)
                                           : d.w_dc.at3(n, i, j) + factor * d.w_hf.at3(n, i, j);
            }
        }
    }
    return d;
}

}  // namespace sft
