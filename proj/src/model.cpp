#include "sft/model.hpp"

namespace sft {

Model::Model(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
    std::mt19937_64 rng(seed);
    embed = PatchEmbed(cfg.base_channels, rng);
    csf = CsfProj(cfg.base_channels, cfg.width, rng);
    mhca = MhcaStack(cfg.mhca_rounds, cfg.mhca_heads, cfg.width, rng);
    sfformer = SfFormer(cfg.gpha_layers, cfg.gpha_heads, cfg.width, rng);
    heads = TrackingHeads(cfg.width, rng);
    // Sharpen the query/key projections so the initial attention is not one
    // uniform average, and damp each block's final FFN layer so the blocks
    // start close to identity; both keep token identities alive at init.
    auto scale_param = [](Parameter& p, double s) {
        for (std::int64_t i = 0; i < p.value.size(); ++i) p.value[i] *= s;
    };
    if (cfg.init_gain != 1.0) {
        for (MhcaBlock* b : mhca_blocks()) {
            scale_param(b->q_proj.w, cfg.init_gain);
            scale_param(b->k_proj.w, cfg.init_gain);
        }
        for (GphaBlock& b : sfformer.blocks) {
            scale_param(b.q_proj.w, cfg.init_gain);
            scale_param(b.k_proj.w, cfg.init_gain);
        }
    }
    // Damp each block's write-back paths so the stacks start near identity:
    // token identities survive to the heads at init and the attention
    // pathways grow only as the loss asks for them.
    for (MhcaBlock* b : mhca_blocks()) {
        scale_param(b->ffn2.w, 0.1);
        for (LayerNormParams& hn : b->head_norm) scale_param(hn.gain, 0.1);
    }
    for (GphaBlock& b : sfformer.blocks) {
        scale_param(b.ffn3.w, 0.1);
        scale_param(b.v_proj.w, 0.1);
    }
}

std::vector<MhcaBlock*> Model::mhca_blocks() {
    std::vector<MhcaBlock*> out;
    for (MhcaBlock& b : mhca.search_blocks) out.push_back(&b);
    for (MhcaBlock& b : mhca.tmpl_blocks) out.push_back(&b);
    return out;
}

NamedParams Model::named_params() {
    NamedParams out;
    embed.collect("embed", out);
    csf.collect("csf", out);
    mhca.collect("mhca", out);
    sfformer.collect("sfformer", out);
    heads.collect("heads", out);
    return out;
}

SeqVar Model::encode(Tape& t, const Tensor& image) {
    ++encode_calls;
    SeqVar fine = embed_stage(t, image, EmbedStage::Fine, embed);
    SeqVar coarse = embed_stage(t, image, EmbedStage::Coarse, embed);
    SeqVar up = rearrange_upscale(t, coarse, 4 * cfg.base_channels);
    SeqVar fused = csf_fuse(t, fine, up, csf);
    Var pe = t.constant(sinusoidal_pe(fused.grid_h, fused.grid_w, cfg.width));
    return {t.add(fused.tokens, pe), fused.grid_h, fused.grid_w};
}

PatchSequence Model::encode_value(const Tensor& image) {
    Tape t;
    SeqVar sv = encode(t, image);
    return PatchSequence(t.value(sv.tokens), sv.grid_h, sv.grid_w);
}

Model::Output Model::forward(Tape& t, const SeqVar& tmpl, const SeqVar& search,
                             const RunMode& mode, GphaCapture* capture) {
    auto [s_hat, t_hat] = mhca.apply(t, search, tmpl, mode);
    GphaOptions opts = gpha_options();
    SeqVar s_out = cfg.cross_mode
                       ? sfformer_forward_cross(t, s_hat, t_hat, sfformer, opts, mode, capture)
                       : sfformer_forward(t, s_hat, sfformer, opts, mode, capture);
    auto [scores, boxes] = tracking_heads(t, s_out, heads);
    return {scores, boxes, s_out};
}

}  // namespace sft
