#include "sft/mhca.hpp"

#include <cmath>
#include <stdexcept>

namespace sft {

MhcaBlock::MhcaBlock(int n_heads, int d, std::mt19937_64& rng)
    : heads(n_heads),
      width(d),
      q_proj(d, d, rng),
      k_proj(d, d, rng),
      v_proj(d, d, rng),
      ffn1(d, 4 * d, rng),
      ffn2(4 * d, d, rng),
      out_norm(d) {
    if (n_heads < 1 || d % n_heads != 0) {
        throw std::invalid_argument("attention width must be divisible by the head count");
    }
    head_norm.reserve(static_cast<std::size_t>(n_heads));
    for (int n = 0; n < n_heads; ++n) head_norm.emplace_back(d / n_heads);
}

void MhcaBlock::collect(const std::string& prefix, NamedParams& out) {
    q_proj.collect(prefix + ".q", out);
    k_proj.collect(prefix + ".k", out);
    v_proj.collect(prefix + ".v", out);
    for (std::size_t n = 0; n < head_norm.size(); ++n) {
        head_norm[n].collect(prefix + ".head_norm" + std::to_string(n), out);
    }
    ffn1.collect(prefix + ".ffn1", out);
    ffn2.collect(prefix + ".ffn2", out);
    out_norm.collect(prefix + ".out_norm", out);
}

SeqVar cross_attention(Tape& t, const SeqVar& q_seq, const SeqVar& kv_seq, MhcaBlock& block,
                       const RunMode& mode) {
    const Tensor& qt = t.value(q_seq.tokens);
    const Tensor& kt = t.value(kv_seq.tokens);
    if (qt.cols() != block.width || kt.cols() != block.width) {
        throw std::invalid_argument("dimension error: sequence width does not match block width");
    }
    int c = block.width / block.heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(c));

    Var q = block.q_proj.apply(t, q_seq.tokens);
    Var k = block.k_proj.apply(t, kv_seq.tokens);
    Var v = block.v_proj.apply(t, kv_seq.tokens);

    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(block.heads));
    for (int n = 0; n < block.heads; ++n) {
        Var qn = t.slice_cols(q, n * c, c);
        Var kn = t.slice_cols(k, n * c, c);
        Var vn = t.slice_cols(v, n * c, c);
        Var attn = t.softmax_rows(t.scale(t.matmul_nt(qn, kn), scale));
        if (mode.drops()) attn = t.dropout(attn, mode.dropout, *mode.rng);
        Var head = block.head_norm[static_cast<std::size_t>(n)].apply(t, t.matmul(attn, vn));
        heads.push_back(head);
    }
    Var cat = t.concat_cols(heads);
    Var y = t.add(q_seq.tokens, cat);
    Var hidden = t.gelu(block.ffn1.apply(t, y));
    if (mode.drops()) hidden = t.dropout(hidden, mode.dropout, *mode.rng);
    Var f = block.ffn2.apply(t, hidden);
    Var out = block.out_norm.apply(t, t.add(y, f));
    return {out, q_seq.grid_h, q_seq.grid_w};
}

std::pair<SeqVar, SeqVar> mhca_bidirectional(Tape& t, const SeqVar& search, const SeqVar& tmpl,
                                             MhcaBlock& search_block, MhcaBlock& tmpl_block,
                                             const RunMode& mode) {
    SeqVar search_hat = cross_attention(t, search, tmpl, search_block, mode);
    SeqVar tmpl_hat = cross_attention(t, tmpl, search, tmpl_block, mode);
    return {search_hat, tmpl_hat};
}

MhcaStack::MhcaStack(int rounds, int n_heads, int d, std::mt19937_64& rng) {
    if (rounds < 0) throw std::invalid_argument("round count must be non-negative");
    for (int r = 0; r < rounds; ++r) {
        search_blocks.emplace_back(n_heads, d, rng);
        tmpl_blocks.emplace_back(n_heads, d, rng);
    }
}

std::pair<SeqVar, SeqVar> MhcaStack::apply(Tape& t, const SeqVar& search, const SeqVar& tmpl,
                                           const RunMode& mode) {
    SeqVar s = search, m = tmpl;
    for (int r = 0; r < rounds(); ++r) {
        auto [s2, m2] = mhca_bidirectional(t, s, m, search_blocks[static_cast<std::size_t>(r)],
                                           tmpl_blocks[static_cast<std::size_t>(r)], mode);
        s = s2;
        m = m2;
    }
    return {s, m};
}

void MhcaStack::collect(const std::string& prefix, NamedParams& out) {
    for (std::size_t r = 0; r < search_blocks.size(); ++r) {
        search_blocks[r].collect(prefix + ".round" + std::to_string(r) + ".search", out);
        tmpl_blocks[r].collect(prefix + ".round" + std::to_string(r) + ".tmpl", out);
    }
}

}  // namespace sft
