#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sft/gpha.hpp"
#include "sft/gradcheck.hpp"
#include "sft/spectrum.hpp"
#include "test_util.hpp"

using namespace sft;
using refimpl::max_abs_diff;
using refimpl::random_tensor;

namespace {

Tensor random_row_stochastic(int heads, int s_q, int s_k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Tensor w({heads, s_q, s_k});
    for (int n = 0; n < heads; ++n) {
        for (int i = 0; i < s_q; ++i) {
            double sum = 0.0;
            for (int j = 0; j < s_k; ++j) {
                double e = std::exp(u(rng));
                w.at3(n, i, j) = e;
                sum += e;
            }
            for (int j = 0; j < s_k; ++j) w.at3(n, i, j) /= sum;
        }
    }
    return w;
}

void zero_ggn(GphaBlock& b) {
    for (Mlp* m : {&b.ggn.center, &b.ggn.bias, &b.ggn.sigma}) {
        for (Fc& fc : m->layers) {
            fc.w.value.fill(0.0);
            fc.b.value.fill(0.0);
        }
    }
}

}  // namespace

TEST_CASE("uniform log bias reduces to the unbiased softmax") {
    std::mt19937_64 rng(1);
    Tensor q = random_tensor({5, 4}, rng);
    Tensor k = random_tensor({6, 4}, rng);
    Tensor flat = Tensor::full({1, 6}, -0.73);
    Tensor biased = gaussian_biased_softmax(q, k, flat);

    Tensor logits = refimpl::matmul_nt(q, k);
    for (std::int64_t i = 0; i < logits.size(); ++i) logits[i] /= 2.0;
    Tensor unbiased = refimpl::softmax_rows(logits);
    CHECK(max_abs_diff(biased, unbiased) < 1e-12);
}

TEST_CASE("zero logits with a log-Gaussian bias give the normalized map") {
    Tensor q = Tensor::zeros({3, 4});
    Tensor k = Tensor::zeros({9, 4});
    Tensor map = gaussian_map(0.4, 0.6, 0.25, 0.3, 1.0, 3, 3);
    Tensor lb = log_gaussian_bias(map);
    Tensor w = gaussian_biased_softmax(q, k, lb);
    double total = 0.0;
    for (std::int64_t i = 0; i < map.size(); ++i) total += map[i];
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 9; ++j) {
            CHECK(w.at(i, j) == doctest::Approx(map[j] / total).epsilon(1e-12));
        }
    }
}

TEST_CASE("a key at the Gaussian center gains weight over the unbiased case") {
    Tensor q = Tensor::zeros({1, 4});
    Tensor k = Tensor::zeros({9, 4});
    Tensor map = gaussian_map(0.5, 0.5, 0.2, 0.2, 1.0, 3, 3);
    Tensor w = gaussian_biased_softmax(q, k, log_gaussian_bias(map));
    // Unbiased would be uniform 1/9; the center key (row 1, col 1 -> index 4)
    // must exceed it and every off-center key must fall below the center.
    CHECK(w.at(0, 4) > 1.0 / 9.0);
    for (int j = 0; j < 9; ++j) {
        if (j != 4) CHECK(w.at(0, j) < w.at(0, 4));
    }
}

TEST_CASE("decompose splits into constant DC and zero-sum HF") {
    std::mt19937_64 rng(2);
    Tensor w = random_row_stochastic(2, 3, 4, rng);
    AttnDecomposition d = decompose_dc_hf(w);
    for (std::int64_t i = 0; i < d.w_dc.size(); ++i) CHECK(d.w_dc[i] == 0.25);
    for (int n = 0; n < 2; ++n) {
        for (int i = 0; i < 3; ++i) {
            double sum = 0.0;
            for (int j = 0; j < 4; ++j) sum += d.w_hf.at3(n, i, j);
            CHECK(std::fabs(sum) < 1e-9);
        }
    }
    // Residual reconstruction is exact.
    for (std::int64_t i = 0; i < w.size(); ++i) {
        CHECK(std::fabs(d.w_dc[i] + d.w_hf[i] - w[i]) < 1e-15);
    }

    Tensor uniform = Tensor::full({1, 2, 4}, 0.25);
    AttnDecomposition du = decompose_dc_hf(uniform);
    for (std::int64_t i = 0; i < du.w_hf.size(); ++i) CHECK(du.w_hf[i] == 0.0);

    Tensor bad = Tensor::full({1, 2, 4}, 0.3);
    CHECK_THROWS_AS(decompose_dc_hf(bad), std::logic_error);
}

TEST_CASE("emphasize: beta 0 identity, beta -1 pure DC, beta 1 algebraic oracle") {
    std::mt19937_64 rng(3);
    Tensor w = random_row_stochastic(3, 4, 5, rng);

    AttnDecomposition d0 = emphasize(decompose_dc_hf(w), Tensor::zeros({1, 3}));
    CHECK(max_abs_diff(d0.w_hat, w) == 0.0);

    AttnDecomposition dm = emphasize(decompose_dc_hf(w), Tensor::full({1, 3}, -1.0));
    for (std::int64_t i = 0; i < dm.w_hat.size(); ++i) CHECK(dm.w_hat[i] == 0.2);

    AttnDecomposition dp = emphasize(decompose_dc_hf(w), Tensor::full({1, 3}, 1.0));
    for (std::int64_t i = 0; i < dp.w_hat.size(); ++i) {
        CHECK(std::fabs(dp.w_hat[i] - (2.0 * w[i] - 0.2)) < 1e-12);
    }
}

TEST_CASE("rows of the emphasized weights sum to one for any beta") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> bu(-2.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor w = random_row_stochastic(2, 4, 6, rng);
        Tensor beta({1, 2}, {bu(rng), bu(rng)});
        AttnDecomposition d = emphasize(decompose_dc_hf(w), beta);
        for (int n = 0; n < 2; ++n) {
            for (int i = 0; i < 4; ++i) {
                double sum = 0.0, hf_sum = 0.0;
                for (int j = 0; j < 6; ++j) {
                    sum += d.w_hat.at3(n, i, j);
                    hf_sum += d.w_hf.at3(n, i, j);
                }
                CHECK(std::fabs(sum - 1.0) < 1e-9);
                CHECK(std::fabs(hf_sum) < 1e-9);
            }
        }
    }
}

TEST_CASE("gpha block with zero GGN weights matches biased attention on the centered map") {
    std::mt19937_64 rng(5);
    GphaBlock block(2, 8, rng);
    zero_ggn(block);
    Tensor x = random_tensor({16, 8}, rng);

    Tape t;
    RunMode mode;
    GphaOptions opts;  // gaussian on, residual on
    GgnVars base = ggn_base_center_vars(t, t.mean_rows(t.constant(x)), block.ggn);
    GphaLayerCapture cap;
    SeqVar out = gpha_block(t, SeqVar{t.constant(x), 4, 4}, SeqVar{t.constant(x), 4, 4}, block,
                            base, 0, opts, mode, &cap);

    // Captured attention equals the value-level biased softmax with the
    // centered map for each head.
    double sigma = std::log(2.0) + 1e-3;
    Tensor map = gaussian_map(0.5, 0.5, sigma, sigma, 1.0, 4, 4);
    Tensor lb = log_gaussian_bias(map);
    Tensor qp = refimpl::linear(x, block.q_proj);
    Tensor kp = refimpl::linear(x, block.k_proj);
    for (int n = 0; n < 2; ++n) {
        Tensor expect = gaussian_biased_softmax(refimpl::slice_cols(qp, n * 4, 4),
                                                refimpl::slice_cols(kp, n * 4, 4), lb);
        CHECK(max_abs_diff(cap.heads[static_cast<std::size_t>(n)].weights, expect) < 1e-12);
    }
    CHECK(t.value(out.tokens).rows() == 16);
}

TEST_CASE("flat prior via huge sigma matches vanilla attention") {
    std::mt19937_64 rng(6);
    GphaBlock block(2, 8, rng);
    zero_ggn(block);
    // Huge raw sigma output -> softplus is near-identity -> sigma about 1e6,
    // so the log bias varies by less than 1e-12 across the grid.
    block.ggn.sigma.layers[1].b.value.fill(1e6);
    Tensor x = random_tensor({16, 8}, rng);

    Tape t;
    RunMode mode;
    GphaOptions opts;
    GgnVars base = ggn_base_center_vars(t, t.mean_rows(t.constant(x)), block.ggn);
    SeqVar out = gpha_block(t, SeqVar{t.constant(x), 4, 4}, SeqVar{t.constant(x), 4, 4}, block,
                            base, 0, opts, mode);

    Tensor vanilla = refimpl::vanilla_msa(x, block, /*residual=*/true);
    CHECK(max_abs_diff(t.value(out.tokens), vanilla) < 1e-9);
}

TEST_CASE("single kv token: attention is exactly one regardless of Gaussian and beta") {
    std::mt19937_64 rng(7);
    GphaBlock block(2, 8, rng);
    block.beta.value.at(0, 0) = 1.7;
    block.beta.value.at(0, 1) = -0.4;
    Tensor q = random_tensor({5, 8}, rng);
    Tensor kv = random_tensor({1, 8}, rng);

    Tape t;
    RunMode mode;
    GphaOptions opts;
    GgnVars base = ggn_base_center_vars(t, t.mean_rows(t.constant(kv)), block.ggn);
    GphaLayerCapture cap;
    gpha_block(t, SeqVar{t.constant(q), 1, 5}, SeqVar{t.constant(kv), 1, 1}, block, base, 0, opts,
               mode, &cap);
    for (int n = 0; n < 2; ++n) {
        const Tensor& w = cap.heads[static_cast<std::size_t>(n)].weights;
        const Tensor& what = cap.heads[static_cast<std::size_t>(n)].weights_emph;
        for (int i = 0; i < 5; ++i) {
            CHECK(w.at(i, 0) == 1.0);
            CHECK(what.at(i, 0) == 1.0);  // DC = 1, HF = 0: emphasis is inert
        }
    }
}

TEST_CASE("frozen random weights match the straight-line reference") {
    std::mt19937_64 rng(8);
    GphaBlock block(2, 8, rng);
    Tensor x = random_tensor({16, 8}, rng);
    std::uniform_real_distribution<double> bu(-0.5, 1.5);
    block.beta.value.at(0, 0) = bu(rng);
    block.beta.value.at(0, 1) = bu(rng);

    std::vector<double> bx, by;
    refimpl::base_centers(x, block, bx, by);

    for (int layer : {0, 1}) {
        for (bool residual : {true, false}) {
            GphaOptions opts{1.3, true, residual};
            Tape t;
            RunMode mode;
            GgnVars base = ggn_base_center_vars(t, t.mean_rows(t.constant(x)), block.ggn);
            SeqVar out = gpha_block(t, SeqVar{t.constant(x), 4, 4}, SeqVar{t.constant(x), 4, 4},
                                    block, base, layer, opts, mode);
            Tensor expect = refimpl::gpha_block(x, x, block, bx, by, layer, 4, 4, opts);
            CHECK(max_abs_diff(t.value(out.tokens), expect) < 1e-12);
        }
    }
}

TEST_CASE("sfformer: layer count contract and single-layer equivalence") {
    std::mt19937_64 rng(9);
    CHECK_THROWS_AS(SfFormer(0, 2, 8, rng), std::invalid_argument);

    SfFormer sf(1, 2, 8, rng);
    Tensor x = random_tensor({16, 8}, rng);
    GphaOptions opts;
    RunMode mode;

    Tape t1;
    SeqVar out1 = sfformer_forward(t1, SeqVar{t1.constant(x), 4, 4}, sf, opts, mode);

    Tape t2;
    GgnVars base = ggn_base_center_vars(t2, t2.mean_rows(t2.constant(x)), sf.blocks[0].ggn);
    SeqVar out2 = gpha_block(t2, SeqVar{t2.constant(x), 4, 4}, SeqVar{t2.constant(x), 4, 4},
                             sf.blocks[0], base, 0, opts, mode);
    CHECK(max_abs_diff(t1.value(out1.tokens), t2.value(out2.tokens)) == 0.0);

    SfFormer sf6(6, 2, 8, rng);
    Tape t3;
    SeqVar out6 = sfformer_forward(t3, SeqVar{t3.constant(x), 4, 4}, sf6, opts, mode);
    CHECK(t3.value(out6.tokens).rows() == 16);
    CHECK(t3.value(out6.tokens).cols() == 8);
}

TEST_CASE("stack reduction: flat prior and zero beta equal vanilla attention per layer") {
    std::mt19937_64 rng(10);
    SfFormer sf(3, 2, 8, rng);
    Tensor x = random_tensor({16, 8}, rng);
    GphaOptions flat{1.0, /*use_gaussian=*/false, /*use_residual=*/true};
    RunMode mode;
    Tape t;
    SeqVar out = sfformer_forward(t, SeqVar{t.constant(x), 4, 4}, sf, flat, mode);

    Tensor expect = x;
    for (int l = 0; l < 3; ++l) {
        expect = refimpl::vanilla_msa(expect, sf.blocks[static_cast<std::size_t>(l)], true);
    }
    CHECK(max_abs_diff(t.value(out.tokens), expect) < 1e-9);
}

TEST_CASE("six stacked emphasis blocks keep more high-frequency energy at beta 2 than beta 0") {
    SpectrumConfig sc;
    sc.seeds = 25;
    SpectrumReport report = spectrum_experiment(sc);
    CHECK(report.hf_share_at("gpha_beta=2", 6) > report.hf_share_at("gpha_beta=0", 6));
    // The flat-prior baseline decays monotonically: the low-pass behavior.
    for (int l = 0; l < 6; ++l) {
        CHECK(report.hf_share_at("vanilla", l + 1) <= report.hf_share_at("vanilla", l));
    }
    // Annihilating the HF branch collapses everything after one layer.
    CHECK(report.hf_share_at("gpha_beta=-1", 1) < 1e-9);
}

TEST_CASE("full gradient check through a 2-layer stack on a 4x4 grid") {
    std::mt19937_64 rng(12);
    SfFormer sf(2, 2, 8, rng);
    Tensor x = random_tensor({16, 8}, rng);
    GphaOptions opts;

    auto f = [&](bool with_grad) {
        Tape t;
        RunMode mode;
        SeqVar out = sfformer_forward(t, SeqVar{t.constant(x), 4, 4}, sf, opts, mode);
        Var loss = t.scale(t.sum_all(t.mul(out.tokens, out.tokens)), 1e-4);
        if (with_grad) t.backward(loss);
        return t.value(loss)[0];
    };
    NamedParams np;
    sf.collect("sf", np);
    std::vector<Parameter*> ps;
    for (auto& [name, p] : np) ps.push_back(p);
    double err = gradient_check(f, ps, 1e-5);
    CHECK(err < 1e-4);

    // Beta and the used GGN branches received nonzero gradients.
    auto max_grad = [&](const std::string& needle) {
        double mx = 0.0;
        for (auto& [name, p] : np) {
            if (name.find(needle) != std::string::npos) {
                for (std::int64_t i = 0; i < p->grad.size(); ++i) {
                    mx = std::max(mx, std::fabs(p->grad[i]));
                }
            }
        }
        return mx;
    };
    CHECK(max_grad(".beta") > 0.0);
    CHECK(max_grad("layer0.ggn.center") > 0.0);
    CHECK(max_grad("layer1.ggn.bias") > 0.0);
    CHECK(max_grad("layer0.ggn.sigma") > 0.0);
}

TEST_CASE("cross variant runs with the template as pinned keys") {
    std::mt19937_64 rng(13);
    SfFormer sf(2, 2, 8, rng);
    Tensor search = random_tensor({16, 8}, rng);
    Tensor tmpl = random_tensor({4, 8}, rng);
    GphaOptions opts;
    RunMode mode;
    Tape t;
    GphaCapture cap;
    SeqVar out = sfformer_forward_cross(t, SeqVar{t.constant(search), 4, 4},
                                        SeqVar{t.constant(tmpl), 2, 2}, sf, opts, mode, &cap);
    CHECK(t.value(out.tokens).rows() == 16);
    // Attention maps are S_I x S_T in this reading.
    CHECK(cap.layers[0].heads[0].weights.rows() == 16);
    CHECK(cap.layers[0].heads[0].weights.cols() == 4);
}
