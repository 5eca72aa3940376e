#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sft/autodiff.hpp"
#include "sft/gradcheck.hpp"
#include "sft/kernels.hpp"
#include "sft/layers.hpp"
#include "test_util.hpp"

using namespace sft;
using refimpl::max_abs_diff;
using refimpl::random_tensor;

TEST_CASE("tensor construction validates shape and finiteness") {
    CHECK_THROWS_AS(Tensor({2, 0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({3}, {1.0, 2.0}), std::invalid_argument);
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
}

TEST_CASE("matmul identity and forced cases") {
    Tape t;
    Tensor id({2, 2}, {1, 0, 0, 1});
    Tensor m({2, 2}, {3, 4, 5, 6});
    Var out = t.matmul(t.constant(id), t.constant(m));
    CHECK(max_abs_diff(t.value(out), m) == 0.0);

    Var out2 = t.matmul(t.constant(Tensor({1, 2}, {1, 2})), t.constant(Tensor({2, 1}, {3, 4})));
    CHECK(t.value(out2)[0] == 11.0);

    CHECK_THROWS_AS(t.matmul(t.constant(Tensor({2, 3})), t.constant(Tensor({2, 3}))),
                    std::invalid_argument);
}

TEST_CASE("matmul matches the triple-loop oracle") {
    std::mt19937_64 rng(11);
    Tensor a = random_tensor({5, 7}, rng);
    Tensor b = random_tensor({7, 3}, rng);
    Tape t;
    Var out = t.matmul(t.constant(a), t.constant(b));
    CHECK(max_abs_diff(t.value(out), refimpl::matmul(a, b)) < 1e-12);
}

TEST_CASE("parallel kernels match their serial twins bit for bit") {
    std::mt19937_64 rng(5);
    for (auto [m, n, k] : {std::tuple{33, 65, 17}, std::tuple{128, 128, 64}, std::tuple{1, 9, 3}}) {
        Tensor a = random_tensor({m, k}, rng);
        Tensor b = random_tensor({k, n}, rng);
        Tensor bt = random_tensor({n, k}, rng);
        Tensor at = random_tensor({k, m}, rng);
        Tensor c1({m, n}), c2({m, n});

        kernels::gemm_nn(m, n, k, a.data(), b.data(), c1.data(), false);
        kernels::serial::gemm_nn(m, n, k, a.data(), b.data(), c2.data(), false);
        CHECK(max_abs_diff(c1, c2) == 0.0);

        kernels::gemm_nt(m, n, k, a.data(), bt.data(), c1.data(), false);
        kernels::serial::gemm_nt(m, n, k, a.data(), bt.data(), c2.data(), false);
        CHECK(max_abs_diff(c1, c2) == 0.0);

        kernels::gemm_tn(m, n, k, at.data(), b.data(), c1.data(), false);
        kernels::serial::gemm_tn(m, n, k, at.data(), b.data(), c2.data(), false);
        CHECK(max_abs_diff(c1, c2) == 0.0);
    }

    Tensor x = random_tensor({70, 300}, rng, 3.0);
    Tensor y1({70, 300}), y2({70, 300});
    kernels::softmax_rows(70, 300, x.data(), y1.data());
    kernels::serial::softmax_rows(70, 300, x.data(), y2.data());
    CHECK(max_abs_diff(y1, y2) == 0.0);

    Tensor g = random_tensor({70, 300}, rng);
    Tensor dx1 = Tensor::zeros({70, 300}), dx2 = Tensor::zeros({70, 300});
    kernels::softmax_rows_backward(70, 300, y1.data(), g.data(), dx1.data());
    kernels::serial::softmax_rows_backward(70, 300, y1.data(), g.data(), dx2.data());
    CHECK(max_abs_diff(dx1, dx2) == 0.0);

    for (auto op : {kernels::Unary::Relu, kernels::Unary::Gelu, kernels::Unary::Sigmoid,
                    kernels::Unary::Softplus, kernels::Unary::Exp, kernels::Unary::Atan,
                    kernels::Unary::Abs}) {
        Tensor u1(x.shape()), u2(x.shape());
        kernels::unary_map(op, x.size(), x.data(), u1.data());
        kernels::serial::unary_map(op, x.size(), x.data(), u2.data());
        CHECK(max_abs_diff(u1, u2) == 0.0);
    }
}

TEST_CASE("softmax rows: symmetry, shift invariance, exact ratios") {
    Tape t;
    Var a = t.softmax_rows(t.constant(Tensor({1, 2}, {0, 0})));
    CHECK(t.value(a).at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

    Var b = t.softmax_rows(t.constant(Tensor({1, 3}, {1000, 1000, 1000})));
    for (int j = 0; j < 3; ++j) {
        CHECK(t.value(b).at(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }

    Var c = t.softmax_rows(t.constant(Tensor({1, 2}, {0.0, std::log(3.0)})));
    CHECK(t.value(c).at(0, 0) == doctest::Approx(0.25).epsilon(1e-13));
    CHECK(t.value(c).at(0, 1) == doctest::Approx(0.75).epsilon(1e-13));
}

TEST_CASE("softmax rows sum to one for huge logits and ignore row offsets") {
    std::mt19937_64 rng(17);
    Tensor x = random_tensor({20, 40}, rng, 1e4);
    Tape t;
    Var y = t.softmax_rows(t.constant(x));
    for (int i = 0; i < 20; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 40; ++j) sum += t.value(y).at(i, j);
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }

    Tensor shifted = x;
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int i = 0; i < 20; ++i) {
        double off = u(rng);
        for (int j = 0; j < 40; ++j) shifted.at(i, j) += off;
    }
    Var y2 = t.softmax_rows(t.constant(shifted));
    CHECK(max_abs_diff(t.value(y), t.value(y2)) < 1e-12);
}

TEST_CASE("linear layer forced cases and oracle") {
    std::mt19937_64 rng(3);
    Parameter w(random_tensor({4, 3}, rng));
    Parameter b(random_tensor({1, 3}, rng));

    Tape t;
    Var zero_in = t.constant(Tensor::zeros({2, 4}));
    Var out = linear(t, zero_in, w, b);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 3; ++j) CHECK(t.value(out).at(i, j) == b.value[j]);
    }

    Parameter id(Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    Parameter zb(Tensor::zeros({1, 3}));
    Tensor x = random_tensor({5, 3}, rng);
    Var out2 = linear(t, t.constant(x), id, zb);
    CHECK(max_abs_diff(t.value(out2), x) == 0.0);

    Tensor x3 = random_tensor({6, 4}, rng);
    Var out3 = linear(t, t.constant(x3), w, b);
    Tensor expect = refimpl::matmul(x3, w.value);
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 3; ++j) expect.at(i, j) += b.value[j];
    }
    CHECK(max_abs_diff(t.value(out3), expect) < 1e-12);
}

TEST_CASE("layer norm forced cases") {
    Tape t;
    Parameter gain(Tensor::full({1, 4}, 1.0));
    Parameter shift(Tensor::zeros({1, 4}));

    Var constant_row = t.layer_norm(t.constant(Tensor::full({1, 4}, 3.25)), t.param(gain),
                                    t.param(shift));
    for (int j = 0; j < 4; ++j) CHECK(t.value(constant_row).at(0, j) == 0.0);

    Parameter gain2(Tensor::full({1, 2}, 1.0));
    Parameter shift2(Tensor::zeros({1, 2}));
    Var pm = t.layer_norm(t.constant(Tensor({1, 2}, {-1, 1})), t.param(gain2), t.param(shift2));
    CHECK(t.value(pm).at(0, 0) == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(t.value(pm).at(0, 1) == doctest::Approx(1.0).epsilon(1e-5));

    Parameter zero_gain(Tensor::zeros({1, 4}));
    Parameter five(Tensor::full({1, 4}, 5.0));
    std::mt19937_64 rng(9);
    Var s = t.layer_norm(t.constant(random_tensor({3, 4}, rng)), t.param(zero_gain), t.param(five));
    for (std::int64_t i = 0; i < 12; ++i) CHECK(t.value(s)[i] == 5.0);
}

TEST_CASE("elementwise forced values and log domain error") {
    Tape t;
    CHECK(t.value(t.sigmoid(t.constant(Tensor::scalar(0.0))))[0] == 0.5);
    CHECK(t.value(t.softplus(t.constant(Tensor::scalar(0.0))))[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(t.value(t.relu(t.constant(Tensor::scalar(-3.0))))[0] == 0.0);
    CHECK_THROWS_AS(t.log(t.constant(Tensor::scalar(0.0))), std::domain_error);
    CHECK_THROWS_AS(elementwise(t, "nope", t.constant(Tensor::scalar(1.0))),
                    std::invalid_argument);
    CHECK(t.value(elementwise(t, "exp", t.constant(Tensor::scalar(1.0))))[0] ==
          doctest::Approx(std::exp(1.0)).epsilon(1e-15));
}

TEST_CASE("backward on simple forms") {
    std::mt19937_64 rng(21);
    // loss = sum(w * x) => dw = x
    Tensor x = random_tensor({1, 5}, rng);
    Parameter w(random_tensor({1, 5}, rng));
    Tape t;
    Var loss = t.sum_all(t.mul(t.param(w), t.constant(x)));
    t.backward(loss);
    CHECK(max_abs_diff(w.grad, x) == 0.0);

    // loss = (w - 3)^2 at w = 5 => grad 4
    Parameter w2(Tensor::scalar(5.0));
    Tape t2;
    Var d = t2.add_scalar(t2.param(w2), -3.0);
    t2.backward(t2.mul(d, d));
    CHECK(w2.grad[0] == doctest::Approx(4.0).epsilon(1e-15));

    // backward requires a scalar
    Tape t3;
    Parameter w3(random_tensor({2, 2}, rng));
    CHECK_THROWS_AS(t3.backward(t3.param(w3)), std::logic_error);
}

TEST_CASE("backward is linear over summed losses") {
    std::mt19937_64 rng(31);
    Parameter w(random_tensor({3, 3}, rng));
    Tensor x = random_tensor({3, 3}, rng);

    auto grad_of = [&](int which) {
        w.zero_grad();
        Tape t;
        Var wp = t.param(w);
        Var a = t.sum_all(t.mul(wp, t.constant(x)));
        Var b = t.sum_all(t.exp(t.scale(wp, 0.1)));
        Var loss = which == 0 ? a : (which == 1 ? b : t.add(a, b));
        t.backward(loss);
        return w.grad;
    };
    Tensor ga = grad_of(0), gb = grad_of(1), gsum = grad_of(2);
    for (std::int64_t i = 0; i < gsum.size(); ++i) {
        CHECK(gsum[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-12));
    }
}

TEST_CASE("gradient_check: quadratic, constant, and composite MLP") {
    Parameter q(Tensor({1, 3}, {1.0, -2.0, 0.5}));
    auto quad = [&](bool with_grad) {
        Tape t;
        Var v = t.param(q);
        Var loss = t.sum_all(t.mul(v, v));
        if (with_grad) t.backward(loss);
        return t.value(loss)[0];
    };
    CHECK(gradient_check(quad, {&q}, 1e-5) < 1e-9);

    auto constant_fn = [&](bool with_grad) {
        Tape t;
        Var v = t.param(q);
        Var loss = t.scale(t.sum_all(v), 0.0);
        if (with_grad) t.backward(loss);
        return t.value(loss)[0];
    };
    CHECK(gradient_check(constant_fn, {&q}, 1e-5) == 0.0);

    std::mt19937_64 rng(41);
    Mlp mlp({4, 8, 2}, Act::Gelu, rng);
    Tensor input = random_tensor({3, 4}, rng);
    auto mlp_loss = [&](bool with_grad) {
        Tape t;
        Var out = mlp.apply(t, t.constant(input));
        Var loss = t.sum_all(t.mul(out, out));
        if (with_grad) t.backward(loss);
        return t.value(loss)[0];
    };
    NamedParams np;
    mlp.collect("mlp", np);
    std::vector<Parameter*> ps;
    for (auto& [name, p] : np) ps.push_back(p);
    CHECK(gradient_check(mlp_loss, ps, 1e-5) < 1e-4);
}

TEST_CASE("gradient_check covers every differentiable primitive") {
    std::mt19937_64 rng(51);
    Parameter a(random_tensor({3, 4}, rng));
    Parameter b(random_tensor({3, 4}, rng));
    Parameter m1(random_tensor({3, 4}, rng));
    Parameter m2(random_tensor({4, 2}, rng));
    Parameter row(random_tensor({1, 4}, rng));
    Parameter s(Tensor::scalar(0.7));
    Parameter gain(random_tensor({1, 4}, rng, 0.3));
    Parameter shift(random_tensor({1, 4}, rng, 0.3));
    // keep div/log/atan inputs away from their singular points
    Parameter pos(Tensor({2, 2}, {0.7, 1.3, 2.1, 0.4}));

    auto f = [&](bool with_grad) {
        Tape t;
        Var va = t.param(a), vb = t.param(b);
        Var acc = t.sum_all(t.mul(t.add(va, vb), t.sub(va, vb)));
        acc = t.add(acc, t.sum_all(t.minimum(va, vb)));
        acc = t.add(acc, t.sum_all(t.maximum(va, vb)));
        acc = t.add(acc, t.sum_all(t.matmul(t.param(m1), t.param(m2))));
        acc = t.add(acc, t.sum_all(t.matmul_nt(t.param(m1), t.param(m1))));
        acc = t.add(acc, t.sum_all(t.transpose(t.param(m1))));
        acc = t.add(acc, t.sum_all(t.add_rowvec(t.param(a), t.param(row))));
        acc = t.add(acc, t.sum_all(t.mul_scalar_var(t.param(b), t.param(s))));
        acc = t.add(acc, t.sum_all(t.softmax_rows(t.param(a))));
        Var sm = t.softmax_rows(t.param(b));
        acc = t.add(acc, t.sum_all(t.mul(sm, sm)));  // exercise softmax backward
        acc = t.add(acc, t.sum_all(t.layer_norm(t.param(a), t.param(gain), t.param(shift))));
        for (auto unary : {&Tape::gelu, &Tape::sigmoid, &Tape::softplus, &Tape::atan}) {
            acc = t.add(acc, t.sum_all((t.*unary)(t.param(a))));
        }
        Var vp = t.param(pos);
        acc = t.add(acc, t.sum_all(t.log(vp)));
        acc = t.add(acc, t.sum_all(t.exp(t.scale(vp, -1.0))));
        acc = t.add(acc, t.sum_all(t.div(t.mul(vp, vp), t.add_scalar(vp, 3.0))));
        acc = t.add(acc, t.sum_all(t.mean_rows(t.param(m1))));
        acc = t.add(acc, t.mean_all(t.param(m2)));
        acc = t.add(acc, t.sum_all(t.concat_cols({t.param(a), t.param(b)})));
        acc = t.add(acc, t.sum_all(t.slice_cols(t.param(a), 1, 2)));
        acc = t.add(acc, t.sum_all(t.gather_rows(t.param(a), {2, 0, 2})));
        acc = t.add(acc, t.sum_all(t.gather_flat(t.param(b), {2, 6}, {3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8})));
        acc = t.add(acc, t.sum_all(t.reshape(t.param(m2), {2, 4})));
        Var lg = t.log_gaussian_map(t.sigmoid(t.param(s)), t.sigmoid(t.param(s)),
                                    t.add_scalar(t.sigmoid(t.param(s)), 0.05),
                                    t.add_scalar(t.sigmoid(t.param(s)), 0.1), 3, 3, 1.0);
        acc = t.add(acc, t.sum_all(lg));
        if (with_grad) t.backward(acc);
        return t.value(acc)[0];
    };
    std::vector<Parameter*> ps{&a, &b, &m1, &m2, &row, &s, &gain, &shift, &pos};
    CHECK(gradient_check(f, ps, 1e-6) < 1e-6);
}

TEST_CASE("relu and abs finite-difference check away from kinks") {
    Parameter a(Tensor({2, 3}, {0.5, -1.25, 2.0, -0.75, 1.5, -2.5}));
    auto f = [&](bool with_grad) {
        Tape t;
        Var va = t.param(a);
        Var loss = t.add(t.sum_all(t.relu(va)), t.sum_all(t.abs(va)));
        if (with_grad) t.backward(loss);
        return t.value(loss)[0];
    };
    CHECK(gradient_check(f, {&a}, 1e-6) < 1e-6);
}

TEST_CASE("dropout is identity at rate zero and rescales kept entries") {
    std::mt19937_64 rng(61);
    Tensor x = random_tensor({8, 8}, rng);
    Tape t;
    Var v = t.dropout(t.constant(x), 0.0, rng);
    CHECK(max_abs_diff(t.value(v), x) == 0.0);

    std::mt19937_64 rng2(62);
    Var d = t.dropout(t.constant(x), 0.5, rng2);
    const Tensor& y = t.value(d);
    for (std::int64_t i = 0; i < y.size(); ++i) {
        bool zero = y[i] == 0.0;
        bool doubled = std::fabs(y[i] - 2.0 * x[i]) < 1e-15;
        CHECK((zero || doubled));
    }

    std::mt19937_64 ra(63), rb(63);
    Tape ta, tb;
    CHECK(max_abs_diff(ta.value(ta.dropout(ta.constant(x), 0.3, ra)),
                       tb.value(tb.dropout(tb.constant(x), 0.3, rb))) == 0.0);
}

TEST_CASE("parameters reused on one tape accumulate a single combined gradient") {
    std::mt19937_64 rng(71);
    Parameter w(random_tensor({2, 2}, rng));
    Tape t;
    Var w1 = t.param(w);
    Var w2 = t.param(w);
    CHECK(w1.id == w2.id);  // same node, one deposit
    Var loss = t.sum_all(t.add(w1, t.scale(w2, 2.0)));
    t.backward(loss);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(w.grad[i] == doctest::Approx(3.0).epsilon(1e-15));
}
