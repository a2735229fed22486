#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "uniugg/core/autograd.hpp"
#include "uniugg/core/conv.hpp"
#include "uniugg/core/nn.hpp"

using namespace uniugg::core;
using uniugg::testing::grad_check;

namespace {

Var<double> randn_leaf(std::vector<int64_t> shape, Rng& rng, bool rg = true) {
    return Var<double>::leaf(Tensor<double>::randn(std::move(shape), rng), rg);
}

}  // namespace

TEST_CASE("elementwise forward values") {
    auto a = Var<double>::leaf(Tensor<double>({2, 2}, {1, 2, 3, 4}), true);
    auto b = Var<double>::leaf(Tensor<double>({2, 2}, {5, 6, 7, 8}), true);
    CHECK(add(a, b).val().v == std::vector<double>{6, 8, 10, 12});
    CHECK(sub(a, b).val().v == std::vector<double>{-4, -4, -4, -4});
    CHECK(mul(a, b).val().v == std::vector<double>{5, 12, 21, 32});
    CHECK(mul_scalar(a, 2.0).val().v == std::vector<double>{2, 4, 6, 8});
}

TEST_CASE("matmul forward") {
    auto a = Var<double>::leaf(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}), true);
    auto b = Var<double>::leaf(Tensor<double>({3, 2}, {7, 8, 9, 10, 11, 12}), true);
    auto c = matmul(a, b);
    CHECK(c.shape() == std::vector<int64_t>{2, 2});
    CHECK(c.val().v == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("gradcheck composite elementwise graph") {
    Rng rng(1);
    auto a = randn_leaf({3, 4}, rng);
    auto b = randn_leaf({3, 4}, rng);
    auto fn = [&]() {
        auto t = mul(tanh_(a), sigmoid_(b));
        auto u = add(exp_(mul_scalar(a, 0.3)), square_(b));
        return mean_all(add(t, u));
    };
    auto res = grad_check(fn, {a, b});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck matmul/transpose/slice/concat") {
    Rng rng(2);
    auto a = randn_leaf({4, 3}, rng);
    auto b = randn_leaf({3, 5}, rng);
    auto fn = [&]() {
        auto m = matmul(a, b);                // [4,5]
        auto s1 = slice_cols(m, 0, 2);        // [4,2]
        auto s2 = slice_rows(m, 1, 3);        // [2,5]
        auto t = transpose(s2);               // [5,2]
        auto c = concat_rows<double>({s1, t});        // [9,2]
        auto d = concat_cols<double>({c, square_(c)});  // [9,4]
        return mean_all(mul(d, d));
    };
    auto res = grad_check(fn, {a, b});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck softmax / cross entropy / gather") {
    Rng rng(3);
    auto a = randn_leaf({5, 7}, rng);
    std::vector<int64_t> targets = {1, 0, 6, 3, 3};
    std::vector<int64_t> gather_idx = {4, 4, 0, 2};
    auto fn = [&]() {
        auto g = gather_rows(a, gather_idx);
        auto sm = softmax_rows(g);
        auto ce = cross_entropy_rows(a, targets);
        return add(mean_all(mul(sm, sm)), ce);
    };
    auto res = grad_check(fn, {a});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("cross entropy uniform logits gives log V") {
    auto logits = Var<double>::leaf(Tensor<double>({3, 10}, 0.25), false);
    auto ce = cross_entropy_rows(logits, {0, 5, 9});
    CHECK(ce.item() == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("gradcheck layer norm, normalize_rows, rows_l2norm") {
    Rng rng(4);
    auto x = randn_leaf({4, 6}, rng);
    auto gamma = Var<double>::leaf(Tensor<double>::uniform({6}, rng, 0.5, 1.5), true);
    auto beta = randn_leaf({6}, rng);
    auto fn = [&]() {
        auto ln = layer_norm(x, gamma, beta);
        auto nr = normalize_rows(x, 1e-12);
        auto rn = rows_l2norm(x, 0.0);
        return add(mean_all(square_(ln)), add(mean_all(mul(nr, ln)), mean_all(rn)));
    };
    auto res = grad_check(fn, {x, gamma, beta});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("normalize_rows produces unit rows") {
    Rng rng(5);
    auto x = randn_leaf({10, 8}, rng, false);
    auto y = normalize_rows(x, 1e-24);
    for (int64_t r = 0; r < 10; ++r) {
        double s = 0;
        for (int64_t c = 0; c < 8; ++c) s += y.val().at2(r, c) * y.val().at2(r, c);
        CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-9);
    }
}

TEST_CASE("gradcheck scalar-var and row ops") {
    Rng rng(6);
    auto x = randn_leaf({3, 4}, rng);
    auto b = randn_leaf({4}, rng);
    auto fn = [&]() {
        auto s = add_scalar(mean_all(square_(x)), 0.5);  // scalar Var > 0
        auto y = div_scalarvar(add_row(x, b), s);
        auto z = mul_scalarvar(y, s);
        return mean_all(add(square_(y), abs_(z)));
    };
    auto res = grad_check(fn, {x, b});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck unary kitchen sink") {
    Rng rng(7);
    // keep values positive for log/sqrt
    auto x = Var<double>::leaf(Tensor<double>::uniform({3, 5}, rng, 0.2, 2.0), true);
    auto fn = [&]() {
        auto a = add(log_(x), sqrt_(x));
        auto b = add(gelu_(x), relu_(add_scalar(x, -1.0)));
        auto c = clamp_(x, 0.4, 1.5);
        return mean_all(add(a, add(b, c)));
    };
    auto res = grad_check(fn, {x});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck conv2d and conv_transpose2d") {
    Rng rng(8);
    auto x = randn_leaf({2, 5, 6}, rng);
    auto w = randn_leaf({3, 2, 3, 3}, rng);
    auto b = randn_leaf({3}, rng);
    auto wt = randn_leaf({2, 3, 4, 4}, rng);
    auto bt = randn_leaf({3}, rng);

    SUBCASE("conv stride 1") {
        auto fn = [&]() { return mean_all(square_(conv2d(x, w, b, 1, 1))); };
        auto res = grad_check(fn, {x, w, b});
        CHECK(res.max_rel_err < 1e-6);
    }
    SUBCASE("conv stride 2") {
        auto fn = [&]() { return mean_all(square_(conv2d(x, w, b, 2, 1))); };
        auto res = grad_check(fn, {x, w, b});
        CHECK(res.max_rel_err < 1e-6);
    }
    SUBCASE("conv transpose stride 2") {
        auto fn = [&]() { return mean_all(square_(conv_transpose2d(x, wt, bt, 2, 1))); };
        auto res = grad_check(fn, {x, wt, bt});
        CHECK(res.max_rel_err < 1e-6);
    }
}

TEST_CASE("conv_transpose2d doubles spatial dims with k=4 s=2 p=1") {
    Rng rng(9);
    auto x = randn_leaf({3, 7, 5}, rng, false);
    auto w = randn_leaf({3, 2, 4, 4}, rng, false);
    auto b = randn_leaf({2}, rng, false);
    auto y = conv_transpose2d(x, w, b, 2, 1);
    CHECK(y.shape() == std::vector<int64_t>{2, 14, 10});
}

TEST_CASE("gradcheck attention block and cross block") {
    Rng rng(10);
    TransformerBlock<double> block(8, 2, rng);
    CrossAttentionBlock<double> xblock(8, 2, rng);
    auto x = randn_leaf({5, 8}, rng);
    auto ctx = randn_leaf({3, 8}, rng);
    auto fn = [&]() { return mean_all(square_(xblock.forward(block.forward(x), ctx))); };
    std::vector<Var<double>> leaves = {x, ctx};
    // a couple of representative parameters from each submodule
    for (auto& [name, v] : block.named_params()) leaves.push_back(v);
    auto res = grad_check(fn, leaves, 1e-6, 6);
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("attention mask blocks information flow") {
    Rng rng(11);
    MultiHeadAttention<double> attn(8, 2, rng);
    auto x = randn_leaf({4, 8}, rng, false);
    // causal mask
    Tensor<double> m({4, 4}, 0.0);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = i + 1; j < 4; ++j) m.at2(i, j) = -1e30;
    auto mask = Var<double>::leaf(m, false);
    auto y0 = attn.forward(x, x, &mask);
    // perturb the last token; rows 0..2 must be unchanged
    auto x2 = Var<double>::leaf(x.val(), false);
    x2.val().at2(3, 0) += 10.0;
    auto y1 = attn.forward(x2, x2, &mask);
    for (int64_t r = 0; r < 3; ++r)
        for (int64_t c = 0; c < 8; ++c)
            CHECK(y0.val().at2(r, c) == doctest::Approx(y1.val().at2(r, c)).epsilon(1e-12));
    // row 3 must differ
    double diff = 0;
    for (int64_t c = 0; c < 8; ++c) diff += std::abs(y0.val().at2(3, c) - y1.val().at2(3, c));
    CHECK(diff > 1e-6);
}

TEST_CASE("backward accumulates through shared subexpressions") {
    auto x = Var<double>::leaf(Tensor<double>({1}, {3.0}), true);
    auto y = mul(x, x);          // x^2
    auto z = add(y, mul(y, x));  // x^2 + x^3
    backward(z);
    CHECK(x.node()->grad[0] == doctest::Approx(2 * 3 + 3 * 9).epsilon(1e-12));
}

TEST_CASE("module registry names and freeze") {
    Rng rng(12);
    TransformerBlock<float> block(8, 2, rng);
    auto named = block.named_params();
    bool found = false;
    for (auto& [name, v] : named)
        if (name == "attn.wq.weight") found = true;
    CHECK(found);
    block.set_trainable(false);
    for (auto& [name, v] : named) CHECK_FALSE(v.requires_grad());
}
