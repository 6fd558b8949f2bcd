#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "mvrecon/autodiff.hpp"
#include "mvrecon/rng.hpp"

using namespace mvr;
namespace a = ad;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(s));
    for (double& x : t.v) x = scale * rng.normal();
    return t;
}

// Central finite differences of a scalar-valued graph builder w.r.t. one leaf.
void check_gradient(const std::function<a::Var(const a::Var&)>& f, Tensor x0,
                    double h = 1e-6, double tol = 1e-6) {
    a::Var x = a::leaf(x0);
    a::Var y = f(x);
    REQUIRE(y->value.size() == 1);
    a::backward(y);
    for (std::size_t i = 0; i < x0.size(); ++i) {
        Tensor xp = x0, xm = x0;
        xp.v[i] += h;
        xm.v[i] -= h;
        double fp = f(a::leaf(xp))->value.v[0];
        double fm = f(a::leaf(xm))->value.v[0];
        double fd = (fp - fm) / (2.0 * h);
        double g = x->grad.v[i];
        double denom = std::max({std::fabs(g), std::fabs(fd), 1e-4});
        CHECK(std::fabs(g - fd) / denom < tol);
    }
}

}  // namespace

TEST_CASE("elementwise gradients match finite differences") {
    Rng rng(1);
    Tensor x = random_tensor({3, 4}, rng);
    for (double& v : x.v) v = 0.5 + std::fabs(v);  // positive domain for log/sqrt
    check_gradient([](const a::Var& v) { return a::sum(a::log(v)); }, x);
    check_gradient([](const a::Var& v) { return a::sum(a::sqrt(v)); }, x);
    check_gradient([](const a::Var& v) { return a::sum(a::softplus(v)); }, x);
    check_gradient([](const a::Var& v) { return a::sum(a::sigmoid(v)); }, x);
    check_gradient([](const a::Var& v) { return a::sum(a::gelu(v)); }, x, 1e-6, 1e-5);
    check_gradient([](const a::Var& v) { return a::sum(a::square(v)); }, x);
    check_gradient([](const a::Var& v) { return a::sum(a::mul(v, a::exp(a::neg(v)))); }, x);
    check_gradient([](const a::Var& v) { return a::mean(a::div(v, a::add_const(v, 3.0))); }, x);
}

TEST_CASE("matmul agrees with Eigen and its gradient with finite differences") {
    Rng rng(2);
    Tensor ta = random_tensor({3, 5}, rng), tb = random_tensor({5, 2}, rng);
    a::Var va = a::leaf(ta), vb = a::leaf(tb);
    a::Var prod = a::matmul(va, vb);

    Eigen::MatrixXd ea(3, 5), eb(5, 2);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 5; ++j) ea(i, j) = ta.at2(i, j);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 2; ++j) eb(i, j) = tb.at2(i, j);
    Eigen::MatrixXd ep = ea * eb;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) CHECK(std::fabs(prod->value.at2(i, j) - ep(i, j)) < 1e-10);

    check_gradient([&](const a::Var& v) { return a::sum(a::matmul(v, a::constant(tb))); }, ta);
    check_gradient([&](const a::Var& v) { return a::sum(a::matmul(a::constant(ta), v)); }, tb);
}

TEST_CASE("chunked softmax and value aggregation match the plain computation") {
    Rng rng(3);
    std::vector<int> chunks{3, 2, 4};
    Tensor scores = random_tensor({5, 9}, rng);
    Tensor values = random_tensor({9, 6}, rng);
    a::Var p = a::softmax_rows_chunked(a::leaf(scores), chunks);
    a::Var out = a::matmul_chunked(p, a::leaf(values), chunks);

    for (std::size_t r = 0; r < 5; ++r) {
        double mx = scores.at2(r, 0);
        for (int c = 1; c < 9; ++c) mx = std::max(mx, scores.at2(r, c));
        double z = 0.0;
        for (int c = 0; c < 9; ++c) z += std::exp(scores.at2(r, c) - mx);
        for (int c = 0; c < 9; ++c)
            CHECK(p->value.at2(r, c) ==
                  doctest::Approx(std::exp(scores.at2(r, c) - mx) / z).epsilon(1e-12));
        for (int j = 0; j < 6; ++j) {
            double s = 0.0;
            for (int c = 0; c < 9; ++c) s += p->value.at2(r, c) * values.at2(c, j);
            CHECK(std::fabs(out->value.at2(r, j) - s) < 1e-12);
        }
    }
}

TEST_CASE("chunked reductions are bit-exact under chunk permutation") {
    Rng rng(4);
    // Three chunks of equal width; swapping chunk contents permutes key order.
    std::vector<int> chunks{4, 4, 4};
    Tensor scores = random_tensor({6, 12}, rng);
    Tensor values = random_tensor({12, 5}, rng);
    Tensor scores_p({6, 12}), values_p({12, 5});
    std::vector<int> chunk_order{2, 0, 1};
    for (int nc = 0; nc < 3; ++nc) {
        int oc = chunk_order[nc];
        for (int r = 0; r < 6; ++r)
            for (int k = 0; k < 4; ++k) scores_p.at2(r, nc * 4 + k) = scores.at2(r, oc * 4 + k);
        for (int k = 0; k < 4; ++k)
            for (int j = 0; j < 5; ++j) values_p.at2(nc * 4 + k, j) = values.at2(oc * 4 + k, j);
    }
    a::Var o1 = a::matmul_chunked(a::softmax_rows_chunked(a::constant(scores), chunks),
                                  a::constant(values), chunks);
    a::Var o2 = a::matmul_chunked(a::softmax_rows_chunked(a::constant(scores_p), chunks),
                                  a::constant(values_p), chunks);
    for (std::size_t i = 0; i < o1->value.size(); ++i) CHECK(o1->value.v[i] == o2->value.v[i]);
}

TEST_CASE("chunked op gradients match finite differences") {
    Rng rng(5);
    std::vector<int> chunks{2, 3};
    Tensor scores = random_tensor({2, 5}, rng);
    Tensor values = random_tensor({5, 3}, rng);
    check_gradient(
        [&](const a::Var& v) {
            return a::sum(a::matmul_chunked(a::softmax_rows_chunked(v, chunks),
                                            a::constant(values), chunks));
        },
        scores, 1e-6, 1e-5);
    check_gradient(
        [&](const a::Var& v) {
            return a::sum(a::square(a::matmul_chunked(
                a::softmax_rows_chunked(a::constant(scores), chunks), v, chunks)));
        },
        values, 1e-6, 1e-5);
}

TEST_CASE("layernorm forward statistics and backward") {
    Rng rng(6);
    Tensor x = random_tensor({4, 7}, rng);
    Tensor g({7}, 1.0), b({7});
    a::Var y = a::layernorm_rows(a::leaf(x), a::constant(g), a::constant(b));
    for (int r = 0; r < 4; ++r) {
        double mean = 0, var = 0;
        for (int c = 0; c < 7; ++c) mean += y->value.at2(r, c);
        mean /= 7.0;
        for (int c = 0; c < 7; ++c) var += (y->value.at2(r, c) - mean) * (y->value.at2(r, c) - mean);
        CHECK(std::fabs(mean) < 1e-12);
        CHECK(var / 7.0 == doctest::Approx(1.0).epsilon(1e-4));
    }
    Tensor g2 = random_tensor({7}, rng), b2 = random_tensor({7}, rng);
    check_gradient(
        [&](const a::Var& v) {
            return a::sum(a::square(a::layernorm_rows(v, a::constant(g2), a::constant(b2))));
        },
        x, 1e-6, 1e-5);
    check_gradient(
        [&](const a::Var& v) {
            return a::sum(a::square(a::layernorm_rows(a::constant(x), v, a::constant(b2))));
        },
        g2, 1e-6, 1e-5);
}

TEST_CASE("gather reads, pads with zero, and scatter-adds on backward") {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    a::Var v = a::leaf(x);
    a::Var g = a::gather(v, {5, 0, -1, 0}, {2, 2});
    CHECK(g->value.v == std::vector<double>{6, 1, 0, 1});
    a::backward(a::sum(a::mul(g, a::constant(Tensor({2, 2}, {1, 10, 100, 1000})))));
    CHECK(v->grad.v == std::vector<double>{1010, 0, 0, 0, 0, 1});
}

TEST_CASE("structural ops round-trip and l2norm/dot behave") {
    Rng rng(7);
    Tensor x = random_tensor({4, 6}, rng);
    a::Var v = a::constant(x);
    a::Var back = a::concat_rows({a::slice_rows(v, 0, 2), a::slice_rows(v, 2, 4)});
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(back->value.v[i] == x.v[i]);
    a::Var backc = a::concat_cols({a::slice_cols(v, 0, 1), a::slice_cols(v, 1, 6)});
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(backc->value.v[i] == x.v[i]);

    a::Var n = a::l2norm_rows(v);
    for (int r = 0; r < 4; ++r) {
        double s = 0;
        for (int c = 0; c < 6; ++c) s += n->value.at2(r, c) * n->value.at2(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
    }
    a::Var d = a::dot_rows(n, n);
    for (int r = 0; r < 4; ++r) CHECK(d->value.v[r] == doctest::Approx(1.0).epsilon(1e-10));

    check_gradient([](const a::Var& u) { return a::sum(a::square(a::l2norm_rows(u))); }, x, 1e-6,
                   1e-5);
    check_gradient(
        [&](const a::Var& u) { return a::sum(a::dot_rows(u, a::constant(x))); }, x, 1e-6, 1e-5);
}

TEST_CASE("flop counter tracks 2*m*n*k per product") {
    a::reset_flop_count();
    a::flop_counting = true;
    Tensor ta({3, 4}, 1.0), tb({4, 5}, 1.0);
    a::matmul(a::constant(ta), a::constant(tb));
    a::flop_counting = false;
    CHECK(a::flop_count == 2 * 3 * 4 * 5);
}

TEST_CASE("constant branches contribute zero gradient") {
    Tensor p({3}, {1.0, -2.0, 3.0});
    a::Var v = a::leaf(p);
    a::Var loss = a::mul_const(a::sum(a::square(v)), 0.5);
    a::backward(loss);
    for (int i = 0; i < 3; ++i) CHECK(v->grad.v[i] == p.v[i]);  // d(0.5 ||p||^2) = p

    a::Var q = a::leaf(Tensor({2}, {1.0, 1.0}));
    a::Var c = a::constant(Tensor::scalar(5.0));
    a::backward(c);
    CHECK(q->grad.v[0] == 0.0);
    CHECK(q->grad.v[1] == 0.0);
}
