#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "flowad/rng.hpp"
#include "flowad/tensor/finite_diff.hpp"
#include "flowad/tensor/nn.hpp"
#include "flowad/tensor/optim.hpp"
#include "flowad/tensor/param_set.hpp"
#include "flowad/tensor/tensor.hpp"
#include "flowad/tensor/tensor_io.hpp"

#include "oracles.hpp"

using namespace flowad;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    return Tensor::uniform(std::move(shape), lo, hi, rng);
}

// Scalarizes a tensor with fixed weights so every element's gradient is
// distinct; plain sums would hide transposition bugs.
Tensor weighted_sum(const Tensor& y, const Tensor& w) { return sum_all(mul(y, w)); }

} // namespace

TEST_CASE("matmul matches identity and naive oracle") {
    Rng rng(7);
    Tensor b = rand_tensor({3, 4}, rng);
    Tensor i3 = Tensor::identity(3);
    Tensor ib = matmul(i3, b);
    REQUIRE(ib.shape() == Shape{3, 4});
    for (int e = 0; e < ib.numel(); ++e) REQUIRE(ib.data()[e] == b.data()[e]);

    Tensor a = rand_tensor({4, 5}, rng);
    Tensor c = rand_tensor({5, 3}, rng);
    Tensor y = matmul(a, c);
    auto ref = oracles::naive_matmul(a.data(), c.data(), 4, 5, 3);
    for (int e = 0; e < y.numel(); ++e)
        REQUIRE(std::abs(y.data()[e] - ref[e]) < 1e-12);

    Tensor ones = Tensor::full({2, 2}, 1.0);
    Tensor twos = matmul(ones, ones);
    for (double v : twos.data()) REQUIRE(v == 2.0);

    REQUIRE_THROWS_AS(matmul(a, b), DimensionError);
    REQUIRE_THROWS_AS(matmul(a.reshape({2, 10}), c), DimensionError);
}

TEST_CASE("matmul gradients against finite differences") {
    Rng rng(11);
    Tensor w = rand_tensor({4, 3}, rng);
    auto f = [&](const std::vector<Tensor>& in) {
        return weighted_sum(matmul(in[0], in[1]), w);
    };
    auto rep = finite_diff_grad(f, {rand_tensor({4, 5}, rng), rand_tensor({5, 3}, rng)}, 1e-5);
    REQUIRE(rep.max_rel_err < 1e-6);
}

TEST_CASE("elementwise ops and their gradients") {
    Rng rng(13);
    Tensor w = rand_tensor({2, 3}, rng);
    auto check = [&](auto op) {
        auto f = [&](const std::vector<Tensor>& in) { return weighted_sum(op(in[0], in[1]), w); };
        auto rep = finite_diff_grad(f, {rand_tensor({2, 3}, rng), rand_tensor({2, 3}, rng, 0.5, 2.0)},
                                    1e-5);
        REQUIRE(rep.max_rel_err < 1e-6);
    };
    check([](const Tensor& a, const Tensor& b) { return add(a, b); });
    check([](const Tensor& a, const Tensor& b) { return sub(a, b); });
    check([](const Tensor& a, const Tensor& b) { return mul(a, b); });
    check([](const Tensor& a, const Tensor& b) { return div(a, b); });

    Tensor a = rand_tensor({2, 2}, rng);
    REQUIRE_THROWS_AS(add(a, rand_tensor({2, 3}, rng)), DimensionError);
    REQUIRE_THROWS_AS(div(a, Tensor::zeros({2, 2})), DomainError);
}

TEST_CASE("unary ops: values, domains, gradients") {
    Rng rng(17);
    Tensor x = rand_tensor({5}, rng, 0.1, 2.0);
    Tensor lx = log_op(x);
    for (int i = 0; i < 5; ++i) REQUIRE(lx.data()[i] == std::log(x.data()[i]));
    REQUIRE_THROWS_AS(log_op(Tensor::scalar(0.0)), DomainError);
    REQUIRE_THROWS_AS(log_op(Tensor::scalar(-1.0)), DomainError);

    Tensor w = rand_tensor({4}, rng);
    for (auto op : {exp_op, log_op, sigmoid, tanh_op}) {
        auto f = [&](const std::vector<Tensor>& in) { return weighted_sum(op(in[0]), w); };
        auto rep = finite_diff_grad(f, {rand_tensor({4}, rng, 0.2, 1.5)}, 1e-5);
        REQUIRE(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("structural ops round values through and route gradients") {
    Rng rng(19);
    Tensor x = rand_tensor({2, 3, 4}, rng);

    SECTION("permute is its own inverse under the inverse order") {
        Tensor p = permute(x, {2, 0, 1});
        REQUIRE(p.shape() == Shape{4, 2, 3});
        Tensor back = permute(p, {1, 2, 0});
        for (int e = 0; e < x.numel(); ++e) REQUIRE(back.data()[e] == x.data()[e]);
        REQUIRE_THROWS_AS(permute(x, {0, 0, 1}), DimensionError);
    }

    SECTION("concat/slice invert each other") {
        Tensor a = rand_tensor({2, 2, 4}, rng), b = rand_tensor({2, 5, 4}, rng);
        Tensor c = concat(1, {a, b});
        REQUIRE(c.shape() == Shape{2, 7, 4});
        Tensor a2 = slice(c, 1, 0, 2), b2 = slice(c, 1, 2, 7);
        for (int e = 0; e < a.numel(); ++e) REQUIRE(a2.data()[e] == a.data()[e]);
        for (int e = 0; e < b.numel(); ++e) REQUIRE(b2.data()[e] == b.data()[e]);
        REQUIRE_THROWS_AS(slice(c, 1, 3, 3), DimensionError);
        REQUIRE_THROWS_AS(concat(1, {a, rand_tensor({3, 2, 4}, rng)}), DimensionError);
    }

    SECTION("gather repeats and scatters gradient") {
        Tensor m = rand_tensor({3, 2}, rng);
        Tensor g = gather(m, 0, {1, 1, 0});
        REQUIRE(g.shape() == Shape{3, 2});
        REQUIRE(g.at({0, 0}) == m.at({1, 0}));
        REQUIRE(g.at({2, 1}) == m.at({0, 1}));
        REQUIRE_THROWS_AS(gather(m, 0, {3}), InvalidInputError);

        Tape tape;
        Tape::Scope scope(tape);
        Tensor mm = m;
        mm.set_requires_grad(true);
        tape.track(mm);
        Tensor loss = sum_all(gather(mm, 0, {1, 1, 0}));
        tape.backward(loss);
        REQUIRE(mm.grad()[0 * 2 + 0] == 1.0);
        REQUIRE(mm.grad()[1 * 2 + 0] == 2.0);
        REQUIRE(mm.grad()[2 * 2 + 0] == 0.0);
    }

    SECTION("finite differences through a structural chain") {
        Tensor w = rand_tensor({3, 4}, rng);
        auto f = [&](const std::vector<Tensor>& in) {
            Tensor p = permute(in[0], {1, 0, 2});
            Tensor s = slice(p, 0, 0, 3);
            Tensor g = gather(s, 2, {3, 0, 0, 2});
            return weighted_sum(mean_rows(g.reshape({6, 4})).reshape({1, 4}),
                                slice(w, 0, 0, 1));
        };
        auto rep = finite_diff_grad(f, {x}, 1e-5);
        REQUIRE(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("reductions and broadcasts") {
    Rng rng(23);
    Tensor m = rand_tensor({3, 4}, rng);
    Tensor mr = mean_rows(m);
    for (int j = 0; j < 4; ++j) {
        double s = 0.0;
        for (int i = 0; i < 3; ++i) s += m.at({i, j});
        REQUIRE(std::abs(mr.data()[j] - s / 3.0) < 1e-15);
    }

    Tensor v = rand_tensor({4}, rng);
    Tensor y = add_rowvec(m, v);
    REQUIRE(y.at({2, 1}) == m.at({2, 1}) + v.data()[1]);
    Tensor cv = rand_tensor({3}, rng);
    Tensor yc = add_colvec(m, cv);
    REQUIRE(yc.at({1, 3}) == m.at({1, 3}) + cv.data()[1]);
    REQUIRE_THROWS_AS(add_rowvec(m, cv), DimensionError);

    Tensor w = rand_tensor({4}, rng);
    auto f = [&](const std::vector<Tensor>& in) {
        return weighted_sum(mean_rows(add_rowvec(in[0], in[1])), w);
    };
    auto rep = finite_diff_grad(f, {m, v}, 1e-5);
    REQUIRE(rep.max_rel_err < 1e-6);
}

TEST_CASE("softmax rows: normalization, shift invariance, gradients") {
    Rng rng(29);
    Tensor x = rand_tensor({6, 5}, rng, -3.0, 3.0);
    Tensor s = softmax_rows(x);
    for (int i = 0; i < 6; ++i) {
        double row = 0.0;
        for (int j = 0; j < 5; ++j) row += s.at({i, j});
        REQUIRE(std::abs(row - 1.0) < 1e-9);
    }
    Tensor s2 = softmax_rows(add_scalar(x, 13.75));
    for (int e = 0; e < s.numel(); ++e) REQUIRE(std::abs(s.data()[e] - s2.data()[e]) < 1e-12);

    Tensor ls = log_softmax_rows(x);
    for (int e = 0; e < s.numel(); ++e)
        REQUIRE(std::abs(std::exp(ls.data()[e]) - s.data()[e]) < 1e-12);

    Tensor w = rand_tensor({6, 5}, rng);
    for (auto op : {softmax_rows, log_softmax_rows}) {
        auto f = [&](const std::vector<Tensor>& in) { return weighted_sum(op(in[0]), w); };
        auto rep = finite_diff_grad(f, {x}, 1e-5);
        REQUIRE(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("cross entropy agrees with log-softmax picks and has softmax gradient") {
    Rng rng(31);
    Tensor logits = rand_tensor({4, 6}, rng, -2.0, 2.0);
    std::vector<int> targets{2, 0, 5, 3};
    Tensor ce = cross_entropy_mean(logits, targets);
    Tensor ls = log_softmax_rows(logits);
    double ref = 0.0;
    for (int i = 0; i < 4; ++i) ref -= ls.at({i, targets[i]});
    REQUIRE(std::abs(ce.value() - ref / 4.0) < 1e-12);
    REQUIRE_THROWS_AS(cross_entropy_mean(logits, std::vector<int>{0, 1}), DimensionError);
    REQUIRE_THROWS_AS(cross_entropy_mean(logits, std::vector<int>{0, 1, 2, 6}), InvalidInputError);

    auto f = [&](const std::vector<Tensor>& in) { return cross_entropy_mean(in[0], targets); };
    auto rep = finite_diff_grad(f, {logits}, 1e-5);
    REQUIRE(rep.max_rel_err < 1e-6);
}

TEST_CASE("attention: degenerate softmax cases and naive oracle") {
    Rng rng(37);

    SECTION("single key broadcasts its value row exactly") {
        Tensor q = rand_tensor({5, 3}, rng);
        Tensor k = rand_tensor({1, 3}, rng);
        Tensor v = rand_tensor({1, 3}, rng);
        auto [out, w] = attention_with_weights(q, k, v);
        for (int i = 0; i < 5; ++i) {
            REQUIRE(w.at({i, 0}) == 1.0);
            for (int d = 0; d < 3; ++d) REQUIRE(out.at({i, d}) == v.at({0, d}));
        }
    }

    SECTION("identical keys average the values") {
        Tensor q = rand_tensor({2, 3}, rng);
        Tensor krow = rand_tensor({1, 3}, rng);
        Tensor k = concat(0, {krow, krow, krow});
        Tensor v = rand_tensor({3, 3}, rng);
        Tensor out = attention(q, k, v);
        for (int i = 0; i < 2; ++i)
            for (int d = 0; d < 3; ++d) {
                const double mean = (v.at({0, d}) + v.at({1, d}) + v.at({2, d})) / 3.0;
                REQUIRE(std::abs(out.at({i, d}) - mean) < 1e-12);
            }
    }

    SECTION("random case matches the two-pass oracle") {
        Tensor q = rand_tensor({4, 6}, rng), k = rand_tensor({7, 6}, rng),
               v = rand_tensor({7, 6}, rng);
        Tensor out = attention(q, k, v);
        auto ref = oracles::naive_attention(q.data(), k.data(), v.data(), 4, 7, 6);
        for (int e = 0; e < out.numel(); ++e) REQUIRE(std::abs(out.data()[e] - ref[e]) < 1e-10);

        auto w = attention_with_weights(q, k, v).second;
        for (int i = 0; i < 4; ++i) {
            double row = 0.0;
            for (int j = 0; j < 7; ++j) row += w.at({i, j});
            REQUIRE(std::abs(row - 1.0) < 1e-9);
        }
    }

    SECTION("empty key set is rejected") {
        Tensor q = rand_tensor({2, 3}, rng);
        Tensor k = Tensor::zeros({0, 3}), v = Tensor::zeros({0, 3});
        REQUIRE_THROWS_AS(attention(q, k, v), InvalidInputError);
    }

    SECTION("gradients") {
        Tensor w = rand_tensor({4, 6}, rng);
        auto f = [&](const std::vector<Tensor>& in) {
            return weighted_sum(attention(in[0], in[1], in[2]), w);
        };
        auto rep = finite_diff_grad(
            f, {rand_tensor({4, 6}, rng), rand_tensor({5, 6}, rng), rand_tensor({5, 6}, rng)},
            1e-5);
        REQUIRE(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("gru_cell matches the scalar reference and honors gate limits") {
    Rng rng(41);
    const int c = 6;
    ParamSet ps;
    init_gru(ps, "g", c, rng);

    Tensor x = rand_tensor({c}, rng), h = rand_tensor({c}, rng);
    Tensor out = gru_cell(x, h, ps, "g");

    oracles::ScalarGruWeights w;
    w.wr = ps.at("g.wr").data();
    w.ur = ps.at("g.ur").data();
    w.br = ps.at("g.br").data();
    w.wz = ps.at("g.wz").data();
    w.uz = ps.at("g.uz").data();
    w.bz = ps.at("g.bz").data();
    w.wn = ps.at("g.wn").data();
    w.un = ps.at("g.un").data();
    w.bn = ps.at("g.bn").data();
    auto ref = oracles::scalar_gru(x.data(), h.data(), w, c);
    for (int i = 0; i < c; ++i) REQUIRE(std::abs(out.data()[i] - ref[i]) < 1e-12);

    SECTION("closed update gate keeps the hidden state") {
        ParamSet closed;
        Rng rng2(42);
        init_gru(closed, "g", c, rng2);
        closed.replace("g.bz", Tensor::full({c}, -60.0));
        closed.replace("g.wz", Tensor::zeros({c, c}));
        closed.replace("g.uz", Tensor::zeros({c, c}));
        Tensor kept = gru_cell(x, h, closed, "g");
        for (int i = 0; i < c; ++i) REQUIRE(std::abs(kept.data()[i] - h.data()[i]) < 1e-12);
    }

    SECTION("width mismatch is a dimension error") {
        REQUIRE_THROWS_AS(gru_cell(rand_tensor({c + 1}, rng), h, ps, "g"), DimensionError);
    }

    SECTION("gradient of sum(h') w.r.t. x") {
        auto f = [&](const std::vector<Tensor>& in) { return sum_all(gru_cell(in[0], h, ps, "g")); };
        auto rep = finite_diff_grad(f, {x}, 1e-5);
        REQUIRE(rep.max_rel_err < 1e-6);
    }

    SECTION("gradient through all inputs and parameters") {
        auto f = [&](const std::vector<Tensor>& in) {
            ParamSet local;
            local.add("g.wr", in[2]);
            local.add("g.ur", in[3]);
            local.add("g.br", in[4]);
            local.add("g.wz", in[5]);
            local.add("g.uz", in[6]);
            local.add("g.bz", in[7]);
            local.add("g.wn", in[8]);
            local.add("g.un", in[9]);
            local.add("g.bn", in[10]);
            return sum_all(gru_cell(in[0], in[1], local, "g"));
        };
        std::vector<Tensor> ins{x,
                                h,
                                ps.at("g.wr").clone(),
                                ps.at("g.ur").clone(),
                                ps.at("g.br").clone(),
                                ps.at("g.wz").clone(),
                                ps.at("g.uz").clone(),
                                ps.at("g.bz").clone(),
                                ps.at("g.wn").clone(),
                                ps.at("g.un").clone(),
                                ps.at("g.bn").clone()};
        auto rep = finite_diff_grad(f, ins, 1e-5);
        REQUIRE(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("mlp: trivial parameterizations and gradients") {
    Rng rng(43);

    SECTION("zero weights and biases give zero output") {
        ParamSet ps;
        ps.add("m.w0", Tensor::zeros({3, 4}));
        ps.add("m.b0", Tensor::zeros({4}));
        ps.add("m.w1", Tensor::zeros({4, 2}));
        ps.add("m.b1", Tensor::zeros({2}));
        Tensor y = mlp(rand_tensor({5, 3}, rng), ps, "m");
        REQUIRE(y.shape() == Shape{5, 2});
        for (double v : y.data()) REQUIRE(v == 0.0);
    }

    SECTION("single identity layer passes input through") {
        ParamSet ps;
        ps.add("m.w0", Tensor::identity(4));
        ps.add("m.b0", Tensor::zeros({4}));
        Tensor x = rand_tensor({3, 4}, rng);
        Tensor y = mlp(x, ps, "m");
        for (int e = 0; e < x.numel(); ++e) REQUIRE(y.data()[e] == x.data()[e]);
    }

    SECTION("width chain break is a dimension error") {
        ParamSet ps;
        ps.add("m.w0", Tensor::zeros({3, 4}));
        ps.add("m.b0", Tensor::zeros({4}));
        ps.add("m.w1", Tensor::zeros({5, 2}));
        ps.add("m.b1", Tensor::zeros({2}));
        REQUIRE_THROWS_AS(mlp(rand_tensor({2, 3}, rng), ps, "m"), DimensionError);
    }

    SECTION("gradients through a two-layer stack") {
        ParamSet ps;
        init_mlp(ps, "m", {4, 6, 3}, rng);
        Tensor w = rand_tensor({2, 3}, rng);
        auto f = [&](const std::vector<Tensor>& in) {
            ParamSet local;
            local.add("m.w0", in[1]);
            local.add("m.b0", in[2]);
            local.add("m.w1", in[3]);
            local.add("m.b1", in[4]);
            return weighted_sum(mlp(in[0], local, "m"), w);
        };
        std::vector<Tensor> ins{rand_tensor({2, 4}, rng), ps.at("m.w0").clone(),
                                ps.at("m.b0").clone(), ps.at("m.w1").clone(),
                                ps.at("m.b1").clone()};
        auto rep = finite_diff_grad(f, ins, 1e-5);
        REQUIRE(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("kl_diag_gaussian: closed form, properties, Monte-Carlo") {
    Rng rng(47);

    SECTION("identical distributions give exactly zero") {
        Tensor mu = rand_tensor({3, 4}, rng), sigma = rand_tensor({3, 4}, rng, 0.3, 2.0);
        Tensor kl = kl_diag_gaussian(mu, sigma, mu, sigma);
        REQUIRE(kl.value() == 0.0);
    }

    SECTION("unit shift at unit variance costs one half") {
        Tensor kl = kl_diag_gaussian(Tensor::scalar(0.0), Tensor::scalar(1.0),
                                     Tensor::scalar(1.0), Tensor::scalar(1.0));
        REQUIRE(std::abs(kl.value() - 0.5) < 1e-15);
    }

    SECTION("nonnegative on random pairs") {
        for (int i = 0; i < 1000; ++i) {
            Tensor mp = rand_tensor({2}, rng, -2.0, 2.0), sp = rand_tensor({2}, rng, 0.2, 3.0);
            Tensor mq = rand_tensor({2}, rng, -2.0, 2.0), sq = rand_tensor({2}, rng, 0.2, 3.0);
            REQUIRE(kl_diag_gaussian(mp, sp, mq, sq).value() >= 0.0);
        }
    }

    SECTION("matches a Monte-Carlo estimate") {
        for (int i = 0; i < 20; ++i) {
            const double mp = rng.uniform(-0.5, 0.5), sp = rng.uniform(0.8, 1.25);
            const double mq = rng.uniform(-0.5, 0.5), sq = rng.uniform(0.8, 1.25);
            const double closed = kl_diag_gaussian(Tensor::scalar(mp), Tensor::scalar(sp),
                                                   Tensor::scalar(mq), Tensor::scalar(sq))
                                      .value();
            const double mc = oracles::mc_kl_gaussian(mp, sp, mq, sq, 50000, 1000 + i);
            REQUIRE(std::abs(closed - mc) < 1e-2);
        }
    }

    SECTION("nonpositive sigma is a domain error") {
        Tensor z = Tensor::scalar(0.0), one = Tensor::scalar(1.0);
        REQUIRE_THROWS_AS(kl_diag_gaussian(z, Tensor::scalar(0.0), z, one), DomainError);
        REQUIRE_THROWS_AS(kl_diag_gaussian(z, one, z, Tensor::scalar(-0.2)), DomainError);
    }

    SECTION("gradients through the closed form") {
        auto f = [&](const std::vector<Tensor>& in) {
            return kl_diag_gaussian(in[0], in[1], in[2], in[3]);
        };
        std::vector<Tensor> ins{rand_tensor({2, 3}, rng), rand_tensor({2, 3}, rng, 0.5, 2.0),
                                rand_tensor({2, 3}, rng), rand_tensor({2, 3}, rng, 0.5, 2.0)};
        auto rep = finite_diff_grad(f, ins, 1e-5);
        REQUIRE(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("finite_diff_grad harness self-checks") {
    SECTION("quadratic gradient is recovered essentially exactly") {
        auto f = [](const std::vector<Tensor>& in) { return sum_all(mul(in[0], in[0])); };
        auto rep = finite_diff_grad(f, {Tensor::full({3}, 1.0)}, 1e-5);
        for (double g : rep.analytic[0]) REQUIRE(g == 2.0);
        for (double g : rep.numeric[0]) REQUIRE(std::abs(g - 2.0) < 1e-9);
        REQUIRE(rep.max_rel_err < 1e-9);
    }

    SECTION("constant function has zero gradient") {
        auto f = [](const std::vector<Tensor>&) { return Tensor::scalar(3.5); };
        auto rep = finite_diff_grad(f, {Tensor::full({4}, 2.0)}, 1e-5);
        for (double g : rep.numeric[0]) REQUIRE(g == 0.0);
        REQUIRE(rep.max_rel_err == 0.0);
    }

    SECTION("non-scalar outputs and bad eps are rejected") {
        auto f = [](const std::vector<Tensor>& in) { return in[0]; };
        REQUIRE_THROWS_AS(finite_diff_grad(f, {Tensor::zeros({2})}, 1e-5), InvalidInputError);
        auto g = [](const std::vector<Tensor>& in) { return sum_all(in[0]); };
        REQUIRE_THROWS_AS(finite_diff_grad(g, {Tensor::zeros({2})}, 1e-3), InvalidInputError);
        REQUIRE_THROWS_AS(finite_diff_grad(g, {Tensor::zeros({2})}, 1e-8), InvalidInputError);
    }
}

TEST_CASE("optimizer_step and Adam") {
    SECTION("zero gradient or zero rate leaves parameters unchanged") {
        ParamSet ps;
        ps.add("a", Tensor::full({3}, 1.5));
        GradMap zero{{"a", {0.0, 0.0, 0.0}}};
        ParamSet s1 = optimizer_step(ps, zero, 0.3);
        for (int i = 0; i < 3; ++i) REQUIRE(s1.at("a").data()[i] == 1.5);
        GradMap g{{"a", {1.0, 2.0, 3.0}}};
        ParamSet s2 = optimizer_step(ps, g, 0.0);
        for (int i = 0; i < 3; ++i) REQUIRE(s2.at("a").data()[i] == 1.5);
    }

    SECTION("gradient descent solves the 1-D quadratic") {
        ParamSet ps;
        ps.add("x", Tensor::scalar(5.0));
        for (int i = 0; i < 50; ++i) {
            GradMap g{{"x", {2.0 * ps.at("x").value()}}};
            ps = optimizer_step(ps, g, 0.4);
        }
        REQUIRE(std::abs(ps.at("x").value()) < 1e-6);
    }

    SECTION("key mismatch is a configuration error") {
        ParamSet ps;
        ps.add("a", Tensor::scalar(1.0));
        GradMap wrong{{"b", {1.0}}};
        REQUIRE_THROWS_AS(optimizer_step(ps, wrong, 0.1), ConfigError);
        GradMap extra{{"a", {1.0}}, {"b", {1.0}}};
        REQUIRE_THROWS_AS(optimizer_step(ps, extra, 0.1), ConfigError);
        GradMap badsize{{"a", {1.0, 2.0}}};
        REQUIRE_THROWS_AS(optimizer_step(ps, badsize, 0.1), ConfigError);
    }

    SECTION("Adam also solves the quadratic") {
        ParamSet ps;
        ps.add("x", Tensor::scalar(5.0));
        Adam adam(0.2);
        for (int i = 0; i < 300; ++i) {
            GradMap g{{"x", {2.0 * ps.at("x").value()}}};
            ps = adam.step(ps, g);
        }
        REQUIRE(std::abs(ps.at("x").value()) < 1e-4);
    }
}

TEST_CASE("tape mechanics") {
    Rng rng(53);

    SECTION("backward is deterministic and repeatable bitwise") {
        Tensor a = rand_tensor({4, 4}, rng), b = rand_tensor({4, 4}, rng);
        auto run = [&]() {
            Tape tape;
            Tape::Scope scope(tape);
            Tensor aa = a, bb = b;
            aa.set_requires_grad(true);
            bb.set_requires_grad(true);
            tape.track(aa);
            tape.track(bb);
            Tensor loss = mean_all(mul(sigmoid(matmul(aa, bb)), tanh_op(aa)));
            tape.backward(loss);
            auto g1 = aa.grad();
            tape.backward(loss);
            auto g2 = aa.grad();
            REQUIRE(g1 == g2);
            return std::make_pair(aa.grad(), bb.grad());
        };
        auto [ga1, gb1] = run();
        auto [ga2, gb2] = run();
        REQUIRE(ga1 == ga2);
        REQUIRE(gb1 == gb2);
    }

    SECTION("backward demands a scalar loss on this tape") {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor a = rand_tensor({3}, rng);
        a.set_requires_grad(true);
        tape.track(a);
        Tensor y = scale(a, 2.0);
        REQUIRE_THROWS_AS(tape.backward(y), InvalidInputError);
        Tensor detached = Tensor::scalar(1.0);
        REQUIRE_THROWS_AS(tape.backward(detached), InvalidInputError);
    }

    SECTION("NoGradScope suppresses recording") {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor a = rand_tensor({3}, rng);
        a.set_requires_grad(true);
        {
            Tape::NoGradScope off;
            Tensor y = scale(a, 2.0);
            REQUIRE(!y.requires_grad());
        }
        REQUIRE(tape.size() == 0);
    }

    SECTION("detach severs the graph") {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor a = rand_tensor({3}, rng);
        a.set_requires_grad(true);
        tape.track(a);
        Tensor y = sum_all(scale(a.detach(), 2.0));
        REQUIRE(!y.requires_grad());
    }

    SECTION("reshape shares gradient with its base") {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor a = rand_tensor({6}, rng);
        a.set_requires_grad(true);
        tape.track(a);
        Tensor m = a.reshape({2, 3});
        Tensor loss = sum_all(mul(m, m));
        tape.backward(loss);
        for (int i = 0; i < 6; ++i) REQUIRE(a.grad()[i] == 2.0 * a.data()[i]);
    }
}

TEST_CASE("tensor file format round-trips and rejects corruption") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "flowad_io_test";
    fs::create_directories(dir);
    Rng rng(59);
    Tensor t = rand_tensor({3, 2, 5}, rng);

    const fs::path file = dir / "t.flt1";
    write_tensor_file(t, file);
    Tensor back = read_tensor_file(file);
    REQUIRE(back.shape() == t.shape());
    REQUIRE(back.data() == t.data());

    SECTION("bad magic") {
        fs::path bad = dir / "bad.flt1";
        std::ofstream os(bad, std::ios::binary);
        os << "NOPE1234";
        os.close();
        REQUIRE_THROWS_AS(read_tensor_file(bad), FormatError);
    }

    SECTION("truncated payload") {
        std::ifstream is(file, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
        is.close();
        fs::path trunc = dir / "trunc.flt1";
        std::ofstream os(trunc, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 11));
        os.close();
        REQUIRE_THROWS_AS(read_tensor_file(trunc), FormatError);
    }

    SECTION("missing file") { REQUIRE_THROWS_AS(read_tensor_file(dir / "nope.flt1"), IoError); }
}

TEST_CASE("ParamSet and checkpoints") {
    Rng rng(61);
    ParamSet ps;
    ps.add("b.weight", rand_tensor({3, 3}, rng));
    ps.add("a.bias", rand_tensor({3}, rng));
    REQUIRE_THROWS_AS(ps.add("a.bias", Tensor::zeros({3})), ConfigError);
    REQUIRE_THROWS_AS(ps.at("missing"), ConfigError);

    SECTION("iteration is name-ordered") {
        auto names = ps.names();
        REQUIRE(names == std::vector<std::string>{"a.bias", "b.weight"});
    }

    SECTION("checkpoint round-trip is bitwise") {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "flowad_ckpt_test";
        fs::remove_all(dir);
        save_checkpoint(ps, dir);
        ParamSet back = load_checkpoint(dir);
        REQUIRE(back.size() == ps.size());
        for (const auto& [name, t] : ps) {
            REQUIRE(back.at(name).shape() == t.shape());
            REQUIRE(back.at(name).data() == t.data());
        }
    }
}

TEST_CASE("seeded rng is stable across runs in-process") {
    Rng a(1234), b(1234);
    for (int i = 0; i < 100; ++i) {
        REQUIRE(a.uniform() == b.uniform());
        REQUIRE(a.normal() == b.normal());
    }
    Rng c(1), d(2);
    bool differ = false;
    for (int i = 0; i < 10; ++i) differ = differ || (c.uniform() != d.uniform());
    REQUIRE(differ);
}
