#include "doctest.h"
#include "fd_suite.hpp"
#include "mtlkit/ops.hpp"

using namespace mtlkit;
using namespace mtlkit::diffcore;

TEST_CASE("matmul identity and hand arithmetic") {
    Graph g;
    auto eye = from_values({2, 2}, {1, 0, 0, 1});
    auto m = from_values({2, 2}, {3, 4, 5, 6});
    auto out = matmul(g, eye, m);
    CHECK(out->values == std::vector<double>{3, 4, 5, 6});

    auto a = from_values({1, 2}, {1, 2});
    auto b = from_values({2, 1}, {3, 4});
    auto out2 = matmul(g, a, b);
    CHECK(out2->shape == std::vector<long>{1, 1});
    CHECK(out2->values[0] == 11.0);
}

TEST_CASE("matmul rejects mismatched shapes, naming both") {
    Graph g;
    auto a = make_tensor({2, 3});
    auto b = make_tensor({4, 2});
    CHECK_THROWS_WITH_AS(matmul(g, a, b),
                         doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul gradient of sum(out) wrt a matches finite differences") {
    Rng rng(99);
    auto a = randn({3, 4}, rng, 1.0, true);
    auto b = randn({4, 2}, rng, 1.0, true);
    auto rep = grad_check([&](Graph& g) { return sum_all(g, matmul(g, a, b)); }, a, 1e-6, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("backward basics") {
    SUBCASE("sum -> all ones") {
        Graph g;
        Rng rng(1);
        auto x = randn({2, 3, 2}, rng, 1.0, true);
        g.backward(sum_all(g, x));
        for (double v : x->grad) CHECK(v == 1.0);
    }
    SUBCASE("sum of squares at [2,3] -> [4,6]") {
        Graph g;
        auto x = from_values({2}, {2, 3}, true);
        g.backward(sum_all(g, mul(g, x, x)));
        CHECK(x->grad == std::vector<double>{4, 6});
    }
    SUBCASE("two successive backwards accumulate to twos") {
        Graph g;
        auto x = full({3}, 5.0, true);
        auto loss = sum_all(g, x);
        g.backward(loss);
        g.backward(loss);
        for (double v : x->grad) CHECK(v == 2.0);
    }
    SUBCASE("non-scalar loss rejected") {
        Graph g;
        auto x = full({2}, 1.0, true);
        CHECK_THROWS_AS(g.backward(x), ShapeError);
    }
}

TEST_CASE("backward is additive for all tensors in a composite graph") {
    Rng rng(7);
    auto x = randn({3, 3}, rng, 1.0, true);
    auto w = randn({3, 3}, rng, 1.0, true);

    auto run = [&](int times) {
        x->zero_grad();
        w->zero_grad();
        Graph g;
        auto h = gelu(g, matmul(g, x, w));
        auto loss = mean_all(g, mul(g, h, h));
        for (int i = 0; i < times; ++i) g.backward(loss);
        return std::pair{x->grad, w->grad};
    };
    auto [gx1, gw1] = run(1);
    auto [gx2, gw2] = run(2);
    for (size_t i = 0; i < gx1.size(); ++i) CHECK(gx2[i] == doctest::Approx(2 * gx1[i]).epsilon(1e-13));
    for (size_t i = 0; i < gw1.size(); ++i) CHECK(gw2[i] == doctest::Approx(2 * gw1[i]).epsilon(1e-13));
}

TEST_CASE("tape replays every node exactly once, in reverse order") {
    Graph g;
    auto x = full({2}, 1.5, true);
    auto a = scale(g, x, 2.0);
    auto b = tanh_act(g, a);
    auto loss = sum_all(g, b);
    CHECK(g.size() == 3);
    g.backward(loss);
    CHECK(g.last_replay_count() == 3);
}

TEST_CASE("softmax_xent hand values") {
    SUBCASE("uniform logits give ln 2") {
        Graph g;
        auto logits = from_values({1, 2}, {0, 0});
        auto loss = softmax_xent(g, logits, {0});
        CHECK(loss->values[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("saturated logits stay finite and near zero") {
        Graph g;
        auto logits = from_values({1, 2}, {1000, 0});
        auto loss = softmax_xent(g, logits, {0});
        CHECK(std::isfinite(loss->values[0]));
        CHECK(loss->values[0] < 1e-9);
    }
    SUBCASE("label out of range rejected") {
        Graph g;
        auto logits = from_values({1, 2}, {0, 0});
        CHECK_THROWS_AS(softmax_xent(g, logits, {2}), DataError);
    }
    SUBCASE("random logits match finite differences") {
        Rng rng(5);
        auto logits = randn({4, 3}, rng, 2.0, true);
        std::vector<long> labels{0, 2, 1, 2};
        auto rep = grad_check([&](Graph& g) { return softmax_xent(g, logits, labels); }, logits);
        CHECK(rep.pass);
    }
}

TEST_CASE("softmax rows sum to one and survive extreme logits") {
    Rng rng(8);
    auto x = randn({20, 7}, rng, 3.0, true);
    x->values[0] = 1e4;
    x->values[1] = -1e4;
    Graph g;
    auto y = softmax(g, x);
    for (long r = 0; r < 20; ++r) {
        double sum = 0.0;
        for (long j = 0; j < 7; ++j) sum += y->values[r * 7 + j];
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }

    Graph g2;
    auto big = from_values({1, 2}, {1e4, -1e4});
    auto ys = softmax(g2, big);
    CHECK(std::isfinite(ys->values[0]));
    CHECK(ys->values[0] == doctest::Approx(1.0));
}

TEST_CASE("grad_check oracle behaviors") {
    Rng rng(10);
    SUBCASE("f = sum has ~zero error") {
        auto x = randn({3, 2}, rng, 1.0, true);
        auto rep = grad_check([&](Graph& g) { return sum_all(g, x); }, x);
        CHECK(rep.max_rel_err < 1e-9);
    }
    SUBCASE("an intentionally wrong backward is flagged") {
        auto x = randn({4}, rng, 1.0, true);
        // Forward is sum(x), recorded backward claims the gradient is 2.
        auto broken = [&](Graph& g) {
            auto out = make_tensor({1});
            double s = 0.0;
            for (double v : x->values) s += v;
            out->values[0] = s;
            out->requires_grad = true;
            g.record(out, [out, &x](GradTable& t) {
                auto& dx = t.slot(x);
                double up = (*t.find(out.get()))[0];
                for (auto& v : dx) v += 2.0 * up;
            });
            return out;
        };
        auto rep = grad_check(broken, x);
        CHECK_FALSE(rep.pass);
        CHECK(rep.max_rel_err > 0.1);
    }
}

TEST_CASE("every primitive passes finite-difference checks on random inputs") {
    // The acceptance suite runs 20+ instances; a smaller sweep keeps the
    // unit tests quick.
    for (const auto& r : fd_suite::run_all(3, 12345)) {
        INFO(r.name);
        CHECK(r.pass);
    }
}

TEST_CASE("shape invariants hold after construction") {
    auto t = make_tensor({2, 3, 4});
    CHECK(t->numel() == 24);
    CHECK(t->values.size() == t->grad.size());
    CHECK_THROWS_AS(make_tensor({2, 0, 4}), ShapeError);
    CHECK_THROWS_AS(from_values({2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("slice/concat round trip") {
    Rng rng(3);
    auto x = randn({3, 7}, rng, 1.0, true);
    Graph g;
    auto left = slice(g, x, 1, 0, 3);
    auto right = slice(g, x, 1, 3, 4);
    auto back = concat(g, {left, right}, 1);
    CHECK(back->values == x->values);
    CHECK_THROWS_AS(slice(g, x, 1, 5, 4), ShapeError);
}
