#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "virlab/error.hpp"
#include "virlab/tensor.hpp"

using namespace virlab;

TEST_CASE("softmax rows sum to one and survive large logits") {
    const Tensor logits({2, 3}, {1.0, 2.0, 3.0, 1000.0, 0.0, -1000.0});
    const Tensor p = softmax(logits);
    for (std::size_t i = 0; i < 2; ++i) {
        double s = 0.0;
        for (double v : p.row(i)) s += v;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK(p.at(1, 0) == 1.0);
    CHECK(p.at(1, 2) == 0.0);
    // softmax is shift-invariant
    const Tensor q = softmax(Tensor({1, 3}, {101.0, 102.0, 103.0}));
    for (std::size_t j = 0; j < 3; ++j) CHECK(q[j] == doctest::Approx(p[j]).epsilon(1e-14));
}

TEST_CASE("softmax rejects non-finite logits") {
    CHECK_THROWS_AS(softmax(Tensor({1, 2}, {0.0, std::numeric_limits<double>::infinity()})), DomainError);
    CHECK_THROWS_AS(softmax(Tensor({1, 2}, {0.0, std::nan("")})), DomainError);
}

TEST_CASE("cross entropy values") {
    CHECK(cross_entropy(Tensor({1, 4}, {0.0, 0.0, 0.0, 0.0}), std::vector<int>{2}).item() ==
          doctest::Approx(1.3862943611198906).epsilon(1e-14));
    const double tiny = cross_entropy(Tensor({1, 2}, {20.0, -20.0}), std::vector<int>{0}).item();
    CHECK(tiny == doctest::Approx(4.248354255291589e-18).epsilon(1e-9));
    CHECK_THROWS_AS(cross_entropy(Tensor({1, 2}, {0.0, 0.0}), std::vector<int>{2}), IndexError);
}

TEST_CASE("kl divergence conventions") {
    const Tensor p({1, 2}, {0.75, 0.25}), q({1, 2}, {0.25, 0.75});
    CHECK(kl_divergence(p, q)[0] == doctest::Approx(0.54930614433405485).epsilon(1e-13));
    CHECK(kl_divergence(p, p)[0] == 0.0);
    // 0 ln 0 = 0
    CHECK(kl_divergence(Tensor({1, 2}, {1.0, 0.0}), Tensor({1, 2}, {0.5, 0.5}))[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(kl_divergence(Tensor({1, 2}, {0.6, 0.6}), q), DomainError);
    CHECK_THROWS_AS(kl_divergence(Tensor({1, 2}, {0.5, 0.5}), Tensor({1, 3}, {0.2, 0.3, 0.5})), ShapeError);
}

TEST_CASE("kl from logits matches value-only kl") {
    const Tensor a({2, 3}, {0.1, -0.3, 2.0, 1.0, 1.0, -4.0});
    const Tensor b({2, 3}, {0.5, 0.2, 1.0, -1.0, 2.0, 0.0});
    const Tensor direct = kl_from_logits(a, b);
    const Tensor ref = kl_divergence(softmax(a), softmax(b));
    for (std::size_t i = 0; i < 2; ++i) CHECK(direct[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("backward through matmul, relu and sum") {
    Tensor w({2, 2}, {1.0, -2.0, 3.0, 0.5}, true);
    const Tensor x({1, 2}, {2.0, 1.0});
    // z = x w = [5, -3.5]; relu -> [5, 0]; sum = 5
    const Tensor loss = sum(relu(matmul(x, w)));
    CHECK(loss.item() == 5.0);
    backward(loss);
    const auto g = w.grad();
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 1.0);
    CHECK(g[3] == 0.0);
}

TEST_CASE("gradients accumulate until zeroed") {
    Tensor a({1, 1}, {3.0}, true);
    backward(sum(mul(a, a)));
    backward(sum(mul(a, a)));
    CHECK(a.grad()[0] == 12.0);
    a.zero_grad();
    backward(sum(scale(a, 2.0)));
    CHECK(a.grad()[0] == 2.0);
}

TEST_CASE("shared subexpressions receive summed gradients") {
    Tensor a({1, 2}, {1.0, 2.0}, true);
    const Tensor b = scale(a, 3.0);
    backward(sum(add(b, mul(b, a))));  // 3a + 3a^2 -> 3 + 6a
    CHECK(a.grad()[0] == 9.0);
    CHECK(a.grad()[1] == 15.0);
}

TEST_CASE("backward requires a scalar") {
    Tensor a({1, 2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(scale(a, 2.0)), ShapeError);
}

TEST_CASE("detach cuts the tape") {
    Tensor a({1, 1}, {2.0}, true);
    const Tensor d = scale(a, 2.0).detach();
    CHECK_FALSE(d.requires_grad());
    CHECK(d.is_leaf());
    CHECK_THROWS_AS(scale(a, 2.0).mutable_data(), StateError);
}

TEST_CASE("weighted mean treats weights as constants") {
    Tensor v({3}, {1.0, 2.0, 3.0}, true);
    const std::vector<double> w{0.5, 1.0, 2.0};
    const Tensor m = weighted_mean(v, w);
    CHECK(m.item() == doctest::Approx((0.5 + 2.0 + 6.0) / 3.0));
    backward(m);
    CHECK(v.grad()[2] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("cw margin and argmax break ties toward the lowest index") {
    const Tensor z({2, 3}, {1.0, 3.0, 3.0, 2.0, 0.0, -1.0});
    const auto am = argmax_rows(z);
    CHECK(am[0] == 1);
    CHECK(am[1] == 0);
    const Tensor m = cw_margin(z, std::vector<int>{0, 0});
    CHECK(m[0] == 2.0);
    CHECK(m[1] == -2.0);
}

TEST_CASE("finite differences agree with autodiff on random small networks") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto r = testing::gradient_check(seed);
        CAPTURE(seed);
        CHECK(r.ce < 1e-4);
        CHECK(r.trades < 1e-4);
        CHECK(r.vir_trades < 1e-4);
    }
}
