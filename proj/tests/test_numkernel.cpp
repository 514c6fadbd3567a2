#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "nrr/nrr.hpp"
#include "oracles.hpp"

using namespace nrr;

namespace {

Vec random_vec(RngStream& rng, std::size_t n, double scale = 1.0) {
    Vec v(n);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

}  // namespace

TEST(Rng, SameSeedSameSequence) {
    RngStream a(42), b(42);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, MatchesSplitMix64ReferenceOutput) {
    // Published first outputs of SplitMix64 started from state 0.
    RngStream r(0);
    EXPECT_EQ(r.next_u64(), 0xE220A8397B1DCDAFULL);
    EXPECT_EQ(r.next_u64(), 0x6E789E6AA1B965F4ULL);
    EXPECT_EQ(r.next_u64(), 0x06C45D188009454FULL);
}

TEST(Rng, UniformAndBelowStayInRange) {
    RngStream r(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const double w = r.uniform(-0.1, 0.1);
        ASSERT_GE(w, -0.1);
        ASSERT_LT(w, 0.1);
        ASSERT_LT(r.below(7), 7u);
    }
}

TEST(Rng, SplitStreamsDiverge) {
    RngStream root(3);
    RngStream a = root.split();
    RngStream b = root.split();
    EXPECT_NE(a.next_u64(), b.next_u64());
}

TEST(Rng, ShuffleIsAPermutation) {
    RngStream r(11);
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    r.shuffle(std::span<int>(v));
    EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 50u);
}

TEST(Affine, IdentityCase) {
    const Vec y = affine_forward(Vec{1, 0}, Mat::identity(2), Vec{0, 0});
    EXPECT_EQ(y, (Vec{1, 0}));
}

TEST(Affine, ZeroInputReturnsBias) {
    const Vec y = affine_forward(Vec{0, 0}, Mat{{2, -1}, {5, 7}}, Vec{3, 4});
    EXPECT_EQ(y, (Vec{3, 4}));
}

TEST(Affine, HandMultiply) {
    const Vec y = affine_forward(Vec{1, 2}, Mat{{1, 1}, {0, 1}}, Vec{0, 0});
    EXPECT_DOUBLE_EQ(y[0], 1 * 1 + 1 * 2);
    EXPECT_DOUBLE_EQ(y[1], 0 * 1 + 1 * 2);
}

TEST(Affine, MismatchNamesBothShapes) {
    try {
        affine_forward(Vec{1, 2, 3}, Mat(2, 2), Vec{0, 0});
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(2x2)"), std::string::npos) << msg;
        EXPECT_NE(msg.find('3'), std::string::npos) << msg;
    }
}

TEST(Sigmoid, Examples) {
    EXPECT_EQ(sigmoid(0.0), 0.5);
    EXPECT_NEAR(sigmoid(50.0), 1.0, 1e-9);
    EXPECT_NEAR(sigmoid(1.0), static_cast<double>(oracle::sigmoid(1.0L)), 1e-15);
    EXPECT_NEAR(sigmoid(1.0), 0.7310585786300049, 1e-15);
}

TEST(Sigmoid, FiniteAtExtremes) {
    EXPECT_EQ(sigmoid(-1000.0), 0.0);
    EXPECT_EQ(sigmoid(1000.0), 1.0);
    EXPECT_TRUE(std::isfinite(sigmoid(-745.0)));
}

TEST(Sigmoid, MonotoneOverRandomPairs) {
    RngStream r(5);
    for (int i = 0; i < 1000; ++i) {
        const double a = r.uniform(-40, 40);
        const double b = a + r.uniform(1e-6, 5);
        ASSERT_LE(sigmoid(a), sigmoid(b));
        ASSERT_NEAR(sigmoid(a), static_cast<double>(oracle::sigmoid(a)), 1e-15);
    }
}

TEST(Softmax, Examples) {
    EXPECT_EQ(softmax(Vec{0, 0}), (Vec{0.5, 0.5}));
    EXPECT_EQ(softmax(Vec{1000, 1000}), (Vec{0.5, 0.5}));
    const Vec p = softmax(Vec{1, 0});
    const long double e = std::exp(1.0L);
    EXPECT_NEAR(p[0], static_cast<double>(e / (e + 1)), 1e-15);
    EXPECT_NEAR(p[1], static_cast<double>(1 / (e + 1)), 1e-15);
    EXPECT_NEAR(p[0], 0.7311, 5e-5);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
    RngStream r(9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + r.below(6);
        const Vec x = random_vec(r, n, 20);
        Vec shifted = x;
        const double c = r.uniform(-500, 500);
        for (auto& v : shifted) v += c;
        const Vec p = softmax(x);
        const Vec q = softmax(shifted);
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            ASSERT_NEAR(p[i], q[i], 1e-12);
            s += p[i];
        }
        ASSERT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Softmax, BackwardMatchesFiniteDifference) {
    RngStream r(21);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec x = random_vec(r, 4, 3);
        const Vec w = random_vec(r, 4);
        const Vec dz = softmax_backward(softmax(x), w);
        for (std::size_t i = 0; i < 4; ++i) {
            Vec up = x, down = x;
            up[i] += 1e-6;
            down[i] -= 1e-6;
            const double num = (dot(softmax(up), w) - dot(softmax(down), w)) / 2e-6;
            ASSERT_NEAR(dz[i], num, 1e-8);
        }
    }
}

TEST(CrossEntropy, Examples) {
    EXPECT_EQ(cross_entropy(Vec{1, 0}, 0), 0.0);
    EXPECT_NEAR(cross_entropy(Vec{0.5, 0.5}, 1), 0.6931, 5e-5);
    EXPECT_NEAR(cross_entropy(Vec{0.9, 0.1}, 1), static_cast<double>(-std::log(0.1L)), 1e-14);
    EXPECT_NEAR(cross_entropy(Vec{0.9, 0.1}, 1), 2.3026, 5e-5);
}

TEST(CrossEntropy, ClampsZeroProbability) {
    EXPECT_NEAR(cross_entropy(Vec{1, 0}, 1), -std::log(kProbFloor), 1e-9);
}

TEST(CrossEntropy, Errors) {
    EXPECT_THROW(cross_entropy(Vec{0.5, 0.5}, 2), ValidationError);
    EXPECT_THROW(cross_entropy(Vec{0.5, 0.6}, 0), ValidationError);
}

TEST(Mlp2, BackwardBeforeForwardIsStateError) {
    Mlp2 m(3, 4, 2);
    Mlp2::Cache c;
    EXPECT_THROW(m.backward(c, Vec{1, 0}), StateError);
}

TEST(Activation, ParseRoundTrip) {
    for (auto a : {Activation::sigmoid, Activation::tanh, Activation::relu}) EXPECT_EQ(parse_activation(to_string(a)), a);
    EXPECT_THROW(parse_activation("gelu"), ConfigError);
}

TEST(GradCheck, QuadraticOneDimensional) {
    Param theta("theta", Mat{{3.0}});
    theta.grad(0, 0) = 3.0;
    auto loss = [&] { return 0.5 * theta.value(0, 0) * theta.value(0, 0); };
    const auto res = finite_diff_check(loss, {&theta});
    EXPECT_EQ(res.coords_checked, 1u);
    EXPECT_LT(res.max_rel_error, 1e-9);
    EXPECT_EQ(theta.value(0, 0), 3.0);
}

TEST(GradCheck, DetectsWrongGradient) {
    Param theta("theta", Mat{{3.0}});
    theta.grad(0, 0) = 2.0;
    auto loss = [&] { return 0.5 * theta.value(0, 0) * theta.value(0, 0); };
    EXPECT_GT(finite_diff_check(loss, {&theta}).max_rel_error, 0.1);
}

TEST(GradCheck, Mlp2SoftmaxCrossEntropyRandomInstances) {
    RngStream r(1234);
    for (int trial = 0; trial < 20; ++trial) {
        const Activation act = std::array{Activation::sigmoid, Activation::tanh, Activation::relu}[trial % 3];
        Mlp2 m(5, 6, 3, act);
        for (Param* p : m.params()) {
            for (auto& w : p->value.flat()) w = r.uniform(-0.8, 0.8);
        }
        const Vec x = random_vec(r, 5, 1.5);
        const std::size_t gold = r.below(3);
        Mlp2::Cache c;
        const Vec p = softmax(m.forward(x, &c));
        m.backward(c, softmax_cross_entropy_grad(p, gold));
        auto loss = [&] { return cross_entropy(softmax(m.forward(x)), gold); };
        const auto res = finite_diff_check(loss, m.params());
        ASSERT_LT(res.max_rel_error, 1e-5) << "trial " << trial << " activation " << to_string(act);
    }
}

TEST(Optimizer, SgdStep) {
    Param t("t", Mat{{1.0}});
    t.grad(0, 0) = 1.0;
    Optimizer opt({OptimizerConfig::Kind::sgd, 0.1});
    opt.step({&t});
    EXPECT_NEAR(t.value(0, 0), 0.9, 1e-15);
    EXPECT_EQ(t.grad(0, 0), 0.0);
}

TEST(Optimizer, ClipScalesToNorm) {
    Param t("t", Mat{{0.0, 0.0}});
    t.grad = Mat{{3.0, 4.0}};
    const double before = clip_grad_norm({&t}, 1.0);
    EXPECT_DOUBLE_EQ(before, 5.0);
    EXPECT_NEAR(t.grad(0, 0), 3.0 / 5.0, 1e-15);
    EXPECT_NEAR(t.grad(0, 1), 4.0 / 5.0, 1e-15);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
    Param t("t", Mat{{0.5}});
    t.grad(0, 0) = 1.0;
    Optimizer opt;
    opt.step({&t});
    // Bias-corrected m̂ = g and v̂ = g², so the step is lr·g/(|g| + eps).
    const long double expected = 0.5L - 0.01L * 1.0L / (1.0L + 1e-8L);
    EXPECT_NEAR(t.value(0, 0), static_cast<double>(expected), 1e-15);
    EXPECT_NEAR(0.5 - t.value(0, 0), 0.01, 1e-9);
}

TEST(Optimizer, NonFiniteGradientAbortsWithoutChanges) {
    Param a("a", Mat{{1.0}}), b("b", Mat{{2.0}});
    a.grad(0, 0) = 0.5;
    b.grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    Optimizer opt;
    try {
        opt.step({&a, &b});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
    }
    EXPECT_EQ(a.value(0, 0), 1.0);
    EXPECT_EQ(b.value(0, 0), 2.0);
    EXPECT_EQ(opt.steps(), 0u);
}
