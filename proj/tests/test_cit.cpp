#include <cmath>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "nrr/nrr.hpp"

using namespace nrr;

namespace {

std::vector<Vec> random_walk(RngStream& r, std::size_t n, std::size_t d) {
    std::vector<Vec> seq;
    Vec cur(d);
    for (auto& v : cur) v = r.uniform(-1, 1);
    for (std::size_t t = 0; t < n; ++t) {
        for (auto& v : cur) v += r.uniform(-0.8, 0.8);
        if (norm(cur) == 0.0) cur[0] = 1.0;
        seq.push_back(cur);
    }
    return seq;
}

}  // namespace

TEST(Similarity, Examples) {
    EXPECT_EQ(similarity(Vec{1, 0}, Vec{0, 1}), 0.0);
    EXPECT_NEAR(similarity(Vec{1, 1}, Vec{1, 0}), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(similarity(Vec{1, 1}, Vec{1, 0}), 0.7071, 5e-5);
    EXPECT_EQ(similarity(Vec{2, 3}, Vec{4, 6}), 1.0);
    EXPECT_EQ(cosine_distance(Vec{1, 0}, Vec{-1, 0}), 2.0);
    EXPECT_THROW(similarity(Vec{0, 0}, Vec{1, 0}), DegenerateInputError);
}

TEST(ContextTracker, ConstantSequenceStaysInOneContext) {
    for (double tau : {0.01, 0.5, 1.9}) {
        ContextTracker t(tau);
        EXPECT_EQ(t.observe_all({Vec{1, 2}, Vec{1, 2}, Vec{1, 2}}), (std::vector<ContextId>{0, 0, 0}));
    }
}

TEST(ContextTracker, OrthogonalShiftOpensOneContext) {
    ContextTracker t(0.5);
    EXPECT_EQ(t.observe_all({Vec{1, 0}, Vec{0, 1}}), (std::vector<ContextId>{0, 1}));
}

TEST(ContextTracker, AntipodalShiftAboveHighThreshold) {
    ContextTracker t(1.5);
    EXPECT_EQ(t.observe_all({Vec{1, -1}, Vec{-1, 1}}), (std::vector<ContextId>{0, 1}));
}

TEST(ContextTracker, ComparesAgainstPreviousVectorOnly) {
    // Small steps that drift far from the start never cross tau.
    ContextTracker t(0.1);
    std::vector<Vec> seq;
    for (int i = 0; i <= 10; ++i) {
        const double a = i * 0.15;
        seq.push_back(Vec{std::cos(a), std::sin(a)});
    }
    for (auto id : t.observe_all(seq)) EXPECT_EQ(id, 0u);
}

TEST(ContextTracker, Errors) {
    EXPECT_THROW(ContextTracker(-0.1), ConfigError);
    EXPECT_THROW(ContextTracker(2.5), ConfigError);
    ContextTracker t;
    EXPECT_THROW(t.observe(Vec{0, 0}), DegenerateInputError);
}

TEST(ContextTracker, HigherTauNeverOpensMoreContexts) {
    RngStream r(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const auto seq = random_walk(r, 30, 3);
        const double lo = r.uniform(0.0, 1.5);
        const double hi = lo + r.uniform(0.0, 0.5);
        ContextTracker a(lo), b(hi);
        const auto ids_lo = a.observe_all(seq);
        const auto ids_hi = b.observe_all(seq);
        ASSERT_LE(ids_hi.back(), ids_lo.back()) << "trial " << trial;
        for (std::size_t t = 1; t < seq.size(); ++t) {
            // Every boundary at the higher threshold is also a boundary at the lower one.
            if (ids_hi[t] != ids_hi[t - 1]) ASSERT_NE(ids_lo[t], ids_lo[t - 1]);
        }
    }
}

TEST(IdentityLedger, MapSemantics) {
    IdentityLedger l;
    const Vec v1{1, 0.2}, v2{0.1, 1};
    l.record("bank", 0, v1);
    l.record("bank", 1, v2);
    EXPECT_EQ(l.lookup("bank", 0).vector, v1);
    EXPECT_EQ(l.lookup("bank", 1).vector, v2);
    const double s = similarity(l.lookup("bank", 0).vector, l.lookup("bank", 1).vector);
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
    EXPECT_THROW(l.lookup("bank", 2), NotFoundError);
    EXPECT_THROW(l.lookup("river", 0), NotFoundError);
    EXPECT_EQ(l.size(), 2u);
}

TEST(IdentityLedger, RepeatedRecordsAverage) {
    IdentityLedger l;
    l.record("bank", 0, Vec{1, 0});
    l.record("bank", 0, Vec{0, 1});
    l.record("bank", 0, Vec{2, 2});
    const auto r = l.lookup("bank", 0);
    EXPECT_EQ(r.observations, 3u);
    EXPECT_NEAR(r.vector[0], 1.0, 1e-15);
    EXPECT_NEAR(r.vector[1], 1.0, 1e-15);
    EXPECT_THROW(l.record("bank", 0, Vec{1, 2, 3}), ShapeError);
}

TEST(IdentityLedger, JsonRoundTrip) {
    IdentityLedger l;
    l.record("bank", 1, Vec{0.25, -1});
    l.record("bank", 0, Vec{1, 0.5});
    const auto j = l.to_json();
    EXPECT_EQ(j.dump(), R"([{"symbol":"bank","context_id":0,"vector":[1.0,0.5]},{"symbol":"bank","context_id":1,"vector":[0.25,-1.0]}])");
    EXPECT_EQ(IdentityLedger::from_json(j).to_json(), j);
}

TEST(IdentityLedger, ConcurrentRecordsAreAllKept) {
    IdentityLedger l;
    std::vector<std::thread> workers;
    for (int w = 0; w < 4; ++w) {
        workers.emplace_back([&l, w] {
            for (int i = 0; i < 250; ++i) {
                l.record("tok" + std::to_string(w), static_cast<ContextId>(i % 5), Vec{1.0, static_cast<double>(i)});
                (void)l.contains("tok0", 0);
            }
        });
    }
    for (auto& t : workers) t.join();
    EXPECT_EQ(l.size(), 20u);
    std::size_t total = 0;
    for (const auto& r : l.records()) total += r.observations;
    EXPECT_EQ(total, 1000u);
}
