#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nrr/errors.hpp"

namespace nrr {

inline constexpr double kLn2 = 0.69314718055994530942;

/// Shannon entropy in nats; 0·log 0 = 0.
inline double entropy(std::span<const double> p) {
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw ValidationError("entropy: negative or NaN probability " + std::to_string(v));
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("entropy: probabilities sum to " + std::to_string(s));
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

inline std::size_t argmax(std::span<const double> x) {
    return static_cast<std::size_t>(std::max_element(x.begin(), x.end()) - x.begin());
}

/// Fraction of predictions equal to their gold label.
inline double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> golds) {
    if (predictions.empty()) throw ValidationError("accuracy: empty input");
    if (predictions.size() != golds.size()) {
        throw ValidationError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                              std::to_string(golds.size()) + " labels");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == golds[i];
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

inline double mean(std::span<const double> x) {
    if (x.empty()) throw ValidationError("mean: empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

/// Sample variance with the n−1 divisor.
inline double sample_variance(std::span<const double> x) {
    if (x.size() < 2) throw ValidationError("sample_variance: need at least two values");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

inline double sample_std(std::span<const double> x) { return std::sqrt(sample_variance(x)); }

namespace detail {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw NumericError("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw ValidationError("incomplete_beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("incomplete_beta: x must lie in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

/// Two-sided tail probability P(|T| ≥ |t|) for Student's t with df degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw ValidationError("student_t: df must be positive");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

/// Welch's unequal-variance t-test, t = (mean(a) − mean(b)) / sqrt(va/na + vb/nb),
/// with Welch–Satterthwaite degrees of freedom.
inline WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw ValidationError("welch_t: each sample needs at least two values");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double va = sample_variance(a) / na;
    const double vb = sample_variance(b) / nb;
    const double se2 = va + vb;
    if (se2 == 0.0) throw DegenerateInputError("welch_t: both samples have zero variance");
    WelchResult r;
    r.t = (mean(a) - mean(b)) / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    r.p = student_t_two_sided_p(r.t, r.df);
    return r;
}

/// Same test from summary statistics (mean, sample std, n).
inline WelchResult welch_t_from_summary(double mean_a, double std_a, std::size_t n_a, double mean_b, double std_b,
                                        std::size_t n_b) {
    if (n_a < 2 || n_b < 2) throw ValidationError("welch_t: each sample needs at least two values");
    const double va = std_a * std_a / static_cast<double>(n_a);
    const double vb = std_b * std_b / static_cast<double>(n_b);
    const double se2 = va + vb;
    if (se2 == 0.0) throw DegenerateInputError("welch_t: both samples have zero variance");
    WelchResult r;
    r.t = (mean_a - mean_b) / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / (static_cast<double>(n_a) - 1.0) + vb * vb / (static_cast<double>(n_b) - 1.0));
    r.p = student_t_two_sided_p(r.t, r.df);
    return r;
}

struct SeedResult {
    std::uint64_t seed = 0;
    double turn1_entropy_mean = 0.0;
    /// Absent for models without a gate.
    std::optional<double> gate_entropy_mean;
    double context_accuracy = 0.0;
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;
};

struct ModelSummary {
    std::string model;
    MetricSummary turn1_entropy;
    std::optional<MetricSummary> gate_entropy;
    MetricSummary context_accuracy;
};

struct SweepSummary {
    std::vector<ModelSummary> models;
    /// Welch test of the first model's Turn 1 entropy against the second's.
    std::optional<WelchResult> test;
};

inline MetricSummary summarize(std::span<const double> x) {
    return {mean(x), x.size() >= 2 ? sample_std(x) : 0.0};
}

inline ModelSummary aggregate_model(const std::string& name, std::span<const SeedResult> results) {
    if (results.size() < 2) throw ValidationError("aggregate: need at least two seeds for " + name);
    std::vector<double> h, g, acc;
    for (const auto& r : results) {
        h.push_back(r.turn1_entropy_mean);
        acc.push_back(r.context_accuracy);
        if (r.gate_entropy_mean) g.push_back(*r.gate_entropy_mean);
    }
    ModelSummary s{name, summarize(h), std::nullopt, summarize(acc)};
    if (!g.empty()) {
        if (g.size() != results.size()) throw ValidationError("aggregate: gate entropy missing for some seeds of " + name);
        s.gate_entropy = summarize(g);
    }
    return s;
}

/// Summaries per model plus a Welch test between the first two models'
/// Turn 1 entropies. Every model must cover the same seed list.
inline SweepSummary aggregate(const std::vector<std::string>& names,
                              const std::vector<std::vector<SeedResult>>& per_model) {
    if (names.size() != per_model.size()) throw ValidationError("aggregate: names and results differ in length");
    SweepSummary out;
    for (std::size_t m = 0; m < names.size(); ++m) {
        if (m > 0) {
            const auto& ref = per_model.front();
            const auto& cur = per_model[m];
            bool same = ref.size() == cur.size();
            for (std::size_t i = 0; same && i < ref.size(); ++i) same = ref[i].seed == cur[i].seed;
            if (!same) throw ValidationError("aggregate: mismatched seed sets between models");
        }
        out.models.push_back(aggregate_model(names[m], per_model[m]));
    }
    if (per_model.size() >= 2) {
        std::vector<double> a, b;
        for (const auto& r : per_model[0]) a.push_back(r.turn1_entropy_mean);
        for (const auto& r : per_model[1]) b.push_back(r.turn1_entropy_mean);
        try {
            out.test = welch_t(a, b);
        } catch (const DegenerateInputError&) {
            out.test.reset();
        }
    }
    return out;
}

}  // namespace nrr
