#pragma once

// Reference computations used to check the library. They are written
// independently of the library code and favour precision over speed.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

inline long double entropy(const std::vector<double>& p) {
    long double h = 0.0L;
    for (double v : p) {
        if (v > 0.0) h -= static_cast<long double>(v) * std::log(static_cast<long double>(v));
    }
    return h;
}

inline long double sigmoid(long double x) { return 1.0L / (1.0L + std::exp(-x)); }

/// Student t density with df degrees of freedom.
inline long double t_density(long double x, long double df) {
    const long double c = std::exp(std::lgamma((df + 1.0L) / 2.0L) - std::lgamma(df / 2.0L)) /
                          std::sqrt(df * 3.14159265358979323846264338327950288L);
    return c * std::pow(1.0L + x * x / df, -(df + 1.0L) / 2.0L);
}

/// Two-sided tail P(|T| > t) as 1 − 2∫₀ᵗ f, by composite Simpson.
inline long double t_two_sided_p(long double t, long double df, std::size_t panels = 200000) {
    t = std::fabs(t);
    if (t == 0.0L) return 1.0L;
    const long double h = t / static_cast<long double>(panels);
    long double s = t_density(0.0L, df) + t_density(t, df);
    for (std::size_t i = 1; i < panels; ++i) {
        const long double x = h * static_cast<long double>(i);
        s += (i % 2 ? 4.0L : 2.0L) * t_density(x, df);
    }
    return 1.0L - 2.0L * s * h / 3.0L;
}

/// Welch t statistic straight from its definition.
inline long double welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    auto stats = [](const std::vector<double>& x) {
        long double m = 0.0L;
        for (double v : x) m += v;
        m /= static_cast<long double>(x.size());
        long double ss = 0.0L;
        for (double v : x) ss += (v - m) * (v - m);
        return std::pair<long double, long double>{m, ss / static_cast<long double>(x.size() - 1)};
    };
    const auto [ma, va] = stats(a);
    const auto [mb, vb] = stats(b);
    return (ma - mb) / std::sqrt(va / a.size() + vb / b.size());
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace oracle
