#pragma once

// Resolution policies. They read an InterpretationSet and decide whether to
// commit to one interpretation; they never modify it.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nrr/cit.hpp"
#include "nrr/errors.hpp"
#include "nrr/models.hpp"
#include "nrr/tensor.hpp"

namespace nrr {

struct ResolutionPolicy {
    enum class Mode { classify, generate, defer };

    Mode mode = Mode::generate;
    /// Gate mass the leading interpretation must exceed (generate mode).
    double dominance_theta = 0.9;
    /// How many of the most recent drift values must be stable.
    std::size_t stability_window = 2;
    double drift_epsilon = 0.1;

    void validate(std::size_t k) const {
        if (!(dominance_theta > 0.5 && dominance_theta <= 1.0)) {
            throw ConfigError("resolution: theta must lie in (0.5, 1]");
        }
        if (k > 0 && !(dominance_theta > 1.0 / static_cast<double>(k))) {
            throw ConfigError("resolution: theta must exceed 1/k");
        }
        if (stability_window == 0) throw ConfigError("resolution: stability window must be positive");
        if (!(drift_epsilon >= 0.0)) throw ConfigError("resolution: drift epsilon must be non-negative");
    }
};

inline std::string to_string(ResolutionPolicy::Mode m) {
    switch (m) {
        case ResolutionPolicy::Mode::classify: return "classify";
        case ResolutionPolicy::Mode::generate: return "generate";
        case ResolutionPolicy::Mode::defer: return "defer";
    }
    return "?";
}

inline ResolutionPolicy::Mode parse_resolution_mode(const std::string& s) {
    if (s == "classify") return ResolutionPolicy::Mode::classify;
    if (s == "generate") return ResolutionPolicy::Mode::generate;
    if (s == "defer") return ResolutionPolicy::Mode::defer;
    throw ConfigError("unknown resolution mode '" + s + "'");
}

struct ResolutionOutcome {
    enum class Kind { resolved, retained };
    enum class Reason {
        classify_mode,     // classification always commits
        defer_mode,        // deferral never commits
        dominant_stable,   // leading weight > theta and recent drift ≤ epsilon
        not_dominant,      // leading weight ≤ theta
        unstable,          // dominant, but drift too high or too little history
    };

    Kind kind = Kind::retained;
    std::size_t variant = 0;  // meaningful only when resolved
    Reason reason = Reason::defer_mode;

    bool resolved() const noexcept { return kind == Kind::resolved; }
};

inline std::string to_string(ResolutionOutcome::Reason r) {
    using R = ResolutionOutcome::Reason;
    switch (r) {
        case R::classify_mode: return "classify mode";
        case R::defer_mode: return "defer mode";
        case R::dominant_stable: return "dominant and stable";
        case R::not_dominant: return "no dominant interpretation";
        case R::unstable: return "context not stable";
    }
    return "?";
}

inline std::string describe(const ResolutionOutcome& o) {
    if (o.resolved()) return "Resolved(" + std::to_string(o.variant) + ") [" + to_string(o.reason) + "]";
    return "Retained [" + to_string(o.reason) + "]";
}

/// Leading gate index; exact ties go to the lowest index.
inline std::size_t dominant_variant(std::span<const double> gate) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < gate.size(); ++i) {
        if (gate[i] > gate[best]) best = i;
    }
    return best;
}

inline ResolutionOutcome resolve(std::span<const double> gate, const ResolutionPolicy& policy,
                                 std::span<const double> drift_history) {
    if (gate.empty()) throw StructureError("resolve: empty interpretation set");
    double s = 0.0;
    for (double g : gate) s += g;
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("resolve: gate weights sum to " + std::to_string(s));
    policy.validate(gate.size());

    using K = ResolutionOutcome::Kind;
    using R = ResolutionOutcome::Reason;
    const std::size_t lead = dominant_variant(gate);
    switch (policy.mode) {
        case ResolutionPolicy::Mode::classify: return {K::resolved, lead, R::classify_mode};
        case ResolutionPolicy::Mode::defer: return {K::retained, 0, R::defer_mode};
        case ResolutionPolicy::Mode::generate: break;
    }
    if (!(gate[lead] > policy.dominance_theta)) return {K::retained, 0, R::not_dominant};
    if (drift_history.size() < policy.stability_window) return {K::retained, 0, R::unstable};
    for (std::size_t i = drift_history.size() - policy.stability_window; i < drift_history.size(); ++i) {
        if (!(drift_history[i] <= policy.drift_epsilon)) return {K::retained, 0, R::unstable};
    }
    return {K::resolved, lead, R::dominant_stable};
}

inline ResolutionOutcome resolve(const InterpretationSet& s, const ResolutionPolicy& policy,
                                 std::span<const double> drift_history) {
    return resolve(s.gate, policy, drift_history);
}

/// Δc between consecutive context encodings, as cosine distance.
inline std::vector<double> drift_series(const std::vector<Vec>& encodings) {
    std::vector<double> out;
    for (std::size_t t = 1; t < encodings.size(); ++t) out.push_back(cosine_distance(encodings[t], encodings[t - 1]));
    return out;
}

}  // namespace nrr
