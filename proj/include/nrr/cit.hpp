#pragma once

// Contextual identity tracking: a threshold detector that opens a new context
// whenever consecutive hidden vectors are further apart than tau (cosine
// distance), and a ledger of per-(symbol, context) representative vectors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrr/errors.hpp"
#include "nrr/tensor.hpp"

namespace nrr {

/// Cosine similarity in [−1, 1].
inline double similarity(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw DegenerateInputError("similarity: zero vector has no direction");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// 1 − cosine similarity, in [0, 2].
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
    return 1.0 - similarity(a, b);
}

using ContextId = std::size_t;

class ContextTracker {
public:
    explicit ContextTracker(double tau_context = 0.5) : tau_(tau_context) {
        if (!(tau_ >= 0.0 && tau_ <= 2.0)) throw ConfigError("ContextTracker: tau must lie in [0, 2]");
    }

    double tau() const noexcept { return tau_; }
    ContextId current() const noexcept { return current_; }
    bool started() const noexcept { return last_.has_value(); }

    ContextId observe(std::span<const double> h) {
        if (norm(h) == 0.0) throw DegenerateInputError("ContextTracker::observe: zero vector");
        if (last_ && cosine_distance(h, *last_) > tau_) ++current_;
        last_ = Vec(h);
        return current_;
    }

    std::vector<ContextId> observe_all(const std::vector<Vec>& seq) {
        std::vector<ContextId> ids;
        ids.reserve(seq.size());
        for (const auto& h : seq) ids.push_back(observe(h));
        return ids;
    }

private:
    double tau_;
    ContextId current_ = 0;
    std::optional<Vec> last_;
};

struct IdentityRecord {
    std::string symbol;
    ContextId context_id = 0;
    Vec vector;
    std::size_t observations = 0;
};

/// I(symbol, context) store. Recording the same pair again folds the new
/// vector into a running mean. Reads take a shared lock, writes an exclusive one.
class IdentityLedger {
public:
    IdentityLedger() = default;
    IdentityLedger(const IdentityLedger& o) {
        std::shared_lock lock(o.mu_);
        records_ = o.records_;
    }
    IdentityLedger& operator=(const IdentityLedger& o) {
        if (this != &o) {
            std::scoped_lock lock(mu_, o.mu_);
            records_ = o.records_;
        }
        return *this;
    }

    void record(const std::string& symbol, ContextId context, std::span<const double> vector) {
        std::unique_lock lock(mu_);
        auto [it, inserted] = records_.try_emplace({symbol, context});
        IdentityRecord& r = it->second;
        if (inserted) {
            r = IdentityRecord{symbol, context, Vec(vector), 1};
            return;
        }
        if (r.vector.dim() != vector.size()) {
            throw ShapeError("IdentityLedger: dimension " + std::to_string(vector.size()) + " vs recorded " +
                             std::to_string(r.vector.dim()));
        }
        ++r.observations;
        const double w = 1.0 / static_cast<double>(r.observations);
        for (std::size_t i = 0; i < vector.size(); ++i) r.vector[i] += w * (vector[i] - r.vector[i]);
    }

    IdentityRecord lookup(const std::string& symbol, ContextId context) const {
        std::shared_lock lock(mu_);
        auto it = records_.find({symbol, context});
        if (it == records_.end()) {
            throw NotFoundError("no identity for '" + symbol + "' in context " + std::to_string(context));
        }
        return it->second;
    }

    bool contains(const std::string& symbol, ContextId context) const {
        std::shared_lock lock(mu_);
        return records_.count({symbol, context}) > 0;
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return records_.size();
    }

    /// Records ordered by (symbol, context).
    std::vector<IdentityRecord> records() const {
        std::shared_lock lock(mu_);
        std::vector<IdentityRecord> out;
        for (const auto& [key, r] : records_) out.push_back(r);
        return out;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : records()) {
            nlohmann::ordered_json j;
            j["symbol"] = r.symbol;
            j["context_id"] = r.context_id;
            j["vector"] = r.vector.values();
            arr.push_back(j);
        }
        return arr;
    }

    static IdentityLedger from_json(const nlohmann::ordered_json& arr) {
        if (!arr.is_array()) throw ParseError("identity ledger: expected an array");
        IdentityLedger l;
        for (const auto& j : arr) {
            const auto v = j.at("vector").get<std::vector<double>>();
            l.record(j.at("symbol").get<std::string>(), j.at("context_id").get<ContextId>(), v);
        }
        return l;
    }

private:
    mutable std::shared_mutex mu_;
    std::map<std::pair<std::string, ContextId>, IdentityRecord> records_;
};

}  // namespace nrr
