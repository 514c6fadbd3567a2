#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "nrr/errors.hpp"
#include "nrr/tensor.hpp"

namespace nrr {

struct OptimizerConfig {
    enum class Kind { sgd, adam };

    Kind kind = Kind::adam;
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global gradient norm ceiling; non-positive disables clipping.
    double clip_norm = 5.0;
};

inline std::string to_string(OptimizerConfig::Kind k) {
    return k == OptimizerConfig::Kind::sgd ? "sgd" : "adam";
}

inline OptimizerConfig::Kind parse_optimizer_kind(const std::string& s) {
    if (s == "sgd") return OptimizerConfig::Kind::sgd;
    if (s == "adam") return OptimizerConfig::Kind::adam;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

inline double global_grad_norm(const std::vector<Param*>& params) {
    double s = 0.0;
    for (const Param* p : params) {
        for (double g : p->grad.flat()) s += g * g;
    }
    return std::sqrt(s);
}

/// Scales all gradients so their joint L2 norm is at most max_norm. Returns the pre-clip norm.
inline double clip_grad_norm(const std::vector<Param*>& params, double max_norm) {
    const double n = global_grad_norm(params);
    if (max_norm > 0.0 && n > max_norm) {
        const double scale = max_norm / n;
        for (Param* p : params) {
            for (double& g : p->grad.flat()) g *= scale;
        }
    }
    return n;
}

/// Applies SGD or Adam to a fixed parameter list. Adam moments are keyed by
/// position in that list, so the list must not change between steps.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

    const OptimizerConfig& config() const noexcept { return cfg_; }
    std::size_t steps() const noexcept { return t_; }

    /// Clip, update, then zero the gradients. Throws NumericError without
    /// touching any value if a gradient is non-finite.
    void step(const std::vector<Param*>& params) {
        for (const Param* p : params) {
            if (!p->grad.is_finite()) {
                throw NumericError("optimizer step " + std::to_string(t_ + 1) + ": non-finite gradient in '" +
                                   p->name + "'");
            }
        }
        clip_grad_norm(params, cfg_.clip_norm);
        ++t_;
        if (cfg_.kind == OptimizerConfig::Kind::sgd) {
            for (Param* p : params) {
                auto v = p->value.flat();
                auto g = p->grad.flat();
                for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg_.lr * g[i];
            }
        } else {
            if (m_.empty()) {
                for (const Param* p : params) {
                    m_.emplace_back(p->size(), 0.0);
                    v_.emplace_back(p->size(), 0.0);
                }
            }
            if (m_.size() != params.size()) throw StateError("Optimizer: parameter list changed between steps");
            const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
            const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
            for (std::size_t k = 0; k < params.size(); ++k) {
                auto val = params[k]->value.flat();
                auto g = params[k]->grad.flat();
                auto& m = m_[k];
                auto& v = v_[k];
                if (m.size() != val.size()) throw StateError("Optimizer: parameter shape changed between steps");
                for (std::size_t i = 0; i < val.size(); ++i) {
                    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                    const double mhat = m[i] / bc1;
                    const double vhat = v[i] / bc2;
                    val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
                }
            }
        }
        for (Param* p : params) p->zero_grad();
    }

private:
    OptimizerConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace nrr
