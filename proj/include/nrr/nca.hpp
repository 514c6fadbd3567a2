#pragma once

// Non-collapsing attention.
//
// Every interpretation of every token is a row of the input matrix (row
// t*k + i holds h_{t,i}). Each row queries every row, scores are
// q·kᵀ/√d, and the activation is applied per score. In sigmoid mode the
// weights of a row are independent, so several keys can be fully attended at
// once; softmax mode is the usual competing normalization, kept for contrast.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nrr/errors.hpp"
#include "nrr/kernel.hpp"
#include "nrr/metrics.hpp"
#include "nrr/optim.hpp"
#include "nrr/rng.hpp"
#include "nrr/tensor.hpp"

namespace nrr {

enum class AttentionMode { sigmoid, softmax };

inline std::string to_string(AttentionMode m) { return m == AttentionMode::sigmoid ? "sigmoid" : "softmax"; }

struct AttentionConfig {
    std::size_t d = 4;
    AttentionMode activation = AttentionMode::sigmoid;
    double clip_norm = 5.0;
    double strength_lambda = 0.0;

    void validate() const {
        if (d == 0) throw ConfigError("attention: d must be positive");
        if (!(clip_norm > 0.0)) throw ConfigError("attention: clip_norm must be positive");
        if (!(strength_lambda >= 0.0)) throw ConfigError("attention: strength_lambda must be non-negative");
    }
};

/// n tokens × k interpretations of d-dim vectors, one row per (token, interpretation).
struct InterpretationSeq {
    Mat h;
    std::size_t k = 1;

    InterpretationSeq() = default;
    InterpretationSeq(Mat rows, std::size_t interpretations) : h(std::move(rows)), k(interpretations) {
        if (k == 0 || h.rows() % k != 0) {
            throw ShapeError("InterpretationSeq: " + std::to_string(h.rows()) + " rows not divisible by k=" +
                             std::to_string(k));
        }
    }

    std::size_t tokens() const noexcept { return k ? h.rows() / k : 0; }
    std::size_t d() const noexcept { return h.cols(); }
    std::span<const double> at(std::size_t t, std::size_t i) const { return h.row(t * k + i); }
};

struct AttentionResult {
    Mat out;      // same shape as the query rows
    Mat weights;  // α, query rows × key rows
    Mat scores;   // pre-activation q·kᵀ/√d
};

inline double strength_penalty(const Mat& weights, double lambda) {
    if (!(lambda >= 0.0)) throw ValidationError("strength_penalty: lambda must be non-negative");
    double s = 0.0;
    for (double a : weights.flat()) s += a * a;
    return lambda * s;
}

struct RetentionEntropy {
    double entropy = 0.0;
    bool degenerate = false;
};

/// Entropy of one weight row after normalizing it to sum to one.
inline RetentionEntropy retention_entropy(std::span<const double> row) {
    double s = 0.0;
    for (double a : row) {
        if (!(a >= 0.0)) throw ValidationError("retention_entropy: weights must be non-negative");
        s += a;
    }
    if (s == 0.0) return {0.0, true};
    std::vector<double> p(row.begin(), row.end());
    for (double& v : p) v /= s;
    // Renormalized rows can drift from 1 by an ulp; entropy() tolerates 1e-9.
    return {entropy(p), false};
}

inline std::vector<RetentionEntropy> retention_entropy(const Mat& weights) {
    std::vector<RetentionEntropy> out;
    for (std::size_t r = 0; r < weights.rows(); ++r) out.push_back(retention_entropy(weights.row(r)));
    return out;
}

class NonCollapsingAttention {
public:
    struct Cache {
        Mat queries_in, keys_in;
        Mat q, k, v;
        AttentionResult result;
        bool valid = false;
    };

    struct InputGrads {
        Mat queries;
        Mat keys;
    };

    explicit NonCollapsingAttention(AttentionConfig cfg)
        : cfg_(cfg), wq_("attn.wq", cfg.d, cfg.d), wk_("attn.wk", cfg.d, cfg.d), wv_("attn.wv", cfg.d, cfg.d) {
        cfg_.validate();
        wq_.value = Mat::identity(cfg.d);
        wk_.value = Mat::identity(cfg.d);
        wv_.value = Mat::identity(cfg.d);
    }

    NonCollapsingAttention(AttentionConfig cfg, RngStream& rng, double scale = 0.5) : NonCollapsingAttention(cfg) {
        for (Param* p : params()) {
            for (double& w : p->value.flat()) w = rng.uniform(-scale, scale);
        }
    }

    const AttentionConfig& config() const noexcept { return cfg_; }
    AttentionConfig& config() noexcept { return cfg_; }
    Param& wq() noexcept { return wq_; }
    Param& wk() noexcept { return wk_; }
    Param& wv() noexcept { return wv_; }
    const Param& wq() const noexcept { return wq_; }
    const Param& wk() const noexcept { return wk_; }
    const Param& wv() const noexcept { return wv_; }
    std::vector<Param*> params() { return {&wq_, &wk_, &wv_}; }

    /// Self-attention over all (token, interpretation) rows.
    AttentionResult attend(const InterpretationSeq& in, Cache* cache = nullptr) const {
        return attend(in.h, in.h, cache);
    }

    /// Each query row attends over every key row; values come from the key rows.
    AttentionResult attend(const Mat& queries_in, const Mat& keys_in, Cache* cache = nullptr) const {
        check_width(queries_in, "queries");
        check_width(keys_in, "keys");
        const std::size_t nq = queries_in.rows();
        const std::size_t nk = keys_in.rows();
        const Mat q = project(wq_.value, queries_in);
        const Mat k = project(wk_.value, keys_in);
        const Mat v = project(wv_.value, keys_in);
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.d));

        AttentionResult r{Mat(nq, cfg_.d), Mat(nq, nk), Mat(nq, nk)};
        for (std::size_t i = 0; i < nq; ++i) {
            for (std::size_t j = 0; j < nk; ++j) r.scores(i, j) = dot(q.row(i), k.row(j)) * inv_sqrt_d;
            if (cfg_.activation == AttentionMode::sigmoid) {
                for (std::size_t j = 0; j < nk; ++j) r.weights(i, j) = sigmoid(r.scores(i, j));
            } else {
                const Vec a = softmax(r.scores.row(i));
                for (std::size_t j = 0; j < nk; ++j) r.weights(i, j) = a[j];
            }
            for (std::size_t j = 0; j < nk; ++j) axpy(r.weights(i, j), v.row(j), r.out.row(i));
        }
        if (cache) {
            cache->queries_in = queries_in;
            cache->keys_in = keys_in;
            cache->q = q;
            cache->k = k;
            cache->v = v;
            cache->result = r;
            cache->valid = true;
        }
        return r;
    }

    double penalty(const AttentionResult& r) const { return strength_penalty(r.weights, cfg_.strength_lambda); }

    /// Backpropagates d(loss)/d(out) plus the strength penalty into the
    /// projection gradients. Returns gradients for the query and key inputs
    /// (sum them for self-attention).
    InputGrads backward(const Cache& cache, const Mat& dout) {
        if (!cache.valid) throw StateError("attention backward called before forward");
        const AttentionResult& r = cache.result;
        if (!dout.same_shape(r.out)) throw ShapeError("attention backward: dout" + dout.shape() + " vs out" + r.out.shape());
        const std::size_t nq = r.weights.rows();
        const std::size_t nk = r.weights.cols();
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.d));
        const double lambda = cfg_.strength_lambda;

        Mat dq(nq, cfg_.d), dk(nk, cfg_.d), dv(nk, cfg_.d);
        for (std::size_t i = 0; i < nq; ++i) {
            Vec dalpha(nk);
            for (std::size_t j = 0; j < nk; ++j) {
                const double a = r.weights(i, j);
                dalpha[j] = dot(dout.row(i), cache.v.row(j)) + 2.0 * lambda * a;
                axpy(a, dout.row(i), dv.row(j));
            }
            Vec ds(nk);
            if (cfg_.activation == AttentionMode::sigmoid) {
                for (std::size_t j = 0; j < nk; ++j) {
                    const double a = r.weights(i, j);
                    ds[j] = dalpha[j] * a * (1.0 - a);
                }
            } else {
                ds = softmax_backward(r.weights.row(i), dalpha);
            }
            for (std::size_t j = 0; j < nk; ++j) {
                const double g = ds[j] * inv_sqrt_d;
                axpy(g, cache.k.row(j), dq.row(i));
                axpy(g, cache.q.row(i), dk.row(j));
            }
        }
        InputGrads g{Mat(nq, cfg_.d), Mat(nk, cfg_.d)};
        project_backward(wq_, cache.queries_in, dq, g.queries);
        project_backward(wk_, cache.keys_in, dk, g.keys);
        project_backward(wv_, cache.keys_in, dv, g.keys);
        return g;
    }

    /// Clips the accumulated gradients to the layer's clip_norm, then steps.
    void step(Optimizer& opt) {
        clip_grad_norm(params(), cfg_.clip_norm);
        opt.step(params());
    }

private:
    void check_width(const Mat& x, const char* what) const {
        if (x.cols() != cfg_.d) {
            throw ShapeError(std::string("attention: ") + what + x.shape() + " does not match d=" + std::to_string(cfg_.d));
        }
    }

    static Mat project(const Mat& W, const Mat& x) {
        Mat out(x.rows(), W.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t o = 0; o < W.rows(); ++o) out(r, o) = dot(W.row(o), x.row(r));
        }
        return out;
    }

    static void project_backward(Param& W, const Mat& x, const Mat& dy, Mat& dx) {
        for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t o = 0; o < W.value.rows(); ++o) {
                const double g = dy(r, o);
                axpy(g, x.row(r), W.grad.row(o));
                axpy(g, W.value.row(o), dx.row(r));
            }
        }
    }

    AttentionConfig cfg_;
    Param wq_, wk_, wv_;
};

}  // namespace nrr
