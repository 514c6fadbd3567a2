#pragma once

// Forward and backward primitives for the small dense models in this library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nrr/errors.hpp"
#include "nrr/tensor.hpp"

namespace nrr {

enum class Activation { sigmoid, tanh, relu };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + s + "'");
}

inline double sigmoid(double x) noexcept {
    // Branching keeps exp() from overflowing for large |x|.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double activate(double x, Activation kind) noexcept {
    switch (kind) {
        case Activation::sigmoid: return sigmoid(x);
        case Activation::tanh: return std::tanh(x);
        case Activation::relu: return x > 0.0 ? x : 0.0;
    }
    return x;
}

/// Derivative expressed through the activation output y = f(x) (and x for relu).
inline double activate_grad(double x, double y, Activation kind) noexcept {
    switch (kind) {
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::tanh: return 1.0 - y * y;
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

inline Vec activations(std::span<const double> x, Activation kind) {
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = activate(x[i], kind);
    return out;
}

/// W x + b
inline Vec affine_forward(std::span<const double> x, const Mat& W, std::span<const double> b) {
    if (W.cols() != x.size() || W.rows() != b.size()) {
        throw ShapeError("affine_forward: W" + W.shape() + " x(" + std::to_string(x.size()) +
                         ") b(" + std::to_string(b.size()) + ")");
    }
    Vec y(W.rows());
    for (std::size_t r = 0; r < W.rows(); ++r) y[r] = b[r] + dot(W.row(r), x);
    return y;
}

/// Accumulates dW += upstream ⊗ x and db += upstream; returns dx = Wᵀ upstream.
inline Vec affine_backward(std::span<const double> x, const Mat& W, std::span<const double> upstream,
                           Mat& dW, std::span<double> db) {
    if (W.cols() != x.size() || W.rows() != upstream.size() || !dW.same_shape(W) ||
        db.size() != W.rows()) {
        throw ShapeError("affine_backward: W" + W.shape() + " dW" + dW.shape() + " x(" +
                         std::to_string(x.size()) + ") upstream(" + std::to_string(upstream.size()) + ")");
    }
    Vec dx(W.cols());
    for (std::size_t r = 0; r < W.rows(); ++r) {
        const double g = upstream[r];
        if (g == 0.0) continue;
        db[r] += g;
        auto wrow = W.row(r);
        auto drow = dW.row(r);
        for (std::size_t c = 0; c < W.cols(); ++c) {
            drow[c] += g * x[c];
            dx[c] += g * wrow[c];
        }
    }
    return dx;
}

/// Max-subtracted softmax.
inline Vec softmax(std::span<const double> x) {
    Vec out(x.size());
    if (x.empty()) return out;
    const double m = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - m);
        s += out[i];
    }
    for (auto& v : out) v /= s;
    return out;
}

/// Vector-Jacobian product of softmax: dz = p ⊙ (dp − ⟨dp, p⟩).
inline Vec softmax_backward(std::span<const double> p, std::span<const double> dp) {
    const double inner = dot(p, dp);
    Vec dz(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) dz[i] = p[i] * (dp[i] - inner);
    return dz;
}

inline constexpr double kProbFloor = 1e-12;

/// −log p[gold], with p[gold] clamped to [1e-12, 1].
inline double cross_entropy(std::span<const double> p, std::size_t gold) {
    if (gold >= p.size()) {
        throw ValidationError("cross_entropy: gold index " + std::to_string(gold) + " out of range for dim " +
                              std::to_string(p.size()));
    }
    double s = 0.0;
    for (double v : p) s += v;
    if (std::abs(s - 1.0) > 1e-9) {
        throw ValidationError("cross_entropy: probabilities sum to " + std::to_string(s));
    }
    return -std::log(std::clamp(p[gold], kProbFloor, 1.0));
}

/// Gradient of cross_entropy(softmax(z), gold) with respect to z. Zero when
/// the clamp is active, since the loss is locally constant there.
inline Vec softmax_cross_entropy_grad(std::span<const double> p, std::size_t gold) {
    Vec dz(p.size());
    if (p[gold] < kProbFloor) return dz;
    for (std::size_t i = 0; i < p.size(); ++i) dz[i] = p[i] - (i == gold ? 1.0 : 0.0);
    return dz;
}

/// Two affine layers with an elementwise nonlinearity between them.
class Mlp2 {
public:
    struct Cache {
        Vec input;
        Vec pre;     // first layer pre-activation
        Vec hidden;  // activation output
        Vec logits;
        bool valid = false;
    };

    Mlp2() = default;
    Mlp2(std::size_t in, std::size_t hidden, std::size_t out, Activation act = Activation::tanh,
         const std::string& prefix = "head")
        : w1(prefix + ".w1", hidden, in), b1(prefix + ".b1", hidden, 1),
          w2(prefix + ".w2", out, hidden), b2(prefix + ".b2", out, 1), act_(act) {}

    Param w1, b1, w2, b2;

    Activation activation() const noexcept { return act_; }
    std::size_t in_dim() const noexcept { return w1.value.cols(); }
    std::size_t out_dim() const noexcept { return w2.value.rows(); }

    Vec forward(std::span<const double> x, Cache* cache = nullptr) const {
        Vec pre = affine_forward(x, w1.value, b1.value.flat());
        Vec hid = activations(pre, act_);
        Vec logits = affine_forward(hid, w2.value, b2.value.flat());
        if (cache) {
            cache->input = Vec(x);
            cache->pre = std::move(pre);
            cache->hidden = std::move(hid);
            cache->logits = logits;
            cache->valid = true;
        }
        return logits;
    }

    /// Accumulates parameter gradients and returns d(loss)/d(input).
    Vec backward(const Cache& cache, std::span<const double> dlogits) {
        if (!cache.valid) throw StateError("Mlp2::backward called before forward");
        Vec dhid = affine_backward(cache.hidden, w2.value, dlogits, w2.grad, b2.grad.flat());
        for (std::size_t i = 0; i < dhid.dim(); ++i) {
            dhid[i] *= activate_grad(cache.pre[i], cache.hidden[i], act_);
        }
        return affine_backward(cache.input, w1.value, dhid, w1.grad, b1.grad.flat());
    }

    std::vector<Param*> params() { return {&w1, &b1, &w2, &b2}; }
    std::vector<const Param*> params() const { return {&w1, &b1, &w2, &b2}; }

private:
    Activation act_ = Activation::tanh;
};

}  // namespace nrr
