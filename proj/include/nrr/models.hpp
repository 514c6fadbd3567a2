#pragma once

// Baseline and NRR-lite classifiers for the two-turn disambiguation task.
//
// Both models encode an episode by mean-pooling token embeddings and feed the
// result to a two-layer head. NRR-lite keeps k variant vectors for the
// ambiguous token, runs the shared head once per variant and mixes the
// per-variant class probabilities with a gate computed from Turn 2 alone:
//
//   gate  = softmax(G · mean(turn2))          G has no bias
//   p_i   = softmax(head(mean(turn1 \ {amb}, variant_i, turn2)))
//   fused = Σ_i gate_i p_i
//
// NEUTRAL embeds to the zero vector and is never updated, so a neutral Turn 2
// pools to zero and the gate is exactly uniform whatever the weights are.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrr/dataset.hpp"
#include "nrr/errors.hpp"
#include "nrr/kernel.hpp"
#include "nrr/optim.hpp"
#include "nrr/rng.hpp"
#include "nrr/tensor.hpp"

namespace nrr {

enum class ModelKind { baseline, nrr_lite };

inline std::string to_string(ModelKind k) { return k == ModelKind::baseline ? "baseline" : "nrr-lite"; }

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "baseline") return ModelKind::baseline;
    if (s == "nrr-lite" || s == "nrr_lite" || s == "nrr") return ModelKind::nrr_lite;
    throw ConfigError("unknown model '" + s + "' (expected baseline or nrr-lite)");
}

struct ModelConfig {
    std::size_t embed_dim = 32;
    std::size_t hidden = 32;
    std::size_t k = 2;
    double init_scale = 0.1;
    Activation activation = Activation::sigmoid;
    /// Zero every head weight so an untrained model outputs [0.5, 0.5].
    bool zero_head = false;
    std::string ambiguous_token = "bank";
};

/// Episode with tokens resolved to vocabulary ids.
struct EncodedEpisode {
    std::vector<std::size_t> turn1;
    std::vector<std::size_t> turn2;
    std::size_t ambiguous_index = 0;
    std::size_t label = 0;
};

inline EncodedEpisode encode(const Vocab& vocab, const Episode& e) {
    EncodedEpisode out;
    out.turn1.reserve(e.turn1.size());
    out.turn2.reserve(e.turn2.size());
    for (const auto& w : e.turn1) out.turn1.push_back(vocab.id(w));
    for (const auto& w : e.turn2) out.turn2.push_back(vocab.id(w));
    out.ambiguous_index = e.ambiguous_index;
    out.label = static_cast<std::size_t>(e.label);
    return out;
}

namespace detail {

inline void init_uniform(Mat& m, RngStream& rng, double scale) {
    for (double& v : m.flat()) v = rng.uniform(-scale, scale);
}

inline void init_head(Mlp2& head, RngStream& rng, const ModelConfig& cfg) {
    if (!cfg.zero_head) {
        init_uniform(head.w1.value, rng, cfg.init_scale);
        init_uniform(head.w2.value, rng, cfg.init_scale);
    }
}

inline nlohmann::json param_to_json(const Param& p) {
    return {{"shape", {p.value.rows(), p.value.cols()}}, {"data", p.value.flat()}};
}

inline void param_from_json(Param& p, const nlohmann::json& params) {
    if (!params.contains(p.name)) throw ParseError("checkpoint: missing parameter '" + p.name + "'");
    const auto& j = params.at(p.name);
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols()) {
        throw ShapeError("checkpoint: parameter '" + p.name + "' shape mismatch, expected " + p.value.shape());
    }
    auto data = j.at("data").get<std::vector<double>>();
    p.value = Mat(shape[0], shape[1], std::move(data));
    p.grad = Mat(shape[0], shape[1]);
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"embed_dim", c.embed_dim}, {"hidden", c.hidden},   {"k", c.k},
            {"init_scale", c.init_scale}, {"activation", to_string(c.activation)}, {"zero_head", c.zero_head}, {"ambiguous_token", c.ambiguous_token}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.k = j.at("k").get<std::size_t>();
    c.init_scale = j.at("init_scale").get<double>();
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.zero_head = j.at("zero_head").get<bool>();
    c.ambiguous_token = j.at("ambiguous_token").get<std::string>();
    return c;
}

}  // namespace detail

/// One embedding per token, mean-pooled over turn1 ++ turn2. NEUTRAL is an
/// ordinary row here; training data never contains it, so at evaluation it
/// keeps its random initial value.
class BaselineClassifier {
public:
    static constexpr ModelKind kind = ModelKind::baseline;

    BaselineClassifier() = default;
    BaselineClassifier(Vocab vocab, ModelConfig cfg, RngStream& rng)
        : vocab_(std::move(vocab)), cfg_(std::move(cfg)),
          embed_("embed", vocab_.size(), cfg_.embed_dim),
          head_(cfg_.embed_dim, cfg_.hidden, kNumSenses, cfg_.activation) {
        detail::init_uniform(embed_.value, rng, cfg_.init_scale);
        detail::init_head(head_, rng, cfg_);
    }

    const Vocab& vocab() const noexcept { return vocab_; }
    const ModelConfig& config() const noexcept { return cfg_; }
    const Param& embedding() const noexcept { return embed_; }
    const Mlp2& head() const noexcept { return head_; }

    Vec encoding(const EncodedEpisode& e) const {
        Vec enc(cfg_.embed_dim);
        for (auto id : e.turn1) axpy(1.0, embed_.value.row(id), enc.span());
        for (auto id : e.turn2) axpy(1.0, embed_.value.row(id), enc.span());
        const double inv = 1.0 / static_cast<double>(e.turn1.size() + e.turn2.size());
        for (double& v : enc) v *= inv;
        return enc;
    }

    Vec forward(const EncodedEpisode& e) const { return softmax(head_.forward(encoding(e))); }
    Vec forward(const Episode& e) const { return forward(encode(vocab_, e)); }

    /// Cross-entropy of one episode; adds scale * gradient into every Param.grad.
    double loss_and_backward(const EncodedEpisode& e, double scale = 1.0) {
        Mlp2::Cache cache;
        const Vec p = softmax(head_.forward(encoding(e), &cache));
        const double loss = cross_entropy(p, e.label);
        Vec dz = softmax_cross_entropy_grad(p, e.label);
        for (double& v : dz) v *= scale;
        const Vec denc = head_.backward(cache, dz);
        const double inv = 1.0 / static_cast<double>(e.turn1.size() + e.turn2.size());
        for (auto id : e.turn1) axpy(inv, denc, embed_.grad.row(id));
        for (auto id : e.turn2) axpy(inv, denc, embed_.grad.row(id));
        return loss;
    }

    double loss(const EncodedEpisode& e) const { return cross_entropy(forward(e), e.label); }

    /// Every coordinate is trainable.
    bool frozen(const Param&, std::size_t) const noexcept { return false; }

    std::vector<Param*> params() {
        auto p = head_.params();
        p.insert(p.begin(), &embed_);
        return p;
    }

    nlohmann::json to_json() const {
        nlohmann::json params;
        params[embed_.name] = detail::param_to_json(embed_);
        for (const Param* p : head_.params()) params[p->name] = detail::param_to_json(*p);
        return {{"schema", "nrr.checkpoint/1"},
                {"model", to_string(kind)},
                {"vocab", vocab_.tokens()},
                {"config", detail::config_to_json(cfg_)},
                {"params", params}};
    }

    static BaselineClassifier from_json(const nlohmann::json& j) {
        if (j.at("model").get<std::string>() != to_string(kind)) throw ParseError("checkpoint is not a baseline model");
        BaselineClassifier m;
        m.vocab_ = Vocab::from_tokens(j.at("vocab").get<std::vector<std::string>>());
        m.cfg_ = detail::config_from_json(j.at("config"));
        m.embed_ = Param("embed", m.vocab_.size(), m.cfg_.embed_dim);
        m.head_ = Mlp2(m.cfg_.embed_dim, m.cfg_.hidden, kNumSenses, m.cfg_.activation);
        detail::param_from_json(m.embed_, j.at("params"));
        for (Param* p : m.head_.params()) detail::param_from_json(*p, j.at("params"));
        return m;
    }

private:
    Vocab vocab_;
    ModelConfig cfg_;
    Param embed_;
    Mlp2 head_;
};

/// Single-vector embeddings plus k independently trained variants for each
/// designated ambiguous token.
class MultiVectorTable {
public:
    MultiVectorTable() = default;
    MultiVectorTable(std::size_t vocab_size, std::size_t dim, std::size_t k, std::vector<std::size_t> designated)
        : singles_("embed", vocab_size, dim), designated_(std::move(designated)), k_(k) {
        if (k < 2) throw ConfigError("MultiVectorTable: k must be at least 2");
        for (auto id : designated_) variants_.emplace_back("variants." + std::to_string(id), k, dim);
    }

    std::size_t k() const noexcept { return k_; }
    std::size_t dim() const noexcept { return singles_.value.cols(); }
    const std::vector<std::size_t>& designated() const noexcept { return designated_; }

    /// Index into designated() or -1.
    std::ptrdiff_t slot(std::size_t id) const noexcept {
        for (std::size_t s = 0; s < designated_.size(); ++s) {
            if (designated_[s] == id) return static_cast<std::ptrdiff_t>(s);
        }
        return -1;
    }
    bool is_designated(std::size_t id) const noexcept { return slot(id) >= 0; }

    std::span<const double> single(std::size_t id) const { return singles_.value.row(id); }
    std::span<const double> variant(std::size_t slot, std::size_t i) const { return variants_.at(slot).value.row(i); }

    Param& singles() noexcept { return singles_; }
    const Param& singles() const noexcept { return singles_; }
    Param& variants(std::size_t slot) { return variants_.at(slot); }
    const Param& variants(std::size_t slot) const { return variants_.at(slot); }
    std::size_t slots() const noexcept { return variants_.size(); }

private:
    Param singles_;
    std::vector<std::size_t> designated_;
    std::vector<Param> variants_;
    std::size_t k_ = 2;
};

/// The k interpretations of one episode's ambiguous token and their mixture.
struct InterpretationSet {
    std::vector<Vec> variants;  // per-variant pooled encodings h_{t,i}
    Vec gate;
    std::vector<Vec> per_variant_probs;
    Vec fused;

    std::size_t k() const noexcept { return gate.dim(); }
};

/// Gate-weighted average of per-variant probability vectors.
inline Vec fuse(std::span<const double> gate, const std::vector<Vec>& per_variant) {
    if (gate.size() != per_variant.size() || per_variant.empty()) {
        throw ShapeError("fuse: gate(" + std::to_string(gate.size()) + ") vs " +
                         std::to_string(per_variant.size()) + " variants");
    }
    Vec fused(per_variant.front().dim());
    for (std::size_t i = 0; i < gate.size(); ++i) axpy(gate[i], per_variant[i], fused.span());
    return fused;
}

class NrrLiteClassifier {
public:
    static constexpr ModelKind kind = ModelKind::nrr_lite;

    NrrLiteClassifier() = default;
    NrrLiteClassifier(Vocab vocab, ModelConfig cfg, RngStream& rng)
        : vocab_(std::move(vocab)), cfg_(std::move(cfg)),
          table_(vocab_.size(), cfg_.embed_dim, cfg_.k, {vocab_.id(cfg_.ambiguous_token)}),
          gate_("gate", cfg_.k, cfg_.embed_dim), head_(cfg_.embed_dim, cfg_.hidden, kNumSenses, cfg_.activation) {
        detail::init_uniform(table_.singles().value, rng, cfg_.init_scale);
        std::ranges::fill(table_.singles().value.row(Vocab::kNeutralId), 0.0);
        // The designated tokens' single rows are never read.
        for (auto id : table_.designated()) std::ranges::fill(table_.singles().value.row(id), 0.0);
        for (std::size_t s = 0; s < table_.slots(); ++s) {
            detail::init_uniform(table_.variants(s).value, rng, cfg_.init_scale);
        }
        detail::init_uniform(gate_.value, rng, cfg_.init_scale);
        detail::init_head(head_, rng, cfg_);
    }

    const Vocab& vocab() const noexcept { return vocab_; }
    const ModelConfig& config() const noexcept { return cfg_; }
    const MultiVectorTable& table() const noexcept { return table_; }
    const Param& gate_weights() const noexcept { return gate_; }
    const Mlp2& head() const noexcept { return head_; }

    InterpretationSet forward(const EncodedEpisode& e) const { return run(e, nullptr); }
    InterpretationSet forward(const Episode& e) const { return forward(encode(vocab_, e)); }

    double loss(const EncodedEpisode& e) const { return cross_entropy(forward(e).fused, e.label); }

    /// The NEUTRAL embedding row is held at zero and receives no gradient.
    bool frozen(const Param& p, std::size_t flat_index) const noexcept {
        return &p == &table_.singles() && flat_index / cfg_.embed_dim == Vocab::kNeutralId;
    }

    double loss_and_backward(const EncodedEpisode& e, double scale = 1.0) {
        Trace tr;
        const InterpretationSet s = run(e, &tr);
        const std::size_t y = e.label;
        const double loss = cross_entropy(s.fused, y);
        const double fy = s.fused[y];
        if (fy < kProbFloor) return loss;  // clamped: locally constant
        const double dfused_y = -scale / fy;
        const std::size_t k = s.k();
        const std::size_t d = cfg_.embed_dim;

        Param& variants = table_.variants(tr.slot);
        const double inv_enc = 1.0 / static_cast<double>(e.turn1.size() + e.turn2.size());
        Vec dturn2_sum(d);  // summed d(loss)/d(mean-pool member) for turn2 tokens

        // Per-variant branch through the shared head.
        Vec dgate(k);
        for (std::size_t i = 0; i < k; ++i) {
            dgate[i] = s.per_variant_probs[i][y] * dfused_y;
            Vec dp(kNumSenses);
            dp[y] = s.gate[i] * dfused_y;
            const Vec dz = softmax_backward(s.per_variant_probs[i], dp);
            const Vec denc = head_.backward(tr.head[i], dz);
            for (std::size_t t = 0; t < e.turn1.size(); ++t) {
                if (t == e.ambiguous_index) continue;
                scatter(e.turn1[t], inv_enc, denc);
            }
            axpy(inv_enc, denc, variants.grad.row(i));
            axpy(1.0, denc, dturn2_sum.span());
        }
        for (auto id : e.turn2) scatter(id, inv_enc, dturn2_sum);

        // Gate branch.
        const Vec dlogits = softmax_backward(s.gate, dgate);
        Vec dpool(d);
        for (std::size_t i = 0; i < k; ++i) {
            axpy(dlogits[i], tr.pool, gate_.grad.row(i));
            axpy(dlogits[i], gate_.value.row(i), dpool.span());
        }
        const double inv_pool = 1.0 / static_cast<double>(e.turn2.size());
        for (auto id : e.turn2) scatter(id, inv_pool, dpool);
        return loss;
    }

    std::vector<Param*> params() {
        std::vector<Param*> p{&table_.singles()};
        for (std::size_t s = 0; s < table_.slots(); ++s) p.push_back(&table_.variants(s));
        p.push_back(&gate_);
        for (Param* h : head_.params()) p.push_back(h);
        return p;
    }

    std::vector<const Param*> params_const() const {
        std::vector<const Param*> p{&table_.singles()};
        for (std::size_t s = 0; s < table_.slots(); ++s) p.push_back(&table_.variants(s));
        p.push_back(&gate_);
        for (const Param* h : head_.params()) p.push_back(h);
        return p;
    }

    nlohmann::json to_json() const {
        nlohmann::json params;
        for (const Param* p : params_const()) params[p->name] = detail::param_to_json(*p);
        return {{"schema", "nrr.checkpoint/1"},
                {"model", to_string(kind)},
                {"vocab", vocab_.tokens()},
                {"config", detail::config_to_json(cfg_)},
                {"params", params}};
    }

    static NrrLiteClassifier from_json(const nlohmann::json& j) {
        if (j.at("model").get<std::string>() != to_string(kind)) throw ParseError("checkpoint is not an nrr-lite model");
        NrrLiteClassifier m;
        m.vocab_ = Vocab::from_tokens(j.at("vocab").get<std::vector<std::string>>());
        m.cfg_ = detail::config_from_json(j.at("config"));
        m.table_ = MultiVectorTable(m.vocab_.size(), m.cfg_.embed_dim, m.cfg_.k, {m.vocab_.id(m.cfg_.ambiguous_token)});
        m.gate_ = Param("gate", m.cfg_.k, m.cfg_.embed_dim);
        m.head_ = Mlp2(m.cfg_.embed_dim, m.cfg_.hidden, kNumSenses, m.cfg_.activation);
        for (Param* p : m.params()) detail::param_from_json(*p, j.at("params"));
        return m;
    }

private:
    struct Trace {
        std::size_t slot = 0;
        Vec pool;
        std::vector<Mlp2::Cache> head;
    };

    void scatter(std::size_t id, double alpha, std::span<const double> g) {
        if (id == Vocab::kNeutralId) return;
        axpy(alpha, g, table_.singles().grad.row(id));
    }

    InterpretationSet run(const EncodedEpisode& e, Trace* tr) const {
        if (e.turn2.empty()) throw StructureError("turn2 is empty");
        std::ptrdiff_t slot = -1;
        for (std::size_t t = 0; t < e.turn1.size(); ++t) {
            const auto s = table_.slot(e.turn1[t]);
            if (s < 0) continue;
            if (slot >= 0) throw StructureError("turn1 holds more than one ambiguous token");
            if (t != e.ambiguous_index) throw StructureError("ambiguous_index does not point at the ambiguous token");
            slot = s;
        }
        if (slot < 0) throw StructureError("turn1 holds no ambiguous token");
        for (auto id : e.turn2) {
            if (table_.is_designated(id)) throw StructureError("ambiguous token in turn2");
        }

        const std::size_t d = cfg_.embed_dim;
        const std::size_t k = cfg_.k;
        Vec turn1_sum(d), turn2_sum(d);
        for (std::size_t t = 0; t < e.turn1.size(); ++t) {
            if (t != e.ambiguous_index) axpy(1.0, table_.single(e.turn1[t]), turn1_sum.span());
        }
        for (auto id : e.turn2) axpy(1.0, table_.single(id), turn2_sum.span());

        Vec pool(d);
        axpy(1.0 / static_cast<double>(e.turn2.size()), turn2_sum, pool.span());

        InterpretationSet s;
        Vec gate_logits(k);
        for (std::size_t i = 0; i < k; ++i) gate_logits[i] = dot(gate_.value.row(i), pool);
        s.gate = softmax(gate_logits);

        const double inv = 1.0 / static_cast<double>(e.turn1.size() + e.turn2.size());
        if (tr) tr->head.resize(k);
        for (std::size_t i = 0; i < k; ++i) {
            Vec enc(d);
            axpy(inv, turn1_sum, enc.span());
            axpy(inv, turn2_sum, enc.span());
            axpy(inv, table_.variant(static_cast<std::size_t>(slot), i), enc.span());
            s.per_variant_probs.push_back(softmax(head_.forward(enc, tr ? &tr->head[i] : nullptr)));
            s.variants.push_back(std::move(enc));
        }
        s.fused = fuse(s.gate, s.per_variant_probs);
        if (tr) {
            tr->slot = static_cast<std::size_t>(slot);
            tr->pool = std::move(pool);
        }
        return s;
    }

    Vocab vocab_;
    ModelConfig cfg_;
    MultiVectorTable table_;
    Param gate_;
    Mlp2 head_;
};

/// Class probabilities: softmax output for the baseline, fused mixture for NRR-lite.
inline Vec predict(const BaselineClassifier& m, const Episode& e) { return m.forward(e); }
inline Vec predict(const NrrLiteClassifier& m, const Episode& e) { return m.forward(e).fused; }

/// Prediction with Turn 2 replaced by NEUTRAL.
template <typename Model>
Vec predict_turn1(const Model& m, const Episode& e) {
    return predict(m, neutralize(e));
}

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 1;
    OptimizerConfig optimizer{};
};

struct TrainResult {
    /// Mean training loss of each epoch, as accumulated during that epoch.
    std::vector<double> loss_trace;
    double final_loss = 0.0;
};

/// Minibatch training with per-epoch shuffling drawn from `rng`. Each batch
/// averages its episodes' gradients.
template <typename Model>
TrainResult train(Model& model, const std::vector<Episode>& episodes, const TrainConfig& cfg, RngStream& rng) {
    if (episodes.empty()) throw ConfigError("train: empty training set");
    if (cfg.batch_size == 0) throw ConfigError("train: batch size must be positive");
    std::vector<EncodedEpisode> data;
    data.reserve(episodes.size());
    for (const auto& e : episodes) data.push_back(encode(model.vocab(), e));

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Optimizer opt(cfg.optimizer);
    auto params = model.params();
    for (Param* p : params) p->zero_grad();

    TrainResult res;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double total = 0.0;
        for (std::size_t start = 0, step = 0; start < order.size(); start += cfg.batch_size, ++step) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t b = start; b < end; ++b) {
                const double l = model.loss_and_backward(data[order[b]], scale);
                if (!std::isfinite(l)) {
                    throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                                       std::to_string(step + 1));
                }
                total += l;
            }
            try {
                opt.step(params);
            } catch (const NumericError& ex) {
                throw NumericError("train: epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(step + 1) +
                                   ": " + ex.what());
            }
        }
        res.loss_trace.push_back(total / static_cast<double>(data.size()));
    }
    double final_total = 0.0;
    for (const auto& e : data) final_total += model.loss(e);
    res.final_loss = final_total / static_cast<double>(data.size());
    return res;
}

}  // namespace nrr
