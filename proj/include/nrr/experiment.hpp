#pragma once

// Turn 1 entropy experiment: train each model on the two-turn corpus, then
// measure output entropy on the held-out set with Turn 2 neutralized, gate
// entropy on the same inputs, and accuracy with Turn 2 context present.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <future>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrr/cit.hpp"
#include "nrr/dataset.hpp"
#include "nrr/errors.hpp"
#include "nrr/metrics.hpp"
#include "nrr/models.hpp"
#include "nrr/optim.hpp"
#include "nrr/rng.hpp"

namespace nrr {

inline constexpr int kReportSchemaVersion = 1;
/// Added to a run seed to derive its evaluation-set seed.
inline constexpr std::uint64_t kEvalSeedOffset = 1'000'003;
inline constexpr const char* kTableCsvHeader = "model,seed,turn1_entropy,gate_entropy,context_accuracy";

struct RunConfig {
    std::vector<ModelKind> models{ModelKind::baseline, ModelKind::nrr_lite};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::size_t epochs = 100;
    std::size_t n_train = 1000;
    std::size_t n_eval = 200;
    double balance = 0.5;
    std::size_t embed_dim = 32;
    std::size_t hidden = 32;
    std::size_t k = 2;
    Activation activation = Activation::sigmoid;
    std::size_t batch_size = 1;
    OptimizerConfig optimizer{};
    /// Optional fixed datasets; when empty, data is generated per seed.
    std::string train_path;
    std::string eval_path;
    /// Worker threads for the sweep. Output does not depend on it.
    std::size_t jobs = 1;

    void validate() const {
        if (models.empty()) throw ConfigError("run: no models selected");
        if (seeds.empty()) throw ConfigError("run: no seeds selected");
        if (epochs == 0 || n_train == 0 || n_eval == 0 || embed_dim == 0 || hidden == 0 || batch_size == 0) {
            throw ConfigError("run: sizes must be positive");
        }
        if (k < 2) throw ConfigError("run: nrr-lite needs k >= 2");
        if (jobs == 0) throw ConfigError("run: jobs must be positive");
    }

    ModelConfig model_config() const {
        ModelConfig m;
        m.embed_dim = embed_dim;
        m.hidden = hidden;
        m.k = k;
        m.activation = activation;
        return m;
    }

    TrainConfig train_config() const { return {epochs, batch_size, optimizer}; }
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    std::vector<std::string> models;
    for (auto m : c.models) models.push_back(to_string(m));
    j["models"] = models;
    j["seeds"] = c.seeds;
    j["epochs"] = c.epochs;
    j["n_train"] = c.n_train;
    j["n_eval"] = c.n_eval;
    j["balance"] = c.balance;
    j["embed_dim"] = c.embed_dim;
    j["hidden"] = c.hidden;
    j["k"] = c.k;
    j["activation"] = to_string(c.activation);
    j["batch_size"] = c.batch_size;
    j["optimizer"] = {{"kind", to_string(c.optimizer.kind)}, {"lr", c.optimizer.lr},
                      {"beta1", c.optimizer.beta1},          {"beta2", c.optimizer.beta2},
                      {"eps", c.optimizer.eps},              {"clip_norm", c.optimizer.clip_norm}};
    j["train_path"] = c.train_path;
    j["eval_path"] = c.eval_path;
    return j;
}

/// Overlays the keys present in `j` onto `c`; unknown keys are rejected.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "models") {
            c.models.clear();
            for (const auto& m : v) c.models.push_back(parse_model_kind(m.get<std::string>()));
        } else if (key == "seeds") {
            c.seeds = v.get<std::vector<std::uint64_t>>();
        } else if (key == "epochs") {
            c.epochs = v.get<std::size_t>();
        } else if (key == "n_train") {
            c.n_train = v.get<std::size_t>();
        } else if (key == "n_eval") {
            c.n_eval = v.get<std::size_t>();
        } else if (key == "balance") {
            c.balance = v.get<double>();
        } else if (key == "embed_dim") {
            c.embed_dim = v.get<std::size_t>();
        } else if (key == "hidden") {
            c.hidden = v.get<std::size_t>();
        } else if (key == "k") {
            c.k = v.get<std::size_t>();
        } else if (key == "activation") {
            c.activation = parse_activation(v.get<std::string>());
        } else if (key == "batch_size") {
            c.batch_size = v.get<std::size_t>();
        } else if (key == "jobs") {
            c.jobs = v.get<std::size_t>();
        } else if (key == "train_path") {
            c.train_path = v.get<std::string>();
        } else if (key == "eval_path") {
            c.eval_path = v.get<std::string>();
        } else if (key == "optimizer") {
            for (const auto& [ok, ov] : v.items()) {
                if (ok == "kind") c.optimizer.kind = parse_optimizer_kind(ov.get<std::string>());
                else if (ok == "lr") c.optimizer.lr = ov.get<double>();
                else if (ok == "beta1") c.optimizer.beta1 = ov.get<double>();
                else if (ok == "beta2") c.optimizer.beta2 = ov.get<double>();
                else if (ok == "eps") c.optimizer.eps = ov.get<double>();
                else if (ok == "clip_norm") c.optimizer.clip_norm = ov.get<double>();
                else throw ConfigError("config: unknown optimizer key '" + ok + "'");
            }
        } else {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
}

struct Datasets {
    std::vector<Episode> train;
    std::vector<Episode> eval;
    DatasetSpec spec;
};

inline Datasets make_datasets(const RunConfig& cfg, std::uint64_t seed) {
    Datasets d;
    d.spec.n = cfg.n_train;
    d.spec.balance = cfg.balance;
    d.spec.seed = seed;
    if (cfg.train_path.empty()) {
        d.train = generate(d.spec);
    } else {
        d.train = read_jsonl(cfg.train_path, d.spec.ambiguous_token);
    }
    if (cfg.eval_path.empty()) {
        DatasetSpec es = d.spec;
        es.n = cfg.n_eval;
        es.seed = seed + kEvalSeedOffset;
        d.eval = generate(es);
    } else {
        d.eval = read_jsonl(cfg.eval_path, d.spec.ambiguous_token);
    }
    return d;
}

/// Everything measured for one (model, seed) pair.
struct SeedRun {
    ModelKind model = ModelKind::baseline;
    SeedResult result;
    double final_train_loss = 0.0;
    std::vector<double> loss_trace;
    /// P(FINANCIAL) per neutralized evaluation episode.
    std::vector<double> turn1_p_financial;
    // NRR-lite only: cosine similarity of the two variant vectors and the
    // per-variant argmax on a neutralized episode.
    std::optional<double> variant_cosine;
    std::vector<std::size_t> variant_argmax;
};

struct EvalMetrics {
    SeedResult result;
    std::vector<double> turn1_p_financial;
};

template <typename Model>
EvalMetrics evaluate(const Model& model, const std::vector<Episode>& eval, std::uint64_t seed) {
    if (eval.empty()) throw ConfigError("evaluate: empty evaluation set");
    EvalMetrics m;
    m.result.seed = seed;
    double h_sum = 0.0;
    double g_sum = 0.0;
    std::vector<std::size_t> preds, golds;
    for (const auto& e : eval) {
        const Episode neutral = neutralize(e);
        if constexpr (Model::kind == ModelKind::nrr_lite) {
            const InterpretationSet s = model.forward(neutral);
            h_sum += entropy(s.fused);
            g_sum += entropy(s.gate);
            m.turn1_p_financial.push_back(s.fused[static_cast<std::size_t>(Sense::financial)]);
        } else {
            const Vec p = model.forward(neutral);
            h_sum += entropy(p);
            m.turn1_p_financial.push_back(p[static_cast<std::size_t>(Sense::financial)]);
        }
        preds.push_back(argmax(predict(model, e)));
        golds.push_back(static_cast<std::size_t>(e.label));
    }
    const double n = static_cast<double>(eval.size());
    m.result.turn1_entropy_mean = h_sum / n;
    if constexpr (Model::kind == ModelKind::nrr_lite) m.result.gate_entropy_mean = g_sum / n;
    m.result.context_accuracy = accuracy(preds, golds);
    return m;
}

struct TrainedModel {
    std::optional<BaselineClassifier> baseline;
    std::optional<NrrLiteClassifier> nrr;
    TrainResult train;
};

inline TrainedModel train_model(ModelKind kind, const RunConfig& cfg, const Datasets& data, std::uint64_t seed) {
    RngStream root(seed);
    RngStream init = root.split();
    RngStream order = root.split();
    const Vocab vocab = build_vocab(data.spec, data.train);
    TrainedModel out;
    if (kind == ModelKind::baseline) {
        out.baseline.emplace(vocab, cfg.model_config(), init);
        out.train = train(*out.baseline, data.train, cfg.train_config(), order);
    } else {
        out.nrr.emplace(vocab, cfg.model_config(), init);
        out.train = train(*out.nrr, data.train, cfg.train_config(), order);
    }
    return out;
}

inline SeedRun run_seed(ModelKind kind, const RunConfig& cfg, std::uint64_t seed) {
    const Datasets data = make_datasets(cfg, seed);
    TrainedModel tm;
    try {
        tm = train_model(kind, cfg, data, seed);
    } catch (const NumericError& ex) {
        throw NumericError(to_string(kind) + " seed " + std::to_string(seed) + ": " + ex.what());
    }
    SeedRun run;
    run.model = kind;
    run.final_train_loss = tm.train.final_loss;
    run.loss_trace = tm.train.loss_trace;
    EvalMetrics m = tm.baseline ? evaluate(*tm.baseline, data.eval, seed) : evaluate(*tm.nrr, data.eval, seed);
    run.result = m.result;
    run.turn1_p_financial = std::move(m.turn1_p_financial);
    if (tm.nrr) {
        const auto& table = tm.nrr->table();
        run.variant_cosine = similarity(table.variant(0, 0), table.variant(0, 1));
        const InterpretationSet s = tm.nrr->forward(neutralize(data.eval.front()));
        for (const auto& p : s.per_variant_probs) run.variant_argmax.push_back(argmax(p));
    }
    return run;
}

struct ExperimentReport {
    RunConfig config;
    std::vector<SeedRun> runs;  // ordered by model (config order), then seed
    SweepSummary summary;

    std::vector<SeedResult> results_for(ModelKind m) const {
        std::vector<SeedResult> out;
        for (const auto& r : runs) {
            if (r.model == m) out.push_back(r.result);
        }
        return out;
    }
};

/// Orders the summary so the Welch test compares NRR-lite against the baseline when both ran.
inline SweepSummary summarize_runs(const RunConfig& cfg, const std::vector<SeedRun>& runs) {
    std::vector<ModelKind> order = cfg.models;
    std::stable_sort(order.begin(), order.end(), [](ModelKind a, ModelKind b) {
        return a == ModelKind::nrr_lite && b != ModelKind::nrr_lite;
    });
    std::vector<std::string> names;
    std::vector<std::vector<SeedResult>> per_model;
    for (auto m : order) {
        names.push_back(to_string(m));
        per_model.emplace_back();
        for (const auto& r : runs) {
            if (r.model == m) per_model.back().push_back(r.result);
        }
    }
    if (cfg.seeds.size() < 2) {
        SweepSummary s;
        for (std::size_t i = 0; i < names.size(); ++i) {
            std::vector<double> h, acc, g;
            for (const auto& r : per_model[i]) {
                h.push_back(r.turn1_entropy_mean);
                acc.push_back(r.context_accuracy);
                if (r.gate_entropy_mean) g.push_back(*r.gate_entropy_mean);
            }
            ModelSummary ms{names[i], summarize(h), std::nullopt, summarize(acc)};
            if (!g.empty()) ms.gate_entropy = summarize(g);
            s.models.push_back(ms);
        }
        return s;
    }
    return aggregate(names, per_model);
}

inline ExperimentReport run_sweep(const RunConfig& cfg) {
    cfg.validate();
    struct Job {
        ModelKind model;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (auto m : cfg.models) {
        for (auto s : cfg.seeds) jobs.push_back({m, s});
    }
    ExperimentReport rep;
    rep.config = cfg;
    rep.runs.resize(jobs.size());
    for (std::size_t start = 0; start < jobs.size(); start += cfg.jobs) {
        const std::size_t end = std::min(jobs.size(), start + cfg.jobs);
        std::vector<std::future<SeedRun>> futures;
        for (std::size_t i = start; i < end; ++i) {
            futures.push_back(std::async(cfg.jobs > 1 ? std::launch::async : std::launch::deferred,
                                         [&cfg, job = jobs[i]] { return run_seed(job.model, cfg, job.seed); }));
        }
        for (std::size_t i = start; i < end; ++i) rep.runs[i] = futures[i - start].get();
    }
    rep.summary = summarize_runs(cfg, rep.runs);
    return rep;
}

namespace detail {

inline nlohmann::ordered_json metric_json(const MetricSummary& m) {
    nlohmann::ordered_json j;
    j["mean"] = m.mean;
    j["std"] = m.std;
    return j;
}

inline MetricSummary metric_from_json(const nlohmann::ordered_json& j) {
    return {j.at("mean").get<double>(), j.at("std").get<double>()};
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ExperimentReport& rep) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["config"] = to_json(rep.config);
    auto& results = j["results"] = nlohmann::ordered_json::array();
    for (const auto& r : rep.runs) {
        nlohmann::ordered_json e;
        e["model"] = to_string(r.model);
        e["seed"] = r.result.seed;
        e["turn1_entropy"] = r.result.turn1_entropy_mean;
        e["gate_entropy"] = r.result.gate_entropy_mean ? nlohmann::ordered_json(*r.result.gate_entropy_mean)
                                                       : nlohmann::ordered_json(nullptr);
        e["context_accuracy"] = r.result.context_accuracy;
        e["final_train_loss"] = r.final_train_loss;
        e["loss_trace"] = r.loss_trace;
        e["variant_cosine"] =
            r.variant_cosine ? nlohmann::ordered_json(*r.variant_cosine) : nlohmann::ordered_json(nullptr);
        e["variant_argmax"] = r.variant_argmax;
        e["turn1_p_financial"] = r.turn1_p_financial;
        results.push_back(e);
    }
    auto& summary = j["summary"];
    summary["models"] = nlohmann::ordered_json::array();
    for (const auto& m : rep.summary.models) {
        nlohmann::ordered_json e;
        e["model"] = m.model;
        e["turn1_entropy"] = detail::metric_json(m.turn1_entropy);
        e["gate_entropy"] = m.gate_entropy ? detail::metric_json(*m.gate_entropy) : nlohmann::ordered_json(nullptr);
        e["context_accuracy"] = detail::metric_json(m.context_accuracy);
        summary["models"].push_back(e);
    }
    if (rep.summary.test) {
        summary["welch"] = {{"t", rep.summary.test->t}, {"df", rep.summary.test->df}, {"p", rep.summary.test->p}};
    } else {
        summary["welch"] = nullptr;
    }
    return j;
}

inline ExperimentReport report_from_json(const nlohmann::ordered_json& j) {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
        throw ParseError("report: unsupported schema_version " + j.at("schema_version").dump());
    }
    ExperimentReport rep;
    const auto& c = j.at("config");
    apply_json(rep.config, nlohmann::json(c));
    for (const auto& e : j.at("results")) {
        SeedRun r;
        r.model = parse_model_kind(e.at("model").get<std::string>());
        r.result.seed = e.at("seed").get<std::uint64_t>();
        r.result.turn1_entropy_mean = e.at("turn1_entropy").get<double>();
        if (!e.at("gate_entropy").is_null()) r.result.gate_entropy_mean = e.at("gate_entropy").get<double>();
        r.result.context_accuracy = e.at("context_accuracy").get<double>();
        r.final_train_loss = e.at("final_train_loss").get<double>();
        r.loss_trace = e.at("loss_trace").get<std::vector<double>>();
        if (!e.at("variant_cosine").is_null()) r.variant_cosine = e.at("variant_cosine").get<double>();
        r.variant_argmax = e.at("variant_argmax").get<std::vector<std::size_t>>();
        r.turn1_p_financial = e.at("turn1_p_financial").get<std::vector<double>>();
        rep.runs.push_back(std::move(r));
    }
    const auto& s = j.at("summary");
    for (const auto& e : s.at("models")) {
        ModelSummary m;
        m.model = e.at("model").get<std::string>();
        m.turn1_entropy = detail::metric_from_json(e.at("turn1_entropy"));
        if (!e.at("gate_entropy").is_null()) m.gate_entropy = detail::metric_from_json(e.at("gate_entropy"));
        m.context_accuracy = detail::metric_from_json(e.at("context_accuracy"));
        rep.summary.models.push_back(m);
    }
    if (!s.at("welch").is_null()) {
        const auto& w = s.at("welch");
        rep.summary.test = WelchResult{w.at("t").get<double>(), w.at("df").get<double>(), w.at("p").get<double>()};
    }
    return rep;
}

inline std::string format_double(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

/// Per-seed rows with the fixed Table 1 column header.
inline std::string table_csv(const ExperimentReport& rep) {
    std::ostringstream out;
    out << kTableCsvHeader << '\n';
    for (const auto& r : rep.runs) {
        out << to_string(r.model) << ',' << r.result.seed << ',' << format_double(r.result.turn1_entropy_mean) << ','
            << (r.result.gate_entropy_mean ? format_double(*r.result.gate_entropy_mean) : "") << ','
            << format_double(r.result.context_accuracy) << '\n';
    }
    return out.str();
}

/// Left panel: mean ± std Turn 1 entropy per model, with the ln 2 ceiling.
inline std::string entropy_bars_csv(const ExperimentReport& rep) {
    std::ostringstream out;
    out << "model,turn1_entropy_mean,turn1_entropy_std,max_entropy\n";
    for (const auto& m : rep.summary.models) {
        out << m.model << ',' << format_double(m.turn1_entropy.mean) << ',' << format_double(m.turn1_entropy.std) << ','
            << format_double(kLn2) << '\n';
    }
    return out.str();
}

/// Center panel: P(FINANCIAL) for every neutralized evaluation episode.
inline std::string p_financial_csv(const ExperimentReport& rep) {
    std::ostringstream out;
    out << "model,seed,episode,p_financial\n";
    for (const auto& r : rep.runs) {
        for (std::size_t i = 0; i < r.turn1_p_financial.size(); ++i) {
            out << to_string(r.model) << ',' << r.result.seed << ',' << i << ','
                << format_double(r.turn1_p_financial[i], 9) << '\n';
        }
    }
    return out.str();
}

/// Right panel: context accuracy per model.
inline std::string accuracy_bars_csv(const ExperimentReport& rep) {
    std::ostringstream out;
    out << "model,context_accuracy_mean,context_accuracy_std\n";
    for (const auto& m : rep.summary.models) {
        out << m.model << ',' << format_double(m.context_accuracy.mean) << ',' << format_double(m.context_accuracy.std)
            << '\n';
    }
    return out.str();
}

inline void print_table(std::ostream& os, const ExperimentReport& rep) {
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %-22s %-16s %-16s\n", "Model", "Turn 1 Entropy H", "Gate Entropy",
                  "Context Accuracy");
    os << line;
    for (const auto& m : rep.summary.models) {
        const std::string h = format_double(m.turn1_entropy.mean, 3) + " +/- " + format_double(m.turn1_entropy.std, 3);
        const std::string g = m.gate_entropy ? format_double(m.gate_entropy->mean, 3) : "---";
        const std::string a = format_double(100.0 * m.context_accuracy.mean, 1) + "%";
        std::snprintf(line, sizeof line, "%-10s %-22s %-16s %-16s\n", m.model.c_str(), h.c_str(), g.c_str(), a.c_str());
        os << line;
    }
    std::snprintf(line, sizeof line, "%-10s %-22s %-16s %-16s\n", "Maximum H", format_double(kLn2, 3).c_str(),
                  format_double(kLn2, 3).c_str(), "---");
    os << line;
    if (rep.summary.test) {
        os << "Welch t = " << format_double(rep.summary.test->t, 2) << ", df = " << format_double(rep.summary.test->df, 2)
           << ", p = " << rep.summary.test->p << '\n';
    }
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw Error("write to '" + path + "' failed");
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string report_bytes(const ExperimentReport& rep) { return to_json(rep).dump(2) + "\n"; }

}  // namespace nrr
