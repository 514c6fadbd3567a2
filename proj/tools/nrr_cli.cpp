// nrr: data generation, training, Turn 1 evaluation, seed sweeps and demos.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nrr/nrr.hpp"

namespace fs = std::filesystem;
using namespace nrr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t default_seed() {
    if (const char* env = std::getenv("NRR_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw UsageError(std::string("NRR_SEED is not an unsigned integer: ") + env);
        }
    }
    return 0;
}

/// "0..4", "1,3,7" or a single value.
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    try {
        if (const auto dots = text.find(".."); dots != std::string::npos) {
            const auto lo = std::stoull(text.substr(0, dots));
            const auto hi = std::stoull(text.substr(dots + 2));
            if (hi < lo) throw UsageError("seed range '" + text + "' is empty");
            for (auto s = lo; s <= hi; ++s) out.push_back(s);
            return out;
        }
        std::stringstream ss(text);
        for (std::string part; std::getline(ss, part, ',');) out.push_back(std::stoull(part));
    } catch (const std::invalid_argument&) {
        throw UsageError("cannot parse seeds '" + text + "'");
    } catch (const std::out_of_range&) {
        throw UsageError("seed out of range in '" + text + "'");
    }
    if (out.empty()) throw UsageError("no seeds given");
    return out;
}

std::vector<ModelKind> parse_models(const std::string& text) {
    std::vector<ModelKind> out;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) out.push_back(parse_model_kind(part));
    return out;
}

/// Training flags shared by train and sweep. Only flags the user actually
/// passed override the config file.
struct TrainingFlags {
    std::string config_path;
    std::size_t epochs = 0, n_train = 0, n_eval = 0, embed_dim = 0, hidden = 0, k = 0, batch = 0;
    double lr = 0, clip = 0, balance = 0;
    std::string optimizer, activation, train_path, eval_path;
    std::vector<CLI::Option*> opts;

    void add(CLI::App& app) {
        app.add_option("--config", config_path, "JSON run config (flags take precedence)")->check(CLI::ExistingFile);
        opts = {
            app.add_option("--epochs", epochs, "Training epochs (default 100)"),
            app.add_option("--n-train", n_train, "Training episodes when generated (default 1000)"),
            app.add_option("--n-eval", n_eval, "Evaluation episodes when generated (default 200)"),
            app.add_option("--balance", balance, "Fraction FINANCIAL (default 0.5)"),
            app.add_option("--embed-dim", embed_dim, "Embedding width (default 32)"),
            app.add_option("--hidden", hidden, "Classifier hidden width (default 32)"),
            app.add_option("--k", k, "Variants per ambiguous token (default 2)"),
            app.add_option("--batch-size", batch, "Episodes per optimizer step (default 1)"),
            app.add_option("--lr", lr, "Learning rate (default 0.01)"),
            app.add_option("--clip-norm", clip, "Global gradient-norm clip (default 5)"),
            app.add_option("--optimizer", optimizer, "adam or sgd (default adam)"),
            app.add_option("--activation", activation, "Hidden nonlinearity: sigmoid, tanh or relu (default sigmoid)"),
            app.add_option("--train", train_path, "Training JSONL instead of generated data"),
            app.add_option("--eval", eval_path, "Evaluation JSONL instead of generated data"),
        };
    }

    bool given(std::size_t i) const { return opts[i]->count() > 0; }

    void apply(RunConfig& cfg) const {
        if (!config_path.empty()) {
            try {
                apply_json(cfg, nlohmann::json::parse(read_text(config_path)));
            } catch (const nlohmann::json::exception& ex) {
                throw UsageError("config '" + config_path + "': " + ex.what());
            }
        }
        if (given(0)) cfg.epochs = epochs;
        if (given(1)) cfg.n_train = n_train;
        if (given(2)) cfg.n_eval = n_eval;
        if (given(3)) cfg.balance = balance;
        if (given(4)) cfg.embed_dim = embed_dim;
        if (given(5)) cfg.hidden = hidden;
        if (given(6)) cfg.k = k;
        if (given(7)) cfg.batch_size = batch;
        if (given(8)) cfg.optimizer.lr = lr;
        if (given(9)) cfg.optimizer.clip_norm = clip;
        if (given(10)) cfg.optimizer.kind = parse_optimizer_kind(optimizer);
        if (given(11)) cfg.activation = parse_activation(activation);
        if (given(12)) cfg.train_path = train_path;
        if (given(13)) cfg.eval_path = eval_path;
    }
};

void ensure_dir(const std::string& dir) {
    if (!dir.empty()) fs::create_directories(dir);
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

void print_counts(const std::string& name, const std::vector<Episode>& eps) {
    std::size_t fin = 0;
    for (const auto& e : eps) fin += e.label == Sense::financial;
    std::cout << name << ": " << eps.size() << " episodes, FINANCIAL " << fin << ", RIVER " << eps.size() - fin << '\n';
}

// gen-data ------------------------------------------------------------------

struct GenDataArgs {
    std::string out_dir = "data";
    std::size_t n = 1000;
    std::size_t n_eval = 200;
    double balance = 0.5;
    std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenDataArgs& a) {
    DatasetSpec spec;
    spec.n = a.n;
    spec.balance = a.balance;
    spec.seed = a.seed.value_or(default_seed());
    DatasetSpec eval_spec = spec;
    eval_spec.n = a.n_eval;
    eval_spec.seed = spec.seed + kEvalSeedOffset;
    try {
        spec.validate();
        eval_spec.validate();
    } catch (const ConfigError& ex) {
        throw UsageError(ex.what());
    }
    ensure_dir(a.out_dir);
    const auto train = generate(spec);
    const auto eval = generate(eval_spec);
    write_jsonl(train, join(a.out_dir, "train.jsonl"));
    write_jsonl(eval, join(a.out_dir, "eval.jsonl"));
    print_counts(join(a.out_dir, "train.jsonl"), train);
    print_counts(join(a.out_dir, "eval.jsonl"), eval);
    return kExitOk;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
    TrainingFlags flags;
    std::string model = "nrr-lite";
    std::optional<std::uint64_t> seed;
    std::string out = "checkpoint.json";
};

int cmd_train(const TrainArgs& a) {
    RunConfig cfg;
    a.flags.apply(cfg);
    const auto kind = parse_model_kind(a.model);
    const auto seed = a.seed.value_or(default_seed());
    cfg.validate();
    const Datasets data = make_datasets(cfg, seed);
    const TrainedModel tm = train_model(kind, cfg, data, seed);
    const auto& trace = tm.train.loss_trace;
    std::cout << "model " << to_string(kind) << ", seed " << seed << ", " << data.train.size() << " episodes, "
              << trace.size() << " epochs\n";
    std::cout << "epoch 1 loss " << trace.front() << ", epoch " << trace.size() << " loss " << trace.back()
              << ", final loss " << tm.train.final_loss << '\n';
    const auto j = tm.baseline ? tm.baseline->to_json() : tm.nrr->to_json();
    write_text(a.out, j.dump(2) + "\n");
    std::cout << "checkpoint written to " << a.out << '\n';
    return kExitOk;
}

// eval-turn1 ----------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string eval_path;
    std::optional<std::uint64_t> seed;
    std::size_t n_eval = 200;
    std::string probs_csv;
};

int cmd_eval_turn1(const EvalArgs& a) {
    const auto j = nlohmann::json::parse(read_text(a.checkpoint));
    const auto seed = a.seed.value_or(default_seed());
    std::vector<Episode> eval;
    if (!a.eval_path.empty()) {
        eval = read_jsonl(a.eval_path);
    } else {
        DatasetSpec spec;
        spec.n = a.n_eval;
        spec.seed = seed + kEvalSeedOffset;
        eval = generate(spec);
    }
    const auto kind = parse_model_kind(j.at("model").get<std::string>());
    EvalMetrics m = kind == ModelKind::baseline ? evaluate(BaselineClassifier::from_json(j), eval, seed)
                                                : evaluate(NrrLiteClassifier::from_json(j), eval, seed);
    std::cout << "model " << to_string(kind) << ", " << eval.size() << " episodes\n";
    std::cout << "turn1_entropy " << format_double(m.result.turn1_entropy_mean) << '\n';
    std::cout << "gate_entropy "
              << (m.result.gate_entropy_mean ? format_double(*m.result.gate_entropy_mean) : std::string("---")) << '\n';
    std::cout << "context_accuracy " << format_double(m.result.context_accuracy) << '\n';
    if (!a.probs_csv.empty()) {
        std::ostringstream out;
        out << "episode,p_financial\n";
        for (std::size_t i = 0; i < m.turn1_p_financial.size(); ++i) {
            out << i << ',' << format_double(m.turn1_p_financial[i], 9) << '\n';
        }
        write_text(a.probs_csv, out.str());
    }
    return kExitOk;
}

// sweep / report --------------------------------------------------------------

void write_outputs(const ExperimentReport& rep, const std::string& out_dir) {
    ensure_dir(out_dir);
    write_text(join(out_dir, "report.json"), report_bytes(rep));
    write_text(join(out_dir, "table.csv"), table_csv(rep));
    write_text(join(out_dir, "fig2_entropy.csv"), entropy_bars_csv(rep));
    write_text(join(out_dir, "fig2_p_financial.csv"), p_financial_csv(rep));
    write_text(join(out_dir, "fig2_accuracy.csv"), accuracy_bars_csv(rep));
}

struct SweepArgs {
    TrainingFlags flags;
    std::string models;
    std::string seeds;
    std::string out_dir = "results";
    std::size_t jobs = 1;
};

int cmd_sweep(const SweepArgs& a) {
    RunConfig cfg;
    if (std::getenv("NRR_SEED")) {
        const auto base = default_seed();
        cfg.seeds = {base, base + 1, base + 2, base + 3, base + 4};
    }
    a.flags.apply(cfg);
    if (!a.models.empty()) cfg.models = parse_models(a.models);
    if (!a.seeds.empty()) cfg.seeds = parse_seeds(a.seeds);
    cfg.jobs = a.jobs;
    try {
        cfg.validate();
    } catch (const ConfigError& ex) {
        throw UsageError(ex.what());
    }
    const ExperimentReport rep = run_sweep(cfg);
    write_outputs(rep, a.out_dir);
    print_table(std::cout, rep);
    std::cout << "wrote " << join(a.out_dir, "report.json") << " and CSV tables\n";
    return kExitOk;
}

struct ReportArgs {
    std::string report;
    std::string out_dir;
};

int cmd_report(const ReportArgs& a) {
    const auto rep = report_from_json(nlohmann::ordered_json::parse(read_text(a.report)));
    print_table(std::cout, rep);
    std::cout << table_csv(rep);
    if (!a.out_dir.empty()) write_outputs(rep, a.out_dir);
    return kExitOk;
}

// demo ------------------------------------------------------------------------

std::string matrix_csv(const Mat& m) {
    std::ostringstream out;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
        out << '\n';
    }
    return out.str();
}

std::string row_sums(const Mat& m) {
    std::ostringstream out;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double s = 0.0;
        for (double v : m.row(r)) s += v;
        out << (r ? "," : "") << format_double(s);
    }
    return out.str();
}

int demo_nca() {
    constexpr std::size_t d = 4;
    for (auto mode : {AttentionMode::sigmoid, AttentionMode::softmax}) {
        AttentionConfig cfg{d, mode, 5.0, 0.0};
        std::cout << "# mode " << to_string(mode) << "\n";

        // Queries read coordinates 0-1, keys 2-3: every score is 0.
        NonCollapsingAttention split(cfg);
        split.wq().value = Mat{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}};
        split.wk().value = Mat{{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
        const InterpretationSeq seq(Mat{{1, 0, 1, 0}, {0, 1, 0, 1}, {1, 1, 0, 0}, {0, 0, 1, 1}}, 2);
        const auto r1 = split.attend(seq);
        std::cout << "# equal scores (orthogonal q, k): alpha\n" << matrix_csv(r1.weights);
        std::cout << "# row sums: " << row_sums(r1.weights) << "\n";

        // Two identical keys aligned with the query, large score.
        NonCollapsingAttention ident(cfg);
        const Mat q{{6, 0, 0, 0}};
        const Mat keys{{6, 0, 0, 0}, {6, 0, 0, 0}};
        const auto r2 = ident.attend(q, keys);
        std::cout << "# two identical strong keys: alpha\n" << matrix_csv(r2.weights);
        std::cout << "# row sums: " << row_sums(r2.weights) << "\n";
    }
    return kExitOk;
}

int demo_cit(double tau) {
    // Turn encodings built from sense indicators: financial cues point along
    // axis 0, river cues along axis 1, so a sense change is an orthogonal shift.
    const DatasetSpec spec;
    auto encode_turn = [&](const std::string& text) {
        Vec v{0.0, 0.0};
        for (const auto& w : tokenize(text)) {
            for (std::size_t c = 0; c < kNumSenses; ++c) {
                for (const auto& cue : spec.cue_lexicons[c]) v[c] += (w == cue);
            }
        }
        return v;
    };
    const std::vector<std::string> script{
        "the bank is solid , an investor is nearby",
        "the teller is here",
        "there are ducks here",
        "the water is calm",
    };
    ContextTracker tracker(tau);
    IdentityLedger ledger;
    std::cout << "tau_context " << format_double(tau, 3) << '\n';
    std::optional<ContextId> prev;
    for (std::size_t t = 0; t < script.size(); ++t) {
        const Vec h = encode_turn(script[t]);
        const ContextId id = tracker.observe(h);
        ledger.record("bank", id, h);
        std::cout << "turn " << t << ": \"" << script[t] << "\" -> context " << id << '\n';
        if (prev && *prev != id) std::cout << "context " << *prev << " → context " << id << '\n';
        prev = id;
    }
    std::cout << "identity ledger: " << ledger.to_json().dump() << '\n';
    if (ledger.contains("bank", 0) && ledger.contains("bank", 1)) {
        std::cout << "similarity(I(bank,0), I(bank,1)) = "
                  << format_double(similarity(ledger.lookup("bank", 0).vector, ledger.lookup("bank", 1).vector), 4)
                  << '\n';
    }
    return kExitOk;
}

int demo_resolve(const ResolutionPolicy& base, const std::vector<double>& thetas) {
    const std::vector<Vec> gates{{0.5, 0.5}, {0.7, 0.3}, {0.95, 0.05}};
    const std::vector<double> stable{0.02, 0.01};
    const std::vector<double> drifting{0.02, 0.8};
    std::cout << "mode,theta,gate,drift,outcome\n";
    auto row = [&](const ResolutionPolicy& p, const Vec& g, const std::vector<double>& drift, const char* dname) {
        const auto o = resolve(g, p, drift);
        std::cout << to_string(p.mode) << ',' << format_double(p.dominance_theta, 2) << ",[" << format_double(g[0], 2)
                  << ' ' << format_double(g[1], 2) << "]," << dname << ',' << describe(o) << '\n';
    };
    for (double theta : thetas) {
        ResolutionPolicy p = base;
        p.mode = ResolutionPolicy::Mode::generate;
        p.dominance_theta = theta;
        for (const auto& g : gates) {
            row(p, g, stable, "stable");
            row(p, g, drifting, "drifting");
        }
    }
    for (auto mode : {ResolutionPolicy::Mode::classify, ResolutionPolicy::Mode::defer}) {
        ResolutionPolicy p = base;
        p.mode = mode;
        for (const auto& g : gates) row(p, g, stable, "stable");
    }
    return kExitOk;
}

struct DemoArgs {
    std::string name;
    double tau = 0.5;
    std::vector<double> thetas;
    std::string mode = "generate";
    std::size_t window = 2;
    double epsilon = 0.1;
    std::string config_path;
    std::vector<CLI::Option*> policy_opts;
};

int cmd_demo(const DemoArgs& a) {
    if (a.name == "nca") return demo_nca();
    if (a.name == "cit") return demo_cit(a.tau);
    if (a.name == "resolve") {
        ResolutionPolicy p;
        if (!a.config_path.empty()) {
            const auto j = nlohmann::json::parse(read_text(a.config_path));
            if (j.contains("mode")) p.mode = parse_resolution_mode(j["mode"].get<std::string>());
            if (j.contains("theta")) p.dominance_theta = j["theta"].get<double>();
            if (j.contains("window")) p.stability_window = j["window"].get<std::size_t>();
            if (j.contains("epsilon")) p.drift_epsilon = j["epsilon"].get<double>();
        }
        if (a.policy_opts[0]->count()) p.mode = parse_resolution_mode(a.mode);
        if (a.policy_opts[1]->count()) p.stability_window = a.window;
        if (a.policy_opts[2]->count()) p.drift_epsilon = a.epsilon;
        std::vector<double> thetas = a.thetas;
        if (thetas.empty()) thetas = {0.6, p.dominance_theta, 0.99};
        if (p.mode != ResolutionPolicy::Mode::generate) {
            for (const auto& g : std::vector<Vec>{{0.5, 0.5}, {0.95, 0.05}}) {
                std::cout << to_string(p.mode) << ": " << describe(resolve(g, p, std::vector<double>{})) << '\n';
            }
            return kExitOk;
        }
        return demo_resolve(p, thetas);
    }
    throw UsageError("unknown demo '" + a.name + "' (expected nca, cit or resolve)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ambiguity-preserving classifiers: data, training, Turn 1 entropy sweeps and demos"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Write train.jsonl and eval.jsonl");
    gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory");
    gen_cmd->add_option("--n", gen.n, "Training episodes");
    gen_cmd->add_option("--n-eval", gen.n_eval, "Evaluation episodes");
    gen_cmd->add_option("--balance", gen.balance, "Fraction FINANCIAL");
    gen_cmd->add_option("--seed", gen.seed, "Seed (default $NRR_SEED or 0)");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train one model and write a checkpoint");
    tr.flags.add(*train_cmd);
    train_cmd->add_option("--model", tr.model, "baseline or nrr-lite");
    train_cmd->add_option("--seed", tr.seed, "Seed (default $NRR_SEED or 0)");
    train_cmd->add_option("--out", tr.out, "Checkpoint path");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval-turn1", "Turn 1 entropy, gate entropy and context accuracy of a checkpoint");
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--eval", ev.eval_path, "Evaluation JSONL (default: generated from --seed)");
    eval_cmd->add_option("--seed", ev.seed, "Seed of the generated evaluation set");
    eval_cmd->add_option("--n-eval", ev.n_eval, "Generated evaluation episodes");
    eval_cmd->add_option("--probs-csv", ev.probs_csv, "Write per-episode Turn 1 P(FINANCIAL)");

    SweepArgs sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate every model for every seed");
    sw.flags.add(*sweep_cmd);
    sweep_cmd->add_option("--models", sw.models, "Comma-separated models (default baseline,nrr-lite)");
    sweep_cmd->add_option("--seeds", sw.seeds, "Seed range a..b or list (default 0..4)");
    sweep_cmd->add_option("--out-dir", sw.out_dir, "Directory for report.json and CSV files");
    sweep_cmd->add_option("--jobs", sw.jobs, "Concurrent runs");

    ReportArgs rp;
    auto* report_cmd = app.add_subcommand("report", "Print and re-emit a saved report");
    report_cmd->add_option("--report", rp.report, "report.json")->required()->check(CLI::ExistingFile);
    report_cmd->add_option("--out-dir", rp.out_dir, "Re-emit report.json and CSV files here");

    DemoArgs dm;
    auto* demo_cmd = app.add_subcommand("demo", "Attention, context tracking or resolution demo");
    demo_cmd->add_option("name", dm.name, "nca, cit or resolve")->required();
    demo_cmd->add_option("--tau", dm.tau, "Context threshold (cit)");
    demo_cmd->add_option("--theta", dm.thetas, "Dominance thresholds (resolve)");
    dm.policy_opts = {
        demo_cmd->add_option("--mode", dm.mode, "classify, generate or defer (resolve)"),
        demo_cmd->add_option("--window", dm.window, "Stability window (resolve)"),
        demo_cmd->add_option("--epsilon", dm.epsilon, "Drift epsilon (resolve)"),
    };
    demo_cmd->add_option("--config", dm.config_path, "Policy JSON {mode, theta, window, epsilon}")
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*gen_cmd) return cmd_gen_data(gen);
        if (*train_cmd) return cmd_train(tr);
        if (*eval_cmd) return cmd_eval_turn1(ev);
        if (*sweep_cmd) return cmd_sweep(sw);
        if (*report_cmd) return cmd_report(rp);
        if (*demo_cmd) return cmd_demo(dm);
    } catch (const UsageError& ex) {
        std::cerr << "usage error: " << ex.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& ex) {
        std::cerr << "usage error: " << ex.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
