// Acceptance suite. Runs the full five-seed sweep and the property checks,
// printing one [PASS]/[FAIL] line per criterion. Exit status is the number of
// failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nrr/nrr.hpp"
#include "oracles.hpp"

using namespace nrr;

namespace {

struct Verdict {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Verdict& v) {
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << "AC" << id << " " << title << ": " << v.detail << std::endl;
    if (!v.pass) ++failures;
}

std::string fmt(double v, int precision = 6) { return format_double(v, precision); }

const ModelSummary* find_model(const ExperimentReport& rep, const std::string& name) {
    for (const auto& m : rep.summary.models) {
        if (m.model == name) return &m;
    }
    return nullptr;
}

// The upper bound of the NRR-lite band is the maximum entropy of a two-class
// output, ln 2. Mean entropies at that ceiling can exceed its four-digit
// rounding 0.6931 by floating-point noise only.
constexpr double kEntropyCeiling = kLn2 + 1e-9;

Verdict table_reproduction(const ExperimentReport& rep) {
    const auto* nrr = find_model(rep, "nrr-lite");
    const auto* base = find_model(rep, "baseline");
    if (!nrr || !base || !nrr->gate_entropy) return {false, "sweep summary is missing a model"};
    const double h_nrr = nrr->turn1_entropy.mean;
    const double h_base = base->turn1_entropy.mean;
    const double g = nrr->gate_entropy->mean;
    bool gate_ok = std::abs(g - 0.6931) <= 0.001;
    for (const auto& r : rep.runs) {
        if (r.result.gate_entropy_mean) gate_ok = gate_ok && std::abs(*r.result.gate_entropy_mean - 0.6931) <= 0.001;
    }
    const bool pass = h_nrr >= 0.55 && h_nrr <= kEntropyCeiling && h_base <= 0.30 && gate_ok &&
                      nrr->context_accuracy.mean >= 0.99 && base->context_accuracy.mean >= 0.99;
    std::ostringstream d;
    d << "nrr-lite H=" << fmt(h_nrr) << "±" << fmt(nrr->turn1_entropy.std) << " (want [0.55, ln 2])"
      << ", baseline H=" << fmt(h_base) << "±" << fmt(base->turn1_entropy.std) << " (want <= 0.30)"
      << ", gate H=" << fmt(g) << " (want 0.6931±0.001)"
      << ", accuracy nrr-lite=" << fmt(nrr->context_accuracy.mean, 4) << " baseline=" << fmt(base->context_accuracy.mean, 4)
      << " (want >= 0.99)";
    return {pass, d.str()};
}

Verdict significance(const ExperimentReport& rep) {
    if (!rep.summary.test) return {false, "no Welch test in summary"};
    const auto& w = *rep.summary.test;
    std::ostringstream d;
    d << "t=" << fmt(w.t, 3) << " df=" << fmt(w.df, 3) << " p=" << w.p << " (want t >= 6, p < 0.01)";
    return {w.t >= 6.0 && w.p < 0.01, d.str()};
}

// Full-size models at their training initialization. The check uses a step
// of 1e-3: with the default 1e-5 the worst coordinates (gradients near 1e-9)
// are dominated by rounding in the loss difference, and the measured error
// shrinks in proportion to the step, so the larger step measures the analytic
// gradient rather than the rounding. The 1e-5 figure is printed for reference.
constexpr double kGradStep = 1e-3;

template <typename Model>
double model_grad_error(std::uint64_t seed, const Episode& e, double step) {
    RngStream init(seed);
    Model m(Vocab::from_spec(DatasetSpec{}), ModelConfig{}, init);
    const EncodedEpisode enc = encode(m.vocab(), e);
    for (Param* p : m.params()) p->zero_grad();
    m.loss_and_backward(enc);
    auto frozen = [&](const Param& p, std::size_t i) { return m.frozen(p, i); };
    return finite_diff_check([&] { return m.loss(enc); }, m.params(), step, 0, nullptr, frozen).max_rel_error;
}

double attention_grad_error(RngStream& rng, int trial) {
    AttentionConfig cfg{4, trial % 2 ? AttentionMode::sigmoid : AttentionMode::softmax, 5.0, 0.1 * (trial % 3)};
    NonCollapsingAttention a(cfg, rng);
    Param x("x", 6, 4);
    Mat target(6, 4);
    for (auto& v : x.value.flat()) v = rng.uniform(-1, 1);
    for (auto& v : target.flat()) v = rng.uniform(-1, 1);
    auto loss_of = [&](const AttentionResult& r) {
        double l = a.penalty(r);
        for (std::size_t i = 0; i < r.out.size(); ++i) l += 0.5 * std::pow(r.out.flat()[i] - target.flat()[i], 2);
        return l;
    };
    NonCollapsingAttention::Cache cache;
    const auto r = a.attend(InterpretationSeq(x.value, 2), &cache);
    Mat dout(6, 4);
    for (std::size_t i = 0; i < dout.size(); ++i) dout.flat()[i] = r.out.flat()[i] - target.flat()[i];
    for (Param* p : a.params()) p->zero_grad();
    const auto g = a.backward(cache, dout);
    for (std::size_t i = 0; i < x.size(); ++i) x.grad.flat()[i] = g.queries.flat()[i] + g.keys.flat()[i];
    auto params = a.params();
    params.push_back(&x);
    return finite_diff_check([&] { return loss_of(a.attend(InterpretationSeq(x.value, 2))); }, params).max_rel_error;
}

Verdict gradient_fidelity() {
    DatasetSpec spec;
    spec.n = 20;
    spec.seed = 404;
    const auto eps = generate(spec);
    RngStream rng(406);
    double worst_base = 0, worst_nrr = 0, worst_nca = 0, fine_base = 0, fine_nrr = 0;
    constexpr int kTrials = 20;
    for (int t = 0; t < kTrials; ++t) {
        const Episode e = t % 2 ? eps[t] : neutralize(eps[t]);
        worst_base = std::max(worst_base, model_grad_error<BaselineClassifier>(1000 + t, e, kGradStep));
        worst_nrr = std::max(worst_nrr, model_grad_error<NrrLiteClassifier>(2000 + t, e, kGradStep));
        fine_base = std::max(fine_base, model_grad_error<BaselineClassifier>(1000 + t, e, 1e-5));
        fine_nrr = std::max(fine_nrr, model_grad_error<NrrLiteClassifier>(2000 + t, e, 1e-5));
        worst_nca = std::max(worst_nca, attention_grad_error(rng, t));
    }
    std::cout << "       info: with step 1e-5 the model checks give baseline=" << fine_base << " nrr-lite=" << fine_nrr
              << " (rounding-limited)" << std::endl;
    std::ostringstream d;
    d << kTrials << " instances each, every coordinate, step " << kGradStep << "; max relative error baseline="
      << worst_base << " nrr-lite=" << worst_nrr << " attention=" << worst_nca << " (want < 1e-4)";
    return {worst_base < 1e-4 && worst_nrr < 1e-4 && worst_nca < 1e-4, d.str()};
}

Verdict entropy_oracle() {
    RngStream r(77);
    double worst = 0;
    int checked = 0;
    while (checked < 1000) {
        std::vector<double> p(2 + r.below(20));
        double s = 0;
        for (auto& v : p) s += (v = r.uniform() < 0.1 ? 0.0 : -std::log(1.0 - r.uniform()));
        if (s == 0) continue;
        for (auto& v : p) v /= s;
        worst = std::max(worst, std::abs(entropy(p) - static_cast<double>(oracle::entropy(p))));
        ++checked;
    }
    const double half = std::abs(entropy(Vec{0.5, 0.5}) - std::log(2.0));
    std::ostringstream d;
    d << checked << " distributions, max |error|=" << worst << " (want <= 1e-10); |H([.5,.5]) - ln 2|=" << half
      << " (want <= 1e-12)";
    return {worst <= 1e-10 && half <= 1e-12, d.str()};
}

Verdict non_collapse_witness() {
    const Mat q{{6, 0, 0, 0}};
    const Mat keys{{6, 0, 0, 0}, {6, 0, 0, 0}};
    const auto sig = NonCollapsingAttention(AttentionConfig{4, AttentionMode::sigmoid}).attend(q, keys);
    const auto soft = NonCollapsingAttention(AttentionConfig{4, AttentionMode::softmax}).attend(q, keys);
    const double s1 = sig.weights(0, 0) + sig.weights(0, 1);
    const double s2 = soft.weights(0, 0) + soft.weights(0, 1);
    std::ostringstream d;
    d << "sigmoid row sum=" << fmt(s1, 9) << " (want > 1.5), softmax row sum=" << fmt(s2, 15) << " (want 1 ± 1e-12)";
    return {s1 > 1.5 && std::abs(s2 - 1.0) <= 1e-12, d.str()};
}

Verdict cit_properties() {
    ContextTracker constant(0.5);
    const auto ids_c = constant.observe_all({Vec{0.3, 0.7, 1}, Vec{0.3, 0.7, 1}, Vec{0.3, 0.7, 1}, Vec{0.3, 0.7, 1}});
    const bool single = ids_c == std::vector<ContextId>(4, 0);

    ContextTracker shift(0.5);
    const auto ids_s = shift.observe_all({Vec{1, 0}, Vec{1, 0}, Vec{0, 1}, Vec{0, 1}});
    const bool one_increment = ids_s == std::vector<ContextId>{0, 0, 1, 1};

    RngStream r(606);
    int violations = 0;
    constexpr int kSequences = 100;
    for (int s = 0; s < kSequences; ++s) {
        std::vector<Vec> seq;
        Vec cur{r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1)};
        for (int t = 0; t < 25; ++t) {
            for (auto& v : cur) v += r.uniform(-0.8, 0.8);
            if (norm(cur) == 0.0) cur[0] = 1.0;
            seq.push_back(cur);
        }
        const double lo = r.uniform(0, 1.5);
        const double hi = lo + r.uniform(0, 0.5);
        ContextTracker a(lo), b(hi);
        if (b.observe_all(seq).back() > a.observe_all(seq).back()) ++violations;
    }
    std::ostringstream d;
    d << "constant -> single id: " << (single ? "yes" : "no") << ", orthogonal shift at tau=0.5 -> one increment: "
      << (one_increment ? "yes" : "no") << ", tau-monotonicity violations: " << violations << "/" << kSequences;
    return {single && one_increment && violations == 0, d.str()};
}

Verdict non_identity(const ExperimentReport& rep) {
    bool pass = true;
    int seen = 0;
    std::ostringstream d;
    for (const auto& r : rep.runs) {
        if (r.model != ModelKind::nrr_lite) continue;
        ++seen;
        const bool distinct = r.variant_cosine && *r.variant_cosine < 0.99;
        const bool disagree = r.variant_argmax.size() == 2 && r.variant_argmax[0] != r.variant_argmax[1];
        pass = pass && distinct && disagree;
        d << "seed " << r.result.seed << ": cos=" << (r.variant_cosine ? fmt(*r.variant_cosine, 4) : "n/a")
          << " argmax=" << (r.variant_argmax.size() == 2 ? std::to_string(r.variant_argmax[0]) + "/" +
                                                            std::to_string(r.variant_argmax[1])
                                                      : "n/a")
          << "; ";
    }
    d << "(want cos < 0.99 and differing argmax for every seed)";
    return {pass && seen > 0, d.str()};
}

Verdict determinism(const std::string& first_bytes, const RunConfig& cfg) {
    const std::string second = report_bytes(run_sweep(cfg));
    std::ostringstream d;
    d << "report.json " << first_bytes.size() << " vs " << second.size() << " bytes, fnv1a "
      << std::hex << oracle::fnv1a(first_bytes) << " vs " << oracle::fnv1a(second);
    return {first_bytes == second, d.str()};
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg;  // 5 seeds, n_train=1000, epochs=100, d=32, k=2
    std::cout << "running sweep: " << to_json(cfg).dump() << std::endl;
    const ExperimentReport rep = run_sweep(cfg);
    print_table(std::cout, rep);
    const std::string bytes = report_bytes(rep);

    report(1, "Table reproduction", table_reproduction(rep));
    report(2, "Significance", significance(rep));
    report(3, "Gradient fidelity", gradient_fidelity());
    report(4, "Entropy oracle", entropy_oracle());
    report(5, "Non-collapse witness", non_collapse_witness());
    report(6, "Context tracking properties", cit_properties());
    report(7, "Variant distinctness", non_identity(rep));
    report(8, "Determinism", determinism(bytes, cfg));

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (8 - failures) << "/8 criteria passed in " << fmt(secs, 1) << " s" << std::endl;
    return failures;
}
