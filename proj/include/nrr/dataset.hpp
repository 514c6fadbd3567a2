#pragma once

// Synthetic two-turn "bank" disambiguation corpus.
//
// Turn 1 is always "the bank is {adj}" and carries no sense information.
// Turn 2 is a short template holding exactly one cue word from the label's
// lexicon. Evaluating Turn 1 alone is done by replacing Turn 2 with the
// reserved NEUTRAL token, which generation never emits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrr/errors.hpp"
#include "nrr/rng.hpp"

namespace nrr {

enum class Sense : std::size_t { financial = 0, river = 1 };
inline constexpr std::size_t kNumSenses = 2;

inline std::string to_string(Sense s) { return s == Sense::financial ? "FINANCIAL" : "RIVER"; }

inline std::optional<Sense> parse_sense(const std::string& s) {
    if (s == "FINANCIAL") return Sense::financial;
    if (s == "RIVER") return Sense::river;
    return std::nullopt;
}

inline constexpr const char* kNeutralToken = "<neutral>";
inline constexpr const char* kCueSlot = "{cue}";

struct DatasetSpec {
    std::size_t n = 1000;
    /// Fraction of episodes labeled FINANCIAL.
    double balance = 0.5;
    std::vector<std::string> adjectives{"solid", "stable", "old", "new"};
    std::array<std::vector<std::string>, kNumSenses> cue_lexicons{
        std::vector<std::string>{"investor", "loan", "teller", "vault", "deposit"},
        std::vector<std::string>{"ducks", "river", "water", "shore", "fish"}};
    /// Turn 2 surface forms; each contains the {cue} slot exactly once.
    std::vector<std::string> templates{"the {cue} is nearby", "i can see the {cue}", "there are {cue} here"};
    std::string ambiguous_token = "bank";
    std::uint64_t seed = 0;

    std::size_t financial_count() const { return static_cast<std::size_t>(std::llround(n * balance)); }

    void validate() const {
        if (n == 0) throw ConfigError("dataset: n must be positive");
        if (!(balance >= 0.0 && balance <= 1.0)) throw ConfigError("dataset: balance must lie in [0, 1]");
        const double nf = static_cast<double>(n) * balance;
        if (std::abs(nf - std::round(nf)) > 1e-9) {
            throw ConfigError("dataset: n*balance = " + std::to_string(nf) + " is not integral");
        }
        if (adjectives.empty()) throw ConfigError("dataset: adjective list is empty");
        if (templates.empty()) throw ConfigError("dataset: template list is empty");
        std::set<std::string> seen;
        for (std::size_t c = 0; c < kNumSenses; ++c) {
            if (cue_lexicons[c].empty()) {
                throw ConfigError("dataset: empty cue lexicon for " + to_string(static_cast<Sense>(c)));
            }
            for (const auto& w : cue_lexicons[c]) {
                if (c == 1 && seen.count(w)) throw ConfigError("dataset: cue '" + w + "' appears in both lexicons");
                if (c == 0) seen.insert(w);
            }
        }
        for (const auto& t : templates) {
            const auto first = t.find(kCueSlot);
            if (first == std::string::npos || t.find(kCueSlot, first + 1) != std::string::npos) {
                throw ConfigError("dataset: template '" + t + "' must contain {cue} exactly once");
            }
        }
    }
};

inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string w; in >> w;) {
        std::transform(w.begin(), w.end(), w.begin(), [](unsigned char ch) { return std::tolower(ch); });
        out.push_back(std::move(w));
    }
    return out;
}

/// Bijective token <-> id map. NEUTRAL is always id 0.
class Vocab {
public:
    static constexpr std::size_t kNeutralId = 0;

    Vocab() { add(kNeutralToken); }

    static Vocab from_spec(const DatasetSpec& spec) {
        Vocab v;
        for (const auto& w : tokenize("the " + spec.ambiguous_token + " is")) v.add(w);
        for (const auto& w : spec.adjectives) v.add(w);
        for (const auto& t : spec.templates) {
            for (const auto& w : tokenize(t)) {
                if (w != kCueSlot) v.add(w);
            }
        }
        for (const auto& lex : spec.cue_lexicons) {
            for (const auto& w : lex) v.add(w);
        }
        return v;
    }

    static Vocab from_tokens(const std::vector<std::string>& tokens) {
        if (tokens.empty() || tokens.front() != kNeutralToken) {
            throw VocabError(std::string("vocab must start with ") + kNeutralToken);
        }
        Vocab v;
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            if (v.contains(tokens[i])) throw VocabError("duplicate vocab token '" + tokens[i] + "'");
            v.add(tokens[i]);
        }
        return v;
    }

    /// Returns the id, inserting the token if new.
    std::size_t add(const std::string& token) {
        auto [it, inserted] = ids_.emplace(token, tokens_.size());
        if (inserted) tokens_.push_back(token);
        return it->second;
    }

    std::size_t id(const std::string& token) const {
        auto it = ids_.find(token);
        if (it == ids_.end()) throw VocabError("unknown token '" + token + "'");
        return it->second;
    }

    bool contains(const std::string& token) const { return ids_.count(token) > 0; }
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> ids_;
};

struct Episode {
    std::vector<std::string> turn1;
    std::vector<std::string> turn2;
    Sense label = Sense::financial;
    std::size_t ambiguous_index = 0;

    friend bool operator==(const Episode&, const Episode&) = default;
};

/// Position of the single ambiguous token in turn1; StructureError otherwise.
inline std::size_t find_ambiguous(const std::vector<std::string>& turn1, const std::string& ambiguous_token) {
    std::optional<std::size_t> pos;
    for (std::size_t i = 0; i < turn1.size(); ++i) {
        if (turn1[i] != ambiguous_token) continue;
        if (pos) throw StructureError("turn1 contains '" + ambiguous_token + "' more than once");
        pos = i;
    }
    if (!pos) throw StructureError("turn1 does not contain '" + ambiguous_token + "'");
    return *pos;
}

inline std::vector<Episode> generate(const DatasetSpec& spec) {
    spec.validate();
    RngStream rng(spec.seed);
    const std::size_t nf = spec.financial_count();
    std::vector<Sense> labels(spec.n, Sense::river);
    std::fill_n(labels.begin(), nf, Sense::financial);
    rng.shuffle(std::span<Sense>(labels));

    std::vector<Episode> out;
    out.reserve(spec.n);
    for (Sense label : labels) {
        const auto& adj = spec.adjectives[rng.below(spec.adjectives.size())];
        const auto& tmpl = spec.templates[rng.below(spec.templates.size())];
        const auto& lex = spec.cue_lexicons[static_cast<std::size_t>(label)];
        const auto& cue = lex[rng.below(lex.size())];

        Episode e;
        e.turn1 = tokenize("the " + spec.ambiguous_token + " is " + adj);
        for (auto& w : tokenize(tmpl)) e.turn2.push_back(w == kCueSlot ? cue : std::move(w));
        e.label = label;
        e.ambiguous_index = find_ambiguous(e.turn1, spec.ambiguous_token);
        out.push_back(std::move(e));
    }
    return out;
}

inline Episode neutralize(const Episode& e) {
    Episode out = e;
    out.turn2 = {kNeutralToken};
    return out;
}

inline std::vector<Episode> neutralize(const std::vector<Episode>& episodes) {
    std::vector<Episode> out;
    out.reserve(episodes.size());
    for (const auto& e : episodes) out.push_back(neutralize(e));
    return out;
}

inline std::string to_jsonl_line(const Episode& e) {
    nlohmann::ordered_json j;
    j["turn1"] = e.turn1;
    j["turn2"] = e.turn2;
    j["label"] = to_string(e.label);
    return j.dump();
}

inline void write_jsonl(const std::vector<Episode>& episodes, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    for (const auto& e : episodes) out << to_jsonl_line(e) << '\n';
    if (!out) throw Error("write to '" + path + "' failed");
}

inline Episode parse_jsonl_line(const std::string& line, std::size_t lineno, const std::string& ambiguous_token) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
        throw ParseError(std::string("invalid JSON: ") + ex.what(), lineno);
    }
    if (!j.is_object()) throw ParseError("expected a JSON object", lineno);
    auto tokens = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_array()) throw ParseError(std::string("missing array field '") + key + "'", lineno);
        std::vector<std::string> out;
        for (const auto& t : j[key]) {
            if (!t.is_string()) throw ParseError(std::string("non-string token in '") + key + "'", lineno);
            out.push_back(t.get<std::string>());
        }
        return out;
    };
    Episode e;
    e.turn1 = tokens("turn1");
    e.turn2 = tokens("turn2");
    if (e.turn2.empty()) throw ParseError("turn2 is empty", lineno);
    if (!j.contains("label") || !j["label"].is_string()) throw ParseError("missing string field 'label'", lineno);
    const auto label = parse_sense(j["label"].get<std::string>());
    if (!label) throw ParseError("unknown label '" + j["label"].get<std::string>() + "'", lineno);
    e.label = *label;
    try {
        e.ambiguous_index = find_ambiguous(e.turn1, ambiguous_token);
    } catch (const StructureError& ex) {
        throw ParseError(ex.what(), lineno);
    }
    return e;
}

inline std::vector<Episode> read_jsonl(const std::string& path, const std::string& ambiguous_token = "bank") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::vector<Episode> out;
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        if (line.empty()) continue;
        out.push_back(parse_jsonl_line(line, lineno, ambiguous_token));
    }
    return out;
}

/// Vocabulary of the spec, extended with any further tokens in `episodes`.
inline Vocab build_vocab(const DatasetSpec& spec, const std::vector<Episode>& episodes) {
    Vocab v = Vocab::from_spec(spec);
    for (const auto& e : episodes) {
        for (const auto& w : e.turn1) v.add(w);
        for (const auto& w : e.turn2) v.add(w);
    }
    return v;
}

}  // namespace nrr
