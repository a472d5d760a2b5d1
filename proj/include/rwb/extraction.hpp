#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rwb/core.hpp"
#include "rwb/llm_client.hpp"
#include "rwb/reward.hpp"

namespace rwb {

// ---------------------------------------------------------------------------
// Lexicons

/// Word and phrase lists behind the rule-based extractor. Files are one
/// lowercase entry per line with '#' comments; multi-word entries are matched
/// as phrases against the normalized query.
struct Lexicons {
    using Set = std::unordered_set<std::string>;

    Set pronouns;
    Set negations;
    Set subordinators;
    Set superlatives;      // explicit superlative words (best, most, ...)
    Set est_exceptions;    // words ending in "est" that are not superlatives
    Set polysemy;
    Set opinion;
    Set jargon;
    Set speculative;       // answerability killers
    Set artifact_nouns;    // unavailable-artifact references (mismatch)
    Set vague_markers;     // ambiguity markers
    Set interrogatives;
    Set verbs;             // common verbs incl. auxiliaries (grounding)
    Set common_words;      // bundled frequency list (rarity)
    int excessive_cutoff = 40;

    static Set load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open lexicon: " + path);
        Set set;
        std::string line;
        while (std::getline(in, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            // trim
            std::size_t b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos) continue;
            std::size_t e = line.find_last_not_of(" \t\r");
            set.insert(line.substr(b, e - b + 1));
        }
        return set;
    }

    static Lexicons load(const std::string& dir) {
        Lexicons lx;
        lx.pronouns = load_file(dir + "/pronouns.txt");
        lx.negations = load_file(dir + "/negations.txt");
        lx.subordinators = load_file(dir + "/subordinators.txt");
        lx.superlatives = load_file(dir + "/superlatives.txt");
        lx.est_exceptions = load_file(dir + "/est_exceptions.txt");
        lx.polysemy = load_file(dir + "/polysemy.txt");
        lx.opinion = load_file(dir + "/opinion.txt");
        lx.jargon = load_file(dir + "/jargon.txt");
        lx.speculative = load_file(dir + "/speculative.txt");
        lx.artifact_nouns = load_file(dir + "/artifact_nouns.txt");
        lx.vague_markers = load_file(dir + "/vague_markers.txt");
        lx.interrogatives = load_file(dir + "/interrogatives.txt");
        lx.verbs = load_file(dir + "/verbs.txt");
        lx.common_words = load_file(dir + "/common_words.txt");
        lx.validate();
        return lx;
    }

    void validate() const {
        auto need = [](const Set& s, const char* name) {
            if (s.empty()) throw ValidationError(std::string("empty lexicon: ") + name);
        };
        need(pronouns, "pronouns");
        need(negations, "negations");
        need(subordinators, "subordinators");
        need(superlatives, "superlatives");
        need(polysemy, "polysemy");
        need(opinion, "opinion");
        need(jargon, "jargon");
        need(speculative, "speculative");
        need(artifact_nouns, "artifact_nouns");
        need(vague_markers, "vague_markers");
        need(interrogatives, "interrogatives");
        need(verbs, "verbs");
        need(common_words, "common_words");
        if (excessive_cutoff < 1) throw ValidationError("excessive_cutoff must be positive");
    }
};

namespace detail {

/// Single words are matched per token; entries containing a space are matched
/// as whole phrases inside the normalized text.
inline bool lexicon_hit(const std::vector<std::string>& tokens, const std::string& padded_norm,
                        const Lexicons::Set& set) {
    for (const auto& t : tokens)
        if (set.count(t)) return true;
    for (const auto& entry : set) {
        if (entry.find(' ') == std::string::npos) continue;
        if (padded_norm.find(" " + entry + " ") != std::string::npos) return true;
    }
    return false;
}

/// Raw whitespace tokens with boundary punctuation stripped but case kept;
/// aligned with tokenize() output for ordinary text.
inline std::vector<std::string> raw_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string tok;
    auto flush = [&] {
        std::size_t b = 0;
        std::size_t e = tok.size();
        while (b < e && !std::isalnum(static_cast<unsigned char>(tok[b]))) ++b;
        while (e > b && !std::isalnum(static_cast<unsigned char>(tok[e - 1]))) --e;
        if (e > b) out.emplace_back(tok.substr(b, e - b));
        tok.clear();
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c)))
            flush();
        else
            tok.push_back(c);
    }
    flush();
    return out;
}

inline bool is_year(const std::string& tok) {
    if (tok.size() != 4) return false;
    for (char c : tok)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return tok[0] == '1' || tok[0] == '2';
}

inline bool is_numeric(const std::string& tok) {
    if (tok.empty()) return false;
    for (char c : tok)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

inline bool all_alpha(const std::string& tok) {
    if (tok.empty()) return false;
    for (char c : tok)
        if (!std::isalpha(static_cast<unsigned char>(c))) return false;
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Rule-based extraction

/// Deterministic heuristic extraction of the 17 binary features. These rules
/// are lexical proxies for the feature definitions, pinned so the pipeline is
/// reproducible offline; they make no fidelity claim against an LLM extractor.
inline FeatureVector extract_features_rule_based(std::string_view query, const Lexicons& lx,
                                                 bool bias_enabled = true) {
    const auto tokens = tokenize(query);
    if (tokens.empty()) throw ValidationError("empty_query");
    const auto raw = detail::raw_tokens(query);
    const std::string padded = " " + normalize_text(query) + " ";

    FeatureVector fv;
    fv.set_bias_enabled(bias_enabled);
    auto hit = [&](const Lexicons::Set& set) { return detail::lexicon_hit(tokens, padded, set); };

    // structural
    fv.set("anaphora", hit(lx.pronouns) ? 1 : 0);
    int subordinator_hits = 0;
    for (const auto& t : tokens)
        if (lx.subordinators.count(t)) ++subordinator_hits;
    fv.set("subordination", subordinator_hits >= 2 ? 1 : 0);

    // scenario-based
    {
        // reference to an artifact the model cannot see: determiner followed
        // closely by an artifact noun, or a bare "attached"/"aforementioned"
        bool mismatch = false;
        static const std::array<std::string_view, 4> dets = {"this", "that", "these", "the"};
        for (std::size_t i = 0; i < tokens.size() && !mismatch; ++i) {
            if (tokens[i] == "attached" || tokens[i] == "aforementioned") mismatch = true;
            if (std::find(dets.begin(), dets.end(), tokens[i]) == dets.end()) continue;
            for (std::size_t j = i + 1; j < std::min(tokens.size(), i + 4); ++j)
                if (lx.artifact_nouns.count(tokens[j])) mismatch = true;
        }
        fv.set("mismatch", mismatch ? 1 : 0);
    }
    {
        // wh-question presuming an entity: "the ... that/who/which/whose"
        bool presup = false;
        const bool interrogative = !tokens.empty() && lx.interrogatives.count(tokens.front()) > 0;
        if (interrogative) {
            std::size_t the_pos = tokens.size();
            for (std::size_t i = 0; i < tokens.size(); ++i) {
                if (tokens[i] == "the" && the_pos == tokens.size()) the_pos = i;
                if (the_pos < i &&
                    (tokens[i] == "that" || tokens[i] == "who" || tokens[i] == "which" ||
                     tokens[i] == "whose"))
                    presup = true;
            }
        }
        fv.set("presupposition", presup ? 1 : 0);
    }
    {
        bool pragmatic = false;
        if (tokens.size() >= 2) {
            static const std::array<std::string_view, 5> modals = {"can", "could", "would", "will",
                                                                   "may"};
            if (std::find(modals.begin(), modals.end(), tokens[0]) != modals.end() &&
                (tokens[1] == "you" || tokens[1] == "i"))
                pragmatic = true;
        }
        if (!tokens.empty() && tokens[0] == "please") pragmatic = true;
        fv.set("pragmatics", pragmatic ? 1 : 0);
    }

    // lexical
    {
        bool rare = false;
        for (const auto& t : tokens)
            if (detail::all_alpha(t) && !lx.common_words.count(t)) rare = true;
        fv.set("rarity", rare ? 1 : 0);
    }
    {
        bool neg = hit(lx.negations);
        for (const auto& t : tokens)
            if (t.size() > 3 && t.compare(t.size() - 3, 3, "n't") == 0) neg = true;
        fv.set("negation", neg ? 1 : 0);
    }
    {
        bool sup = hit(lx.superlatives);
        for (const auto& t : tokens)
            if (t.size() >= 5 && t.compare(t.size() - 3, 3, "est") == 0 &&
                !lx.est_exceptions.count(t) && detail::all_alpha(t))
                sup = true;
        fv.set("superlative", sup ? 1 : 0);
    }
    fv.set("polysemy", hit(lx.polysemy) ? 1 : 0);

    // stylistic
    fv.set("answerability", hit(lx.speculative) ? 0 : 1);
    fv.set("excessive", static_cast<int>(tokens.size()) > lx.excessive_cutoff ? 1 : 0);
    fv.set("subjectivity", hit(lx.opinion) ? 1 : 0);
    {
        bool vague = hit(lx.vague_markers);
        bool has_wh = false;
        for (const auto& t : tokens)
            if (lx.interrogatives.count(t)) has_wh = true;
        if (tokens.size() <= 6 && !has_wh) vague = true;  // short non-question prompt
        fv.set("ambiguity", vague ? 1 : 0);
    }

    // semantic grounding
    {
        bool has_wh = false;
        bool has_verb = false;
        for (const auto& t : tokens) {
            if (lx.interrogatives.count(t)) has_wh = true;
            if (lx.verbs.count(t)) has_verb = true;
        }
        fv.set("grounding", has_wh && has_verb ? 1 : 0);
    }
    {
        bool constraint = false;
        static const std::array<std::string_view, 9> preps = {
            "in", "at", "during", "between", "within", "before", "after", "since", "until"};
        // "may" is omitted from month detection; it collides with the modal
        static const std::array<std::string_view, 11> months = {
            "january", "february", "march",     "april",   "june",     "july",
            "august",  "september", "october", "november", "december"};
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (detail::is_year(tokens[i]) || detail::is_numeric(tokens[i])) constraint = true;
            if (std::find(months.begin(), months.end(), tokens[i]) != months.end())
                constraint = true;
            if (std::find(preps.begin(), preps.end(), tokens[i]) != preps.end() &&
                i + 1 < raw.size()) {
                const std::string& nxt = raw[i + 1];
                if (!nxt.empty() && (std::isupper(static_cast<unsigned char>(nxt[0])) ||
                                     std::isdigit(static_cast<unsigned char>(nxt[0]))))
                    constraint = true;
            }
        }
        fv.set("constraints", constraint ? 1 : 0);
    }
    {
        bool entity = false;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (detail::is_year(raw[i])) entity = true;
            if (i == 0) continue;
            const std::string& t = raw[i];
            if (!t.empty() && std::isupper(static_cast<unsigned char>(t[0])) && t != "I")
                entity = true;
        }
        fv.set("entities", entity ? 1 : 0);
    }
    fv.set("specialization", hit(lx.jargon) ? 1 : 0);

    return fv;
}

// ---------------------------------------------------------------------------
// Extractor backends

enum class ExtractorKind { RuleBased, JudgeBacked, Recorded };

/// Criterion text for each feature, used verbatim by the judge-backed
/// extractor as a yes/no question about the query.
inline const std::array<std::string_view, kFeatureCount>& feature_criteria() {
    static const std::array<std::string_view, kFeatureCount> c = {
        "contain anaphoric references such as pronouns that need external context",
        "contain multiple subordinate clauses",
        "ask for something its format cannot deliver, such as referencing a document that is "
        "not provided",
        "embed unstated assumptions that are implicitly taken as true",
        "carry discourse-driven intent beyond its literal meaning, like an indirect request",
        "use rare or niche terminology",
        "contain negation words such as 'not' or 'never'",
        "use superlative forms with implicit semantics, such as 'best' or 'largest'",
        "contain a word with multiple related meanings whose sense is unclear",
        "have a verifiable, non-speculative answer",
        "carry an excessive amount of detail and information",
        "require a personal opinion or creative reflection",
        "use ambiguous phrasing open to multiple interpretations",
        "express a clear intention and goal",
        "state explicit temporal, spatial, or task-specific constraints",
        "mention verifiable named entities",
        "require domain-specific knowledge to understand"};
    return c;
}

struct Extractor {
    ExtractorKind kind = ExtractorKind::RuleBased;
    Lexicons lexicons;                         // RuleBased
    ChatClient* judge_client = nullptr;        // JudgeBacked
    std::unordered_map<std::string, FeatureVector> recorded;  // Recorded, by normalized query
    bool bias_enabled = true;

    FeatureVector extract(std::string_view query) const {
        if (normalize_text(query).empty()) throw ValidationError("empty_query");
        switch (kind) {
            case ExtractorKind::RuleBased:
                return extract_features_rule_based(query, lexicons, bias_enabled);
            case ExtractorKind::Recorded: {
                const auto it = recorded.find(normalize_text(query));
                if (it == recorded.end())
                    throw BackendError("backend_unavailable: no recorded features for query");
                FeatureVector fv = it->second;
                fv.set_bias_enabled(bias_enabled);
                return fv;
            }
            case ExtractorKind::JudgeBacked: {
                if (!judge_client) throw ValidationError("judge-backed extractor needs a client");
                FeatureVector fv;
                fv.set_bias_enabled(bias_enabled);
                const auto& criteria = feature_criteria();
                for (int i = 0; i < kFeatureCount; ++i) {
                    std::string prompt = "Consider this query: \"";
                    prompt += query;
                    prompt += "\"\nDoes the query ";
                    prompt += criteria[static_cast<std::size_t>(i)];
                    prompt += "? Reply YES or NO.";
                    const std::string reply = judge_client->complete(prompt);
                    const std::string norm = normalize_text(reply);
                    if (norm.rfind("yes", 0) == 0)
                        fv.set(i, 1);
                    else if (norm.rfind("no", 0) == 0)
                        fv.set(i, 0);
                    else
                        throw BackendError("backend_unavailable: feature reply not parseable");
                }
                return fv;
            }
        }
        throw ValidationError("invalid extractor kind");
    }
};

inline FeatureVector extract_features(std::string_view query, const Extractor& backend) {
    return backend.extract(query);
}

}  // namespace rwb
