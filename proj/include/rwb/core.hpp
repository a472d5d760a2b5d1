#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rwb/linalg.hpp"

namespace rwb {

/// Insertion-ordered JSON everywhere so serialized artifacts are byte-stable.
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Errors

/// Base class for all library errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad input data or configuration: wrong shapes, out-of-range values,
/// schema violations. CLI maps these to exit code 2.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// A pluggable backend (LLM client, judge, recorded fixture) failed after
/// retries. Rounds hitting this are skipped, never fabricated.
class BackendError : public Error {
  public:
    using Error::Error;
};

/// Malformed input file; message carries the line number.
class ParseError : public Error {
  public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Feature vector

inline constexpr int kFeatureCount = 17;

/// Canonical feature order; treated as a wire-format contract.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "anaphora",    "subordination", "mismatch",    "presupposition", "pragmatics",
    "rarity",      "negation",      "superlative", "polysemy",       "answerability",
    "excessive",   "subjectivity",  "ambiguity",   "grounding",      "constraints",
    "entities",    "specialization"};

inline int feature_index(std::string_view name) {
    for (int i = 0; i < kFeatureCount; ++i)
        if (kFeatureNames[i] == name) return i;
    throw ValidationError("unknown feature name: " + std::string(name));
}

/// 17 binary linguistic indicators in canonical order. When bias_enabled is
/// true (the default), as_vec() appends a constant 1 so linear policies can
/// learn on the all-zero context; disable it for a strict 17-dimensional run.
class FeatureVector {
  public:
    FeatureVector() { flags_.fill(0); }

    static FeatureVector from_flags(std::span<const int> flags, bool bias_enabled = true) {
        if (flags.size() != kFeatureCount)
            throw ValidationError("wrong_length: expected 17 features, got " +
                                  std::to_string(flags.size()));
        FeatureVector fv;
        fv.bias_enabled_ = bias_enabled;
        for (int i = 0; i < kFeatureCount; ++i) {
            if (flags[i] != 0 && flags[i] != 1)
                throw ValidationError("non_binary_entry: feature " + std::string(kFeatureNames[i]) +
                                      " = " + std::to_string(flags[i]));
            fv.flags_[i] = static_cast<std::uint8_t>(flags[i]);
        }
        return fv;
    }

    int flag(int i) const { return flags_.at(static_cast<std::size_t>(i)); }
    void set(int i, int v) {
        if (v != 0 && v != 1) throw ValidationError("non_binary_entry");
        flags_.at(static_cast<std::size_t>(i)) = static_cast<std::uint8_t>(v);
    }
    void set(std::string_view name, int v) { set(feature_index(name), v); }

    bool bias_enabled() const { return bias_enabled_; }
    void set_bias_enabled(bool b) { bias_enabled_ = b; }

    /// Effective dimension seen by linear policies.
    int dimension() const { return bias_enabled_ ? kFeatureCount + 1 : kFeatureCount; }

    Vec as_vec() const {
        Vec x(static_cast<std::size_t>(dimension()), 0.0);
        for (int i = 0; i < kFeatureCount; ++i) x[static_cast<std::size_t>(i)] = flags_[i];
        if (bias_enabled_) x.back() = 1.0;
        return x;
    }

    /// Wire format: a plain array of 17 integers. The bias coordinate is a
    /// policy-side convention carried by the experiment config, not by the
    /// serialized context.
    Json to_json() const {
        Json a = Json::array();
        for (int i = 0; i < kFeatureCount; ++i) a.push_back(static_cast<int>(flags_[i]));
        return a;
    }

    static FeatureVector from_json(const Json& j, bool bias_enabled = true) {
        if (!j.is_array()) throw ValidationError("feature vector must be a JSON array");
        std::vector<int> flags;
        flags.reserve(j.size());
        for (const auto& v : j) {
            if (!v.is_number_integer())
                throw ValidationError("non_binary_entry: feature flags must be integers");
            flags.push_back(v.get<int>());
        }
        return from_flags(flags, bias_enabled);
    }

    bool operator==(const FeatureVector& o) const {
        return flags_ == o.flags_ && bias_enabled_ == o.bias_enabled_;
    }

  private:
    std::array<std::uint8_t, kFeatureCount> flags_{};
    bool bias_enabled_ = true;
};

/// Validates a raw numeric sequence as a feature vector: length 17, entries
/// exactly 0 or 1.
inline FeatureVector validate_feature_vector(std::span<const double> raw, bool bias_enabled = true) {
    if (raw.size() != kFeatureCount)
        throw ValidationError("wrong_length: expected 17 features, got " +
                              std::to_string(raw.size()));
    std::array<int, kFeatureCount> flags{};
    for (int i = 0; i < kFeatureCount; ++i) {
        const double v = raw[static_cast<std::size_t>(i)];
        if (v != 0.0 && v != 1.0)
            throw ValidationError("non_binary_entry: feature " + std::string(kFeatureNames[i]));
        flags[static_cast<std::size_t>(i)] = static_cast<int>(v);
    }
    return FeatureVector::from_flags(flags, bias_enabled);
}

// ---------------------------------------------------------------------------
// Rewrite arms

struct RewriteArm {
    int index = 0;
    std::string name;
    std::string template_text;  // contains a single {query} placeholder

    bool is_norewrite() const { return name == "NoRewrite"; }

    Json to_json() const {
        return Json{{"index", index}, {"name", name}, {"template", template_text}};
    }
    static RewriteArm from_json(const Json& j) {
        return RewriteArm{j.at("index").get<int>(), j.at("name").get<std::string>(),
                          j.at("template").get<std::string>()};
    }
};

enum class ArmSetChoice { FiveRewrites, FiveRewritesPlusNoRewrite };

inline constexpr std::string_view kQueryPlaceholder = "{query}";

inline std::string apply_template(const RewriteArm& arm, std::string_view query) {
    if (arm.is_norewrite()) return std::string(query);
    const std::string& t = arm.template_text;
    const auto pos = t.find(kQueryPlaceholder);
    if (pos == std::string::npos)
        throw ValidationError("arm template for " + arm.name + " lacks {query} placeholder");
    std::string out = t.substr(0, pos);
    out += query;
    out += t.substr(pos + kQueryPlaceholder.size());
    return out;
}

/// Default instruction templates for the five rewrite strategies. The files
/// under data/templates/ carry the same text and may be edited; these are the
/// compiled-in fallback.
inline const std::array<std::pair<std::string_view, std::string_view>, 6>& default_arm_templates() {
    static const std::array<std::pair<std::string_view, std::string_view>, 6> t = {{
        {"Paraphrase",
         "Paraphrase this question while preserving its meaning: {query}"},
        {"Simplify",
         "Rewrite this question to eliminate nested clauses or complex syntax while "
         "keeping its meaning: {query}"},
        {"Disambiguate",
         "Rewrite this question by disambiguating vague references such as ambiguous "
         "pronouns or temporal expressions: {query}"},
        {"Expand",
         "Rewrite this question by explicitly expanding on relevant named entities and "
         "attributes to add helpful context: {query}"},
        {"ClarifyTerms",
         "Rewrite this question to clarify the lexical and semantic meaning of any "
         "jargon or technical terms: {query}"},
        {"NoRewrite", "{query}"},
    }};
    return t;
}

inline std::vector<RewriteArm> arm_set(ArmSetChoice choice) {
    const auto& defs = default_arm_templates();
    const std::size_t n = choice == ArmSetChoice::FiveRewrites ? 5 : 6;
    std::vector<RewriteArm> arms;
    arms.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        arms.push_back(RewriteArm{static_cast<int>(i), std::string(defs[i].first),
                                  std::string(defs[i].second)});
    return arms;
}

/// Arm set with instruction templates loaded from <dir>/<armname>.txt
/// (lowercase, whole file minus a trailing newline). Missing files fall back
/// to the compiled-in defaults; present files must carry the placeholder.
inline std::vector<RewriteArm> arm_set_from_dir(ArmSetChoice choice, const std::string& dir) {
    std::vector<RewriteArm> arms = arm_set(choice);
    for (auto& arm : arms) {
        std::string file;
        for (char c : arm.name)
            file.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        std::ifstream in(dir + "/" + file + ".txt", std::ios::binary);
        if (!in) continue;
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
        if (text.find(kQueryPlaceholder) == std::string::npos)
            throw ValidationError("template " + file + ".txt lacks the {query} placeholder");
        arm.template_text = std::move(text);
    }
    return arms;
}

inline ArmSetChoice arm_set_choice_from_string(std::string_view s) {
    if (s == "five" || s == "five_rewrites") return ArmSetChoice::FiveRewrites;
    if (s == "five_plus_norewrite" || s == "six" || s == "five_rewrites_plus_norewrite")
        return ArmSetChoice::FiveRewritesPlusNoRewrite;
    throw ValidationError("unknown arm set: " + std::string(s));
}

inline int arm_index_by_name(const std::vector<RewriteArm>& arms, std::string_view name) {
    for (const auto& a : arms)
        if (a.name == name) return a.index;
    throw ValidationError("unknown_arm: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Reward weights

/// Convex weights over the three correctness signals (judge, fuzzy, BLEU-1).
struct RewardWeights {
    double alpha = 0.6;
    double beta = 0.3;
    double gamma = 0.1;

    RewardWeights() = default;
    RewardWeights(double a, double b, double g) : alpha(a), beta(b), gamma(g) { validate(); }

    void validate() const {
        if (alpha < 0.0 || beta < 0.0 || gamma < 0.0)
            throw ValidationError("reward weights must be nonnegative");
        if (std::fabs(alpha + beta + gamma - 1.0) > 1e-9)
            throw ValidationError("reward weights must sum to 1");
    }

    Json to_json() const { return Json{{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}}; }
    static RewardWeights from_json(const Json& j) {
        return RewardWeights(j.at("alpha").get<double>(), j.at("beta").get<double>(),
                             j.at("gamma").get<double>());
    }

    bool operator==(const RewardWeights&) const = default;
};

// ---------------------------------------------------------------------------
// Query records

enum class Scenario { Extractive, MultipleChoice, Abstractive };

inline std::string_view scenario_name(Scenario s) {
    switch (s) {
        case Scenario::Extractive: return "extractive";
        case Scenario::MultipleChoice: return "multiple_choice";
        case Scenario::Abstractive: return "abstractive";
    }
    throw ValidationError("invalid scenario");
}

inline Scenario scenario_from_string(std::string_view s) {
    if (s == "extractive" || s == "E") return Scenario::Extractive;
    if (s == "multiple_choice" || s == "M") return Scenario::MultipleChoice;
    if (s == "abstractive" || s == "A") return Scenario::Abstractive;
    throw ValidationError("unknown scenario: " + std::string(s));
}

struct QueryRecord {
    std::string id;
    std::string dataset;
    std::string question;
    std::string reference_answer;
    std::vector<std::string> perturbations;  // semantically invariant lexical variants
    Scenario scenario = Scenario::Extractive;
    std::optional<std::vector<std::string>> choices;

    void validate() const {
        if (question.empty()) throw ValidationError("question must be non-empty (id=" + id + ")");
        if (reference_answer.empty())
            throw ValidationError("reference_answer must be non-empty (id=" + id + ")");
        if (perturbations.size() > 5)
            throw ValidationError("at most 5 perturbations allowed (id=" + id + ")");
    }

    Json to_json() const {
        Json j{{"id", id},
               {"dataset", dataset},
               {"question", question},
               {"reference_answer", reference_answer},
               {"perturbations", perturbations},
               {"scenario", std::string(scenario_name(scenario))}};
        if (choices) j["choices"] = *choices;
        return j;
    }

    static QueryRecord from_json(const Json& j) {
        QueryRecord r;
        r.id = j.at("id").get<std::string>();
        r.dataset = j.value("dataset", std::string{});
        r.question = j.at("question").get<std::string>();
        r.reference_answer = j.at("reference_answer").get<std::string>();
        if (j.contains("perturbations"))
            r.perturbations = j.at("perturbations").get<std::vector<std::string>>();
        r.scenario = scenario_from_string(j.value("scenario", std::string("extractive")));
        if (j.contains("choices") && !j.at("choices").is_null())
            r.choices = j.at("choices").get<std::vector<std::string>>();
        r.validate();
        return r;
    }

    bool operator==(const QueryRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Pull records

/// One round of the bandit + rewrite loop.
struct PullRecord {
    std::int64_t t = 0;  // 1-based round index
    std::string query_id;
    FeatureVector context;
    int arm = 0;
    std::optional<std::vector<double>> probs;
    std::string rewritten_query;
    std::string answer;
    double s_llm = 0.0;
    double s_fuzz = 0.0;
    double s_bleu = 0.0;
    double reward = 0.0;
    std::optional<double> oracle_reward;

    void validate() const {
        if (reward < 0.0 || reward > 1.0) throw ValidationError("reward out of [0,1]");
        if (probs) {
            double sum = 0.0;
            for (double p : *probs) sum += p;
            if (std::fabs(sum - 1.0) > 1e-9)
                throw ValidationError("selection probabilities must sum to 1");
        }
        if (oracle_reward && *oracle_reward < reward - 1e-12)
            throw ValidationError("oracle reward below observed reward");
    }

    Json to_json() const {
        Json j{{"t", t},
               {"query_id", query_id},
               {"context", context.to_json()},
               {"arm", arm}};
        if (probs) j["probs"] = *probs;
        j["rewritten_query"] = rewritten_query;
        j["answer"] = answer;
        j["s_llm"] = s_llm;
        j["s_fuzz"] = s_fuzz;
        j["s_bleu"] = s_bleu;
        j["reward"] = reward;
        if (oracle_reward) j["oracle_reward"] = *oracle_reward;
        return j;
    }

    static PullRecord from_json(const Json& j) {
        PullRecord r;
        r.t = j.at("t").get<std::int64_t>();
        r.query_id = j.at("query_id").get<std::string>();
        r.context = FeatureVector::from_json(j.at("context"));
        r.arm = j.at("arm").get<int>();
        if (j.contains("probs") && !j.at("probs").is_null())
            r.probs = j.at("probs").get<std::vector<double>>();
        r.rewritten_query = j.value("rewritten_query", std::string{});
        r.answer = j.value("answer", std::string{});
        r.s_llm = j.value("s_llm", 0.0);
        r.s_fuzz = j.value("s_fuzz", 0.0);
        r.s_bleu = j.value("s_bleu", 0.0);
        r.reward = j.at("reward").get<double>();
        if (j.contains("oracle_reward") && !j.at("oracle_reward").is_null())
            r.oracle_reward = j.at("oracle_reward").get<double>();
        r.validate();
        return r;
    }

    bool operator==(const PullRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Policy state

/// Versioned snapshot of a policy: everything needed to reproduce its future
/// decisions exactly, including the RNG seed and draw counter.
struct PolicyState {
    int version = 1;
    std::string algorithm;
    int num_arms = 0;
    int dimension = 0;  // 0 for non-contextual policies
    Json hyperparameters = Json::object();
    std::uint64_t seed = 0;
    std::uint64_t draws = 0;
    Json arms = Json::object();  // per-algorithm learned state

    Json to_json() const {
        return Json{{"version", version},   {"algorithm", algorithm},
                    {"num_arms", num_arms}, {"dimension", dimension},
                    {"hyperparameters", hyperparameters},
                    {"seed", seed},         {"draws", draws},
                    {"arms", arms}};
    }

    static PolicyState from_json(const Json& j) {
        PolicyState s;
        s.version = j.at("version").get<int>();
        if (s.version != 1) throw ValidationError("unsupported policy state version");
        s.algorithm = j.at("algorithm").get<std::string>();
        s.num_arms = j.at("num_arms").get<int>();
        s.dimension = j.at("dimension").get<int>();
        s.hyperparameters = j.at("hyperparameters");
        s.seed = j.at("seed").get<std::uint64_t>();
        s.draws = j.at("draws").get<std::uint64_t>();
        s.arms = j.at("arms");
        return s;
    }
};

}  // namespace rwb
