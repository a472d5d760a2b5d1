#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rwb/core.hpp"
#include "rwb/rng.hpp"

namespace rwb {

// ---------------------------------------------------------------------------
// Synthetic contextual-reward environment

enum class NoiseMode { Bernoulli, GaussianClipped };

inline std::string_view noise_mode_name(NoiseMode m) {
    return m == NoiseMode::Bernoulli ? "bernoulli" : "gaussian_clipped";
}

inline NoiseMode noise_mode_from_string(std::string_view s) {
    if (s == "bernoulli") return NoiseMode::Bernoulli;
    if (s == "gaussian_clipped" || s == "gaussian") return NoiseMode::GaussianClipped;
    throw ValidationError("unknown noise mode: " + std::string(s));
}

/// Ground-truth reward model: per-arm mean is clip(x~^T theta*_a, 0, 1),
/// where x~ is the context, bias-augmented when theta* has 18 entries.
/// Stands in for the live LLM reward so regret has a computable oracle.
struct EnvSpec {
    int num_arms = 0;
    int dim = kFeatureCount;
    std::vector<Vec> theta_star;  // one vector per arm, length dim or dim+1
    NoiseMode noise_mode = NoiseMode::Bernoulli;
    double noise_scale = 0.0;  // GaussianClipped only
    std::uint64_t seed = 0;

    void validate() const {
        if (num_arms < 2) throw ValidationError("env needs at least two arms");
        if (dim != kFeatureCount)
            throw ValidationError("env dim must match the 17-feature context");
        if (static_cast<int>(theta_star.size()) != num_arms)
            throw ValidationError("theta_star must have one vector per arm");
        for (const auto& th : theta_star)
            if (static_cast<int>(th.size()) != dim && static_cast<int>(th.size()) != dim + 1)
                throw ValidationError("theta_star vectors must have dim or dim+1 entries");
        if (noise_scale < 0.0) throw ValidationError("noise_scale must be nonnegative");
    }

    Json to_json() const {
        return Json{{"num_arms", num_arms},
                    {"dim", dim},
                    {"theta_star", theta_star},
                    {"noise_mode", std::string(noise_mode_name(noise_mode))},
                    {"noise_scale", noise_scale},
                    {"seed", seed}};
    }

    static EnvSpec from_json(const Json& j) {
        EnvSpec s;
        s.num_arms = j.at("num_arms").get<int>();
        s.dim = j.value("dim", kFeatureCount);
        s.theta_star = j.at("theta_star").get<std::vector<Vec>>();
        s.noise_mode = noise_mode_from_string(j.value("noise_mode", std::string("bernoulli")));
        s.noise_scale = j.value("noise_scale", 0.0);
        s.seed = j.value("seed", std::uint64_t{0});
        s.validate();
        return s;
    }
};

/// Mean reward of an arm for a context, before noise.
inline double env_mean(const EnvSpec& spec, const FeatureVector& context, int arm) {
    if (arm < 0 || arm >= spec.num_arms) throw ValidationError("arm_out_of_range");
    const Vec& theta = spec.theta_star[static_cast<std::size_t>(arm)];
    double s = 0.0;
    for (int i = 0; i < kFeatureCount && i < static_cast<int>(theta.size()); ++i)
        s += theta[static_cast<std::size_t>(i)] * context.flag(i);
    if (theta.size() == static_cast<std::size_t>(spec.dim) + 1) s += theta.back();  // bias
    return std::clamp(s, 0.0, 1.0);
}

/// One realized reward draw for (context, arm).
inline double env_step(const EnvSpec& spec, const FeatureVector& context, int arm, Rng& rng) {
    const double mu = env_mean(spec, context, arm);
    switch (spec.noise_mode) {
        case NoiseMode::Bernoulli:
            return static_cast<double>(rng.bernoulli(mu));
        case NoiseMode::GaussianClipped:
            return std::clamp(mu + spec.noise_scale * rng.normal(), 0.0, 1.0);
    }
    throw ValidationError("invalid noise mode");
}

/// Best arm by mean reward (lowest index on ties) and its mean.
inline std::pair<int, double> oracle_best(const EnvSpec& spec, const FeatureVector& context) {
    int best = 0;
    double best_mu = env_mean(spec, context, 0);
    for (int a = 1; a < spec.num_arms; ++a) {
        const double mu = env_mean(spec, context, a);
        if (mu > best_mu) {
            best = a;
            best_mu = mu;
        }
    }
    return {best, best_mu};
}

// ---------------------------------------------------------------------------
// Context sampling

struct ContextDistribution {
    std::array<double, kFeatureCount> probs{};

    void validate() const {
        for (double p : probs)
            if (p < 0.0 || p > 1.0) throw ValidationError("context probabilities must be in [0,1]");
    }

    Json to_json() const {
        return Json{{"probs", std::vector<double>(probs.begin(), probs.end())}};
    }

    static ContextDistribution from_json(const Json& j) {
        const auto v = j.at("probs").get<std::vector<double>>();
        if (v.size() != kFeatureCount)
            throw ValidationError("context distribution needs 17 probabilities");
        ContextDistribution d;
        std::copy(v.begin(), v.end(), d.probs.begin());
        d.validate();
        return d;
    }

    static ContextDistribution uniform(double p) {
        ContextDistribution d;
        d.probs.fill(p);
        d.validate();
        return d;
    }
};

inline FeatureVector sample_context(const ContextDistribution& dist, Rng& rng,
                                    bool bias_enabled = true) {
    FeatureVector fv;
    fv.set_bias_enabled(bias_enabled);
    for (int i = 0; i < kFeatureCount; ++i)
        fv.set(i, rng.bernoulli(dist.probs[static_cast<std::size_t>(i)]));
    return fv;
}

/// An EnvSpec preset file bundles the reward model with the context
/// distribution that exercises it.
struct EnvPreset {
    std::string name;
    EnvSpec env;
    ContextDistribution context;

    static EnvPreset from_json(const Json& j) {
        EnvPreset p;
        p.name = j.value("name", std::string{});
        p.env = EnvSpec::from_json(j.at("env"));
        p.context = ContextDistribution::from_json(j.at("context"));
        return p;
    }

    Json to_json() const {
        return Json{{"name", name}, {"env", env.to_json()}, {"context", context.to_json()}};
    }
};

inline EnvPreset load_env_preset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open env preset: " + path);
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError("invalid JSON in " + path + ": " + e.what());
    }
    return EnvPreset::from_json(j);
}

// ---------------------------------------------------------------------------
// Dataset ingestion

struct LoadOptions {
    std::optional<std::size_t> bootstrap_to;
    std::uint64_t seed = 0;
};

/// Reads a JSONL file of QueryRecords. When bootstrap_to exceeds the file
/// size, resamples with replacement (seeded); resampled copies get "#k"
/// suffixed ids so ids stay unique.
inline std::vector<QueryRecord> load_dataset(const std::string& path,
                                             const LoadOptions& options = {}) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset: " + path);
    std::vector<QueryRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError("parse_error at line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            records.push_back(QueryRecord::from_json(j));
        } catch (const Json::out_of_range& e) {
            throw ParseError("missing_field at line " + std::to_string(line_no) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ParseError("invalid record at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (options.bootstrap_to && records.size() < *options.bootstrap_to) {
        if (records.empty()) throw ValidationError("cannot bootstrap an empty dataset");
        Rng rng(options.seed);
        const std::size_t base = records.size();
        std::size_t copy_no = 0;
        while (records.size() < *options.bootstrap_to) {
            QueryRecord r = records[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(base)))];
            r.id += "#" + std::to_string(++copy_no);
            records.push_back(std::move(r));
        }
    }
    return records;
}

/// Trivial deterministic perturber for pipeline smoke tests: variant k
/// rotates the token order left by k+1. Not semantics-preserving; real
/// perturbations arrive pre-generated in the dataset.
inline std::vector<std::string> trivial_perturbations(std::string_view question, int count = 5) {
    std::vector<std::string> tokens;
    {
        std::string tok;
        for (char c : question) {
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!tok.empty()) tokens.push_back(tok);
                tok.clear();
            } else {
                tok.push_back(c);
            }
        }
        if (!tok.empty()) tokens.push_back(tok);
    }
    std::vector<std::string> out;
    for (int k = 0; k < count; ++k) {
        std::vector<std::string> rotated = tokens;
        if (!rotated.empty())
            std::rotate(rotated.begin(),
                        rotated.begin() + static_cast<std::ptrdiff_t>(
                                              (static_cast<std::size_t>(k) + 1) % rotated.size()),
                        rotated.end());
        std::string joined;
        for (const auto& t : rotated) {
            if (!joined.empty()) joined.push_back(' ');
            joined += t;
        }
        out.push_back(std::move(joined));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Query-construction filter

/// A record that passed the filter, with the perturbation chosen as the
/// incoming query.
struct FilteredQuery {
    QueryRecord record;
    int perturbation_index = 0;
    std::string incoming_query;
};

using OriginalPredicate = std::function<bool(const QueryRecord&)>;
using PerturbationPredicate = std::function<bool(const QueryRecord&, int /*perturbation index*/)>;

/// Keeps a record iff (1) the original question is answered correctly and
/// (2) between one and three of its five perturbations yield incorrect
/// answers. For each kept record one perturbation is chosen uniformly at
/// random (seeded) as the incoming query.
inline std::vector<FilteredQuery> filter_queries(const std::vector<QueryRecord>& records,
                                                 const OriginalPredicate& original_correct,
                                                 const PerturbationPredicate& perturbation_correct,
                                                 std::uint64_t seed = 0) {
    Rng rng(seed);
    std::vector<FilteredQuery> out;
    for (const auto& r : records) {
        if (r.perturbations.size() != 5)
            throw ValidationError("perturbation_count_invalid: record " + r.id + " has " +
                                  std::to_string(r.perturbations.size()) + " perturbations");
        if (!original_correct(r)) continue;
        int incorrect = 0;
        for (int i = 0; i < 5; ++i)
            if (!perturbation_correct(r, i)) ++incorrect;
        if (incorrect < 1 || incorrect > 3) continue;
        const int pick = rng.uniform_int(5);
        out.push_back(FilteredQuery{r, pick, r.perturbations[static_cast<std::size_t>(pick)]});
    }
    return out;
}

}  // namespace rwb
