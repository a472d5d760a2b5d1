#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rwb/core.hpp"
#include "rwb/env.hpp"
#include "rwb/extraction.hpp"
#include "rwb/io.hpp"
#include "rwb/llm_client.hpp"
#include "rwb/metrics.hpp"
#include "rwb/policies.hpp"
#include "rwb/reward.hpp"

namespace rwb {

inline constexpr std::string_view kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Rewriter

enum class RewriterKind { Templated, Mock, Recorded };

inline RewriterKind rewriter_kind_from_string(std::string_view s) {
    if (s == "templated") return RewriterKind::Templated;
    if (s == "mock") return RewriterKind::Mock;
    if (s == "recorded") return RewriterKind::Recorded;
    throw ValidationError("unknown rewriter kind: " + std::string(s));
}

/// Applies one arm's rewrite strategy to a query. The NoRewrite arm returns
/// the input verbatim under every kind.
struct Rewriter {
    RewriterKind kind = RewriterKind::Mock;
    ChatClient* client = nullptr;  // Templated
    std::unordered_map<std::string, std::string> recorded;  // key: arm name + normalized query

    static std::string recorded_key(std::string_view arm_name, std::string_view query) {
        return std::string(arm_name) + "|" + normalize_text(query);
    }

    std::string rewrite(std::string_view query, const RewriteArm& arm) const {
        if (normalize_text(query).empty()) throw ValidationError("empty_query");
        if (arm.is_norewrite()) return std::string(query);
        switch (kind) {
            case RewriterKind::Mock: {
                // deterministic stand-in: arm tag prefix plus a token rotation
                // by the arm index (reversible, identity for arm 0)
                auto toks = detail::raw_tokens(query);
                const std::size_t k =
                    toks.empty() ? 0 : static_cast<std::size_t>(arm.index) % toks.size();
                std::rotate(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(k),
                            toks.end());
                std::string upper;
                for (char c : arm.name)
                    upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
                std::string out = "[" + upper + "]";
                for (const auto& t : toks) {
                    out += ' ';
                    out += t;
                }
                return out;
            }
            case RewriterKind::Recorded: {
                const auto it = recorded.find(recorded_key(arm.name, query));
                if (it == recorded.end())
                    throw BackendError("backend_unavailable: no recorded rewrite");
                return it->second;
            }
            case RewriterKind::Templated: {
                if (!client) throw ValidationError("templated rewriter needs a client");
                std::string completion = client->complete(apply_template(arm, query));
                // strip surrounding whitespace and quotes
                const auto strip = [](std::string& s) {
                    std::size_t b = 0;
                    std::size_t e = s.size();
                    auto trimmable = [&](char c) {
                        return std::isspace(static_cast<unsigned char>(c)) || c == '"' || c == '\'';
                    };
                    while (b < e && trimmable(s[b])) ++b;
                    while (e > b && trimmable(s[e - 1])) --e;
                    s = s.substr(b, e - b);
                };
                strip(completion);
                if (completion.empty())
                    throw BackendError("backend_unavailable: empty rewrite completion");
                return completion;
            }
        }
        throw ValidationError("invalid rewriter kind");
    }
};

inline std::string rewrite(std::string_view query, const RewriteArm& arm,
                           const Rewriter& rewriter) {
    return rewriter.rewrite(query, arm);
}

// ---------------------------------------------------------------------------
// Answer prompting

/// Multiple-choice records render a lettered option list and ask for one
/// letter; everything else asks for a concise free-form answer.
inline std::string answer_prompt(std::string_view query, const QueryRecord* record) {
    if (record && record->scenario == Scenario::MultipleChoice && record->choices) {
        std::string p = "Answer the following multiple-choice question. Reply with only the "
                        "letter of the correct option.\n\nQuestion: ";
        p += query;
        p += "\nOptions:\n";
        char letter = 'A';
        for (const auto& choice : *record->choices) {
            p += letter;
            p += ") ";
            p += choice;
            p += '\n';
            ++letter;
        }
        p += "Answer:";
        return p;
    }
    std::string p = "Answer the following question concisely.\n\nQuestion: ";
    p += query;
    p += "\nAnswer:";
    return p;
}

/// Scoring reference: for multiple-choice records whose reference answer
/// matches one of the choices, the reference becomes that option's letter so
/// letter answers compare against letters.
inline std::string scoring_reference(const QueryRecord& record) {
    if (record.scenario == Scenario::MultipleChoice && record.choices) {
        const std::string ref = normalize_text(record.reference_answer);
        char letter = 'A';
        for (const auto& choice : *record.choices) {
            if (normalize_text(choice) == ref) return std::string(1, letter);
            ++letter;
        }
    }
    return record.reference_answer;
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
    std::string algorithm = "linucb";  // learner tag, "static:<Arm>", or "baseline"
    Hyperparameters hyperparameters;
    ArmSetChoice arm_choice = ArmSetChoice::FiveRewrites;
    RewardWeights weights;

    std::optional<std::string> dataset_path;
    std::optional<std::size_t> bootstrap_to;
    std::string dataset_name;  // defaults to file stem / preset name

    std::optional<std::string> env_preset_path;
    std::optional<Json> env_inline;  // inline {"env":..., "context":...}

    std::string extractor = "rule_based";  // rule_based | judge | recorded
    std::string lexicon_dir = "data/lexicons";
    std::string template_dir;  // optional override of the arm instruction templates
    std::string rewriter = "mock";  // mock | templated | recorded
    std::string client = "mock";    // mock | recorded | live
    std::string client_fixtures;    // mock fixture JSONL (optional)
    std::string cassette;           // recorded-cassette path
    std::string mock_fallback = "unknown";
    LiveClientOptions live;

    std::int64_t rounds = 0;
    std::vector<std::uint64_t> seeds;
    std::size_t test_split = 100;
    bool exhaustive_oracle = false;
    bool bias_enabled = true;
    double lambda_explore = 0.1;
    std::string out_dir;
    bool offline = false;

    void validate() const {
        const int sources = (dataset_path ? 1 : 0) + (env_preset_path ? 1 : 0) +
                            (env_inline ? 1 : 0);
        if (sources != 1)
            throw ValidationError("config must name exactly one of dataset or env");
        if (rounds < 1) throw ValidationError("rounds must be >= 1");
        if (seeds.empty()) throw ValidationError("seeds must be non-empty");
        weights.validate();
        if (offline && client == "live")
            throw ValidationError("offline mode forbids the live client");
    }

    Json to_json() const {
        Json j{{"algorithm", algorithm},
               {"hyperparameters", hyperparameters.to_json()},
               {"arm_set", arm_choice == ArmSetChoice::FiveRewrites ? "five" : "five_plus_norewrite"},
               {"reward_weights", weights.to_json()},
               {"extractor", extractor},
               {"lexicon_dir", lexicon_dir},
               {"template_dir", template_dir},
               {"rewriter", rewriter},
               {"client", client},
               {"rounds", rounds},
               {"seeds", seeds},
               {"test_split", test_split},
               {"exhaustive_oracle", exhaustive_oracle},
               {"bias_enabled", bias_enabled},
               {"lambda_explore", lambda_explore},
               {"out_dir", out_dir},
               {"offline", offline}};
        if (dataset_path) j["dataset"] = *dataset_path;
        if (bootstrap_to) j["bootstrap_to"] = *bootstrap_to;
        if (!dataset_name.empty()) j["dataset_name"] = dataset_name;
        if (env_preset_path) j["env_preset"] = *env_preset_path;
        if (env_inline) j["env"] = *env_inline;
        if (!client_fixtures.empty()) j["client_fixtures"] = client_fixtures;
        if (!cassette.empty()) j["cassette"] = cassette;
        return j;
    }

    static ExperimentConfig from_json(const Json& j) {
        ExperimentConfig c;
        c.algorithm = j.value("algorithm", c.algorithm);
        if (j.contains("hyperparameters"))
            c.hyperparameters = Hyperparameters::from_json(j.at("hyperparameters"));
        c.arm_choice = arm_set_choice_from_string(j.value("arm_set", std::string("five")));
        if (j.contains("reward_weights")) c.weights = RewardWeights::from_json(j.at("reward_weights"));
        if (j.contains("dataset")) c.dataset_path = j.at("dataset").get<std::string>();
        if (j.contains("bootstrap_to")) c.bootstrap_to = j.at("bootstrap_to").get<std::size_t>();
        c.dataset_name = j.value("dataset_name", std::string{});
        if (j.contains("env_preset")) c.env_preset_path = j.at("env_preset").get<std::string>();
        if (j.contains("env")) c.env_inline = j.at("env");
        c.extractor = j.value("extractor", c.extractor);
        c.lexicon_dir = j.value("lexicon_dir", c.lexicon_dir);
        c.template_dir = j.value("template_dir", c.template_dir);
        c.rewriter = j.value("rewriter", c.rewriter);
        c.client = j.value("client", c.client);
        c.client_fixtures = j.value("client_fixtures", c.client_fixtures);
        c.cassette = j.value("cassette", c.cassette);
        c.mock_fallback = j.value("mock_fallback", c.mock_fallback);
        if (j.contains("live")) {
            const auto& l = j.at("live");
            c.live.base_url = l.value("base_url", c.live.base_url);
            c.live.model = l.value("model", c.live.model);
            c.live.temperature = l.value("temperature", c.live.temperature);
            c.live.timeout_seconds = l.value("timeout_seconds", c.live.timeout_seconds);
            c.live.max_retries = l.value("max_retries", c.live.max_retries);
            c.live.api_key_env = l.value("api_key_env", c.live.api_key_env);
        }
        c.rounds = j.value("rounds", c.rounds);
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        c.test_split = j.value("test_split", c.test_split);
        c.exhaustive_oracle = j.value("exhaustive_oracle", c.exhaustive_oracle);
        c.bias_enabled = j.value("bias_enabled", c.bias_enabled);
        c.lambda_explore = j.value("lambda_explore", c.lambda_explore);
        c.out_dir = j.value("out_dir", c.out_dir);
        c.offline = j.value("offline", c.offline);
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------------------
// Policy construction from config tags

inline std::optional<int> resolve_static_arm(std::string_view tag,
                                             const std::vector<RewriteArm>& arms) {
    const std::string key = normalize_algorithm_tag(tag);
    if (key == "baseline" || key == "norewrite" || key == "baselinenorewrite")
        return arm_index_by_name(arms, "NoRewrite");
    if (key.rfind("static", 0) == 0 || key.rfind("prompting", 0) == 0) {
        const std::string rest = key.substr(key.rfind("static", 0) == 0 ? 6 : 9);
        for (const auto& a : arms)
            if (normalize_algorithm_tag(a.name) == rest) return a.index;
        throw ValidationError("unknown_arm in static tag: " + std::string(tag));
    }
    return std::nullopt;
}

inline bool is_baseline_tag(std::string_view tag) {
    const std::string key = normalize_algorithm_tag(tag);
    return key == "baseline" || key == "norewrite" || key == "baselinenorewrite";
}

/// A degenerate always-one-arm policy: the zero-shot prompting baselines and
/// the no-rewrite baseline.
inline std::unique_ptr<Policy> static_policy(std::string_view arm_tag,
                                             const std::vector<RewriteArm>& arms,
                                             std::uint64_t seed = 0) {
    std::optional<int> arm = resolve_static_arm(arm_tag, arms);
    if (!arm) {
        // accept a bare arm name too
        const std::string key = normalize_algorithm_tag(arm_tag);
        for (const auto& a : arms)
            if (normalize_algorithm_tag(a.name) == key) arm = a.index;
    }
    if (!arm) throw ValidationError("unknown_arm: " + std::string(arm_tag));
    return std::make_unique<StaticPolicy>(*arm, arms[static_cast<std::size_t>(*arm)].name,
                                          static_cast<int>(arms.size()), seed);
}

inline std::unique_ptr<Policy> make_policy_for_tag(std::string_view tag,
                                                   const std::vector<RewriteArm>& arms,
                                                   int dimension, const Hyperparameters& hp,
                                                   std::uint64_t seed) {
    if (resolve_static_arm(tag, arms) || normalize_algorithm_tag(tag).rfind("static", 0) == 0)
        return static_policy(tag, arms, seed);
    return make_policy(tag, static_cast<int>(arms.size()), dimension, hp, seed);
}

// ---------------------------------------------------------------------------
// Round execution

/// Everything a round needs besides the policy. Owns the backends.
struct RoundServices {
    ExperimentConfig config;
    std::vector<RewriteArm> arms;
    Extractor extractor;
    Rewriter rewriter;
    std::unique_ptr<ChatClient> client;
    std::unique_ptr<Judge> judge;
    std::optional<EnvSpec> env;
    std::optional<ContextDistribution> context_dist;

    static RoundServices build(const ExperimentConfig& cfg) {
        cfg.validate();
        RoundServices s;
        s.config = cfg;
        ArmSetChoice choice = cfg.arm_choice;
        if (is_baseline_tag(cfg.algorithm) && choice == ArmSetChoice::FiveRewrites) {
            // the baseline needs an identity arm even when the learners use K=5
            choice = ArmSetChoice::FiveRewritesPlusNoRewrite;
        }
        s.arms = cfg.template_dir.empty() ? arm_set(choice)
                                          : arm_set_from_dir(choice, cfg.template_dir);

        if (cfg.env_preset_path || cfg.env_inline) {
            const EnvPreset preset = cfg.env_preset_path
                                         ? load_env_preset(*cfg.env_preset_path)
                                         : EnvPreset::from_json(*cfg.env_inline);
            s.env = preset.env;
            s.context_dist = preset.context;
            if (s.env->num_arms != static_cast<int>(s.arms.size()))
                throw ValidationError("env arm count does not match the configured arm set");
        } else {
            if (cfg.extractor == "rule_based")
                s.extractor.lexicons = Lexicons::load(cfg.lexicon_dir);
            s.extractor.bias_enabled = cfg.bias_enabled;
            if (cfg.extractor == "recorded") s.extractor.kind = ExtractorKind::Recorded;

            if (cfg.client == "mock") {
                auto mock = std::make_unique<MockClient>(cfg.mock_fallback);
                if (!cfg.client_fixtures.empty()) mock->load_fixtures(cfg.client_fixtures);
                s.client = std::move(mock);
            } else if (cfg.client == "recorded") {
                s.client = std::make_unique<RecordedClient>(cfg.cassette);
            } else if (cfg.client == "live") {
                LiveClientOptions opt = cfg.live;
                opt.offline = cfg.offline;
                s.client = std::make_unique<LiveClient>(opt);
            } else {
                throw ValidationError("unknown client kind: " + cfg.client);
            }

            if (cfg.extractor == "judge") {
                s.extractor.kind = ExtractorKind::JudgeBacked;
                s.extractor.judge_client = s.client.get();
            }

            s.rewriter.kind = rewriter_kind_from_string(cfg.rewriter);
            if (s.rewriter.kind == RewriterKind::Templated) s.rewriter.client = s.client.get();

            if (cfg.client == "mock") {
                s.judge = std::make_unique<MockJudge>();
            } else {
                s.judge = std::make_unique<ClientJudge>(*s.client);
            }
        }
        return s;
    }
};

class RoundSkipped : public Error {
  public:
    using Error::Error;
};

/// One dataset-mode round: extract -> select -> rewrite -> infer -> score ->
/// update, in that order. Backend failures throw RoundSkipped and leave the
/// policy byte-identical to its pre-round state.
inline PullRecord run_round(Policy& policy, const QueryRecord& record, std::string_view query,
                            std::int64_t t, RoundServices& services) {
    const auto& cfg = services.config;
    FeatureVector context;
    try {
        context = services.extractor.extract(query);
    } catch (const BackendError& e) {
        throw RoundSkipped(std::string("feature extraction failed: ") + e.what());
    }

    const std::uint64_t draws_before = policy.rng_draws();
    const SelectResult sel = policy.select(&context, t);

    struct ArmOutcome {
        std::string rewritten;
        std::string answer;
        RewardBreakdown breakdown;
    };
    auto evaluate_arm = [&](int arm_index) -> ArmOutcome {
        const RewriteArm& arm = services.arms[static_cast<std::size_t>(arm_index)];
        ArmOutcome o;
        o.rewritten = services.rewriter.rewrite(query, arm);
        o.answer = services.client->complete(answer_prompt(o.rewritten, &record));
        o.breakdown = score_answer(query, o.answer, scoring_reference(record), cfg.weights,
                                   *services.judge);
        return o;
    };

    PullRecord out;
    try {
        const ArmOutcome chosen = evaluate_arm(sel.arm);
        out.t = t;
        out.query_id = record.id;
        out.context = context;
        out.arm = sel.arm;
        out.probs = sel.probs;
        out.rewritten_query = chosen.rewritten;
        out.answer = chosen.answer;
        out.s_llm = chosen.breakdown.s_llm;
        out.s_fuzz = chosen.breakdown.s_fuzz;
        out.s_bleu = chosen.breakdown.s_bleu;
        out.reward = chosen.breakdown.reward;
        if (cfg.exhaustive_oracle) {
            // counterfactually evaluates every arm; the chosen arm is still
            // the only one charged to the policy
            double best = out.reward;
            for (int k = 0; k < static_cast<int>(services.arms.size()); ++k) {
                if (k == sel.arm) continue;
                best = std::max(best, evaluate_arm(k).breakdown.reward);
            }
            out.oracle_reward = best;
        }
    } catch (const BackendError& e) {
        policy.restore_rng(policy.rng_seed(), draws_before);
        throw RoundSkipped(std::string("backend failure: ") + e.what());
    }

    policy.update(sel.arm, &context, out.reward);
    return out;
}

/// One synthetic-environment round. All K counterfactual rewards are drawn
/// from the environment stream every round, so the reward realization is a
/// pure function of (seed, t, arm) and the realized maximum is a valid
/// per-round oracle.
inline PullRecord run_env_round(Policy& policy, std::int64_t t, RoundServices& services,
                                Rng& env_rng) {
    const auto& cfg = services.config;
    const EnvSpec& env = *services.env;
    const FeatureVector context = sample_context(*services.context_dist, env_rng,
                                                 cfg.bias_enabled);
    std::vector<double> outcomes(static_cast<std::size_t>(env.num_arms));
    for (int k = 0; k < env.num_arms; ++k) outcomes[static_cast<std::size_t>(k)] =
        env_step(env, context, k, env_rng);

    const SelectResult sel = policy.select(&context, t);
    const double reward = outcomes[static_cast<std::size_t>(sel.arm)];
    policy.update(sel.arm, &context, reward);

    PullRecord out;
    out.t = t;
    out.query_id = "synthetic:" + std::to_string(t);
    out.context = context;
    out.arm = sel.arm;
    out.probs = sel.probs;
    out.s_llm = reward;  // synthetic rounds carry the reward in every component
    out.s_fuzz = reward;
    out.s_bleu = reward;
    out.reward = reward;
    out.oracle_reward = *std::max_element(outcomes.begin(), outcomes.end());
    return out;
}

// ---------------------------------------------------------------------------
// Experiment runner

struct ExperimentResult {
    std::uint64_t seed = 0;
    Trace trace;
    Json report;
    PolicyState final_state;
    std::int64_t skipped = 0;
    std::vector<std::string> skip_reasons;
};

/// Runs the configured policy once per seed. Dataset order is shuffled once
/// per seed (not per algorithm), so different policies under the same seed
/// face identical query streams and win rates pair cleanly.
inline std::vector<ExperimentResult> run_experiment(const ExperimentConfig& config) {
    RoundServices services = RoundServices::build(config);
    const int dimension = config.bias_enabled ? kFeatureCount + 1 : kFeatureCount;

    std::vector<QueryRecord> records;
    if (config.dataset_path) {
        LoadOptions opts;
        opts.bootstrap_to = config.bootstrap_to;
        opts.seed = config.seeds.front();
        records = load_dataset(*config.dataset_path, opts);
        if (records.empty()) throw ValidationError("dataset is empty");
    }

    std::vector<ExperimentResult> results;
    for (const std::uint64_t seed : config.seeds) {
        ExperimentResult res;
        res.seed = seed;
        auto policy = make_policy_for_tag(config.algorithm, services.arms, dimension,
                                          config.hyperparameters, derive_seed(seed, 2));

        Trace trace;
        trace.num_arms = static_cast<int>(services.arms.size());
        trace.lambda_explore = config.lambda_explore;

        if (services.env) {
            Rng env_rng(derive_seed(seed, 1));
            for (std::int64_t t = 1; t <= config.rounds; ++t)
                trace.records.push_back(run_env_round(*policy, t, services, env_rng));
        } else {
            // per-seed shuffle shared across algorithms
            std::vector<std::size_t> order(records.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            Rng shuffle_rng(derive_seed(seed, 0));
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1],
                          order[static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i)))]);

            std::int64_t t = 1;
            for (std::int64_t round = 0; round < config.rounds; ++round) {
                const QueryRecord& rec =
                    records[order[static_cast<std::size_t>(round) % order.size()]];
                try {
                    trace.records.push_back(run_round(*policy, rec, rec.question, t, services));
                    ++t;
                } catch (const RoundSkipped& e) {
                    ++res.skipped;
                    res.skip_reasons.emplace_back(e.what());
                }
            }
        }

        trace.validate();
        res.report = metrics_report(trace, nullptr, config.test_split);
        res.final_state = policy->snapshot();
        res.trace = std::move(trace);
        results.push_back(std::move(res));
    }
    return results;
}

/// Directory-safe name for an algorithm tag.
inline std::string sanitize_tag(std::string_view tag) {
    std::string out;
    for (char c : tag)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(
                          static_cast<unsigned char>(c)))
                                                                  : '_');
    return out;
}

/// Writes trace/report/state/manifest for each per-seed result. The manifest
/// is written first with complete=false and rewritten once artifacts are on
/// disk, so interrupted runs are identifiable. When every trace carries
/// oracle rewards, a seed-averaged regret curve is emitted beside the seeds.
inline void write_experiment_artifacts(const ExperimentConfig& config,
                                       const std::vector<ExperimentResult>& results) {
    if (config.out_dir.empty()) throw ValidationError("config out_dir is empty");
    const std::string algo_dir = sanitize_tag(config.algorithm);
    for (const auto& res : results) {
        const std::filesystem::path dir =
            std::filesystem::path(config.out_dir) / algo_dir / ("seed_" + std::to_string(res.seed));
        Json skip_reasons = Json::array();
        for (std::size_t i = 0; i < res.skip_reasons.size() && i < 20; ++i)
            skip_reasons.push_back(res.skip_reasons[i]);
        Json manifest{{"tool_version", std::string(kToolVersion)},
                      {"config_hash", json_hash(config.to_json())},
                      {"config", config.to_json()},
                      {"algorithm", config.algorithm},
                      {"dataset", config.dataset_name},
                      {"num_arms", res.trace.num_arms},
                      {"seed", res.seed},
                      {"rounds", config.rounds},
                      {"skipped", res.skipped},
                      {"skip_reasons", skip_reasons},
                      {"complete", false},
                      {"artifacts", Json::array({"trace.jsonl", "report.json", "state.json"})}};
        write_json_file(dir / "manifest.json", manifest);
        write_trace_jsonl(dir / "trace.jsonl", res.trace);
        write_json_file(dir / "report.json", res.report);
        write_json_file(dir / "state.json", res.final_state.to_json());
        manifest["complete"] = true;
        write_json_file(dir / "manifest.json", manifest);
    }
    bool all_oracle = !results.empty();
    for (const auto& res : results) all_oracle = all_oracle && has_oracle(res.trace);
    if (all_oracle) {
        std::map<std::string, std::vector<Trace>> by_algo;
        for (const auto& res : results) by_algo[config.algorithm].push_back(res.trace);
        write_text_file(std::filesystem::path(config.out_dir) / algo_dir / "regret_curve.csv",
                        regret_curve_csv(by_algo));
    }
}

}  // namespace rwb
