#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rwb/core.hpp"

namespace rwb {

/// One experiment run: consecutive pull records plus the arm-set size the
/// entropy metric normalizes against.
struct Trace {
    std::vector<PullRecord> records;
    int num_arms = 0;
    double lambda_explore = 0.1;

    void validate() const {
        if (num_arms < 2) throw ValidationError("trace needs at least two arms");
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i].t != static_cast<std::int64_t>(i) + 1)
                throw ValidationError("trace t indices must be consecutive from 1");
            records[i].validate();
        }
    }

    std::vector<int> arm_sequence() const {
        std::vector<int> arms;
        arms.reserve(records.size());
        for (const auto& r : records) arms.push_back(r.arm);
        return arms;
    }

    std::vector<double> reward_sequence() const {
        std::vector<double> rs;
        rs.reserve(records.size());
        for (const auto& r : records) rs.push_back(r.reward);
        return rs;
    }
};

/// Normalized Shannon entropy of the empirical arm distribution over a
/// selection-history prefix: H = -sum p ln p / ln K, with 0 ln 0 = 0.
inline double normalized_entropy(std::span<const int> selection_history, int num_arms) {
    if (selection_history.empty()) throw ValidationError("empty_history");
    if (num_arms < 2) throw ValidationError("need at least two arms");
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_arms), 0);
    for (int a : selection_history) {
        if (a < 0 || a >= num_arms) throw ValidationError("arm index out of range");
        ++counts[static_cast<std::size_t>(a)];
    }
    const double total = static_cast<double>(selection_history.size());
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(num_arms));
}

/// Metric 1: R_adj = sum_t (r_t + lambda * H_t), where H_t is the normalized
/// entropy of the selection history up to and including pull t.
inline double exploration_adjusted_reward(const Trace& trace) {
    trace.validate();
    std::vector<std::size_t> counts(static_cast<std::size_t>(trace.num_arms), 0);
    const double log_k = std::log(static_cast<double>(trace.num_arms));
    double total = 0.0;
    for (std::size_t t = 0; t < trace.records.size(); ++t) {
        ++counts[static_cast<std::size_t>(trace.records[t].arm)];
        const double n = static_cast<double>(t + 1);
        double h = 0.0;
        for (std::size_t c : counts) {
            if (c == 0) continue;
            const double p = static_cast<double>(c) / n;
            h -= p * std::log(p);
        }
        total += trace.records[t].reward + trace.lambda_explore * (h / log_k);
    }
    return total;
}

/// Metric 2 (single run): sum_t (r*_t - r_t). Every record must carry an
/// oracle reward; live traces without one report regret as unavailable
/// instead of approximating it.
inline double cumulative_regret(const Trace& trace) {
    trace.validate();
    double regret = 0.0;
    for (const auto& r : trace.records) {
        if (!r.oracle_reward) throw ValidationError("missing_oracle at t=" + std::to_string(r.t));
        regret += *r.oracle_reward - r.reward;
    }
    return regret;
}

/// Metric 2 (reported form): mean of per-run cumulative regrets.
inline double mean_cumulative_regret(std::span<const Trace> traces) {
    if (traces.empty()) throw ValidationError("no traces");
    double sum = 0.0;
    for (const auto& t : traces) sum += cumulative_regret(t);
    return sum / static_cast<double>(traces.size());
}

/// Metric 3: percentage of paired trials where the policy's reward strictly
/// exceeds the baseline's. Ties count as losses.
inline double win_rate(std::span<const double> policy_rewards,
                       std::span<const double> baseline_rewards) {
    if (policy_rewards.size() != baseline_rewards.size())
        throw ValidationError("length_mismatch: reward sequences");
    if (policy_rewards.empty()) throw ValidationError("win_rate needs at least one pair");
    std::size_t wins = 0;
    for (std::size_t i = 0; i < policy_rewards.size(); ++i)
        if (policy_rewards[i] > baseline_rewards[i]) ++wins;
    return 100.0 * static_cast<double>(wins) / static_cast<double>(policy_rewards.size());
}

/// Whether every record in the trace carries an oracle reward.
inline bool has_oracle(const Trace& trace) {
    for (const auto& r : trace.records)
        if (!r.oracle_reward) return false;
    return !trace.records.empty();
}

/// Metrics report for one policy trace, optionally paired with a baseline
/// reward stream for the win rate (computed over the final test_split pulls).
inline Json metrics_report(const Trace& trace, const std::vector<double>* baseline_rewards,
                           std::size_t test_split = 100) {
    Json j;
    j["adj_reward"] = exploration_adjusted_reward(trace);
    if (has_oracle(trace)) {
        j["cum_regret"] = cumulative_regret(trace);
    } else {
        j["cum_regret"] = "unavailable";
    }
    if (baseline_rewards) {
        const auto rewards = trace.reward_sequence();
        if (rewards.size() != baseline_rewards->size())
            throw ValidationError("alignment_error: baseline trace length differs");
        const std::size_t n = std::min(test_split, rewards.size());
        const std::size_t start = rewards.size() - n;
        j["win_rate"] = win_rate(std::span(rewards).subspan(start),
                                 std::span(*baseline_rewards).subspan(start));
    } else {
        j["win_rate"] = nullptr;
    }
    return j;
}

/// Regret-vs-t curves, mean across runs, one block per algorithm.
/// Columns: t, mean_regret, algorithm.
inline std::string regret_curve_csv(
    const std::map<std::string, std::vector<Trace>>& traces_by_algorithm) {
    std::string out = "t,mean_regret,algorithm\n";
    for (const auto& [algo, traces] : traces_by_algorithm) {
        if (traces.empty()) continue;
        std::size_t horizon = 0;
        for (const auto& tr : traces) horizon = std::max(horizon, tr.records.size());
        std::vector<double> sum(horizon, 0.0);
        std::vector<std::size_t> n(horizon, 0);
        for (const auto& tr : traces) {
            double acc = 0.0;
            for (std::size_t t = 0; t < tr.records.size(); ++t) {
                const auto& r = tr.records[t];
                if (!r.oracle_reward)
                    throw ValidationError("missing_oracle in regret curve input");
                acc += *r.oracle_reward - r.reward;
                sum[t] += acc;
                ++n[t];
            }
        }
        for (std::size_t t = 0; t < horizon; ++t) {
            out += std::to_string(t + 1);
            out += ',';
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", sum[t] / static_cast<double>(n[t]));
            out += buf;
            out += ',';
            out += algo;
            out += '\n';
        }
    }
    return out;
}

}  // namespace rwb
