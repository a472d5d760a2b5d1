#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rwb/core.hpp"

namespace rwb {

// ---------------------------------------------------------------------------
// Tokenization and text normalization

/// Lowercases, strips punctuation at token boundaries, splits on whitespace.
/// Internal punctuation ("isn't") is kept. This is the pinned tokenization
/// for both bleu1 and token_set_ratio.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string tok;
    auto flush = [&] {
        // strip leading/trailing non-alphanumeric characters
        std::size_t b = 0;
        std::size_t e = tok.size();
        while (b < e && !std::isalnum(static_cast<unsigned char>(tok[b]))) ++b;
        while (e > b && !std::isalnum(static_cast<unsigned char>(tok[e - 1]))) --e;
        if (e > b) out.emplace_back(tok.substr(b, e - b));
        tok.clear();
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else {
            tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    flush();
    return out;
}

/// Lowercase, drop all punctuation, collapse whitespace runs to single spaces.
inline std::string normalize_text(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(u)));
        } else if (std::isspace(u)) {
            pending_space = true;
        }
        // punctuation dropped entirely
    }
    return out;
}

// ---------------------------------------------------------------------------
// BLEU-1

/// Clipped unigram precision: sum over candidate token types of
/// min(count in candidate, count in reference) divided by candidate length,
/// capped at 1. Empty candidate scores 0 by convention.
inline double bleu1(std::string_view candidate, std::string_view reference) {
    const auto cand = tokenize(candidate);
    if (cand.empty()) return 0.0;
    const auto ref = tokenize(reference);
    std::map<std::string, int> cand_counts;
    std::map<std::string, int> ref_counts;
    for (const auto& t : cand) ++cand_counts[t];
    for (const auto& t : ref) ++ref_counts[t];
    int matched = 0;
    for (const auto& [tok, n] : cand_counts) {
        const auto it = ref_counts.find(tok);
        if (it != ref_counts.end()) matched += std::min(n, it->second);
    }
    return std::min(1.0, static_cast<double>(matched) / static_cast<double>(cand.size()));
}

// ---------------------------------------------------------------------------
// Token-set ratio

/// Indel distance (Levenshtein restricted to insertions and deletions),
/// computed as len(a) + len(b) - 2*LCS(a, b).
inline std::size_t indel_distance(std::string_view a, std::string_view b) {
    const std::size_t la = a.size();
    const std::size_t lb = b.size();
    std::vector<std::size_t> prev(lb + 1, 0);
    std::vector<std::size_t> cur(lb + 1, 0);
    for (std::size_t i = 1; i <= la; ++i) {
        for (std::size_t j = 1; j <= lb; ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return la + lb - 2 * prev[lb];
}

/// Normalized indel similarity: 1 - distance/(len(a)+len(b)); two empty
/// strings are identical (1.0).
inline double indel_similarity(std::string_view a, std::string_view b) {
    const std::size_t total = a.size() + b.size();
    if (total == 0) return 1.0;
    return 1.0 - static_cast<double>(indel_distance(a, b)) / static_cast<double>(total);
}

/// Token-set similarity: build the sorted unique token sets of both inputs,
/// form t0 = intersection, t1 = t0 + (A minus B), t2 = t0 + (B minus A),
/// all space-joined, and return the best normalized indel similarity among
/// the three pairings. Two empty inputs score 1.0; exactly one empty scores 0.
inline double token_set_ratio(std::string_view a, std::string_view b) {
    auto toks_a = tokenize(a);
    auto toks_b = tokenize(b);
    if (toks_a.empty() && toks_b.empty()) return 1.0;
    if (toks_a.empty() || toks_b.empty()) return 0.0;

    std::sort(toks_a.begin(), toks_a.end());
    toks_a.erase(std::unique(toks_a.begin(), toks_a.end()), toks_a.end());
    std::sort(toks_b.begin(), toks_b.end());
    toks_b.erase(std::unique(toks_b.begin(), toks_b.end()), toks_b.end());

    std::vector<std::string> inter;
    std::vector<std::string> diff_ab;
    std::vector<std::string> diff_ba;
    std::set_intersection(toks_a.begin(), toks_a.end(), toks_b.begin(), toks_b.end(),
                          std::back_inserter(inter));
    std::set_difference(toks_a.begin(), toks_a.end(), toks_b.begin(), toks_b.end(),
                        std::back_inserter(diff_ab));
    std::set_difference(toks_b.begin(), toks_b.end(), toks_a.begin(), toks_a.end(),
                        std::back_inserter(diff_ba));

    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& t : v) {
            if (!s.empty()) s.push_back(' ');
            s += t;
        }
        return s;
    };
    auto join2 = [](const std::string& x, const std::string& y) {
        if (x.empty()) return y;
        if (y.empty()) return x;
        return x + " " + y;
    };

    const std::string t0 = join(inter);
    const std::string t1 = join2(t0, join(diff_ab));
    const std::string t2 = join2(t0, join(diff_ba));

    return std::max({indel_similarity(t0, t1), indel_similarity(t0, t2),
                     indel_similarity(t1, t2)});
}

// ---------------------------------------------------------------------------
// Judge

/// Binary consistency judgment between a system answer and the reference.
class Judge {
  public:
    virtual ~Judge() = default;
    /// Returns 1 iff the system answer is consistent with the reference.
    /// Throws BackendError when the backend is unavailable; callers must
    /// skip the round rather than fabricate a score.
    virtual int consistent(std::string_view question, std::string_view system_answer,
                           std::string_view reference_answer) = 0;
};

/// Offline stand-in: consistent iff the normalized reference is a substring
/// of the normalized system answer or vice versa. Exists so the pipeline is
/// testable without an LLM; makes no claim of matching a real judge.
class MockJudge final : public Judge {
  public:
    int consistent(std::string_view, std::string_view system_answer,
                   std::string_view reference_answer) override {
        const std::string sys = normalize_text(system_answer);
        const std::string ref = normalize_text(reference_answer);
        if (sys.empty() || ref.empty()) return 0;
        return sys.find(ref) != std::string::npos || ref.find(sys) != std::string::npos ? 1 : 0;
    }
};

// ---------------------------------------------------------------------------
// Reward combination

struct RewardBreakdown {
    double s_llm = 0.0;
    double s_fuzz = 0.0;
    double s_bleu = 0.0;
    double reward = 0.0;

    Json to_json() const {
        return Json{{"s_llm", s_llm}, {"s_fuzz", s_fuzz}, {"s_bleu", s_bleu}, {"reward", reward}};
    }
    static RewardBreakdown from_json(const Json& j) {
        RewardBreakdown b;
        b.s_llm = j.at("s_llm").get<double>();
        b.s_fuzz = j.at("s_fuzz").get<double>();
        b.s_bleu = j.at("s_bleu").get<double>();
        b.reward = j.value("reward", 0.0);
        return b;
    }
};

/// r = alpha*s_llm + beta*s_fuzz + gamma*s_bleu. Components must be in range.
inline double combine_reward(double s_llm, double s_fuzz, double s_bleu, const RewardWeights& w) {
    w.validate();
    if (s_llm != 0.0 && s_llm != 1.0)
        throw ValidationError("component_out_of_range: s_llm must be binary");
    if (s_fuzz < 0.0 || s_fuzz > 1.0)
        throw ValidationError("component_out_of_range: s_fuzz");
    if (s_bleu < 0.0 || s_bleu > 1.0)
        throw ValidationError("component_out_of_range: s_bleu");
    const double r = w.alpha * s_llm + w.beta * s_fuzz + w.gamma * s_bleu;
    return std::clamp(r, 0.0, 1.0);
}

/// Scores one (answer, reference) pair with all three signals.
inline RewardBreakdown score_answer(std::string_view question, std::string_view answer,
                                    std::string_view reference, const RewardWeights& w,
                                    Judge& judge) {
    RewardBreakdown b;
    b.s_llm = judge.consistent(question, answer, reference);
    b.s_fuzz = token_set_ratio(answer, reference);
    b.s_bleu = bleu1(answer, reference);
    b.reward = combine_reward(b.s_llm, b.s_fuzz, b.s_bleu, w);
    return b;
}

// ---------------------------------------------------------------------------
// ROC-AUC

/// Rank-statistic AUC: (concordant pairs + 0.5 * tied pairs) / (P * N),
/// computed via average ranks. Requires at least one positive and one
/// negative label.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw ValidationError("length_mismatch: scores vs labels");
    if (scores.size() < 2) throw ValidationError("need at least two observations");
    std::size_t positives = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw ValidationError("labels must be binary");
        positives += static_cast<std::size_t>(y);
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0)
        throw ValidationError("degenerate_labels: need both classes");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double p = static_cast<double>(positives);
    const double n = static_cast<double>(negatives);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

// ---------------------------------------------------------------------------
// Reward-weight simplex sweep

struct SimplexPoint {
    RewardWeights weights;
    double auc = 0.0;
    bool in_frontier = false;
};

/// Evaluates ROC-AUC of the recombined reward at every nonnegative weight
/// triple on the triangular grid with the given step (default 0.1, i.e. 66
/// points). Points with auc >= 0.99 * max_auc are flagged as the 1% frontier.
/// Weights are formed as exact grid fractions i/n so vertices like (0.6,0.3,0.1)
/// appear bit-exactly.
inline std::vector<SimplexPoint> sweep_simplex(std::span<const RewardBreakdown> breakdowns,
                                               std::span<const int> labels, double step = 0.1) {
    if (breakdowns.size() != labels.size())
        throw ValidationError("length_mismatch: breakdowns vs labels");
    if (step <= 0.0 || step > 1.0) throw ValidationError("step must be in (0,1]");
    const int n = static_cast<int>(std::llround(1.0 / step));
    if (std::fabs(n * step - 1.0) > 1e-9)
        throw ValidationError("step must divide 1 evenly");

    std::vector<SimplexPoint> points;
    std::vector<double> scores(breakdowns.size());
    for (int i = 0; i <= n; ++i) {
        for (int j = 0; j + i <= n; ++j) {
            const int k = n - i - j;
            const RewardWeights w(static_cast<double>(i) / n, static_cast<double>(j) / n,
                                  static_cast<double>(k) / n);
            for (std::size_t q = 0; q < breakdowns.size(); ++q)
                scores[q] = combine_reward(breakdowns[q].s_llm, breakdowns[q].s_fuzz,
                                           breakdowns[q].s_bleu, w);
            points.push_back(SimplexPoint{w, roc_auc(scores, labels), false});
        }
    }
    double max_auc = 0.0;
    for (const auto& p : points) max_auc = std::max(max_auc, p.auc);
    for (auto& p : points) p.in_frontier = p.auc >= 0.99 * max_auc;
    return points;
}

}  // namespace rwb
