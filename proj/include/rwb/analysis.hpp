#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rwb/core.hpp"
#include "rwb/io.hpp"
#include "rwb/metrics.hpp"
#include "rwb/policies.hpp"

namespace rwb {

/// Matrix with possibly-absent cells. Absent means "insufficient data", which
/// is deliberately distinct from zero so heatmaps cannot conflate the two.
using CellMatrix = std::vector<std::vector<std::optional<double>>>;

struct LabeledTrace {
    std::string algorithm;
    std::string dataset;
    std::uint64_t seed = 0;
    Trace trace;
};

struct LabeledState {
    std::string algorithm;
    std::string dataset;
    std::uint64_t seed = 0;
    PolicyState state;
};

/// Raw material for the post-hoc analyses: traces and final snapshots from a
/// results directory, all sharing one arm-set size.
struct AnalysisBundle {
    std::vector<LabeledTrace> traces;
    std::vector<LabeledState> snapshots;
    int num_arms = 0;

    static AnalysisBundle load(const std::filesystem::path& results_dir) {
        AnalysisBundle b;
        if (!std::filesystem::is_directory(results_dir))
            throw ValidationError("not a results directory: " + results_dir.string());
        for (const auto& entry : std::filesystem::recursive_directory_iterator(results_dir)) {
            if (!entry.is_regular_file() || entry.path().filename() != "manifest.json") continue;
            const Json manifest = read_json_file(entry.path());
            if (!manifest.value("complete", false)) continue;
            const auto dir = entry.path().parent_path();
            const int k = manifest.at("num_arms").get<int>();
            if (b.num_arms == 0) b.num_arms = k;
            if (b.num_arms != k)
                throw ValidationError("traces disagree on arm-set size in " + dir.string());
            LabeledTrace lt;
            lt.algorithm = manifest.at("algorithm").get<std::string>();
            lt.dataset = manifest.value("dataset", std::string{});
            lt.seed = manifest.at("seed").get<std::uint64_t>();
            lt.trace = read_trace_jsonl(dir / "trace.jsonl", k);
            b.traces.push_back(std::move(lt));
            if (std::filesystem::exists(dir / "state.json")) {
                LabeledState ls;
                ls.algorithm = b.traces.back().algorithm;
                ls.dataset = b.traces.back().dataset;
                ls.seed = b.traces.back().seed;
                ls.state = PolicyState::from_json(read_json_file(dir / "state.json"));
                b.snapshots.push_back(std::move(ls));
            }
        }
        if (b.traces.empty()) throw ValidationError("no completed runs under " + results_dir.string());
        return b;
    }
};

// ---------------------------------------------------------------------------
// Arm selection fractions (per dataset)

inline std::map<std::string, Vec> arm_selection_fractions(std::span<const LabeledTrace> traces,
                                                          int num_arms) {
    if (traces.empty()) throw ValidationError("no traces");
    std::map<std::string, Vec> counts;
    std::map<std::string, double> totals;
    for (const auto& lt : traces) {
        auto& row = counts.try_emplace(lt.dataset, Vec(static_cast<std::size_t>(num_arms), 0.0))
                        .first->second;
        for (const auto& r : lt.trace.records) {
            row[static_cast<std::size_t>(r.arm)] += 1.0;
            totals[lt.dataset] += 1.0;
        }
    }
    for (auto& [dataset, row] : counts) {
        const double total = totals[dataset];
        for (double& v : row) v /= total;
    }
    return counts;
}

// ---------------------------------------------------------------------------
// Mean-reward ranks (1 = best, average ranks on ties)

inline std::map<std::string, std::vector<std::optional<double>>> mean_reward_ranks(
    std::span<const LabeledTrace> traces, int num_arms) {
    if (traces.empty()) throw ValidationError("no traces");
    struct Acc {
        Vec sum;
        std::vector<std::size_t> n;
    };
    std::map<std::string, Acc> acc;
    for (const auto& lt : traces) {
        auto& a = acc.try_emplace(lt.dataset,
                                  Acc{Vec(static_cast<std::size_t>(num_arms), 0.0),
                                      std::vector<std::size_t>(static_cast<std::size_t>(num_arms), 0)})
                      .first->second;
        for (const auto& r : lt.trace.records) {
            a.sum[static_cast<std::size_t>(r.arm)] += r.reward;
            ++a.n[static_cast<std::size_t>(r.arm)];
        }
    }
    std::map<std::string, std::vector<std::optional<double>>> out;
    for (const auto& [dataset, a] : acc) {
        std::vector<std::optional<double>> means(static_cast<std::size_t>(num_arms));
        for (int k = 0; k < num_arms; ++k)
            if (a.n[static_cast<std::size_t>(k)] > 0)
                means[static_cast<std::size_t>(k)] =
                    a.sum[static_cast<std::size_t>(k)] / static_cast<double>(a.n[static_cast<std::size_t>(k)]);
        std::vector<std::optional<double>> ranks(static_cast<std::size_t>(num_arms));
        for (int k = 0; k < num_arms; ++k) {
            if (!means[static_cast<std::size_t>(k)]) continue;  // never pulled: rank absent
            double higher = 0.0;
            double equal = 0.0;
            for (int j = 0; j < num_arms; ++j) {
                if (!means[static_cast<std::size_t>(j)]) continue;
                if (*means[static_cast<std::size_t>(j)] > *means[static_cast<std::size_t>(k)])
                    higher += 1.0;
                else if (*means[static_cast<std::size_t>(j)] == *means[static_cast<std::size_t>(k)])
                    equal += 1.0;
            }
            // average rank over the tied group
            ranks[static_cast<std::size_t>(k)] = higher + (equal + 1.0) / 2.0;
        }
        out[dataset] = std::move(ranks);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-arm feature variance

/// Variance p(1-p) of each binary feature over the pulls where each arm was
/// chosen; cells for never-chosen arms are absent.
inline CellMatrix per_arm_feature_variance(std::span<const LabeledTrace> traces, int num_arms) {
    if (traces.empty()) throw ValidationError("no traces");
    std::vector<Vec> ones(static_cast<std::size_t>(num_arms), Vec(kFeatureCount, 0.0));
    std::vector<double> pulls(static_cast<std::size_t>(num_arms), 0.0);
    for (const auto& lt : traces) {
        for (const auto& r : lt.trace.records) {
            pulls[static_cast<std::size_t>(r.arm)] += 1.0;
            for (int f = 0; f < kFeatureCount; ++f)
                ones[static_cast<std::size_t>(r.arm)][static_cast<std::size_t>(f)] +=
                    r.context.flag(f);
        }
    }
    CellMatrix out(static_cast<std::size_t>(num_arms),
                   std::vector<std::optional<double>>(kFeatureCount));
    for (int k = 0; k < num_arms; ++k) {
        if (pulls[static_cast<std::size_t>(k)] == 0.0) continue;
        for (int f = 0; f < kFeatureCount; ++f) {
            const double p =
                ones[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)] /
                pulls[static_cast<std::size_t>(k)];
            out[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)] = p * (1.0 - p);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Theta reports

struct ThetaReport {
    std::vector<Vec> raw;   // num_arms x 17, seed-averaged coefficients
    CellMatrix normalized;  // per-feature min-max across arms; absent on zero range
};

/// Seed-averaged per-arm coefficient matrices from linear-policy snapshots.
/// The bias coordinate, when present, is dropped so rows line up with the 17
/// named features. Normalization rescales each feature column to [0,1] across
/// arms; features with zero range across arms are flagged absent.
inline ThetaReport theta_report(std::span<const PolicyState> snapshots) {
    if (snapshots.empty()) throw ValidationError("no snapshots");
    std::vector<Vec> sum;
    int num_arms = 0;
    for (const auto& state : snapshots) {
        const auto policy = restore_policy(state);
        if (!policy->linear())
            throw ValidationError("non_linear_policy: " + state.algorithm +
                                  " exposes no coefficients");
        const auto coeffs = policy->coefficients();
        if (sum.empty()) {
            num_arms = static_cast<int>(coeffs.size());
            sum.assign(static_cast<std::size_t>(num_arms), Vec(kFeatureCount, 0.0));
        }
        if (static_cast<int>(coeffs.size()) != num_arms)
            throw ValidationError("snapshots disagree on arm count");
        for (int k = 0; k < num_arms; ++k)
            for (int f = 0; f < kFeatureCount; ++f)
                sum[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)] +=
                    coeffs[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)];
    }
    ThetaReport rep;
    rep.raw = std::move(sum);
    const double n = static_cast<double>(snapshots.size());
    for (auto& row : rep.raw)
        for (double& v : row) v /= n;

    rep.normalized.assign(static_cast<std::size_t>(num_arms),
                          std::vector<std::optional<double>>(kFeatureCount));
    for (int f = 0; f < kFeatureCount; ++f) {
        double lo = rep.raw[0][static_cast<std::size_t>(f)];
        double hi = lo;
        for (int k = 1; k < num_arms; ++k) {
            lo = std::min(lo, rep.raw[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)]);
            hi = std::max(hi, rep.raw[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)]);
        }
        if (hi - lo <= 0.0) continue;  // degenerate range: reported absent
        for (int k = 0; k < num_arms; ++k)
            rep.normalized[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)] =
                (rep.raw[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)] - lo) / (hi - lo);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Feature uplift

/// Delta(f, a) = E[r | arm=a, f=1] - E[r | arm=a, f=0] by direct group
/// averaging; absent when either conditional cell is empty.
inline CellMatrix feature_uplift(std::span<const LabeledTrace> traces, int num_arms) {
    if (traces.empty()) throw ValidationError("no traces");
    struct Cell {
        double sum1 = 0.0, n1 = 0.0, sum0 = 0.0, n0 = 0.0;
    };
    std::vector<std::vector<Cell>> acc(static_cast<std::size_t>(num_arms),
                                       std::vector<Cell>(kFeatureCount));
    for (const auto& lt : traces) {
        for (const auto& r : lt.trace.records) {
            for (int f = 0; f < kFeatureCount; ++f) {
                auto& c = acc[static_cast<std::size_t>(r.arm)][static_cast<std::size_t>(f)];
                if (r.context.flag(f) == 1) {
                    c.sum1 += r.reward;
                    c.n1 += 1.0;
                } else {
                    c.sum0 += r.reward;
                    c.n0 += 1.0;
                }
            }
        }
    }
    CellMatrix out(static_cast<std::size_t>(num_arms),
                   std::vector<std::optional<double>>(kFeatureCount));
    for (int k = 0; k < num_arms; ++k)
        for (int f = 0; f < kFeatureCount; ++f) {
            const auto& c = acc[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)];
            if (c.n1 > 0.0 && c.n0 > 0.0)
                out[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)] =
                    c.sum1 / c.n1 - c.sum0 / c.n0;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Inter-arm context distances

inline double bernoulli_sym_kl(double p, double q) {
    auto kl = [](double a, double b) {
        double s = 0.0;
        if (a > 0.0) s += a * std::log(a / b);
        if (a < 1.0) s += (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
        return s;
    };
    return kl(p, q) + kl(q, p);
}

/// Symmetric KL between per-arm context distributions, modeling each arm's
/// chosen contexts as independent per-feature Bernoullis with Laplace (+1/+2)
/// smoothing. Diagonal is zero by construction.
inline std::vector<Vec> inter_arm_context_kl(std::span<const LabeledTrace> traces, int num_arms) {
    if (traces.empty()) throw ValidationError("no traces");
    std::vector<Vec> ones(static_cast<std::size_t>(num_arms), Vec(kFeatureCount, 0.0));
    std::vector<double> pulls(static_cast<std::size_t>(num_arms), 0.0);
    for (const auto& lt : traces)
        for (const auto& r : lt.trace.records) {
            pulls[static_cast<std::size_t>(r.arm)] += 1.0;
            for (int f = 0; f < kFeatureCount; ++f)
                ones[static_cast<std::size_t>(r.arm)][static_cast<std::size_t>(f)] +=
                    r.context.flag(f);
        }
    auto smoothed = [&](int arm, int f) {
        return (ones[static_cast<std::size_t>(arm)][static_cast<std::size_t>(f)] + 1.0) /
               (pulls[static_cast<std::size_t>(arm)] + 2.0);
    };
    std::vector<Vec> dist(static_cast<std::size_t>(num_arms),
                          Vec(static_cast<std::size_t>(num_arms), 0.0));
    for (int a = 0; a < num_arms; ++a)
        for (int b = a + 1; b < num_arms; ++b) {
            double d = 0.0;
            for (int f = 0; f < kFeatureCount; ++f)
                d += bernoulli_sym_kl(smoothed(a, f), smoothed(b, f));
            dist[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = d;
            dist[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = d;
        }
    return dist;
}

// ---------------------------------------------------------------------------
// Pairwise coefficient differences

struct PairwiseCell {
    std::optional<double> diff;  // normalized[a] - normalized[b]
    std::string label;           // "win" | "loss" | "tie" | "absent"
};

struct PairwiseDiffs {
    std::vector<std::pair<int, int>> pairs;    // unordered arm pairs (a < b)
    std::vector<std::vector<PairwiseCell>> cells;  // feature x pair
};

/// Signed per-feature difference of min-max-normalized coefficients for every
/// unordered arm pair; positive favors the first arm of the pair.
inline PairwiseDiffs pairwise_coefficient_differences(const ThetaReport& report) {
    PairwiseDiffs out;
    const int num_arms = static_cast<int>(report.normalized.size());
    for (int a = 0; a < num_arms; ++a)
        for (int b = a + 1; b < num_arms; ++b) out.pairs.emplace_back(a, b);
    out.cells.assign(kFeatureCount, std::vector<PairwiseCell>(out.pairs.size()));
    for (int f = 0; f < kFeatureCount; ++f) {
        for (std::size_t p = 0; p < out.pairs.size(); ++p) {
            const auto [a, b] = out.pairs[p];
            const auto& va = report.normalized[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
            const auto& vb = report.normalized[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)];
            PairwiseCell cell;
            if (!va || !vb) {
                cell.label = "absent";
            } else {
                const double d = *va - *vb;
                cell.diff = d;
                cell.label = d > 0.0 ? "win" : d < 0.0 ? "loss" : "tie";
            }
            out.cells[static_cast<std::size_t>(f)][p] = std::move(cell);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV emission

inline std::string cell_csv(const std::vector<std::string>& row_labels,
                            const std::vector<std::string>& col_labels, const CellMatrix& cells,
                            const std::string& corner) {
    std::string out = corner;
    for (const auto& c : col_labels) {
        out += ',';
        out += c;
    }
    out += '\n';
    for (std::size_t r = 0; r < cells.size(); ++r) {
        out += row_labels.at(r);
        for (const auto& cell : cells[r]) {
            out += ',';
            if (cell) out += format_double(*cell);
        }
        out += '\n';
    }
    return out;
}

inline std::string dense_csv(const std::vector<std::string>& row_labels,
                             const std::vector<std::string>& col_labels,
                             const std::vector<Vec>& rows, const std::string& corner) {
    CellMatrix cells(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (double v : rows[r]) cells[r].emplace_back(v);
    return cell_csv(row_labels, col_labels, cells, corner);
}

inline Json axis_sidecar(const std::string& title, const std::vector<std::string>& rows,
                         const std::vector<std::string>& cols) {
    return Json{{"title", title}, {"rows", rows}, {"cols", cols},
                {"feature_order", std::vector<std::string>(kFeatureNames.begin(),
                                                           kFeatureNames.end())}};
}

inline std::vector<std::string> feature_labels() {
    return {kFeatureNames.begin(), kFeatureNames.end()};
}

inline std::vector<std::string> arm_labels(int num_arms) {
    const auto arms = arm_set(num_arms == 6 ? ArmSetChoice::FiveRewritesPlusNoRewrite
                                            : ArmSetChoice::FiveRewrites);
    std::vector<std::string> out;
    for (int k = 0; k < num_arms; ++k)
        out.push_back(k < static_cast<int>(arms.size()) ? arms[static_cast<std::size_t>(k)].name
                                                        : "arm" + std::to_string(k));
    return out;
}

}  // namespace rwb
