// Command-line front end: run experiments, sweep reward weights, compute
// metrics reports, materialize analysis matrices, extract features, and
// filter datasets. Exit codes: 0 success, 1 runtime failure, 2 bad
// configuration or input.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "rwb/rwb.hpp"

namespace fs = std::filesystem;
using rwb::Json;

namespace {

constexpr const char* kDefaultDataDir =
#ifdef RWB_DATA_DIR
    RWB_DATA_DIR;
#else
    "data";
#endif

struct RunOptions {
    std::string config_path;
    std::string out_override;
    std::string algorithm_override;
    std::string arm_set_override;
    std::vector<std::uint64_t> seed_override;
    std::optional<std::size_t> bootstrap_override;
    int jobs = 1;
    bool offline = false;
    bool exhaustive = false;
};

rwb::ExperimentConfig load_config(const RunOptions& opt) {
    rwb::ExperimentConfig cfg = rwb::ExperimentConfig::from_json(rwb::read_json_file(opt.config_path));
    if (!opt.out_override.empty()) cfg.out_dir = opt.out_override;
    if (!opt.algorithm_override.empty()) cfg.algorithm = opt.algorithm_override;
    if (!opt.arm_set_override.empty())
        cfg.arm_choice = rwb::arm_set_choice_from_string(opt.arm_set_override);
    if (!opt.seed_override.empty()) cfg.seeds = opt.seed_override;
    if (opt.bootstrap_override) cfg.bootstrap_to = opt.bootstrap_override;
    if (opt.offline) cfg.offline = true;
    if (opt.exhaustive) cfg.exhaustive_oracle = true;
    if (cfg.dataset_name.empty()) {
        if (cfg.dataset_path) cfg.dataset_name = fs::path(*cfg.dataset_path).stem().string();
        if (cfg.env_preset_path) cfg.dataset_name = fs::path(*cfg.env_preset_path).stem().string();
    }
    cfg.validate();
    return cfg;
}

int cmd_run(const RunOptions& opt) {
    rwb::ExperimentConfig cfg = load_config(opt);
    if (cfg.out_dir.empty()) cfg.out_dir = "results";

    // one worker per seed, bounded by --jobs; every worker owns its experiment
    std::vector<std::uint64_t> seeds = cfg.seeds;
    std::vector<rwb::ExperimentResult> results(seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::string first_error;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            try {
                rwb::ExperimentConfig one = cfg;
                one.seeds = {seeds[i]};
                results[i] = rwb::run_experiment(one).front();
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (first_error.empty()) first_error = e.what();
            }
        }
    };
    const int jobs = std::max(1, std::min<int>(opt.jobs, static_cast<int>(seeds.size())));
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (!first_error.empty()) throw rwb::Error(first_error);

    rwb::write_experiment_artifacts(cfg, results);
    for (const auto& res : results) {
        std::cout << cfg.algorithm << " seed=" << res.seed
                  << " rounds=" << res.trace.records.size() << " skipped=" << res.skipped
                  << " adj_reward=" << res.report["adj_reward"].dump() << "\n";
    }
    std::cout << "artifacts written to " << cfg.out_dir << "\n";
    return 0;
}

int trace_arm_count(const fs::path& trace_path, int fallback) {
    const fs::path manifest = trace_path.parent_path() / "manifest.json";
    if (fs::exists(manifest)) return rwb::read_json_file(manifest).at("num_arms").get<int>();
    return fallback;
}

std::string trace_label(const std::string& path) {
    const fs::path p(path);
    if (p.parent_path().has_parent_path())
        return p.parent_path().parent_path().filename().string() + "/" +
               p.parent_path().filename().string();
    return path;
}

int cmd_report(const std::vector<std::string>& trace_paths, const std::string& baseline_path,
               const std::string& out_path, const std::string& curve_path,
               std::size_t test_split, int num_arms) {
    const rwb::Trace baseline =
        rwb::read_trace_jsonl(baseline_path, trace_arm_count(baseline_path, num_arms));
    std::vector<double> baseline_rewards = baseline.reward_sequence();

    Json report = Json::object();
    std::map<std::string, std::vector<rwb::Trace>> curves;
    for (const auto& path : trace_paths) {
        const rwb::Trace trace = rwb::read_trace_jsonl(path, trace_arm_count(path, num_arms));
        if (trace.records.size() != baseline.records.size())
            throw rwb::ValidationError("alignment_error: trace lengths differ for " + path);
        for (std::size_t i = 0; i < trace.records.size(); ++i)
            if (trace.records[i].query_id != baseline.records[i].query_id)
                throw rwb::ValidationError("alignment_error: query ids differ at t=" +
                                           std::to_string(i + 1) + " in " + path);
        const std::string label = trace_label(path);
        report[label] = rwb::metrics_report(trace, &baseline_rewards, test_split);
        if (rwb::has_oracle(trace)) curves[label.substr(0, label.find('/'))].push_back(trace);
    }
    if (!curve_path.empty()) {
        if (curves.empty())
            throw rwb::ValidationError("missing_oracle: regret curves need oracle rewards");
        rwb::write_text_file(curve_path, rwb::regret_curve_csv(curves));
    }
    const std::string text = report.dump(2) + "\n";
    if (out_path.empty())
        std::cout << text;
    else
        rwb::write_text_file(out_path, text);
    return 0;
}

int cmd_sweep(const std::string& breakdowns_path, const std::string& labels_path, double step,
              const std::string& out_path) {
    std::vector<rwb::RewardBreakdown> breakdowns;
    {
        std::ifstream in(breakdowns_path);
        if (!in) throw rwb::ValidationError("cannot open breakdowns: " + breakdowns_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            breakdowns.push_back(rwb::RewardBreakdown::from_json(Json::parse(line)));
        }
    }
    std::vector<int> labels;
    {
        std::ifstream in(labels_path);
        if (!in) throw rwb::ValidationError("cannot open labels: " + labels_path);
        std::string token;
        while (in >> token) labels.push_back(std::stoi(token));
    }
    const auto points = rwb::sweep_simplex(breakdowns, labels, step);
    std::string csv = "alpha,beta,gamma,auc,in_frontier\n";
    for (const auto& p : points) {
        csv += rwb::format_double(p.weights.alpha);
        csv += ',';
        csv += rwb::format_double(p.weights.beta);
        csv += ',';
        csv += rwb::format_double(p.weights.gamma);
        csv += ',';
        csv += rwb::format_double(p.auc);
        csv += ',';
        csv += p.in_frontier ? "1" : "0";
        csv += '\n';
    }
    if (out_path.empty())
        std::cout << csv;
    else
        rwb::write_text_file(out_path, csv);
    return 0;
}

void emit_matrix(const fs::path& out_dir, const std::string& name, const std::string& title,
                 const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                 const rwb::CellMatrix& cells, const std::string& corner) {
    rwb::write_text_file(out_dir / (name + ".csv"), rwb::cell_csv(rows, cols, cells, corner));
    rwb::write_json_file(out_dir / (name + ".meta.json"), rwb::axis_sidecar(title, rows, cols));
}

rwb::CellMatrix to_cells(const std::vector<rwb::Vec>& rows) {
    rwb::CellMatrix cells(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (double v : rows[r]) cells[r].emplace_back(v);
    return cells;
}

int cmd_figures(const std::string& results_dir, const std::string& out) {
    const rwb::AnalysisBundle bundle = rwb::AnalysisBundle::load(results_dir);
    const fs::path out_dir = out.empty() ? fs::path(results_dir) / "figures" : fs::path(out);
    fs::create_directories(out_dir);
    const auto arms = rwb::arm_labels(bundle.num_arms);
    const auto features = rwb::feature_labels();

    {
        const auto fractions = rwb::arm_selection_fractions(bundle.traces, bundle.num_arms);
        std::vector<std::string> datasets;
        std::vector<rwb::Vec> rows;
        for (const auto& [dataset, row] : fractions) {
            datasets.push_back(dataset);
            rows.push_back(row);
        }
        emit_matrix(out_dir, "arm_fractions", "arm selection fractions per dataset", datasets,
                    arms, to_cells(rows), "dataset");
    }
    {
        const auto ranks = rwb::mean_reward_ranks(bundle.traces, bundle.num_arms);
        std::vector<std::string> datasets;
        rwb::CellMatrix cells;
        for (const auto& [dataset, row] : ranks) {
            datasets.push_back(dataset);
            cells.push_back(row);
        }
        emit_matrix(out_dir, "reward_ranks", "mean-reward ranks per dataset (1 = best)", datasets,
                    arms, cells, "dataset");
    }
    emit_matrix(out_dir, "feature_variance", "per-arm feature variance", arms, features,
                rwb::per_arm_feature_variance(bundle.traces, bundle.num_arms), "arm");
    emit_matrix(out_dir, "feature_uplift", "per-arm feature uplift", arms, features,
                rwb::feature_uplift(bundle.traces, bundle.num_arms), "arm");
    emit_matrix(out_dir, "context_kl", "inter-arm symmetric KL context distances", arms, arms,
                to_cells(rwb::inter_arm_context_kl(bundle.traces, bundle.num_arms)), "arm");

    // theta reports per linear algorithm: seed-averaged within each dataset,
    // plus the cross-dataset mean labeled "all"
    std::map<std::string, std::map<std::string, std::vector<rwb::PolicyState>>> grouped;
    for (const auto& ls : bundle.snapshots) {
        try {
            if (!rwb::restore_policy(ls.state)->linear()) continue;
        } catch (const std::exception&) {
            continue;
        }
        grouped[ls.algorithm][ls.dataset].push_back(ls.state);
        grouped[ls.algorithm]["all"].push_back(ls.state);
    }
    for (const auto& [algorithm, by_dataset] : grouped) {
        for (const auto& [dataset, snaps] : by_dataset) {
            const rwb::ThetaReport rep = rwb::theta_report(snaps);
            const std::string base = rwb::sanitize_tag(algorithm) + "__" + rwb::sanitize_tag(dataset);
            emit_matrix(out_dir, "theta_raw_" + base, "raw coefficients: " + algorithm + " on " + dataset,
                        arms, features, to_cells(rep.raw), "arm");
            emit_matrix(out_dir, "theta_norm_" + base,
                        "min-max normalized coefficients: " + algorithm + " on " + dataset, arms,
                        features, rep.normalized, "arm");
            if (dataset == "all") {
                const auto diffs = rwb::pairwise_coefficient_differences(rep);
                std::vector<std::string> pair_labels;
                for (const auto& [a, b] : diffs.pairs)
                    pair_labels.push_back(arms[static_cast<std::size_t>(a)] + " vs " +
                                          arms[static_cast<std::size_t>(b)]);
                rwb::CellMatrix cells(features.size());
                for (std::size_t f = 0; f < features.size(); ++f)
                    for (const auto& cell : diffs.cells[f]) cells[f].push_back(cell.diff);
                emit_matrix(out_dir, "coeff_diffs_" + rwb::sanitize_tag(algorithm),
                            "pairwise normalized coefficient differences: " + algorithm, features,
                            pair_labels, cells, "feature");
            }
        }
    }
    std::cout << "figure matrices written to " << out_dir.string() << "\n";
    return 0;
}

int cmd_features(const std::string& query, const std::string& lexicon_dir) {
    rwb::Extractor ex;
    ex.lexicons = rwb::Lexicons::load(lexicon_dir);
    const rwb::FeatureVector fv = ex.extract(query);
    Json j = Json::object();
    for (int i = 0; i < rwb::kFeatureCount; ++i)
        j[std::string(rwb::kFeatureNames[static_cast<std::size_t>(i)])] = fv.flag(i);
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_filter(const std::string& dataset_path, const std::string& table_path, std::uint64_t seed,
               const std::string& out_path) {
    const auto records = rwb::load_dataset(dataset_path);
    const Json table = rwb::read_json_file(table_path);
    auto original_ok = [&](const rwb::QueryRecord& r) {
        return table.at(r.id).at("original_correct").get<bool>();
    };
    auto pert_ok = [&](const rwb::QueryRecord& r, int idx) {
        return table.at(r.id).at("perturbation_correct").at(static_cast<std::size_t>(idx)).get<bool>();
    };
    const auto kept = rwb::filter_queries(records, original_ok, pert_ok, seed);
    std::string out;
    for (const auto& k : kept) {
        rwb::QueryRecord r = k.record;
        r.question = k.incoming_query;  // the chosen perturbation becomes the incoming query
        out += r.to_json().dump();
        out += '\n';
    }
    if (out_path.empty())
        std::cout << out;
    else
        rwb::write_text_file(out_path, out);
    std::cerr << "kept " << kept.size() << " of " << records.size() << " records\n";
    return 0;
}

int cmd_validate(const std::string& config_path, const std::string& dataset_path) {
    if (!config_path.empty()) {
        rwb::ExperimentConfig::from_json(rwb::read_json_file(config_path));
        std::cout << "config ok: " << config_path << "\n";
    }
    if (!dataset_path.empty()) {
        const auto records = rwb::load_dataset(dataset_path);
        std::cout << "dataset ok: " << records.size() << " records\n";
    }
    if (config_path.empty() && dataset_path.empty())
        throw rwb::ValidationError("nothing to validate; pass --config and/or --dataset");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bandit-driven query rewriting: experiments, metrics, analyses"};
    app.require_subcommand(1);

    RunOptions run_opt;
    auto* run = app.add_subcommand("run", "run experiments from a config file");
    run->add_option("--config", run_opt.config_path, "experiment config JSON")->required();
    run->add_option("--seed", run_opt.seed_override, "seed override (repeatable)");
    run->add_option("--out", run_opt.out_override, "output directory override");
    run->add_option("--algorithm", run_opt.algorithm_override, "algorithm tag override");
    run->add_option("--arm-set", run_opt.arm_set_override, "arm set: five | five_plus_norewrite");
    run->add_option("--bootstrap-to", run_opt.bootstrap_override, "bootstrap dataset to N records");
    run->add_option("--jobs", run_opt.jobs, "parallel workers (one experiment each)");
    run->add_flag("--offline", run_opt.offline, "hard-fail any network use");
    run->add_flag("--exhaustive", run_opt.exhaustive, "evaluate all arms per round for the oracle");

    std::vector<std::string> report_traces;
    std::string report_baseline;
    std::string report_out;
    std::string report_curve;
    std::size_t report_split = 100;
    int report_arms = 5;
    auto* report = app.add_subcommand("report", "metrics report from traces");
    report->add_option("--trace", report_traces, "policy trace JSONL (repeatable)")->required();
    report->add_option("--baseline", report_baseline, "baseline trace JSONL")->required();
    report->add_option("--out", report_out, "output JSON path (stdout when omitted)");
    report->add_option("--regret-curve", report_curve, "also emit a regret-vs-t CSV here");
    report->add_option("--test-split", report_split, "win-rate split size (final pulls)");
    report->add_option("--num-arms", report_arms, "arm count when no manifest is present");

    std::string sweep_breakdowns;
    std::string sweep_labels;
    std::string sweep_out;
    double sweep_step = 0.1;
    auto* sweep = app.add_subcommand("sweep", "reward-weight simplex sweep over stored breakdowns");
    sweep->add_option("--breakdowns", sweep_breakdowns, "JSONL of reward breakdowns")->required();
    sweep->add_option("--labels", sweep_labels, "binary labels file")->required();
    sweep->add_option("--step", sweep_step, "grid step (must divide 1)");
    sweep->add_option("--out", sweep_out, "output CSV path (stdout when omitted)");

    std::string figures_results;
    std::string figures_out;
    auto* figures = app.add_subcommand("figures", "materialize analysis matrices from results");
    figures->add_option("--results", figures_results, "results directory")->required();
    figures->add_option("--out", figures_out, "output directory (default <results>/figures)");

    std::string features_query;
    std::string features_lexicons = std::string(kDefaultDataDir) + "/lexicons";
    auto* features = app.add_subcommand("features", "extract the 17 features for a query");
    features->add_option("query", features_query, "query text")->required();
    features->add_option("--lexicons", features_lexicons, "lexicon directory");

    std::string filter_dataset;
    std::string filter_table;
    std::string filter_out;
    std::uint64_t filter_seed = 0;
    auto* filter = app.add_subcommand("filter", "apply the query-construction filter");
    filter->add_option("--dataset", filter_dataset, "dataset JSONL")->required();
    filter->add_option("--table", filter_table, "correctness table JSON")->required();
    filter->add_option("--seed", filter_seed, "perturbation-choice seed");
    filter->add_option("--out", filter_out, "output JSONL path (stdout when omitted)");

    std::string validate_config;
    std::string validate_dataset;
    auto* validate = app.add_subcommand("validate", "lint a config and/or dataset");
    validate->add_option("--config", validate_config, "experiment config JSON");
    validate->add_option("--dataset", validate_dataset, "dataset JSONL");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems are configuration errors
    }

    try {
        if (run->parsed()) return cmd_run(run_opt);
        if (report->parsed())
            return cmd_report(report_traces, report_baseline, report_out, report_curve,
                              report_split, report_arms);
        if (sweep->parsed()) return cmd_sweep(sweep_breakdowns, sweep_labels, sweep_step, sweep_out);
        if (figures->parsed()) return cmd_figures(figures_results, figures_out);
        if (features->parsed()) return cmd_features(features_query, features_lexicons);
        if (filter->parsed()) return cmd_filter(filter_dataset, filter_table, filter_seed, filter_out);
        if (validate->parsed()) return cmd_validate(validate_config, validate_dataset);
    } catch (const rwb::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const rwb::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
