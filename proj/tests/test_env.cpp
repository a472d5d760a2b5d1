#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "rwb/env.hpp"
#include "rwb/io.hpp"

using namespace rwb;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "rwb_env_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

EnvSpec two_arm_env(double mu0, double mu1, NoiseMode mode = NoiseMode::Bernoulli) {
    // bias-only parameterization: mean is independent of the context
    EnvSpec spec;
    spec.num_arms = 2;
    spec.theta_star = {Vec(18, 0.0), Vec(18, 0.0)};
    spec.theta_star[0].back() = mu0;
    spec.theta_star[1].back() = mu1;
    spec.noise_mode = mode;
    spec.validate();
    return spec;
}

}  // namespace

TEST_CASE("env_mean: constructed saturation and zero cases") {
    EnvSpec spec;
    spec.num_arms = 2;
    spec.theta_star = {Vec(17, 0.0), Vec(17, 0.0)};
    spec.theta_star[0][3] = 1.0;  // arm 0 keys on feature 3
    spec.validate();

    FeatureVector ctx;
    ctx.set(3, 1);
    CHECK(env_mean(spec, ctx, 0) == doctest::Approx(1.0));
    CHECK(env_mean(spec, ctx, 1) == doctest::Approx(0.0));

    Rng rng(1);
    CHECK(env_step(spec, ctx, 0, rng) == doctest::Approx(1.0));
    CHECK(env_step(spec, ctx, 1, rng) == doctest::Approx(0.0));
    CHECK_THROWS_AS(env_mean(spec, ctx, 5), ValidationError);
}

TEST_CASE("env_step: Bernoulli draws match the mean within 0.02") {
    const EnvSpec spec = two_arm_env(0.3, 0.7);
    FeatureVector ctx;
    Rng rng(42);
    double sum = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) sum += env_step(spec, ctx, 0, rng);
    CHECK(std::fabs(sum / n - 0.3) < 0.02);
}

TEST_CASE("env_step: gaussian mode clips to the unit interval") {
    EnvSpec spec = two_arm_env(0.5, 0.5, NoiseMode::GaussianClipped);
    spec.noise_scale = 2.0;
    FeatureVector ctx;
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const double r = env_step(spec, ctx, 0, rng);
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
    }
}

TEST_CASE("oracle_best: argmax with lowest-index ties") {
    const EnvSpec tied = two_arm_env(0.4, 0.4);
    FeatureVector ctx;
    CHECK(oracle_best(tied, ctx).first == 0);
    CHECK(oracle_best(tied, ctx).second == doctest::Approx(0.4));

    const EnvSpec spec = two_arm_env(0.2, 0.9);
    const auto [arm, mu] = oracle_best(spec, ctx);
    CHECK(arm == 1);
    CHECK(mu == doctest::Approx(0.9));
}

TEST_CASE("oracle mean dominates every arm for every context") {
    const auto preset = load_env_preset(std::string(RWB_DATA_DIR) + "/presets/contextual_advantage.json");
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const FeatureVector ctx = sample_context(preset.context, rng);
        const auto [arm, mu] = oracle_best(preset.env, ctx);
        for (int a = 0; a < preset.env.num_arms; ++a)
            CHECK(mu >= env_mean(preset.env, ctx, a) - 1e-12);
    }
}

TEST_CASE("contextual-advantage preset has no single best arm across clusters") {
    const auto preset = load_env_preset(std::string(RWB_DATA_DIR) + "/presets/contextual_advantage.json");
    // clusters are the four corners of the two cluster bits (features 0 and 1)
    std::set<int> optimal_arms;
    for (int f0 = 0; f0 <= 1; ++f0) {
        for (int f1 = 0; f1 <= 1; ++f1) {
            FeatureVector centroid;
            centroid.set(0, f0);
            centroid.set(1, f1);
            const auto [arm, mu] = oracle_best(preset.env, centroid);
            optimal_arms.insert(arm);
            CHECK(mu > 0.5);  // each cluster has a clearly best arm
        }
    }
    CHECK(optimal_arms.size() >= 3);  // optimal arm varies across clusters
    // and no arm is optimal for all centroids
    for (int a = 0; a < preset.env.num_arms; ++a) {
        bool always_best = true;
        for (int f0 = 0; f0 <= 1; ++f0)
            for (int f1 = 0; f1 <= 1; ++f1) {
                FeatureVector centroid;
                centroid.set(0, f0);
                centroid.set(1, f1);
                if (oracle_best(preset.env, centroid).first != a) always_best = false;
            }
        CHECK_FALSE(always_best);
    }
}

TEST_CASE("shipped presets parse and validate") {
    for (const char* name : {"uniform", "contextual_advantage", "single_best_arm"}) {
        const auto preset =
            load_env_preset(std::string(RWB_DATA_DIR) + "/presets/" + name + ".json");
        CHECK(preset.env.num_arms == 5);
        CHECK(preset.name == name);
    }
}

TEST_CASE("sample_context: degenerate and stochastic probabilities") {
    Rng rng(5);
    const FeatureVector all_zero = sample_context(ContextDistribution::uniform(0.0), rng);
    for (int i = 0; i < kFeatureCount; ++i) CHECK(all_zero.flag(i) == 0);
    const FeatureVector all_one = sample_context(ContextDistribution::uniform(1.0), rng);
    for (int i = 0; i < kFeatureCount; ++i) CHECK(all_one.flag(i) == 1);

    std::array<double, 17> sums{};
    const int n = 10000;
    const auto dist = ContextDistribution::uniform(0.5);
    for (int i = 0; i < n; ++i) {
        const FeatureVector fv = sample_context(dist, rng);
        for (int f = 0; f < kFeatureCount; ++f) sums[static_cast<std::size_t>(f)] += fv.flag(f);
    }
    for (double s : sums) CHECK(std::fabs(s / n - 0.5) < 0.02);
}

TEST_CASE("seeded determinism of the reward stream") {
    const EnvSpec spec = two_arm_env(0.3, 0.6);
    FeatureVector ctx;
    Rng a(99);
    Rng b(99);
    for (int i = 0; i < 200; ++i)
        CHECK(env_step(spec, ctx, i % 2, a) == env_step(spec, ctx, i % 2, b));
}

TEST_CASE("load_dataset: identity ingestion and error reporting") {
    const auto path = temp_file("small.jsonl");
    {
        std::ofstream out(path);
        out << R"({"id":"a","dataset":"d","question":"Q1?","reference_answer":"A1"})" << "\n";
        out << R"({"id":"b","dataset":"d","question":"Q2?","reference_answer":"A2","scenario":"abstractive"})"
            << "\n";
        out << R"({"id":"c","dataset":"d","question":"Q3?","reference_answer":"A3","perturbations":["p1","p2"]})"
            << "\n";
    }
    const auto records = load_dataset(path.string());
    REQUIRE(records.size() == 3);
    CHECK(records[0].id == "a");
    CHECK(records[1].scenario == Scenario::Abstractive);
    CHECK(records[2].perturbations.size() == 2);

    // field-exact round-trip through serialization
    for (const auto& r : records) CHECK(QueryRecord::from_json(r.to_json()) == r);
}

TEST_CASE("load_dataset: missing field carries the line number") {
    const auto path = temp_file("broken.jsonl");
    {
        std::ofstream out(path);
        out << R"({"id":"a","dataset":"d","question":"Q1?","reference_answer":"A1"})" << "\n";
        out << R"({"id":"b","dataset":"d","question":"Q2?"})" << "\n";
    }
    try {
        load_dataset(path.string());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("load_dataset: malformed JSON carries the line number") {
    const auto path = temp_file("malformed.jsonl");
    {
        std::ofstream out(path);
        out << "{not json}\n";
    }
    CHECK_THROWS_AS(load_dataset(path.string()), ParseError);
}

TEST_CASE("load_dataset: bootstrap resamples up to the target with unique ids") {
    const auto path = temp_file("boot.jsonl");
    {
        std::ofstream out(path);
        for (int i = 0; i < 807; ++i)
            out << R"({"id":"q)" << i << R"(","dataset":"d","question":"Q?","reference_answer":"A"})"
                << "\n";
    }
    LoadOptions opts;
    opts.bootstrap_to = 1050;
    opts.seed = 7;
    const auto records = load_dataset(path.string(), opts);
    CHECK(records.size() == 1050);
    std::set<std::string> ids;
    for (const auto& r : records) ids.insert(r.id);
    CHECK(ids.size() == 1050);  // "#k" suffixes keep ids unique
    // resampled ids refer to originals
    CHECK(records[900].id.find('#') != std::string::npos);

    // deterministic under the same seed
    const auto again = load_dataset(path.string(), opts);
    for (std::size_t i = 0; i < records.size(); ++i) CHECK(records[i].id == again[i].id);
}

namespace {

QueryRecord filter_record(const std::string& id) {
    QueryRecord r;
    r.id = id;
    r.dataset = "d";
    r.question = "original " + id;
    r.reference_answer = "ref";
    for (int i = 0; i < 5; ++i) r.perturbations.push_back("pert" + std::to_string(i) + " " + id);
    return r;
}

}  // namespace

TEST_CASE("filter_queries applies the answerability and perturbation-validity rule") {
    // per-record truth table: {original correct, #incorrect perturbations}
    struct Row {
        bool original;
        int incorrect;
        bool kept;
    };
    const std::vector<Row> table = {
        {false, 2, false},  // original answered incorrectly: excluded
        {true, 0, false},   // all perturbations fine: excluded
        {true, 1, true},
        {true, 2, true},
        {true, 3, true},
        {true, 4, false},  // too many broken perturbations
        {true, 5, false},
    };
    std::vector<QueryRecord> records;
    for (std::size_t i = 0; i < table.size(); ++i)
        records.push_back(filter_record("r" + std::to_string(i)));

    auto original_ok = [&](const QueryRecord& r) {
        return table[static_cast<std::size_t>(r.id[1] - '0')].original;
    };
    auto pert_ok = [&](const QueryRecord& r, int idx) {
        return idx >= table[static_cast<std::size_t>(r.id[1] - '0')].incorrect;
    };

    const auto kept = filter_queries(records, original_ok, pert_ok, 11);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].record.id == "r2");
    CHECK(kept[1].record.id == "r3");
    CHECK(kept[2].record.id == "r4");
    for (const auto& k : kept) {
        CHECK(k.perturbation_index >= 0);
        CHECK(k.perturbation_index < 5);
        CHECK(k.incoming_query ==
              k.record.perturbations[static_cast<std::size_t>(k.perturbation_index)]);
    }

    // reproducible under seed
    const auto again = filter_queries(records, original_ok, pert_ok, 11);
    for (std::size_t i = 0; i < kept.size(); ++i)
        CHECK(kept[i].perturbation_index == again[i].perturbation_index);
}

TEST_CASE("trivial perturber: five deterministic rotations") {
    const auto variants = trivial_perturbations("what is the capital of france");
    REQUIRE(variants.size() == 5);
    CHECK(variants[0] == "is the capital of france what");
    CHECK(variants[1] == "the capital of france what is");
    CHECK(variants == trivial_perturbations("what is the capital of france"));
    // degenerate input stays intact
    for (const auto& v : trivial_perturbations("single")) CHECK(v == "single");
}

TEST_CASE("filter_queries demands exactly five perturbations") {
    QueryRecord r = filter_record("x");
    r.perturbations.pop_back();
    std::vector<QueryRecord> records{r};
    CHECK_THROWS_AS(filter_queries(
                        records, [](const QueryRecord&) { return true; },
                        [](const QueryRecord&, int) { return true; }, 0),
                    ValidationError);
}
