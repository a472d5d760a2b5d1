#include <doctest.h>

#include <cmath>
#include <vector>

#include "rwb/policies.hpp"
#include "rwb/rng.hpp"

using namespace rwb;

namespace {

FeatureVector unit_context(int coord, bool bias_enabled = false) {
    FeatureVector fv;
    fv.set_bias_enabled(bias_enabled);
    fv.set(coord, 1);
    return fv;
}

FeatureVector random_context(Rng& rng, bool bias_enabled = true) {
    FeatureVector fv;
    fv.set_bias_enabled(bias_enabled);
    for (int i = 0; i < kFeatureCount; ++i) fv.set(i, rng.bernoulli(0.5));
    return fv;
}

}  // namespace

// ---------------------------------------------------------------------------
// EXP3

TEST_CASE("exp3: uniform weights give uniform mixed probabilities") {
    Hyperparameters hp;
    hp.mix_gamma = 0.1;
    Exp3Policy p(5, hp, 1);
    const auto dist = p.distribution();
    for (double v : dist) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("exp3: update multiplies the chosen weight by exp(gamma r / (K p))") {
    Hyperparameters hp;
    hp.mix_gamma = 0.1;
    Exp3Policy p(5, hp, 1);
    p.update(2, nullptr, 1.0);
    CHECK(p.weights()[2] == doctest::Approx(std::exp(0.1)).epsilon(1e-12));
    for (int k : {0, 1, 3, 4}) CHECK(p.weights()[static_cast<std::size_t>(k)] == 1.0);
}

TEST_CASE("exp3: probabilities never fall below the mixing floor") {
    Hyperparameters hp;
    hp.mix_gamma = 0.1;
    Exp3Policy p(5, hp, 3);
    Rng rewards(9);
    for (int t = 1; t <= 2000; ++t) {
        const auto sel = p.select(nullptr, t);
        REQUIRE(sel.probs);
        double sum = 0.0;
        for (double v : *sel.probs) {
            CHECK(v >= 0.1 / 5.0 - 1e-15);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        p.update(sel.arm, nullptr, rewards.uniform01());
    }
}

TEST_CASE("exp3: weight renormalization keeps the distribution intact") {
    Hyperparameters hp;
    hp.mix_gamma = 0.5;
    Exp3Policy p(2, hp, 3);
    for (int i = 0; i < 400; ++i) p.update(0, nullptr, 1.0);
    // the overflow guard has rescaled the weights, but the mixed distribution
    // still converges to (0.75, 0.25) and both weights stay positive
    CHECK(p.weights()[0] < 1e12);
    CHECK(p.weights()[1] > 0.0);
    const auto dist = p.distribution();
    CHECK(dist[0] == doctest::Approx(0.75).epsilon(1e-6));
    CHECK(dist[1] == doctest::Approx(0.25).epsilon(1e-6));
}

// ---------------------------------------------------------------------------
// FTPL

TEST_CASE("ftpl: cumulative rewards add up") {
    Hyperparameters hp;
    FtplPolicy p(5, hp, 1);
    p.update(2, nullptr, 0.3);
    p.update(2, nullptr, 0.5);
    CHECK(p.cumulative()[2] == doctest::Approx(0.8));
    CHECK(p.cumulative()[0] == 0.0);
}

TEST_CASE("ftpl: symmetric state selects uniformly within 0.02") {
    Hyperparameters hp;
    FtplPolicy p(5, hp, 42);
    std::vector<int> counts(5, 0);
    for (int t = 1; t <= 10000; ++t) ++counts[static_cast<std::size_t>(p.select(nullptr, t).arm)];
    for (int c : counts)
        CHECK(std::fabs(c / 10000.0 - 0.2) < 0.02);
}

TEST_CASE("ftpl: vanishing noise recovers the argmax of cumulative rewards") {
    Hyperparameters hp;
    hp.ftpl_eta = 1e9;
    FtplPolicy p(5, hp, 7);
    p.update(3, nullptr, 0.9);
    p.update(1, nullptr, 0.4);
    for (int t = 1; t <= 100; ++t) CHECK(p.select(nullptr, t).arm == 3);
}

// ---------------------------------------------------------------------------
// Beta-Bernoulli Thompson

TEST_CASE("thompson: fractional Beta updates") {
    Hyperparameters hp;
    BetaThompsonPolicy p(5, hp, 1);
    p.update(0, nullptr, 1.0);
    CHECK(p.beta_a(0) == doctest::Approx(2.0));
    CHECK(p.beta_b(0) == doctest::Approx(1.0));
    p.update(1, nullptr, 0.5);
    CHECK(p.beta_a(1) == doctest::Approx(1.5));
    CHECK(p.beta_b(1) == doctest::Approx(1.5));
}

TEST_CASE("thompson: flat priors select uniformly within 0.02") {
    Hyperparameters hp;
    BetaThompsonPolicy p(5, hp, 99);
    std::vector<int> counts(5, 0);
    for (int t = 1; t <= 10000; ++t) ++counts[static_cast<std::size_t>(p.select(nullptr, t).arm)];
    for (int c : counts) CHECK(std::fabs(c / 10000.0 - 0.2) < 0.02);
}

// ---------------------------------------------------------------------------
// LinUCB

TEST_CASE("linucb: fresh state scores 1.0 everywhere and tie-breaks to arm 0") {
    Hyperparameters hp;  // ridge 1, ucb_alpha 1
    LinUcbPolicy p(5, 17, hp, 1);
    const FeatureVector x = unit_context(0);
    CHECK(p.select(&x, 1).arm == 0);
    // theta is zero, bonus is sqrt(x^T I^-1 x) = 1
    const auto theta = p.coefficients();
    for (const auto& row : theta)
        for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("linucb: score after one rank-1 update matches hand linear algebra") {
    Hyperparameters hp;
    hp.ucb_alpha = 0.0;  // greedy first: read off the mean term
    LinUcbPolicy p(2, 17, hp, 1);
    const FeatureVector x = unit_context(0);
    p.update(0, &x, 1.0);

    const Vec theta = p.theta_hat(0);
    CHECK(theta[0] == doctest::Approx(0.5).epsilon(1e-12));
    for (int i = 1; i < 17; ++i) CHECK(theta[static_cast<std::size_t>(i)] == doctest::Approx(0.0));

    // with the exploration term: 0.5 + sqrt(0.5)
    Hyperparameters hp2;
    LinUcbPolicy q(2, 17, hp2, 1);
    q.update(0, &x, 1.0);
    Cholesky ch(q.design(0));
    REQUIRE(ch.ok());
    const double score = dot(x.as_vec(), q.theta_hat(0)) + std::sqrt(ch.quad_inverse(x.as_vec()));
    CHECK(score == doctest::Approx(0.5 + std::sqrt(0.5)).epsilon(1e-9));
    // behaviorally: updated arm now outranks the fresh arm (1.2071 > 1.0)
    CHECK(q.select(&x, 2).arm == 0);
}

TEST_CASE("linucb: alpha zero is greedy on the ridge estimate") {
    Hyperparameters hp;
    hp.ucb_alpha = 0.0;
    LinUcbPolicy p(3, 17, hp, 1);
    const FeatureVector x = unit_context(2);
    p.update(1, &x, 1.0);
    CHECK(p.select(&x, 2).arm == 1);
}

TEST_CASE("linucb: recovers the best arm in the greedy limit after a warm start") {
    // noiseless linear environment with one distinguishing coordinate per arm;
    // after 10 round-robin pulls per arm, alpha=0 LinUCB must match the
    // oracle argmax on every held-out context with a unique best arm
    Hyperparameters hp;
    hp.ucb_alpha = 0.0;
    const int k = 4;
    LinUcbPolicy p(k, 18, hp, 1);
    Rng rng(55);
    const Vec arm_weight = {0.8, 0.65, 0.5, 0.35};
    auto mean_reward = [&](const FeatureVector& fv, int arm) {
        return 0.1 + arm_weight[static_cast<std::size_t>(arm)] * fv.flag(arm);
    };
    auto warm_context = [&] {
        FeatureVector fv;  // bias on; only the four cluster coordinates vary
        for (int i = 0; i < k; ++i) fv.set(i, rng.bernoulli(0.5));
        return fv;
    };
    for (int round = 0; round < 10 * k; ++round) {
        const FeatureVector fv = warm_context();
        const int arm = round % k;
        p.update(arm, &fv, mean_reward(fv, arm));
    }
    // held-out set: the four one-hot contexts, each with a unique best arm
    for (int j = 0; j < k; ++j) {
        FeatureVector fv;
        fv.set(j, 1);
        int best = 0;
        for (int a = 1; a < k; ++a)
            if (mean_reward(fv, a) > mean_reward(fv, best)) best = a;
        CHECK(best == j);
        CHECK(p.select(&fv, 100 + j).arm == best);
    }
}

// ---------------------------------------------------------------------------
// LinUCB-KL

TEST_CASE("linucb_kl: the bound clamps to zero at t=1") {
    Hyperparameters hp;  // kl_c = 3
    LinUcbKlPolicy p(3, 17, hp, 1);
    const FeatureVector x = unit_context(0);
    // raw_bound = (ln 1 + 3 ln(ln 2)) / 1 < 0, so every score is exactly 0
    CHECK(p.select(&x, 1).arm == 0);

    // behavioral check that the score is 0, not just tiny: an arm with a
    // positive mean must dominate at t=1
    p.update(1, &x, 1.0);
    CHECK(p.select(&x, 1).arm == 1);  // mean 0.5 beats clamped-to-zero bonuses
}

TEST_CASE("linucb_kl: bonus formula at t=10 matches the hand trace") {
    Hyperparameters hp;
    LinUcbKlPolicy p(2, 17, hp, 1);
    const FeatureVector e0 = unit_context(0);
    p.update(0, &e0, 0.0);  // n_0 = 1, theta stays 0
    // probe an untouched coordinate so var = 1 exactly
    const FeatureVector e1 = unit_context(1);
    const double expected_bonus =
        std::sqrt(2.0 * (std::log(10.0) + 3.0 * std::log(std::log(11.0))));
    CHECK(expected_bonus == doctest::Approx(3.138903).epsilon(1e-6));

    // arm 1 (never pulled, n=1 floor) also has var 1 and the same bound;
    // construct a distinguishable state: give arm 1 a small positive mean
    p.update(1, &e1, 0.05);
    // score_0(e1) = 0 + bonus(n=1, var=1);  score_1(e1) = mu_1 + bonus(n=1, var=0.5)
    const double score0 = expected_bonus;
    const double mu1 = 0.05 / 2.0;  // ridge shrinks the estimate
    const double score1 =
        mu1 + std::sqrt(2.0 * 0.5 * (std::log(10.0) + 3.0 * std::log(std::log(11.0))));
    REQUIRE(score0 > score1);
    CHECK(p.select(&e1, 10).arm == 0);
}

TEST_CASE("linucb_kl: counts increment once per update") {
    Hyperparameters hp;
    LinUcbKlPolicy p(3, 17, hp, 1);
    const FeatureVector x = unit_context(0);
    CHECK(p.count(0) == 0);
    p.update(0, &x, 0.5);
    p.update(0, &x, 0.5);
    p.update(2, &x, 0.5);
    CHECK(p.count(0) == 2);
    CHECK(p.count(1) == 0);
    CHECK(p.count(2) == 1);
}

// ---------------------------------------------------------------------------
// FTRL

TEST_CASE("ftrl: soft-threshold sparsity sends all-zero state to arm 0") {
    Hyperparameters hp;
    FtrlPolicy p(5, 17, hp, 1);
    const FeatureVector x = unit_context(3);
    CHECK(p.select(&x, 1).arm == 0);
    for (int k = 0; k < 5; ++k)
        for (double v : p.weight(k)) CHECK(v == 0.0);
}

TEST_CASE("ftrl: weight rule hand trace via state injection") {
    Hyperparameters hp;
    hp.ftrl_alpha = 1.0;
    hp.ftrl_beta = 1.0;
    hp.ftrl_l1 = 1.0;
    hp.ftrl_l2 = 0.0;
    FtrlPolicy p(2, 17, hp, 1);
    PolicyState s = p.snapshot();
    s.arms["z"][0][0] = -2.0;  // z_1 = -2 on arm 0
    p.load_arm_state(s.arms);
    // w = -(z - sign(z) l1) / ((beta + sqrt(n)) / alpha + l2) = -(-2 + 1) / 1 = 1
    CHECK(p.weight(0)[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ftrl: one update applies the adaptive-gradient recurrence") {
    Hyperparameters hp;
    hp.ftrl_alpha = 1.0;
    hp.ftrl_beta = 1.0;
    hp.ftrl_l1 = 0.01;
    hp.ftrl_l2 = 0.01;
    FtrlPolicy p(2, 17, hp, 1);
    const FeatureVector x = unit_context(0);
    p.update(0, &x, 1.0);
    // err = 0 - 1; g = -1; sigma = (sqrt(1)-0)/1 = 1; z = -1 (w was 0); n = 1
    const PolicyState s = p.snapshot();
    CHECK(s.arms["z"][0][0].get<double>() == doctest::Approx(-1.0));
    CHECK(s.arms["n"][0][0].get<double>() == doctest::Approx(1.0));
    // w = -(-1 + 0.01) / ((1 + 1)/1 + 0.01) = 0.99 / 2.01
    CHECK(p.weight(0)[0] == doctest::Approx(0.99 / 2.01).epsilon(1e-12));
}

TEST_CASE("ftrl: n accumulators never decrease") {
    Hyperparameters hp;
    FtrlPolicy p(3, 18, hp, 1);
    Rng rng(4);
    Vec last(18, 0.0);
    for (int t = 0; t < 50; ++t) {
        const FeatureVector fv = random_context(rng);
        p.update(1, &fv, rng.uniform01());
        const PolicyState s = p.snapshot();
        for (int i = 0; i < 18; ++i) {
            const double n = s.arms["n"][1][static_cast<std::size_t>(i)].get<double>();
            CHECK(n >= last[static_cast<std::size_t>(i)]);
            last[static_cast<std::size_t>(i)] = n;
        }
    }
}

// ---------------------------------------------------------------------------
// epsilon-FTRL

TEST_CASE("epsilon_ftrl: zero epsilon matches plain FTRL decisions") {
    Hyperparameters hp;
    hp.epsilon = 0.0;
    EpsilonFtrlPolicy eps(4, 18, hp, 5);
    FtrlPolicy plain(4, 18, hp, 5);
    Rng rng(12);
    for (int t = 1; t <= 200; ++t) {
        const FeatureVector fv = random_context(rng);
        const auto a = eps.select(&fv, t);
        const auto b = plain.select(&fv, t);
        CHECK(a.arm == b.arm);
        const double r = rng.uniform01();
        eps.update(a.arm, &fv, r);
        plain.update(b.arm, &fv, r);
    }
}

TEST_CASE("epsilon_ftrl: epsilon one explores uniformly within 0.02") {
    Hyperparameters hp;
    hp.epsilon = 1.0;
    EpsilonFtrlPolicy p(5, 18, hp, 31);
    Rng rng(3);
    const FeatureVector fv = random_context(rng);
    std::vector<int> counts(5, 0);
    for (int t = 1; t <= 10000; ++t) ++counts[static_cast<std::size_t>(p.select(&fv, t).arm)];
    for (int c : counts) CHECK(std::fabs(c / 10000.0 - 0.2) < 0.02);
}

TEST_CASE("epsilon_ftrl: reported mixture respects the epsilon/K floor") {
    Hyperparameters hp;
    hp.epsilon = 0.25;
    EpsilonFtrlPolicy p(5, 18, hp, 2);
    Rng rng(8);
    const FeatureVector fv = random_context(rng);
    const auto sel = p.select(&fv, 1);
    REQUIRE(sel.probs);
    double sum = 0.0;
    for (double v : *sel.probs) {
        CHECK(v >= 0.25 / 5.0 - 1e-15);
        sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// LinearEXP3

TEST_CASE("linear_exp3: zero parameters give the uniform distribution") {
    Hyperparameters hp;
    LinearExp3Policy p(5, 18, hp, 1);
    Rng rng(6);
    const FeatureVector fv = random_context(rng);
    for (double v : p.distribution(fv.as_vec()))
        CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("linear_exp3: importance-weighted update on the chosen arm") {
    Hyperparameters hp;
    hp.exp3_eta = 0.1;
    hp.mix_gamma = 0.1;
    LinearExp3Policy p(5, 17, hp, 1);
    const FeatureVector x = unit_context(0);
    p.update(2, &x, 1.0);  // p = 0.2 from the zero state
    const auto theta = p.coefficients();
    CHECK(theta[2][0] == doctest::Approx(0.5).epsilon(1e-12));  // eta * r / p
    CHECK(theta[1][0] == 0.0);
}

TEST_CASE("linear_exp3: mixed probabilities respect the gamma/K floor and sum to one") {
    Hyperparameters hp;
    hp.mix_gamma = 0.1;
    LinearExp3Policy p(5, 18, hp, 9);
    Rng rng(2);
    for (int t = 1; t <= 500; ++t) {
        const FeatureVector fv = random_context(rng);
        const auto sel = p.select(&fv, t);
        REQUIRE(sel.probs);
        double sum = 0.0;
        for (double v : *sel.probs) {
            CHECK(v >= 0.1 / 5.0 - 1e-15);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        p.update(sel.arm, &fv, rng.uniform01());
    }
}

TEST_CASE("linear_exp3: softmax is shift invariant") {
    Hyperparameters hp;
    LinearExp3Policy p(3, 17, hp, 1);
    PolicyState s = p.snapshot();
    // distinct logits, then the same vector added to every arm
    for (int a = 0; a < 3; ++a) s.arms["theta"][static_cast<std::size_t>(a)][0] = 0.3 * a;
    p.load_arm_state(s.arms);
    const FeatureVector x = unit_context(0);
    const auto before = p.distribution(x.as_vec());
    for (int a = 0; a < 3; ++a)
        s.arms["theta"][static_cast<std::size_t>(a)][0] = 0.3 * a + 7.0;
    p.load_arm_state(s.arms);
    const auto after = p.distribution(x.as_vec());
    for (int a = 0; a < 3; ++a)
        CHECK(after[static_cast<std::size_t>(a)] ==
              doctest::Approx(before[static_cast<std::size_t>(a)]).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// LinearFTPL

TEST_CASE("linear_ftpl: additive update") {
    Hyperparameters hp;
    LinearFtplPolicy p(4, 17, hp, 1);
    const FeatureVector x = unit_context(0);
    p.update(1, &x, 0.5);
    const auto theta = p.coefficients();
    CHECK(theta[1][0] == doctest::Approx(0.5));
    for (int i = 1; i < 17; ++i) CHECK(theta[1][static_cast<std::size_t>(i)] == 0.0);
}

TEST_CASE("linear_ftpl: symmetric state is uniform within 0.02") {
    Hyperparameters hp;
    LinearFtplPolicy p(5, 18, hp, 23);
    Rng rng(5);
    const FeatureVector fv = random_context(rng);
    std::vector<int> counts(5, 0);
    for (int t = 1; t <= 10000; ++t) ++counts[static_cast<std::size_t>(p.select(&fv, t).arm)];
    for (int c : counts) CHECK(std::fabs(c / 10000.0 - 0.2) < 0.02);
}

TEST_CASE("linear_ftpl: vanishing noise recovers the linear argmax") {
    Hyperparameters hp;
    hp.ftpl_eta = 1e9;
    LinearFtplPolicy p(3, 17, hp, 2);
    const FeatureVector x = unit_context(4);
    p.update(2, &x, 1.0);
    for (int t = 1; t <= 50; ++t) CHECK(p.select(&x, t).arm == 2);
}

// ---------------------------------------------------------------------------
// Gaussian Thompson

TEST_CASE("thompson_contextual: conjugate update matches the hand posterior") {
    Hyperparameters hp;  // prior_scale 1, noise_var 1
    GaussianThompsonPolicy p(2, 17, hp, 1);
    const FeatureVector x = unit_context(0);
    p.update(0, &x, 1.0);

    const Vec mu = p.posterior_mean(0);
    CHECK(mu[0] == doctest::Approx(0.5).epsilon(1e-9));
    for (int i = 1; i < 17; ++i) CHECK(mu[static_cast<std::size_t>(i)] == doctest::Approx(0.0));

    const Mat cov = p.posterior_covariance(0);
    CHECK(cov(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
    for (int i = 1; i < 17; ++i) {
        CHECK(cov(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) ==
              doctest::Approx(1.0).epsilon(1e-9));
        CHECK(cov(0, static_cast<std::size_t>(i)) == doctest::Approx(0.0));
    }
}

TEST_CASE("thompson_contextual: all-zero context without bias falls to arm 0") {
    Hyperparameters hp;
    GaussianThompsonPolicy p(5, 17, hp, 77);
    FeatureVector fv;
    fv.set_bias_enabled(false);
    for (int t = 1; t <= 20; ++t) CHECK(p.select(&fv, t).arm == 0);
}

TEST_CASE("thompson_contextual: posterior variance along x strictly decreases") {
    Hyperparameters hp;
    GaussianThompsonPolicy p(2, 17, hp, 1);
    const FeatureVector x = unit_context(0);
    double last = p.posterior_covariance(0)(0, 0);
    for (int i = 0; i < 10; ++i) {
        p.update(0, &x, 0.7);
        const double now = p.posterior_covariance(0)(0, 0);
        CHECK(now < last);
        last = now;
    }
}

// ---------------------------------------------------------------------------
// Static policies

TEST_CASE("static policy always selects its arm and ignores updates") {
    StaticPolicy p(3, "Expand", 5, 0);
    const PolicyState before = p.snapshot();
    for (int t = 1; t <= 10; ++t) {
        CHECK(p.select(nullptr, t).arm == 3);
        p.update(3, nullptr, 0.9);
    }
    const PolicyState after = p.snapshot();
    CHECK(before.arms == after.arms);
    CHECK(before.draws == after.draws);
}

// ---------------------------------------------------------------------------
// Cross-cutting properties

namespace {

const std::vector<std::string> kAllLearners = {
    "exp3",        "ftpl",        "thompson",   "linucb",      "linucb_kl",
    "ftrl",        "epsilon_ftrl", "linear_exp3", "linear_ftpl", "thompson_contextual"};

struct Step {
    FeatureVector context;
    double reward;
};

std::vector<Step> make_steps(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Step> steps;
    for (int i = 0; i < n; ++i) steps.push_back({random_context(rng), rng.uniform01()});
    return steps;
}

}  // namespace

TEST_CASE("replay: identical seed and inputs give identical arm sequences") {
    const auto steps = make_steps(60, 4242);
    for (const auto& tag : kAllLearners) {
        CAPTURE(tag);
        Hyperparameters hp;
        auto a = make_policy(tag, 5, 18, hp, 1234);
        auto b = make_policy(tag, 5, 18, hp, 1234);
        for (int t = 0; t < 60; ++t) {
            const int arm_a = a->select(&steps[static_cast<std::size_t>(t)].context, t + 1).arm;
            const int arm_b = b->select(&steps[static_cast<std::size_t>(t)].context, t + 1).arm;
            CHECK(arm_a == arm_b);
            a->update(arm_a, &steps[static_cast<std::size_t>(t)].context,
                      steps[static_cast<std::size_t>(t)].reward);
            b->update(arm_b, &steps[static_cast<std::size_t>(t)].context,
                      steps[static_cast<std::size_t>(t)].reward);
        }
    }
}

TEST_CASE("replay: a restored snapshot reproduces the original decisions") {
    const auto steps = make_steps(60, 777);
    for (const auto& tag : kAllLearners) {
        CAPTURE(tag);
        Hyperparameters hp;
        auto p = make_policy(tag, 5, 18, hp, 99);
        for (int t = 0; t < 30; ++t) {
            const int arm = p->select(&steps[static_cast<std::size_t>(t)].context, t + 1).arm;
            p->update(arm, &steps[static_cast<std::size_t>(t)].context,
                      steps[static_cast<std::size_t>(t)].reward);
        }
        const PolicyState snap = p->snapshot();
        const Json wire = snap.to_json();  // serialization round-trip included
        auto q = restore_policy(PolicyState::from_json(wire));
        std::vector<int> arms_p;
        std::vector<int> arms_q;
        for (int t = 30; t < 60; ++t) {
            const auto& s = steps[static_cast<std::size_t>(t)];
            const int ap = p->select(&s.context, t + 1).arm;
            const int aq = q->select(&s.context, t + 1).arm;
            arms_p.push_back(ap);
            arms_q.push_back(aq);
            p->update(ap, &s.context, s.reward);
            q->update(aq, &s.context, s.reward);
        }
        CHECK(arms_p == arms_q);
    }
}

TEST_CASE("select mutates nothing but the RNG draw counter") {
    const auto steps = make_steps(5, 12);
    for (const auto& tag : kAllLearners) {
        CAPTURE(tag);
        Hyperparameters hp;
        auto p = make_policy(tag, 5, 18, hp, 7);
        const PolicyState before = p->snapshot();
        for (int t = 1; t <= 5; ++t) p->select(&steps[0].context, t);
        const PolicyState after = p->snapshot();
        CHECK(before.arms == after.arms);
    }
}

TEST_CASE("update locality: other arms' learned state is bit-identical") {
    const auto steps = make_steps(20, 55);
    for (const auto& tag : kAllLearners) {
        CAPTURE(tag);
        Hyperparameters hp;
        auto p = make_policy(tag, 5, 18, hp, 7);
        const Json before = p->snapshot().arms;
        p->update(2, &steps[0].context, 0.8);
        const Json after = p->snapshot().arms;
        for (auto& [key, value] : before.items()) {
            if (!value.is_array() || value.size() != 5) continue;  // per-arm arrays only
            for (int k = 0; k < 5; ++k) {
                if (k == 2) continue;
                CHECK(value[static_cast<std::size_t>(k)] == after[key][static_cast<std::size_t>(k)]);
            }
        }
    }
}

TEST_CASE("design matrices and posteriors stay positive definite under stress") {
    const auto steps = make_steps(300, 2025);
    Hyperparameters hp;
    LinUcbPolicy linucb(5, 18, hp, 1);
    LinUcbKlPolicy kl(5, 18, hp, 1);
    GaussianThompsonPolicy gt(5, 18, hp, 1);
    Rng arm_rng(31337);
    for (const auto& s : steps) {
        const int arm = arm_rng.uniform_int(5);
        linucb.update(arm, &s.context, s.reward);
        kl.update(arm, &s.context, s.reward);
        gt.update(arm, &s.context, s.reward);
    }
    for (int k = 0; k < 5; ++k) {
        CHECK(Cholesky(linucb.design(k)).ok());
        CHECK(Cholesky(kl.design(k)).ok());
        CHECK(Cholesky(gt.precision(k)).ok());
        const Mat cov = gt.posterior_covariance(k);
        CHECK(Cholesky(cov).ok());
        // symmetry
        for (int i = 0; i < 18; ++i)
            for (int j = i + 1; j < 18; ++j)
                CHECK(cov(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ==
                      doctest::Approx(cov(static_cast<std::size_t>(j), static_cast<std::size_t>(i)))
                          .epsilon(1e-9));
    }
}

TEST_CASE("algorithm tags accept long display names") {
    CHECK(canonical_algorithm("Thompson Sampling (Contextual)") == "thompson_contextual");
    CHECK(canonical_algorithm("Thompson Sampling (Non-Contextual)") == "thompson");
    CHECK(canonical_algorithm("LinUCB with KL") == "linucb_kl");
    CHECK(canonical_algorithm("LinUCB") == "linucb");
    CHECK(canonical_algorithm("Linear \xCE\xB5-FTRL") == "epsilon_ftrl");
    CHECK(canonical_algorithm("EXP3 (Non-Contextual)") == "exp3");
    CHECK(canonical_algorithm("Linear EXP3") == "linear_exp3");
    CHECK(canonical_algorithm("Linear FTPL") == "linear_ftpl");
    CHECK(canonical_algorithm("FTPL (Non-Contextual)") == "ftpl");
    CHECK_THROWS_AS(canonical_algorithm("mystery"), ValidationError);
}

TEST_CASE("hyperparameter validation rejects out-of-range values") {
    Hyperparameters hp;
    hp.mix_gamma = 0.0;
    CHECK_THROWS_AS(Exp3Policy(5, hp, 1), ValidationError);
    hp = Hyperparameters{};
    hp.ftpl_eta = -1.0;
    CHECK_THROWS_AS(FtplPolicy(5, hp, 1), ValidationError);
    hp = Hyperparameters{};
    hp.ridge = 0.0;
    CHECK_THROWS_AS(LinUcbPolicy(5, 17, hp, 1), ValidationError);
    hp = Hyperparameters{};
    hp.epsilon = 1.5;
    CHECK_THROWS_AS(EpsilonFtrlPolicy(5, 17, hp, 1), ValidationError);
    hp = Hyperparameters{};
    hp.noise_var = 0.0;
    CHECK_THROWS_AS(GaussianThompsonPolicy(5, 17, hp, 1), ValidationError);
}
