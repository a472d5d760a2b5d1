#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rwb/core.hpp"
#include "rwb/linalg.hpp"
#include "rwb/rng.hpp"

namespace rwb {

// ---------------------------------------------------------------------------
// Hyperparameters

/// One bag of scalars for all algorithms; each policy validates the subset it
/// uses at construction. Defaults are overridable conventions, not tuned values.
struct Hyperparameters {
    double ridge = 1.0;        // lambda: ridge initializer for design matrices
    double ucb_alpha = 1.0;    // LinUCB exploration coefficient
    double kl_c = 3.0;         // KL-bound constant
    double ftrl_alpha = 0.1;   // FTRL learning rate
    double ftrl_beta = 1.0;    // FTRL accumulator offset
    double ftrl_l1 = 0.01;
    double ftrl_l2 = 0.01;
    double epsilon = 0.1;      // epsilon-FTRL uniform exploration
    double mix_gamma = 0.1;    // EXP3 / LinearEXP3 uniform mixing
    double exp3_eta = 0.1;     // LinearEXP3 learning rate
    double ftpl_eta = 1.0;     // FTPL noise: Gumbel(0, 1/eta)
    double prior_scale = 1.0;  // Gaussian Thompson prior covariance scale
    double noise_var = 1.0;    // sigma^2, shared across arms
    double beta_prior_a = 1.0;
    double beta_prior_b = 1.0;

    Json to_json() const {
        return Json{{"ridge", ridge},
                    {"ucb_alpha", ucb_alpha},
                    {"kl_c", kl_c},
                    {"ftrl_alpha", ftrl_alpha},
                    {"ftrl_beta", ftrl_beta},
                    {"ftrl_l1", ftrl_l1},
                    {"ftrl_l2", ftrl_l2},
                    {"epsilon", epsilon},
                    {"mix_gamma", mix_gamma},
                    {"exp3_eta", exp3_eta},
                    {"ftpl_eta", ftpl_eta},
                    {"prior_scale", prior_scale},
                    {"noise_var", noise_var},
                    {"beta_prior_a", beta_prior_a},
                    {"beta_prior_b", beta_prior_b}};
    }

    /// Starts from defaults and applies whichever keys are present.
    static Hyperparameters from_json(const Json& j) {
        Hyperparameters hp;
        auto get = [&](const char* key, double& out) {
            if (j.contains(key)) out = j.at(key).get<double>();
        };
        get("ridge", hp.ridge);
        get("ucb_alpha", hp.ucb_alpha);
        get("kl_c", hp.kl_c);
        get("ftrl_alpha", hp.ftrl_alpha);
        get("ftrl_beta", hp.ftrl_beta);
        get("ftrl_l1", hp.ftrl_l1);
        get("ftrl_l2", hp.ftrl_l2);
        get("epsilon", hp.epsilon);
        get("mix_gamma", hp.mix_gamma);
        get("exp3_eta", hp.exp3_eta);
        get("ftpl_eta", hp.ftpl_eta);
        get("prior_scale", hp.prior_scale);
        get("noise_var", hp.noise_var);
        get("beta_prior_a", hp.beta_prior_a);
        get("beta_prior_b", hp.beta_prior_b);
        return hp;
    }
};

// ---------------------------------------------------------------------------
// Policy interface

struct SelectResult {
    int arm = 0;
    std::optional<std::vector<double>> probs;  // sampling distribution, when one exists
};

/// Single-owner sequential decision policy. select() mutates nothing but the
/// RNG draw counter; update() touches only the chosen arm's state. Snapshots
/// capture everything, so a restored policy replays identical decisions.
class Policy {
  public:
    Policy(std::string name, int num_arms, int dimension, Hyperparameters hp, std::uint64_t seed,
           std::uint64_t draws = 0)
        : name_(std::move(name)),
          num_arms_(num_arms),
          dimension_(dimension),
          hp_(hp),
          rng_(seed, draws) {
        if (num_arms_ < 1) throw ValidationError("policy needs at least one arm");
    }
    virtual ~Policy() = default;

    virtual SelectResult select(const FeatureVector* context, std::int64_t t) = 0;
    virtual void update(int arm, const FeatureVector* context, double reward) = 0;
    virtual bool contextual() const = 0;

    /// True when the policy exposes per-arm linear coefficients.
    virtual bool linear() const { return false; }
    virtual std::vector<Vec> coefficients() const {
        throw ValidationError("non_linear_policy: " + name_ + " has no linear coefficients");
    }

    PolicyState snapshot() const {
        PolicyState s;
        s.algorithm = name_;
        s.num_arms = num_arms_;
        s.dimension = dimension_;
        s.hyperparameters = hp_.to_json();
        s.seed = rng_.seed();
        s.draws = rng_.draws();
        s.arms = arm_state_json();
        return s;
    }

    const std::string& name() const { return name_; }
    int num_arms() const { return num_arms_; }
    int dimension() const { return dimension_; }
    const Hyperparameters& hyperparameters() const { return hp_; }

    virtual Json arm_state_json() const = 0;
    virtual void load_arm_state(const Json& arms) = 0;

    /// Repositions the RNG stream; used when restoring from a snapshot and
    /// when a skipped round must leave the policy byte-identical.
    void restore_rng(std::uint64_t seed, std::uint64_t draws) { rng_ = Rng(seed, draws); }

    std::uint64_t rng_seed() const { return rng_.seed(); }
    std::uint64_t rng_draws() const { return rng_.draws(); }

  protected:
    Vec context_vec(const FeatureVector* context) const {
        if (!context) throw ValidationError(name_ + " requires a context");
        Vec x = context->as_vec();
        if (static_cast<int>(x.size()) != dimension_)
            throw ValidationError("context dimension mismatch: got " + std::to_string(x.size()) +
                                  ", policy expects " + std::to_string(dimension_));
        return x;
    }

    void check_arm(int arm) const {
        if (arm < 0 || arm >= num_arms_) throw ValidationError("arm index out of range");
    }

    static void check_reward(double r) {
        if (r < 0.0 || r > 1.0 || !std::isfinite(r))
            throw ValidationError("reward out of [0,1]");
    }

    int sample_discrete(const std::vector<double>& p) {
        const double u = rng_.uniform01();
        double acc = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(p.size()) - 1;
    }

    std::string name_;
    int num_arms_;
    int dimension_;
    Hyperparameters hp_;
    Rng rng_;
};

// ---------------------------------------------------------------------------
// Non-contextual adversarial: EXP3

class Exp3Policy final : public Policy {
  public:
    Exp3Policy(int num_arms, Hyperparameters hp, std::uint64_t seed)
        : Policy("exp3", num_arms, 0, hp, seed), weights_(num_arms, 1.0) {
        if (hp_.mix_gamma <= 0.0 || hp_.mix_gamma > 1.0)
            throw ValidationError("exp3: mix_gamma must be in (0,1]");
    }

    std::vector<double> distribution() const {
        double sum = 0.0;
        for (double w : weights_) sum += w;
        std::vector<double> p(weights_.size());
        const double g = hp_.mix_gamma;
        for (std::size_t i = 0; i < weights_.size(); ++i)
            p[i] = (1.0 - g) * weights_[i] / sum + g / static_cast<double>(num_arms_);
        return p;
    }

    SelectResult select(const FeatureVector*, std::int64_t) override {
        auto p = distribution();
        const int arm = sample_discrete(p);
        return SelectResult{arm, std::move(p)};
    }

    void update(int arm, const FeatureVector*, double reward) override {
        check_arm(arm);
        check_reward(reward);
        const auto p = distribution();
        const double g = hp_.mix_gamma;
        weights_[arm] *= std::exp(g * reward / (static_cast<double>(num_arms_) * p[arm]));
        // guard against weight blow-up; scaling is distribution-invariant
        double sum = 0.0;
        for (double w : weights_) sum += w;
        if (sum > kRenormThreshold)
            for (double& w : weights_) w /= sum;
    }

    bool contextual() const override { return false; }

    Json arm_state_json() const override { return Json{{"weights", weights_}}; }
    void load_arm_state(const Json& arms) override {
        weights_ = arms.at("weights").get<std::vector<double>>();
        for (double w : weights_)
            if (w <= 0.0) throw ValidationError("exp3 weights must be strictly positive");
    }

    const std::vector<double>& weights() const { return weights_; }

  private:
    static constexpr double kRenormThreshold = 1e12;
    std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Non-contextual adversarial: FTPL

class FtplPolicy final : public Policy {
  public:
    FtplPolicy(int num_arms, Hyperparameters hp, std::uint64_t seed)
        : Policy("ftpl", num_arms, 0, hp, seed), cumulative_(num_arms, 0.0) {
        if (hp_.ftpl_eta <= 0.0) throw ValidationError("ftpl: ftpl_eta must be positive");
    }

    SelectResult select(const FeatureVector*, std::int64_t) override {
        Vec scores(cumulative_);
        const double scale = 1.0 / hp_.ftpl_eta;
        for (double& s : scores) s += rng_.gumbel(scale);
        return SelectResult{argmax_lowest(scores), std::nullopt};
    }

    void update(int arm, const FeatureVector*, double reward) override {
        check_arm(arm);
        check_reward(reward);
        cumulative_[arm] += reward;
    }

    bool contextual() const override { return false; }

    Json arm_state_json() const override { return Json{{"cumulative", cumulative_}}; }
    void load_arm_state(const Json& arms) override {
        cumulative_ = arms.at("cumulative").get<std::vector<double>>();
    }

    const Vec& cumulative() const { return cumulative_; }

  private:
    Vec cumulative_;
};

// ---------------------------------------------------------------------------
// Non-contextual stochastic: Beta-Bernoulli Thompson sampling

/// Per-arm Beta posterior with fractional updates a += r, b += 1-r, which
/// keeps the conjugate form valid for rewards in [0,1].
class BetaThompsonPolicy final : public Policy {
  public:
    BetaThompsonPolicy(int num_arms, Hyperparameters hp, std::uint64_t seed)
        : Policy("thompson", num_arms, 0, hp, seed),
          a_(num_arms, hp.beta_prior_a),
          b_(num_arms, hp.beta_prior_b) {
        if (hp_.beta_prior_a <= 0.0 || hp_.beta_prior_b <= 0.0)
            throw ValidationError("thompson: Beta prior parameters must be positive");
    }

    SelectResult select(const FeatureVector*, std::int64_t) override {
        Vec scores(static_cast<std::size_t>(num_arms_));
        for (int k = 0; k < num_arms_; ++k) scores[k] = rng_.beta(a_[k], b_[k]);
        return SelectResult{argmax_lowest(scores), std::nullopt};
    }

    void update(int arm, const FeatureVector*, double reward) override {
        check_arm(arm);
        check_reward(reward);
        a_[arm] += reward;
        b_[arm] += 1.0 - reward;
    }

    bool contextual() const override { return false; }

    Json arm_state_json() const override { return Json{{"beta_a", a_}, {"beta_b", b_}}; }
    void load_arm_state(const Json& arms) override {
        a_ = arms.at("beta_a").get<std::vector<double>>();
        b_ = arms.at("beta_b").get<std::vector<double>>();
    }

    double beta_a(int arm) const { return a_.at(arm); }
    double beta_b(int arm) const { return b_.at(arm); }

  private:
    Vec a_;
    Vec b_;
};

// ---------------------------------------------------------------------------
// Contextual stochastic: LinUCB

class LinUcbPolicy : public Policy {
  public:
    LinUcbPolicy(int num_arms, int dimension, Hyperparameters hp, std::uint64_t seed,
                 std::string name = "linucb")
        : Policy(std::move(name), num_arms, dimension, hp, seed) {
        if (hp_.ridge <= 0.0) throw ValidationError("linucb: ridge must be positive");
        if (hp_.ucb_alpha < 0.0) throw ValidationError("linucb: ucb_alpha must be nonnegative");
        design_.assign(num_arms, Mat::identity(dimension, hp_.ridge));
        response_.assign(num_arms, Vec(dimension, 0.0));
    }

    SelectResult select(const FeatureVector* context, std::int64_t t) override {
        const Vec x = context_vec(context);
        Vec scores(static_cast<std::size_t>(num_arms_));
        for (int k = 0; k < num_arms_; ++k) scores[k] = score_arm(k, x, t);
        return SelectResult{argmax_lowest(scores), std::nullopt};
    }

    void update(int arm, const FeatureVector* context, double reward) override {
        check_arm(arm);
        check_reward(reward);
        const Vec x = context_vec(context);
        design_[arm].add_outer(x);
        axpy(response_[arm], reward, x);
        after_update(arm);
    }

    bool contextual() const override { return true; }
    bool linear() const override { return true; }

    std::vector<Vec> coefficients() const override {
        std::vector<Vec> theta;
        theta.reserve(design_.size());
        for (int k = 0; k < num_arms_; ++k) theta.push_back(theta_hat(k));
        return theta;
    }

    Vec theta_hat(int arm) const {
        Cholesky ch(design_.at(arm));
        if (!ch.ok()) throw Error("singular design matrix");  // unreachable with ridge > 0
        return ch.solve(response_.at(arm));
    }

    const Mat& design(int arm) const { return design_.at(arm); }

    Json arm_state_json() const override {
        Json a = Json::array();
        Json b = Json::array();
        for (int k = 0; k < num_arms_; ++k) {
            a.push_back(design_[k].data());
            b.push_back(response_[k]);
        }
        return Json{{"design", a}, {"response", b}};
    }

    void load_arm_state(const Json& arms) override {
        const auto& a = arms.at("design");
        const auto& b = arms.at("response");
        for (int k = 0; k < num_arms_; ++k) {
            design_[k].data() = a.at(k).get<std::vector<double>>();
            response_[k] = b.at(k).get<std::vector<double>>();
        }
    }

  protected:
    virtual double score_arm(int arm, const Vec& x, std::int64_t) const {
        Cholesky ch(design_[arm]);
        if (!ch.ok()) throw Error("singular design matrix");
        const Vec theta = ch.solve(response_[arm]);
        return dot(x, theta) + hp_.ucb_alpha * std::sqrt(ch.quad_inverse(x));
    }

    virtual void after_update(int) {}

    std::vector<Mat> design_;
    std::vector<Vec> response_;
};

// ---------------------------------------------------------------------------
// Contextual stochastic: LinUCB with a KL-style bound

/// Same per-arm ridge regression as LinUCB, but the exploration bonus is
/// sqrt(2 * var * max(raw_bound, 0)) with
/// raw_bound = (log t + c * log(log(t + 1))) / max(1, pulls of the arm).
class LinUcbKlPolicy final : public LinUcbPolicy {
  public:
    LinUcbKlPolicy(int num_arms, int dimension, Hyperparameters hp, std::uint64_t seed)
        : LinUcbPolicy(num_arms, dimension, hp, seed, "linucb_kl"), counts_(num_arms, 0) {
        if (hp_.kl_c <= 0.0) throw ValidationError("linucb_kl: kl_c must be positive");
    }

    SelectResult select(const FeatureVector* context, std::int64_t t) override {
        if (t < 1) throw ValidationError("linucb_kl: round index must be >= 1");
        return LinUcbPolicy::select(context, t);
    }

    Json arm_state_json() const override {
        Json j = LinUcbPolicy::arm_state_json();
        j["counts"] = counts_;
        return j;
    }

    void load_arm_state(const Json& arms) override {
        LinUcbPolicy::load_arm_state(arms);
        counts_ = arms.at("counts").get<std::vector<std::int64_t>>();
    }

    std::int64_t count(int arm) const { return counts_.at(arm); }

  protected:
    double score_arm(int arm, const Vec& x, std::int64_t t) const override {
        Cholesky ch(design_[arm]);
        if (!ch.ok()) throw Error("singular design matrix");
        const Vec theta = ch.solve(response_[arm]);
        const double mu = dot(x, theta);
        const double var = ch.quad_inverse(x);
        const double n = std::max<double>(1.0, static_cast<double>(counts_[arm]));
        const double raw_bound =
            (std::log(static_cast<double>(t)) +
             hp_.kl_c * std::log(std::log(static_cast<double>(t) + 1.0))) /
            n;
        const double bound = std::max(raw_bound, 0.0);
        return mu + std::sqrt(2.0 * var * bound);
    }

    void after_update(int arm) override { ++counts_[arm]; }

  private:
    std::vector<std::int64_t> counts_;
};

// ---------------------------------------------------------------------------
// Contextual adversarial: FTRL with adaptive per-coordinate steps

namespace detail {

/// Shared FTRL state: per-arm cumulative gradients z and squared-gradient
/// sums n, with the sparse proximal weight rule.
struct FtrlCore {
    std::vector<Vec> z;
    std::vector<Vec> n;

    FtrlCore() = default;
    FtrlCore(int num_arms, int dim)
        : z(num_arms, Vec(dim, 0.0)), n(num_arms, Vec(dim, 0.0)) {}

    Vec weight(int arm, const Hyperparameters& hp) const {
        const Vec& za = z[arm];
        const Vec& na = n[arm];
        Vec w(za.size(), 0.0);
        for (std::size_t i = 0; i < za.size(); ++i) {
            if (std::fabs(za[i]) > hp.ftrl_l1) {
                const double sign = za[i] > 0.0 ? 1.0 : -1.0;
                w[i] = -(za[i] - sign * hp.ftrl_l1) /
                       ((hp.ftrl_beta + std::sqrt(na[i])) / hp.ftrl_alpha + hp.ftrl_l2);
            }
        }
        return w;
    }

    int best_arm(const Vec& x, const Hyperparameters& hp) const {
        Vec scores(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) scores[k] = dot(weight(static_cast<int>(k), hp), x);
        return argmax_lowest(scores);
    }

    /// Adaptive-gradient recurrence on the chosen arm, using the pre-update
    /// weight vector for the prediction error.
    void update(int arm, const Vec& x, double reward, const Hyperparameters& hp) {
        const Vec w = weight(arm, hp);
        const double err = dot(w, x) - reward;
        Vec& za = z[arm];
        Vec& na = n[arm];
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double g = err * x[i];
            const double sigma = (std::sqrt(na[i] + g * g) - std::sqrt(na[i])) / hp.ftrl_alpha;
            za[i] += g - sigma * w[i];
            na[i] += g * g;
        }
    }

    Json to_json() const { return Json{{"z", z}, {"n", n}}; }
    void load(const Json& j) {
        z = j.at("z").get<std::vector<Vec>>();
        n = j.at("n").get<std::vector<Vec>>();
    }
};

inline void validate_ftrl(const Hyperparameters& hp, const char* who) {
    if (hp.ftrl_alpha <= 0.0) throw ValidationError(std::string(who) + ": ftrl_alpha must be positive");
    if (hp.ftrl_beta <= 0.0) throw ValidationError(std::string(who) + ": ftrl_beta must be positive");
    if (hp.ftrl_l1 < 0.0 || hp.ftrl_l2 < 0.0)
        throw ValidationError(std::string(who) + ": l1/l2 must be nonnegative");
}

}  // namespace detail

class FtrlPolicy final : public Policy {
  public:
    FtrlPolicy(int num_arms, int dimension, Hyperparameters hp, std::uint64_t seed)
        : Policy("ftrl", num_arms, dimension, hp, seed), core_(num_arms, dimension) {
        detail::validate_ftrl(hp_, "ftrl");
    }

    SelectResult select(const FeatureVector* context, std::int64_t) override {
        const Vec x = context_vec(context);
        return SelectResult{core_.best_arm(x, hp_), std::nullopt};
    }

    void update(int arm, const FeatureVector* context, double reward) override {
        check_arm(arm);
        check_reward(reward);
        core_.update(arm, context_vec(context), reward, hp_);
    }

    bool contextual() const override { return true; }
    bool linear() const override { return true; }
    std::vector<Vec> coefficients() const override {
        std::vector<Vec> w;
        for (int k = 0; k < num_arms_; ++k) w.push_back(core_.weight(k, hp_));
        return w;
    }

    Json arm_state_json() const override { return core_.to_json(); }
    void load_arm_state(const Json& arms) override { core_.load(arms); }

    Vec weight(int arm) const { return core_.weight(arm, hp_); }

  private:
    detail::FtrlCore core_;
};

/// FTRL wrapped in uniform epsilon-exploration. The update is plain FTRL
/// regardless of how the arm was chosen; the reported distribution is the
/// epsilon-mixture around the current argmax.
class EpsilonFtrlPolicy final : public Policy {
  public:
    EpsilonFtrlPolicy(int num_arms, int dimension, Hyperparameters hp, std::uint64_t seed)
        : Policy("epsilon_ftrl", num_arms, dimension, hp, seed), core_(num_arms, dimension) {
        detail::validate_ftrl(hp_, "epsilon_ftrl");
        if (hp_.epsilon < 0.0 || hp_.epsilon > 1.0)
            throw ValidationError("epsilon_ftrl: epsilon must be in [0,1]");
    }

    SelectResult select(const FeatureVector* context, std::int64_t) override {
        const Vec x = context_vec(context);
        const int greedy = core_.best_arm(x, hp_);
        const double eps = hp_.epsilon;
        std::vector<double> p(static_cast<std::size_t>(num_arms_),
                              eps / static_cast<double>(num_arms_));
        p[greedy] += 1.0 - eps;
        int arm = greedy;
        if (eps > 0.0 && rng_.uniform01() < eps) arm = rng_.uniform_int(num_arms_);
        return SelectResult{arm, std::move(p)};
    }

    void update(int arm, const FeatureVector* context, double reward) override {
        check_arm(arm);
        check_reward(reward);
        core_.update(arm, context_vec(context), reward, hp_);
    }

    bool contextual() const override { return true; }
    bool linear() const override { return true; }
    std::vector<Vec> coefficients() const override {
        std::vector<Vec> w;
        for (int k = 0; k < num_arms_; ++k) w.push_back(core_.weight(k, hp_));
        return w;
    }

    Json arm_state_json() const override { return core_.to_json(); }
    void load_arm_state(const Json& arms) override { core_.load(arms); }

  private:
    detail::FtrlCore core_;
};

// ---------------------------------------------------------------------------
// Contextual adversarial: LinearEXP3

class LinearExp3Policy final : public Policy {
  public:
    LinearExp3Policy(int num_arms, int dimension, Hyperparameters hp, std::uint64_t seed)
        : Policy("linear_exp3", num_arms, dimension, hp, seed),
          theta_(num_arms, Vec(dimension, 0.0)) {
        if (hp_.mix_gamma <= 0.0 || hp_.mix_gamma > 1.0)
            throw ValidationError("linear_exp3: mix_gamma must be in (0,1]");
        if (hp_.exp3_eta <= 0.0) throw ValidationError("linear_exp3: exp3_eta must be positive");
    }

    /// Mixed softmax over linear scores, with max-logit subtraction.
    std::vector<double> distribution(const Vec& x) const {
        Vec logits(theta_.size());
        for (std::size_t k = 0; k < theta_.size(); ++k) logits[k] = dot(theta_[k], x);
        const double m = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double& l : logits) {
            l = std::exp(l - m);
            sum += l;
        }
        const double g = hp_.mix_gamma;
        std::vector<double> p(logits.size());
        for (std::size_t k = 0; k < logits.size(); ++k)
            p[k] = (1.0 - g) * logits[k] / sum + g / static_cast<double>(num_arms_);
        return p;
    }

    SelectResult select(const FeatureVector* context, std::int64_t) override {
        auto p = distribution(context_vec(context));
        const int arm = sample_discrete(p);
        return SelectResult{arm, std::move(p)};
    }

    void update(int arm, const FeatureVector* context, double reward) override {
        check_arm(arm);
        check_reward(reward);
        const Vec x = context_vec(context);
        const auto p = distribution(x);
        axpy(theta_[arm], hp_.exp3_eta * reward / p[arm], x);
    }

    bool contextual() const override { return true; }
    bool linear() const override { return true; }
    std::vector<Vec> coefficients() const override { return theta_; }

    Json arm_state_json() const override { return Json{{"theta", theta_}}; }
    void load_arm_state(const Json& arms) override {
        theta_ = arms.at("theta").get<std::vector<Vec>>();
    }

  private:
    std::vector<Vec> theta_;
};

// ---------------------------------------------------------------------------
// Contextual adversarial: LinearFTPL

class LinearFtplPolicy final : public Policy {
  public:
    LinearFtplPolicy(int num_arms, int dimension, Hyperparameters hp, std::uint64_t seed)
        : Policy("linear_ftpl", num_arms, dimension, hp, seed),
          theta_(num_arms, Vec(dimension, 0.0)) {
        if (hp_.ftpl_eta <= 0.0) throw ValidationError("linear_ftpl: ftpl_eta must be positive");
    }

    SelectResult select(const FeatureVector* context, std::int64_t) override {
        const Vec x = context_vec(context);
        Vec scores(theta_.size());
        const double scale = 1.0 / hp_.ftpl_eta;
        for (std::size_t k = 0; k < theta_.size(); ++k)
            scores[k] = dot(theta_[k], x) + rng_.gumbel(scale);
        return SelectResult{argmax_lowest(scores), std::nullopt};
    }

    void update(int arm, const FeatureVector* context, double reward) override {
        check_arm(arm);
        check_reward(reward);
        axpy(theta_[arm], reward, context_vec(context));
    }

    bool contextual() const override { return true; }
    bool linear() const override { return true; }
    std::vector<Vec> coefficients() const override { return theta_; }

    Json arm_state_json() const override { return Json{{"theta", theta_}}; }
    void load_arm_state(const Json& arms) override {
        theta_ = arms.at("theta").get<std::vector<Vec>>();
    }

  private:
    std::vector<Vec> theta_;
};

// ---------------------------------------------------------------------------
// Contextual stochastic: Gaussian Thompson sampling

/// Per-arm Bayesian linear regression held in precision form:
/// P = Sigma^{-1}, q = Sigma^{-1} mu. Updates are exact conjugate rank-1
/// additions; posterior draws come from the Cholesky factor of P.
class GaussianThompsonPolicy final : public Policy {
  public:
    GaussianThompsonPolicy(int num_arms, int dimension, Hyperparameters hp, std::uint64_t seed)
        : Policy("thompson_contextual", num_arms, dimension, hp, seed) {
        if (hp_.prior_scale <= 0.0)
            throw ValidationError("thompson_contextual: prior_scale must be positive");
        if (hp_.noise_var <= 0.0)
            throw ValidationError("thompson_contextual: noise_var must be positive");
        precision_.assign(num_arms, Mat::identity(dimension, 1.0 / hp_.prior_scale));
        shift_.assign(num_arms, Vec(dimension, 0.0));
    }

    SelectResult select(const FeatureVector* context, std::int64_t) override {
        const Vec x = context_vec(context);
        Vec scores(static_cast<std::size_t>(num_arms_));
        for (int k = 0; k < num_arms_; ++k) {
            Cholesky ch(precision_[k]);
            if (!ch.ok()) throw Error("covariance_not_pd");  // asserted invariant
            Vec theta = ch.solve(shift_[k]);  // posterior mean
            Vec z(static_cast<std::size_t>(dimension_));
            for (double& v : z) v = rng_.normal();
            const Vec noise = ch.solve_upper(z);  // N(0, P^{-1}) draw
            axpy(theta, 1.0, noise);
            scores[k] = dot(x, theta);
        }
        return SelectResult{argmax_lowest(scores), std::nullopt};
    }

    void update(int arm, const FeatureVector* context, double reward) override {
        check_arm(arm);
        check_reward(reward);
        const Vec x = context_vec(context);
        const double inv_var = 1.0 / hp_.noise_var;
        precision_[arm].add_outer(x, inv_var);
        axpy(shift_[arm], reward * inv_var, x);
    }

    bool contextual() const override { return true; }
    bool linear() const override { return true; }

    std::vector<Vec> coefficients() const override {
        std::vector<Vec> mu;
        for (int k = 0; k < num_arms_; ++k) mu.push_back(posterior_mean(k));
        return mu;
    }

    Vec posterior_mean(int arm) const {
        Cholesky ch(precision_.at(arm));
        if (!ch.ok()) throw Error("covariance_not_pd");
        return ch.solve(shift_.at(arm));
    }

    Mat posterior_covariance(int arm) const {
        Cholesky ch(precision_.at(arm));
        if (!ch.ok()) throw Error("covariance_not_pd");
        return ch.inverse();
    }

    const Mat& precision(int arm) const { return precision_.at(arm); }

    Json arm_state_json() const override {
        Json p = Json::array();
        Json q = Json::array();
        for (int k = 0; k < num_arms_; ++k) {
            p.push_back(precision_[k].data());
            q.push_back(shift_[k]);
        }
        return Json{{"precision", p}, {"shift", q}};
    }

    void load_arm_state(const Json& arms) override {
        const auto& p = arms.at("precision");
        const auto& q = arms.at("shift");
        for (int k = 0; k < num_arms_; ++k) {
            precision_[k].data() = p.at(k).get<std::vector<double>>();
            shift_[k] = q.at(k).get<std::vector<double>>();
        }
    }

  private:
    std::vector<Mat> precision_;
    std::vector<Vec> shift_;  // precision * mean
};

// ---------------------------------------------------------------------------
// Static policies (zero-shot prompting baselines and the no-rewrite baseline)

class StaticPolicy final : public Policy {
  public:
    StaticPolicy(int arm, std::string arm_name, int num_arms, std::uint64_t seed)
        : Policy("static:" + arm_name, num_arms, 0, Hyperparameters{}, seed), arm_(arm) {
        check_arm(arm_);
    }

    SelectResult select(const FeatureVector*, std::int64_t) override {
        return SelectResult{arm_, std::nullopt};
    }

    void update(int, const FeatureVector*, double) override {}  // ignores feedback

    bool contextual() const override { return false; }

    Json arm_state_json() const override { return Json{{"arm", arm_}}; }
    void load_arm_state(const Json& arms) override { arm_ = arms.at("arm").get<int>(); }

    int fixed_arm() const { return arm_; }

  private:
    int arm_;
};

// ---------------------------------------------------------------------------
// Factory

/// Canonicalizes an algorithm tag: lowercase, alphanumerics only, so display
/// names like "Thompson Sampling (Contextual)" and "linucb_kl" both resolve.
inline std::string normalize_algorithm_tag(std::string_view tag) {
    std::string key;
    for (char c : tag)
        if (std::isalnum(static_cast<unsigned char>(c)))
            key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return key;
}

inline std::string canonical_algorithm(std::string_view tag) {
    const std::string key = normalize_algorithm_tag(tag);
    if (key == "exp3" || key == "exp3noncontextual") return "exp3";
    if (key == "ftpl" || key == "ftplnoncontextual") return "ftpl";
    if (key == "thompson" || key == "thompsonsampling" || key == "thompsonsamplingnoncontextual" ||
        key == "thompsonnoncontextual" || key == "betathompson")
        return "thompson";
    if (key == "linucb") return "linucb";
    if (key == "linucbkl" || key == "linucbwithkl" || key == "klucb") return "linucb_kl";
    if (key == "ftrl") return "ftrl";
    if (key == "epsilonftrl" || key == "linearepsilonftrl" || key == "linearftrl" ||
        key == "eftrl" || key == "egreedyftrl")
        return "epsilon_ftrl";
    if (key == "linearexp3") return "linear_exp3";
    if (key == "linearftpl") return "linear_ftpl";
    if (key == "thompsoncontextual" || key == "thompsonsamplingcontextual" ||
        key == "gaussianthompson")
        return "thompson_contextual";
    throw ValidationError("unknown algorithm tag: " + std::string(tag));
}

inline bool algorithm_is_contextual(std::string_view canonical) {
    return canonical == "linucb" || canonical == "linucb_kl" || canonical == "ftrl" ||
           canonical == "epsilon_ftrl" || canonical == "linear_exp3" ||
           canonical == "linear_ftpl" || canonical == "thompson_contextual";
}

inline std::unique_ptr<Policy> make_policy(std::string_view tag, int num_arms, int dimension,
                                           const Hyperparameters& hp, std::uint64_t seed) {
    const std::string canon = canonical_algorithm(tag);
    if (canon == "exp3") return std::make_unique<Exp3Policy>(num_arms, hp, seed);
    if (canon == "ftpl") return std::make_unique<FtplPolicy>(num_arms, hp, seed);
    if (canon == "thompson") return std::make_unique<BetaThompsonPolicy>(num_arms, hp, seed);
    if (canon == "linucb") return std::make_unique<LinUcbPolicy>(num_arms, dimension, hp, seed);
    if (canon == "linucb_kl")
        return std::make_unique<LinUcbKlPolicy>(num_arms, dimension, hp, seed);
    if (canon == "ftrl") return std::make_unique<FtrlPolicy>(num_arms, dimension, hp, seed);
    if (canon == "epsilon_ftrl")
        return std::make_unique<EpsilonFtrlPolicy>(num_arms, dimension, hp, seed);
    if (canon == "linear_exp3")
        return std::make_unique<LinearExp3Policy>(num_arms, dimension, hp, seed);
    if (canon == "linear_ftpl")
        return std::make_unique<LinearFtplPolicy>(num_arms, dimension, hp, seed);
    if (canon == "thompson_contextual")
        return std::make_unique<GaussianThompsonPolicy>(num_arms, dimension, hp, seed);
    throw ValidationError("unknown algorithm tag: " + std::string(tag));
}

inline std::unique_ptr<Policy> restore_policy(const PolicyState& state) {
    std::unique_ptr<Policy> p;
    if (state.algorithm.rfind("static:", 0) == 0) {
        const std::string arm_name = state.algorithm.substr(7);
        p = std::make_unique<StaticPolicy>(state.arms.at("arm").get<int>(), arm_name,
                                           state.num_arms, state.seed);
    } else {
        p = make_policy(state.algorithm, state.num_arms, state.dimension,
                        Hyperparameters::from_json(state.hyperparameters), state.seed);
    }
    p->load_arm_state(state.arms);
    p->restore_rng(state.seed, state.draws);
    return p;
}

}  // namespace rwb
