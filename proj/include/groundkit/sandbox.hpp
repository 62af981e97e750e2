#pragma once
// Desk-scale end-to-end GRPO on synthetic grounding scenes.
//
// A scene holds candidate objects with feature vectors and a scenario cue
// vector close to the target's features. The policy scores each candidate
// with a bilinear form s^T Theta f_k and samples from softmax(logits / T).
// A sampled choice is rendered as a schema-valid completion and priced by the
// real reward engine, so the whole optimization path (rewards, group
// advantages, KL to a frozen reference, adaptive beta, curriculum mixtures,
// template ensemble) is exercised on something that trains in seconds.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "groundkit/box.hpp"
#include "groundkit/completion.hpp"
#include "groundkit/config.hpp"
#include "groundkit/grpo.hpp"
#include "groundkit/reward.hpp"
#include "groundkit/rng.hpp"
#include "groundkit/templates.hpp"

namespace groundkit::sandbox {

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

struct Category {
    std::string name;
    std::vector<std::string> aliases;
};

inline const std::vector<Category>& categories() {
    static const std::vector<Category> cats = {
        {"cup", {"cup", "mug", "coffee mug"}},
        {"chair", {"chair", "seat"}},
        {"laptop", {"laptop", "notebook computer"}},
        {"bottle", {"bottle", "water bottle"}},
        {"book", {"book", "paperback"}},
        {"clock", {"clock", "wall clock"}},
        {"umbrella", {"umbrella", "parasol"}},
        {"backpack", {"backpack", "rucksack"}},
        {"vase", {"vase", "flower vase"}},
        {"scissors", {"scissors", "shears"}},
        {"remote", {"remote", "remote control"}},
        {"teddy bear", {"teddy bear", "stuffed animal"}},
    };
    return cats;
}

struct Candidate {
    BoundingBox bbox;
    std::size_t category = 0;
    std::vector<double> feature;
};

struct SyntheticScene {
    std::int64_t width = 320;
    std::int64_t height = 240;
    std::vector<Candidate> candidates;
    std::size_t target = 0;
    std::vector<double> scenario_feature;
    Bucket bucket = Bucket::easy;
    double difficulty = 0.0;

    const Candidate& target_candidate() const { return candidates[target]; }
    std::size_t same_category_distractors() const {
        std::size_t n = 0;
        for (std::size_t k = 0; k < candidates.size(); ++k)
            if (k != target && candidates[k].category == candidates[target].category) ++n;
        return n;
    }
    GroundTruth ground_truth() const {
        const auto& c = categories()[target_candidate().category];
        return {target_candidate().bbox, {c.name}, c.aliases, width, height};
    }
};

struct SceneParams {
    std::size_t feature_dim = 8;
    std::size_t category_dims = 4;  // leading dims carry the category prototype
    double instance_noise = 0.35;   // spread of same-category instances on category dims
    std::array<double, 3> cue_noise{0.30, 0.45, 0.60};  // per bucket
    std::size_t max_candidates = 10;
};

/// Category prototypes are fixed per run so scenes share a feature space.
inline std::vector<std::vector<double>> category_prototypes(const SceneParams& sp, std::uint64_t seed) {
    CounterRng rng(derive_key(seed, {0xC47}));
    std::vector<std::vector<double>> protos(categories().size(), std::vector<double>(sp.category_dims));
    for (auto& p : protos) {
        double norm = 0.0;
        for (auto& v : p) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : p) v = 1.5 * v / norm;
    }
    return protos;
}

/// Easy: 2-3 candidates with distinct categories. Medium: 4-6 with one
/// same-category distractor. Hard: 7-10 with 2-3 same-category distractors and
/// a smaller target. Cue noise grows with the bucket.
inline SyntheticScene generate_scene(CounterRng& rng, Bucket bucket, const SceneParams& sp,
                                     const std::vector<std::vector<double>>& protos) {
    SyntheticScene s;
    s.bucket = bucket;
    const auto b = static_cast<std::size_t>(bucket);
    std::size_t n = 0, same = 0;
    switch (bucket) {
        case Bucket::easy: n = 2 + rng.below(2); same = 0; break;
        case Bucket::medium: n = 4 + rng.below(3); same = 1; break;
        case Bucket::hard: n = 7 + rng.below(4); same = 2 + rng.below(2); break;
    }
    n = std::min(n, sp.max_candidates);
    const std::size_t ncat = categories().size();

    // Categories: target, `same` copies of it, the rest distinct others.
    const std::size_t target_cat = rng.below(ncat);
    std::vector<std::size_t> cats{target_cat};
    for (std::size_t i = 0; i < same && cats.size() < n; ++i) cats.push_back(target_cat);
    std::vector<std::size_t> others;
    for (std::size_t c = 0; c < ncat; ++c)
        if (c != target_cat) others.push_back(c);
    for (std::size_t i = others.size(); i > 1; --i) std::swap(others[i - 1], others[rng.below(i)]);
    for (std::size_t i = 0; cats.size() < n; ++i) cats.push_back(others[i % others.size()]);

    // Layout: one candidate per grid cell, cells shuffled.
    constexpr std::size_t cols = 4, rows = 3;
    std::vector<std::size_t> cells(cols * rows);
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
    for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);
    const std::int64_t cw = s.width / static_cast<std::int64_t>(cols);
    const std::int64_t ch = s.height / static_cast<std::int64_t>(rows);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    s.candidates.resize(n);
    for (std::size_t slot = 0; slot < n; ++slot) {
        const std::size_t k = order[slot];  // candidate k gets category cats[slot]
        Candidate& c = s.candidates[k];
        c.category = cats[slot];
        const bool is_target = slot == 0;
        if (is_target) s.target = k;
        const double frac = (is_target && bucket == Bucket::hard) ? 0.3 + 0.2 * rng.uniform() : 0.5 + 0.4 * rng.uniform();
        const auto w = std::max<std::int64_t>(2, static_cast<std::int64_t>(frac * static_cast<double>(cw)));
        const auto h = std::max<std::int64_t>(2, static_cast<std::int64_t>(frac * static_cast<double>(ch)));
        const std::int64_t cx = static_cast<std::int64_t>(cells[slot] % cols) * cw;
        const std::int64_t cy = static_cast<std::int64_t>(cells[slot] / cols) * ch;
        c.bbox = {cx + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(cw - w + 1))),
                  cy + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(ch - h + 1))), w, h};

        c.feature.assign(sp.feature_dim, 0.0);
        for (std::size_t d = 0; d < sp.feature_dim; ++d) {
            if (d < sp.category_dims) c.feature[d] = protos[c.category][d] + sp.instance_noise * rng.normal();
            else c.feature[d] = rng.normal();
        }
    }

    s.scenario_feature = s.candidates[s.target].feature;
    for (auto& v : s.scenario_feature) v += sp.cue_noise[b] * rng.normal();

    // Difficulty in [0,1] from clutter, distractors, cue noise and target size.
    const double clutter = static_cast<double>(n - 2) / 8.0;
    const double distract = std::min(1.0, static_cast<double>(s.same_category_distractors()) / 3.0);
    const double noise = sp.cue_noise[b] / std::max(1e-12, *std::max_element(sp.cue_noise.begin(), sp.cue_noise.end()));
    const double small = 1.0 - static_cast<double>(s.target_candidate().bbox.area()) / static_cast<double>(cw * ch);
    s.difficulty = std::clamp((clutter + distract + noise + small) / 4.0, 0.0, 1.0);
    return s;
}

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

/// Bilinear scorer; theta is F x F row-major.
struct ToyPolicy {
    std::size_t dim = 0;
    std::vector<double> theta;

    static ToyPolicy scaled_identity(std::size_t dim, double scale) {
        ToyPolicy p{dim, std::vector<double>(dim * dim, 0.0)};
        for (std::size_t i = 0; i < dim; ++i) p.theta[i * dim + i] = scale;
        return p;
    }
    double& at(std::size_t i, std::size_t j) { return theta[i * dim + j]; }
    double at(std::size_t i, std::size_t j) const { return theta[i * dim + j]; }
};

inline std::vector<double> logits(const ToyPolicy& pol, const SyntheticScene& s) {
    std::vector<double> proj(pol.dim, 0.0);  // s^T Theta
    for (std::size_t i = 0; i < pol.dim; ++i)
        for (std::size_t j = 0; j < pol.dim; ++j) proj[j] += s.scenario_feature[i] * pol.at(i, j);
    std::vector<double> out;
    out.reserve(s.candidates.size());
    for (const auto& c : s.candidates) {
        double z = 0.0;
        for (std::size_t j = 0; j < pol.dim; ++j) z += proj[j] * c.feature[j];
        out.push_back(z);
    }
    return out;
}

inline std::vector<double> softmax(const std::vector<double>& z, double temperature) {
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) sum += (p[k] = std::exp((z[k] - m) / temperature));
    for (auto& v : p) v /= sum;
    return p;
}

inline std::vector<double> probabilities(const ToyPolicy& pol, const SyntheticScene& s, double temperature) {
    return softmax(logits(pol, s), temperature);
}

/// KL(p || q) for categorical distributions; clamped at 0.
inline double categorical_kl(const std::vector<double>& p, const std::vector<double>& q) {
    double kl = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k)
        if (p[k] > 0.0) kl += p[k] * (std::log(p[k]) - std::log(q[k]));
    return std::max(0.0, kl);
}

struct Rollout {
    std::string completion;
    std::size_t chosen = 0;
    double log_prob = 0.0;
    std::vector<double> probs;
};

inline Rollout rollout(const ToyPolicy& pol, const SyntheticScene& s, double temperature, CounterRng& rng) {
    if (!(temperature > 0.0)) throw ValidationError("rollout", "temperature must be positive");
    Rollout r;
    r.probs = probabilities(pol, s, temperature);
    const double u = rng.uniform();
    double cum = 0.0;
    r.chosen = r.probs.size() - 1;
    for (std::size_t k = 0; k < r.probs.size(); ++k) {
        cum += r.probs[k];
        if (u < cum) {
            r.chosen = k;
            break;
        }
    }
    r.log_prob = std::log(r.probs[r.chosen]);
    const auto& c = s.candidates[r.chosen];
    r.completion = render_completion("the scenario cue best matches candidate " + std::to_string(r.chosen),
                                     categories()[c.category].name, c.bbox);
    return r;
}

// ---------------------------------------------------------------------------
// Objective and gradient
// ---------------------------------------------------------------------------

/// Sampled group for one scene: the choices made and their advantages.
struct GroupSample {
    std::vector<std::size_t> chosen;
    std::vector<double> advantages;
};

/// Gradient of  mean_scenes[ (1/K) sum_k A_k log pi(c_k) - beta KL(pi || pi_ref) ]
/// with respect to Theta, using d log softmax and the analytic categorical KL
/// derivative dKL/dz_j = p_j (log p_j - log q_j - KL).
inline std::vector<double> objective_gradient(const ToyPolicy& pol, const ToyPolicy& ref,
                                              const std::vector<const SyntheticScene*>& scenes,
                                              const std::vector<GroupSample>& groups, double beta,
                                              double temperature) {
    const std::size_t F = pol.dim;
    std::vector<double> grad(F * F, 0.0);
    const double inv_b = 1.0 / static_cast<double>(scenes.size());
    for (std::size_t b = 0; b < scenes.size(); ++b) {
        const auto& s = *scenes[b];
        const auto p = probabilities(pol, s, temperature);
        const auto q = probabilities(ref, s, temperature);
        const double kl = categorical_kl(p, q);
        // Coefficient on each candidate's logit (before the 1/T factor).
        std::vector<double> coef(p.size(), 0.0);
        const auto& g = groups[b];
        const double inv_k = 1.0 / static_cast<double>(g.chosen.size());
        for (std::size_t k = 0; k < g.chosen.size(); ++k) {
            for (std::size_t j = 0; j < p.size(); ++j) coef[j] -= inv_k * g.advantages[k] * p[j];
            coef[g.chosen[k]] += inv_k * g.advantages[k];
        }
        for (std::size_t j = 0; j < p.size(); ++j)
            if (p[j] > 0.0) coef[j] -= beta * p[j] * (std::log(p[j]) - std::log(q[j]) - kl);
        // d logit_j / d Theta = s f_j^T
        std::vector<double> mix(F, 0.0);
        for (std::size_t j = 0; j < p.size(); ++j)
            for (std::size_t d = 0; d < F; ++d) mix[d] += coef[j] * s.candidates[j].feature[d];
        const double scale = inv_b / temperature;
        for (std::size_t i = 0; i < F; ++i)
            for (std::size_t d = 0; d < F; ++d) grad[i * F + d] += scale * s.scenario_feature[i] * mix[d];
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct StageConfig {
    std::string name = "stage1";
    int schedule_stage = 1;  // selects reward weights and KL band (1 or 2)
    int steps = 100;
    int K = 6;
    double lr = 0.05;
    double temperature = 0.8;
    CurriculumMixture mixture = CurriculumMixture::stage1();
};

struct SandboxConfig {
    SceneParams scene;
    std::size_t pool_per_bucket = 200;
    std::size_t heldout_per_bucket = 200;
    std::size_t batch_scenes = 16;
    double init_scale = 0.0;
    std::uint64_t seed = 7;
    unsigned threads = 1;
    std::vector<StageConfig> stages;
    EngineConfig engine;

    static SandboxConfig defaults() {
        SandboxConfig c;
        c.stages = {
            {"stage1", 1, 100, 6, 0.05, 0.8, CurriculumMixture::stage1()},
            {"stage2", 2, 100, 12, 0.10, 0.9, CurriculumMixture::stage2()},
        };
        return c;
    }

    /// Same stages with their mixtures in reverse order (hard-first).
    SandboxConfig anti_curriculum() const {
        SandboxConfig c = *this;
        for (std::size_t i = 0; i < stages.size(); ++i) c.stages[i].mixture = stages[stages.size() - 1 - i].mixture;
        return c;
    }

    void validate() const {
        engine.validate();
        if (stages.empty()) throw ValidationError("sandbox", "need at least one stage");
        if (scene.category_dims > scene.feature_dim || scene.feature_dim == 0)
            throw ValidationError("sandbox", "category_dims must be <= feature_dim");
        if (pool_per_bucket < 1 || heldout_per_bucket < 1 || batch_scenes < 1)
            throw ValidationError("sandbox", "pool, held-out and batch sizes must be positive");
        for (const auto& s : stages) {
            if (s.K < 2) throw ValidationError("sandbox." + s.name, "K must be >= 2");
            if (s.steps < 1) throw ValidationError("sandbox." + s.name, "steps must be >= 1");
            if (!(s.temperature > 0)) throw ValidationError("sandbox." + s.name, "temperature must be positive");
            if (!(s.lr >= 0)) throw ValidationError("sandbox." + s.name, "lr must be non-negative");
            if (s.schedule_stage != 1 && s.schedule_stage != 2)
                throw ValidationError("sandbox." + s.name, "stage must be 1 or 2");
            s.mixture.validate();
        }
    }
};

/// Reads the "sandbox" namespace; engine namespaces come from the same document.
inline SandboxConfig sandbox_config_from_json(const nlohmann::json& j) {
    SandboxConfig c = SandboxConfig::defaults();
    if (!j.is_object()) throw ParseError("config", "must be a JSON object");
    c.engine = config_from_json(j);
    if (!j.contains("sandbox")) return c;
    const auto& s = j["sandbox"];
    using detail::read_opt;
    read_opt(s, "feature_dim", c.scene.feature_dim, "sandbox");
    read_opt(s, "category_dims", c.scene.category_dims, "sandbox");
    read_opt(s, "instance_noise", c.scene.instance_noise, "sandbox");
    read_opt(s, "cue_noise", c.scene.cue_noise, "sandbox");
    read_opt(s, "pool_per_bucket", c.pool_per_bucket, "sandbox");
    read_opt(s, "heldout_per_bucket", c.heldout_per_bucket, "sandbox");
    read_opt(s, "batch_scenes", c.batch_scenes, "sandbox");
    read_opt(s, "init_scale", c.init_scale, "sandbox");
    read_opt(s, "seed", c.seed, "sandbox");
    if (s.contains("stages")) {
        c.stages.clear();
        for (const auto& st : s["stages"]) {
            StageConfig sc;
            read_opt(st, "name", sc.name, "sandbox.stages");
            read_opt(st, "stage", sc.schedule_stage, "sandbox.stages");
            read_opt(st, "steps", sc.steps, "sandbox.stages");
            read_opt(st, "K", sc.K, "sandbox.stages");
            read_opt(st, "lr", sc.lr, "sandbox.stages");
            read_opt(st, "temperature", sc.temperature, "sandbox.stages");
            sc.mixture = c.engine.curriculum[static_cast<std::size_t>(std::clamp(sc.schedule_stage, 1, 2) - 1)];
            read_opt(st, "mixture", sc.mixture.p, "sandbox.stages");
            c.stages.push_back(sc);
        }
    } else {
        c.stages[0].mixture = c.engine.curriculum[0];
        c.stages[1].mixture = c.engine.curriculum[1];
    }
    c.validate();
    return c;
}

struct StepStats {
    int step = 0;
    std::string stage;
    double mean_reward = 0.0;
    double mean_iou_reward = 0.0;
    double mean_cat_reward = 0.0;
    double mean_kl = 0.0;
    double beta = 0.0;
    RewardWeights weights;
    std::size_t template_id = 0;

    friend bool operator==(const StepStats&, const StepStats&) = default;
};

struct BucketEval {
    std::size_t n = 0;
    double accuracy = 0.0;     // greedy choice == target
    double mean_reward = 0.0;  // greedy completion under late stage-2 weights
};

struct TrainResult {
    std::vector<StepStats> curve;
    std::array<BucketEval, 3> eval{};
    std::map<std::size_t, std::pair<double, std::size_t>> template_rewards;  // id -> (sum, count)
    ToyPolicy policy;
};

struct StepResult {
    StepStats stats;
    KlSchedulerState kl;
};

namespace detail {

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

} // namespace detail

/// One GRPO update over a batch of scenes. Rollouts for scene b use the
/// stream rng.fork({b}); the policy update is applied in place.
inline StepResult grpo_step(ToyPolicy& policy, const ToyPolicy& ref, const std::vector<const SyntheticScene*>& scenes,
                            int K, const RewardParams& params, const StepContext& ctx, KlSchedulerState kl,
                            double lr, double temperature, const CounterRng& rng, unsigned threads = 1) {
    if (K < 2) throw ValidationError("grpo_step", "K must be >= 2");
    const std::size_t B = scenes.size();
    std::vector<GroupSample> groups(B);
    std::vector<double> reward_sum(B, 0.0), iou_sum(B, 0.0), cat_sum(B, 0.0), kls(B, 0.0);

    detail::parallel_for(B, threads, [&](std::size_t b) {
        const auto& s = *scenes[b];
        CounterRng local = rng.fork({b});
        const auto gt = s.ground_truth();
        std::vector<double> rewards;
        for (int k = 0; k < K; ++k) {
            const auto ro = rollout(policy, s, temperature, local);
            const auto br = score_completion(ro.completion, gt, ctx, params);
            groups[b].chosen.push_back(ro.chosen);
            rewards.push_back(br.total);
            iou_sum[b] += br.r_iou;
            cat_sum[b] += br.r_cat;
        }
        for (double r : rewards) reward_sum[b] += r;
        groups[b].advantages = group_advantages(rewards);
        kls[b] = categorical_kl(probabilities(policy, s, temperature), probabilities(ref, s, temperature));
    });

    const auto grad = objective_gradient(policy, ref, scenes, groups, kl.beta, temperature);
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
            throw std::runtime_error("grpo_step: non-finite gradient at theta[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < grad.size(); ++i) policy.theta[i] += lr * grad[i];

    StepResult out;
    const double n = static_cast<double>(B) * K;
    for (std::size_t b = 0; b < B; ++b) {
        out.stats.mean_reward += reward_sum[b] / n;
        out.stats.mean_iou_reward += iou_sum[b] / n;
        out.stats.mean_cat_reward += cat_sum[b] / n;
        out.stats.mean_kl += kls[b] / static_cast<double>(B);
    }
    out.stats.beta = kl.beta;
    out.stats.weights = annealed_weights(ctx.step, ctx.total_steps, ctx.schedule);
    out.kl = kl_update(kl, out.stats.mean_kl);
    return out;
}

inline std::size_t greedy_choice(const ToyPolicy& pol, const SyntheticScene& s) {
    const auto z = logits(pol, s);
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

inline std::vector<SyntheticScene> generate_scenes(const SandboxConfig& cfg, std::uint64_t label, std::size_t per_bucket,
                                                   const std::vector<std::vector<double>>& protos) {
    std::vector<SyntheticScene> out;
    for (std::size_t b = 0; b < 3; ++b) {
        for (std::size_t i = 0; i < per_bucket; ++i) {
            CounterRng rng(derive_key(cfg.seed, {label, b, i}));
            out.push_back(generate_scene(rng, static_cast<Bucket>(b), cfg.scene, protos));
        }
    }
    return out;
}

inline std::array<BucketEval, 3> evaluate_policy(const ToyPolicy& pol, const std::vector<SyntheticScene>& scenes,
                                                 const RewardParams& params) {
    std::array<BucketEval, 3> ev{};
    StepContext ctx{1, 1, WeightSchedule::stage2()};
    for (const auto& s : scenes) {
        auto& e = ev[static_cast<std::size_t>(s.bucket)];
        const std::size_t k = greedy_choice(pol, s);
        const auto& c = s.candidates[k];
        const auto br = score_completion(render_completion("", categories()[c.category].name, c.bbox), s.ground_truth(),
                                         ctx, params);
        ++e.n;
        e.accuracy += k == s.target ? 1.0 : 0.0;
        e.mean_reward += br.total;
    }
    for (auto& e : ev)
        if (e.n > 0) {
            e.accuracy /= static_cast<double>(e.n);
            e.mean_reward /= static_cast<double>(e.n);
        }
    return ev;
}

/// Runs every stage in order and evaluates the greedy policy on held-out
/// scenes per generation bucket.
inline TrainResult train(const SandboxConfig& cfg) {
    cfg.validate();
    const auto protos = category_prototypes(cfg.scene, cfg.seed);
    const auto pool = generate_scenes(cfg, 1, cfg.pool_per_bucket, protos);
    const auto heldout = generate_scenes(cfg, 2, cfg.heldout_per_bucket, protos);

    std::vector<double> difficulty;
    for (const auto& s : pool) difficulty.push_back(s.difficulty);
    const Buckets buckets = bucketize(difficulty);

    TrainResult res;
    res.policy = ToyPolicy::scaled_identity(cfg.scene.feature_dim, cfg.init_scale);
    const ToyPolicy ref = res.policy;
    const std::size_t n_templates = builtin_templates().size();

    int global = 0;
    for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
        const auto& st = cfg.stages[si];
        KlSchedulerState kl = cfg.engine.kl_for(st.schedule_stage);
        const WeightSchedule schedule = cfg.engine.schedule(st.schedule_stage);
        for (int step = 0; step < st.steps; ++step, ++global) {
            const auto gstep = static_cast<std::uint64_t>(global);
            const auto batch = sample_batch(buckets, st.mixture, cfg.batch_scenes, derive_key(cfg.seed, {0xBA, gstep}));
            std::vector<const SyntheticScene*> scenes;
            for (auto i : batch.indices) scenes.push_back(&pool[i]);
            const std::size_t tmpl = pick_template(gstep, n_templates, cfg.seed);
            const StepContext ctx{step, st.steps, schedule};
            const CounterRng rng(derive_key(cfg.seed, {0x5017, gstep}));
            auto r = grpo_step(res.policy, ref, scenes, st.K, cfg.engine.reward, ctx, kl, st.lr, st.temperature, rng,
                               cfg.threads);
            kl = r.kl;
            r.stats.step = global;
            r.stats.stage = st.name;
            r.stats.template_id = tmpl;
            auto& tr = res.template_rewards[tmpl];
            tr.first += r.stats.mean_reward;
            ++tr.second;
            res.curve.push_back(r.stats);
        }
    }
    res.eval = evaluate_policy(res.policy, heldout, cfg.engine.reward);
    return res;
}

namespace detail {

/// Shortest text that reads back to the same double.
inline std::string shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace detail

inline void write_curve_csv(const TrainResult& r, std::ostream& out) {
    using detail::shortest;
    out << "step,stage,mean_reward,mean_iou_reward,mean_cat_reward,mean_kl,beta,weights\n";
    for (const auto& s : r.curve) {
        out << s.step << ',' << s.stage << ',' << shortest(s.mean_reward) << ',' << shortest(s.mean_iou_reward) << ','
            << shortest(s.mean_cat_reward) << ',' << shortest(s.mean_kl) << ',' << shortest(s.beta) << ','
            << shortest(s.weights.iou) << ';' << shortest(s.weights.cat) << ';' << shortest(s.weights.fmt) << ';'
            << shortest(s.weights.structure) << '\n';
    }
}

inline nlohmann::json summary_json(const TrainResult& r) {
    nlohmann::json j;
    for (std::size_t b = 0; b < 3; ++b)
        j["eval"][std::string(kBucketNames[b])] = {{"n", r.eval[b].n}, {"greedy_accuracy", r.eval[b].accuracy},
                                                   {"greedy_reward", r.eval[b].mean_reward}};
    for (const auto& [id, v] : r.template_rewards)
        j["template_mean_reward"][std::to_string(id)] = v.second ? v.first / static_cast<double>(v.second) : 0.0;
    if (!r.curve.empty()) {
        j["first_step_reward"] = r.curve.front().mean_reward;
        j["final_step_reward"] = r.curve.back().mean_reward;
    }
    return j;
}

} // namespace groundkit::sandbox
