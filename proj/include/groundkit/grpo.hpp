#pragma once
// Group-relative advantages, the adaptive KL coefficient, difficulty buckets
// with curriculum-mixture sampling, and prompt-template selection.

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "groundkit/difficulty.hpp"
#include "groundkit/error.hpp"
#include "groundkit/rng.hpp"

namespace groundkit {

/// A_k = r_k - mean(r). The mean is taken as r_0 + mean(r_k - r_0) so equal
/// rewards give exactly zero advantages.
inline std::vector<double> group_advantages(std::span<const double> rewards) {
    if (rewards.size() < 2) throw ValidationError("group_advantages", "a group needs at least 2 rewards");
    const double pivot = rewards[0];
    double acc = 0.0;
    for (double r : rewards) acc += r - pivot;
    const double mean = pivot + acc / static_cast<double>(rewards.size());
    std::vector<double> out;
    out.reserve(rewards.size());
    for (double r : rewards) out.push_back(r - mean);
    return out;
}

// ---------------------------------------------------------------------------
// Adaptive KL coefficient
// ---------------------------------------------------------------------------

struct KlSchedulerState {
    double beta = 2e-2;
    double kappa_tgt = 0.13;
    double kappa_tol = 0.03;
    double mu_up = 1.5;
    double mu_down = 0.66;
    double beta_min = 5e-4;
    double beta_max = 5e-2;

    void validate() const {
        if (!(beta_min > 0 && beta_min <= beta_max)) throw ValidationError("kl", "need 0 < beta_min <= beta_max");
        if (!(beta >= beta_min && beta <= beta_max)) throw ValidationError("kl", "beta outside [beta_min, beta_max]");
        if (!(mu_up > 1.0)) throw ValidationError("kl", "mu_up must exceed 1");
        if (!(mu_down > 0.0 && mu_down < 1.0)) throw ValidationError("kl", "mu_down must be in (0,1)");
        if (!(kappa_tol >= 0.0)) throw ValidationError("kl", "kappa_tol must be non-negative");
    }

    static KlSchedulerState stage1() { return {2e-2, 0.13, 0.03, 1.5, 0.66, 5e-4, 5e-2}; }
    static KlSchedulerState stage2() { return {2e-2, 0.15, 0.03, 1.6, 0.66, 5e-4, 5e-2}; }
    static KlSchedulerState for_stage(int stage) {
        if (stage == 1) return stage1();
        if (stage == 2) return stage2();
        throw ValidationError("stage", "stage must be 1 or 2");
    }
};

/// Multiplies beta up above the target band, down below it, then clips.
inline KlSchedulerState kl_update(KlSchedulerState s, double observed_kl) {
    if (!(observed_kl >= 0.0)) throw ValidationError("kl_update", "observed KL must be non-negative");
    if (observed_kl > s.kappa_tgt + s.kappa_tol) s.beta *= s.mu_up;
    else if (observed_kl < s.kappa_tgt - s.kappa_tol) s.beta *= s.mu_down;
    s.beta = std::clamp(s.beta, s.beta_min, s.beta_max);
    return s;
}

// ---------------------------------------------------------------------------
// Curriculum
// ---------------------------------------------------------------------------

enum class Bucket : std::uint8_t { easy = 0, medium = 1, hard = 2 };
inline constexpr std::array<std::string_view, 3> kBucketNames = {"easy", "medium", "hard"};

struct CurriculumMixture {
    std::array<double, 3> p{1.0, 0.0, 0.0};  // easy, medium, hard

    void validate() const {
        double s = 0.0;
        for (double v : p) {
            if (!(v >= 0.0)) throw ValidationError("curriculum", "mixture entries must be non-negative");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ValidationError("curriculum", "mixture must sum to 1");
    }

    static CurriculumMixture stage1() { return {{0.70, 0.30, 0.00}}; }
    static CurriculumMixture stage2() { return {{0.20, 0.60, 0.20}}; }
};

using Buckets = std::array<std::vector<std::size_t>, 3>;

/// Nearest-rank tercile buckets on difficulty; ties go to the easier bucket.
inline Buckets bucketize(std::span<const double> difficulty) {
    if (difficulty.size() < 3) throw InfeasibleError("bucketize needs at least 3 records");
    std::vector<double> sorted(difficulty.begin(), difficulty.end());
    std::sort(sorted.begin(), sorted.end());
    const double t1 = nearest_rank<double>(sorted, 1, 3);
    const double t2 = nearest_rank<double>(sorted, 2, 3);
    Buckets b;
    for (std::size_t i = 0; i < difficulty.size(); ++i) {
        const double d = difficulty[i];
        b[d <= t1 ? 0 : d <= t2 ? 1 : 2].push_back(i);
    }
    return b;
}

struct BatchSample {
    std::vector<std::size_t> indices;
    std::vector<Bucket> buckets;        // bucket of each draw
    std::array<double, 3> effective{};  // mixture after redistribution
    bool redistributed = false;
};

/// Draws `batch_size` indices: bucket by mixture probability, then a member
/// uniformly with replacement. Mass on empty buckets is spread over the
/// others in proportion to their own mass (uniformly if none has any).
inline BatchSample sample_batch(const Buckets& buckets, const CurriculumMixture& mixture, std::size_t batch_size,
                                std::uint64_t seed) {
    mixture.validate();
    BatchSample out;
    double live = 0.0;
    std::size_t nonempty = 0;
    for (std::size_t b = 0; b < 3; ++b) {
        if (buckets[b].empty()) continue;
        ++nonempty;
        live += mixture.p[b];
    }
    if (nonempty == 0) throw InfeasibleError("sample_batch: all buckets are empty");
    for (std::size_t b = 0; b < 3; ++b) {
        if (buckets[b].empty()) {
            out.effective[b] = 0.0;
            out.redistributed = out.redistributed || mixture.p[b] > 0.0;
        } else {
            out.effective[b] = live > 0.0 ? mixture.p[b] / live : 1.0 / static_cast<double>(nonempty);
        }
    }
    if (live <= 0.0) out.redistributed = true;

    std::size_t last = 0;
    for (std::size_t b = 0; b < 3; ++b)
        if (out.effective[b] > 0.0) last = b;

    CounterRng rng(derive_key(seed, {0xBA7C4}));
    out.indices.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const double u = rng.uniform();
        std::size_t pick = last;
        double cum = 0.0;
        for (std::size_t b = 0; b < 3; ++b) {
            if (out.effective[b] <= 0.0) continue;
            cum += out.effective[b];
            if (u < cum) {
                pick = b;
                break;
            }
        }
        const auto& members = buckets[pick];
        out.indices.push_back(members[rng.below(members.size())]);
        out.buckets.push_back(static_cast<Bucket>(pick));
    }
    return out;
}

/// Uniform template index for a training step, replayable from (seed, step).
inline std::size_t pick_template(std::uint64_t step, std::size_t n_templates, std::uint64_t seed) {
    if (n_templates < 1) throw ValidationError("pick_template", "need at least one template");
    CounterRng rng(derive_key(seed, {0x7E3B1A7E, step}));
    return static_cast<std::size_t>(rng.below(n_templates));
}

} // namespace groundkit
