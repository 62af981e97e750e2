#pragma once
// Per-instance difficulty statistics, pool-level binning thresholds, tag
// assignment and the continuous difficulty score.
//
// Quantiles are nearest-rank; values equal to a threshold fall in the easier
// bin on every axis.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "groundkit/box.hpp"
#include "groundkit/dataset.hpp"
#include "groundkit/error.hpp"

namespace groundkit {

struct DifficultyStats {
    double area_frac = 0.0;        // a = wh / WH
    double center_dist = 0.0;      // d = |c - image center|^2 / (W^2 + H^2)
    double overlap_sum = 0.0;      // o = sum of IoUs with co-image instances
    std::int64_t same_cat_distractors = 0;  // m
    std::int64_t per_image_count = 1;       // N_img
};

/// Squared distance of a point to the image center over W^2 + H^2. Peaks at
/// 0.25 on the image corners.
inline double center_dist_sq_norm(double cx, double cy, std::int64_t W, std::int64_t H) noexcept {
    const double dx = cx - 0.5 * static_cast<double>(W);
    const double dy = cy - 0.5 * static_cast<double>(H);
    return (dx * dx + dy * dy) /
           (static_cast<double>(W) * static_cast<double>(W) + static_cast<double>(H) * static_cast<double>(H));
}

/// `siblings` are the other instances of the same image (excluding `inst`).
inline DifficultyStats instance_stats(const Instance& inst, std::span<const Instance> siblings,
                                      const ImageMeta& image) {
    DifficultyStats s;
    s.area_frac = static_cast<double>(inst.bbox.area()) /
                  (static_cast<double>(image.width) * static_cast<double>(image.height));
    s.center_dist = center_dist_sq_norm(center_x(inst.bbox), center_y(inst.bbox), image.width,
                                        image.height);
    for (const auto& o : siblings) {
        s.overlap_sum += iou(inst.bbox, o.bbox);
        if (o.category_id == inst.category_id) ++s.same_cat_distractors;
    }
    s.per_image_count = static_cast<std::int64_t>(siblings.size()) + 1;
    return s;
}

/// Stats for every instance of a pool, in pool order.
inline std::vector<DifficultyStats> pool_stats(const SourcePool& pool) {
    std::vector<DifficultyStats> out(pool.instances.size());
    for (const auto& [image_id, idx] : pool.by_image) {
        std::vector<Instance> siblings;
        siblings.reserve(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            siblings.clear();
            for (std::size_t j = 0; j < idx.size(); ++j)
                if (j != k) siblings.push_back(pool.instances[idx[j]]);
            const Instance& inst = pool.instances[idx[k]];
            out[idx[k]] = instance_stats(inst, siblings, inst.image);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Quantiles
// ---------------------------------------------------------------------------

/// Nearest-rank quantile at the rational level num/den of a sorted sample:
/// the value at 1-based rank ceil(n * num / den), at least 1.
template <class T>
T nearest_rank(std::span<const T> sorted, std::size_t num, std::size_t den) {
    if (sorted.empty()) throw std::invalid_argument("nearest_rank: empty sample");
    std::size_t rank = (sorted.size() * num + den - 1) / den;
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

/// Empirical-CDF normalization against a sorted reference sample:
/// #below / (#below + #above). Maps the sample minimum to 0 and the maximum to
/// 1, ties share a value, and a constant sample maps everything to 0.
inline double quantile_normalize(std::span<const double> sorted, double v) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), v);
    const auto hi = std::upper_bound(sorted.begin(), sorted.end(), v);
    const double below = static_cast<double>(lo - sorted.begin());
    const double above = static_cast<double>(sorted.end() - hi);
    if (below + above == 0.0) return 0.0;
    return below / (below + above);
}

struct DifficultyWeights {
    double size = 1.0;
    double overlap = 1.0;
    double position = 1.0;
    double distractors = 1.0;
    double rarity = 1.0;
    std::int64_t distractor_cap = 5;
};

/// Thresholds fitted once on the whole candidate pool and reused verbatim by
/// every downstream stage.
struct BinningSpec {
    double size_t1 = 0.0, size_t2 = 0.0;         // terciles of a
    double overlap_cut = 0.0;                    // 70th pct of positive o
    double position_median = 0.0;                // median of d
    std::int64_t clutter_t1 = 1, clutter_t2 = 1; // terciles of N_img
    std::size_t overlap_pct_num = 7, overlap_pct_den = 10;
    DifficultyWeights weights;
    // Sorted reference samples for quantile normalization.
    std::vector<double> area_sorted, overlap_sorted, position_sorted, category_freq_sorted;
};

/// Fits thresholds on pool statistics. `category_freqs`, when given, holds the
/// per-instance frequency of its category (fraction of the pool) and feeds the
/// rarity component of the score.
inline BinningSpec fit_binning(std::span<const DifficultyStats> pool,
                               std::span<const double> category_freqs = {},
                               std::size_t overlap_pct_num = 7, std::size_t overlap_pct_den = 10) {
    if (pool.size() < 3) throw InfeasibleError("insufficient pool for quantiles");
    BinningSpec spec;
    spec.overlap_pct_num = overlap_pct_num;
    spec.overlap_pct_den = overlap_pct_den;
    std::vector<double> a, o, d, positive_o;
    std::vector<std::int64_t> n;
    for (const auto& s : pool) {
        a.push_back(s.area_frac);
        o.push_back(s.overlap_sum);
        d.push_back(s.center_dist);
        n.push_back(s.per_image_count);
        if (s.overlap_sum > 0.0) positive_o.push_back(s.overlap_sum);
    }
    std::sort(a.begin(), a.end());
    std::sort(o.begin(), o.end());
    std::sort(d.begin(), d.end());
    std::sort(n.begin(), n.end());
    std::sort(positive_o.begin(), positive_o.end());

    spec.size_t1 = nearest_rank<double>(a, 1, 3);
    spec.size_t2 = nearest_rank<double>(a, 2, 3);
    spec.position_median = nearest_rank<double>(d, 1, 2);
    spec.clutter_t1 = nearest_rank<std::int64_t>(n, 1, 3);
    spec.clutter_t2 = nearest_rank<std::int64_t>(n, 2, 3);
    spec.overlap_cut = positive_o.empty()
                           ? 0.0
                           : nearest_rank<double>(positive_o, overlap_pct_num, overlap_pct_den);
    spec.area_sorted = std::move(a);
    spec.overlap_sorted = std::move(o);
    spec.position_sorted = std::move(d);
    spec.category_freq_sorted.assign(category_freqs.begin(), category_freqs.end());
    std::sort(spec.category_freq_sorted.begin(), spec.category_freq_sorted.end());
    return spec;
}

inline TagVector assign_tags(const DifficultyStats& s, const BinningSpec& spec) noexcept {
    TagVector t;
    t.U = s.same_cat_distractors == 0 ? 1 : 2;
    // Larger objects are easier, so ties on a size threshold go up a bin.
    t.S = s.area_frac < spec.size_t1   ? SizeBin::S
          : s.area_frac < spec.size_t2 ? SizeBin::M
                                       : SizeBin::L;
    t.P = s.center_dist > spec.position_median ? 1 : 0;
    t.C = s.per_image_count <= spec.clutter_t1 ? 1 : s.per_image_count <= spec.clutter_t2 ? 2 : 3;
    t.O = s.overlap_sum == 0.0 ? 0 : s.overlap_sum <= spec.overlap_cut ? 1 : 2;
    return t;
}

/// The five score components, each in [0,1] with larger meaning harder.
struct DifficultyComponents {
    double small = 0.0;        // 1 - q_a(a)
    double overlap = 0.0;      // q_o(o)
    double off_center = 0.0;   // q_d(d)
    double distractors = 0.0;  // min(m, cap) / cap
    double rarity = 0.0;       // 1 - q_f(category frequency)
};

inline double combine_difficulty(const DifficultyComponents& c, const DifficultyWeights& w) noexcept {
    const double total = w.size + w.overlap + w.position + w.distractors + w.rarity;
    if (total <= 0.0) return 0.0;
    const double v = (w.size * c.small + w.overlap * c.overlap + w.position * c.off_center +
                      w.distractors * c.distractors + w.rarity * c.rarity) /
                     total;
    return std::clamp(v, 0.0, 1.0);
}

inline DifficultyComponents difficulty_components(const DifficultyStats& s, const BinningSpec& spec,
                                                  double category_frequency) {
    DifficultyComponents c;
    c.small = 1.0 - quantile_normalize(spec.area_sorted, s.area_frac);
    c.overlap = quantile_normalize(spec.overlap_sorted, s.overlap_sum);
    c.off_center = quantile_normalize(spec.position_sorted, s.center_dist);
    const auto cap = std::max<std::int64_t>(1, spec.weights.distractor_cap);
    c.distractors = static_cast<double>(std::min(s.same_cat_distractors, cap)) / static_cast<double>(cap);
    c.rarity = spec.category_freq_sorted.empty()
                   ? 0.0
                   : 1.0 - quantile_normalize(spec.category_freq_sorted, category_frequency);
    return c;
}

inline double difficulty_score(const DifficultyStats& s, const BinningSpec& spec,
                               double category_frequency) {
    return combine_difficulty(difficulty_components(s, spec, category_frequency), spec.weights);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const BinningSpec& s) {
    return {
        {"size_terciles", {s.size_t1, s.size_t2}},
        {"overlap", {{"rule", "zero_then_percentile"},
                     {"percentile", {s.overlap_pct_num, s.overlap_pct_den}},
                     {"cut", s.overlap_cut}}},
        {"position_median", s.position_median},
        {"clutter_terciles", {s.clutter_t1, s.clutter_t2}},
        {"weights", {{"size", s.weights.size}, {"overlap", s.weights.overlap},
                     {"position", s.weights.position}, {"distractors", s.weights.distractors},
                     {"rarity", s.weights.rarity}, {"distractor_cap", s.weights.distractor_cap}}},
        {"quantile_maps", {{"area", s.area_sorted}, {"overlap", s.overlap_sorted},
                           {"position", s.position_sorted},
                           {"category_frequency", s.category_freq_sorted}}},
    };
}

inline BinningSpec binning_spec_from_json(const nlohmann::json& j) {
    try {
        BinningSpec s;
        s.size_t1 = j.at("size_terciles").at(0).get<double>();
        s.size_t2 = j.at("size_terciles").at(1).get<double>();
        s.overlap_cut = j.at("overlap").at("cut").get<double>();
        s.overlap_pct_num = j.at("overlap").at("percentile").at(0).get<std::size_t>();
        s.overlap_pct_den = j.at("overlap").at("percentile").at(1).get<std::size_t>();
        s.position_median = j.at("position_median").get<double>();
        s.clutter_t1 = j.at("clutter_terciles").at(0).get<std::int64_t>();
        s.clutter_t2 = j.at("clutter_terciles").at(1).get<std::int64_t>();
        const auto& w = j.at("weights");
        s.weights = {w.at("size").get<double>(), w.at("overlap").get<double>(),
                     w.at("position").get<double>(), w.at("distractors").get<double>(),
                     w.at("rarity").get<double>(), w.at("distractor_cap").get<std::int64_t>()};
        const auto& q = j.at("quantile_maps");
        s.area_sorted = q.at("area").get<std::vector<double>>();
        s.overlap_sorted = q.at("overlap").get<std::vector<double>>();
        s.position_sorted = q.at("position").get<std::vector<double>>();
        s.category_freq_sorted = q.at("category_frequency").get<std::vector<double>>();
        if (s.size_t1 > s.size_t2 || s.clutter_t1 > s.clutter_t2)
            throw ValidationError("binning spec", "thresholds must be non-decreasing");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("binning spec", e.what());
    }
}

// ---------------------------------------------------------------------------
// Pool tagging
// ---------------------------------------------------------------------------

struct TaggedPool {
    BinningSpec spec;
    std::vector<DifficultyStats> stats;
    std::vector<RscRecord> records;
};

/// Stats, thresholds, tags and difficulty for a whole source pool. Records
/// carry the category as their only alias and empty free-text fields.
inline TaggedPool tag_pool(const SourcePool& pool, const DifficultyWeights& weights = {}) {
    TaggedPool out;
    out.stats = pool_stats(pool);
    std::map<std::int64_t, std::size_t> cat_counts;
    for (const auto& inst : pool.instances) ++cat_counts[inst.category_id];
    const double n = static_cast<double>(pool.instances.size());
    std::vector<double> freqs;
    freqs.reserve(pool.instances.size());
    for (const auto& inst : pool.instances)
        freqs.push_back(static_cast<double>(cat_counts[inst.category_id]) / n);
    out.spec = fit_binning(out.stats, freqs);
    out.spec.weights = weights;

    out.records.reserve(pool.instances.size());
    for (std::size_t i = 0; i < pool.instances.size(); ++i) {
        const Instance& inst = pool.instances[i];
        RscRecord r;
        r.record_id = inst.instance_id;
        r.image = inst.image;
        r.category = inst.category_name;
        r.bbox = inst.bbox;
        r.aliases = {inst.category_name};
        r.tags = assign_tags(out.stats[i], out.spec);
        r.difficulty = difficulty_score(out.stats[i], out.spec, freqs[i]);
        out.records.push_back(std::move(r));
    }
    return out;
}

} // namespace groundkit
