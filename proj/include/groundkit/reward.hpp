#pragma once
// Shaped reward for grounding completions: geometry, category, format and
// structure components, linearly annealed weights and the weighted total.
// Defaults are the published hyperparameters.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "groundkit/box.hpp"
#include "groundkit/completion.hpp"
#include "groundkit/error.hpp"
#include "groundkit/text.hpp"

namespace groundkit {

struct GeometryParams {
    double tau1 = 0.50;      // first IoU operating point
    double tau2 = 0.70;      // second IoU operating point
    double kappa = 0.03;     // logistic width
    double alpha1 = 0.30;
    double alpha2 = 0.50;
    double alpha_c = 0.02;   // center-consistency coefficient
    double sigma_c = 0.20;   // center bandwidth, fraction of the diagonal
    double alpha_oob = 0.05;
    bool strict_oob = false;

    void validate() const {
        if (!(0.0 <= tau1 && tau1 < tau2 && tau2 <= 1.0)) throw ValidationError("geometry", "need 0 <= tau1 < tau2 <= 1");
        if (!(kappa > 0.0)) throw ValidationError("geometry", "kappa must be positive");
        if (!(alpha1 >= 0 && alpha2 >= 0 && alpha_c >= 0 && alpha_oob >= 0))
            throw ValidationError("geometry", "alphas must be non-negative");
        if (!(sigma_c > 0.0)) throw ValidationError("geometry", "sigma_c must be positive");
    }
};

struct CategoryParams {
    double tau_g = 0.30;  // IoU gate threshold
    double gate = 0.5;    // factor applied below the gate
    double eta = 0.80;    // alias credit
    double rho_l = 0.40;  // soft-overlap base
    double rho_s = 0.30;  // soft-overlap span

    void validate() const {
        if (!(gate > 0.0 && gate <= 1.0)) throw ValidationError("category", "gate must be in (0,1]");
        if (!(rho_l >= 0.0 && rho_s >= 0.0 && rho_l + rho_s <= 1.0))
            throw ValidationError("category", "need rho_l, rho_s >= 0 and rho_l + rho_s <= 1");
        if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("category", "eta must be in [0,1]");
    }
};

struct StructureParams {
    double gamma_tag = 0.25;
    double gamma_key = 0.75;
    double gamma_min = -0.50;  // floor; never binds with non-negative coefficients

    void validate() const {
        if (!(gamma_tag >= 0.0 && gamma_key >= 0.0))
            throw ValidationError("structure", "gamma_tag and gamma_key must be non-negative");
    }
};

/// Reward weights in (iou, cat, fmt, struct) order.
struct RewardWeights {
    double iou = 0.0, cat = 0.0, fmt = 0.0, structure = 0.0;

    friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
    double sum() const noexcept { return iou + cat + fmt + structure; }
};

struct WeightSchedule {
    RewardWeights start;
    RewardWeights late;
    double p_anneal = 0.60;

    void validate() const {
        for (double w : {start.iou, start.cat, start.fmt, start.structure, late.iou, late.cat, late.fmt, late.structure})
            if (!(w >= 0.0)) throw ValidationError("weights", "weights must be non-negative");
        if (!(p_anneal > 0.0 && p_anneal <= 1.0)) throw ValidationError("weights", "p_anneal must be in (0,1]");
    }

    static WeightSchedule stage1() {
        const RewardWeights w{0.75, 0.15, 0.07, 0.03};
        return {w, w, 0.60};
    }
    static WeightSchedule stage2() {
        return {{0.55, 0.25, 0.12, 0.08}, {0.75, 0.20, 0.04, 0.01}, 0.60};
    }
    static WeightSchedule for_stage(int stage) {
        if (stage == 1) return stage1();
        if (stage == 2) return stage2();
        throw ValidationError("stage", "stage must be 1 or 2");
    }
};

struct RewardParams {
    GeometryParams geometry;
    CategoryParams category;
    StructureParams structure;
    ParserKeys keys;

    void validate() const {
        geometry.validate();
        category.validate();
        structure.validate();
    }
};

// ---------------------------------------------------------------------------
// Components
// ---------------------------------------------------------------------------

/// Logistic with the exponent clamped so exp() never overflows.
inline double logistic(double z) noexcept {
    z = std::clamp(z, -700.0, 700.0);
    return 1.0 / (1.0 + std::exp(-z));
}

struct GeometryResult {
    double r_iou = 0.0;
    double iou = 0.0;
    bool oob = false;
    BoundingBox box;  // normalized prediction
};

/// r_iou from an already-normalized prediction.
inline double geometry_reward_value(double iou_v, double center_dist, bool oob, const GeometryParams& p) noexcept {
    const double shaped = iou_v + p.alpha1 * logistic((iou_v - p.tau1) / p.kappa) +
                          p.alpha2 * logistic((iou_v - p.tau2) / p.kappa) +
                          p.alpha_c * std::exp(-(center_dist * center_dist) / (2.0 * p.sigma_c * p.sigma_c));
    return std::min(1.0, shaped) - (oob ? p.alpha_oob : 0.0);
}

inline GeometryResult geometry_reward(const RawBox4& raw, const BoundingBox& gt, std::int64_t W, std::int64_t H,
                                      const GeometryParams& p) noexcept {
    const auto nb = normalize_box(raw, W, H, {p.strict_oob});
    GeometryResult g;
    g.box = nb.box;
    g.oob = nb.oob;
    g.iou = iou(nb.box, gt);
    g.r_iou = geometry_reward_value(g.iou, center_distance_norm(nb.box, gt, W, H), g.oob, p);
    return g;
}

enum class CategoryTier { canonical, alias, soft };

inline constexpr std::string_view to_string(CategoryTier t) noexcept {
    switch (t) {
        case CategoryTier::canonical: return "canonical";
        case CategoryTier::alias: return "alias";
        case CategoryTier::soft: return "soft";
    }
    return "?";
}

struct CategoryResult {
    double r_cat = 0.0;
    CategoryTier tier = CategoryTier::soft;
    double tier_value = 0.0;
    double gate = 1.0;
};

/// Alias-aware category credit gated by IoU. `canonical` names count as
/// aliases too.
inline CategoryResult category_reward(std::string_view pred_name, const std::vector<std::string>& canonical,
                                      const std::vector<std::string>& aliases, double iou_v,
                                      const CategoryParams& p) {
    CategoryResult r;
    r.gate = iou_v >= p.tau_g ? 1.0 : p.gate;
    const std::string pred = text::normalize(pred_name);
    std::set<std::string> can, all;
    for (const auto& c : canonical) {
        can.insert(text::normalize(c));
        all.insert(text::normalize(c));
    }
    for (const auto& a : aliases) all.insert(text::normalize(a));

    if (!pred.empty() && can.count(pred)) {
        r.tier = CategoryTier::canonical;
        r.tier_value = 1.0;
    } else if (!pred.empty() && all.count(pred)) {
        r.tier = CategoryTier::alias;
        r.tier_value = p.eta;
    } else {
        double best = 0.0;
        for (const auto& a : all) best = std::max(best, text::jaccard(pred, a));
        r.tier = CategoryTier::soft;
        r.tier_value = p.rho_l + p.rho_s * best;
    }
    r.r_cat = r.gate * r.tier_value;
    return r;
}

inline double format_reward(const ParseFlags& f) noexcept { return (f.tag && f.json) ? 1.0 : -1.0; }

inline double structure_reward(const ParseFlags& f, const StructureParams& p) noexcept {
    return std::max(p.gamma_tag * (f.tag ? 1.0 : 0.0) + p.gamma_key * (f.keys ? 1.0 : 0.0), p.gamma_min);
}

/// Linear interpolation from start to late weights over the first p_anneal
/// fraction of training. Written as (1-p)*start + p*late so both endpoints
/// are reproduced bit-exactly.
inline RewardWeights annealed_weights(std::int64_t step, std::int64_t total_steps, const WeightSchedule& s) {
    if (step < 0) throw ValidationError("annealed_weights", "step must be non-negative");
    if (total_steps < 1) throw ValidationError("annealed_weights", "total_steps must be >= 1");
    const double p = std::min(1.0, static_cast<double>(step) / (s.p_anneal * static_cast<double>(total_steps)));
    const auto lerp = [p](double a, double b) {
        const double v = (1.0 - p) * a + p * b;
        return std::clamp(v, std::min(a, b), std::max(a, b));
    };
    return {lerp(s.start.iou, s.late.iou), lerp(s.start.cat, s.late.cat), lerp(s.start.fmt, s.late.fmt),
            lerp(s.start.structure, s.late.structure)};
}

// ---------------------------------------------------------------------------
// Total
// ---------------------------------------------------------------------------

struct GroundTruth {
    BoundingBox bbox;
    std::vector<std::string> canonical;
    std::vector<std::string> aliases;
    std::int64_t width = 1;
    std::int64_t height = 1;

    void validate() const {
        if (width < 1 || height < 1) throw ValidationError("gt", "width and height must be >= 1");
        if (!within_image(bbox, width, height)) throw ValidationError("gt", "bbox outside image");
    }
};

struct StepContext {
    std::int64_t step = 0;
    std::int64_t total_steps = 1;
    WeightSchedule schedule = WeightSchedule::stage1();
};

struct RewardBreakdown {
    double r_iou = 0.0;
    double r_cat = 0.0;
    double r_fmt = 0.0;
    double r_struct = 0.0;
    double iou = 0.0;
    bool oob = false;
    CategoryTier tier = CategoryTier::soft;
    RewardWeights weights;
    ParseFlags flags;
    double total = 0.0;

    friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

/// Box substituted when a completion carries no usable box; the clamp rule
/// turns it into a 1 x 1 box at the origin flagged out of bounds.
inline constexpr RawBox4 kFallbackBox{0.0, 0.0, 0.0, 0.0};

inline RewardBreakdown score_parsed(const ParsedAnswer& parsed, const GroundTruth& gt, const StepContext& ctx,
                                    const RewardParams& params) {
    RewardBreakdown b;
    b.flags = parsed.flags;
    const auto geo = geometry_reward(parsed.raw_box.value_or(kFallbackBox), gt.bbox, gt.width, gt.height,
                                     params.geometry);
    b.r_iou = geo.r_iou;
    b.iou = geo.iou;
    b.oob = geo.oob;
    const auto cat = category_reward(parsed.name.value_or(""), gt.canonical, gt.aliases, b.iou, params.category);
    b.r_cat = cat.r_cat;
    b.tier = cat.tier;
    b.r_fmt = format_reward(parsed.flags);
    b.r_struct = structure_reward(parsed.flags, params.structure);
    b.weights = annealed_weights(ctx.step, ctx.total_steps, ctx.schedule);
    b.total = b.weights.iou * b.r_iou + b.weights.cat * b.r_cat + b.weights.fmt * b.r_fmt +
              b.weights.structure * b.r_struct;
    return b;
}

inline RewardBreakdown score_completion(std::string_view text, const GroundTruth& gt, const StepContext& ctx,
                                        const RewardParams& params = {}) {
    return score_parsed(parse_completion(text, params.keys), gt, ctx, params);
}

} // namespace groundkit
