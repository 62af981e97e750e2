#pragma once
// Axis-aligned pixel boxes: exact IoU, center distance and the
// xywh -> xyxy -> clamp normalization applied to model-emitted 4-vectors.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <utility>

namespace groundkit {

/// Pixel box in xywh. Valid boxes inside a W x H image satisfy
/// 0 <= x, x + w <= W, 0 <= y, y + h <= H, w >= 1, h >= 1.
struct BoundingBox {
    std::int64_t x = 0;
    std::int64_t y = 0;
    std::int64_t w = 0;
    std::int64_t h = 0;

    constexpr std::int64_t x2() const noexcept { return x + w; }
    constexpr std::int64_t y2() const noexcept { return y + h; }
    constexpr std::int64_t area() const noexcept { return w * h; }

    friend constexpr bool operator==(const BoundingBox&, const BoundingBox&) = default;
    friend std::ostream& operator<<(std::ostream& os, const BoundingBox& b) {
        return os << '(' << b.x << ',' << b.y << ',' << b.w << ',' << b.h << ')';
    }
};

/// Raw 4-vector as emitted by a model; interpretation decided by normalize_box.
using RawBox4 = std::array<double, 4>;

constexpr bool within_image(const BoundingBox& b, std::int64_t W, std::int64_t H) noexcept {
    return b.x >= 0 && b.y >= 0 && b.w >= 1 && b.h >= 1 && b.x2() <= W && b.y2() <= H;
}

constexpr std::int64_t intersection_area(const BoundingBox& a, const BoundingBox& b) noexcept {
    const std::int64_t iw = std::min(a.x2(), b.x2()) - std::max(a.x, b.x);
    const std::int64_t ih = std::min(a.y2(), b.y2()) - std::max(a.y, b.y);
    return (iw > 0 && ih > 0) ? iw * ih : 0;
}

/// Intersection over union with integer intersection/union areas.
/// Returns 0 when both boxes have zero area.
inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
    const std::int64_t inter = intersection_area(a, b);
    const std::int64_t uni = a.area() + b.area() - inter;
    if (uni <= 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double center_x(const BoundingBox& b) noexcept { return b.x + 0.5 * static_cast<double>(b.w); }
inline double center_y(const BoundingBox& b) noexcept { return b.y + 0.5 * static_cast<double>(b.h); }

/// Euclidean distance between box centers divided by the image diagonal.
inline double center_distance_norm(const BoundingBox& a, const BoundingBox& b,
                                   std::int64_t W, std::int64_t H) noexcept {
    const double dx = center_x(a) - center_x(b);
    const double dy = center_y(a) - center_y(b);
    const double diag = std::hypot(static_cast<double>(W), static_cast<double>(H));
    return std::hypot(dx, dy) / diag;
}

enum class NormalizeRule { xywh, xyxy, clamp };

struct NormalizedBox {
    BoundingBox box;
    bool oob = false;
    NormalizeRule rule = NormalizeRule::clamp;
};

struct NormalizeOptions {
    /// When set, rules 1-2 also flag oob if rounding moved any coordinate.
    bool strict_oob = false;
};

namespace detail {

// Round half away from zero. Only called on finite values.
inline double round_px(double v) noexcept { return std::round(v); }

inline bool all_finite(const RawBox4& r) noexcept {
    return std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); });
}

inline bool rounding_moved(const RawBox4& raw) noexcept {
    return std::any_of(raw.begin(), raw.end(), [](double v) { return round_px(v) != v; });
}

// Clamp with non-finite inputs sent to the nearest bound (NaN -> lower).
inline double clamp_nonfinite(double v, double lo, double hi) noexcept {
    if (std::isnan(v)) return lo;
    return std::clamp(v, lo, hi);
}

// Clamp under the xywh reading. Per axis the left edge goes into [0, W-1] and
// the right edge into [left+1, W]. Non-finite origins go to the nearest bound;
// a non-finite extent of +inf reaches the far edge, anything else gives 1 px.
inline BoundingBox clamp_xywh(const RawBox4& raw, std::int64_t W, std::int64_t H) noexcept {
    const auto clamp_axis = [](double origin, double extent, double limit) {
        const bool origin_ok = std::isfinite(origin);
        const double o = origin_ok ? round_px(origin) : origin;
        const double lo = clamp_nonfinite(o, 0.0, limit - 1.0);
        double hi = std::isfinite(extent) ? (origin_ok ? o : lo) + round_px(extent) : extent;
        hi = clamp_nonfinite(hi, lo + 1.0, limit);
        return std::pair<std::int64_t, std::int64_t>{static_cast<std::int64_t>(lo),
                                                     static_cast<std::int64_t>(hi - lo)};
    };
    const auto [x, w] = clamp_axis(raw[0], raw[2], static_cast<double>(W));
    const auto [y, h] = clamp_axis(raw[1], raw[3], static_cast<double>(H));
    return {x, y, w, h};
}

} // namespace detail

/// Maps a raw prediction onto a valid pixel box inside a W x H image.
///
/// Priority: (1) xywh if the origin is inside the image and the extent fits;
/// (2) xyxy if the corners are ordered and inside the image; (3) clamp the
/// xywh reading to the image with a minimum 1 px side.
inline NormalizedBox normalize_box(const RawBox4& raw, std::int64_t W, std::int64_t H,
                                   NormalizeOptions opt = {}) noexcept {
    const double Wd = static_cast<double>(W);
    const double Hd = static_cast<double>(H);

    if (detail::all_finite(raw)) {
        const double x = detail::round_px(raw[0]);
        const double y = detail::round_px(raw[1]);
        const double a = detail::round_px(raw[2]);
        const double b = detail::round_px(raw[3]);
        const bool moved = opt.strict_oob && detail::rounding_moved(raw);

        if (x >= 0 && x < Wd && y >= 0 && y < Hd && a >= 1 && b >= 1 && x + a <= Wd &&
            y + b <= Hd) {
            BoundingBox out{static_cast<std::int64_t>(x), static_cast<std::int64_t>(y),
                            static_cast<std::int64_t>(a), static_cast<std::int64_t>(b)};
            return {out, moved, NormalizeRule::xywh};
        }
        if (a > x && b > y && x >= 0 && y >= 0 && a <= Wd && b <= Hd) {
            BoundingBox out{static_cast<std::int64_t>(x), static_cast<std::int64_t>(y),
                            static_cast<std::int64_t>(a - x), static_cast<std::int64_t>(b - y)};
            return {out, moved, NormalizeRule::xyxy};
        }
    }

    const BoundingBox out = detail::clamp_xywh(raw, W, H);

    bool oob = true;
    if (detail::all_finite(raw)) {
        oob = !(detail::round_px(raw[0]) == static_cast<double>(out.x) &&
                detail::round_px(raw[1]) == static_cast<double>(out.y) &&
                detail::round_px(raw[2]) == static_cast<double>(out.w) &&
                detail::round_px(raw[3]) == static_cast<double>(out.h));
    }
    return {out, oob, NormalizeRule::clamp};
}

/// Clips a source-annotation box (reals, xywh) to the image. Coordinates are
/// rounded half away from zero first, then each side is forced to >= 1 px.
inline BoundingBox clip_source_box(const RawBox4& raw, std::int64_t W, std::int64_t H) noexcept {
    return detail::clamp_xywh(raw, W, H);
}

} // namespace groundkit
