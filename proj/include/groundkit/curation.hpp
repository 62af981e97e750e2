#pragma once
// Tag-balanced, category-quota'd, image-disjoint split construction and the
// automatic leakage gate.
//
// Pipeline: category_quotas -> allocate_bins -> sample_splits. Every step is
// deterministic given (pool, seed).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "groundkit/dataset.hpp"
#include "groundkit/difficulty.hpp"
#include "groundkit/error.hpp"
#include "groundkit/rng.hpp"
#include "groundkit/text.hpp"

namespace groundkit {

// ---------------------------------------------------------------------------
// Targets and plans
// ---------------------------------------------------------------------------

/// Target probability vector per tag axis, indexed like axis_bin().
struct MarginalTargets {
    std::array<std::vector<double>, 5> per_axis;

    static MarginalTargets uniform() {
        MarginalTargets t;
        for (TagAxis a : kTagAxes) {
            const auto n = axis_size(a);
            t.per_axis[static_cast<std::size_t>(a)].assign(n, 1.0 / static_cast<double>(n));
        }
        return t;
    }

    const std::vector<double>& operator[](TagAxis a) const { return per_axis[static_cast<std::size_t>(a)]; }
    std::vector<double>& operator[](TagAxis a) { return per_axis[static_cast<std::size_t>(a)]; }

    void validate() const {
        for (TagAxis a : kTagAxes) {
            const auto& v = (*this)[a];
            const std::string where = "targets." + std::string(axis_name(a));
            if (v.size() != axis_size(a))
                throw ValidationError(where, "expected " + std::to_string(axis_size(a)) + " entries");
            double sum = 0.0;
            for (double p : v) {
                if (!(p >= 0.0)) throw ValidationError(where, "entries must be non-negative");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9) throw ValidationError(where, "entries must sum to 1");
        }
    }
};

/// {"U":[..],"C":[..],"S":[..],"O":[..],"P":[..]}; missing axes stay uniform.
inline MarginalTargets targets_from_json(const nlohmann::json& j) {
    MarginalTargets t = MarginalTargets::uniform();
    if (!j.is_object()) throw ParseError("targets", "must be a JSON object");
    for (TagAxis a : kTagAxes) {
        const std::string key(axis_name(a));
        if (!j.contains(key)) continue;
        const auto& v = j[key];
        if (!v.is_array()) throw ParseError("targets." + key, "must be an array of numbers");
        t[a].clear();
        for (const auto& p : v) {
            if (!p.is_number()) throw ParseError("targets." + key, "must be an array of numbers");
            t[a].push_back(p.get<double>());
        }
    }
    t.validate();
    return t;
}

/// Joint tag combination packed into [0, 108).
inline constexpr std::size_t kTagCombos = 2 * 3 * 3 * 3 * 2;

inline constexpr std::size_t tag_key(const TagVector& t) noexcept {
    std::size_t k = 0;
    for (TagAxis a : kTagAxes) k = k * axis_size(a) + axis_bin(t, a);
    return k;
}

inline constexpr std::array<std::size_t, 5> unpack_tag_key(std::size_t key) noexcept {
    std::array<std::size_t, 5> bins{};
    for (std::size_t i = 5; i-- > 0;) {
        const auto n = axis_size(kTagAxes[i]);
        bins[i] = key % n;
        key /= n;
    }
    return bins;
}

struct AxisCounts {
    std::array<std::vector<double>, 5> per_axis;

    AxisCounts() {
        for (TagAxis a : kTagAxes) per_axis[static_cast<std::size_t>(a)].assign(axis_size(a), 0.0);
    }
    std::vector<double>& operator[](TagAxis a) { return per_axis[static_cast<std::size_t>(a)]; }
    const std::vector<double>& operator[](TagAxis a) const { return per_axis[static_cast<std::size_t>(a)]; }
};

struct QuotaPlan {
    std::map<std::string, std::int64_t> supply;   // records per category
    std::map<std::string, std::int64_t> quotas;
    /// category -> tag key -> count. Sums to the category quota.
    std::map<std::string, std::map<std::size_t, std::int64_t>> allocation;
    /// Per axis/bin: pooled target count minus realized count, floored at 0.
    AxisCounts deficit;
    /// Axis bins whose target mass had to be spread over other bins because a
    /// category had no supply there: "category/U2" etc.
    std::vector<std::string> redistributed;
};

// ---------------------------------------------------------------------------
// Category quotas
// ---------------------------------------------------------------------------

/// Quotas proportional to supply^gamma, capped at supply, rounded by largest
/// remainder (ties: larger weight, then name). Sums to `total`.
inline QuotaPlan category_quotas(std::span<const RscRecord> pool, std::int64_t total, double gamma = 0.5) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("category_quotas", "gamma must be in (0,1]");
    if (total < 0) throw ValidationError("category_quotas", "total must be non-negative");
    QuotaPlan plan;
    for (const auto& r : pool) ++plan.supply[r.category];
    const auto available = static_cast<std::int64_t>(pool.size());
    if (total > available)
        throw InfeasibleError("requested " + std::to_string(total) +
                              " records but the achievable maximum is " + std::to_string(available));

    std::map<std::string, double> weight;
    for (const auto& [c, n] : plan.supply) {
        weight[c] = std::pow(static_cast<double>(n), gamma);
        plan.quotas[c] = 0;
    }

    std::set<std::string> active;
    for (const auto& [c, n] : plan.supply) active.insert(c);
    std::int64_t remaining = total;
    // Pin categories whose share exceeds their supply, then re-share.
    while (!active.empty()) {
        double wsum = 0.0;
        for (const auto& c : active) wsum += weight[c];
        bool capped = false;
        for (auto it = active.begin(); it != active.end();) {
            const double share = static_cast<double>(remaining) * weight[*it] / wsum;
            if (share > static_cast<double>(plan.supply[*it])) {
                plan.quotas[*it] = plan.supply[*it];
                remaining -= plan.supply[*it];
                it = active.erase(it);
                capped = true;
            } else {
                ++it;
            }
        }
        if (capped) continue;

        struct Share { std::string cat; double rem; double w; };
        std::vector<Share> shares;
        std::int64_t assigned = 0;
        for (const auto& c : active) {
            const double ideal = static_cast<double>(remaining) * weight[c] / wsum;
            const auto base = static_cast<std::int64_t>(std::floor(ideal));
            plan.quotas[c] = base;
            assigned += base;
            shares.push_back({c, ideal - static_cast<double>(base), weight[c]});
        }
        std::sort(shares.begin(), shares.end(), [](const Share& a, const Share& b) {
            if (std::abs(a.rem - b.rem) > 1e-9) return a.rem > b.rem;
            if (a.w != b.w) return a.w > b.w;
            return a.cat < b.cat;
        });
        for (std::size_t i = 0; assigned < remaining && i < shares.size(); ++i, ++assigned)
            ++plan.quotas[shares[i].cat];
        break;
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Bin allocation
// ---------------------------------------------------------------------------

/// Splits each category quota across joint tag combinations so that the
/// implied per-axis marginals track `targets`.
///
/// Greedy, one unit at a time: pick the supplied combination with the largest
/// summed per-axis deficit for this category; ties go to the largest pooled
/// deficit across categories, then the lowest key. Axis bins a category cannot
/// supply have their mass spread proportionally over the bins it can.
inline QuotaPlan allocate_bins(QuotaPlan plan, const MarginalTargets& targets,
                               std::span<const RscRecord> pool) {
    targets.validate();
    std::map<std::string, std::array<std::int64_t, kTagCombos>> supply;
    for (const auto& r : pool) {
        auto& s = supply.try_emplace(r.category).first->second;
        ++s[tag_key(r.tags)];
    }

    AxisCounts pooled_target, pooled_alloc, nominal_target;
    plan.allocation.clear();
    plan.redistributed.clear();

    for (const auto& [cat, quota] : plan.quotas) {
        auto& alloc = plan.allocation[cat];
        if (quota <= 0) continue;
        auto remaining = supply[cat];

        AxisCounts axis_supply;
        for (std::size_t key = 0; key < kTagCombos; ++key) {
            if (remaining[key] == 0) continue;
            const auto bins = unpack_tag_key(key);
            for (std::size_t i = 0; i < 5; ++i)
                axis_supply.per_axis[i][bins[i]] += static_cast<double>(remaining[key]);
        }

        AxisCounts target;
        for (std::size_t i = 0; i < 5; ++i) {
            const auto& pi = targets.per_axis[i];
            double mass = 0.0;
            for (std::size_t b = 0; b < pi.size(); ++b) {
                nominal_target.per_axis[i][b] += static_cast<double>(quota) * pi[b];
                if (axis_supply.per_axis[i][b] > 0) mass += pi[b];
                else if (pi[b] > 0)
                    plan.redistributed.push_back(cat + "/" + bin_label(kTagAxes[i], b));
            }
            double supply_total = 0.0;
            for (double s : axis_supply.per_axis[i]) supply_total += s;
            for (std::size_t b = 0; b < pi.size(); ++b) {
                double p = 0.0;
                if (axis_supply.per_axis[i][b] > 0)
                    p = mass > 0 ? pi[b] / mass : axis_supply.per_axis[i][b] / supply_total;
                target.per_axis[i][b] = static_cast<double>(quota) * p;
                pooled_target.per_axis[i][b] += target.per_axis[i][b];
            }
        }

        AxisCounts local;
        for (std::int64_t unit = 0; unit < quota; ++unit) {
            std::size_t best = kTagCombos;
            double best_local = -1e300, best_pooled = -1e300;
            for (std::size_t key = 0; key < kTagCombos; ++key) {
                if (remaining[key] == 0) continue;
                const auto bins = unpack_tag_key(key);
                double sl = 0.0, sp = 0.0;
                for (std::size_t i = 0; i < 5; ++i) {
                    sl += target.per_axis[i][bins[i]] - local.per_axis[i][bins[i]];
                    sp += pooled_target.per_axis[i][bins[i]] - pooled_alloc.per_axis[i][bins[i]];
                }
                if (sl > best_local + 1e-9 || (std::abs(sl - best_local) <= 1e-9 && sp > best_pooled + 1e-9)) {
                    best = key;
                    best_local = sl;
                    best_pooled = sp;
                }
            }
            if (best == kTagCombos) break;  // unreachable: quota <= supply
            --remaining[best];
            ++alloc[best];
            const auto bins = unpack_tag_key(best);
            for (std::size_t i = 0; i < 5; ++i) {
                local.per_axis[i][bins[i]] += 1;
                pooled_alloc.per_axis[i][bins[i]] += 1;
            }
        }
    }

    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t b = 0; b < plan.deficit.per_axis[i].size(); ++b)
            plan.deficit.per_axis[i][b] =
                std::max(0.0, nominal_target.per_axis[i][b] - pooled_alloc.per_axis[i][b]);
    return plan;
}

/// Per-axis marginal proportions of a record set.
inline AxisCounts realized_marginals(std::span<const RscRecord> records) {
    AxisCounts m;
    for (const auto& r : records)
        for (TagAxis a : kTagAxes) m[a][axis_bin(r.tags, a)] += 1;
    if (!records.empty())
        for (auto& v : m.per_axis)
            for (auto& x : v) x /= static_cast<double>(records.size());
    return m;
}

/// L1 distance between realized and target marginals on one axis.
inline double marginal_l1(const AxisCounts& realized, const MarginalTargets& targets, TagAxis a) {
    double d = 0.0;
    for (std::size_t b = 0; b < axis_size(a); ++b) d += std::abs(realized[a][b] - targets[a][b]);
    return d;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

enum class Split : std::uint8_t { sft = 0, rl = 1, test = 2 };
inline constexpr std::array<std::string_view, 3> kSplitNames = {"sft", "rl", "test"};

struct SplitOptions {
    std::array<double, 3> fractions{0.6, 0.2, 0.2};
    std::uint64_t seed = 0;
    /// Minimum share of easy records in the SFT split; 0 disables the floor.
    double easy_purity = 0.70;
    /// Records with difficulty at or below this nearest-rank quantile of the
    /// selected set count as easy.
    double easy_quantile = 0.5;
};

struct SplitResult {
    std::array<std::vector<RscRecord>, 3> splits;
    double easy_threshold = 0.0;
    double sft_purity = 0.0;
    std::size_t selected = 0;

    const std::vector<RscRecord>& operator[](Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

// Largest-remainder apportionment of n over weights.
inline std::array<std::int64_t, 3> apportion(std::int64_t n, const std::array<double, 3>& w) {
    std::array<std::int64_t, 3> out{};
    std::array<double, 3> rem{};
    const double wsum = w[0] + w[1] + w[2];
    std::int64_t used = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double ideal = wsum > 0 ? static_cast<double>(n) * w[i] / wsum : 0.0;
        out[i] = static_cast<std::int64_t>(std::floor(ideal + 1e-9));
        rem[i] = ideal - static_cast<double>(out[i]);
        used += out[i];
    }
    while (used < n) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < 3; ++i)
            if (rem[i] > rem[best] + 1e-9) best = i;
        ++out[best];
        rem[best] = -1.0;
        ++used;
    }
    return out;
}

} // namespace detail

/// Selects the allocated records and partitions them into image-disjoint
/// SFT / RL / test splits.
///
/// Within each (category, tag combination) bin, records are ordered by
/// difficulty and picked by systematic sampling with a seeded offset. Records
/// sharing an image id or content hash form one group and move together.
/// Groups are split separately among easy and non-easy records so the SFT
/// split meets the easy-purity floor. Inside each class the split whose turn
/// it is takes, from a window of upcoming groups, the one that moves its tag
/// histogram least away from the selection's. Equal-size swaps then restore
/// the purity floor and reduce the remaining per-split deviation.
inline SplitResult sample_splits(std::span<const RscRecord> pool, const QuotaPlan& plan,
                                 const SplitOptions& opt) {
    const double fsum = opt.fractions[0] + opt.fractions[1] + opt.fractions[2];
    if (std::abs(fsum - 1.0) > 1e-9 ||
        std::any_of(opt.fractions.begin(), opt.fractions.end(), [](double f) { return f < 0; }))
        throw ValidationError("splits", "fractions must be non-negative and sum to 1");
    if (!(opt.easy_quantile > 0.0 && opt.easy_quantile <= 1.0))
        throw ValidationError("splits", "easy quantile must be in (0,1]");

    // Bin members.
    std::map<std::string, std::map<std::size_t, std::vector<std::size_t>>> members;
    for (std::size_t i = 0; i < pool.size(); ++i)
        members[pool[i].category][tag_key(pool[i].tags)].push_back(i);

    const CounterRng root(opt.seed);
    std::vector<std::size_t> chosen;
    for (const auto& [cat, bins] : plan.allocation) {
        for (const auto& [key, count] : bins) {
            if (count <= 0) continue;
            auto& m = members[cat][key];
            if (static_cast<std::int64_t>(m.size()) < count)
                throw InfeasibleError("bin " + cat + "/" + std::to_string(key) + " has " +
                                      std::to_string(m.size()) + " records, allocation asks " +
                                      std::to_string(count));
            std::sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
                if (pool[a].difficulty != pool[b].difficulty) return pool[a].difficulty < pool[b].difficulty;
                return pool[a].record_id < pool[b].record_id;
            });
            auto rng = root.fork({detail::fnv1a(cat), key});
            const double offset = rng.uniform();
            const double step = static_cast<double>(m.size()) / static_cast<double>(count);
            for (std::int64_t i = 0; i < count; ++i) {
                auto pos = static_cast<std::size_t>(std::floor((static_cast<double>(i) + offset) * step));
                chosen.push_back(m[std::min(pos, m.size() - 1)]);
            }
        }
    }
    std::sort(chosen.begin(), chosen.end());

    SplitResult out;
    out.selected = chosen.size();
    if (chosen.empty()) return out;

    // Easy threshold on the selected set.
    std::vector<double> ds;
    for (auto i : chosen) ds.push_back(pool[i].difficulty);
    std::sort(ds.begin(), ds.end());
    const auto qnum = static_cast<std::size_t>(std::llround(opt.easy_quantile * 1e6));
    out.easy_threshold = nearest_rank<double>(ds, qnum, 1000000);
    const auto is_easy = [&](std::size_t i) { return pool[i].difficulty <= out.easy_threshold; };

    // Image groups.
    detail::UnionFind uf(chosen.size());
    std::map<std::string, std::size_t> first_by_key;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        const auto& img = pool[chosen[k]].image;
        const auto link = [&](const std::string& key) {
            auto [it, fresh] = first_by_key.emplace(key, k);
            if (!fresh) uf.unite(it->second, k);
        };
        link("id:" + img.image_id);
        if (img.content_hash) link("hash:" + *img.content_hash);
    }
    struct Group {
        std::vector<std::size_t> records;  // pool indices
        std::int64_t easy = 0;
        std::size_t tag_key = 0;
        std::uint64_t order = 0;
    };
    std::map<std::size_t, Group> groups;
    for (std::size_t k = 0; k < chosen.size(); ++k) groups[uf.find(k)].records.push_back(chosen[k]);

    std::array<std::vector<Group>, 2> classes;  // [0] easy, [1] other
    std::int64_t easy_total = 0;
    for (auto& [root_idx, g] : groups) {
        std::string image_key;
        for (auto i : g.records) {
            g.easy += is_easy(i) ? 1 : 0;
            image_key = image_key.empty() ? pool[i].image.image_id : std::min(image_key, pool[i].image.image_id);
        }
        easy_total += g.easy;
        g.tag_key = tag_key(pool[g.records.front()].tags);
        g.order = root.fork({detail::fnv1a(image_key), 0x5EED}).next_u64();
        classes[2 * g.easy >= static_cast<std::int64_t>(g.records.size()) ? 0 : 1].push_back(std::move(g));
    }

    const auto n = static_cast<std::int64_t>(chosen.size());
    const auto targets = detail::apportion(n, opt.fractions);
    const std::int64_t t_sft = targets[0];
    if (opt.easy_purity > 0 && t_sft > 0) {
        const double achievable = std::min(1.0, static_cast<double>(easy_total) / static_cast<double>(t_sft));
        if (achievable + 1e-12 < opt.easy_purity) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.4f", achievable);
            throw InfeasibleError("easy-purity floor unreachable: achievable SFT purity is " + std::string(buf));
        }
    }

    // Per-class split targets.
    std::array<std::array<std::int64_t, 3>, 2> class_targets{};
    std::int64_t class_size[2] = {0, 0};
    std::int64_t class_easy[2] = {0, 0};
    for (int c = 0; c < 2; ++c)
        for (const auto& g : classes[c]) {
            class_size[c] += static_cast<std::int64_t>(g.records.size());
            class_easy[c] += g.easy;
        }
    {
        const auto prop = detail::apportion(class_size[0], opt.fractions);
        std::int64_t sft_easy = prop[0];
        if (opt.easy_purity > 0) {
            // SFT draws x records from the easy class and t_sft - x from the
            // other; solve for x at the class easy rates, with a small margin.
            const double pe = class_size[0] ? static_cast<double>(class_easy[0]) / static_cast<double>(class_size[0]) : 1.0;
            const double ph = class_size[1] ? static_cast<double>(class_easy[1]) / static_cast<double>(class_size[1]) : 0.0;
            const double need = opt.easy_purity * static_cast<double>(t_sft) + 0.01 * static_cast<double>(t_sft) + 1.0;
            const double x = pe > ph ? (need - ph * static_cast<double>(t_sft)) / (pe - ph) : static_cast<double>(t_sft);
            sft_easy = std::max(sft_easy, static_cast<std::int64_t>(std::ceil(x)));
        }
        sft_easy = std::min({sft_easy, class_size[0], t_sft});
        auto rest = detail::apportion(class_size[0] - sft_easy, {0.0, opt.fractions[1], opt.fractions[2]});
        // Keep the easy share of RL/test within their totals.
        for (std::size_t s = 1; s < 3; ++s) {
            const std::size_t other = 3 - s;
            if (rest[s] > targets[s]) {
                rest[other] += rest[s] - targets[s];
                rest[s] = targets[s];
            }
        }
        class_targets[0] = {sft_easy, rest[1], rest[2]};
        for (std::size_t s = 0; s < 3; ++s)
            class_targets[1][s] = std::max<std::int64_t>(0, targets[s] - class_targets[0][s]);
    }

    struct Placement {
        const Group* group;
        std::size_t split;
        const std::vector<double>* hist;
    };
    std::vector<Placement> placement;

    // Flattened tag-bin histogram per group and the selection's marginals.
    std::array<std::size_t, 5> axis_off{};
    std::size_t n_bins = 0;
    for (TagAxis a : kTagAxes) {
        axis_off[static_cast<std::size_t>(a)] = n_bins;
        n_bins += axis_size(a);
    }
    const auto histogram = [&](const Group& g) {
        std::vector<double> h(n_bins, 0.0);
        for (auto i : g.records)
            for (TagAxis a : kTagAxes) h[axis_off[static_cast<std::size_t>(a)] + axis_bin(pool[i].tags, a)] += 1.0;
        return h;
    };
    std::vector<double> share(n_bins, 0.0);
    for (auto i : chosen)
        for (TagAxis a : kTagAxes)
            share[axis_off[static_cast<std::size_t>(a)] + axis_bin(pool[i].tags, a)] += 1.0 / static_cast<double>(n);
    std::array<std::vector<double>, 3> counts;
    for (auto& cnt : counts) cnt.assign(n_bins, 0.0);
    std::array<double, 3> split_size{};
    const auto deviation_delta = [&](std::size_t s, const std::vector<double>& h, double k) {
        double d = 0.0;
        for (std::size_t b = 0; b < n_bins; ++b)
            d += std::abs(counts[s][b] + h[b] - share[b] * (split_size[s] + k)) -
                 std::abs(counts[s][b] - share[b] * split_size[s]);
        return d;
    };

    // Splits take turns in proportion to their targets; the split whose turn
    // it is takes, from a window of upcoming groups in seeded order, the one
    // that best moves its tag marginals toward the selection's.
    constexpr std::size_t kWindow = 64;
    std::array<std::vector<std::vector<double>>, 2> hist;
    for (int c = 0; c < 2; ++c) {
        auto& gs = classes[c];
        std::sort(gs.begin(), gs.end(), [](const Group& a, const Group& b) { return a.order < b.order; });
        for (const auto& g : gs) hist[c].push_back(histogram(g));
        const auto& tg = class_targets[c];
        const double total = static_cast<double>(tg[0] + tg[1] + tg[2]);
        std::array<std::int64_t, 3> assigned{};
        std::int64_t processed = 0;
        std::vector<std::size_t> window;
        std::size_t cursor = 0;
        while (cursor < gs.size() || !window.empty()) {
            while (window.size() < kWindow && cursor < gs.size()) window.push_back(cursor++);
            std::size_t turn = 0;
            double best_gap = -1e300;
            for (std::size_t sp = 0; sp < 3; ++sp) {
                if (tg[sp] == 0) continue;
                const double due = total > 0 ? static_cast<double>(tg[sp]) * static_cast<double>(processed + 1) / total : 0.0;
                const double gap = due - static_cast<double>(assigned[sp]);
                if (gap > best_gap + 1e-12) {
                    best_gap = gap;
                    turn = sp;
                }
            }
            const std::int64_t room = tg[turn] - assigned[turn];
            std::size_t pick = 0;
            double best_cost = 1e300;
            bool best_fits = false;
            for (std::size_t w = 0; w < window.size(); ++w) {
                const auto k = static_cast<std::int64_t>(gs[window[w]].records.size());
                const bool fits = k <= std::max<std::int64_t>(room, 1);
                const double cost = deviation_delta(turn, hist[c][window[w]], static_cast<double>(k));
                if ((fits && !best_fits) || (fits == best_fits && cost < best_cost - 1e-12)) {
                    best_fits = fits;
                    best_cost = cost;
                    pick = w;
                }
            }
            const std::size_t gi = window[pick];
            window.erase(window.begin() + static_cast<std::ptrdiff_t>(pick));
            const auto k = static_cast<std::int64_t>(gs[gi].records.size());
            assigned[turn] += k;
            processed += k;
            for (std::size_t b = 0; b < n_bins; ++b) counts[turn][b] += hist[c][gi][b];
            split_size[turn] += static_cast<double>(k);
            placement.push_back({&gs[gi], turn, &hist[c][gi]});
        }
    }

    // Repair: swap equal-size groups between SFT and the other splits until
    // the SFT easy count reaches the floor; same tag key first.
    if (opt.easy_purity > 0 && t_sft > 0) {
        std::int64_t have = 0, sft_size = 0;
        for (const auto& p : placement)
            if (p.split == 0) {
                have += p.group->easy;
                sft_size += static_cast<std::int64_t>(p.group->records.size());
            }
        const auto need = static_cast<std::int64_t>(std::ceil(opt.easy_purity * static_cast<double>(sft_size) - 1e-9));
        for (int pass = 0; pass < 2 && have < need; ++pass) {
            std::vector<std::size_t> inside, outside;
            for (std::size_t k = 0; k < placement.size(); ++k) (placement[k].split == 0 ? inside : outside).push_back(k);
            const auto by_gain = [&](bool ascending) {
                return [&, ascending](std::size_t a, std::size_t b) {
                    const auto& ga = *placement[a].group;
                    const auto& gb = *placement[b].group;
                    const double fa = static_cast<double>(ga.easy) / static_cast<double>(ga.records.size());
                    const double fb = static_cast<double>(gb.easy) / static_cast<double>(gb.records.size());
                    if (fa != fb) return ascending ? fa < fb : fa > fb;
                    return ga.order < gb.order;
                };
            };
            std::sort(inside.begin(), inside.end(), by_gain(true));
            std::sort(outside.begin(), outside.end(), by_gain(false));
            std::vector<bool> used(placement.size(), false);
            for (auto in : inside) {
                if (have >= need) break;
                const auto& gi = *placement[in].group;
                if (gi.easy == static_cast<std::int64_t>(gi.records.size())) break;
                for (auto ou : outside) {
                    if (used[ou]) continue;
                    const auto& go = *placement[ou].group;
                    if (go.records.size() != gi.records.size() || go.easy <= gi.easy) continue;
                    if (pass == 0 && go.tag_key != gi.tag_key) continue;
                    have += go.easy - gi.easy;
                    std::swap(placement[in].split, placement[ou].split);
                    used[ou] = used[in] = true;
                    break;
                }
            }
        }
    }
    // Refinement: swap equal-size groups across splits while the swap lowers
    // the summed per-split marginal deviation and keeps the SFT easy floor.
    {
        for (auto& cnt : counts) std::fill(cnt.begin(), cnt.end(), 0.0);
        split_size = {};
        std::int64_t have = 0;
        for (const auto& p : placement) {
            for (std::size_t b = 0; b < n_bins; ++b) counts[p.split][b] += (*p.hist)[b];
            split_size[p.split] += static_cast<double>(p.group->records.size());
            if (p.split == 0) have += p.group->easy;
        }
        const std::int64_t need =
            opt.easy_purity > 0 ? static_cast<std::int64_t>(std::ceil(opt.easy_purity * split_size[0] - 1e-9)) : 0;
        const auto split_dev = [&](std::size_t sp, const std::vector<double>* minus, const std::vector<double>* plus) {
            if (split_size[sp] <= 0) return 0.0;
            double d = 0.0;
            for (std::size_t b = 0; b < n_bins; ++b)
                d += std::abs(counts[sp][b] - (*minus)[b] + (*plus)[b] - share[b] * split_size[sp]);
            return d / split_size[sp];
        };
        std::map<std::size_t, std::vector<std::size_t>> by_size;
        for (std::size_t k = 0; k < placement.size(); ++k) by_size[placement[k].group->records.size()].push_back(k);
        const std::vector<double> zero(n_bins, 0.0);
        auto rng = root.fork({0x5EF1});
        constexpr int kRounds = 8;
        constexpr std::size_t kProbes = 48;
        for (int round = 0; round < kRounds; ++round) {
            bool improved = false;
            for (std::size_t a = 0; a < placement.size(); ++a) {
                const auto& peers = by_size[placement[a].group->records.size()];
                if (peers.size() < 2) continue;
                const std::size_t sa = placement[a].split;
                std::size_t best = a;
                double best_delta = -1e-12;
                for (std::size_t probe = 0; probe < kProbes; ++probe) {
                    const std::size_t b = peers[rng.below(peers.size())];
                    const std::size_t sb = placement[b].split;
                    if (sb == sa) continue;
                    const auto* ha = placement[a].hist;
                    const auto* hb = placement[b].hist;
                    if (sa == 0 || sb == 0) {
                        const auto gain = sa == 0 ? placement[b].group->easy - placement[a].group->easy
                                                  : placement[a].group->easy - placement[b].group->easy;
                        if (have + gain < need) continue;
                    }
                    const double delta = split_dev(sa, ha, hb) + split_dev(sb, hb, ha) - split_dev(sa, &zero, &zero) -
                                         split_dev(sb, &zero, &zero);
                    if (delta < best_delta) {
                        best_delta = delta;
                        best = b;
                    }
                }
                if (best == a) continue;
                const std::size_t sb = placement[best].split;
                for (std::size_t b = 0; b < n_bins; ++b) {
                    const double diff = (*placement[best].hist)[b] - (*placement[a].hist)[b];
                    counts[sa][b] += diff;
                    counts[sb][b] -= diff;
                }
                if (sa == 0) have += placement[best].group->easy - placement[a].group->easy;
                if (sb == 0) have += placement[a].group->easy - placement[best].group->easy;
                std::swap(placement[a].split, placement[best].split);
                improved = true;
            }
            if (!improved) break;
        }
    }

    for (const auto& p : placement)
        for (auto i : p.group->records) out.splits[p.split].push_back(pool[i]);

    for (auto& s : out.splits)
        std::sort(s.begin(), s.end(), [](const RscRecord& a, const RscRecord& b) {
            if (a.image.image_id != b.image.image_id) return a.image.image_id < b.image.image_id;
            return a.record_id < b.record_id;
        });

    const auto& sft = out.splits[0];
    std::int64_t sft_easy = 0;
    for (const auto& r : sft) sft_easy += r.difficulty <= out.easy_threshold ? 1 : 0;
    out.sft_purity = sft.empty() ? 0.0 : static_cast<double>(sft_easy) / static_cast<double>(sft.size());
    if (opt.easy_purity > 0 && !sft.empty() && out.sft_purity + 1e-12 < opt.easy_purity) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f", out.sft_purity);
        throw InfeasibleError("easy-purity floor unreachable with whole-image groups: achieved " + std::string(buf));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Leakage gate
// ---------------------------------------------------------------------------

enum class LeakKind { category_token, rectangle_mention, coordinates };

inline constexpr std::string_view to_string(LeakKind k) noexcept {
    switch (k) {
        case LeakKind::category_token: return "category_token";
        case LeakKind::rectangle_mention: return "rectangle_mention";
        case LeakKind::coordinates: return "coordinates";
    }
    return "?";
}

struct LeakageFinding {
    LeakKind kind;
    std::string field;   // "scenario" or "expression"
    std::string detail;
};

/// Flags category names, references to the marking rectangle and literal
/// coordinate lists in the free-text fields of a record.
inline std::vector<LeakageFinding> leakage_check(const RscRecord& r) {
    static const std::regex coord_re(R"([\[(]\s*-?\d+\s*(,\s*-?\d+\s*)+[\])])");
    std::vector<std::vector<std::string>> names;
    names.push_back(text::tokens(r.category));
    for (const auto& a : r.aliases) names.push_back(text::tokens(a));
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());

    const std::vector<std::string> rect = text::tokens("rectangle");
    const std::vector<std::string> bbox = text::tokens("bounding box");

    std::vector<LeakageFinding> out;
    const std::pair<const char*, const std::string*> fields[] = {{"scenario", &r.scenario},
                                                                 {"expression", &r.expression}};
    for (const auto& [field, value] : fields) {
        const auto toks = text::tokens(*value);
        for (const auto& name : names) {
            if (text::contains_token_run(toks, name)) {
                std::string joined;
                for (const auto& t : name) joined += (joined.empty() ? "" : " ") + t;
                out.push_back({LeakKind::category_token, field, joined});
            }
        }
        if (text::contains_token_run(toks, rect))
            out.push_back({LeakKind::rectangle_mention, field, "rectangle"});
        if (text::contains_token_run(toks, bbox))
            out.push_back({LeakKind::rectangle_mention, field, "bounding box"});
        std::smatch m;
        if (std::regex_search(*value, m, coord_re))
            out.push_back({LeakKind::coordinates, field, m.str()});
    }
    return out;
}

// ---------------------------------------------------------------------------
// End-to-end curation
// ---------------------------------------------------------------------------

struct CurationOptions {
    std::int64_t total = -1;  // -1: whole pool
    double gamma = 0.5;
    MarginalTargets targets = MarginalTargets::uniform();
    SplitOptions split;
};

struct CurationResult {
    QuotaPlan plan;
    SplitResult splits;
    nlohmann::json report;
};

inline nlohmann::json to_json(const AxisCounts& c) {
    nlohmann::json j;
    for (TagAxis a : kTagAxes) j[std::string(axis_name(a))] = c[a];
    return j;
}

inline CurationResult curate(std::span<const RscRecord> pool, const CurationOptions& opt) {
    CurationResult res;
    const std::int64_t total = opt.total < 0 ? static_cast<std::int64_t>(pool.size()) : opt.total;
    res.plan = allocate_bins(category_quotas(pool, total, opt.gamma), opt.targets, pool);
    res.splits = sample_splits(pool, res.plan, opt.split);

    nlohmann::json rep;
    rep["quotas"] = res.plan.quotas;
    rep["supply"] = res.plan.supply;
    rep["deficits"] = to_json(res.plan.deficit);
    rep["redistributed"] = res.plan.redistributed;
    rep["selected"] = res.splits.selected;
    rep["easy_threshold"] = res.splits.easy_threshold;
    rep["sft_easy_purity"] = res.splits.sft_purity;
    nlohmann::json targets;
    for (TagAxis a : kTagAxes) targets[std::string(axis_name(a))] = opt.targets[a];
    rep["targets"] = targets;
    std::vector<RscRecord> all;
    nlohmann::json leaks = nlohmann::json::array();
    for (std::size_t s = 0; s < 3; ++s) {
        const auto& split = res.splits.splits[s];
        auto m = realized_marginals(split);
        rep["splits"][std::string(kSplitNames[s])] = {{"count", split.size()}, {"marginals", to_json(m)}};
        for (const auto& r : split) {
            all.push_back(r);
            for (const auto& f : leakage_check(r))
                leaks.push_back({{"record_id", r.record_id}, {"split", kSplitNames[s]},
                                 {"kind", to_string(f.kind)}, {"field", f.field}, {"detail", f.detail}});
        }
    }
    const auto overall = realized_marginals(all);
    rep["realized_marginals"] = to_json(overall);
    nlohmann::json l1;
    for (TagAxis a : kTagAxes) l1[std::string(axis_name(a))] = marginal_l1(overall, opt.targets, a);
    rep["marginal_l1"] = l1;
    rep["leakage_findings"] = leaks;
    rep["category_disjointness"] = {{"string_level", "not applicable to a single pool"},
                                    {"synset_level", "unchecked"}};
    res.report = std::move(rep);
    return res;
}

} // namespace groundkit
