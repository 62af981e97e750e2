#pragma once
// Grounding metrics (mIoU, Acc@0.5, Acc@0.7, category accuracy) overall and
// per difficulty tag, plus CSV / Markdown rendering.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "groundkit/box.hpp"
#include "groundkit/completion.hpp"
#include "groundkit/dataset.hpp"
#include "groundkit/error.hpp"
#include "groundkit/text.hpp"

namespace groundkit {

enum class EvalMode { standard, box_only, category_only };

inline EvalMode eval_mode_from_string(std::string_view s) {
    if (s == "standard") return EvalMode::standard;
    if (s == "box_only") return EvalMode::box_only;
    if (s == "category_only") return EvalMode::category_only;
    throw ValidationError("mode", "expected standard, box_only or category_only");
}

inline constexpr std::string_view to_string(EvalMode m) noexcept {
    switch (m) {
        case EvalMode::standard: return "standard";
        case EvalMode::box_only: return "box_only";
        case EvalMode::category_only: return "category_only";
    }
    return "?";
}

/// Per-instance outcome.
struct InstanceScore {
    double iou = 0.0;
    bool cat_correct = false;
    bool cat_canonical = false;
    bool missing = false;
};

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) comp_ += (sum_ - t) + v;
        else comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct SliceMetrics {
    std::size_t n = 0;
    std::size_t missing = 0;
    double miou = 0.0;
    double acc50 = 0.0;
    double acc70 = 0.0;
    double cat_acc = 0.0;
    double cat_acc_canonical = 0.0;
};

class SliceAccumulator {
public:
    void add(const InstanceScore& s) {
        ++n_;
        if (s.missing) ++missing_;
        iou_.add(s.iou);
        hit50_ += s.iou >= 0.5 ? 1 : 0;
        hit70_ += s.iou >= 0.7 ? 1 : 0;
        cat_ += s.cat_correct ? 1 : 0;
        canon_ += s.cat_canonical ? 1 : 0;
    }
    SliceMetrics finish() const {
        SliceMetrics m;
        m.n = n_;
        m.missing = missing_;
        if (n_ == 0) return m;
        const double n = static_cast<double>(n_);
        m.miou = iou_.value() / n;
        m.acc50 = static_cast<double>(hit50_) / n;
        m.acc70 = static_cast<double>(hit70_) / n;
        m.cat_acc = static_cast<double>(cat_) / n;
        m.cat_acc_canonical = static_cast<double>(canon_) / n;
        return m;
    }

private:
    std::size_t n_ = 0, missing_ = 0, hit50_ = 0, hit70_ = 0, cat_ = 0, canon_ = 0;
    CompensatedSum iou_;
};

struct MetricsReport {
    EvalMode mode = EvalMode::standard;
    SliceMetrics overall;
    /// (label, metrics) in axis order U, C, S, O, P.
    std::vector<std::pair<std::string, SliceMetrics>> per_tag;
};

using Predictions = std::map<std::string, std::string>;

/// Reads line-delimited {"record_id": ..., "completion": "..."}. A repeated
/// record_id is an error; blank lines are skipped.
inline Predictions read_predictions(std::istream& in, const std::string& source = "<stream>") {
    Predictions out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ParseError(where, "not a JSON object");
        if (!j.contains("record_id") || !j.contains("completion")) throw ParseError(where, "need record_id and completion");
        const auto& id = j["record_id"];
        if (!id.is_string() && !id.is_number_integer()) throw ParseError(where, "record_id must be a string or integer");
        if (!j["completion"].is_string()) throw ParseError(where, "completion must be a string");
        const std::string key = id.is_string() ? id.get<std::string>() : id.dump();
        if (!out.emplace(key, j["completion"].get<std::string>()).second)
            throw ValidationError(where, "duplicate record_id " + key);
    }
    return out;
}

inline Predictions read_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, "cannot open file");
    return read_predictions(in, path);
}

inline InstanceScore score_instance(const std::string* completion, const RscRecord& gt, const ParserKeys& keys = {}) {
    InstanceScore s;
    if (!completion) {
        s.missing = true;
        return s;
    }
    const auto p = parse_completion(*completion, keys);
    if (p.raw_box) s.iou = iou(normalize_box(*p.raw_box, gt.image.width, gt.image.height).box, gt.bbox);
    if (p.name) {
        const std::string name = text::normalize(*p.name);
        s.cat_canonical = !name.empty() && name == text::normalize(gt.category);
        s.cat_correct = s.cat_canonical;
        for (const auto& a : gt.aliases) s.cat_correct = s.cat_correct || (!name.empty() && name == text::normalize(a));
    }
    return s;
}

/// Missing predictions count as failures. box_only zeroes category credit;
/// category_only zeroes IoU.
inline MetricsReport evaluate(const Predictions& preds, const std::vector<RscRecord>& gts,
                              EvalMode mode = EvalMode::standard, const ParserKeys& keys = {}) {
    MetricsReport rep;
    rep.mode = mode;
    SliceAccumulator overall;
    std::array<std::vector<SliceAccumulator>, 5> axes;
    for (TagAxis a : kTagAxes) axes[static_cast<std::size_t>(a)].resize(axis_size(a));
    std::set<std::string> seen;
    for (const auto& gt : gts) {
        if (!seen.insert(gt.record_id).second) throw ValidationError("gt", "duplicate record_id " + gt.record_id);
        const auto it = preds.find(gt.record_id);
        auto s = score_instance(it == preds.end() ? nullptr : &it->second, gt, keys);
        if (mode == EvalMode::box_only) s.cat_correct = s.cat_canonical = false;
        if (mode == EvalMode::category_only) s.iou = 0.0;
        overall.add(s);
        for (TagAxis a : kTagAxes) axes[static_cast<std::size_t>(a)][axis_bin(gt.tags, a)].add(s);
    }
    rep.overall = overall.finish();
    for (TagAxis a : kTagAxes) {
        const auto& acc = axes[static_cast<std::size_t>(a)];
        for (std::size_t b = 0; b < acc.size(); ++b) rep.per_tag.emplace_back(bin_label(a, b), acc[b].finish());
    }
    return rep;
}

enum class ReportFormat { csv, markdown };

inline ReportFormat report_format_from_string(std::string_view s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    throw ValidationError("format", "expected csv or markdown");
}

namespace detail {

inline std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return buf;
}

} // namespace detail

/// Percentages with two decimals; columns that the mode does not score are
/// written as "-". An empty report yields the header only.
inline std::string render_report(const MetricsReport& r, ReportFormat fmt) {
    const bool box = r.mode != EvalMode::category_only;
    const bool cat = r.mode != EvalMode::box_only;
    const std::vector<std::string> header = {"slice", "n", "missing", "mIoU", "Acc@0.5", "Acc@0.7", "CatAcc",
                                             "CatAcc_canonical"};
    auto row = [&](const std::string& label, const SliceMetrics& m) {
        return std::vector<std::string>{label,
                                        std::to_string(m.n),
                                        std::to_string(m.missing),
                                        box ? detail::pct(m.miou) : "-",
                                        box ? detail::pct(m.acc50) : "-",
                                        box ? detail::pct(m.acc70) : "-",
                                        cat ? detail::pct(m.cat_acc) : "-",
                                        cat ? detail::pct(m.cat_acc_canonical) : "-"};
    };
    std::vector<std::vector<std::string>> rows;
    if (r.overall.n > 0) {
        rows.push_back(row("overall", r.overall));
        for (const auto& [label, m] : r.per_tag) rows.push_back(row(label, m));
    }

    std::string out;
    auto emit = [&](const std::vector<std::string>& cells) {
        if (fmt == ReportFormat::csv) {
            for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
        } else {
            out += "|";
            for (const auto& c : cells) out += " " + c + " |";
        }
        out += "\n";
    };
    emit(header);
    if (fmt == ReportFormat::markdown) {
        out += "|";
        for (std::size_t i = 0; i < header.size(); ++i) out += i < 3 ? " --- |" : " ---: |";
        out += "\n";
    }
    for (const auto& cells : rows) emit(cells);
    return out;
}

inline nlohmann::json to_json(const SliceMetrics& m) {
    return {{"n", m.n},           {"missing", m.missing},   {"miou", m.miou},
            {"acc_50", m.acc50},  {"acc_70", m.acc70},      {"cat_acc", m.cat_acc},
            {"cat_acc_canonical", m.cat_acc_canonical}};
}

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j = {{"mode", to_string(r.mode)}, {"overall", to_json(r.overall)}};
    j["per_tag"] = nlohmann::json::object();
    for (const auto& [label, m] : r.per_tag) j["per_tag"][label] = to_json(m);
    return j;
}

} // namespace groundkit
