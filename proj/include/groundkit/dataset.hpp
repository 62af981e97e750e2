#pragma once
// Core domain records and their file formats:
//   * COCO-style source annotations (images / annotations / categories)
//   * grounding records as line-delimited JSON, one object per line.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "groundkit/box.hpp"
#include "groundkit/error.hpp"
#include "groundkit/text.hpp"

namespace groundkit {

using json = nlohmann::json;

struct ImageMeta {
    std::string image_id;
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::optional<std::string> content_hash;

    friend bool operator==(const ImageMeta&, const ImageMeta&) = default;
};

struct Instance {
    std::string instance_id;
    ImageMeta image;
    std::int64_t category_id = 0;
    std::string category_name;
    BoundingBox bbox;
};

// ---------------------------------------------------------------------------
// Difficulty tags
// ---------------------------------------------------------------------------

enum class SizeBin : std::uint8_t { S = 0, M = 1, L = 2 };

inline constexpr std::string_view to_string(SizeBin s) noexcept {
    switch (s) {
        case SizeBin::S: return "S";
        case SizeBin::M: return "M";
        case SizeBin::L: return "L";
    }
    return "?";
}

/// Uniqueness, clutter, size, overlap and position tags.
struct TagVector {
    int U = 1;  // 1..2
    int C = 1;  // 1..3
    SizeBin S = SizeBin::L;
    int O = 0;  // 0..2
    int P = 0;  // 0..1

    bool valid() const noexcept {
        return (U == 1 || U == 2) && C >= 1 && C <= 3 && O >= 0 && O <= 2 && (P == 0 || P == 1) &&
               static_cast<int>(S) <= 2;
    }

    friend bool operator==(const TagVector&, const TagVector&) = default;
};

/// Tag axes in report order; each axis has a fixed list of labels.
enum class TagAxis : std::uint8_t { U = 0, C = 1, S = 2, O = 3, P = 4 };
inline constexpr std::array<TagAxis, 5> kTagAxes = {TagAxis::U, TagAxis::C, TagAxis::S,
                                                    TagAxis::O, TagAxis::P};

inline constexpr std::size_t axis_size(TagAxis a) noexcept {
    switch (a) {
        case TagAxis::U: return 2;
        case TagAxis::C: return 3;
        case TagAxis::S: return 3;
        case TagAxis::O: return 3;
        case TagAxis::P: return 2;
    }
    return 0;
}

inline constexpr std::string_view axis_name(TagAxis a) noexcept {
    constexpr std::array<std::string_view, 5> names = {"U", "C", "S", "O", "P"};
    return names[static_cast<std::size_t>(a)];
}

/// Zero-based bin index of a tag vector on one axis.
inline constexpr std::size_t axis_bin(const TagVector& t, TagAxis a) noexcept {
    switch (a) {
        case TagAxis::U: return static_cast<std::size_t>(t.U - 1);
        case TagAxis::C: return static_cast<std::size_t>(t.C - 1);
        case TagAxis::S: return static_cast<std::size_t>(t.S);
        case TagAxis::O: return static_cast<std::size_t>(t.O);
        case TagAxis::P: return static_cast<std::size_t>(t.P);
    }
    return 0;
}

/// Report label for a bin: U1 U2, C1..C3, S M L, O0..O2, P0 P1.
inline std::string bin_label(TagAxis a, std::size_t bin) {
    switch (a) {
        case TagAxis::U: return "U" + std::to_string(bin + 1);
        case TagAxis::C: return "C" + std::to_string(bin + 1);
        case TagAxis::S: return std::string(to_string(static_cast<SizeBin>(bin)));
        case TagAxis::O: return "O" + std::to_string(bin);
        case TagAxis::P: return "P" + std::to_string(bin);
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Grounding record
// ---------------------------------------------------------------------------

struct RscRecord {
    std::string record_id;
    ImageMeta image;
    std::string scenario;
    std::string category;
    BoundingBox bbox;
    std::vector<std::string> aliases;
    std::string expression;
    std::string trace;
    TagVector tags;
    double difficulty = 0.0;

    friend bool operator==(const RscRecord&, const RscRecord&) = default;
};

/// Returns the first invariant a record violates, or nullopt when valid.
inline std::optional<std::string> validate(const RscRecord& r) {
    if (r.image.width < 1 || r.image.height < 1) return "image dimensions must be positive";
    if (!within_image(r.bbox, r.image.width, r.image.height)) return "bbox outside image";
    if (!(r.difficulty >= 0.0 && r.difficulty <= 1.0)) return "difficulty outside [0,1]";
    if (!r.tags.valid()) return "tag outside its enumeration";
    const std::string cat = text::normalize(r.category);
    bool found = false;
    for (const auto& a : r.aliases) found = found || text::normalize(a) == cat;
    if (!found) return "category not in aliases";
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// COCO-style source pool
// ---------------------------------------------------------------------------

struct SourcePool {
    std::vector<ImageMeta> images;
    std::vector<Instance> instances;
    /// image_id -> indices into `instances`, in file order.
    std::map<std::string, std::vector<std::size_t>> by_image;
    /// Instances dropped as duplicates of (content hash, instance id).
    std::size_t duplicates_dropped = 0;
};

namespace detail {

// COCO ids are usually integers; keep them as opaque strings.
inline std::string id_string(const json& v, const std::string& where) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    throw ParseError(where, "id must be a string or integer");
}

inline const json& require(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(where, std::string("missing \"") + key + "\"");
    return obj.at(key);
}

inline std::int64_t positive_int(const json& v, const std::string& where, const char* what) {
    if (!v.is_number()) throw ParseError(where, std::string(what) + " must be a number");
    const double d = v.get<double>();
    if (!(d >= 1.0) || d != std::floor(d) || d > 1e12)
        throw ValidationError(where, std::string(what) + " must be a positive integer");
    return static_cast<std::int64_t>(d);
}

inline RawBox4 raw_box(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 4) throw ParseError(where, "bbox must be [x,y,w,h]");
    RawBox4 out{};
    for (std::size_t i = 0; i < 4; ++i) {
        if (!v[i].is_number()) throw ParseError(where, "bbox entries must be numbers");
        out[i] = v[i].get<double>();
    }
    return out;
}

} // namespace detail

/// Builds a pool from parsed COCO-style JSON. Boxes are rounded and clipped to
/// their image; duplicates by (content hash or image id, annotation id) are
/// dropped.
inline SourcePool parse_source_pool(const json& doc) {
    SourcePool pool;
    std::map<std::string, std::size_t> image_index;
    const json& images = detail::require(doc, "images", "document");
    if (!images.is_array()) throw ParseError("document", "\"images\" must be an array");
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string where = "images[" + std::to_string(i) + "]";
        const json& im = images[i];
        ImageMeta meta;
        meta.image_id = detail::id_string(detail::require(im, "id", where), where);
        meta.width = detail::positive_int(detail::require(im, "width", where), where, "width");
        meta.height = detail::positive_int(detail::require(im, "height", where), where, "height");
        if (im.contains("content_hash") && im["content_hash"].is_string())
            meta.content_hash = im["content_hash"].get<std::string>();
        if (!image_index.emplace(meta.image_id, pool.images.size()).second)
            throw ValidationError(where, "duplicate image id " + meta.image_id);
        pool.images.push_back(std::move(meta));
    }

    std::map<std::string, std::string> category_names;
    if (doc.contains("categories")) {
        const json& cats = doc["categories"];
        if (!cats.is_array()) throw ParseError("document", "\"categories\" must be an array");
        for (std::size_t i = 0; i < cats.size(); ++i) {
            const std::string where = "categories[" + std::to_string(i) + "]";
            const std::string id = detail::id_string(detail::require(cats[i], "id", where), where);
            const json& name = detail::require(cats[i], "name", where);
            if (!name.is_string()) throw ParseError(where, "name must be a string");
            category_names[id] = name.get<std::string>();
        }
    }

    const json& anns = detail::require(doc, "annotations", "document");
    if (!anns.is_array()) throw ParseError("document", "\"annotations\" must be an array");
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t i = 0; i < anns.size(); ++i) {
        const json& a = anns[i];
        std::string where = "annotations[" + std::to_string(i) + "]";
        Instance inst;
        inst.instance_id = a.is_object() && a.contains("id")
                               ? detail::id_string(a["id"], where)
                               : std::to_string(i);
        where += " (id " + inst.instance_id + ")";
        const std::string img = detail::id_string(detail::require(a, "image_id", where), where);
        const auto it = image_index.find(img);
        if (it == image_index.end())
            throw ValidationError(where, "annotation " + inst.instance_id +
                                             " references missing image id " + img);
        inst.image = pool.images[it->second];
        const json& cid = detail::require(a, "category_id", where);
        if (!cid.is_number_integer() && !cid.is_number_unsigned())
            throw ParseError(where, "category_id must be an integer");
        inst.category_id = cid.get<std::int64_t>();
        const auto cn = category_names.find(std::to_string(inst.category_id));
        inst.category_name = cn != category_names.end() ? cn->second : std::to_string(inst.category_id);
        inst.bbox = clip_source_box(detail::raw_box(detail::require(a, "bbox", where), where),
                                    inst.image.width, inst.image.height);

        const std::string dedup = inst.image.content_hash.value_or("id:" + inst.image.image_id);
        if (!seen.emplace(dedup, inst.instance_id).second) {
            ++pool.duplicates_dropped;
            continue;
        }
        pool.by_image[inst.image.image_id].push_back(pool.instances.size());
        pool.instances.push_back(std::move(inst));
    }
    return pool;
}

inline SourcePool load_source_pool(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, "cannot open file");
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ParseError(path, "not valid JSON");
    return parse_source_pool(doc);
}

// ---------------------------------------------------------------------------
// Record JSONL
// ---------------------------------------------------------------------------

inline json to_json(const TagVector& t) {
    return json{{"U", t.U}, {"C", t.C}, {"S", std::string(to_string(t.S))}, {"O", t.O}, {"P", t.P}};
}

inline json to_json(const RscRecord& r) {
    json j;
    j["record_id"] = r.record_id;
    j["image_id"] = r.image.image_id;
    j["width"] = r.image.width;
    j["height"] = r.image.height;
    if (r.image.content_hash) j["content_hash"] = *r.image.content_hash;
    j["scenario"] = r.scenario;
    j["category"] = r.category;
    j["bbox"] = {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h};
    j["aliases"] = r.aliases;
    j["expression"] = r.expression;
    j["trace"] = r.trace;
    j["tags"] = to_json(r.tags);
    j["difficulty"] = r.difficulty;
    return j;
}

inline TagVector tags_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where, "tags must be an object");
    const auto int_field = [&](const char* k) {
        const json& v = detail::require(j, k, where);
        if (!v.is_number_integer() && !v.is_number_unsigned())
            throw ParseError(where, std::string("tag ") + k + " must be an integer");
        return v.get<int>();
    };
    TagVector t;
    t.U = int_field("U");
    t.C = int_field("C");
    t.O = int_field("O");
    t.P = int_field("P");
    const json& s = detail::require(j, "S", where);
    if (!s.is_string()) throw ParseError(where, "tag S must be \"S\", \"M\" or \"L\"");
    const auto sv = s.get<std::string>();
    if (sv == "S") t.S = SizeBin::S;
    else if (sv == "M") t.S = SizeBin::M;
    else if (sv == "L") t.S = SizeBin::L;
    else throw ValidationError(where, "tag S must be \"S\", \"M\" or \"L\"");
    return t;
}

/// Parses one record; structural problems throw ParseError, invariant
/// violations throw ValidationError.
inline RscRecord record_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where, "record must be a JSON object");
    const auto str = [&](const char* k) {
        const json& v = detail::require(j, k, where);
        if (!v.is_string()) throw ParseError(where, std::string(k) + " must be a string");
        return v.get<std::string>();
    };
    RscRecord r;
    r.record_id = str("record_id");
    r.image.image_id = str("image_id");
    r.image.width = detail::positive_int(detail::require(j, "width", where), where, "width");
    r.image.height = detail::positive_int(detail::require(j, "height", where), where, "height");
    if (j.contains("content_hash")) r.image.content_hash = str("content_hash");
    r.scenario = str("scenario");
    r.category = str("category");
    const json& b = detail::require(j, "bbox", where);
    if (!b.is_array() || b.size() != 4) throw ParseError(where, "bbox must be [x,y,w,h]");
    for (const auto& v : b)
        if (!v.is_number_integer() && !v.is_number_unsigned())
            throw ParseError(where, "bbox entries must be integers");
    r.bbox = {b[0].get<std::int64_t>(), b[1].get<std::int64_t>(), b[2].get<std::int64_t>(),
              b[3].get<std::int64_t>()};
    const json& al = detail::require(j, "aliases", where);
    if (!al.is_array()) throw ParseError(where, "aliases must be an array");
    for (const auto& a : al) {
        if (!a.is_string()) throw ParseError(where, "aliases must be strings");
        r.aliases.push_back(a.get<std::string>());
    }
    r.expression = str("expression");
    r.trace = str("trace");
    r.tags = tags_from_json(detail::require(j, "tags", where), where);
    const json& d = detail::require(j, "difficulty", where);
    if (!d.is_number()) throw ParseError(where, "difficulty must be a number");
    r.difficulty = d.get<double>();
    if (auto err = validate(r)) throw ValidationError(where + " (record " + r.record_id + ")", *err);
    return r;
}

enum class ReadMode { strict, lenient };

struct RecordIssue {
    std::size_t line_no = 0;
    std::string message;
};

struct RecordReadResult {
    std::vector<RscRecord> records;
    std::vector<RecordIssue> issues;
};

/// Reads line-delimited records. Strict mode throws on the first bad line;
/// lenient mode skips it and reports it in `issues`. Blank lines are ignored.
inline RecordReadResult read_rsc_records(std::istream& in, ReadMode mode = ReadMode::strict,
                                         const std::string& source = "<stream>") {
    RecordReadResult out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        try {
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded()) throw ParseError(where, "not valid JSON");
            out.records.push_back(record_from_json(j, where));
        } catch (const DataError& e) {
            if (mode == ReadMode::strict) throw;
            out.issues.push_back({line_no, e.what()});
        }
    }
    return out;
}

inline RecordReadResult read_rsc_records(const std::string& path, ReadMode mode = ReadMode::strict) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, "cannot open file");
    return read_rsc_records(in, mode, path);
}

/// Writes one JSON object per line. Every record must satisfy its invariants.
inline void write_rsc_records(const std::vector<RscRecord>& records, std::ostream& out) {
    for (const auto& r : records) {
        if (auto err = validate(r)) throw ValidationError("record " + r.record_id, *err);
        out << to_json(r).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
}

inline void write_rsc_records(const std::vector<RscRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    write_rsc_records(records, out);
    if (!out) throw DataError("write failed: " + path);
}

} // namespace groundkit
