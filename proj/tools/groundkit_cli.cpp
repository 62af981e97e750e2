// groundkit command-line entry point.
//
// Exit status: 0 success, 2 usage error, 3 data error (bad input, invariant
// violation, infeasible request), 4 internal error.

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "groundkit.hpp"

namespace gk = groundkit;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
};

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw gk::ParseError(path, "cannot open file");
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw gk::ParseError(path, "not valid JSON");
    return j;
}

json config_document(const Globals& g) {
    return g.config_path.empty() ? json::object() : load_json_file(g.config_path);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw gk::DataError("cannot open " + path + " for writing");
    return out;
}

std::string dump(const json& j, int indent = -1) {
    return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------

struct TagArgs {
    std::string pool, out, spec_out;
};

int run_tag(const TagArgs& a) {
    const auto pool = gk::load_source_pool(a.pool);
    const auto tagged = gk::tag_pool(pool);
    if (a.out.empty()) gk::write_rsc_records(tagged.records, std::cout);
    else gk::write_rsc_records(tagged.records, a.out);
    if (!a.spec_out.empty()) open_out(a.spec_out) << dump(gk::to_json(tagged.spec), 2) << '\n';
    std::cerr << "tagged " << tagged.records.size() << " instances";
    if (pool.duplicates_dropped) std::cerr << " (" << pool.duplicates_dropped << " duplicates dropped)";
    std::cerr << '\n';
    return 0;
}

struct CurateArgs {
    std::string pool, out_dir, targets;
    std::int64_t total = -1;
    double gamma = 0.5;
    double easy_purity = 0.70;
    std::vector<double> splits{0.6, 0.2, 0.2};
};

int run_curate(const CurateArgs& a, const Globals& g) {
    const auto pool = gk::read_rsc_records(a.pool).records;
    gk::CurationOptions opt;
    opt.total = a.total;
    opt.gamma = a.gamma;
    opt.split.seed = g.seed.value_or(0);
    opt.split.easy_purity = a.easy_purity;
    opt.split.fractions = {a.splits[0], a.splits[1], a.splits[2]};
    if (!a.targets.empty()) opt.targets = gk::targets_from_json(load_json_file(a.targets));
    const auto res = gk::curate(pool, opt);
    std::filesystem::create_directories(a.out_dir);
    for (std::size_t s = 0; s < 3; ++s) {
        const auto path = (std::filesystem::path(a.out_dir) / (std::string(gk::kSplitNames[s]) + ".jsonl")).string();
        gk::write_rsc_records(res.splits.splits[s], path);
    }
    open_out((std::filesystem::path(a.out_dir) / "report.json").string()) << dump(res.report, 2) << '\n';
    return 0;
}

struct ScoreArgs {
    std::string input, gt, pred;
    std::int64_t step = 0, total_steps = 1;
    int stage = 1;
};

/// Either service requests (--input) or records plus predictions (--gt/--pred)
/// turned into requests; both are answered by the service's line handler.
int run_score(const ScoreArgs& a, const Globals& g) {
    const gk::ScoringService svc(gk::config_from_json(config_document(g)));
    if (!a.gt.empty() || !a.pred.empty()) {
        if (a.gt.empty() || a.pred.empty()) throw gk::ValidationError("score", "--gt and --pred go together");
        const auto gts = gk::read_rsc_records(a.gt).records;
        const auto preds = gk::read_predictions(a.pred);
        std::size_t line_no = 0;
        for (const auto& r : gts) {
            const auto it = preds.find(r.record_id);
            const json req = {{"request_id", r.record_id},
                              {"completion", it == preds.end() ? std::string() : it->second},
                              {"gt",
                               {{"bbox", {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h}},
                                {"canonical", {r.category}},
                                {"aliases", r.aliases},
                                {"width", r.image.width},
                                {"height", r.image.height}}},
                              {"step", a.step},
                              {"total_steps", a.total_steps},
                              {"stage", a.stage}};
            std::cout << svc.handle_line(dump(req), ++line_no) << '\n';
        }
        return 0;
    }
    if (a.input.empty() || a.input == "-") {
        gk::serve_stream(svc, std::cin, std::cout);
    } else {
        std::ifstream in(a.input);
        if (!in) throw gk::ParseError(a.input, "cannot open file");
        gk::serve_stream(svc, in, std::cout);
    }
    return 0;
}

struct EvalArgs {
    std::string gt, pred, mode = "standard", format = "markdown";
};

int run_eval(const EvalArgs& a, const Globals& g) {
    const auto cfg = gk::config_from_json(config_document(g));
    const auto gts = gk::read_rsc_records(a.gt).records;
    const auto preds = gk::read_predictions(a.pred);
    const auto report = gk::evaluate(preds, gts, gk::eval_mode_from_string(a.mode), cfg.reward.keys);
    if (a.format == "json") std::cout << dump(gk::to_json(report), 2) << '\n';
    else std::cout << gk::render_report(report, gk::report_format_from_string(a.format));
    if (report.overall.missing) std::cerr << report.overall.missing << " records had no prediction\n";
    return 0;
}

struct SandboxArgs {
    std::string out, summary;
    bool anti = false;
};

int run_sandbox(const SandboxArgs& a, const Globals& g) {
    auto cfg = gk::sandbox::sandbox_config_from_json(config_document(g));
    if (g.seed) cfg.seed = *g.seed;
    cfg.threads = g.threads;
    if (a.anti) cfg = cfg.anti_curriculum();
    const auto res = gk::sandbox::train(cfg);
    if (a.out.empty() || a.out == "-") {
        gk::sandbox::write_curve_csv(res, std::cout);
    } else {
        auto out = open_out(a.out);
        gk::sandbox::write_curve_csv(res, out);
    }
    const auto summary = gk::sandbox::summary_json(res);
    if (!a.summary.empty()) open_out(a.summary) << dump(summary, 2) << '\n';
    else std::cerr << dump(summary) << '\n';
    return 0;
}

struct ServeArgs {
    bool tcp = false;
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    std::size_t max_connections = 0;
};

int run_serve(const ServeArgs& a, const Globals& g) {
    const gk::ScoringService svc(gk::config_from_json(config_document(g)));
    if (!a.tcp) {
        gk::serve_stream(svc, std::cin, std::cout);
        return std::cout.good() ? 0 : kExitInternal;
    }
    const int rc = gk::serve_tcp(svc, {a.host, a.port, a.max_connections}, [&](std::uint16_t port) {
        std::cerr << "listening on " << a.host << ':' << port << std::endl;
    });
    if (rc != 0) {
        std::cerr << "error: TCP transport failure: " << std::strerror(errno) << '\n';
        return kExitInternal;
    }
    return 0;
}

struct ParseArgs {
    std::string completion, input;
};

int run_parse(const ParseArgs& a, const Globals& g) {
    const auto cfg = gk::config_from_json(config_document(g));
    std::string text = a.completion;
    if (text.empty()) {
        if (a.input.empty() || a.input == "-") {
            text.assign(std::istreambuf_iterator<char>(std::cin), {});
        } else {
            std::ifstream in(a.input, std::ios::binary);
            if (!in) throw gk::ParseError(a.input, "cannot open file");
            text.assign(std::istreambuf_iterator<char>(in), {});
        }
    }
    std::cout << dump(gk::to_json(gk::parse_completion(text, cfg.reward.keys))) << '\n';
    return 0;
}

struct RenderArgs {
    std::string think, name;
    std::vector<std::int64_t> bbox;
};

int run_render(const RenderArgs& a) {
    std::cout << gk::render_completion(a.think, a.name, {a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3]}) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"groundkit: scenario grounding curation, rewards and evaluation"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed for any randomized step");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1u, 256u));

    TagArgs tag;
    auto* tag_cmd = app.add_subcommand("tag", "Tag a COCO-style pool with difficulty tags");
    tag_cmd->add_option("--annotations,--pool", tag.pool, "COCO-style JSON")->required()->check(CLI::ExistingFile);
    tag_cmd->add_option("--out", tag.out, "Output records (JSONL); stdout if omitted");
    tag_cmd->add_option("--spec-out", tag.spec_out, "Write fitted thresholds here");

    CurateArgs cur;
    auto* cur_cmd = app.add_subcommand("curate", "Quota, balance and split a tagged pool");
    cur_cmd->add_option("--in,--pool", cur.pool, "Tagged records (JSONL)")->required()->check(CLI::ExistingFile);
    cur_cmd->add_option("--out-dir", cur.out_dir, "Directory for sft/rl/test.jsonl and report.json")->required();
    cur_cmd->add_option("--total", cur.total, "Records to select (default: whole pool)");
    cur_cmd->add_option("--targets", cur.targets, "Per-axis marginal targets (JSON)")->check(CLI::ExistingFile);
    cur_cmd->add_option("--gamma", cur.gamma, "Category quota exponent")->check(CLI::Range(0.0, 1.0));
    cur_cmd->add_option("--splits", cur.splits, "SFT,RL,test fractions")->delimiter(',')->expected(3);
    cur_cmd->add_option("--easy-purity", cur.easy_purity, "Minimum easy share of the SFT split")
        ->check(CLI::Range(0.0, 1.0));

    ScoreArgs sc;
    auto* sc_cmd = app.add_subcommand("score", "Score completions into per-record reward breakdowns");
    sc_cmd->add_option("--input", sc.input, "Request JSONL; stdin if neither --input nor --gt is given");
    sc_cmd->add_option("--gt", sc.gt, "Ground-truth records (JSONL)")->check(CLI::ExistingFile);
    sc_cmd->add_option("--pred", sc.pred, "Predictions {record_id, completion} (JSONL)")->check(CLI::ExistingFile);
    sc_cmd->add_option("--step", sc.step, "Training step")->check(CLI::NonNegativeNumber);
    sc_cmd->add_option("--total-steps", sc.total_steps, "Steps in the stage")->check(CLI::PositiveNumber);
    sc_cmd->add_option("--stage", sc.stage, "1 or 2")->check(CLI::Range(1, 2));

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "Compute grounding metrics");
    ev_cmd->add_option("--gt", ev.gt, "Ground-truth records (JSONL)")->required()->check(CLI::ExistingFile);
    ev_cmd->add_option("--pred", ev.pred, "Predictions {record_id, completion} (JSONL)")->required()->check(CLI::ExistingFile);
    ev_cmd->add_option("--mode", ev.mode)->check(CLI::IsMember({"standard", "box_only", "category_only"}));
    ev_cmd->add_option("--format", ev.format)->check(CLI::IsMember({"markdown", "csv", "json"}));

    SandboxArgs sb;
    auto* sb_cmd = app.add_subcommand("sandbox", "Train the toy policy end to end");
    sb_cmd->add_option("--out", sb.out, "Learning curve CSV; stdout if omitted");
    sb_cmd->add_option("--summary", sb.summary, "Held-out evaluation JSON; stderr if omitted");
    sb_cmd->add_flag("--anti-curriculum", sb.anti, "Run the stage mixtures in reverse order");

    ServeArgs sv;
    auto* sv_cmd = app.add_subcommand("serve", "Reward scoring service");
    sv_cmd->add_flag("--tcp", sv.tcp, "Listen on TCP instead of standard streams");
    sv_cmd->add_option("--host", sv.host, "Bind address");
    sv_cmd->add_option("--port", sv.port, "Port (0: ephemeral, printed to stderr)");
    sv_cmd->add_option("--max-connections", sv.max_connections, "Exit after this many connections");

    ParseArgs pa;
    auto* pa_cmd = app.add_subcommand("parse", "Parse one completion and print its fields");
    pa_cmd->add_option("--completion", pa.completion, "Completion text");
    pa_cmd->add_option("--input", pa.input, "File holding one completion; stdin if omitted");

    RenderArgs re;
    auto* re_cmd = app.add_subcommand("render", "Render a schema-conformant completion");
    re_cmd->add_option("--think", re.think, "Reasoning text");
    re_cmd->add_option("--name", re.name, "Target category")->required();
    re_cmd->add_option("--bbox", re.bbox, "x,y,w,h")->delimiter(',')->expected(4)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*tag_cmd) return run_tag(tag);
        if (*cur_cmd) return run_curate(cur, g);
        if (*sc_cmd) return run_score(sc, g);
        if (*ev_cmd) return run_eval(ev, g);
        if (*sb_cmd) return run_sandbox(sb, g);
        if (*sv_cmd) return run_serve(sv, g);
        if (*pa_cmd) return run_parse(pa, g);
        if (*re_cmd) return run_render(re);
    } catch (const gk::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}
