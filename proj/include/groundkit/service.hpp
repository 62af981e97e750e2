#pragma once
// Line-delimited JSON scoring service over standard streams or TCP.
//
// Request:  {"request_id": .., "completion": "..", "gt": {"bbox": [x,y,w,h],
//            "canonical": [..], "aliases": [..], "width": W, "height": H},
//            "step": s, "total_steps": T, "stage": 1|2}
// Response: {"request_id": .., "total": .., "r_iou": .., "r_cat": .., "r_fmt": ..,
//            "r_struct": .., "iou": .., "oob": .., "weights": {"w_iou": .., ..}}
// Errors:   {"error": "parse"|"invalid", "line_no": n, "message": .., "request_id": ..}

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "json.hpp"

#include "groundkit/config.hpp"
#include "groundkit/error.hpp"
#include "groundkit/reward.hpp"

namespace groundkit {

struct ScoreRequest {
    nlohmann::json request_id;  // echoed verbatim
    std::string completion;
    GroundTruth gt;
    std::int64_t step = 0;
    std::int64_t total_steps = 1;
    int stage = 1;
};

inline nlohmann::json weights_to_json(const RewardWeights& w) {
    return {{"w_iou", w.iou}, {"w_cat", w.cat}, {"w_fmt", w.fmt}, {"w_struct", w.structure}};
}

inline nlohmann::json breakdown_to_json(const nlohmann::json& request_id, const RewardBreakdown& b) {
    nlohmann::json j;
    j["request_id"] = request_id;
    j["total"] = b.total;
    j["r_iou"] = b.r_iou;
    j["r_cat"] = b.r_cat;
    j["r_fmt"] = b.r_fmt;
    j["r_struct"] = b.r_struct;
    j["iou"] = b.iou;
    j["oob"] = b.oob;
    j["weights"] = weights_to_json(b.weights);
    return j;
}

namespace detail {

inline std::vector<std::string> string_list(const nlohmann::json& v, const char* what) {
    if (v.is_string()) return {v.get<std::string>()};
    if (!v.is_array()) throw ValidationError(what, "must be a string or list of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (!e.is_string()) throw ValidationError(what, "must contain strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

template <class T>
T number_field(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j[key];
    if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ValidationError(key, "must be an integer");
    } else {
        if (!v.is_number()) throw ValidationError(key, "must be a number");
    }
    return v.get<T>();
}

} // namespace detail

inline ScoreRequest request_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("request", "must be a JSON object");
    ScoreRequest r;
    if (j.contains("request_id")) r.request_id = j["request_id"];
    if (!j.contains("completion") || !j["completion"].is_string())
        throw ValidationError("completion", "must be a string");
    r.completion = j["completion"].get<std::string>();
    if (!j.contains("gt") || !j["gt"].is_object()) throw ValidationError("gt", "must be an object");
    const auto& g = j["gt"];
    if (!g.contains("bbox") || !g["bbox"].is_array() || g["bbox"].size() != 4)
        throw ValidationError("gt.bbox", "must be [x, y, w, h]");
    std::array<std::int64_t, 4> b{};
    for (std::size_t i = 0; i < 4; ++i) {
        if (!g["bbox"][i].is_number_integer()) throw ValidationError("gt.bbox", "must hold integers");
        b[i] = g["bbox"][i].get<std::int64_t>();
    }
    r.gt.bbox = {b[0], b[1], b[2], b[3]};
    r.gt.canonical = g.contains("canonical") ? detail::string_list(g["canonical"], "gt.canonical")
                                             : std::vector<std::string>{};
    r.gt.aliases = g.contains("aliases") ? detail::string_list(g["aliases"], "gt.aliases") : std::vector<std::string>{};
    if (r.gt.canonical.empty()) throw ValidationError("gt.canonical", "need at least one name");
    r.gt.width = detail::number_field<std::int64_t>(g, "width", 0);
    r.gt.height = detail::number_field<std::int64_t>(g, "height", 0);
    r.gt.validate();
    r.step = detail::number_field<std::int64_t>(j, "step", 0);
    r.total_steps = detail::number_field<std::int64_t>(j, "total_steps", 1);
    r.stage = detail::number_field<int>(j, "stage", 1);
    if (r.stage != 1 && r.stage != 2) throw ValidationError("stage", "must be 1 or 2");
    if (r.step < 0) throw ValidationError("step", "must be non-negative");
    if (r.total_steps < 1) throw ValidationError("total_steps", "must be >= 1");
    return r;
}

/// Stateless apart from its immutable configuration; safe to share across
/// connections.
class ScoringService {
public:
    explicit ScoringService(EngineConfig cfg = {}) : cfg_(std::move(cfg)) { cfg_.validate(); }

    const EngineConfig& config() const noexcept { return cfg_; }

    RewardBreakdown score(const ScoreRequest& r) const {
        const StepContext ctx{r.step, r.total_steps, cfg_.schedule(r.stage)};
        return score_completion(r.completion, r.gt, ctx, cfg_.reward);
    }

    /// One response line (without newline) for one request line.
    std::string handle_line(std::string_view line, std::size_t line_no) const {
        const auto j = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
        if (j.is_discarded()) return nlohmann::json{{"error", "parse"}, {"line_no", line_no}}.dump();
        nlohmann::json id = j.is_object() && j.contains("request_id") ? j["request_id"] : nlohmann::json();
        try {
            const auto req = request_from_json(j);
            return dump(breakdown_to_json(req.request_id, score(req)));
        } catch (const DataError& e) {
            nlohmann::json err{{"error", "invalid"}, {"line_no", line_no}, {"message", e.what()}};
            if (!id.is_null()) err["request_id"] = id;
            return dump(err);
        }
    }

private:
    static std::string dump(const nlohmann::json& j) {
        return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    }

    EngineConfig cfg_;
};

inline bool is_blank(std::string_view s) { return s.find_first_not_of(" \t\r") == std::string_view::npos; }

/// Answers every non-blank line in order. Output is flushed whenever the
/// input has nothing buffered, so interactive clients see each answer.
inline void serve_stream(const ScoringService& svc, std::istream& in, std::ostream& out) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        out << svc.handle_line(line, line_no) << '\n';
        if (in.rdbuf()->in_avail() <= 0) out.flush();
    }
    out.flush();
}

namespace detail {

inline bool send_all(int fd, const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        off += static_cast<std::size_t>(n);
    }
    return true;
}

inline void serve_connection(const ScoringService& svc, int fd) {
    std::string buf, pending;
    std::size_t line_no = 0;
    char chunk[16384];
    for (;;) {
        const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        buf.append(chunk, static_cast<std::size_t>(n));
        std::size_t start = 0;
        for (auto nl = buf.find('\n', start); nl != std::string::npos; nl = buf.find('\n', start)) {
            std::string_view line(buf.data() + start, nl - start);
            ++line_no;
            if (!is_blank(line)) {
                pending += svc.handle_line(line, line_no);
                pending += '\n';
            }
            start = nl + 1;
        }
        buf.erase(0, start);
        if (!pending.empty() && !send_all(fd, pending)) break;
        pending.clear();
    }
    if (!is_blank(buf)) send_all(fd, svc.handle_line(buf, line_no + 1) + "\n");
    ::close(fd);
}

} // namespace detail

struct TcpOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;            // 0: ephemeral
    std::size_t max_connections = 0;   // 0: unlimited
};

/// Accepts connections and serves each on its own thread. The bound port is
/// reported through `on_listen` before the first accept. Returns 0 after
/// max_connections connections finished, nonzero on a transport failure.
template <class OnListen>
int serve_tcp(const ScoringService& svc, const TcpOptions& opt, OnListen&& on_listen) {
    const int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (lfd < 0) return 1;
    const int yes = 1;
    ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(opt.port);
    if (::inet_pton(AF_INET, opt.host.c_str(), &addr.sin_addr) != 1) {
        ::close(lfd);
        return 1;
    }
    if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(lfd, 64) != 0) {
        ::close(lfd);
        return 1;
    }
    socklen_t len = sizeof addr;
    ::getsockname(lfd, reinterpret_cast<sockaddr*>(&addr), &len);
    on_listen(static_cast<std::uint16_t>(ntohs(addr.sin_port)));

    std::vector<std::thread> workers;
    int status = 0;
    for (std::size_t served = 0; opt.max_connections == 0 || served < opt.max_connections; ++served) {
        const int cfd = ::accept(lfd, nullptr, nullptr);
        if (cfd < 0) {
            if (errno == EINTR) {
                --served;
                continue;
            }
            status = 1;
            break;
        }
        workers.emplace_back([&svc, cfd] { detail::serve_connection(svc, cfd); });
    }
    for (auto& t : workers) t.join();
    ::close(lfd);
    return status;
}

} // namespace groundkit
