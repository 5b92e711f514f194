#include "contourforge/service.hpp"

#include "contourforge/contour.hpp"
#include "contourforge/error.hpp"
#include "contourforge/morphology.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <random>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

namespace contourforge {

using nlohmann::json;

std::vector<std::uint32_t> encode_rle(const BinaryMask& mask) {
    std::vector<std::uint32_t> runs;
    bool current = false;
    std::uint32_t len = 0;
    for (const auto b : mask.bits()) {
        if ((b != 0) != current) {
            runs.push_back(len);
            current = !current;
            len = 0;
        }
        ++len;
    }
    runs.push_back(len);
    return runs;
}

BinaryMask decode_rle(const std::vector<std::uint32_t>& runs, int width, int height) {
    BinaryMask mask(width, height);
    auto bits = mask.bits();
    std::size_t pos = 0;
    bool value = false;
    for (const auto r : runs) {
        if (pos + r > bits.size()) throw DomainError("RLE runs exceed the mask size");
        std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(pos), r, value ? 1 : 0);
        pos += r;
        value = !value;
    }
    if (pos != bits.size()) throw DomainError("RLE runs do not cover the mask");
    return mask;
}

std::string content_id(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    std::string hex;
    for (unsigned int i = 0; i < 8 && i < len; ++i) hex += fmt::format("{:02x}", md[i]);
    return hex;
}

struct RefineService::MapEntry {
    std::string id;
    std::string bytes;
    io::RasterKind kind = io::RasterKind::Unknown;
    int width = 0;
    int height = 0;
    int channels = 0;
    std::optional<ScalarField> field;  // absent for color display images
};

struct SessionSnapshot {
    int step = 0;
    bool changed = false;
    std::size_t area = 0;
};

struct RefineService::Session {
    std::string id;
    std::shared_ptr<const MapEntry> map;
    EvolutionParams params;
    SpeedField speed;
    Polygon polygon;
    EmbeddingState state;
    std::optional<BinaryMask> previous;
    int stall = 0;
    bool converged = false;
    std::deque<SessionSnapshot> history;
    std::mutex mutex;
    Clock::time_point last_used;
};

namespace {

ServiceResponse reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }

ServiceResponse error_reply(int status, std::string_view message) {
    return reply(status, json{{"error", message}, {"status", status}});
}

std::string_view kind_name(io::RasterKind k) {
    switch (k) {
        case io::RasterKind::Fpm: return "fpm";
        case io::RasterKind::Pgm: return "pgm";
        case io::RasterKind::Ppm: return "ppm";
        default: return "unknown";
    }
}

json contours_json(const BinaryMask& mask) {
    json out = json::array();
    for (const auto& p : mask_to_contours(mask)) out.push_back(io::polygon_to_json(p));
    return out;
}

json params_json(const EvolutionParams& p) {
    json j = p.to_json();
    // Sessions step on demand; the batch-evolution fields do not apply.
    j.erase("max_steps");
    j.erase("snapshot_every");
    return j;
}

// Parses {"params": {...}} over the coarse-to-fine defaults; throws DomainError on bad values.
EvolutionParams parse_params(const json& body, EvolutionParams base) {
    if (!body.contains("params") || body["params"].is_null()) return base;
    const json& p = body["params"];
    if (!p.is_object()) throw DomainError("params must be an object");
    EvolutionParams out = EvolutionParams::from_json(p, base);
    if (!std::isfinite(out.lambda)) throw DomainError("lambda must be finite for interactive sessions");
    return out;
}

std::optional<json> parse_body(std::string_view body) {
    if (body.empty()) return json::object();
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

Polygon parse_session_polygon(const json& j, int width, int height) {
    Polygon poly;
    try {
        poly = io::polygon_from_json(j);
    } catch (const json::exception& e) {
        throw DomainError(std::string("invalid polygon: ") + e.what());
    }
    validate_polygon(poly);
    for (const auto& v : poly.vertices) {
        if (v.x < 0 || v.y < 0 || v.x > width - 1 || v.y > height - 1) {
            throw DomainError("polygon vertex outside the map bounds");
        }
    }
    return poly;
}

}  // namespace

RefineService::RefineService(ServiceConfig config, std::function<Clock::time_point()> now)
    : config_(std::move(config)), now_(std::move(now)) {
    std::random_device rd;
    id_salt_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

RefineService::~RefineService() = default;

ServiceResponse RefineService::healthz() { return reply(200, json{{"status", "ok"}}); }

ServiceResponse RefineService::upload_map(std::string_view body) {
    if (body.size() > config_.max_body_bytes) return error_reply(413, "payload exceeds the size limit");
    const std::string id = content_id(body);
    {
        std::shared_lock lock(maps_mutex_);
        if (auto it = maps_.find(id); it != maps_.end()) {
            const auto& m = *it->second;
            return reply(200, json{{"map_id", id}, {"kind", kind_name(m.kind)}, {"width", m.width},
                                   {"height", m.height}, {"channels", m.channels}});
        }
    }
    auto entry = std::make_shared<MapEntry>();
    entry->id = id;
    entry->kind = io::sniff(body);
    try {
        switch (entry->kind) {
            case io::RasterKind::Fpm: entry->field = io::decode_fpm(body); break;
            case io::RasterKind::Pgm: entry->field = io::decode_pgm_field(body); break;
            case io::RasterKind::Ppm: {
                const auto img = io::decode_ppm(body);
                entry->width = img.width;
                entry->height = img.height;
                entry->channels = 3;
                break;
            }
            default: return error_reply(400, "unrecognised raster format (expected FPM1, P5 or P6)");
        }
    } catch (const FormatError& e) {
        return error_reply(400, e.what());
    } catch (const DomainError& e) {
        return error_reply(400, e.what());
    }
    if (entry->field) {
        entry->width = entry->field->width();
        entry->height = entry->field->height();
        entry->channels = entry->field->channels();
    }
    entry->bytes.assign(body);
    json ack = {{"map_id", id}, {"kind", kind_name(entry->kind)}, {"width", entry->width},
                {"height", entry->height}, {"channels", entry->channels}};
    std::unique_lock lock(maps_mutex_);
    const bool inserted = maps_.emplace(id, std::move(entry)).second;
    return reply(inserted ? 201 : 200, ack);
}

std::shared_ptr<const RefineService::MapEntry> RefineService::find_map(const std::string& id) const {
    std::shared_lock lock(maps_mutex_);
    auto it = maps_.find(id);
    return it == maps_.end() ? nullptr : it->second;
}

ServiceResponse RefineService::get_map(const std::string& map_id) const {
    const auto m = find_map(map_id);
    if (!m) return error_reply(404, "unknown map");
    std::string type = "application/octet-stream";
    if (m->kind == io::RasterKind::Pgm) type = "image/x-portable-graymap";
    if (m->kind == io::RasterKind::Ppm) type = "image/x-portable-pixmap";
    return {200, m->bytes, type};
}

std::size_t RefineService::map_count() const {
    std::shared_lock lock(maps_mutex_);
    return maps_.size();
}

std::size_t RefineService::session_count() const {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
}

std::string RefineService::fresh_session_id() {
    std::mt19937_64 mix(id_salt_ ^ (++id_counter_ * 0x9e3779b97f4a7c15ULL));
    return fmt::format("{:016x}{:016x}", mix(), mix());
}

void RefineService::evict_locked(Clock::time_point now) {
    for (auto it = lru_.begin(); it != lru_.end();) {
        auto s = sessions_.find(*it);
        if (s != sessions_.end() && now - s->second->last_used > config_.idle_ttl) {
            sessions_.erase(s);
            it = lru_.erase(it);
        } else {
            ++it;
        }
    }
    while (sessions_.size() > config_.max_sessions && !lru_.empty()) {
        sessions_.erase(lru_.back());
        lru_.pop_back();
    }
}

std::shared_ptr<RefineService::Session> RefineService::find_session(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    const auto now = now_();
    evict_locked(now);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return nullptr;
    it->second->last_used = now;
    lru_.remove(id);
    lru_.push_front(id);
    return it->second;
}

namespace {

// (Re)initializes the evolution state of `s` from its polygon and params.
void initialize(auto& s) {
    const ScalarField& prob = *s.map->field;
    BinaryMask init = polygon_to_mask(s.polygon, prob.width(), prob.height());
    if (!init.any()) throw DomainError("polygon covers no pixel center");
    ScalarField y(prob.width(), prob.height(), 1);
    if (s.params.lambda > 0) y = smoothed_boundary_term(mask_to_boundary(init), s.params.sigma_y);
    s.speed = SpeedField::prepare(compute_g(prob, y, s.params.lambda), s.params.balloon_threshold);
    s.state = EmbeddingState{std::move(init), 0};
    s.previous.reset();
    s.stall = 0;
    s.converged = false;
    s.history.clear();
    s.history.push_back({0, false, s.state.u.count()});
}

// Caller holds s.mutex.
json state_json(const auto& s, bool include_mask) {
    json history = json::array();
    for (const auto& h : s.history) history.push_back({{"step", h.step}, {"changed", h.changed}, {"area", h.area}});
    json out = {{"session_id", s.id},
                {"map_id", s.map->id},
                {"width", s.map->width},
                {"height", s.map->height},
                {"step", s.state.step},
                {"converged", s.converged},
                {"params", params_json(s.params)},
                {"polygon", io::polygon_to_json(s.polygon)},
                {"contours", contours_json(s.state.u)},
                {"area", s.state.u.count()},
                {"history", std::move(history)}};
    if (include_mask) {
        out["mask"] = {{"encoding", "rle"},
                       {"width", s.state.u.width()},
                       {"height", s.state.u.height()},
                       {"runs", encode_rle(s.state.u)}};
    }
    return out;
}

}  // namespace

ServiceResponse RefineService::create_session(std::string_view body) {
    const auto j = parse_body(body);
    if (!j) return error_reply(400, "malformed JSON body");
    if (!j->contains("prob_map_id") || !(*j)["prob_map_id"].is_string()) {
        return error_reply(422, "prob_map_id (string) is required");
    }
    const auto map = find_map((*j)["prob_map_id"].get<std::string>());
    if (!map) return error_reply(404, "unknown map");
    if (!map->field || map->channels != 1) {
        return error_reply(422, "prob map must be a single-channel FPM1 or PGM raster");
    }
    if (!j->contains("init_polygon")) return error_reply(422, "init_polygon is required");

    auto s = std::make_shared<Session>();
    s->map = map;
    try {
        s->params = parse_params(*j, EvolutionParams::coarse_to_fine_defaults());
        s->polygon = parse_session_polygon((*j)["init_polygon"], map->width, map->height);
        initialize(*s);
    } catch (const DomainError& e) {
        return error_reply(422, e.what());
    } catch (const json::exception& e) {
        return error_reply(422, e.what());
    }

    json out = {{"map_id", map->id},
                {"step", 0},
                {"contours", contours_json(s->state.u)},
                {"params", params_json(s->params)},
                {"width", map->width},
                {"height", map->height}};
    {
        std::lock_guard lock(sessions_mutex_);
        const auto now = now_();
        s->id = fresh_session_id();
        s->last_used = now;
        sessions_.emplace(s->id, s);
        lru_.push_front(s->id);
        evict_locked(now);
    }
    out["session_id"] = s->id;
    return reply(201, out);
}

ServiceResponse RefineService::step_session(const std::string& session_id, std::string_view body) {
    const auto s = find_session(session_id);
    if (!s) return error_reply(404, "unknown session");
    std::unique_lock lock(s->mutex, std::try_to_lock);
    if (!lock.owns_lock()) return error_reply(409, "a step request for this session is already in flight");

    const auto j = parse_body(body);
    if (!j) return error_reply(400, "malformed JSON body");
    if (!j->contains("steps") || !(*j)["steps"].is_number_integer()) {
        return error_reply(422, "steps (integer) is required");
    }
    const auto n = (*j)["steps"].get<long long>();
    if (n < 1 || n > 500) return error_reply(422, "steps must lie in [1, 500]");

    const BinaryMask start = s->state.u;
    int applied = 0;
    for (long long i = 0; i < n; ++i) {
        // Converged sessions stay put, so batched and single steps compose.
        if (s->stall >= 3 || s->state.collapsed()) break;
        EmbeddingState next = mgac_step(s->state, s->speed, s->params);
        // A fixed point or a two-step cycle of the alternating smoothing counts as no progress.
        const bool stalled = next.u == s->state.u || (s->previous && next.u == *s->previous);
        s->stall = stalled ? s->stall + 1 : 0;
        s->previous = std::move(s->state.u);
        s->state = std::move(next);
        ++applied;
    }
    s->converged = s->stall >= 3 || s->state.collapsed();
    const bool changed = !s->converged && s->state.u != start;
    s->history.push_back({s->state.step, changed, s->state.u.count()});
    while (s->history.size() > config_.history_limit) s->history.pop_front();

    return reply(200, json{{"session_id", s->id},
                           {"step", s->state.step},
                           {"steps_applied", applied},
                           {"changed", changed},
                           {"converged", s->converged},
                           {"collapsed", s->state.collapsed()},
                           {"contours", contours_json(s->state.u)}});
}

ServiceResponse RefineService::get_session(const std::string& session_id, bool include_mask) {
    const auto s = find_session(session_id);
    if (!s) return error_reply(404, "unknown session");
    std::lock_guard lock(s->mutex);
    return reply(200, state_json(*s, include_mask));
}

ServiceResponse RefineService::reset_session(const std::string& session_id, std::string_view body) {
    const auto s = find_session(session_id);
    if (!s) return error_reply(404, "unknown session");
    std::unique_lock lock(s->mutex, std::try_to_lock);
    if (!lock.owns_lock()) return error_reply(409, "a step request for this session is already in flight");

    const auto j = parse_body(body);
    if (!j) return error_reply(400, "malformed JSON body");
    const Polygon old_polygon = s->polygon;
    const EvolutionParams old_params = s->params;
    try {
        if (j->contains("polygon")) s->polygon = parse_session_polygon((*j)["polygon"], s->map->width, s->map->height);
        s->params = parse_params(*j, s->params);
        initialize(*s);
    } catch (const std::exception& e) {
        s->polygon = old_polygon;
        s->params = old_params;
        return error_reply(422, e.what());
    }
    return reply(200, state_json(*s, false));
}

std::unique_lock<std::mutex> RefineService::lock_session_for_test(const std::string& session_id) {
    const auto s = find_session(session_id);
    if (!s) throw DomainError("unknown session");
    return std::unique_lock<std::mutex>(s->mutex);
}

std::vector<std::pair<std::string, std::string>> RefineService::preload(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".fpm" || ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::pair<std::string, std::string>> loaded;
    for (const auto& f : files) {
        const auto r = upload_map(io::read_file(f));
        if (r.status >= 400) {
            spdlog::warn("skipping {}: {}", f.string(), json::parse(r.body).value("error", r.body));
            continue;
        }
        loaded.emplace_back(f.filename().string(), json::parse(r.body)["map_id"].get<std::string>());
    }
    return loaded;
}

void RefineService::install(httplib::Server& server) {
    auto send = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server.set_payload_max_length(config_.max_body_bytes);

    server.Get("/healthz", [send](const httplib::Request&, httplib::Response& res) { send(res, healthz()); });
    server.Post("/api/v1/maps", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, upload_map(req.body));
    });
    server.Get(R"(/api/v1/maps/([0-9a-f]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, get_map(req.matches[1]));
    });
    server.Post("/api/v1/sessions", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, create_session(req.body));
    });
    server.Post(R"(/api/v1/sessions/([^/]+)/step)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, step_session(req.matches[1], req.body));
    });
    server.Post(R"(/api/v1/sessions/([^/]+)/reset)",
                [this, send](const httplib::Request& req, httplib::Response& res) {
                    send(res, reset_session(req.matches[1], req.body));
                });
    server.Get(R"(/api/v1/sessions/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, get_session(req.matches[1], req.get_param_value("include") == "mask"));
    });

    server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        spdlog::error("request failed: {}", what);
        send(res, error_reply(500, what));
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            const int status = res.status;
            const std::string msg = status == 413 ? "payload exceeds the size limit"
                                    : status == 404 ? "not found"
                                                    : httplib::status_message(status);
            res.set_content(json{{"error", msg}, {"status", status}}.dump(), "application/json");
        }
    });

    if (!config_.cors_origin.empty()) {
        const std::string origin = config_.cors_origin;
        server.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Vary", "Origin");
        });
        server.Options(R"(/.*)", [origin](const httplib::Request&, httplib::Response& res) {
            res.status = 204;
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.set_header("Access-Control-Max-Age", "600");
        });
    }
}

}  // namespace contourforge
