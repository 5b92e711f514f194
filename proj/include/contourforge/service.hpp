#pragma once

#include "contourforge/io.hpp"
#include "contourforge/levelset.hpp"
#include "contourforge/raster.hpp"

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace httplib {
class Server;
}

namespace contourforge {

/// Row-major alternating run lengths, starting with a (possibly zero) run of false.
std::vector<std::uint32_t> encode_rle(const BinaryMask& mask);
BinaryMask decode_rle(const std::vector<std::uint32_t>& runs, int width, int height);

/// First 16 hex digits of the SHA-256 of `bytes`.
std::string content_id(std::string_view bytes);

struct ServiceConfig {
    std::size_t max_sessions = 64;
    std::chrono::seconds idle_ttl{30 * 60};
    std::size_t max_body_bytes = 16u << 20;
    std::string cors_origin;
    /// Cap on session snapshots kept for GET responses.
    std::size_t history_limit = 32;
};

struct ServiceResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// Transport-independent request handlers plus their HTTP route table.
class RefineService {
public:
    using Clock = std::chrono::steady_clock;

    explicit RefineService(ServiceConfig config = {}, std::function<Clock::time_point()> now = Clock::now);
    ~RefineService();

    RefineService(const RefineService&) = delete;
    RefineService& operator=(const RefineService&) = delete;

    ServiceResponse upload_map(std::string_view body);
    ServiceResponse get_map(const std::string& map_id) const;
    ServiceResponse create_session(std::string_view body);
    ServiceResponse step_session(const std::string& session_id, std::string_view body);
    ServiceResponse get_session(const std::string& session_id, bool include_mask);
    ServiceResponse reset_session(const std::string& session_id, std::string_view body);
    static ServiceResponse healthz();

    /// Registers every route (and CORS headers when configured) on `server`.
    void install(httplib::Server& server);

    /// Loads every .fpm/.pgm/.ppm file in `dir`; returns (file name, map id) pairs.
    std::vector<std::pair<std::string, std::string>> preload(const std::filesystem::path& dir);

    std::size_t session_count() const;
    std::size_t map_count() const;

    /// Test hook: holds the session lock as if a step were in flight.
    std::unique_lock<std::mutex> lock_session_for_test(const std::string& session_id);

private:
    struct MapEntry;
    struct Session;

    std::shared_ptr<const MapEntry> find_map(const std::string& id) const;
    std::shared_ptr<Session> find_session(const std::string& id);
    void evict_locked(Clock::time_point now);
    std::string fresh_session_id();

    ServiceConfig config_;
    std::function<Clock::time_point()> now_;

    mutable std::shared_mutex maps_mutex_;
    std::unordered_map<std::string, std::shared_ptr<const MapEntry>> maps_;

    mutable std::mutex sessions_mutex_;
    std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
    std::list<std::string> lru_;  // front = most recently used
    std::uint64_t id_counter_ = 0;
    std::uint64_t id_salt_ = 0;
};

}  // namespace contourforge
