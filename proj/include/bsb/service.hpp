#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "bsb/mesh.hpp"
#include "bsb/providers.hpp"
#include "bsb/types.hpp"

namespace bsb {

// Masks on the wire: [[start, length], ...] runs of set pixels in row-major order.
nlohmann::json rle_encode(const Mask2D& mask);
Mask2D rle_decode(int width, int height, const nlohmann::json& runs);

// Immutable per-session data. Providers may reference the other members, so a
// Session is pinned in place once built.
class Session {
public:
    // Bundle schema:
    //   {"image_features": "f.bsbt", "vertex_features": "v.bsbt", "mesh": "m.obj",
    //    "seg2d": "<provider spec>", "seg3d": "<provider spec>",
    //    "display_image"?: "img.png", "k"?: 100}
    // Relative paths resolve against base_dir.
    static std::shared_ptr<const Session> create(const nlohmann::json& bundle, const std::filesystem::path& base_dir);

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    nlohmann::json click(Pixel p, std::optional<std::size_t> k) const;
    nlohmann::json vertex_click(VertexId v, std::optional<std::size_t> k) const;
    nlohmann::json mesh_json() const;

    const FeatureImage& image_features() const { return image_features_; }
    const Mesh& mesh() const { return mesh_; }
    const std::optional<std::filesystem::path>& display_image() const { return display_image_; }
    std::size_t default_k() const { return default_k_; }

private:
    Session() = default;

    FeatureImage image_features_;
    VertexFeatureField vertex_features_;
    Mesh mesh_;
    std::unique_ptr<Seg2DProvider> seg2d_;
    std::unique_ptr<Seg3DProvider> seg3d_;
    std::optional<std::filesystem::path> display_image_;
    std::size_t default_k_ = 0;
    std::chrono::system_clock::time_point created_;
};

struct ServiceConfig {
    std::size_t session_cap = 16;
    std::filesystem::path data_root = ".";
    std::size_t max_body_bytes = 1 << 20;
};

struct HttpReply {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

// Transport-independent request handling. Every method is safe to call
// concurrently; registry mutations are serialized, inference runs unlocked.
class SessionService {
public:
    explicit SessionService(ServiceConfig config = {});

    HttpReply create_session(const std::string& body);
    HttpReply click(const std::string& id, const std::string& body);
    HttpReply vertex_click(const std::string& id, const std::string& body);
    HttpReply mesh(const std::string& id);
    HttpReply image(const std::string& id);
    HttpReply remove(const std::string& id);

    std::size_t session_count() const;
    const ServiceConfig& config() const { return config_; }

private:
    std::shared_ptr<const Session> find(const std::string& id);
    std::string next_id();

    ServiceConfig config_;
    mutable std::mutex mutex_;
    std::uint64_t counter_ = 0;
    std::uint64_t salt_ = 0;
    std::list<std::string> lru_;  // most recent first
    std::unordered_map<std::string, std::pair<std::shared_ptr<const Session>, std::list<std::string>::iterator>>
        sessions_;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> static_dir;
};

// Blocks serving HTTP until stop() is called from another thread.
class HttpServer {
public:
    HttpServer(SessionService& service, ServerOptions options);
    ~HttpServer();

    // Binds (port 0 picks a free port) and returns the bound port.
    int bind();
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace bsb
