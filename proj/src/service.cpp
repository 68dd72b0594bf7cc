#include "bsb/service.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "bsb/error.hpp"
#include "bsb/matcher.hpp"
#include "bsb/segmenters.hpp"
#include "bsb/tensor_io.hpp"

namespace bsb {

namespace {

using nlohmann::json;

json pixel_json(Pixel p) { return json::array({p.x, p.y}); }

json error_body(const std::string& message) { return {{"error", message}}; }

HttpReply reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }

HttpReply error_reply(const std::exception& e) {
    int status = 500;
    if (dynamic_cast<const NotFoundError*>(&e)) {
        status = 404;
    } else if (dynamic_cast<const Error*>(&e) || dynamic_cast<const json::exception*>(&e)) {
        status = 400;
    }
    return reply(status, error_body(e.what()));
}

std::filesystem::path resolve(const std::filesystem::path& base, const json& value) {
    const std::filesystem::path p(value.get<std::string>());
    return p.is_absolute() ? p : base / p;
}

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::optional<std::size_t> parse_k(const json& request) {
    if (!request.contains("k") || request.at("k").is_null()) {
        return std::nullopt;
    }
    const auto k = request.at("k").get<long long>();
    if (k < 1) {
        throw ValidationError("k must be at least 1");
    }
    return static_cast<std::size_t>(k);
}

json parse_body(const std::string& body) {
    try {
        auto doc = json::parse(body);
        if (!doc.is_object()) {
            throw FormatError("request body must be a JSON object");
        }
        return doc;
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed JSON: ") + e.what());
    }
}

std::string content_type_for(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".png") {
        return "image/png";
    }
    if (ext == ".jpg" || ext == ".jpeg") {
        return "image/jpeg";
    }
    if (ext == ".webp") {
        return "image/webp";
    }
    return "application/octet-stream";
}

} // namespace

json rle_encode(const Mask2D& mask) {
    json runs = json::array();
    const auto& bits = mask.bits();
    std::size_t i = 0;
    while (i < bits.size()) {
        if (!bits[i]) {
            ++i;
            continue;
        }
        const auto start = i;
        while (i < bits.size() && bits[i]) {
            ++i;
        }
        runs.push_back(json::array({start, i - start}));
    }
    return runs;
}

Mask2D rle_decode(int width, int height, const json& runs) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(width) * height, 0);
    std::size_t end_of_last = 0;
    for (const auto& run : runs) {
        const auto start = run.at(0).get<std::size_t>();
        const auto length = run.at(1).get<std::size_t>();
        if (length == 0 || start < end_of_last || start + length > bits.size()) {
            throw FormatError("RLE runs must be non-empty, ordered and inside the mask");
        }
        std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(start), length, 1);
        end_of_last = start + length;
    }
    return Mask2D(width, height, std::move(bits));
}

std::shared_ptr<const Session> Session::create(const json& bundle, const std::filesystem::path& base_dir) {
    std::shared_ptr<Session> s(new Session());
    try {
        s->image_features_ = load_feature_image(resolve(base_dir, bundle.at("image_features")));
        s->vertex_features_ = load_vertex_features(resolve(base_dir, bundle.at("vertex_features")));
        s->mesh_ = load_mesh(resolve(base_dir, bundle.at("mesh")));
        if (s->vertex_features_.size() != s->mesh_.vertex_count()) {
            throw ValidationError("vertex_features rows differ from the mesh vertex count");
        }
        if (s->vertex_features_.dim() != s->image_features_.dim()) {
            throw ValidationError("image and vertex features have different dimensions");
        }
        const ProviderBindings bindings{base_dir, &s->mesh_, &s->vertex_features_};
        s->seg2d_ = make_seg2d(bundle.at("seg2d").get<std::string>(), bindings);
        s->seg3d_ = make_seg3d(bundle.at("seg3d").get<std::string>(), bindings);
        if (bundle.contains("display_image")) {
            const auto path = resolve(base_dir, bundle.at("display_image"));
            if (!std::filesystem::is_regular_file(path)) {
                throw NotFoundError("display image not found: " + path.string());
            }
            s->display_image_ = path;
        }
        const auto k = bundle.value("k", static_cast<long long>(kDefaultCandidates));
        if (k < 1) {
            throw ValidationError("k must be at least 1");
        }
        s->default_k_ = static_cast<std::size_t>(k);
    } catch (const json::exception& e) {
        throw FormatError(std::string("session bundle schema violation: ") + e.what());
    }
    s->created_ = std::chrono::system_clock::now();
    return s;
}

json Session::click(Pixel p, std::optional<std::size_t> k) const {
    if (!image_features_.contains(p)) {
        throw ValidationError("click (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside the image");
    }
    const auto seg = seg2d_->query(p);
    const ClickContext ctx{image_features_, p, seg.part, seg.object, vertex_features_, k.value_or(default_k_)};
    const auto result = correspond(ctx, *seg2d_, *seg3d_);
    const auto& m = result.match;

    json candidates = json::array();
    for (const auto& c : m.candidates) {
        json entry{{"vertex", c.vertex},
                   {"similarity", c.similarity},
                   {"nearest_pixel", pixel_json(c.nearest_pixel)},
                   {"in_part", c.in_part},
                   {"iou", c.iou ? json(*c.iou) : json(nullptr)}};
        if (!c.diagnostic.empty()) {
            entry["diagnostic"] = c.diagnostic;
        }
        candidates.push_back(std::move(entry));
    }
    json matched_mask = json::array();
    if (m.pixel) {
        matched_mask = rle_encode(seg2d_->query(*m.pixel).part);
    }
    return {{"click", pixel_json(p)},
            {"k", ctx.k},
            {"width", image_features_.width()},
            {"height", image_features_.height()},
            {"vertex", m.vertex ? json(*m.vertex) : json(nullptr)},
            {"pixel", m.pixel ? pixel_json(*m.pixel) : json(nullptr)},
            {"iou", m.iou ? json(*m.iou) : json(nullptr)},
            {"mask2d_part", rle_encode(seg.part)},
            {"mask2d_match", matched_mask},
            {"mask3d", result.part3d.indices()},
            {"candidates", candidates}};
}

json Session::vertex_click(VertexId v, std::optional<std::size_t> k) const {
    if (v >= mesh_.vertex_count()) {
        throw ValidationError("vertex " + std::to_string(v) + " out of range");
    }
    const auto region = seg3d_->query(v);
    const ReverseContext ctx{image_features_, vertex_features_, v, region, nullptr, k.value_or(default_k_)};
    const auto result = bsb_match_reverse(ctx, *seg3d_);

    json candidates = json::array();
    for (const auto& c : result.candidates) {
        json entry{{"pixel", pixel_json(c.pixel)},
                   {"similarity", c.similarity},
                   {"nearest_vertex", c.nearest_vertex},
                   {"in_region", c.in_region},
                   {"iou", c.iou ? json(*c.iou) : json(nullptr)}};
        if (!c.diagnostic.empty()) {
            entry["diagnostic"] = c.diagnostic;
        }
        candidates.push_back(std::move(entry));
    }
    json out{{"vertex_click", v},
             {"k", ctx.k},
             {"width", image_features_.width()},
             {"height", image_features_.height()},
             {"pixel", result.pixel ? pixel_json(*result.pixel) : json(nullptr)},
             {"vertex", result.vertex ? json(*result.vertex) : json(nullptr)},
             {"iou", result.iou ? json(*result.iou) : json(nullptr)},
             {"mask3d", region.indices()},
             {"mask2d", json::array()},
             {"candidates", candidates}};
    if (result.pixel) {
        try {
            out["mask2d"] = rle_encode(seg2d_->query(*result.pixel).part);
        } catch (const Error& e) {
            out["diagnostic"] = std::string("2D segmenter failed at the matched pixel: ") + e.what();
        }
    }
    return out;
}

json Session::mesh_json() const {
    json vertices = json::array();
    for (const auto& p : mesh_.vertices()) {
        vertices.push_back(json::array({p[0], p[1], p[2]}));
    }
    json faces = json::array();
    for (const auto& f : mesh_.faces()) {
        faces.push_back(json::array({f[0], f[1], f[2]}));
    }
    return {{"vertices", vertices}, {"faces", faces}};
}

SessionService::SessionService(ServiceConfig config) : config_(std::move(config)) {
    if (config_.session_cap == 0) {
        throw ValidationError("session cap must be at least 1");
    }
    salt_ = std::random_device{}();
    salt_ = (salt_ << 32) ^ std::random_device{}();
}

std::string SessionService::next_id() {
    // mix is a bijection, so ids never repeat within the service lifetime.
    std::ostringstream out;
    out << std::hex << mix(salt_ + counter_++);
    return out.str();
}

std::shared_ptr<const Session> SessionService::find(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw NotFoundError("unknown session '" + id + "'");
    }
    lru_.splice(lru_.begin(), lru_, it->second.second);
    return it->second.first;
}

std::size_t SessionService::session_count() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

HttpReply SessionService::create_session(const std::string& body) {
    try {
        if (body.size() > config_.max_body_bytes) {
            return reply(413, error_body("session bundle exceeds the request size limit"));
        }
        // Loading happens outside the lock; the registry only sees complete sessions.
        auto session = Session::create(parse_body(body), config_.data_root);
        std::lock_guard lock(mutex_);
        while (sessions_.size() >= config_.session_cap) {
            spdlog::info("evicting session {}", lru_.back());
            sessions_.erase(lru_.back());
            lru_.pop_back();
        }
        const auto id = next_id();
        lru_.push_front(id);
        sessions_.emplace(id, std::make_pair(std::move(session), lru_.begin()));
        spdlog::info("created session {}", id);
        return reply(200, {{"id", id}});
    } catch (const NotFoundError& e) {
        // A missing data file is a bad request here, not a missing resource.
        return reply(400, error_body(e.what()));
    } catch (const std::exception& e) {
        return error_reply(e);
    }
}

HttpReply SessionService::click(const std::string& id, const std::string& body) {
    try {
        const auto session = find(id);
        const auto request = parse_body(body);
        const Pixel p{request.at("x").get<int>(), request.at("y").get<int>()};
        return reply(200, session->click(p, parse_k(request)));
    } catch (const std::exception& e) {
        return error_reply(e);
    }
}

HttpReply SessionService::vertex_click(const std::string& id, const std::string& body) {
    try {
        const auto session = find(id);
        const auto request = parse_body(body);
        const auto v = request.at("v").get<long long>();
        if (v < 0) {
            throw ValidationError("vertex index must be non-negative");
        }
        return reply(200, session->vertex_click(static_cast<VertexId>(v), parse_k(request)));
    } catch (const std::exception& e) {
        return error_reply(e);
    }
}

HttpReply SessionService::mesh(const std::string& id) {
    try {
        return reply(200, find(id)->mesh_json());
    } catch (const std::exception& e) {
        return error_reply(e);
    }
}

HttpReply SessionService::image(const std::string& id) {
    try {
        const auto session = find(id);
        if (!session->display_image()) {
            throw NotFoundError("session '" + id + "' has no display image");
        }
        std::ifstream in(*session->display_image(), std::ios::binary);
        if (!in) {
            throw NotFoundError("cannot read " + session->display_image()->string());
        }
        std::ostringstream bytes;
        bytes << in.rdbuf();
        return {200, bytes.str(), content_type_for(*session->display_image())};
    } catch (const std::exception& e) {
        return error_reply(e);
    }
}

HttpReply SessionService::remove(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        return reply(404, error_body("unknown session '" + id + "'"));
    }
    lru_.erase(it->second.second);
    sessions_.erase(it);
    return reply(200, {{"deleted", id}});
}

struct HttpServer::Impl {
    Impl(SessionService& s, ServerOptions o) : service(s), options(std::move(o)) {}

    SessionService& service;
    ServerOptions options;
    httplib::Server server;
    int port = -1;
};

HttpServer::HttpServer(SessionService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
    auto& srv = impl_->server;
    auto& svc = impl_->service;
    srv.set_payload_max_length(svc.config().max_body_bytes);
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    const auto send = [](httplib::Response& res, const HttpReply& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    srv.Post("/sessions", [&svc, send](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.create_session(req.body));
    });
    srv.Post(R"(/sessions/([^/]+)/click)", [&svc, send](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.click(req.matches[1], req.body));
    });
    srv.Post(R"(/sessions/([^/]+)/vertex-click)", [&svc, send](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.vertex_click(req.matches[1], req.body));
    });
    srv.Get(R"(/sessions/([^/]+)/mesh)", [&svc, send](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.mesh(req.matches[1]));
    });
    srv.Get(R"(/sessions/([^/]+)/image)", [&svc, send](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.image(req.matches[1]));
    });
    srv.Delete(R"(/sessions/([^/]+))", [&svc, send](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.remove(req.matches[1]));
    });
    if (impl_->options.static_dir && !srv.set_mount_point("/", impl_->options.static_dir->string())) {
        throw NotFoundError("static directory not found: " + impl_->options.static_dir->string());
    }
}

HttpServer::~HttpServer() = default;

int HttpServer::bind() {
    auto& o = impl_->options;
    if (o.port == 0) {
        impl_->port = impl_->server.bind_to_any_port(o.host);
    } else {
        impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
    }
    if (impl_->port < 0) {
        throw Error("cannot bind " + o.host + ":" + std::to_string(o.port));
    }
    return impl_->port;
}

void HttpServer::listen() {
    if (impl_->port < 0) {
        bind();
    }
    spdlog::info("serving on {}:{}", impl_->options.host, impl_->port);
    impl_->server.listen_after_bind();
}

void HttpServer::stop() { impl_->server.stop(); }

} // namespace bsb
