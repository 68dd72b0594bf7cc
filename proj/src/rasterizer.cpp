#include "bsb/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "bsb/error.hpp"

namespace bsb {

namespace {

using Vec3d = std::array<double, 3>;

constexpr double kNearPlane = 1e-6;

double dot(const Vec3d& a, const Vec3d& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3d cross(const Vec3d& a, const Vec3d& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3d normalized(const Vec3d& v) {
    const double len = std::sqrt(dot(v, v));
    return {v[0] / len, v[1] / len, v[2] / len};
}

double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

struct ViewBasis {
    Vec3d eye;
    Vec3d forward;
    Vec3d right;
    Vec3d up;
    double focal;  // pixels
};

ViewBasis make_basis(const Camera& c) {
    const double el = radians(c.elevation);
    const double az = radians(c.azimuth);
    ViewBasis b{};
    b.eye = {c.radius * std::cos(el) * std::sin(az), c.radius * std::sin(el), c.radius * std::cos(el) * std::cos(az)};
    b.forward = normalized({-b.eye[0], -b.eye[1], -b.eye[2]});
    const Vec3d world_up = std::abs(c.elevation) >= 89.0 ? Vec3d{1, 0, 0} : Vec3d{0, 1, 0};
    b.right = normalized(cross(b.forward, world_up));
    b.up = cross(b.right, b.forward);
    b.focal = 0.5 * c.height / std::tan(0.5 * radians(c.fov));
    return b;
}

std::optional<Projection> project_with(const ViewBasis& b, const Camera& c, const Vec3f& p) {
    const Vec3d d{p[0] - b.eye[0], p[1] - b.eye[1], p[2] - b.eye[2]};
    const double z = dot(d, b.forward);
    if (!(z > kNearPlane)) {
        return std::nullopt;
    }
    return Projection{0.5 * c.width + b.focal * dot(d, b.right) / z, 0.5 * c.height - b.focal * dot(d, b.up) / z, z};
}

std::optional<Pixel> nearest_pixel_of(const Projection& p, int width, int height) {
    const auto px = static_cast<long>(std::lround(p.x));
    const auto py = static_cast<long>(std::lround(p.y));
    if (px < 0 || py < 0 || px >= width || py >= height) {
        return std::nullopt;
    }
    return Pixel{static_cast<int>(px), static_cast<int>(py)};
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace

void Camera::validate() const {
    if (!(radius > 0)) {
        throw ValidationError("camera radius must be positive");
    }
    if (!(fov > 0 && fov < 180)) {
        throw ValidationError("camera fov must lie in (0, 180)");
    }
    if (width < 1 || height < 1) {
        throw ValidationError("camera image size must be positive");
    }
}

std::optional<Projection> project_vertex(const Camera& camera, const Vec3f& point) {
    camera.validate();
    return project_with(make_basis(camera), camera, point);
}

std::optional<Pixel> projected_pixel(const Camera& camera, const Vec3f& point) {
    const auto p = project_vertex(camera, point);
    if (!p) {
        return std::nullopt;
    }
    return nearest_pixel_of(*p, camera.width, camera.height);
}

std::size_t RenderMap::visible_count() const {
    return static_cast<std::size_t>(std::count(visible.begin(), visible.end(), std::uint8_t{1}));
}

RenderMap render(const Mesh& mesh, const Camera& camera) {
    camera.validate();
    const auto basis = make_basis(camera);
    const int w = camera.width;
    const int h = camera.height;
    const auto pixels = static_cast<std::size_t>(w) * h;

    RenderMap map;
    map.width = w;
    map.height = h;
    map.vertex_of_pixel.assign(pixels, kBackground);
    map.triangle_of_pixel.assign(pixels, kBackground);
    map.depth.assign(pixels, std::numeric_limits<float>::infinity());
    map.visible.assign(mesh.vertex_count(), 0);

    std::vector<std::optional<Projection>> proj(mesh.vertex_count());
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        proj[v] = project_with(basis, camera, mesh.vertices()[v]);
    }

    std::vector<double> zbuf(pixels, std::numeric_limits<double>::infinity());
    const auto& faces = mesh.faces();
    for (std::size_t t = 0; t < faces.size(); ++t) {
        const auto& f = faces[t];
        if (!proj[f[0]] || !proj[f[1]] || !proj[f[2]]) {
            continue;  // crosses the eye plane; never happens for normalized meshes at default radius
        }
        const Projection& a = *proj[f[0]];
        const Projection& b = *proj[f[1]];
        const Projection& c = *proj[f[2]];
        const double area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if (std::abs(area) < 1e-12) {
            continue;  // edge-on
        }
        const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x, b.x, c.x}))));
        const int x1 = std::min(w - 1, static_cast<int>(std::floor(std::max({a.x, b.x, c.x}))));
        const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y, b.y, c.y}))));
        const int y1 = std::min(h - 1, static_cast<int>(std::floor(std::max({a.y, b.y, c.y}))));
        for (int py = y0; py <= y1; ++py) {
            for (int px = x0; px <= x1; ++px) {
                const double b0 = ((b.x - px) * (c.y - py) - (b.y - py) * (c.x - px)) / area;
                const double b1 = ((c.x - px) * (a.y - py) - (c.y - py) * (a.x - px)) / area;
                const double b2 = 1.0 - b0 - b1;
                if (b0 < 0 || b1 < 0 || b2 < 0) {
                    continue;
                }
                // Screen-space weights -> perspective-correct weights via 1/z interpolation.
                const double p0 = b0 / a.depth;
                const double p1 = b1 / b.depth;
                const double p2 = b2 / c.depth;
                const double inv_z = p0 + p1 + p2;
                const double z = 1.0 / inv_z;
                const auto idx = map.index(px, py);
                if (!(z < zbuf[idx])) {
                    continue;
                }
                zbuf[idx] = z;
                const std::array<double, 3> weight{p0 / inv_z, p1 / inv_z, p2 / inv_z};
                int best = 0;
                for (int i = 1; i < 3; ++i) {
                    if (weight[i] > weight[best] || (weight[i] == weight[best] && f[i] < f[best])) {
                        best = i;
                    }
                }
                map.vertex_of_pixel[idx] = static_cast<std::int32_t>(f[best]);
                map.triangle_of_pixel[idx] = static_cast<std::int32_t>(t);
            }
        }
    }

    for (std::size_t i = 0; i < pixels; ++i) {
        map.depth[i] = static_cast<float>(zbuf[i]);
    }

    const double eps = camera.depth_tolerance();
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        if (!proj[v]) {
            continue;
        }
        const auto pix = nearest_pixel_of(*proj[v], w, h);
        if (!pix) {
            continue;
        }
        const auto idx = map.index(pix->x, pix->y);
        bool self_covered = map.vertex_of_pixel[idx] == static_cast<std::int32_t>(v);
        if (!self_covered && map.triangle_of_pixel[idx] != kBackground) {
            // The surface drawn at this pixel belongs to one of v's own faces.
            const auto& f = faces[map.triangle_of_pixel[idx]];
            self_covered = f[0] == v || f[1] == v || f[2] == v;
        }
        if (self_covered || proj[v]->depth <= zbuf[idx] + eps) {
            map.visible[v] = 1;
        }
    }
    return map;
}

std::optional<VertexId> unproject_pixel(const RenderMap& map, int x, int y) {
    if (x < 0 || y < 0 || x >= map.width || y >= map.height) {
        throw ValidationError("pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") outside the render");
    }
    const auto v = map.vertex_of_pixel[map.index(x, y)];
    if (v == kBackground) {
        return std::nullopt;
    }
    return static_cast<VertexId>(v);
}

std::vector<Camera> view_grid(const std::vector<double>& elevations, const std::vector<double>& azimuths,
                              const Camera& base) {
    if (elevations.empty() || azimuths.empty()) {
        throw ValidationError("view grid needs at least one elevation and one azimuth");
    }
    std::vector<Camera> cameras;
    cameras.reserve(elevations.size() * azimuths.size());
    for (double el : elevations) {
        for (double az : azimuths) {
            Camera c = base;
            c.elevation = el;
            c.azimuth = az;
            c.validate();
            cameras.push_back(c);
        }
    }
    return cameras;
}

std::vector<Camera> sample_views(std::size_t count, std::uint64_t seed, const Camera& base) {
    if (count == 0) {
        throw ValidationError("sample_views needs count >= 1");
    }
    base.validate();
    std::mt19937_64 rng(seed);
    std::vector<Camera> cameras;
    cameras.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Camera c = base;
        c.elevation = -90.0 + 180.0 * uniform01(rng);
        c.azimuth = 360.0 * uniform01(rng);
        cameras.push_back(c);
    }
    return cameras;
}

const std::vector<double>& default_grid_elevations() {
    // Published list reads {-60, 30, 0, 30, 60}; the duplicated 30 is taken as -30.
    static const std::vector<double> values{-60, -30, 0, 30, 60};
    return values;
}

const std::vector<double>& default_grid_azimuths() {
    static const std::vector<double> values = [] {
        std::vector<double> v;
        for (int a = 0; a < 360; a += 30) {
            v.push_back(a);
        }
        return v;
    }();
    return values;
}

void write_depth_pgm(const RenderMap& map, const std::filesystem::path& path) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -lo;
    for (float d : map.depth) {
        if (std::isfinite(d)) {
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
    for (float d : map.depth) {
        unsigned char g = 0;
        if (std::isfinite(d)) {
            const float t = hi > lo ? (d - lo) / (hi - lo) : 0.0f;
            g = static_cast<unsigned char>(255 - std::lround(200.0f * t));
        }
        out.put(static_cast<char>(g));
    }
}

void write_vertex_id_ppm(const RenderMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out << "P6\n" << map.width << ' ' << map.height << "\n255\n";
    for (auto v : map.vertex_of_pixel) {
        std::uint32_t hash = v == kBackground ? 0u : static_cast<std::uint32_t>(v) * 2654435761u + 0x9e3779b9u;
        for (int c = 0; c < 3; ++c) {
            out.put(static_cast<char>((hash >> (8 * c)) & 0xffu));
        }
    }
}

} // namespace bsb
