#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "bsb/mesh.hpp"

namespace bsb {

// Orbit camera looking at the origin. Up is +Y, or +X when |elevation| >= 89
// degrees. Azimuth 0 / elevation 0 places the eye on +Z.
struct Camera {
    double elevation = 0;  // degrees
    double azimuth = 0;    // degrees
    double radius = 2.0;
    double fov = 60.0;     // vertical, degrees
    int width = 224;
    int height = 224;

    void validate() const;
    double depth_tolerance() const { return 1e-3 * radius; }

    friend bool operator==(const Camera&, const Camera&) = default;
};

// Continuous pixel coordinates: origin top-left, x right, y down, pixel
// centers at integer coordinates (so round() yields the containing pixel).
struct Projection {
    double x = 0;
    double y = 0;
    double depth = 0;  // distance along the view axis
};

// nullopt when the point lies on or behind the eye plane.
std::optional<Projection> project_vertex(const Camera& camera, const Vec3f& point);

inline constexpr std::int32_t kBackground = -1;

struct RenderMap {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> vertex_of_pixel;    // kBackground where nothing is drawn
    std::vector<std::int32_t> triangle_of_pixel;  // kBackground where nothing is drawn
    std::vector<float> depth;                     // +inf on background
    std::vector<std::uint8_t> visible;            // per vertex

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    std::size_t visible_count() const;
};

RenderMap render(const Mesh& mesh, const Camera& camera);

std::optional<VertexId> unproject_pixel(const RenderMap& map, int x, int y);

// Nearest pixel of a vertex's projection, when inside the image.
std::optional<Pixel> projected_pixel(const Camera& camera, const Vec3f& point);

// Row-major (elevation outer) cross product of the angle lists.
std::vector<Camera> view_grid(const std::vector<double>& elevations, const std::vector<double>& azimuths,
                              const Camera& base = {});

// Elevation uniform in [-90, 90], azimuth uniform in [0, 360); radius, fov and size from base.
std::vector<Camera> sample_views(std::size_t count, std::uint64_t seed, const Camera& base = {});

const std::vector<double>& default_grid_elevations();
const std::vector<double>& default_grid_azimuths();

// Diagnostics: binary PGM of normalized depth and PPM of hashed vertex ids.
void write_depth_pgm(const RenderMap& map, const std::filesystem::path& path);
void write_vertex_id_ppm(const RenderMap& map, const std::filesystem::path& path);

} // namespace bsb
