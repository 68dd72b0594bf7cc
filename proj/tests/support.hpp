#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bsb/mesh.hpp"

namespace testsupport {

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::path(BSB_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(BSB_TEST_DATA) / name; }

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline bsb::Mesh single_triangle() { return bsb::Mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}}); }

inline bsb::Mesh tetrahedron() {
    return bsb::Mesh({{0.3f, 0.3f, 0.3f}, {-0.3f, -0.3f, 0.3f}, {-0.3f, 0.3f, -0.3f}, {0.3f, -0.3f, -0.3f}},
                     {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
}

inline bsb::Mesh box(float cx, float cy, float cz, float hx, float hy, float hz) {
    std::vector<bsb::Vec3f> v;
    for (int i = 0; i < 8; ++i) {
        v.push_back({cx + ((i & 1) ? hx : -hx), cy + ((i & 2) ? hy : -hy), cz + ((i & 4) ? hz : -hz)});
    }
    const std::vector<bsb::Face> f{{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                                   {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
    return bsb::Mesh(std::move(v), f);
}

inline bsb::Mesh merge(const bsb::Mesh& a, const bsb::Mesh& b) {
    auto v = a.vertices();
    auto f = a.faces();
    const auto offset = static_cast<bsb::VertexId>(v.size());
    v.insert(v.end(), b.vertices().begin(), b.vertices().end());
    for (auto face : b.faces()) {
        f.push_back({face[0] + offset, face[1] + offset, face[2] + offset});
    }
    return bsb::Mesh(std::move(v), std::move(f));
}

inline bsb::Mesh icosahedron(float scale = 0.5f) {
    const float t = static_cast<float>((1.0 + std::sqrt(5.0)) / 2.0);
    std::vector<bsb::Vec3f> v{{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                              {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    const float len = std::sqrt(1 + t * t);
    for (auto& p : v) {
        for (auto& c : p) {
            c = c / len * scale;
        }
    }
    const std::vector<bsb::Face> f{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                   {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                   {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                   {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    return bsb::Mesh(std::move(v), f);
}

// Latitude-longitude sphere with poles; optional radial jitter.
inline bsb::Mesh uv_sphere(int rings, int segments, float radius, std::mt19937_64* jitter = nullptr) {
    std::vector<bsb::Vec3f> v{{0, radius, 0}};
    for (int r = 1; r < rings; ++r) {
        const double phi = std::numbers::pi * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double theta = 2 * std::numbers::pi * s / segments;
            const double rr = radius * (jitter ? uniform(*jitter, 0.85, 1.15) : 1.0);
            v.push_back({static_cast<float>(rr * std::sin(phi) * std::cos(theta)), static_cast<float>(rr * std::cos(phi)),
                         static_cast<float>(rr * std::sin(phi) * std::sin(theta))});
        }
    }
    v.push_back({0, -radius, 0});
    const auto south = static_cast<bsb::VertexId>(v.size() - 1);
    std::vector<bsb::Face> f;
    const auto at = [&](int r, int s) { return static_cast<bsb::VertexId>(1 + (r - 1) * segments + s % segments); };
    for (int s = 0; s < segments; ++s) {
        f.push_back({0, at(1, s + 1), at(1, s)});
        for (int r = 1; r + 1 < rings; ++r) {
            f.push_back({at(r, s), at(r, s + 1), at(r + 1, s)});
            f.push_back({at(r, s + 1), at(r + 1, s + 1), at(r + 1, s)});
        }
        f.push_back({south, at(rings - 1, s), at(rings - 1, s + 1)});
    }
    return bsb::Mesh(std::move(v), std::move(f));
}

inline bsb::Mesh torus(int rings, int segments, float major, float minor) {
    std::vector<bsb::Vec3f> v;
    for (int r = 0; r < rings; ++r) {
        const double u = 2 * std::numbers::pi * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double w = 2 * std::numbers::pi * s / segments;
            const double rad = major + minor * std::cos(w);
            v.push_back({static_cast<float>(rad * std::cos(u)), static_cast<float>(minor * std::sin(w)),
                         static_cast<float>(rad * std::sin(u))});
        }
    }
    std::vector<bsb::Face> f;
    const auto at = [&](int r, int s) { return static_cast<bsb::VertexId>((r % rings) * segments + s % segments); };
    for (int r = 0; r < rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            f.push_back({at(r, s), at(r + 1, s), at(r, s + 1)});
            f.push_back({at(r + 1, s), at(r + 1, s + 1), at(r, s + 1)});
        }
    }
    return bsb::Mesh(std::move(v), std::move(f));
}

// Open cylinder around the Y axis.
inline bsb::Mesh cylinder(int segments, int stacks, float radius, float height) {
    std::vector<bsb::Vec3f> v;
    for (int k = 0; k <= stacks; ++k) {
        for (int s = 0; s < segments; ++s) {
            const double theta = 2 * std::numbers::pi * s / segments;
            v.push_back({static_cast<float>(radius * std::cos(theta)), -height / 2 + height * k / stacks,
                         static_cast<float>(radius * std::sin(theta))});
        }
    }
    std::vector<bsb::Face> f;
    const auto at = [&](int k, int s) { return static_cast<bsb::VertexId>(k * segments + s % segments); };
    for (int k = 0; k < stacks; ++k) {
        for (int s = 0; s < segments; ++s) {
            f.push_back({at(k, s), at(k + 1, s), at(k, s + 1)});
            f.push_back({at(k, s + 1), at(k + 1, s), at(k + 1, s + 1)});
        }
    }
    return bsb::Mesh(std::move(v), std::move(f));
}

// Wavy height field over [-0.5, 0.5]^2.
inline bsb::Mesh terrain(int grid) {
    std::vector<bsb::Vec3f> v;
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            const float x = -0.5f + static_cast<float>(c) / (grid - 1);
            const float z = -0.5f + static_cast<float>(r) / (grid - 1);
            v.push_back({x, 0.15f * std::sin(9 * x) * std::cos(7 * z), z});
        }
    }
    std::vector<bsb::Face> f;
    for (int r = 0; r + 1 < grid; ++r) {
        for (int c = 0; c + 1 < grid; ++c) {
            const auto a = static_cast<bsb::VertexId>(r * grid + c);
            const auto g = static_cast<bsb::VertexId>(grid);
            f.push_back({a, a + g, a + 1});
            f.push_back({a + 1, a + g, a + g + 1});
        }
    }
    return bsb::Mesh(std::move(v), std::move(f));
}

// Ten small meshes covering convex, non-convex, open and multi-part cases.
inline std::vector<std::pair<std::string, bsb::Mesh>> visibility_meshes() {
    std::mt19937_64 rng(20240601);
    return {
        {"tetrahedron", tetrahedron()},
        {"cube", box(0, 0, 0, 0.35f, 0.35f, 0.35f)},
        {"icosahedron", icosahedron()},
        {"uv_sphere", uv_sphere(8, 12, 0.5f)},
        {"bumpy_sphere", uv_sphere(10, 14, 0.45f, &rng)},
        {"torus", torus(16, 8, 0.35f, 0.12f)},
        {"cylinder", cylinder(14, 3, 0.3f, 0.8f)},
        {"terrain", terrain(9)},
        {"stacked_boxes", merge(box(0, 0, 0.25f, 0.2f, 0.2f, 0.2f), box(0.05f, 0.05f, -0.25f, 0.3f, 0.3f, 0.15f))},
        {"sphere_behind_box", merge(box(0, 0, 0.45f, 0.15f, 0.15f, 0.05f), uv_sphere(6, 10, 0.3f))},
    };
}

} // namespace testsupport
