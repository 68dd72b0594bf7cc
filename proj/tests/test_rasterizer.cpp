#include <doctest.h>

#include <random>

#include "bsb/error.hpp"
#include "bsb/rasterizer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bsb;

TEST_CASE("projection matches a 4x4 matrix pipeline") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 2000; ++trial) {
        Camera cam;
        cam.elevation = testsupport::uniform(rng, -90, 90);
        cam.azimuth = testsupport::uniform(rng, 0, 360);
        cam.radius = testsupport::uniform(rng, 1.5, 4);
        cam.fov = testsupport::uniform(rng, 20, 100);
        cam.width = testsupport::uniform_int(rng, 16, 300);
        cam.height = testsupport::uniform_int(rng, 16, 300);
        const Vec3f p{static_cast<float>(testsupport::uniform(rng, -0.5, 0.5)),
                      static_cast<float>(testsupport::uniform(rng, -0.5, 0.5)),
                      static_cast<float>(testsupport::uniform(rng, -0.5, 0.5))};
        const auto got = project_vertex(cam, p);
        const auto want = oracle::eigen_project(cam, p);
        REQUIRE(got.has_value() == want.has_value());
        if (got) {
            CHECK(got->x == doctest::Approx(want->x()).epsilon(1e-9));
            CHECK(got->y == doctest::Approx(want->y()).epsilon(1e-9));
            CHECK(got->depth == doctest::Approx(want->z()).epsilon(1e-9));
        }
    }
}

TEST_CASE("camera conventions") {
    const Camera front;
    const auto origin = project_vertex(front, {0, 0, 0});
    REQUIRE(origin);
    CHECK(origin->x == doctest::Approx(112));
    CHECK(origin->y == doctest::Approx(112));
    CHECK(origin->depth == doctest::Approx(2));
    // +Y is up on screen, +X to the right when looking from +Z.
    CHECK(project_vertex(front, {0, 0.5f, 0})->y < 112);
    CHECK(project_vertex(front, {0.5f, 0, 0})->x > 112);
    // Behind the eye.
    CHECK_FALSE(project_vertex(front, {0, 0, 3}));
    // Looking straight down uses +X as up and stays finite.
    Camera top;
    top.elevation = 90;
    const auto p = project_vertex(top, {0.2f, 0, 0.1f});
    REQUIRE(p);
    CHECK(std::isfinite(p->x));
    CHECK(p->y < 112);

    Camera bad;
    bad.fov = 180;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = {};
    bad.radius = 0;
    CHECK_THROWS_AS(render(testsupport::tetrahedron(), bad), ValidationError);
}

TEST_CASE("view grid is 5 x 12 in elevation-major order") {
    const auto grid = view_grid(default_grid_elevations(), default_grid_azimuths());
    REQUIRE(grid.size() == 60);
    CHECK(grid[0].elevation == -60);
    CHECK(grid[0].azimuth == 0);
    CHECK(grid[1].azimuth == 30);
    CHECK(grid[12].elevation == -30);
    CHECK(grid[59].elevation == 60);
    CHECK(grid[59].azimuth == 330);
}

TEST_CASE("sampled views are seeded and in range") {
    const auto a = sample_views(200, 11);
    const auto b = sample_views(200, 11);
    const auto c = sample_views(200, 12);
    CHECK(a == b);
    CHECK(a != c);
    for (const auto& v : a) {
        CHECK(v.elevation >= -90);
        CHECK(v.elevation <= 90);
        CHECK(v.azimuth >= 0);
        CHECK(v.azimuth < 360);
    }
}

TEST_CASE("a front-facing triangle covers its interior and is fully visible") {
    const Mesh tri({{-0.5f, -0.5f, 0}, {0.5f, -0.5f, 0}, {0, 0.5f, 0}}, {{0, 1, 2}});
    const auto map = render(tri, Camera{});
    CHECK(map.visible_count() == 3);
    const auto center = unproject_pixel(map, 112, 112);
    REQUIRE(center);
    CHECK(map.triangle_of_pixel[map.index(112, 112)] == 0);
    CHECK(map.depth[map.index(112, 112)] == doctest::Approx(2.0f));
    CHECK_FALSE(unproject_pixel(map, 0, 0));
    CHECK_THROWS(unproject_pixel(map, -1, 0));
    // Near the apex the apex wins the attribution.
    const auto apex = projected_pixel(Camera{}, {0, 0.5f, 0});
    REQUIRE(apex);
    CHECK(unproject_pixel(map, apex->x, apex->y + 2) == VertexId{2});
}

TEST_CASE("an occluded vertex is invisible") {
    const auto scene = testsupport::merge(testsupport::box(0, 0, 0.5f, 0.3f, 0.3f, 0.05f),
                                          Mesh({{-0.05f, -0.05f, -0.3f}, {0.05f, -0.05f, -0.3f}, {0, 0.05f, -0.3f}},
                                               {{0, 1, 2}}));
    const auto map = render(scene, Camera{});
    for (VertexId v = 8; v < 11; ++v) {
        CHECK_FALSE(map.visible[v]);
    }
    Camera back;
    back.azimuth = 180;
    const auto back_map = render(scene, back);
    for (VertexId v = 8; v < 11; ++v) {
        CHECK(back_map.visible[v]);
    }
}

TEST_CASE("visibility agrees with ray casting through the vertex's pixel") {
    for (const auto& [name, mesh] : testsupport::visibility_meshes()) {
        for (const auto& cam : view_grid({-30, 30}, {0, 60, 120, 180, 240, 300})) {
            const auto map = render(mesh, cam);
            const auto want = oracle::raycast_visible_at_pixel(mesh, cam, cam.depth_tolerance());
            std::size_t diff = 0;
            for (std::size_t v = 0; v < want.size(); ++v) {
                diff += map.visible[v] != want[v] ? 1 : 0;
            }
            INFO(name, " el=", cam.elevation, " az=", cam.azimuth);
            CHECK(diff <= 1);
        }
    }
}

TEST_CASE("visibility rarely differs from exact rays to the vertex") {
    // Pixel-center sampling misses sub-pixel occluders near silhouettes.
    std::size_t diff = 0;
    std::size_t total = 0;
    for (const auto& [name, mesh] : testsupport::visibility_meshes()) {
        for (const auto& cam : view_grid({-30, 30}, {0, 60, 120, 180, 240, 300})) {
            const auto map = render(mesh, cam);
            const auto want = oracle::raycast_visible(mesh, cam);
            for (std::size_t v = 0; v < want.size(); ++v) {
                diff += map.visible[v] != want[v] ? 1 : 0;
            }
            total += want.size();
        }
    }
    MESSAGE("vertex-view disagreements with exact rays: ", diff, " of ", total);
    CHECK(static_cast<double>(diff) / static_cast<double>(total) < 0.02);
}

TEST_CASE("debug images are written") {
    const auto dir = testsupport::scratch_dir("raster");
    const auto map = render(testsupport::icosahedron(), Camera{0, 0, 2, 60, 32, 24});
    write_depth_pgm(map, dir / "d.pgm");
    write_vertex_id_ppm(map, dir / "v.ppm");
    CHECK(std::filesystem::file_size(dir / "d.pgm") > 32 * 24);
    CHECK(std::filesystem::file_size(dir / "v.ppm") > 32 * 24 * 3);
}
