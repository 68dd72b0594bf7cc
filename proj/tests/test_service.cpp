#include <doctest.h>

#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>

#include "bsb/error.hpp"
#include "bsb/service.hpp"
#include "bsb/synthetic.hpp"
#include "bsb/tensor_io.hpp"
#include "support.hpp"

using namespace bsb;
using nlohmann::json;

namespace {

struct Fixture {
    std::filesystem::path dir;
    synth::Scene scene;
    json bundle;
};

// Planted scene with 3 shared parts and one image-only band; labels 9 mark
// vertices whose feature matches no pixel. They avoid index 0, which wins
// the all-zero similarity ties of image-only pixels.
Fixture planted(const std::string& name) {
    synth::SceneSpec spec;
    spec.missing_parts = 1;
    spec.dim = 6;
    Fixture f{testsupport::scratch_dir(name), synth::make_scene(spec), {}};
    for (VertexId v = 9; v < 12; ++v) {
        f.scene.vertex_labels.labels[v] = 9;
        std::vector<float> row(6, 0.0f);
        row[4] = 1.0f;
        f.scene.vertex_features.set(v, row);
    }
    f.bundle = synth::write_session_bundle(f.scene, f.dir);
    return f;
}

json ok(const HttpReply& r) {
    INFO(r.body);
    REQUIRE(r.status == 200);
    return json::parse(r.body);
}

std::string create(SessionService& svc, const json& bundle) { return ok(svc.create_session(bundle.dump()))["id"]; }

json click_body(int x, int y) { return {{"x", x}, {"y", y}}; }

} // namespace

TEST_CASE("RLE round-trips random masks") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        const int w = testsupport::uniform_int(rng, 1, 20);
        const int h = testsupport::uniform_int(rng, 1, 20);
        const double p = testsupport::uniform(rng, 0, 1);
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(w) * h);
        for (auto& b : bits) {
            b = testsupport::uniform(rng, 0, 1) < p;
        }
        const Mask2D mask(w, h, bits);
        const auto runs = rle_encode(mask);
        std::size_t total = 0;
        for (const auto& r : runs) {
            total += r[1].get<std::size_t>();
        }
        REQUIRE(total == mask.count());
        REQUIRE(rle_decode(w, h, runs) == mask);
    }
    CHECK(rle_encode(Mask2D(3, 3, {0, 1, 1, 0, 0, 0, 1, 1, 1})) == json::parse("[[1,2],[6,3]]"));
    CHECK(rle_decode(3, 3, json::array()).empty());
    CHECK_THROWS_AS(rle_decode(3, 3, json::parse("[[5,2],[1,1]]")), FormatError);
    CHECK_THROWS_AS(rle_decode(3, 3, json::parse("[[8,2]]")), FormatError);
    CHECK_THROWS_AS(rle_decode(3, 3, json::parse("[[1,0]]")), FormatError);
}

TEST_CASE("session creation") {
    const auto f = planted("svc_create");
    SessionService svc({4, f.dir, 1 << 20});
    const auto a = create(svc, f.bundle);
    const auto b = create(svc, f.bundle);
    CHECK(a != b);
    CHECK(svc.session_count() == 2);

    auto broken = f.bundle;
    broken["mesh"] = "nowhere/mesh.obj";
    const auto r = svc.create_session(broken.dump());
    CHECK(r.status == 400);
    CHECK(r.body.find("nowhere/mesh.obj") != std::string::npos);

    auto no_seg = f.bundle;
    no_seg.erase("seg2d");
    CHECK(svc.create_session(no_seg.dump()).status == 400);
    CHECK(svc.create_session("{not json").status == 400);
    CHECK(svc.create_session("[1]").status == 400);
    auto mismatched = f.bundle;
    mismatched["vertex_features"] = mismatched["image_features"];
    CHECK(svc.create_session(mismatched.dump()).status == 400);
    CHECK(svc.session_count() == 2);

    SessionService tiny({4, f.dir, 16});
    CHECK(tiny.create_session(f.bundle.dump()).status == 413);
}

TEST_CASE("clicks: planted part, missing part, determinism") {
    const auto f = planted("svc_click");
    SessionService svc({4, f.dir, 1 << 20});
    const auto id = create(svc, f.bundle);
    for (int label = 1; label <= 3; ++label) {
        const auto p = synth::band_center(f.scene, label);
        const auto first = svc.click(id, click_body(p.x, p.y).dump());
        const auto second = svc.click(id, click_body(p.x, p.y).dump());
        CHECK(first.body == second.body);
        const auto doc = ok(first);
        REQUIRE_FALSE(doc["vertex"].is_null());
        CHECK(doc["iou"] == 1.0);
        std::vector<VertexId> want = synth::label_mask(f.scene.vertex_labels, label).indices();
        CHECK(doc["mask3d"].get<std::vector<VertexId>>() == want);
        const auto part = synth::label_mask(f.scene.image_labels, label);
        CHECK(rle_decode(doc["width"], doc["height"], doc["mask2d_part"]) == part);
        CHECK(rle_decode(doc["width"], doc["height"], doc["mask2d_match"]) == part);
        const auto q = doc["pixel"].get<std::vector<int>>();
        CHECK(part.test({q[0], q[1]}));
        CHECK(doc["k"] == 100);
    }
    const auto missing = synth::band_center(f.scene, 4);
    const auto doc = ok(svc.click(id, click_body(missing.x, missing.y).dump()));
    CHECK(doc["vertex"].is_null());
    CHECK(doc["pixel"].is_null());
    CHECK(doc["mask3d"].empty());
    CHECK(doc["mask2d_match"].empty());
    CHECK_FALSE(doc["mask2d_part"].empty());

    json with_k = click_body(missing.x, missing.y);
    with_k["k"] = 3;
    CHECK(ok(svc.click(id, with_k.dump()))["candidates"].size() == 3);
    with_k["k"] = 0;
    CHECK(svc.click(id, with_k.dump()).status == 400);

    CHECK(svc.click(id, click_body(99, 0).dump()).status == 400);
    CHECK(svc.click(id, click_body(0, 0).dump()).status == 400);  // background border
    CHECK(svc.click(id, "{\"x\": 1}").status == 400);
    CHECK(svc.click("nope", click_body(1, 1).dump()).status == 404);
}

TEST_CASE("vertex clicks mirror pixel clicks") {
    const auto f = planted("svc_vertex");
    SessionService svc({4, f.dir, 1 << 20});
    const auto id = create(svc, f.bundle);
    const auto v = static_cast<VertexId>(f.scene.mesh.vertex_count() - 1);  // last column, label 3
    const auto body = json{{"v", v}}.dump();
    const auto first = svc.vertex_click(id, body);
    CHECK(first.body == svc.vertex_click(id, body).body);
    const auto doc = ok(first);
    REQUIRE_FALSE(doc["pixel"].is_null());
    const auto q = doc["pixel"].get<std::vector<int>>();
    CHECK(f.scene.image_labels.at({q[0], q[1]}) == 3);
    CHECK(doc["iou"] == 1.0);
    CHECK(rle_decode(doc["width"], doc["height"], doc["mask2d"]) == synth::label_mask(f.scene.image_labels, 3));
    CHECK(doc["mask3d"].get<std::vector<VertexId>>() == synth::label_mask(f.scene.vertex_labels, 3).indices());

    const auto orphan = ok(svc.vertex_click(id, json{{"v", 10}}.dump()));
    CHECK(orphan["pixel"].is_null());
    CHECK(orphan["mask2d"].empty());
    CHECK(orphan["mask3d"].get<std::vector<VertexId>>() == std::vector<VertexId>{9, 10, 11});

    CHECK(svc.vertex_click(id, json{{"v", 100000}}.dump()).status == 400);
    CHECK(svc.vertex_click(id, json{{"v", -1}}.dump()).status == 400);
    CHECK(svc.vertex_click("nope", body).status == 404);
}

TEST_CASE("mesh, image, delete and LRU eviction") {
    const auto f = planted("svc_misc");
    std::ofstream(f.dir / "display.png", std::ios::binary) << "PNGDATA";
    SessionService svc({2, f.dir, 1 << 20});
    const auto plain = create(svc, f.bundle);
    auto with_image = f.bundle;
    with_image["display_image"] = "display.png";
    const auto pictured = create(svc, with_image);

    const auto mesh = ok(svc.mesh(plain));
    CHECK(mesh["vertices"].size() == f.scene.mesh.vertex_count());
    CHECK(mesh["faces"].size() == f.scene.mesh.face_count());
    CHECK(svc.image(plain).status == 404);
    const auto img = svc.image(pictured);
    CHECK(img.status == 200);
    CHECK(img.body == "PNGDATA");
    CHECK(img.content_type == "image/png");
    auto bad_image = f.bundle;
    bad_image["display_image"] = "absent.png";
    CHECK(svc.create_session(bad_image.dump()).status == 400);

    // Touch `plain` so `pictured` is least recent, then overflow the cap of 2.
    ok(svc.mesh(plain));
    const auto third = create(svc, f.bundle);
    CHECK(svc.session_count() == 2);
    CHECK(svc.mesh(pictured).status == 404);
    CHECK(svc.mesh(plain).status == 200);
    CHECK(svc.mesh(third).status == 200);

    CHECK(ok(svc.remove(plain))["deleted"] == plain);
    CHECK(svc.remove(plain).status == 404);
    CHECK(svc.mesh(plain).status == 404);
    CHECK(svc.session_count() == 1);
}

TEST_CASE("icosahedron session reports 12 vertices and 20 faces") {
    const auto f = planted("svc_ico");
    const auto ico = testsupport::icosahedron();
    {
        std::ofstream out(f.dir / "ico.obj");
        write_obj(ico, out);
    }
    VertexFeatureField field(12, 6);
    for (VertexId v = 0; v < 12; ++v) {
        std::vector<float> row(6, 0.0f);
        row[v % 3] = 1.0f;
        field.set(v, row);
    }
    write_tensor_file(to_tensor(field), f.dir / "ico_features.bsbt");
    write_tensor_file(TensorContainer::from_u8({12}, std::vector<std::uint8_t>(12, 1)), f.dir / "ico_labels.bsbt");
    auto bundle = f.bundle;
    bundle["mesh"] = "ico.obj";
    bundle["vertex_features"] = "ico_features.bsbt";
    bundle["seg3d"] = "synthetic:ico_labels.bsbt";
    SessionService svc({2, f.dir, 1 << 20});
    const auto mesh = ok(svc.mesh(create(svc, bundle)));
    CHECK(mesh["vertices"].size() == 12);
    CHECK(mesh["faces"].size() == 20);
    for (const auto& p : mesh["vertices"]) {
        for (const auto& c : p) {
            CHECK(std::abs(c.get<double>()) <= 0.5);
        }
    }
}

TEST_CASE("HTTP round trip on an ephemeral port") {
    const auto f = planted("svc_http");
    SessionService svc({4, f.dir, 1 << 20});
    HttpServer server(svc, {"127.0.0.1", 0, std::nullopt});
    const int port = server.bind();
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen(); });

    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(5);
    auto created = client.Post("/sessions", f.bundle.dump(), "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 200);
    CHECK(created->get_header_value("Access-Control-Allow-Origin") == "*");
    const std::string id = json::parse(created->body)["id"];

    const auto p = synth::band_center(f.scene, 2);
    const auto body = click_body(p.x, p.y).dump();
    auto a = client.Post("/sessions/" + id + "/click", body, "application/json");
    auto b = client.Post("/sessions/" + id + "/click", body, "application/json");
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->status == 200);
    CHECK(a->body == b->body);
    CHECK(a->body == svc.click(id, body).body);
    CHECK(json::parse(a->body)["mask3d"].get<std::vector<VertexId>>() ==
          synth::label_mask(f.scene.vertex_labels, 2).indices());

    auto reverse = client.Post("/sessions/" + id + "/vertex-click", json{{"v", 10}}.dump(), "application/json");
    REQUIRE(reverse);
    CHECK(reverse->status == 200);
    auto mesh = client.Get("/sessions/" + id + "/mesh");
    REQUIRE(mesh);
    CHECK(json::parse(mesh->body)["faces"].size() == f.scene.mesh.face_count());
    auto image = client.Get("/sessions/" + id + "/image");
    REQUIRE(image);
    CHECK(image->status == 404);
    auto unknown = client.Post("/sessions/zzz/click", body, "application/json");
    REQUIRE(unknown);
    CHECK(unknown->status == 404);
    CHECK(json::parse(unknown->body).contains("error"));
    auto options = client.Options("/sessions");
    REQUIRE(options);
    CHECK(options->status == 204);
    auto deleted = client.Delete("/sessions/" + id);
    REQUIRE(deleted);
    CHECK(deleted->status == 200);

    server.stop();
    worker.join();
}
